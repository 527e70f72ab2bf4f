//! HARS / HARSL: HAR regressions whose daily-lag coefficient carries a latent
//! AR(1) perturbation, estimated by Gaussian maximum likelihood.
//!
//! In regression-plus-state form
//!
//! ```text
//! y_t = f_t λ_t + x_tᵀ β + ε_t,   ε_t ~ N(0, σ_ε²)
//! λ_t = φ λ_{t−1} + η_t,          η_t ~ N(0, σ_η²)
//! ```
//!
//! with `y_t = (log) RV_t`, `x_t = (1, lag1, lag5-mean, lag20-mean)` and
//! `f_t = (log) RV_{t−1}`. The state starts from its stationary law
//! `N(0, σ_η²/(1−φ²))`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kv::KvBlock;
use crate::linalg;
use crate::measures::BURN_IN;
use crate::optim::{nelder_mead, NmOptions};
use crate::unihar::{self, finish_forecast, next_row, HarSpec, VarianceForecast};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq)]
pub struct SsParams {
    /// Regression coefficients on `x_t`.
    pub beta: Vec<f64>,
    /// State autoregression, |φ| < 1.
    pub phi: f64,
    pub sigma_eps: f64,
    pub sigma_eta: f64,
}

/// Output of one pass of the scalar Kalman filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    pub loglik: f64,
    /// λ_{t|t}
    pub filtered_mean: Vec<f64>,
    /// P_{t|t}
    pub filtered_var: Vec<f64>,
}

fn validate(params: &SsParams, n: usize, x: &DMatrix<f64>, f: &[f64]) -> Result<()> {
    if !(params.sigma_eps > 0.0) || !params.sigma_eps.is_finite() {
        return Err(Error::Parameter(format!(
            "sigma_eps must be positive, got {}",
            params.sigma_eps
        )));
    }
    if !(params.sigma_eta >= 0.0) || !params.sigma_eta.is_finite() {
        return Err(Error::Parameter(format!(
            "sigma_eta must be nonnegative, got {}",
            params.sigma_eta
        )));
    }
    if !(params.phi.abs() < 1.0) {
        return Err(Error::Parameter(format!(
            "|phi| must be below 1, got {}",
            params.phi
        )));
    }
    if n == 0 {
        return Err(Error::InsufficientHistory { needed: 0, got: 0 });
    }
    if x.nrows() != n || f.len() != n {
        return Err(Error::Dimension(format!(
            "y has {n} rows, x has {}, f has {}",
            x.nrows(),
            f.len()
        )));
    }
    if x.ncols() != params.beta.len() {
        return Err(Error::Dimension(format!(
            "{} regressors but {} coefficients",
            x.ncols(),
            params.beta.len()
        )));
    }
    Ok(())
}

/// Runs the filter and returns the prediction-error-decomposition
/// log-likelihood with the filtered state path.
pub fn kalman_filter(
    params: &SsParams,
    y: &[f64],
    x: &DMatrix<f64>,
    f: &[f64],
) -> Result<FilterOutput> {
    validate(params, y.len(), x, f)?;
    let mut out = FilterOutput {
        loglik: 0.0,
        filtered_mean: Vec::with_capacity(y.len()),
        filtered_var: Vec::with_capacity(y.len()),
    };
    let xb = x * nalgebra::DVector::from_column_slice(&params.beta);
    let s2e = params.sigma_eps * params.sigma_eps;
    let s2n = params.sigma_eta * params.sigma_eta;
    let phi = params.phi;
    let mut a = 0.0;
    let mut p = s2n / (1.0 - phi * phi);
    for t in 0..y.len() {
        let ft = f[t];
        let v = y[t] - xb[t] - ft * a;
        let fvar = ft * ft * p + s2e;
        out.loglik -= 0.5 * (LN_2PI + fvar.ln() + v * v / fvar);
        let gain = p * ft / fvar;
        let a_filt = a + gain * v;
        let p_filt = p * s2e / fvar;
        out.filtered_mean.push(a_filt);
        out.filtered_var.push(p_filt);
        a = phi * a_filt;
        p = phi * phi * p_filt + s2n;
    }
    Ok(out)
}

/// Gaussian log-likelihood of `y` under the state-space model.
pub fn kalman_loglik(params: &SsParams, y: &[f64], x: &DMatrix<f64>, f: &[f64]) -> Result<f64> {
    kalman_filter(params, y, x, f).map(|o| o.loglik)
}

/// Likelihood on pre-built rows, without allocation; used inside the optimiser.
fn loglik_fast(
    beta: &[f64; 4],
    phi: f64,
    s2e: f64,
    s2n: f64,
    y: &[f64],
    x: &[[f64; 4]],
    f: &[f64],
) -> f64 {
    let mut ll = 0.0;
    let mut a = 0.0;
    let mut p = s2n / (1.0 - phi * phi);
    for t in 0..y.len() {
        let xt = &x[t];
        let mean = xt[0] * beta[0] + xt[1] * beta[1] + xt[2] * beta[2] + xt[3] * beta[3];
        let ft = f[t];
        let v = y[t] - mean - ft * a;
        let fvar = ft * ft * p + s2e;
        ll -= 0.5 * (LN_2PI + fvar.ln() + v * v / fvar);
        let a_filt = a + p * ft / fvar * v;
        let p_filt = p * s2e / fvar;
        a = phi * a_filt;
        p = phi * phi * p_filt + s2n;
    }
    ll
}

/// Estimated HARS / HARSL model with the filtered state at the sample end.
#[derive(Debug, Clone, PartialEq)]
pub struct SsFit {
    pub params: SsParams,
    pub loglik: f64,
    pub filtered_state: Vec<f64>,
    pub filtered_var: Vec<f64>,
    pub log_target: bool,
    pub converged: bool,
    pub n_iter: usize,
    pub n_obs: usize,
    /// Log-likelihood at the optimiser's starting point.
    pub initial_loglik: f64,
    /// Gaussian log-likelihood of the nested OLS regression (σ_η = 0).
    pub ols_loglik: f64,
}

impl SsFit {
    pub fn name(&self) -> &'static str {
        if self.log_target {
            "HARSL"
        } else {
            "HARS"
        }
    }
}

/// Options for [`fit_ss`].
#[derive(Debug, Clone, Copy)]
pub struct SsFitOptions {
    pub nm: NmOptions,
    /// Retry from (φ = 0, σ_η = σ_ε/2) when the first run hits the iteration cap.
    pub restart: bool,
}

impl Default for SsFitOptions {
    fn default() -> Self {
        Self {
            nm: NmOptions::default(),
            restart: true,
        }
    }
}

/// Observation arrays (y, x rows, f) for rows `t = 20 … T−1`.
pub fn build_observations(
    rv: &[f64],
    log_target: bool,
) -> Result<(Vec<f64>, Vec<[f64; 4]>, Vec<f64>)> {
    let spec = if log_target {
        HarSpec::HARL
    } else {
        HarSpec::HAR
    };
    let (x, y) = unihar::build_design(rv, None, spec)?;
    let rows: Vec<[f64; 4]> = (0..x.nrows())
        .map(|i| [x[(i, 0)], x[(i, 1)], x[(i, 2)], x[(i, 3)]])
        .collect();
    let f: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    Ok((y.iter().copied().collect(), rows, f))
}

fn rows_to_matrix(rows: &[[f64; 4]]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), 4, |i, j| rows[i][j])
}

/// Maximum-likelihood fit by Nelder–Mead over
/// `(β, atanh φ, log σ_ε, log σ_η)`, started from the OLS HAR fit.
pub fn fit_ss(rv: &[f64], log_target: bool) -> Result<SsFit> {
    fit_ss_with(rv, log_target, SsFitOptions::default())
}

pub fn fit_ss_with(rv: &[f64], log_target: bool, opts: SsFitOptions) -> Result<SsFit> {
    let spec = if log_target {
        HarSpec::HARL
    } else {
        HarSpec::HAR
    };
    let ols = unihar::fit_har(rv, None, spec).map_err(|e| match e {
        Error::Collinearity { .. } => {
            Error::Initialization(format!("OLS starting values unavailable: {e}"))
        }
        other => other,
    })?;
    let (y, x, f) = build_observations(rv, log_target)?;
    let n = y.len();

    let objective = |theta: &[f64]| -> f64 {
        let beta = [theta[0], theta[1], theta[2], theta[3]];
        let phi = theta[4].tanh();
        if !(phi.abs() < 1.0) {
            return f64::INFINITY;
        }
        let s2e = (2.0 * theta[5]).exp();
        let s2n = (2.0 * theta[6]).exp();
        -loglik_fast(&beta, phi, s2e, s2n, &y, &x, &f)
    };

    let start = |phi: f64, eta_ratio: f64| -> Vec<f64> {
        let mut th = ols.beta.to_vec();
        th.push(phi.atanh());
        th.push(ols.sigma_eps.ln());
        th.push((eta_ratio * ols.sigma_eps).ln());
        th
    };
    let steps: Vec<f64> = ols
        .beta
        .iter()
        .zip(&ols.std_errors)
        .map(|(b, se)| (0.1 * b.abs()).max(2.0 * se).max(1e-4))
        .chain([0.3, 0.2, 0.5])
        .collect();

    let theta0 = start(0.9, 0.1);
    let f0 = objective(&theta0);
    if !f0.is_finite() {
        return Err(Error::Initialization(format!(
            "negative log-likelihood {f0} at the starting point"
        )));
    }

    let mut best = nelder_mead(objective, &theta0, &steps, opts.nm);
    let mut n_iter = best.n_iter;
    let mut converged = best.converged;
    if !best.converged && opts.restart {
        let second = nelder_mead(objective, &start(0.0, 0.5), &steps, opts.nm);
        n_iter += second.n_iter;
        converged = second.converged;
        if second.f < best.f {
            best = second;
        }
    }

    // σ_η = 0 nests the regression; keep it when the search ended below it.
    let ols_loglik = linalg::gaussian_regression_loglik(ols.sigma_eps.powi(2) * (n - 4) as f64, n);
    let mut params = SsParams {
        beta: best.x[..4].to_vec(),
        phi: best.x[4].tanh(),
        sigma_eps: best.x[5].exp(),
        sigma_eta: best.x[6].exp(),
    };
    if -best.f < ols_loglik {
        let rss = ols.sigma_eps.powi(2) * (n - 4) as f64;
        params = SsParams {
            beta: ols.beta.to_vec(),
            phi: params.phi,
            sigma_eps: (rss / n as f64).sqrt(),
            sigma_eta: 0.0,
        };
    }

    let xm = rows_to_matrix(&x);
    let filt = kalman_filter(&params, &y, &xm, &f)?;
    Ok(SsFit {
        params,
        loglik: filt.loglik,
        filtered_state: filt.filtered_mean,
        filtered_var: filt.filtered_var,
        log_target,
        converged,
        n_iter,
        n_obs: n,
        initial_loglik: -f0,
        ols_loglik,
    })
}

impl SsFit {
    /// Re-runs the filter with frozen parameters over a new history, so the
    /// end-of-sample state matches that history.
    pub fn refilter(&self, rv: &[f64]) -> Result<SsFit> {
        let (y, x, f) = build_observations(rv, self.log_target)?;
        let filt = kalman_filter(&self.params, &y, &rows_to_matrix(&x), &f)?;
        Ok(SsFit {
            loglik: filt.loglik,
            filtered_state: filt.filtered_mean,
            filtered_var: filt.filtered_var,
            n_obs: y.len(),
            ..self.clone()
        })
    }

    pub fn to_kv(&self) -> KvBlock {
        let mut b = KvBlock::new();
        b.set("model", self.name());
        for (i, v) in self.params.beta.iter().enumerate() {
            b.set(&format!("beta{i}"), v);
        }
        b.set("phi", self.params.phi);
        b.set("sigma_eps", self.params.sigma_eps);
        b.set("sigma_eta", self.params.sigma_eta);
        b.set("loglik", self.loglik);
        b.set("converged", self.converged);
        b.set("n_iter", self.n_iter);
        b.set("n_obs", self.n_obs);
        b.set(
            "state_last",
            self.filtered_state.last().copied().unwrap_or(0.0),
        );
        b.set(
            "state_var_last",
            self.filtered_var.last().copied().unwrap_or(0.0),
        );
        b
    }
}

/// Next-day forecast. The predictive mean adds the propagated state to the
/// regression part; log models use the full predictive variance
/// `f²(φ²P + σ_η²) + σ_ε²` in the log-normal correction.
pub fn forecast_ss(fit: &SsFit, recent: &[f64], floor: f64) -> Result<VarianceForecast> {
    if recent.len() < BURN_IN {
        return Err(Error::InsufficientHistory {
            needed: BURN_IN,
            got: recent.len(),
        });
    }
    let recent = &recent[recent.len() - BURN_IN..];
    let g: Vec<f64> = if fit.log_target {
        recent
            .iter()
            .map(|v| {
                if *v > 0.0 {
                    Ok(v.ln())
                } else {
                    Err(Error::Domain(format!("log of nonpositive variance {v}")))
                }
            })
            .collect::<Result<_>>()?
    } else {
        recent.to_vec()
    };
    let row = next_row(&g);
    let p = &fit.params;
    let lam = fit.filtered_state.last().copied().unwrap_or(0.0);
    let pvar = fit
        .filtered_var
        .last()
        .copied()
        .unwrap_or(p.sigma_eta.powi(2) / (1.0 - p.phi * p.phi));
    let f_next = row[1];
    let mu = row.iter().zip(&p.beta).map(|(a, b)| a * b).sum::<f64>() + f_next * p.phi * lam;
    let v = f_next * f_next * (p.phi * p.phi * pvar + p.sigma_eta * p.sigma_eta)
        + p.sigma_eps * p.sigma_eps;
    Ok(finish_forecast(mu, v, fit.log_target, floor))
}
