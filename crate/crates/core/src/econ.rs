//! Economic evaluation through global minimum-variance portfolios.
//!
//! Returns enter and leave in percent; utility and turnover drift use
//! decimal returns. Transaction costs `c` are fractions of turnover
//! (0.01 = 1%).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Trading days per year.
pub const ANNUALIZATION: f64 = 252.0;
/// Ridge applied to singular forecasts, relative to tr(H)/N.
const RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GmvWeights {
    pub weights: DVector<f64>,
    /// The forecast was singular and `H + 1e-8·tr(H)/N·I` was used.
    pub regularized: bool,
    /// Long-only only: the active-set cap was hit and projected gradient finished the job.
    pub fallback: bool,
}

fn check_square(h: &DMatrix<f64>) -> Result<usize> {
    if !h.is_square() || h.nrows() == 0 {
        return Err(Error::Dimension(format!(
            "covariance forecast is {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite covariance forecast".into()));
    }
    Ok(h.nrows())
}

/// Cholesky factor of `h`, or of the ridge-regularised matrix when `h` is singular.
fn factor(h: &DMatrix<f64>) -> Result<(nalgebra::Cholesky<f64, nalgebra::Dyn>, bool)> {
    let n = h.nrows();
    let sym = linalg::symmetrize(h);
    let (lo, hi) = linalg::eig_range(&sym);
    if lo > 1e-12 * hi.abs() {
        if let Some(c) = sym.clone().cholesky() {
            return Ok((c, false));
        }
    }
    let scale = (sym.trace() / n as f64).abs().max(f64::MIN_POSITIVE);
    let ridged = &sym + DMatrix::identity(n, n) * (RIDGE * scale - lo.min(0.0));
    ridged
        .cholesky()
        .map(|c| (c, true))
        .ok_or_else(|| Error::SingularForecast { min_eig: lo })
}

/// `w = H⁻¹ι / ιᵀH⁻¹ι`.
pub fn gmv_weights(h: &DMatrix<f64>) -> Result<GmvWeights> {
    let n = check_square(h)?;
    let (chol, regularized) = factor(h)?;
    let z = chol.solve(&DVector::from_element(n, 1.0));
    let weights = &z / z.sum();
    Ok(GmvWeights {
        weights,
        regularized,
        fallback: false,
    })
}

/// Equality-constrained minimiser restricted to `free` coordinates.
fn gmv_on_support(h: &DMatrix<f64>, free: &[usize]) -> Option<DVector<f64>> {
    let m = free.len();
    let sub = DMatrix::from_fn(m, m, |i, j| h[(free[i], free[j])]);
    let z = linalg::spd_solve(&sub, &DVector::from_element(m, 1.0))?;
    let mut w = DVector::zeros(h.nrows());
    let s = z.sum();
    for (i, &f) in free.iter().enumerate() {
        w[f] = z[i] / s;
    }
    Some(w)
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &DVector<f64>) -> DVector<f64> {
    let mut u: Vec<f64> = v.iter().copied().collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.map(|x| (x - theta).max(0.0))
}

fn projected_gradient(h: &DMatrix<f64>, start: &DVector<f64>) -> DVector<f64> {
    let (_, hi) = linalg::eig_range(h);
    let step = 0.5 / hi.max(f64::MIN_POSITIVE);
    let mut w = project_simplex(start);
    for _ in 0..20_000 {
        let next = project_simplex(&(&w - (h * &w) * (2.0 * step)));
        let moved = (&next - &w).amax();
        w = next;
        if moved < 1e-15 {
            break;
        }
    }
    w
}

/// Long-only GMV: `min wᵀHw` subject to `ιᵀw = 1, w ≥ 0`, by an active-set
/// iteration with a KKT check on the clamped coordinates.
pub fn gmv_weights_longonly(h: &DMatrix<f64>) -> Result<GmvWeights> {
    let n = check_square(h)?;
    let (chol, regularized) = factor(h)?;
    let hm = chol.l() * chol.l().transpose();

    let mut free: Vec<usize> = (0..n).collect();
    for _ in 0..(10 * n).max(10) {
        let w = gmv_on_support(&hm, &free).ok_or(Error::SingularForecast { min_eig: 0.0 })?;
        let negative: Vec<usize> = free.iter().copied().filter(|&i| w[i] < 0.0).collect();
        if !negative.is_empty() {
            free.retain(|i| !negative.contains(i));
            continue;
        }
        // multipliers μ_j = 2(Hw)_j − ν on clamped coordinates, ν = 2(Hw)_i for free i
        let grad = &hm * &w * 2.0;
        let nu = free.iter().map(|&i| grad[i]).sum::<f64>() / free.len() as f64;
        let tol = 1e-12 * grad.amax().max(f64::MIN_POSITIVE);
        let release = (0..n)
            .filter(|i| !free.contains(i))
            .map(|j| (j, grad[j] - nu))
            .filter(|(_, mu)| *mu < -tol)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match release {
            Some((j, _)) => {
                free.push(j);
                free.sort_unstable();
            }
            None => {
                return Ok(GmvWeights {
                    weights: w,
                    regularized,
                    fallback: false,
                })
            }
        }
    }
    let start = DVector::from_element(n, 1.0 / n as f64);
    Ok(GmvWeights {
        weights: projected_gradient(&hm, &start),
        regularized,
        fallback: true,
    })
}

/// `Σ_j |w_next_j − w_curr_j (1 + r_j)/(1 + w_currᵀ r)|` with decimal returns.
pub fn turnover(w_next: &DVector<f64>, w_curr: &DVector<f64>, r_curr: &[f64]) -> Result<f64> {
    if w_next.len() != w_curr.len() || r_curr.len() != w_curr.len() {
        return Err(Error::Dimension("turnover inputs differ in length".into()));
    }
    let port: f64 = w_curr.iter().zip(r_curr).map(|(w, r)| w * r).sum();
    let denom = 1.0 + port;
    if denom == 0.0 {
        return Err(Error::DegenerateDrift);
    }
    Ok(w_next
        .iter()
        .zip(w_curr.iter().zip(r_curr))
        .map(|(wn, (wc, r))| (wn - wc * (1.0 + r) / denom).abs())
        .sum())
}

/// Daily portfolio path for one forecast series.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioTrack {
    pub weights: Vec<DVector<f64>>,
    /// `wᵀr`, percent.
    pub gross_returns: Vec<f64>,
    /// `wᵀr − c·TO`, percent.
    pub net_returns: Vec<f64>,
    /// TO_t; the last entry liquidates into zero weights and is left out of averages.
    pub turnover: Vec<f64>,
    pub concentration: Vec<f64>,
    pub short_pos: Vec<f64>,
    pub cost_rate: f64,
    pub long_only: bool,
    pub n_regularized: usize,
    pub n_fallback: usize,
    /// Days without a forecast on which the previous weights were kept.
    pub n_held: usize,
}

impl PortfolioTrack {
    /// Net returns at a different cost rate (weights and gross returns are cost-free).
    pub fn net_at(&self, cost_rate: f64) -> Vec<f64> {
        self.gross_returns
            .iter()
            .zip(&self.turnover)
            .map(|(g, to)| g - 100.0 * cost_rate * to)
            .collect()
    }

    /// Mean turnover excluding the final liquidation day.
    pub fn mean_turnover(&self) -> f64 {
        let n = self.turnover.len().saturating_sub(1);
        if n == 0 {
            return 0.0;
        }
        self.turnover[..n].iter().sum::<f64>() / n as f64
    }
}

/// Builds the GMV portfolio path. `forecasts[t]` must only use information
/// through day t−1; `returns[t]` are the realised asset returns of day t in
/// percent. Days without a forecast keep the previous weights (equal weights
/// on the first day).
pub fn track_portfolio(
    forecasts: &[Option<DMatrix<f64>>],
    returns: &[Vec<f64>],
    long_only: bool,
    cost_rate: f64,
) -> Result<PortfolioTrack> {
    if forecasts.len() != returns.len() {
        return Err(Error::Dimension(format!(
            "{} forecasts but {} return rows",
            forecasts.len(),
            returns.len()
        )));
    }
    let t_len = forecasts.len();
    if t_len == 0 {
        return Err(Error::InsufficientHistory { needed: 0, got: 0 });
    }
    let n = returns[0].len();
    let mut weights = Vec::with_capacity(t_len);
    let mut n_regularized = 0;
    let mut n_fallback = 0;
    let mut n_held = 0;
    for f in forecasts {
        let w = match f {
            Some(h) => {
                if h.nrows() != n {
                    return Err(Error::Dimension(format!(
                        "{}x{} forecast for {n} assets",
                        h.nrows(),
                        h.ncols()
                    )));
                }
                let g = if long_only {
                    gmv_weights_longonly(h)?
                } else {
                    gmv_weights(h)?
                };
                n_regularized += g.regularized as usize;
                n_fallback += g.fallback as usize;
                g.weights
            }
            None => {
                n_held += 1;
                weights
                    .last()
                    .cloned()
                    .unwrap_or_else(|| DVector::from_element(n, 1.0 / n as f64))
            }
        };
        weights.push(w);
    }

    let mut gross = Vec::with_capacity(t_len);
    let mut to = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let r = &returns[t];
        if r.len() != n {
            return Err(Error::Dimension(format!(
                "return row {t} has {} assets, expected {n}",
                r.len()
            )));
        }
        gross.push(weights[t].iter().zip(r).map(|(w, x)| w * x).sum::<f64>());
        let dec: Vec<f64> = r.iter().map(|x| x / 100.0).collect();
        let next = if t + 1 < t_len {
            weights[t + 1].clone()
        } else {
            DVector::zeros(n)
        };
        to.push(turnover(&next, &weights[t], &dec)?);
    }
    let concentration = weights.iter().map(|w| w.norm()).collect();
    let short_pos = weights
        .iter()
        .map(|w| w.iter().filter(|v| **v < 0.0).sum::<f64>())
        .collect();
    let mut track = PortfolioTrack {
        weights,
        gross_returns: gross,
        net_returns: Vec::new(),
        turnover: to,
        concentration,
        short_pos,
        cost_rate,
        long_only,
        n_regularized,
        n_fallback,
        n_held,
    };
    track.net_returns = track.net_at(cost_rate);
    Ok(track)
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Annualised Sharpe ratio `(252·mean)/(√252·std)` of daily percent returns.
pub fn sharpe(net_returns: &[f64]) -> Result<f64> {
    if net_returns.len() < 2 {
        return Err(Error::InsufficientHistory {
            needed: 1,
            got: net_returns.len(),
        });
    }
    let dec: Vec<f64> = net_returns.iter().map(|r| r / 100.0).collect();
    let (mean, sd) = mean_std(&dec);
    if !(sd > 1e-14 * mean.abs().max(1.0)) {
        return Err(Error::UndefinedSharpe);
    }
    Ok(mean * ANNUALIZATION / (sd * ANNUALIZATION.sqrt()))
}

/// Quadratic utility `(1 + r) − γ/(2(1+γ))·(1 + r)²` of a decimal return.
pub fn utility(r: f64, gamma: f64) -> f64 {
    let a = gamma / (2.0 * (1.0 + gamma));
    (1.0 + r) - a * (1.0 + r) * (1.0 + r)
}

/// Solves `Σ U(r_k) = Σ U(r_l − Δ)` for the daily decimal fee Δ; positive Δ
/// means model l (`returns_other`) is preferred to model k (`returns_base`).
/// The smaller-magnitude root of the quadratic is returned.
pub fn delta_gamma(returns_base: &[f64], returns_other: &[f64], gamma: f64) -> Result<f64> {
    if returns_base.len() != returns_other.len() {
        return Err(Error::Dimension(
            "utility comparison needs equal-length return series".into(),
        ));
    }
    if returns_base.is_empty() {
        return Err(Error::InsufficientHistory { needed: 0, got: 0 });
    }
    if !(gamma >= 0.0) {
        return Err(Error::Argument(format!(
            "risk aversion must be nonnegative, got {gamma}"
        )));
    }
    if returns_base == returns_other {
        return Ok(0.0);
    }
    let t = returns_base.len() as f64;
    let a = gamma / (2.0 * (1.0 + gamma));
    let sx = linalg::compensated_sum(returns_other.iter().copied());
    let sxx_syy = linalg::compensated_sum(
        returns_other
            .iter()
            .zip(returns_base)
            .map(|(x, y)| x * x - y * y),
    );
    let sx_sy = linalg::compensated_sum(returns_other.iter().zip(returns_base).map(|(x, y)| x - y));

    // Σ U(x − Δ) − Σ U(y) = qa Δ² + qb Δ + qc, written in return units
    let qa = -a * t;
    let qb = -(1.0 - 2.0 * a) * t + 2.0 * a * sx;
    let qc = (1.0 - 2.0 * a) * sx_sy - a * sxx_syy;
    if qa == 0.0 {
        return Ok(-qc / qb);
    }
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return Err(Error::InfeasibleUtility(disc));
    }
    // stable pair of roots; the small one is c/q
    let q = -0.5 * (qb + qb.signum() * disc.sqrt());
    let r1 = qc / q;
    let r2 = q / qa;
    let root = if r1.abs() <= r2.abs() { r1 } else { r2 };
    // one Newton step polishes the last bits
    let g = qa * root * root + qb * root + qc;
    let dg = 2.0 * qa * root + qb;
    Ok(if dg != 0.0 { root - g / dg } else { root })
}

/// Utility gap `Σ U(r_l − Δ) − Σ U(r_k)` used to verify a solved fee.
pub fn utility_gap(returns_base: &[f64], returns_other: &[f64], delta: f64, gamma: f64) -> f64 {
    let lhs = linalg::compensated_sum(returns_other.iter().map(|r| utility(r - delta, gamma)));
    let rhs = linalg::compensated_sum(returns_base.iter().map(|r| utility(*r, gamma)));
    lhs - rhs
}

/// Summary of one model's portfolio under one short-sale regime.
#[derive(Debug, Clone, PartialEq)]
pub struct EconSummary {
    pub model: String,
    pub long_only: bool,
    pub mean_turnover: f64,
    pub mean_concentration: f64,
    pub mean_short: f64,
    /// Annualised mean gross return, percent.
    pub ann_mean: f64,
    /// Annualised standard deviation of gross returns, percent.
    pub ann_std: f64,
    /// (cost rate, Sharpe or None when undefined)
    pub sharpe: Vec<(f64, Option<f64>)>,
    /// (cost rate, γ, daily decimal Δ, annualised basis points)
    pub delta: Vec<(f64, f64, f64, f64)>,
}

/// Daily Δ to annualised basis points.
pub fn delta_to_annual_bp(delta: f64) -> f64 {
    delta * ANNUALIZATION * 1e4
}

/// Summaries for each model. Δ compares each model (as k) with `base`
/// (as l): positive values mean the base model is preferred.
pub fn econ_summaries(
    tracks: &[(String, PortfolioTrack)],
    costs: &[f64],
    gammas: &[f64],
    base: Option<&str>,
) -> Result<Vec<EconSummary>> {
    let base_track = base
        .and_then(|b| tracks.iter().find(|(m, _)| m == b))
        .map(|(_, t)| t);
    tracks
        .iter()
        .map(|(model, tr)| {
            let (m, s) = mean_std(&tr.gross_returns);
            let n_days = tr.weights.len() as f64;
            let sharpe_rows = costs
                .iter()
                .map(|&c| (c, sharpe(&tr.net_at(c)).ok()))
                .collect();
            let mut delta = Vec::new();
            if let Some(bt) = base_track {
                for &c in costs {
                    let k: Vec<f64> = tr.net_at(c).iter().map(|r| r / 100.0).collect();
                    let l: Vec<f64> = bt.net_at(c).iter().map(|r| r / 100.0).collect();
                    for &g in gammas {
                        let d = delta_gamma(&k, &l, g)?;
                        delta.push((c, g, d, delta_to_annual_bp(d)));
                    }
                }
            }
            Ok(EconSummary {
                model: model.clone(),
                long_only: tr.long_only,
                mean_turnover: tr.mean_turnover(),
                mean_concentration: tr.concentration.iter().sum::<f64>() / n_days,
                mean_short: tr.short_pos.iter().sum::<f64>() / n_days,
                ann_mean: m * ANNUALIZATION,
                ann_std: s * ANNUALIZATION.sqrt(),
                sharpe: sharpe_rows,
                delta,
            })
        })
        .collect()
}
