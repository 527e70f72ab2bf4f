//! Multivariate covariance forecasting models.
//!
//! * vech M-HAR: element-specific intercepts, scalar daily/weekly/monthly slopes.
//! * vech M-HARQ: M-HAR plus a scalar loading on `π_{t−1} ∘ s_{t−1}`.
//! * Scalar correlation HAR, mean-reverting to the sample mean correlation.
//! * DRD composition of per-asset variance forecasts with a correlation forecast.
//!
//! The pooled estimators demean every element series (and its regressors)
//! before stacking, which is the fixed-effects least-squares solution for
//! element-specific intercepts with common slopes.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::measures::{self, corr_from_strict_lower, trailing_mean, unvech, BURN_IN, PSD_TOL};

/// Floor applied to forecast variances on the diagonal (percent²).
pub const DIAG_FLOOR: f64 = 1e-8;
/// Interior margin on γ₁+γ₂+γ₃ for the correlation model.
pub const CORR_SUM_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct MvFit {
    pub alpha0: DVector<f64>,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    /// Loading on `π_{t−1} ∘ s_{t−1}` (M-HARQ only; `None` when dropped or absent).
    pub alpha1q: Option<f64>,
    /// M-HARQ whose π panel was identically zero, so the term was dropped.
    pub q_dropped: bool,
    /// Per-element residual standard deviations.
    pub resid_scale: DVector<f64>,
    /// Standard errors of (α₁, α₂, α₃[, α₁Q]).
    pub slope_std_errors: Vec<f64>,
    pub n_obs: usize,
}

fn check_rows(rows: &[Vec<f64>]) -> Result<usize> {
    if rows.len() <= BURN_IN {
        return Err(Error::InsufficientHistory {
            needed: BURN_IN,
            got: rows.len(),
        });
    }
    let k = rows[0].len();
    if k == 0 {
        return Err(Error::Dimension("empty vech rows".into()));
    }
    if let Some(t) = rows.iter().position(|r| r.len() != k) {
        return Err(Error::Dimension(format!(
            "row {t} has {} elements, expected {k}",
            rows[t].len()
        )));
    }
    Ok(k)
}

/// Pooled within-element regression. `extra` supplies an optional fifth
/// regressor per element and row.
struct Pooled {
    coef: Vec<f64>,
    std_errors: Vec<f64>,
    alpha0: DVector<f64>,
    resid_scale: DVector<f64>,
    n_per_elem: usize,
}

fn pooled_fit(
    series: &[Vec<f64>],
    extra: Option<&dyn Fn(usize, usize) -> f64>,
    with_intercepts: bool,
    center: Option<&[f64]>,
    names: &[&str],
) -> Result<Pooled> {
    let k_elems = series.len();
    let t_len = series[0].len();
    let n = t_len - BURN_IN;
    let p = names.len();
    let mut x = DMatrix::zeros(n * k_elems, p);
    let mut y = DVector::zeros(n * k_elems);
    let mut means = Vec::with_capacity(k_elems);

    for (e, s) in series.iter().enumerate() {
        let base = e * n;
        for (row, t) in (BURN_IN..t_len).enumerate() {
            let hist = &s[..t];
            y[base + row] = s[t];
            x[(base + row, 0)] = s[t - 1];
            x[(base + row, 1)] = trailing_mean(hist, 5);
            x[(base + row, 2)] = trailing_mean(hist, 20);
            if let Some(g) = extra {
                x[(base + row, 3)] = g(e, t);
            }
        }
        // subtract either the element's sample means or a supplied centre;
        // a supplied centre applies to the response and the three lag terms
        let mut m = vec![0.0; p + 1];
        match center {
            Some(c) => {
                m[..3].iter_mut().for_each(|v| *v = c[e]);
                m[p] = c[e];
            }
            None if with_intercepts => {
                m[p] = y.rows(base, n).mean();
                for j in 0..p {
                    m[j] = x.view((base, j), (n, 1)).mean();
                }
            }
            None => {}
        }
        for row in 0..n {
            y[base + row] -= m[p];
            for j in 0..p {
                x[(base + row, j)] -= m[j];
            }
        }
        means.push(m);
    }

    let fit = linalg::ols(&x, &y, names)?;
    let n_total = (n * k_elems) as f64;
    let dof_lost = if with_intercepts { k_elems as f64 } else { 0.0 };
    let dof_scale = ((n_total - p as f64) / (n_total - p as f64 - dof_lost))
        .max(0.0)
        .sqrt();
    let coef: Vec<f64> = fit.coef.iter().copied().collect();

    let alpha0 = DVector::from_iterator(
        k_elems,
        means.iter().map(|m| {
            if with_intercepts {
                m[p] - (0..p).map(|j| coef[j] * m[j]).sum::<f64>()
            } else {
                0.0
            }
        }),
    );
    let resid_scale = DVector::from_iterator(
        k_elems,
        (0..k_elems).map(|e| {
            let r = fit.residuals.rows(e * n, n);
            (r.norm_squared() / n as f64).sqrt()
        }),
    );
    Ok(Pooled {
        coef,
        std_errors: fit.std_errors.iter().map(|s| s * dof_scale).collect(),
        alpha0,
        resid_scale,
        n_per_elem: n,
    })
}

fn transpose_rows(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = rows[0].len();
    (0..k)
        .map(|e| rows.iter().map(|r| r[e]).collect())
        .collect()
}

/// vech M-HAR by pooled within-element OLS.
pub fn fit_mhar(rows: &[Vec<f64>]) -> Result<MvFit> {
    check_rows(rows)?;
    let series = transpose_rows(rows);
    let pooled = pooled_fit(&series, None, true, None, &["lag1", "lag5", "lag20"])?;
    Ok(MvFit {
        alpha0: pooled.alpha0,
        alpha1: pooled.coef[0],
        alpha2: pooled.coef[1],
        alpha3: pooled.coef[2],
        alpha1q: None,
        q_dropped: false,
        resid_scale: pooled.resid_scale,
        slope_std_errors: pooled.std_errors,
        n_obs: pooled.n_per_elem,
    })
}

/// vech M-HARQ: `π` rows share the vech layout of `rows`.
pub fn fit_mharq(rows: &[Vec<f64>], pi_rows: &[Vec<f64>]) -> Result<MvFit> {
    let k = check_rows(rows)?;
    if pi_rows.len() != rows.len() || pi_rows.iter().any(|r| r.len() != k) {
        return Err(Error::Dimension(
            "pi panel shape differs from the covariance panel".into(),
        ));
    }
    if pi_rows.iter().flatten().any(|v| !(*v >= 0.0)) {
        return Err(Error::Domain("pi panel must be nonnegative".into()));
    }
    if pi_rows.iter().flatten().all(|v| *v == 0.0) {
        let mut fit = fit_mhar(rows)?;
        fit.q_dropped = true;
        return Ok(fit);
    }
    let series = transpose_rows(rows);
    let extra = |e: usize, t: usize| pi_rows[t - 1][e] * series[e][t - 1];
    let pooled = pooled_fit(
        &series,
        Some(&extra),
        true,
        None,
        &["lag1", "lag5", "lag20", "pi_interaction"],
    )?;
    Ok(MvFit {
        alpha0: pooled.alpha0,
        alpha1: pooled.coef[0],
        alpha2: pooled.coef[1],
        alpha3: pooled.coef[2],
        alpha1q: Some(pooled.coef[3]),
        q_dropped: false,
        resid_scale: pooled.resid_scale,
        slope_std_errors: pooled.std_errors,
        n_obs: pooled.n_per_elem,
    })
}

/// Default π proxy in vech layout: `(RQ_i · RQ_j)^{1/4}`.
pub fn pi_proxy(rq_row: &[f64]) -> Vec<f64> {
    measures::vech_pairs(rq_row.len())
        .map(|(i, j)| (rq_row[i] * rq_row[j]).sqrt().sqrt())
        .collect()
}

/// Covariance forecast after PSD repair.
#[derive(Debug, Clone, PartialEq)]
pub struct MvForecast {
    pub matrix: DMatrix<f64>,
    /// True when eigenvalue clipping was needed.
    pub projected: bool,
}

/// Raw vech forecast for the day after `recent`.
pub fn forecast_mv_vech(
    fit: &MvFit,
    recent: &[Vec<f64>],
    pi_last: Option<&[f64]>,
) -> Result<DVector<f64>> {
    if recent.len() < BURN_IN {
        return Err(Error::InsufficientHistory {
            needed: BURN_IN,
            got: recent.len(),
        });
    }
    let k = fit.alpha0.len();
    if recent.iter().any(|r| r.len() != k) {
        return Err(Error::Dimension(format!(
            "forecast rows must have {k} elements"
        )));
    }
    let recent = &recent[recent.len() - BURN_IN..];
    let pi = match (fit.alpha1q, pi_last) {
        (Some(_), Some(p)) if p.len() == k => Some(p),
        (Some(_), Some(_)) => {
            return Err(Error::Dimension(
                "pi row length differs from vech length".into(),
            ))
        }
        (Some(_), None) => {
            return Err(Error::Argument(
                "M-HARQ forecast needs the last pi row".into(),
            ))
        }
        (None, _) => None,
    };
    let out = DVector::from_iterator(
        k,
        (0..k).map(|e| {
            let s: Vec<f64> = recent.iter().map(|r| r[e]).collect();
            let last = s[BURN_IN - 1];
            let mut v = fit.alpha0[e]
                + fit.alpha1 * last
                + fit.alpha2 * trailing_mean(&s, 5)
                + fit.alpha3 * trailing_mean(&s, 20);
            if let (Some(a), Some(p)) = (fit.alpha1q, pi) {
                v += a * p[e] * last;
            }
            v
        }),
    );
    Ok(out)
}

/// Forecast matrix: vech forecast, symmetric reconstruction, nearest-PSD
/// projection when needed, diagonal floored at [`DIAG_FLOOR`].
pub fn forecast_mv(
    fit: &MvFit,
    recent: &[Vec<f64>],
    pi_last: Option<&[f64]>,
) -> Result<MvForecast> {
    let v = forecast_mv_vech(fit, recent, pi_last)?;
    let raw = unvech(v.as_slice())?;
    let (lo, hi) = linalg::eig_range(&raw);
    let projected = lo < -PSD_TOL * hi.abs().max(f64::MIN_POSITIVE) || lo < 0.0 && hi <= 0.0;
    let mut matrix = if projected {
        linalg::nearest_psd(&raw)
    } else {
        raw
    };
    for i in 0..matrix.nrows() {
        if !(matrix[(i, i)] >= DIAG_FLOOR) {
            matrix[(i, i)] = DIAG_FLOOR;
        }
    }
    Ok(MvForecast { matrix, projected })
}

/// Scalar correlation HAR.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrFit {
    /// Sample mean correlation vector (strict lower triangle).
    pub rbar: Vec<f64>,
    /// (γ₁, γ₂, γ₃)
    pub gammas: [f64; 3],
    /// Unconstrained OLS estimates before any projection.
    pub ols_gammas: [f64; 3],
    pub std_errors: [f64; 3],
    /// True when the OLS estimates violated the validity region and were projected.
    pub constrained: bool,
    pub n_obs: usize,
}

impl CorrFit {
    pub fn n_assets(&self) -> usize {
        measures::dim_from_vech_len(self.rbar.len())
            .map(|m| m + 1)
            .unwrap_or(1)
    }
}

/// Least squares on the face where `free` coordinates vary, the others are 0,
/// and (when `sum_active`) the free coordinates sum to `cap`.
fn face_solution(
    xtx: &[[f64; 3]; 3],
    xty: &[f64; 3],
    free: &[usize],
    sum_active: bool,
    cap: f64,
) -> Option<[f64; 3]> {
    let m = free.len();
    let mut g = [0.0; 3];
    if m == 0 {
        return (!sum_active).then_some(g);
    }
    let a = DMatrix::from_fn(m, m, |i, j| xtx[free[i]][free[j]]);
    let b = DVector::from_fn(m, |i, _| xty[free[i]]);
    let sol = if sum_active {
        // KKT system [A 1; 1ᵀ 0][g; ν] = [b; cap]
        let mut k = DMatrix::zeros(m + 1, m + 1);
        k.view_mut((0, 0), (m, m)).copy_from(&a);
        for i in 0..m {
            k[(i, m)] = 1.0;
            k[(m, i)] = 1.0;
        }
        let mut rhs = DVector::zeros(m + 1);
        rhs.rows_mut(0, m).copy_from(&b);
        rhs[m] = cap;
        k.lu().solve(&rhs)?.rows(0, m).into_owned()
    } else {
        a.lu().solve(&b)?
    };
    for (i, &f) in free.iter().enumerate() {
        g[f] = sol[i];
    }
    Some(g)
}

/// Nonnegative least squares with `Σγ ≤ cap`, by enumerating every face of
/// the feasible polytope (exact for three coefficients).
fn constrained_gammas(xtx: &[[f64; 3]; 3], xty: &[f64; 3], yty: f64, cap: f64) -> [f64; 3] {
    let rss = |g: &[f64; 3]| {
        let mut q = yty;
        for i in 0..3 {
            q -= 2.0 * g[i] * xty[i];
            for j in 0..3 {
                q += g[i] * xtx[i][j] * g[j];
            }
        }
        q
    };
    let mut best = ([0.0; 3], rss(&[0.0; 3]));
    for mask in 0u8..8 {
        let free: Vec<usize> = (0..3).filter(|i| mask & (1 << i) != 0).collect();
        for sum_active in [false, true] {
            if let Some(g) = face_solution(xtx, xty, &free, sum_active, cap) {
                let feasible =
                    g.iter().all(|v| *v >= -1e-14) && g.iter().sum::<f64>() <= cap + 1e-14;
                if feasible {
                    let g = g.map(|v| v.max(0.0));
                    let val = rss(&g);
                    if val < best.1 {
                        best = (g, val);
                    }
                }
            }
        }
    }
    let mut g = best.0;
    let s: f64 = g.iter().sum();
    if s > cap {
        g.iter_mut().for_each(|v| *v *= cap / s);
    }
    g
}

/// Scalar correlation HAR on strict-lower correlation rows.
///
/// When the OLS estimates leave the validity region (all γᵢ > 0 and
/// Σγᵢ ≤ 1 − 1e-6) they are replaced by the constrained least-squares
/// solution and `constrained` is set.
pub fn fit_corr_har(rows: &[Vec<f64>]) -> Result<CorrFit> {
    let k = check_rows(rows)?;
    let t_len = rows.len() as f64;
    let rbar: Vec<f64> = (0..k)
        .map(|e| rows.iter().map(|r| r[e]).sum::<f64>() / t_len)
        .collect();
    let series = transpose_rows(rows);
    let pooled = pooled_fit(
        &series,
        None,
        false,
        Some(&rbar),
        &["lag1", "lag5", "lag20"],
    )?;
    let ols_gammas = [pooled.coef[0], pooled.coef[1], pooled.coef[2]];
    let cap = 1.0 - CORR_SUM_MARGIN;
    let valid = ols_gammas.iter().all(|g| *g > 0.0) && ols_gammas.iter().sum::<f64>() <= cap;

    let gammas = if valid {
        ols_gammas
    } else {
        // normal equations of the demeaned pooled regression
        let mut xtx = [[0.0; 3]; 3];
        let mut xty = [0.0; 3];
        let mut yty = 0.0;
        for (e, s) in series.iter().enumerate() {
            for t in BURN_IN..s.len() {
                let hist = &s[..t];
                let xr = [
                    s[t - 1] - rbar[e],
                    trailing_mean(hist, 5) - rbar[e],
                    trailing_mean(hist, 20) - rbar[e],
                ];
                let yv = s[t] - rbar[e];
                yty += yv * yv;
                for i in 0..3 {
                    xty[i] += xr[i] * yv;
                    for j in 0..3 {
                        xtx[i][j] += xr[i] * xr[j];
                    }
                }
            }
        }
        constrained_gammas(&xtx, &xty, yty, cap)
    };

    Ok(CorrFit {
        rbar,
        gammas,
        ols_gammas,
        std_errors: [
            pooled.std_errors[0],
            pooled.std_errors[1],
            pooled.std_errors[2],
        ],
        constrained: !valid,
        n_obs: pooled.n_per_elem,
    })
}

/// Correlation forecast; `projected` reports use of the PSD fallback.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrForecast {
    pub matrix: DMatrix<f64>,
    pub projected: bool,
}

/// `r̂ = r̄ + γ₁(r_t − r̄) + γ₂(r̄₅ − r̄) + γ₃(r̄₂₀ − r̄)`, reconstructed with a
/// unit diagonal. Under the validity condition this is a convex combination
/// of correlation matrices; the projection fallback exists only for histories
/// that are themselves invalid.
pub fn forecast_corr(fit: &CorrFit, recent: &[Vec<f64>]) -> Result<CorrForecast> {
    if recent.len() < BURN_IN {
        return Err(Error::InsufficientHistory {
            needed: BURN_IN,
            got: recent.len(),
        });
    }
    let k = fit.rbar.len();
    if recent.iter().any(|r| r.len() != k) {
        return Err(Error::Dimension(format!(
            "correlation rows must have {k} elements"
        )));
    }
    let recent = &recent[recent.len() - BURN_IN..];
    let [g1, g2, g3] = fit.gammas;
    let rhat: Vec<f64> = (0..k)
        .map(|e| {
            let s: Vec<f64> = recent.iter().map(|r| r[e]).collect();
            let rb = fit.rbar[e];
            rb + g1 * (s[BURN_IN - 1] - rb)
                + g2 * (trailing_mean(&s, 5) - rb)
                + g3 * (trailing_mean(&s, 20) - rb)
        })
        .collect();
    let n = fit.n_assets();
    let matrix = corr_from_strict_lower(&rhat, n);
    if linalg::is_psd(&matrix, PSD_TOL) {
        return Ok(CorrForecast {
            matrix,
            projected: false,
        });
    }
    let p = linalg::nearest_psd(&matrix);
    let d = DVector::from_iterator(n, (0..n).map(|i| p[(i, i)].max(f64::MIN_POSITIVE).sqrt()));
    let mut c = DMatrix::from_fn(n, n, |i, j| p[(i, j)] / (d[i] * d[j]));
    for i in 0..n {
        c[(i, i)] = 1.0;
    }
    Ok(CorrForecast {
        matrix: linalg::symmetrize(&c),
        projected: true,
    })
}

/// Composes per-asset variance forecasts with a correlation forecast. The
/// diagonal of the result equals `variances` exactly.
pub fn forecast_drd(variances: &[f64], corr: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(i) = variances.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::DegenerateVariance {
            index: i,
            value: variances[i],
        });
    }
    let sd = DVector::from_iterator(variances.len(), variances.iter().map(|v| v.sqrt()));
    let mut s = measures::compose_drd(&sd, corr)?;
    for (i, v) in variances.iter().enumerate() {
        s[(i, i)] = *v;
    }
    Ok(s)
}
