//! Statistical evaluation of covariance forecasts.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg;
use crate::measures::QuartPanel;
use crate::rng;

/// Smallest eigenvalue a forecast must exceed for the Q-Like loss.
pub const QLIKE_MIN_EIG: f64 = 1e-10;
/// Floor on the HAC variance of the loss differential.
pub const DM_VAR_FLOOR: f64 = 1e-12;

fn check_pair(s: &DMatrix<f64>, shat: &DMatrix<f64>) -> Result<()> {
    if s.shape() != shat.shape() || !s.is_square() {
        return Err(Error::Dimension(format!(
            "realized {}x{} vs forecast {}x{}",
            s.nrows(),
            s.ncols(),
            shat.nrows(),
            shat.ncols()
        )));
    }
    Ok(())
}

/// `‖S − Ŝ‖_F`.
pub fn frobenius_loss(s: &DMatrix<f64>, shat: &DMatrix<f64>) -> Result<f64> {
    check_pair(s, shat)?;
    Ok((s - shat).norm())
}

/// `log|Ŝ| + tr(Ŝ⁻¹ S)`; fails when Ŝ is not positive definite.
pub fn qlike_loss(s: &DMatrix<f64>, shat: &DMatrix<f64>) -> Result<f64> {
    check_pair(s, shat)?;
    let sym = linalg::symmetrize(shat);
    let eig = SymmetricEigen::new(sym.clone());
    let min_eig = eig.eigenvalues.min();
    if !(min_eig > QLIKE_MIN_EIG) {
        return Err(Error::SingularForecast { min_eig });
    }
    let logdet: f64 = eig.eigenvalues.iter().map(|l| l.ln()).sum();
    let chol = sym.cholesky().ok_or(Error::SingularForecast { min_eig })?;
    let sol = chol.solve(s);
    Ok(logdet + sol.trace())
}

/// Per-day losses of one model; `None` marks an excluded day.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSeries {
    pub model_id: String,
    pub dates: Vec<String>,
    pub frobenius: Vec<Option<f64>>,
    pub qlike: Vec<Option<f64>>,
}

impl LossSeries {
    /// Losses of `forecasts` against `realized`; a missing forecast or a
    /// non-PD forecast (Q-Like only) leaves the day excluded.
    pub fn compute(
        model_id: &str,
        dates: &[String],
        realized: &[DMatrix<f64>],
        forecasts: &[Option<DMatrix<f64>>],
    ) -> Result<Self> {
        if realized.len() != dates.len() || forecasts.len() != dates.len() {
            return Err(Error::Dimension(
                "losses need one realized and one forecast matrix per date".into(),
            ));
        }
        let mut frobenius = Vec::with_capacity(dates.len());
        let mut qlike = Vec::with_capacity(dates.len());
        for (s, f) in realized.iter().zip(forecasts) {
            match f {
                Some(shat) => {
                    frobenius.push(Some(frobenius_loss(s, shat)?));
                    qlike.push(match qlike_loss(s, shat) {
                        Ok(v) => Some(v),
                        Err(Error::SingularForecast { .. }) => None,
                        Err(e) => return Err(e),
                    });
                }
                None => {
                    frobenius.push(None);
                    qlike.push(None);
                }
            }
        }
        Ok(Self {
            model_id: model_id.to_string(),
            dates: dates.to_vec(),
            frobenius,
            qlike,
        })
    }
}

/// Daily quarticity score: the cross-asset mean of each asset's RQ
/// standardised by that asset's median and interquartile range over the
/// whole panel.
pub fn quarticity_scores(rq: &QuartPanel) -> Vec<f64> {
    let n = rq.n_cols();
    let robust: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let mut col = rq.column(i);
            col.sort_by(f64::total_cmp);
            let med = quantile_sorted(&col, 0.5);
            let iqr = quantile_sorted(&col, 0.75) - quantile_sorted(&col, 0.25);
            (med, if iqr > 0.0 { iqr } else { 1.0 })
        })
        .collect();
    rq.rows
        .iter()
        .map(|row| {
            row.iter()
                .zip(&robust)
                .map(|(v, (m, s))| (v - m) / s)
                .sum::<f64>()
                / n.max(1) as f64
        })
        .collect()
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Splits day indices into the lower ⌊T/2⌋ and the remaining upper half of
/// `scores`. Ties keep date order, so equal scores split by date.
pub fn quarticity_split(scores: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let half = scores.len() / 2;
    let mut low = order[..half].to_vec();
    let mut high = order[half..].to_vec();
    low.sort_unstable();
    high.sort_unstable();
    (low, high)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmResult {
    pub statistic: f64,
    /// One-sided `Φ(statistic)`: small values favour the first model.
    pub p_value: f64,
    pub hac_lag: usize,
}

/// Diebold–Mariano test of equal accuracy on `d_t = loss_a − loss_b` with a
/// Bartlett HAC variance at lag ⌊T^{1/3}⌋.
pub fn dm_test(loss_a: &[f64], loss_b: &[f64]) -> Result<DmResult> {
    if loss_a.len() != loss_b.len() {
        return Err(Error::Dimension(format!(
            "{} vs {} losses",
            loss_a.len(),
            loss_b.len()
        )));
    }
    let t = loss_a.len();
    if t < 30 {
        return Err(Error::InsufficientHistory { needed: 29, got: t });
    }
    let d: Vec<f64> = loss_a.iter().zip(loss_b).map(|(a, b)| a - b).collect();
    let mean = d.iter().sum::<f64>() / t as f64;
    let lag = (t as f64).cbrt().floor() as usize;
    let hac = bartlett_hac(&d, mean, lag);
    let statistic = if mean == 0.0 {
        0.0
    } else {
        mean / (hac.max(DM_VAR_FLOOR) / t as f64).sqrt()
    };
    Ok(DmResult {
        statistic,
        p_value: std_normal_cdf(statistic),
        hac_lag: lag,
    })
}

fn bartlett_hac(d: &[f64], mean: f64, lag: usize) -> f64 {
    let t = d.len();
    let autocov = |k: usize| {
        (k..t)
            .map(|i| (d[i] - mean) * (d[i - k] - mean))
            .sum::<f64>()
            / t as f64
    };
    let mut v = autocov(0);
    for k in 1..=lag.min(t - 1) {
        v += 2.0 * (1.0 - k as f64 / (lag + 1) as f64) * autocov(k);
    }
    v
}

pub fn std_normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Settings for [`mcs`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McsConfig {
    pub alpha: f64,
    pub n_bootstrap: usize,
    /// Moving-block length; `None` means ⌊T^{1/3}⌋.
    pub block_len: Option<usize>,
    pub seed: u64,
}

impl Default for McsConfig {
    fn default() -> Self {
        Self {
            alpha: 0.10,
            n_bootstrap: 1000,
            block_len: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McsResult {
    /// Column indices of surviving models, ascending.
    pub surviving_models: Vec<usize>,
    /// MCS p-value per column.
    pub p_values: Vec<f64>,
    /// Columns in elimination order (the last entry is never eliminated).
    pub elimination_order: Vec<usize>,
    pub alpha: f64,
    pub n_bootstrap: usize,
    pub block_len: usize,
}

/// Bootstrap column means of `losses` under a moving-block resampling.
fn bootstrap_means(losses: &DMatrix<f64>, b: usize, block: usize, seed: u64) -> Vec<Vec<f64>> {
    let (t, k) = losses.shape();
    (0..b)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rng::substream(seed, "mcs-bootstrap", rep as u64);
            let mut sums = vec![0.0; k];
            let mut filled = 0;
            while filled < t {
                let start = rng.random_range(0..=t - block);
                let take = block.min(t - filled);
                for i in start..start + take {
                    for (j, s) in sums.iter_mut().enumerate() {
                        *s += losses[(i, j)];
                    }
                }
                filled += take;
            }
            sums.iter().map(|s| s / t as f64).collect()
        })
        .collect()
}

/// Model confidence set with the range statistic
/// `T_R = max_{i,j} |d̄_ij| / σ̂_ij` and moving-block bootstrap.
///
/// `losses` is T×K (rows are days, columns models). Elimination proceeds
/// until one model is left so that every model gets a p-value; the
/// survivors are the models whose MCS p-value exceeds `alpha`.
pub fn mcs(losses: &DMatrix<f64>, cfg: McsConfig) -> Result<McsResult> {
    let (t, k) = losses.shape();
    if k < 2 {
        return Err(Error::Config(format!(
            "MCS needs at least two models, got {k}"
        )));
    }
    if t < 50 {
        return Err(Error::InsufficientHistory { needed: 49, got: t });
    }
    if cfg.n_bootstrap < 100 {
        return Err(Error::Config(format!(
            "MCS needs at least 100 bootstrap replications, got {}",
            cfg.n_bootstrap
        )));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::Config(format!(
            "MCS alpha must lie in (0, 1), got {}",
            cfg.alpha
        )));
    }
    if losses.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite loss in MCS input".into()));
    }
    let block = cfg
        .block_len
        .unwrap_or_else(|| (t as f64).cbrt().floor() as usize)
        .clamp(1, t);
    let means: Vec<f64> = (0..k).map(|j| losses.column(j).mean()).collect();
    let boot = bootstrap_means(losses, cfg.n_bootstrap, block, cfg.seed);
    let b = cfg.n_bootstrap as f64;

    // σ̂_ij from the bootstrap, fixed across elimination rounds
    let mut sigma = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let dbar = means[i] - means[j];
            let v = boot
                .iter()
                .map(|m| (m[i] - m[j] - dbar).powi(2))
                .sum::<f64>()
                / b;
            sigma[i][j] = v.sqrt();
            sigma[j][i] = v.sqrt();
        }
    }
    let tstat = |i: usize, j: usize| -> f64 {
        let dbar = means[i] - means[j];
        if sigma[i][j] > 0.0 {
            dbar / sigma[i][j]
        } else if dbar == 0.0 {
            0.0
        } else {
            dbar.signum() * f64::MAX
        }
    };

    let mut alive: Vec<usize> = (0..k).collect();
    let mut p_values = vec![1.0; k];
    let mut order = Vec::with_capacity(k);
    let mut running: f64 = 0.0;
    while alive.len() > 1 {
        let mut t_range: f64 = 0.0;
        for (a, &i) in alive.iter().enumerate() {
            for &j in &alive[a + 1..] {
                t_range = t_range.max(tstat(i, j).abs());
            }
        }
        let exceed = boot
            .iter()
            .filter(|m| {
                let mut stat: f64 = 0.0;
                for (a, &i) in alive.iter().enumerate() {
                    for &j in &alive[a + 1..] {
                        if sigma[i][j] > 0.0 {
                            let dev = (m[i] - m[j] - (means[i] - means[j])).abs();
                            stat = stat.max(dev / sigma[i][j]);
                        }
                    }
                }
                stat >= t_range
            })
            .count();
        let p = exceed as f64 / b;
        let worst = *alive
            .iter()
            .max_by(|&&a, &&c| {
                let sa = alive
                    .iter()
                    .filter(|&&j| j != a)
                    .map(|&j| tstat(a, j))
                    .fold(f64::MIN, f64::max);
                let sc = alive
                    .iter()
                    .filter(|&&j| j != c)
                    .map(|&j| tstat(c, j))
                    .fold(f64::MIN, f64::max);
                sa.total_cmp(&sc).then(c.cmp(&a))
            })
            .expect("nonempty");
        running = running.max(p);
        p_values[worst] = running;
        order.push(worst);
        alive.retain(|&m| m != worst);
    }
    order.push(alive[0]);
    p_values[alive[0]] = 1.0;

    let surviving_models = (0..k).filter(|&m| p_values[m] > cfg.alpha).collect();
    Ok(McsResult {
        surviving_models,
        p_values,
        elimination_order: order,
        alpha: cfg.alpha,
        n_bootstrap: cfg.n_bootstrap,
        block_len: block,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(v))
    }

    #[test]
    fn frobenius_examples() {
        let s = diag(&[2.0, 3.0]);
        assert_eq!(frobenius_loss(&s, &s).unwrap(), 0.0);
        assert!(
            (frobenius_loss(&diag(&[2.0, 2.0]), &diag(&[1.0, 1.0])).unwrap() - 2f64.sqrt()).abs()
                < 1e-15
        );
        let off = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!((frobenius_loss(&off, &DMatrix::zeros(2, 2)).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(matches!(
            frobenius_loss(&off, &DMatrix::zeros(3, 3)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn qlike_examples() {
        let i3 = DMatrix::identity(3, 3);
        assert!((qlike_loss(&i3, &i3).unwrap() - 3.0).abs() < 1e-14);
        assert!(
            (qlike_loss(&diag(&[2.0, 3.0]), &DMatrix::identity(2, 2)).unwrap() - 5.0).abs() < 1e-14
        );
        let singular = DMatrix::from_element(2, 2, 1.0);
        assert!(matches!(
            qlike_loss(&i3.view((0, 0), (2, 2)).into(), &singular),
            Err(Error::SingularForecast { .. })
        ));
    }

    #[test]
    fn split_examples() {
        assert_eq!(
            quarticity_split(&[1.0, 2.0, 3.0, 4.0]),
            (vec![0, 1], vec![2, 3])
        );
        assert_eq!(
            quarticity_split(&[4.0, 3.0, 2.0, 1.0]),
            (vec![2, 3], vec![0, 1])
        );
        assert_eq!(quarticity_split(&[1.0; 5]), (vec![0, 1], vec![2, 3, 4]));
    }

    #[test]
    fn dm_degenerate_cases() {
        let a: Vec<f64> = (0..60).map(|i| (i as f64 * 0.37).sin()).collect();
        let r = dm_test(&a, &a).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 0.5);

        let b: Vec<f64> = a.iter().map(|v| v + 1.0).collect();
        let r = dm_test(&a, &b).unwrap();
        assert!(r.statistic.is_finite() && r.statistic < -1e6);
        assert!(r.p_value < 1e-12);
        assert!(matches!(
            dm_test(&a[..10], &b[..10]),
            Err(Error::InsufficientHistory { .. })
        ));
    }

    #[test]
    fn mcs_identical_columns_both_survive() {
        let col: Vec<f64> = (0..100).map(|i| (i as f64 * 0.9).cos()).collect();
        let m = DMatrix::from_fn(100, 2, |i, _| col[i]);
        let r = mcs(&m, McsConfig::default()).unwrap();
        assert_eq!(r.surviving_models, vec![0, 1]);
        assert_eq!(r.p_values, vec![1.0, 1.0]);
    }

    #[test]
    fn mcs_rejects_small_bootstrap() {
        let m = DMatrix::from_fn(60, 2, |i, j| (i + j) as f64);
        let cfg = McsConfig {
            n_bootstrap: 50,
            ..McsConfig::default()
        };
        assert!(matches!(mcs(&m, cfg), Err(Error::Config(_))));
    }
}
