//! Synthetic intraday data with known integrated covariances.
//!
//! Each asset's log variance follows a HAR recursion. Correlations revert to
//! a target matrix with small sample-correlation shocks. Intraday variance
//! is spread unevenly over the day with a day-specific concentration, so
//! days with concentrated variance have both noisier realized variances and
//! larger realized quarticities.

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kv::KvBlock;
use crate::linalg;
use crate::measures::{self, CovPanel, DatedPanel, QuartPanel, VolPanel};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_assets: usize,
    pub n_days: usize,
    pub intraday_count: usize,
    /// Log-variance HAR coefficients (b₀, b₁, b₂, b₃).
    pub har: [f64; 4],
    pub sigma_v: f64,
    /// Per-asset log-variance offsets; empty means evenly spaced in [−0.5, 0.5].
    pub log_scales: Vec<f64>,
    /// Target correlation; `None` means equicorrelation `rho`.
    pub r_star: Option<DMatrix<f64>>,
    pub rho: f64,
    pub kappa: f64,
    /// Weight of the sample-correlation shock.
    pub corr_noise: f64,
    /// Draws behind each sample-correlation shock.
    pub corr_dof: usize,
    /// Strength of the intraday concentration.
    pub coupling: f64,
    pub burn_in: usize,
    pub start_date: NaiveDate,
    pub keep_intraday: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_assets: 5,
            n_days: 1500,
            intraday_count: 78,
            har: [0.0, 0.35, 0.35, 0.2],
            sigma_v: 0.25,
            log_scales: Vec::new(),
            r_star: None,
            rho: 0.4,
            kappa: 0.05,
            corr_noise: 0.05,
            corr_dof: 50,
            coupling: 0.8,
            burn_in: 500,
            start_date: NaiveDate::from_ymd_opt(2010, 1, 4).unwrap(),
            keep_intraday: false,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn target_corr(&self) -> DMatrix<f64> {
        self.r_star.clone().unwrap_or_else(|| {
            DMatrix::from_fn(self.n_assets, self.n_assets, |i, j| {
                if i == j {
                    1.0
                } else {
                    self.rho
                }
            })
        })
    }

    pub fn scales(&self) -> Vec<f64> {
        if !self.log_scales.is_empty() {
            return self.log_scales.clone();
        }
        let n = self.n_assets;
        (0..n)
            .map(|i| {
                if n == 1 {
                    0.0
                } else {
                    -0.5 + i as f64 / (n - 1) as f64
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_assets == 0 {
            return Err(Error::Config("n_assets must be positive".into()));
        }
        if self.n_days == 0 {
            return Err(Error::Config("n_days must be positive".into()));
        }
        if self.intraday_count < 10 {
            return Err(Error::Config(format!(
                "intraday_count must be at least 10, got {}",
                self.intraday_count
            )));
        }
        let [_, b1, b2, b3] = self.har;
        if !(b1 + b2 + b3 < 1.0) || [b1, b2, b3].iter().any(|b| *b < 0.0) {
            return Err(Error::Config(format!(
                "stationarity requires nonnegative b1, b2, b3 with b1 + b2 + b3 < 1, got {}",
                b1 + b2 + b3
            )));
        }
        if !(self.sigma_v >= 0.0) || !(self.coupling >= 0.0) {
            return Err(Error::Config(
                "sigma_v and coupling must be nonnegative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.kappa) || !(0.0..=1.0).contains(&self.corr_noise) {
            return Err(Error::Config(
                "kappa and corr_noise must lie in [0, 1]".into(),
            ));
        }
        if self.corr_noise > 0.0 && self.corr_dof < 2 {
            return Err(Error::Config("corr_dof must be at least 2".into()));
        }
        if !self.log_scales.is_empty() && self.log_scales.len() != self.n_assets {
            return Err(Error::Config(format!(
                "{} log scales for {} assets",
                self.log_scales.len(),
                self.n_assets
            )));
        }
        let r = self.target_corr();
        if r.shape() != (self.n_assets, self.n_assets)
            || (0..self.n_assets).any(|i| r[(i, i)] != 1.0)
            || !linalg::is_symmetric(&r, 1e-12)
            || !linalg::is_psd(&r, 1e-12)
        {
            return Err(Error::Config(
                "target correlation must be a unit-diagonal PSD matrix".into(),
            ));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvBlock {
        let mut b = KvBlock::new();
        b.set("n_assets", self.n_assets);
        b.set("n_days", self.n_days);
        b.set("intraday_count", self.intraday_count);
        for (i, v) in self.har.iter().enumerate() {
            b.set(&format!("b{i}"), v);
        }
        b.set("sigma_v", self.sigma_v);
        b.set("rho", self.rho);
        b.set("kappa", self.kappa);
        b.set("corr_noise", self.corr_noise);
        b.set("corr_dof", self.corr_dof);
        b.set("coupling", self.coupling);
        b.set("burn_in", self.burn_in);
        b.set("start_date", self.start_date);
        b.set("seed", self.seed);
        b
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dates: Vec<String>,
    pub asset_ids: Vec<String>,
    /// Integrated covariance of each day.
    pub truth: Vec<DMatrix<f64>>,
    /// M×N intraday returns per day, kept only on request.
    pub intraday: Option<Vec<DMatrix<f64>>>,
    /// Daily returns, percent.
    pub daily_returns: DatedPanel,
    pub cov: CovPanel,
    pub vol: VolPanel,
    pub quart: QuartPanel,
}

/// `n` weekdays starting at `start` (or the next weekday).
pub fn business_days(start: NaiveDate, n: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d.format("%Y-%m-%d").to_string());
        }
        d += Duration::days(1);
    }
    out
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

fn sample_corr(rng: &mut ChaCha8Rng, chol: &DMatrix<f64>, dof: usize) -> DMatrix<f64> {
    let n = chol.nrows();
    let mut s = DMatrix::zeros(n, n);
    for _ in 0..dof {
        let x = chol * normal_vec(rng, n);
        s += &x * x.transpose();
    }
    let d: Vec<f64> = (0..n).map(|i| s[(i, i)].sqrt()).collect();
    let mut c = DMatrix::from_fn(n, n, |i, j| s[(i, j)] / (d[i] * d[j]));
    c.fill_diagonal(1.0);
    c
}

/// Lower Cholesky factor, falling back to the symmetric square root for
/// singular PSD matrices.
fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(c) = m.clone().cholesky() {
        return c.l();
    }
    let e = nalgebra::SymmetricEigen::new(linalg::symmetrize(m));
    let sq = e.eigenvalues.map(|l| l.max(0.0).sqrt());
    &e.eigenvectors * DMatrix::from_diagonal(&sq) * e.eigenvectors.transpose()
}

/// Simulates a panel. Deterministic given the config.
pub fn simulate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let n = cfg.n_assets;
    let m = cfg.intraday_count;
    let total = cfg.burn_in + cfg.n_days;
    let [b0, b1, b2, b3] = cfg.har;
    let scales = cfg.scales();
    let r_star = cfg.target_corr();
    let r_star_chol = psd_factor(&r_star);

    let mut vol_rng = rng::substream(cfg.seed, "synth/log-variance", 0);
    let mut corr_rng = rng::substream(cfg.seed, "synth/correlation", 0);

    // log-variance paths, started at the unconditional mean
    let h_mean = b0 / (1.0 - b1 - b2 - b3);
    let mut h: Vec<Vec<f64>> = vec![vec![h_mean; 20]; n];
    for _ in 0..total {
        for hi in h.iter_mut() {
            let len = hi.len();
            let w5 = hi[len - 5..].iter().sum::<f64>() / 5.0;
            let w20 = hi[len - 20..].iter().sum::<f64>() / 20.0;
            let eps: f64 = vol_rng.sample(StandardNormal);
            let next = b0 + b1 * hi[len - 1] + b2 * w5 + b3 * w20 + cfg.sigma_v * eps;
            hi.push(next);
        }
    }

    let mut corr = r_star.clone();
    let mut truth = Vec::with_capacity(cfg.n_days);
    for t in 0..total {
        corr = &corr * (1.0 - cfg.kappa) + &r_star * cfg.kappa;
        if cfg.corr_noise > 0.0 {
            let shock = sample_corr(&mut corr_rng, &r_star_chol, cfg.corr_dof);
            corr = &corr * (1.0 - cfg.corr_noise) + shock * cfg.corr_noise;
        }
        if t >= cfg.burn_in {
            let sd =
                DVector::from_iterator(n, (0..n).map(|i| ((h[i][20 + t] + scales[i]) / 2.0).exp()));
            let mut s = DMatrix::from_fn(n, n, |i, j| sd[i] * sd[j] * corr[(i, j)]);
            for i in 0..n {
                s[(i, i)] = sd[i] * sd[i];
            }
            truth.push(s);
        }
    }

    let dates = business_days(cfg.start_date, cfg.n_days);
    let asset_ids: Vec<String> = (1..=n).map(|i| format!("A{i}")).collect();
    let mut mats = Vec::with_capacity(cfg.n_days);
    let mut rv_rows = Vec::with_capacity(cfg.n_days);
    let mut rq_rows = Vec::with_capacity(cfg.n_days);
    let mut daily = Vec::with_capacity(cfg.n_days);
    let mut intraday = cfg.keep_intraday.then(|| Vec::with_capacity(cfg.n_days));

    for (t, sigma) in truth.iter().enumerate() {
        let mut rng = rng::substream(cfg.seed, "synth/intraday", t as u64);
        let l = psd_factor(sigma);
        let u: f64 = rng.sample(StandardNormal);
        let c = cfg.coupling * u.abs();
        let raw: Vec<f64> = (0..m)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                (c * z - 0.5 * c * c).exp()
            })
            .collect();
        let total_w: f64 = raw.iter().sum();
        let mut r = DMatrix::zeros(m, n);
        for (j, w) in raw.iter().enumerate() {
            let x = &l * normal_vec(&mut rng, n) * (w / total_w).sqrt();
            r.set_row(j, &x.transpose());
        }
        let s = measures::realized_cov(&r)?;
        rv_rows.push(s.diagonal().as_slice().to_vec());
        rq_rows.push(
            (0..n)
                .map(|i| measures::realized_quarticity(r.column(i).as_slice()))
                .collect::<Result<Vec<_>>>()?,
        );
        daily.push((0..n).map(|i| r.column(i).sum()).collect());
        mats.push(s);
        if let Some(v) = intraday.as_mut() {
            v.push(r);
        }
    }

    Ok(SynthOutput {
        cov: CovPanel::new(dates.clone(), asset_ids.clone(), mats)?,
        vol: VolPanel::new(DatedPanel::new(dates.clone(), asset_ids.clone(), rv_rows)?)?,
        quart: QuartPanel::new(DatedPanel::new(dates.clone(), asset_ids.clone(), rq_rows)?)?,
        daily_returns: DatedPanel::new(dates.clone(), asset_ids.clone(), daily)?,
        dates,
        asset_ids,
        truth,
        intraday,
    })
}
