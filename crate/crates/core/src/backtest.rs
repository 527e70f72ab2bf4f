//! Rolling-window one-step-ahead backtest and its evaluation.
//!
//! Day `t` is forecast from days `t − window … t − 1` only. Models are
//! refitted on the first out-of-sample day and every `refit_every` days
//! after it; between refits the parameters stay frozen while forecasts keep
//! using the latest trailing data.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::RngCore;
use rayon::prelude::*;

use crate::econ::{self, EconSummary, PortfolioTrack};
use crate::error::{Error, Result};
use crate::kv::KvBlock;
use crate::linalg;
use crate::measures::{self, CovPanel, DatedPanel, QuartPanel, BURN_IN, PSD_TOL};
use crate::mvmodels::{self, CorrFit, MvFit};
use crate::rng;
use crate::statespace::{self, SsFit};
use crate::statloss::{self, LossSeries, McsConfig};
use crate::unihar::{self, HarFit, HarSpec, DEFAULT_VARIANCE_FLOOR};

/// The built-in forecasting pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelId {
    MHar,
    HarDrd,
    HarlDrd,
    HarqDrd,
    HarqlDrd,
    HarsDrd,
    HarslDrd,
    MHarq,
}

impl ModelId {
    /// The seven default models.
    pub const DEFAULT: [ModelId; 7] = [
        ModelId::MHar,
        ModelId::HarDrd,
        ModelId::HarlDrd,
        ModelId::HarqDrd,
        ModelId::HarqlDrd,
        ModelId::HarsDrd,
        ModelId::HarslDrd,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelId::MHar => "M-HAR",
            ModelId::HarDrd => "HAR-DRD",
            ModelId::HarlDrd => "HARL-DRD",
            ModelId::HarqDrd => "HARQ-DRD",
            ModelId::HarqlDrd => "HARQL-DRD",
            ModelId::HarsDrd => "HARS-DRD",
            ModelId::HarslDrd => "HARSL-DRD",
            ModelId::MHarq => "M-HARQ",
        }
    }

    /// The default forecaster for this model.
    pub fn forecaster(&self) -> Box<dyn CovForecaster> {
        let drd = |v| {
            Box::new(DrdForecaster {
                variance: v,
                name: self.name(),
            }) as Box<dyn CovForecaster>
        };
        match self {
            ModelId::MHar => Box::new(MvForecaster { quarticity: false }),
            ModelId::MHarq => Box::new(MvForecaster { quarticity: true }),
            ModelId::HarDrd => drd(VarianceModel::Har(HarSpec::HAR)),
            ModelId::HarlDrd => drd(VarianceModel::Har(HarSpec::HARL)),
            ModelId::HarqDrd => drd(VarianceModel::Har(HarSpec::HARQ)),
            ModelId::HarqlDrd => drd(VarianceModel::Har(HarSpec::HARQL)),
            ModelId::HarsDrd => drd(VarianceModel::StateSpace { log_target: false }),
            ModelId::HarslDrd => drd(VarianceModel::StateSpace { log_target: true }),
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelId::DEFAULT
            .iter()
            .chain([ModelId::MHarq].iter())
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown model '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestConfig {
    pub window: usize,
    pub refit_every: usize,
    pub models: Vec<ModelId>,
    pub seed: u64,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            window: 1000,
            refit_every: 30,
            models: ModelId::DEFAULT.to_vec(),
            seed: 0,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 100 {
            return Err(Error::Config(format!(
                "window must be at least 100, got {}",
                self.window
            )));
        }
        if self.refit_every == 0 {
            return Err(Error::Config("refit_every must be at least 1".into()));
        }
        if self.models.is_empty() {
            return Err(Error::Config("model list is empty".into()));
        }
        let mut seen = self.models.clone();
        seen.sort_by_key(|m| m.name());
        seen.dedup();
        if seen.len() != self.models.len() {
            return Err(Error::Config("model list contains duplicates".into()));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvBlock {
        let mut b = KvBlock::new();
        b.set("window", self.window);
        b.set("refit_every", self.refit_every);
        b.set(
            "models",
            self.models
                .iter()
                .map(|m| m.name())
                .collect::<Vec<_>>()
                .join(","),
        );
        b.set("seed", self.seed);
        b
    }
}

/// Parses a comma-separated model list.
pub fn parse_models(s: &str) -> Result<Vec<ModelId>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect()
}

/// Realized data in the layouts the models consume.
#[derive(Debug, Clone)]
pub struct PanelData {
    pub dates: Vec<String>,
    pub asset_ids: Vec<String>,
    pub mats: Vec<DMatrix<f64>>,
    vech: Vec<Vec<f64>>,
    /// Per-asset variance series.
    var_cols: Vec<Vec<f64>>,
    /// Per-asset quarticity series.
    rq_cols: Vec<Vec<f64>>,
    /// Strict-lower correlations; `None` on days with a nonpositive variance.
    corr: Vec<Option<Vec<f64>>>,
    pi: Vec<Vec<f64>>,
}

impl PanelData {
    pub fn new(cov: &CovPanel, rq: &QuartPanel) -> Result<Self> {
        if cov.dates() != rq.dates.as_slice() {
            let first = cov
                .dates()
                .iter()
                .zip(&rq.dates)
                .find(|(a, b)| a != b)
                .map(|(a, _)| a.clone());
            return Err(Error::Alignment(format!(
                "covariance and quarticity dates differ{}",
                first.map(|d| format!(" at {d}")).unwrap_or_default()
            )));
        }
        if rq.n_cols() != cov.n_assets() {
            return Err(Error::Dimension(format!(
                "{} quarticity columns for {} assets",
                rq.n_cols(),
                cov.n_assets()
            )));
        }
        let n = cov.n_assets();
        let mats = cov.matrices().to_vec();
        Ok(Self {
            dates: cov.dates().to_vec(),
            asset_ids: cov.asset_ids().to_vec(),
            vech: cov.vech_rows(),
            var_cols: (0..n)
                .map(|i| mats.iter().map(|m| m[(i, i)]).collect())
                .collect(),
            rq_cols: (0..n).map(|i| rq.column(i)).collect(),
            corr: mats
                .iter()
                .map(|m| {
                    measures::decompose_drd(m)
                        .ok()
                        .map(|d| measures::strict_lower(&d.corr))
                })
                .collect(),
            pi: rq.rows.iter().map(|r| mvmodels::pi_proxy(r)).collect(),
            mats,
        })
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn n_assets(&self) -> usize {
        self.asset_ids.len()
    }

    /// Days `start..end`; the forecast target is day `end`.
    pub fn window(&self, start: usize, end: usize) -> Window<'_> {
        assert!(start <= end && end <= self.len());
        Window {
            data: self,
            start,
            end,
        }
    }
}

/// Read-only view of days `start..end`. Nothing dated `end` or later is
/// reachable through it.
#[derive(Debug, Clone, Copy)]
pub struct Window<'a> {
    data: &'a PanelData,
    start: usize,
    end: usize,
}

impl<'a> Window<'a> {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn n_assets(&self) -> usize {
        self.data.n_assets()
    }

    pub fn vech_rows(&self) -> &'a [Vec<f64>] {
        &self.data.vech[self.start..self.end]
    }

    pub fn variances(&self, asset: usize) -> &'a [f64] {
        &self.data.var_cols[asset][self.start..self.end]
    }

    pub fn quarticities(&self, asset: usize) -> &'a [f64] {
        &self.data.rq_cols[asset][self.start..self.end]
    }

    pub fn pi_rows(&self) -> &'a [Vec<f64>] {
        &self.data.pi[self.start..self.end]
    }

    /// Correlation rows; fails if any day has a nonpositive variance.
    pub fn corr_rows(&self) -> Result<Vec<Vec<f64>>> {
        self.data.corr[self.start..self.end]
            .iter()
            .enumerate()
            .map(|(k, r)| {
                r.clone().ok_or_else(|| {
                    Error::Domain(format!(
                        "nonpositive variance on {}",
                        self.data.dates[self.start + k]
                    ))
                })
            })
            .collect()
    }

    /// The last `k` days of this window.
    pub fn tail(&self, k: usize) -> Window<'a> {
        Window {
            data: self.data,
            start: self.end.saturating_sub(k).max(self.start),
            end: self.end,
        }
    }
}

/// One day's forecast with its repair diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelForecast {
    pub matrix: DMatrix<f64>,
    /// The correlation forecast needed PSD projection.
    pub corr_projected: bool,
    /// The vech forecast needed PSD projection.
    pub mv_projected: bool,
    /// Number of variance forecasts raised to the floor.
    pub n_floored: usize,
}

/// A model that can be estimated on a window.
pub trait CovForecaster: Send + Sync {
    fn name(&self) -> String;
    fn fit(&self, window: &Window<'_>) -> Result<Box<dyn FittedForecaster>>;
}

/// Frozen parameters producing the forecast for the day after a window.
pub trait FittedForecaster: Send {
    fn forecast(&mut self, window: &Window<'_>) -> Result<ModelForecast>;
}

#[derive(Debug, Clone, Copy)]
enum VarianceModel {
    Har(HarSpec),
    StateSpace { log_target: bool },
}

struct DrdForecaster {
    variance: VarianceModel,
    name: &'static str,
}

enum VarianceFit {
    Har(HarFit),
    Ss(SsFit),
}

struct DrdFitted {
    variances: Vec<VarianceFit>,
    corr: CorrFit,
}

impl CovForecaster for DrdForecaster {
    fn name(&self) -> String {
        self.name.to_string()
    }

    fn fit(&self, w: &Window<'_>) -> Result<Box<dyn FittedForecaster>> {
        let variances = (0..w.n_assets())
            .map(|i| {
                let rv = w.variances(i);
                match self.variance {
                    VarianceModel::Har(spec) => {
                        let rq = spec.quarticity_term.then(|| w.quarticities(i));
                        unihar::fit_har(rv, rq, spec).map(VarianceFit::Har)
                    }
                    VarianceModel::StateSpace { log_target } => {
                        statespace::fit_ss(rv, log_target).map(VarianceFit::Ss)
                    }
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let corr = if w.n_assets() > 1 {
            mvmodels::fit_corr_har(&w.corr_rows()?)?
        } else {
            CorrFit {
                rbar: vec![],
                gammas: [0.0; 3],
                ols_gammas: [0.0; 3],
                std_errors: [0.0; 3],
                constrained: false,
                n_obs: 0,
            }
        };
        Ok(Box::new(DrdFitted { variances, corr }))
    }
}

impl FittedForecaster for DrdFitted {
    fn forecast(&mut self, w: &Window<'_>) -> Result<ModelForecast> {
        let recent = w.tail(BURN_IN);
        let mut n_floored = 0;
        let mut vars = Vec::with_capacity(self.variances.len());
        for (i, fit) in self.variances.iter_mut().enumerate() {
            let f = match fit {
                VarianceFit::Har(h) => {
                    let rq_last = h
                        .spec
                        .quarticity_term
                        .then(|| *recent.quarticities(i).last().unwrap());
                    unihar::forecast_har(h, recent.variances(i), rq_last, DEFAULT_VARIANCE_FLOOR)?
                }
                VarianceFit::Ss(s) => {
                    // frozen parameters, state re-filtered over the current window
                    *s = s.refilter(w.variances(i))?;
                    statespace::forecast_ss(s, recent.variances(i), DEFAULT_VARIANCE_FLOOR)?
                }
            };
            n_floored += f.floored as usize;
            vars.push(f.variance);
        }
        let (corr, corr_projected) = if vars.len() > 1 {
            let c = mvmodels::forecast_corr(&self.corr, &recent.corr_rows()?)?;
            (c.matrix, c.projected)
        } else {
            (DMatrix::identity(1, 1), false)
        };
        let matrix = mvmodels::forecast_drd(&vars, &corr)?;
        Ok(ModelForecast {
            matrix,
            corr_projected,
            mv_projected: false,
            n_floored,
        })
    }
}

struct MvForecaster {
    quarticity: bool,
}

struct MvFitted {
    fit: MvFit,
}

impl CovForecaster for MvForecaster {
    fn name(&self) -> String {
        if self.quarticity {
            ModelId::MHarq
        } else {
            ModelId::MHar
        }
        .name()
        .to_string()
    }

    fn fit(&self, w: &Window<'_>) -> Result<Box<dyn FittedForecaster>> {
        let fit = if self.quarticity {
            mvmodels::fit_mharq(w.vech_rows(), w.pi_rows())?
        } else {
            mvmodels::fit_mhar(w.vech_rows())?
        };
        Ok(Box::new(MvFitted { fit }))
    }
}

impl FittedForecaster for MvFitted {
    fn forecast(&mut self, w: &Window<'_>) -> Result<ModelForecast> {
        let recent = w.tail(BURN_IN);
        let pi_last = self
            .fit
            .alpha1q
            .map(|_| recent.pi_rows().last().unwrap().as_slice());
        let f = mvmodels::forecast_mv(&self.fit, recent.vech_rows(), pi_last)?;
        Ok(ModelForecast {
            matrix: f.matrix,
            corr_projected: false,
            mv_projected: f.projected,
            n_floored: 0,
        })
    }
}

/// Forecasts of one model over the out-of-sample days.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRun {
    pub model: String,
    /// `None` on failed days.
    pub forecasts: Vec<Option<DMatrix<f64>>>,
    pub n_failed: usize,
    pub n_fit_failures: usize,
    pub n_corr_projected: usize,
    pub n_mv_projected: usize,
    pub n_floored: usize,
    /// First error message, if any.
    pub first_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastPanel {
    /// Out-of-sample dates.
    pub dates: Vec<String>,
    pub asset_ids: Vec<String>,
    pub realized: Vec<DMatrix<f64>>,
    pub refit: Vec<bool>,
    pub runs: Vec<ModelRun>,
    pub config: BacktestConfig,
}

impl ForecastPanel {
    pub fn run(&self, model: &str) -> Option<&ModelRun> {
        self.runs.iter().find(|r| r.model == model)
    }

    /// True when every model failed on every day.
    pub fn all_failed(&self) -> bool {
        self.runs
            .iter()
            .all(|r| r.forecasts.iter().all(Option::is_none))
    }
}

fn run_model(
    f: &dyn CovForecaster,
    data: &PanelData,
    window: usize,
    refit_every: usize,
) -> ModelRun {
    let first = window;
    let mut fitted: Option<Box<dyn FittedForecaster>> = None;
    let mut run = ModelRun {
        model: f.name(),
        forecasts: Vec::with_capacity(data.len() - first),
        n_failed: 0,
        n_fit_failures: 0,
        n_corr_projected: 0,
        n_mv_projected: 0,
        n_floored: 0,
        first_error: None,
    };
    for t in first..data.len() {
        let w = data.window(t - window, t);
        if (t - first) % refit_every == 0 {
            fitted = match f.fit(&w) {
                Ok(m) => Some(m),
                Err(e) => {
                    run.n_fit_failures += 1;
                    run.first_error
                        .get_or_insert_with(|| format!("{}: fit: {e}", data.dates[t]));
                    None
                }
            };
        }
        let out = match fitted.as_mut() {
            Some(m) => m.forecast(&w).and_then(|fc| {
                let (lo, hi) = linalg::eig_range(&fc.matrix);
                if fc.matrix.iter().all(|v| v.is_finite()) && lo >= -PSD_TOL * hi.abs() {
                    Ok(fc)
                } else {
                    Err(Error::Domain(
                        "forecast is not positive semidefinite".into(),
                    ))
                }
            }),
            None => Err(Error::Initialization("no fitted parameters".into())),
        };
        match out {
            Ok(fc) => {
                run.n_corr_projected += fc.corr_projected as usize;
                run.n_mv_projected += fc.mv_projected as usize;
                run.n_floored += fc.n_floored;
                run.forecasts.push(Some(fc.matrix));
            }
            Err(e) => {
                if fitted.is_some() {
                    run.first_error
                        .get_or_insert_with(|| format!("{}: forecast: {e}", data.dates[t]));
                }
                run.n_failed += 1;
                run.forecasts.push(None);
            }
        }
    }
    run
}

fn check_lengths(n_days: usize, config: &BacktestConfig) -> Result<()> {
    config.validate()?;
    if n_days <= config.window {
        return Err(Error::Config(format!(
            "window {} leaves no out-of-sample day in a panel of {n_days} days",
            config.window
        )));
    }
    Ok(())
}

/// Runs the configured models.
pub fn run_backtest(
    cov: &CovPanel,
    rq: &QuartPanel,
    config: &BacktestConfig,
) -> Result<ForecastPanel> {
    let forecasters: Vec<Box<dyn CovForecaster>> =
        config.models.iter().map(|m| m.forecaster()).collect();
    run_backtest_custom(cov, rq, config, &forecasters)
}

/// Runs arbitrary forecasters; `config.models` is only validated and recorded.
pub fn run_backtest_custom(
    cov: &CovPanel,
    rq: &QuartPanel,
    config: &BacktestConfig,
    forecasters: &[Box<dyn CovForecaster>],
) -> Result<ForecastPanel> {
    check_lengths(cov.len(), config)?;
    let data = PanelData::new(cov, rq)?;
    let runs: Vec<ModelRun> = forecasters
        .par_iter()
        .map(|f| run_model(f.as_ref(), &data, config.window, config.refit_every))
        .collect();
    let first = config.window;
    Ok(ForecastPanel {
        dates: data.dates[first..].to_vec(),
        asset_ids: data.asset_ids.clone(),
        realized: data.mats[first..].to_vec(),
        refit: (first..data.len())
            .map(|t| (t - first) % config.refit_every == 0)
            .collect(),
        runs,
        config: config.clone(),
    })
}

/// Settings for [`evaluate`].
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub costs: Vec<f64>,
    pub gammas: Vec<f64>,
    pub base_model: String,
    pub mcs_alpha: f64,
    pub n_bootstrap: usize,
    pub block_len: Option<usize>,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            costs: vec![0.0, 0.01, 0.02],
            gammas: vec![1.0, 10.0],
            base_model: ModelId::HarqlDrd.name().to_string(),
            mcs_alpha: 0.10,
            n_bootstrap: 1000,
            block_len: None,
            seed: 0,
        }
    }
}

pub const SAMPLES: [&str; 3] = ["full", "low-q", "high-q"];
pub const LOSSES: [&str; 2] = ["frobenius", "qlike"];

/// One (model, sample) row of the statistical report.
#[derive(Debug, Clone, PartialEq)]
pub struct StatRow {
    pub model: String,
    pub sample: String,
    pub frobenius: Option<f64>,
    pub qlike: Option<f64>,
    pub in_mcs_frobenius: bool,
    pub in_mcs_qlike: bool,
    pub n_excluded_days: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmRow {
    pub loss: String,
    pub sample: String,
    pub model_a: String,
    pub model_b: String,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McsRow {
    pub loss: String,
    pub sample: String,
    pub model: String,
    pub p_value: f64,
    pub in_mcs: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub stats: Vec<StatRow>,
    pub dm: Vec<DmRow>,
    pub mcs: Vec<McsRow>,
    pub econ: Vec<EconSummary>,
    pub config: EvalConfig,
}

/// Minimum common days for a DM test.
const DM_MIN_DAYS: usize = 30;
/// Minimum common days for an MCS.
const MCS_MIN_DAYS: usize = 50;

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| linalg::compensated_sum(v.iter().copied()) / v.len() as f64)
}

fn seed_for(seed: u64, name: &str) -> u64 {
    rng::substream(seed, name, 0).next_u64()
}

/// Statistical and economic evaluation of a forecast panel. `rq` and
/// `returns` (percent) must cover every out-of-sample date.
pub fn evaluate(
    panel: &ForecastPanel,
    rq: &QuartPanel,
    returns: &DatedPanel,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let rq_oos = align(rq, &panel.dates, "quarticity")?;
    let ret_oos = align(returns, &panel.dates, "returns")?;
    if rq_oos.n_cols() != panel.asset_ids.len() || ret_oos.n_cols() != panel.asset_ids.len() {
        return Err(Error::Dimension(
            "evaluation inputs have a different number of assets".into(),
        ));
    }
    let rq_oos = QuartPanel::new(rq_oos)?;

    let losses: Vec<LossSeries> = panel
        .runs
        .par_iter()
        .map(|r| {
            LossSeries::compute(&r.model, &panel.dates, &panel.realized, &r.forecasts)
                .map_err(|e| Error::Domain(format!("{}: {e}", r.model)))
        })
        .collect::<Result<_>>()?;

    let n_days = panel.dates.len();
    let (low, high) = statloss::quarticity_split(&statloss::quarticity_scores(&rq_oos));
    let all: Vec<usize> = (0..n_days).collect();
    let samples: [(&str, &[usize]); 3] = [("full", &all), ("low-q", &low), ("high-q", &high)];

    let mut stats = Vec::new();
    let mut dm = Vec::new();
    let mut mcs_rows = Vec::new();
    for (sample, days) in samples {
        let mut in_mcs: HashMap<(&str, usize), bool> = HashMap::new();
        for loss in LOSSES {
            let pick = |l: &LossSeries, d: usize| {
                if loss == "frobenius" {
                    l.frobenius[d]
                } else {
                    l.qlike[d]
                }
            };
            let common: Vec<usize> = days
                .iter()
                .copied()
                .filter(|&d| losses.iter().all(|l| pick(l, d).is_some()))
                .collect();
            let cols: Vec<Vec<f64>> = losses
                .iter()
                .map(|l| common.iter().map(|&d| pick(l, d).unwrap()).collect())
                .collect();
            let k = losses.len();
            if k >= 2 && common.len() >= DM_MIN_DAYS {
                for a in 0..k {
                    for b in 0..k {
                        if a == b {
                            continue;
                        }
                        let r = statloss::dm_test(&cols[a], &cols[b])?;
                        dm.push(DmRow {
                            loss: loss.into(),
                            sample: sample.into(),
                            model_a: losses[a].model_id.clone(),
                            model_b: losses[b].model_id.clone(),
                            statistic: r.statistic,
                            p_value: r.p_value,
                        });
                    }
                }
            }
            if k == 1 {
                in_mcs.insert((loss, 0), true);
            } else if common.len() >= MCS_MIN_DAYS {
                let m = DMatrix::from_fn(common.len(), k, |i, j| cols[j][i]);
                let res = statloss::mcs(
                    &m,
                    McsConfig {
                        alpha: cfg.mcs_alpha,
                        n_bootstrap: cfg.n_bootstrap,
                        block_len: cfg.block_len,
                        seed: seed_for(cfg.seed, &format!("mcs/{loss}/{sample}")),
                    },
                )?;
                for j in 0..k {
                    let inside = res.surviving_models.contains(&j);
                    in_mcs.insert((loss, j), inside);
                    mcs_rows.push(McsRow {
                        loss: loss.into(),
                        sample: sample.into(),
                        model: losses[j].model_id.clone(),
                        p_value: res.p_values[j],
                        in_mcs: inside,
                    });
                }
            }
        }
        for (j, l) in losses.iter().enumerate() {
            let fro: Vec<f64> = days.iter().filter_map(|&d| l.frobenius[d]).collect();
            let ql: Vec<f64> = days.iter().filter_map(|&d| l.qlike[d]).collect();
            stats.push(StatRow {
                model: l.model_id.clone(),
                sample: sample.into(),
                frobenius: mean(&fro),
                qlike: mean(&ql),
                in_mcs_frobenius: in_mcs.get(&("frobenius", j)).copied().unwrap_or(false),
                in_mcs_qlike: in_mcs.get(&("qlike", j)).copied().unwrap_or(false),
                n_excluded_days: days.len() - ql.len().min(fro.len()),
            });
        }
    }

    let tracks: Vec<Vec<(String, PortfolioTrack)>> = [false, true]
        .par_iter()
        .map(|&long_only| {
            panel
                .runs
                .iter()
                .map(|r| {
                    econ::track_portfolio(&r.forecasts, &ret_oos.rows, long_only, 0.0)
                        .map(|t| (r.model.clone(), t))
                        .map_err(|e| Error::Domain(format!("{}: {e}", r.model)))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut econ_rows = Vec::new();
    for t in &tracks {
        econ_rows.extend(econ::econ_summaries(
            t,
            &cfg.costs,
            &cfg.gammas,
            Some(&cfg.base_model),
        )?);
    }

    Ok(EvalReport {
        stats,
        dm,
        mcs: mcs_rows,
        econ: econ_rows,
        config: cfg.clone(),
    })
}

/// Rows of `panel` on `dates`, in that order.
fn align(panel: &DatedPanel, dates: &[String], what: &str) -> Result<DatedPanel> {
    let index: HashMap<&str, usize> = panel
        .dates
        .iter()
        .enumerate()
        .map(|(i, d)| (d.as_str(), i))
        .collect();
    let mut rows = Vec::with_capacity(dates.len());
    for d in dates {
        match index.get(d.as_str()) {
            Some(&i) => rows.push(panel.rows[i].clone()),
            None => return Err(Error::Alignment(format!("{what} panel has no row for {d}"))),
        }
    }
    DatedPanel::new(dates.to_vec(), panel.columns.clone(), rows)
}

/// Mean Frobenius loss per model over the days where every model has a
/// forecast.
pub fn mean_frobenius(panel: &ForecastPanel) -> Result<Vec<(String, f64)>> {
    let n = panel.dates.len();
    let common: Vec<usize> = (0..n)
        .filter(|&d| panel.runs.iter().all(|r| r.forecasts[d].is_some()))
        .collect();
    panel
        .runs
        .iter()
        .map(|r| {
            let l: Vec<f64> = common
                .iter()
                .map(|&d| {
                    statloss::frobenius_loss(&panel.realized[d], r.forecasts[d].as_ref().unwrap())
                })
                .collect::<Result<_>>()?;
            Ok((r.model.clone(), mean(&l).unwrap_or(f64::NAN)))
        })
        .collect()
}
