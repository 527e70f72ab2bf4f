//! HAR, HARL, HARQ and HARQL regressions for a single realized-variance series.
//!
//! All four share the daily / weekly / monthly lag structure (1, 5, 20).
//! The log variants model `log RV`; the Q variants add a quarticity
//! interaction on the daily lag that lets persistence fall when the previous
//! day's measurement error is large.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kv::KvBlock;
use crate::linalg;
use crate::measures::{trailing_mean, BURN_IN};

/// Lag horizons of the daily, weekly and monthly components.
pub const HAR_LAGS: [usize; 3] = [1, 5, 20];

/// Lower bound applied to level forecasts (percent²).
pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HarSpec {
    pub log_target: bool,
    pub quarticity_term: bool,
}

impl HarSpec {
    pub const HAR: HarSpec = HarSpec {
        log_target: false,
        quarticity_term: false,
    };
    pub const HARL: HarSpec = HarSpec {
        log_target: true,
        quarticity_term: false,
    };
    pub const HARQ: HarSpec = HarSpec {
        log_target: false,
        quarticity_term: true,
    };
    pub const HARQL: HarSpec = HarSpec {
        log_target: true,
        quarticity_term: true,
    };

    pub fn name(&self) -> &'static str {
        match (self.log_target, self.quarticity_term) {
            (false, false) => "HAR",
            (true, false) => "HARL",
            (false, true) => "HARQ",
            (true, true) => "HARQL",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "HAR" => Some(Self::HAR),
            "HARL" => Some(Self::HARL),
            "HARQ" => Some(Self::HARQ),
            "HARQL" => Some(Self::HARQL),
            _ => None,
        }
    }

    pub fn lags(&self) -> [usize; 3] {
        HAR_LAGS
    }

    fn column_names(&self) -> Vec<&'static str> {
        let mut names = vec!["const", "lag1", "lag5", "lag20"];
        if self.quarticity_term {
            names.push("rq_interaction");
        }
        names
    }
}

/// Estimated HAR-family regression.
#[derive(Debug, Clone, PartialEq)]
pub struct HarFit {
    /// (β₀, β₁, β₂, β₃): intercept, daily, weekly, monthly.
    pub beta: [f64; 4],
    /// Quarticity interaction γ; `Some` iff the spec has the term.
    pub gamma_q: Option<f64>,
    /// True when the interaction column was identically zero and dropped (γ = 0).
    pub quarticity_dropped: bool,
    pub sigma_eps: f64,
    /// Standard errors for β (and γ last, when estimated).
    pub std_errors: Vec<f64>,
    pub spec: HarSpec,
    pub n_obs: usize,
}

fn transform(rv: &[f64], log_target: bool) -> Result<Vec<f64>> {
    if !log_target {
        return Ok(rv.to_vec());
    }
    rv.iter()
        .enumerate()
        .map(|(t, v)| {
            if *v > 0.0 && v.is_finite() {
                Ok(v.ln())
            } else {
                Err(Error::Domain(format!(
                    "log of nonpositive realized variance {v} at position {t}"
                )))
            }
        })
        .collect()
}

fn quarticity_regressor(spec: HarSpec, rv_prev: f64, g_prev: f64, rq_prev: f64) -> f64 {
    let root = rq_prev.sqrt();
    if spec.log_target {
        root / rv_prev * g_prev
    } else {
        root * rv_prev
    }
}

fn check_inputs(rv: &[f64], rq: Option<&[f64]>, spec: HarSpec) -> Result<()> {
    if rv.len() <= BURN_IN {
        return Err(Error::InsufficientHistory {
            needed: BURN_IN,
            got: rv.len(),
        });
    }
    match (spec.quarticity_term, rq) {
        (true, None) => Err(Error::Argument(format!(
            "{} requires a quarticity series",
            spec.name()
        ))),
        (false, Some(_)) => Err(Error::Argument(format!(
            "{} takes no quarticity series",
            spec.name()
        ))),
        (true, Some(q)) if q.len() != rv.len() => Err(Error::Dimension(format!(
            "{} quarticities for {} variances",
            q.len(),
            rv.len()
        ))),
        (true, Some(q)) if q.iter().any(|v| !(*v >= 0.0)) => {
            Err(Error::Domain("negative realized quarticity".into()))
        }
        _ => Ok(()),
    }
}

/// Regressors and response for rows `t = 20 … T−1` (0-based).
///
/// Columns: `[1, lag1, lag5-mean, lag20-mean]` of the (possibly logged)
/// series, plus `RQ_{t−1}^{1/2}·RV_{t−1}` (HARQ) or
/// `(RQ_{t−1}^{1/2}/RV_{t−1})·log RV_{t−1}` (HARQL).
pub fn build_design(
    rv: &[f64],
    rq: Option<&[f64]>,
    spec: HarSpec,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    check_inputs(rv, rq, spec)?;
    let g = transform(rv, spec.log_target)?;
    let n = rv.len() - BURN_IN;
    let k = if spec.quarticity_term { 5 } else { 4 };
    let mut x = DMatrix::zeros(n, k);
    let mut y = DVector::zeros(n);
    for (row, t) in (BURN_IN..rv.len()).enumerate() {
        let hist = &g[..t];
        y[row] = g[t];
        x[(row, 0)] = 1.0;
        x[(row, 1)] = g[t - 1];
        x[(row, 2)] = trailing_mean(hist, 5);
        x[(row, 3)] = trailing_mean(hist, 20);
        if let Some(q) = rq {
            x[(row, 4)] = quarticity_regressor(spec, rv[t - 1], g[t - 1], q[t - 1]);
        }
    }
    Ok((x, y))
}

/// OLS fit of the chosen HAR variant.
pub fn fit_har(rv: &[f64], rq: Option<&[f64]>, spec: HarSpec) -> Result<HarFit> {
    let (mut x, y) = build_design(rv, rq, spec)?;
    let mut names = spec.column_names();

    let quarticity_dropped = spec.quarticity_term && x.column(4).iter().all(|v| *v == 0.0);
    if quarticity_dropped {
        x = x.remove_column(4);
        names.pop();
    }

    let fit = linalg::ols(&x, &y, &names)?;
    let beta = [fit.coef[0], fit.coef[1], fit.coef[2], fit.coef[3]];
    let gamma_q = match (spec.quarticity_term, quarticity_dropped) {
        (false, _) => None,
        (true, true) => Some(0.0),
        (true, false) => Some(fit.coef[4]),
    };
    Ok(HarFit {
        beta,
        gamma_q,
        quarticity_dropped,
        sigma_eps: fit.sigma,
        std_errors: fit.std_errors.iter().copied().collect(),
        spec,
        n_obs: fit.n_obs,
    })
}

/// A one-step variance forecast together with its linear predictor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceForecast {
    /// Forecast of next-day realized variance, percent².
    pub variance: f64,
    /// Linear prediction on the model scale (log scale for log targets).
    pub linear: f64,
    /// True when a level forecast fell below the floor and was raised to it.
    pub floored: bool,
}

/// Regressor row for the day after `recent` ends.
pub(crate) fn next_row(g: &[f64]) -> [f64; 4] {
    [
        1.0,
        g[g.len() - 1],
        trailing_mean(g, 5),
        trailing_mean(g, 20),
    ]
}

/// Next-day forecast from the trailing history `recent` (at least 20 values,
/// only the last 20 are used). Log models return `exp(μ̂ + σ_ε²/2)`; level
/// models return μ̂ raised to `floor` if necessary.
pub fn forecast_har(
    fit: &HarFit,
    recent: &[f64],
    rq_last: Option<f64>,
    floor: f64,
) -> Result<VarianceForecast> {
    if recent.len() < BURN_IN {
        return Err(Error::InsufficientHistory {
            needed: BURN_IN,
            got: recent.len(),
        });
    }
    let recent = &recent[recent.len() - BURN_IN..];
    let g = transform(recent, fit.spec.log_target)?;
    let row = next_row(&g);
    let mut mu: f64 = row.iter().zip(&fit.beta).map(|(a, b)| a * b).sum();
    if fit.spec.quarticity_term {
        let rq = rq_last.ok_or_else(|| {
            Error::Argument(format!(
                "{} forecast needs the last quarticity",
                fit.spec.name()
            ))
        })?;
        if !(rq >= 0.0) {
            return Err(Error::Domain(format!("negative realized quarticity {rq}")));
        }
        let last = recent[recent.len() - 1];
        mu += fit.gamma_q.unwrap_or(0.0) * quarticity_regressor(fit.spec, last, g[g.len() - 1], rq);
    }
    Ok(finish_forecast(
        mu,
        fit.sigma_eps * fit.sigma_eps,
        fit.spec.log_target,
        floor,
    ))
}

pub(crate) fn finish_forecast(
    mu: f64,
    pred_var: f64,
    log_target: bool,
    floor: f64,
) -> VarianceForecast {
    if log_target {
        VarianceForecast {
            variance: (mu + 0.5 * pred_var).exp(),
            linear: mu,
            floored: false,
        }
    } else if mu < floor || mu.is_nan() {
        VarianceForecast {
            variance: floor,
            linear: mu,
            floored: true,
        }
    } else {
        VarianceForecast {
            variance: mu,
            linear: mu,
            floored: false,
        }
    }
}

impl HarFit {
    /// Serialises to a `key = value` block.
    pub fn to_kv(&self) -> KvBlock {
        let mut b = KvBlock::new();
        b.set("model", self.spec.name());
        for (i, v) in self.beta.iter().enumerate() {
            b.set(&format!("beta{i}"), v);
        }
        if let Some(g) = self.gamma_q {
            b.set("gamma_q", g);
            b.set("quarticity_dropped", self.quarticity_dropped);
        }
        b.set("sigma_eps", self.sigma_eps);
        b.set("n_obs", self.n_obs);
        let se: Vec<String> = self.std_errors.iter().map(|v| v.to_string()).collect();
        b.set("std_errors", se.join(","));
        b
    }

    pub fn from_kv(b: &KvBlock) -> Result<Self> {
        let model = b.require("model")?;
        let spec = HarSpec::from_name(model)
            .ok_or_else(|| Error::Parse(format!("unknown model `{model}`")))?;
        let beta = [
            b.parse("beta0")?,
            b.parse("beta1")?,
            b.parse("beta2")?,
            b.parse("beta3")?,
        ];
        let gamma_q = if spec.quarticity_term {
            Some(b.parse("gamma_q")?)
        } else {
            None
        };
        let std_errors = b
            .require("std_errors")?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad standard error `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(HarFit {
            beta,
            gamma_q,
            quarticity_dropped: b.parse_opt("quarticity_dropped")?.unwrap_or(false),
            sigma_eps: b.parse("sigma_eps")?,
            std_errors,
            spec,
            n_obs: b.parse("n_obs")?,
        })
    }
}
