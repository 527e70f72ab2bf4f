//! CSV persistence for panels, forecast directories and reports.
//!
//! Panels are `date,<col>...` with ISO dates. Covariance panels hold vech
//! rows under `v_<i>_<j>` (1-based, i ≥ j); asset ids live in a sidecar
//! `<file>.assets` line when they are not the default `A1…AN`. Missing
//! forecast values are written as `NA`.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::backtest::{BacktestConfig, EvalReport, ForecastPanel, ModelRun};
use crate::error::{Error, Result};
use crate::kv::{KvBlock, KvDocument};
use crate::measures::{self, CovPanel, DatedPanel};

/// Shortest representation that parses back to the same `f64`.
fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_else(|| "NA".into())
}

fn parse_f64(s: &str, path: &Path, line: usize) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("{}:{line}: '{s}' is not a number", path.display())))
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(csv::WriterBuilder::new().from_path(path)?)
}

pub fn write_panel(path: &Path, panel: &DatedPanel) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(std::iter::once("date").chain(panel.columns.iter().map(String::as_str)))?;
    for (d, row) in panel.dates.iter().zip(&panel.rows) {
        w.write_record(std::iter::once(d.clone()).chain(row.iter().map(|v| fmt_f64(*v))))?;
    }
    w.flush()?;
    Ok(())
}

/// Raw table: header columns after `date`, dates, rows with `NA` as `None`.
type RawTable = (Vec<String>, Vec<String>, Vec<Vec<Option<f64>>>);

fn read_raw(path: &Path) -> Result<RawTable> {
    let mut r = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let header = r.headers()?.clone();
    if header.get(0).map(str::trim) != Some("date") {
        return Err(Error::Parse(format!(
            "{}: first column must be 'date'",
            path.display()
        )));
    }
    let columns: Vec<String> = header
        .iter()
        .skip(1)
        .map(|s| s.trim().to_string())
        .collect();
    let mut dates = Vec::new();
    let mut rows = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        if rec.len() != columns.len() + 1 {
            return Err(Error::Parse(format!(
                "{}:{line}: expected {} fields",
                path.display(),
                columns.len() + 1
            )));
        }
        dates.push(rec[0].trim().to_string());
        rows.push(
            rec.iter()
                .skip(1)
                .map(|s| {
                    if s.trim() == "NA" {
                        Ok(None)
                    } else {
                        parse_f64(s, path, line).map(Some)
                    }
                })
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok((columns, dates, rows))
}

pub fn read_panel(path: &Path) -> Result<DatedPanel> {
    let (columns, dates, rows) = read_raw(path)?;
    let rows = rows
        .into_iter()
        .enumerate()
        .map(|(k, r)| {
            r.into_iter()
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| Error::Parse(format!("{}:{}: missing value", path.display(), k + 2)))
        })
        .collect::<Result<Vec<_>>>()?;
    DatedPanel::new(dates, columns, rows)
}

fn assets_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".assets");
    PathBuf::from(s)
}

fn default_ids(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("A{i}")).collect()
}

/// Checks a covariance header and returns N.
fn vech_dim(columns: &[String], path: &Path) -> Result<usize> {
    let n = measures::dim_from_vech_len(columns.len()).ok_or_else(|| {
        Error::Parse(format!(
            "{}: {} columns is not a triangular number",
            path.display(),
            columns.len()
        ))
    })?;
    for (c, (i, j)) in columns.iter().zip(measures::vech_pairs(n)) {
        let want = format!("v_{}_{}", i + 1, j + 1);
        if *c != want {
            return Err(Error::Parse(format!(
                "{}: column '{c}' where '{want}' was expected",
                path.display()
            )));
        }
    }
    Ok(n)
}

pub fn write_cov_panel(path: &Path, cov: &CovPanel) -> Result<()> {
    let panel = DatedPanel {
        dates: cov.dates().to_vec(),
        columns: cov.vech_column_names(),
        rows: cov.vech_rows(),
    };
    write_panel(path, &panel)?;
    let ids = assets_path(path);
    if cov.asset_ids() != default_ids(cov.n_assets()).as_slice() {
        fs::write(ids, cov.asset_ids().join(",") + "\n")?;
    } else if ids.exists() {
        fs::remove_file(ids)?;
    }
    Ok(())
}

pub fn read_cov_panel(path: &Path) -> Result<CovPanel> {
    let p = read_panel(path)?;
    let n = vech_dim(&p.columns, path)?;
    let ids_file = assets_path(path);
    let ids = if ids_file.exists() {
        fs::read_to_string(&ids_file)?
            .trim()
            .split(',')
            .map(|s| s.trim().to_string())
            .collect()
    } else {
        default_ids(n)
    };
    if ids.len() != n {
        return Err(Error::Parse(format!(
            "{}: {} asset ids for {n} assets",
            ids_file.display(),
            ids.len()
        )));
    }
    CovPanel::from_vech_rows(p.dates, ids, &p.rows)
}

fn write_matrices(
    path: &Path,
    dates: &[String],
    n: usize,
    mats: &[Option<DMatrix<f64>>],
) -> Result<()> {
    let mut w = writer(path)?;
    let names: Vec<String> = measures::vech_pairs(n)
        .map(|(i, j)| format!("v_{}_{}", i + 1, j + 1))
        .collect();
    w.write_record(std::iter::once("date").chain(names.iter().map(String::as_str)))?;
    for (d, m) in dates.iter().zip(mats) {
        let cells: Vec<String> = match m {
            Some(m) => measures::vech_pairs(n)
                .map(|(i, j)| fmt_f64(m[(i, j)]))
                .collect(),
            None => vec!["NA".into(); names.len()],
        };
        w.write_record(std::iter::once(d.clone()).chain(cells))?;
    }
    w.flush()?;
    Ok(())
}

fn read_matrices(path: &Path) -> Result<(Vec<String>, usize, Vec<Option<DMatrix<f64>>>)> {
    let (columns, dates, rows) = read_raw(path)?;
    let n = vech_dim(&columns, path)?;
    let mats = rows
        .into_iter()
        .map(|r| match r.into_iter().collect::<Option<Vec<f64>>>() {
            Some(v) => measures::unvech(&v).map(Some),
            None => Ok(None),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((dates, n, mats))
}

fn model_file(model: &str) -> String {
    format!("forecast_{}.csv", model.to_ascii_lowercase())
}

/// Writes `realized.csv`, one `forecast_<model>.csv` per model and `manifest.txt`.
pub fn write_forecast_dir(dir: &Path, panel: &ForecastPanel, extra: &KvBlock) -> Result<()> {
    fs::create_dir_all(dir)?;
    let n = panel.asset_ids.len();
    let realized: Vec<Option<DMatrix<f64>>> = panel.realized.iter().cloned().map(Some).collect();
    write_matrices(&dir.join("realized.csv"), &panel.dates, n, &realized)?;
    for run in &panel.runs {
        write_matrices(
            &dir.join(model_file(&run.model)),
            &panel.dates,
            n,
            &run.forecasts,
        )?;
    }

    let mut text = String::new();
    let mut head = KvBlock::new();
    head.set("format", "harcov-forecasts-1");
    head.set("code_version", env!("CARGO_PKG_VERSION"));
    head.set("assets", panel.asset_ids.join(","));
    head.set(
        "first_date",
        panel.dates.first().cloned().unwrap_or_default(),
    );
    head.set("last_date", panel.dates.last().cloned().unwrap_or_default());
    head.set("n_days", panel.dates.len());
    head.set("refit_days", panel.refit.iter().filter(|r| **r).count());
    head.set(
        "runs",
        panel
            .runs
            .iter()
            .map(|r| r.model.as_str())
            .collect::<Vec<_>>()
            .join(","),
    );
    text.push_str(&head.render());
    text.push_str("\n[backtest]\n");
    text.push_str(&panel.config.to_kv().render());
    if !extra.is_empty() {
        text.push_str("\n[input]\n");
        text.push_str(&extra.render());
    }
    for run in &panel.runs {
        let mut b = KvBlock::new();
        b.set("file", model_file(&run.model));
        b.set("n_failed", run.n_failed);
        b.set("n_fit_failures", run.n_fit_failures);
        b.set("n_corr_projected", run.n_corr_projected);
        b.set("n_mv_projected", run.n_mv_projected);
        b.set("n_floored", run.n_floored);
        if let Some(e) = &run.first_error {
            b.set("first_error", e.replace(['\n', '#'], " "));
        }
        text.push_str(&format!("\n[model {}]\n", run.model));
        text.push_str(&b.render());
    }
    fs::write(dir.join("manifest.txt"), text)?;
    Ok(())
}

pub fn read_forecast_dir(dir: &Path) -> Result<ForecastPanel> {
    let manifest = fs::read_to_string(dir.join("manifest.txt"))
        .map_err(|e| Error::Io(format!("{}: {e}", dir.join("manifest.txt").display())))?;
    let doc = KvDocument::parse(&manifest)?;
    let head = doc
        .section("")
        .ok_or_else(|| Error::Parse("manifest has no header block".into()))?;
    let bt = doc
        .section("backtest")
        .ok_or_else(|| Error::Parse("manifest has no [backtest] section".into()))?;
    let config = BacktestConfig {
        window: bt.parse("window")?,
        refit_every: bt.parse("refit_every")?,
        models: crate::backtest::parse_models(bt.require("models")?).unwrap_or_default(),
        seed: bt.parse("seed")?,
    };
    let asset_ids: Vec<String> = head
        .require("assets")?
        .split(',')
        .map(str::to_string)
        .collect();
    let (dates, n, realized) = read_matrices(&dir.join("realized.csv"))?;
    if n != asset_ids.len() {
        return Err(Error::Parse(format!(
            "realized.csv has {n} assets, manifest lists {}",
            asset_ids.len()
        )));
    }
    let realized = realized
        .into_iter()
        .map(|m| m.ok_or_else(|| Error::Parse("realized.csv has missing values".into())))
        .collect::<Result<Vec<_>>>()?;

    let mut runs = Vec::new();
    let names: Vec<&str> = head
        .require("runs")?
        .split(',')
        .filter(|s| !s.is_empty())
        .collect();
    for model in names {
        let block = doc
            .section(&format!("model {model}"))
            .ok_or_else(|| Error::Parse(format!("manifest has no section for model {model}")))?;
        let (d, n_m, forecasts) = read_matrices(&dir.join(block.require("file")?))?;
        if d != dates || n_m != n {
            return Err(Error::Alignment(format!(
                "forecasts of {model} do not match realized.csv{}",
                d.iter()
                    .zip(&dates)
                    .find(|(a, b)| a != b)
                    .map(|(a, _)| format!(" (first offending date {a})"))
                    .unwrap_or_default()
            )));
        }
        runs.push(ModelRun {
            model: model.to_string(),
            forecasts,
            n_failed: block.parse("n_failed")?,
            n_fit_failures: block.parse("n_fit_failures")?,
            n_corr_projected: block.parse("n_corr_projected")?,
            n_mv_projected: block.parse("n_mv_projected")?,
            n_floored: block.parse("n_floored")?,
            first_error: block.get("first_error").map(str::to_string),
        });
    }
    let every = config.refit_every.max(1);
    Ok(ForecastPanel {
        refit: (0..dates.len()).map(|t| t % every == 0).collect(),
        dates,
        asset_ids,
        realized,
        runs,
        config,
    })
}

fn bool01(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Writes `stats.csv`, `dm.csv`, `mcs.csv` and `econ.csv` into `dir`.
pub fn write_eval_report(dir: &Path, report: &EvalReport) -> Result<()> {
    fs::create_dir_all(dir)?;

    let mut w = writer(&dir.join("stats.csv"))?;
    w.write_record([
        "model",
        "sample",
        "frobenius",
        "qlike",
        "in_mcs_frobenius",
        "in_mcs_qlike",
        "n_excluded_days",
    ])?;
    for r in &report.stats {
        w.write_record([
            r.model.clone(),
            r.sample.clone(),
            fmt_opt(r.frobenius),
            fmt_opt(r.qlike),
            bool01(r.in_mcs_frobenius).into(),
            bool01(r.in_mcs_qlike).into(),
            r.n_excluded_days.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = writer(&dir.join("dm.csv"))?;
    w.write_record([
        "loss",
        "sample",
        "model_a",
        "model_b",
        "statistic",
        "p_value",
    ])?;
    for r in &report.dm {
        w.write_record([
            r.loss.clone(),
            r.sample.clone(),
            r.model_a.clone(),
            r.model_b.clone(),
            fmt_f64(r.statistic),
            fmt_f64(r.p_value),
        ])?;
    }
    w.flush()?;

    let mut w = writer(&dir.join("mcs.csv"))?;
    w.write_record(["loss", "sample", "model", "p_value", "in_mcs"])?;
    for r in &report.mcs {
        w.write_record([
            r.loss.clone(),
            r.sample.clone(),
            r.model.clone(),
            fmt_f64(r.p_value),
            bool01(r.in_mcs).into(),
        ])?;
    }
    w.flush()?;

    // long layout: one row per (regime, model, statistic[, cost[, gamma]])
    let mut w = writer(&dir.join("econ.csv"))?;
    w.write_record(["regime", "model", "statistic", "cost", "gamma", "value"])?;
    for e in &report.econ {
        let regime = if e.long_only {
            "long-only"
        } else {
            "short-allowed"
        };
        let mut row = |stat: &str, cost: String, gamma: String, value: String| {
            w.write_record([
                regime.to_string(),
                e.model.clone(),
                stat.to_string(),
                cost,
                gamma,
                value,
            ])
        };
        row("TO", String::new(), String::new(), fmt_f64(e.mean_turnover))?;
        row(
            "CO",
            String::new(),
            String::new(),
            fmt_f64(e.mean_concentration),
        )?;
        row("SP", String::new(), String::new(), fmt_f64(e.mean_short))?;
        row("mean", String::new(), String::new(), fmt_f64(e.ann_mean))?;
        row("std", String::new(), String::new(), fmt_f64(e.ann_std))?;
        for (c, s) in &e.sharpe {
            row("sharpe", fmt_f64(*c), String::new(), fmt_opt(*s))?;
        }
        for (c, g, d, bp) in &e.delta {
            row("delta_daily", fmt_f64(*c), fmt_f64(*g), fmt_f64(*d))?;
            row("delta_bp", fmt_f64(*c), fmt_f64(*g), fmt_f64(*bp))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes dated matrices (e.g. the simulated truth) as a vech panel.
pub fn write_matrix_panel(path: &Path, dates: &[String], mats: &[DMatrix<f64>]) -> Result<()> {
    let n = mats.first().map(|m| m.nrows()).unwrap_or(0);
    let wrapped: Vec<Option<DMatrix<f64>>> = mats.iter().cloned().map(Some).collect();
    write_matrices(path, dates, n, &wrapped)
}
