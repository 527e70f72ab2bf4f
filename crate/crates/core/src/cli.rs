//! `harcov` command line: `simulate`, `clean`, `backtest`, `evaluate`.
//!
//! Settings come from an optional `key = value` file (see [`crate::kv`])
//! with one `[section]` per command and top-level `seed`/`threads`; flags
//! override the file. Unknown keys and sections are rejected. A manifest
//! written by a previous run (it carries a top-level `format` key) is also
//! accepted as a config file; only its command section is read.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 I/O error,
//! 4 every model failed on every window.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use crate::backtest::{self, BacktestConfig, EvalConfig};
use crate::error::{Error, Result};
use crate::io;
use crate::kv::{KvBlock, KvDocument};
use crate::measures::{self, DatedPanel, OutlierSource, QuartPanel};
use crate::synth::{self, SynthConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_ALL_FAILED: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "harcov",
    version,
    about = "HAR-family realized covariance forecasting and evaluation"
)]
pub struct Cli {
    #[command(flatten)]
    pub shared: Shared,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Shared {
    /// Configuration file (`key = value`, `[section]` per command).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate intraday data and write realized panels plus the true covariances.
    Simulate(SimulateArgs),
    /// Replace outlier days by the previous day.
    Clean(CleanArgs),
    /// Rolling-window one-step-ahead forecasts.
    Backtest(BacktestArgs),
    /// Statistical and economic evaluation of a forecast directory.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args, Default)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n_assets: Option<usize>,
    #[arg(long)]
    pub n_days: Option<usize>,
    #[arg(long)]
    pub intraday_count: Option<usize>,
    #[arg(long)]
    pub sigma_v: Option<f64>,
    #[arg(long)]
    pub coupling: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct CleanArgs {
    #[arg(long)]
    pub cov: Option<PathBuf>,
    #[arg(long)]
    pub quart: Option<PathBuf>,
    /// Threshold in standard deviations (default 20).
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct BacktestArgs {
    #[arg(long)]
    pub cov: Option<PathBuf>,
    #[arg(long)]
    pub quart: Option<PathBuf>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub refit_every: Option<usize>,
    /// Comma-separated model names, e.g. `M-HAR,HARQL-DRD`.
    #[arg(long)]
    pub models: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct EvaluateArgs {
    /// Directory written by `backtest`.
    #[arg(long)]
    pub forecasts: Option<PathBuf>,
    #[arg(long)]
    pub quart: Option<PathBuf>,
    /// Daily asset returns in percent.
    #[arg(long)]
    pub returns: Option<PathBuf>,
    #[arg(long)]
    pub base_model: Option<String>,
    #[arg(long)]
    pub n_bootstrap: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
}

const SIM_KEYS: &[&str] = &[
    "n_assets",
    "n_days",
    "intraday_count",
    "b0",
    "b1",
    "b2",
    "b3",
    "sigma_v",
    "rho",
    "kappa",
    "corr_noise",
    "corr_dof",
    "coupling",
    "burn_in",
    "start_date",
    "seed",
];
const CLEAN_KEYS: &[&str] = &["cov", "quart", "threshold"];
const BACKTEST_KEYS: &[&str] = &["cov", "quart", "window", "refit_every", "models", "seed"];
const EVAL_KEYS: &[&str] = &[
    "forecasts",
    "quart",
    "returns",
    "base_model",
    "costs",
    "gammas",
    "alpha",
    "n_bootstrap",
    "block_len",
    "seed",
];
const TOP_KEYS: &[&str] = &["seed", "threads"];

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn section_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Simulate(_) => "simulate",
        Command::Clean(_) => "clean",
        Command::Backtest(_) => "backtest",
        Command::Evaluate(_) => "evaluate",
    }
}

/// Resolved settings: the command's section and the top-level block.
struct Settings {
    section: KvBlock,
    top: KvBlock,
}

fn load_settings(path: Option<&Path>, cmd: &str) -> Result<Settings> {
    let Some(path) = path else {
        return Ok(Settings {
            section: KvBlock::new(),
            top: KvBlock::new(),
        });
    };
    let text =
        fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let doc =
        KvDocument::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let top = doc.section("").cloned().unwrap_or_default();
    let is_manifest = top.get("format").is_some();
    if !is_manifest {
        top.reject_unknown(TOP_KEYS)?;
        for name in doc.sections.keys() {
            if !name.is_empty()
                && !["simulate", "clean", "backtest", "evaluate"].contains(&name.as_str())
            {
                return Err(Error::Config(format!("unknown section [{name}]")));
            }
        }
    }
    let section = doc.section(cmd).cloned().unwrap_or_default();
    let allowed = match cmd {
        "simulate" => SIM_KEYS,
        "clean" => CLEAN_KEYS,
        "backtest" => BACKTEST_KEYS,
        _ => EVAL_KEYS,
    };
    section
        .reject_unknown(allowed)
        .map_err(|e| Error::Config(format!("[{cmd}] {e}")))?;
    let top = if is_manifest { KvBlock::new() } else { top };
    Ok(Settings { section, top })
}

fn cfg_err(e: Error) -> Error {
    match e {
        Error::Parse(m) => Error::Config(m),
        other => other,
    }
}

impl Settings {
    fn get<T: std::str::FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.section.parse_opt(key).map_err(cfg_err)
    }

    fn path(&self, key: &str, flag: &Option<PathBuf>) -> Result<PathBuf> {
        flag.clone()
            .or_else(|| self.section.get(key).map(PathBuf::from))
            .ok_or_else(|| {
                Error::Config(format!(
                    "missing input `{key}` (flag --{key} or config key)"
                ))
            })
    }

    fn seed(&self, flag: Option<u64>) -> Result<u64> {
        if let Some(s) = flag {
            return Ok(s);
        }
        if let Some(s) = self.section.parse_opt("seed").map_err(cfg_err)? {
            return Ok(s);
        }
        Ok(self.top.parse_opt("seed").map_err(cfg_err)?.unwrap_or(0))
    }
}

fn require_file(p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::Io(format!(
            "input file {} does not exist",
            p.display()
        )))
    }
}

fn prepare_out_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| {
        Error::Io(format!(
            "cannot create output directory {}: {e}",
            p.display()
        ))
    })
}

fn execute(cli: &Cli) -> Result<i32> {
    let cmd = section_name(&cli.command);
    let settings = load_settings(cli.shared.config.as_deref(), cmd)?;
    let threads = match cli.shared.threads {
        Some(t) => Some(t),
        None => settings.top.parse_opt("threads").map_err(cfg_err)?,
    };
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        // a pool may already exist when called repeatedly in-process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
    let out_dir = cli
        .shared
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("."));
    let seed = settings.seed(cli.shared.seed)?;
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, &settings, seed, &out_dir),
        Command::Clean(a) => cmd_clean(a, &settings, &out_dir),
        Command::Backtest(a) => cmd_backtest(a, &settings, seed, &out_dir),
        Command::Evaluate(a) => cmd_evaluate(a, &settings, seed, &out_dir),
    }
}

fn cmd_simulate(a: &SimulateArgs, s: &Settings, seed: u64, out: &Path) -> Result<i32> {
    let d = SynthConfig::default();
    let mut cfg = SynthConfig {
        n_assets: s.get("n_assets", a.n_assets)?.unwrap_or(d.n_assets),
        n_days: s.get("n_days", a.n_days)?.unwrap_or(d.n_days),
        intraday_count: s
            .get("intraday_count", a.intraday_count)?
            .unwrap_or(d.intraday_count),
        sigma_v: s.get("sigma_v", a.sigma_v)?.unwrap_or(d.sigma_v),
        coupling: s.get("coupling", a.coupling)?.unwrap_or(d.coupling),
        rho: s.get("rho", None)?.unwrap_or(d.rho),
        kappa: s.get("kappa", None)?.unwrap_or(d.kappa),
        corr_noise: s.get("corr_noise", None)?.unwrap_or(d.corr_noise),
        corr_dof: s.get("corr_dof", None)?.unwrap_or(d.corr_dof),
        burn_in: s.get("burn_in", None)?.unwrap_or(d.burn_in),
        start_date: match s.section.get("start_date") {
            Some(v) => NaiveDate::parse_from_str(v, "%Y-%m-%d")
                .map_err(|_| Error::Config(format!("start_date '{v}' is not YYYY-MM-DD")))?,
            None => d.start_date,
        },
        seed,
        ..d
    };
    for (i, key) in ["b0", "b1", "b2", "b3"].iter().enumerate() {
        if let Some(v) = s.get(key, None)? {
            cfg.har[i] = v;
        }
    }
    cfg.validate()?;
    prepare_out_dir(out)?;

    let sim = synth::simulate(&cfg)?;
    io::write_cov_panel(&out.join("cov.csv"), &sim.cov)?;
    io::write_panel(&out.join("vol.csv"), &sim.vol)?;
    io::write_panel(&out.join("quart.csv"), &sim.quart)?;
    io::write_panel(&out.join("returns.csv"), &sim.daily_returns)?;
    io::write_matrix_panel(
        &out.join("truth").join("cov_true.csv"),
        &sim.dates,
        &sim.truth,
    )?;
    let mut text = String::from("format = harcov-simulation-1\n");
    text.push_str(&format!(
        "code_version = {}\n\n[simulate]\n",
        env!("CARGO_PKG_VERSION")
    ));
    text.push_str(&cfg.to_kv().render());
    fs::write(out.join("manifest.txt"), text)?;
    Ok(EXIT_OK)
}

fn load_inputs(cov: &Path, quart: &Path) -> Result<(measures::CovPanel, QuartPanel)> {
    let c = io::read_cov_panel(cov)?;
    let q = QuartPanel::new(io::read_panel(quart)?)?;
    if c.is_empty() {
        return Err(Error::Config(format!("{} has no rows", cov.display())));
    }
    Ok((c, q))
}

fn cmd_clean(a: &CleanArgs, s: &Settings, out: &Path) -> Result<i32> {
    let cov_path = s.path("cov", &a.cov)?;
    let quart_path = s.path("quart", &a.quart)?;
    let threshold = s.get("threshold", a.threshold)?.unwrap_or(20.0);
    if !(threshold > 0.0) {
        return Err(Error::Config(format!(
            "threshold must be positive, got {threshold}"
        )));
    }
    require_file(&cov_path)?;
    require_file(&quart_path)?;
    prepare_out_dir(out)?;

    let (cov, quart) = load_inputs(&cov_path, &quart_path)?;
    let (c, q, report) = measures::clean_outliers(&cov, &quart, threshold)?;
    io::write_cov_panel(&out.join("cov_clean.csv"), &c)?;
    io::write_panel(&out.join("quart_clean.csv"), &q)?;

    let mut w = csv::Writer::from_path(out.join("outliers.csv"))?;
    w.write_record(["date", "rule", "source", "element", "z_score", "replaced"])?;
    for h in &report.hits {
        w.write_record([
            cov.dates()[h.day].clone(),
            format!("{threshold:?}"),
            match h.source {
                OutlierSource::Covariance => "covariance".into(),
                OutlierSource::Quarticity => "quarticity".to_string(),
            },
            h.element.clone(),
            format!("{:?}", h.z_score),
            if h.day > 0 { "1" } else { "0" }.into(),
        ])?;
    }
    w.flush()?;
    eprintln!(
        "flagged {} day(s), replaced {}",
        report.flagged_dates.len(),
        report.n_replaced
    );
    Ok(EXIT_OK)
}

fn cmd_backtest(a: &BacktestArgs, s: &Settings, seed: u64, out: &Path) -> Result<i32> {
    let cov_path = s.path("cov", &a.cov)?;
    let quart_path = s.path("quart", &a.quart)?;
    let d = BacktestConfig::default();
    let models = match a
        .models
        .clone()
        .or_else(|| s.section.get("models").map(str::to_string))
    {
        Some(m) => backtest::parse_models(&m)?,
        None => d.models,
    };
    let cfg = BacktestConfig {
        window: s.get("window", a.window)?.unwrap_or(d.window),
        refit_every: s
            .get("refit_every", a.refit_every)?
            .unwrap_or(d.refit_every),
        models,
        seed,
    };
    cfg.validate()?;
    require_file(&cov_path)?;
    require_file(&quart_path)?;
    prepare_out_dir(out)?;

    let (cov, quart) = load_inputs(&cov_path, &quart_path)?;
    let panel = backtest::run_backtest(&cov, &quart, &cfg)?;
    let mut input = KvBlock::new();
    input.set("cov", cov_path.display());
    input.set("quart", quart_path.display());
    io::write_forecast_dir(out, &panel, &input)?;
    for r in &panel.runs {
        if r.n_failed > 0 {
            eprintln!("{}: {} failed day(s)", r.model, r.n_failed);
        }
    }
    Ok(if panel.all_failed() {
        EXIT_ALL_FAILED
    } else {
        EXIT_OK
    })
}

fn parse_list(s: &str, key: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad value in `{key}`: {p}")))
        })
        .collect()
}

fn cmd_evaluate(a: &EvaluateArgs, s: &Settings, seed: u64, out: &Path) -> Result<i32> {
    let dir = s.path("forecasts", &a.forecasts)?;
    let quart_path = s.path("quart", &a.quart)?;
    let returns_path = s.path("returns", &a.returns)?;
    let d = EvalConfig::default();
    let cfg = EvalConfig {
        costs: s
            .section
            .get("costs")
            .map(|v| parse_list(v, "costs"))
            .transpose()?
            .unwrap_or(d.costs),
        gammas: s
            .section
            .get("gammas")
            .map(|v| parse_list(v, "gammas"))
            .transpose()?
            .unwrap_or(d.gammas),
        base_model: a
            .base_model
            .clone()
            .or_else(|| s.section.get("base_model").map(str::to_string))
            .unwrap_or(d.base_model),
        mcs_alpha: s.get("alpha", a.alpha)?.unwrap_or(d.mcs_alpha),
        n_bootstrap: s
            .get("n_bootstrap", a.n_bootstrap)?
            .unwrap_or(d.n_bootstrap),
        block_len: s.get("block_len", None)?,
        seed,
    };
    if !(cfg.mcs_alpha > 0.0 && cfg.mcs_alpha < 1.0) {
        return Err(Error::Config(format!(
            "alpha must lie in (0, 1), got {}",
            cfg.mcs_alpha
        )));
    }
    if cfg.n_bootstrap < 100 {
        return Err(Error::Config(format!(
            "n_bootstrap must be at least 100, got {}",
            cfg.n_bootstrap
        )));
    }
    if !dir.join("manifest.txt").is_file() {
        return Err(Error::Io(format!(
            "{} is not a forecast directory",
            dir.display()
        )));
    }
    require_file(&quart_path)?;
    require_file(&returns_path)?;
    prepare_out_dir(out)?;

    let panel = io::read_forecast_dir(&dir)?;
    let quart = QuartPanel::new(io::read_panel(&quart_path)?)?;
    let returns: DatedPanel = io::read_panel(&returns_path)?;
    let report = backtest::evaluate(&panel, &quart, &returns, &cfg)?;
    io::write_eval_report(out, &report)?;
    Ok(EXIT_OK)
}
