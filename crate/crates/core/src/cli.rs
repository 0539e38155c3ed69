//! File-in/file-out commands behind the `mbpm` binary.
//!
//! Each subcommand has a library counterpart that works on in-memory data
//! and returns a [`CliError`] carrying the process exit code: 2 for input
//! and parse failures, 3 for invalid configuration, 4 for numerical
//! failures.

use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::capm::{
    discount_factors, idiosyncratic_relations, price_from_xi, second_order_regime, xi_bound_positivity, xi_max_linear,
    CapmError, FactorVariant, IdiosyncraticRelations, LinearMode, PayoffStats, PriceMode, PriceStats, PricingSolution,
    RegimeReport, UtilityParams, XiBound,
};
use crate::market_moments::{aggregate, moment_report_with, MarketMoments, MomentError, WindowRecord};
use crate::price_measure::{delta_measure, fit_coefficients, invert_charfunc_numeric, Atom, GridSpec, MeasureError};
use crate::synth::{generate, PriceProcess, SynthConfig, SynthError, VolumeDist};
use crate::trade_model::{format_ticks, parse_ticks, partition, TickError, TradeTick, WindowSpec};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const THREADS_ENV: &str = "MBPM_THREADS";

pub const EXIT_PARSE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn parse(message: impl Into<String>) -> Self {
        Self { code: EXIT_PARSE, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Self { code: EXIT_NUMERIC, message: message.into() }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<TickError> for CliError {
    fn from(e: TickError) -> Self {
        match e {
            TickError::InvalidDelta(_) => Self::config(e.to_string()),
            _ => Self::parse(e.to_string()),
        }
    }
}

impl From<MomentError> for CliError {
    fn from(e: MomentError) -> Self {
        match e {
            MomentError::OrderOutOfRange { .. } => Self::config(e.to_string()),
            _ => Self::numeric(e.to_string()),
        }
    }
}

impl From<MeasureError> for CliError {
    fn from(e: MeasureError) -> Self {
        match e {
            MeasureError::NonPositiveVariance { .. } => Self::numeric(e.to_string()),
            _ => Self::config(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        Self::config(e.to_string())
    }
}

impl From<CapmError> for CliError {
    fn from(e: CapmError) -> Self {
        match e {
            CapmError::AlphaOutOfRange(_) | CapmError::InvalidParameter { .. } | CapmError::BadDistribution(_) => {
                Self::config(e.to_string())
            }
            _ => Self::numeric(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mbpm", version, about = "Market-based price moments from trade ticks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-window market and frequency moment report.
    Analyze(AnalyzeArgs),
    /// Characteristic-function fit and price measure for one window.
    Measure(MeasureArgs),
    /// Solve a consumption-pricing scenario.
    Capm(CapmArgs),
    /// Generate a synthetic tick stream.
    Synth(SynthArgs),
    /// Window statistics across several averaging intervals.
    SweepDelta(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub origin: f64,
    #[arg(long, default_value_t = 4)]
    pub max_n: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Omit the generation timestamp so reruns are byte-identical.
    #[arg(long)]
    pub no_timestamp: bool,
}

#[derive(Debug, Clone, Args)]
pub struct MeasureArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub origin: f64,
    #[arg(long)]
    pub k: usize,
    /// Window index.
    #[arg(long, allow_hyphen_values = true)]
    pub window: i64,
    #[arg(long, default_value_t = 4096)]
    pub grid_points: usize,
    /// Output stem; writes `<stem>.json` and, for k >= 2, `<stem>.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum CapmMode {
    #[value(name = "eq4_5")]
    #[serde(rename = "eq4_5")]
    Eq4_5,
    #[value(name = "eq4_6")]
    #[serde(rename = "eq4_6")]
    Eq4_6,
    #[value(name = "eq4_23")]
    #[serde(rename = "eq4_23")]
    Eq4_23,
}

#[derive(Debug, Clone, Args)]
pub struct CapmArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, value_enum)]
    pub mode: CapmMode,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub spacing: f64,
    /// `const:P`, `walk:START:VOL` or `step:BASE:AMP:PERIOD`.
    #[arg(long)]
    pub price: String,
    /// `const1`, `uniform:L1,L2,...` or `pareto:SHAPE`.
    #[arg(long)]
    pub volume: String,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub coupling: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Comma-separated window widths.
    #[arg(long)]
    pub deltas: String,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub origin: f64,
    #[arg(long, default_value_t = 4)]
    pub max_n: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Hex SHA-256 of the input bytes.
pub fn input_digest(bytes: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
}

fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::parse(format!("cannot read {}: {e}", path.display())))
}

fn parse_tick_bytes(bytes: &[u8]) -> Result<Vec<TradeTick>, CliError> {
    let text = std::str::from_utf8(bytes).map_err(|e| CliError::parse(format!("input is not UTF-8: {e}")))?;
    Ok(parse_ticks(text)?)
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::parse(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| CliError::parse(format!("cannot write {}: {e}", path.display())))?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, value)
        .map_err(|e| CliError::parse(format!("cannot write {}: {e}", path.display())))?;
    writer
        .write_all(b"\n")
        .and_then(|_| writer.flush())
        .map_err(|e| CliError::parse(format!("cannot write {}: {e}", path.display())))
}

/// Thread cap from `MBPM_THREADS`, if set.
pub fn thread_limit() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::config(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        },
    }
}

fn with_threads<R: Send>(f: impl FnOnce() -> R + Send) -> Result<R, CliError> {
    match thread_limit()? {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::config(format!("cannot start thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn window_spec(origin: f64, delta: f64) -> Result<WindowSpec, CliError> {
    WindowSpec::new(origin, delta).map_err(|_| CliError::config(format!("delta must be positive and finite, got {delta}")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyzeConfig {
    pub delta: f64,
    pub origin: f64,
    pub max_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapQuantiles {
    pub n: usize,
    pub min: f64,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    /// Windows from the first to the last occupied one, empty ones included.
    pub window_count: usize,
    pub empty_window_count: usize,
    pub negative_variance_count: usize,
    pub tick_count: usize,
    pub gap_quantiles: Vec<GapQuantiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub tool_version: String,
    pub input_digest: String,
    pub config: AnalyzeConfig,
    pub summary: RunSummary,
    /// Non-empty windows in index order.
    pub windows: Vec<WindowRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_at_unix: Option<u64>,
}

/// Nearest-rank quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

fn gap_quantiles(records: &[WindowRecord], max_n: usize) -> Vec<GapQuantiles> {
    if records.is_empty() {
        return Vec::new();
    }
    (1..=max_n)
        .map(|n| {
            let mut gaps: Vec<f64> = records.iter().map(|r| r.gaps[n - 1]).collect();
            gaps.sort_by(f64::total_cmp);
            GapQuantiles {
                n,
                min: gaps[0],
                p50: quantile(&gaps, 0.5),
                p90: quantile(&gaps, 0.9),
                p99: quantile(&gaps, 0.99),
                max: gaps[gaps.len() - 1],
            }
        })
        .collect()
}

fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Builds the per-window report from raw CSV bytes.
pub fn analyze_bytes(bytes: &[u8], config: &AnalyzeConfig, timestamp: bool) -> Result<RunReport, CliError> {
    if config.max_n == 0 {
        return Err(CliError::config("max-n must be at least 1"));
    }
    let spec = window_spec(config.origin, config.delta)?;
    let ticks = parse_tick_bytes(bytes)?;
    let windows = partition(&ticks, &spec)?;
    let max_n = config.max_n;
    let records = with_threads(|| {
        windows
            .par_iter()
            .filter(|w| !w.is_empty())
            .map(|w| moment_report_with(w, max_n, false).map(|r| r.record()))
            .collect::<Result<Vec<_>, _>>()
    })??;
    let summary = RunSummary {
        window_count: windows.len(),
        empty_window_count: windows.len() - records.len(),
        negative_variance_count: records.iter().filter(|r| r.negative_variance).count(),
        tick_count: ticks.len(),
        gap_quantiles: gap_quantiles(&records, max_n),
    };
    Ok(RunReport {
        tool_version: TOOL_VERSION.to_string(),
        input_digest: input_digest(bytes),
        config: config.clone(),
        summary,
        windows: records,
        generated_at_unix: timestamp.then(now_unix),
    })
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<RunReport, CliError> {
    let bytes = read_input(&args.input)?;
    let config = AnalyzeConfig {
        delta: args.delta,
        origin: args.origin,
        max_n: args.max_n,
    };
    let report = analyze_bytes(&bytes, &config, !args.no_timestamp)?;
    write_json(&args.out, &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSummary {
    pub file: String,
    pub points: usize,
    pub spacing: f64,
    pub normalization: f64,
    pub mean: f64,
    pub variance: f64,
    pub has_negative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureReport {
    pub tool_version: String,
    pub input_digest: String,
    pub window: i64,
    pub center: f64,
    pub n: usize,
    pub k: usize,
    pub p_n: Vec<f64>,
    /// `a_1..a_k`.
    pub a: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub atom: Option<Atom>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSummary>,
}

/// Fit and measure for one window; returns the report and, for `k >= 2`,
/// the grid CSV.
pub fn measure_bytes(bytes: &[u8], origin: f64, delta: f64, k: usize, window: i64, grid_points: usize) -> Result<(MeasureReport, Option<String>), CliError> {
    if !(1..=3).contains(&k) {
        return Err(CliError::config(format!("k must be 1, 2 or 3, got {k}")));
    }
    let spec = window_spec(origin, delta)?;
    let ticks = parse_tick_bytes(bytes)?;
    let windows = partition(&ticks, &spec)?;
    let w = windows
        .iter()
        .find(|w| w.index == window && !w.is_empty())
        .ok_or_else(|| CliError::config(format!("window {window} holds no ticks")))?;
    let agg = aggregate(w, k)?;
    let moments = MarketMoments::from_aggregates(&agg)?;
    let approx = fit_coefficients(&moments, k).map_err(|e| CliError::from(e).with_context(window))?;
    let mut report = MeasureReport {
        tool_version: TOOL_VERSION.to_string(),
        input_digest: input_digest(bytes),
        window,
        center: w.center,
        n: w.len(),
        k,
        p_n: moments.p_n.clone(),
        a: approx.coefficients().to_vec(),
        atom: None,
        grid: None,
    };
    if k == 1 {
        report.atom = Some(delta_measure(&approx)?);
        return Ok((report, None));
    }
    let grid = invert_charfunc_numeric(&approx, &GridSpec::with_points(grid_points))?;
    let mean = grid.moment(1) / grid.normalization;
    report.grid = Some(GridSummary {
        file: String::new(),
        points: grid.prices.len(),
        spacing: grid.spacing,
        normalization: grid.normalization,
        mean,
        variance: grid.central_moment(2, mean) / grid.normalization,
        has_negative: grid.has_negative,
    });
    Ok((report, Some(grid.to_csv())))
}

impl CliError {
    fn with_context(mut self, window: i64) -> Self {
        self.message = format!("window {window}: {}", self.message);
        self
    }
}

pub fn cmd_measure(args: &MeasureArgs) -> Result<MeasureReport, CliError> {
    let bytes = read_input(&args.input)?;
    let (mut report, csv) = measure_bytes(&bytes, args.origin, args.delta, args.k, args.window, args.grid_points)?;
    if let Some(csv) = csv {
        let csv_path = args.out.with_extension("csv");
        write_output(&csv_path, csv.as_bytes())?;
        if let Some(grid) = report.grid.as_mut() {
            grid.file = csv_path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
        }
    }
    write_json(&args.out.with_extension("json"), &report)?;
    Ok(report)
}

/// CAPM scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub alpha: f64,
    pub beta: f64,
    pub e_t: f64,
    pub e_t1: f64,
    pub p0: f64,
    pub var_p: f64,
    pub x0: f64,
    pub var_x: f64,
    pub sk_x: f64,
    #[serde(rename = "R_f", alias = "r_f", default, skip_serializing_if = "Option::is_none")]
    pub r_f: Option<f64>,
    /// Keep the payoff third moment in the second-order check.
    #[serde(default)]
    pub include_gamma3: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapmReport {
    pub tool_version: String,
    pub mode: CapmMode,
    pub scenario: Scenario,
    pub xi: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solution: Option<PricingSolution>,
    /// Price implied by the expansion at `xi`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub implied_price: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub positivity_bound: Option<XiBound>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub idiosyncratic: Option<IdiosyncraticRelations>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub idiosyncratic_error: Option<String>,
    pub regime: RegimeReport,
    pub flags: Vec<&'static str>,
}

pub fn parse_scenario(text: &str) -> Result<Scenario, CliError> {
    serde_json::from_str(text).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => CliError::config(format!("scenario schema: {e}")),
        _ => CliError::parse(format!("scenario JSON: {e}")),
    })
}

/// Solves a scenario. Solutions carrying flags come back as `Ok` with
/// `flags` filled so the caller can still report them.
pub fn solve_scenario(scenario: &Scenario, mode: CapmMode) -> Result<CapmReport, CliError> {
    let params = UtilityParams::new(scenario.alpha, scenario.beta, scenario.e_t, scenario.e_t1)?;
    let price = PriceStats::new(scenario.p0, scenario.var_p)?;
    let payoff = PayoffStats::from_skewness(scenario.x0, scenario.var_x, scenario.sk_x)?;
    if let Some(r_f) = scenario.r_f {
        if !(r_f > 0.0 && r_f.is_finite()) {
            return Err(CliError::config(format!("R_f must be positive, got {r_f}")));
        }
    }

    let mut report = CapmReport {
        tool_version: TOOL_VERSION.to_string(),
        mode,
        scenario: scenario.clone(),
        xi: 0.0,
        solution: None,
        implied_price: None,
        positivity_bound: None,
        idiosyncratic: None,
        idiosyncratic_error: None,
        regime: second_order_regime(&params, &payoff, 0.0, scenario.include_gamma3),
        flags: Vec::new(),
    };

    match mode {
        CapmMode::Eq4_5 | CapmMode::Eq4_6 => {
            let linear = if mode == CapmMode::Eq4_5 { LinearMode::Eq4_5 } else { LinearMode::Eq4_6 };
            let solution = xi_max_linear(&params, &price, &payoff, linear)?;
            report.xi = solution.xi_max;
            report.flags = solution.flags.names();
            if !solution.flags.infeasible_consumption {
                let (variant, price_mode) = match linear {
                    LinearMode::Eq4_5 => (FactorVariant::Eq4_11, PriceMode::Eq4_12),
                    LinearMode::Eq4_6 => (FactorVariant::Eq4_9, PriceMode::Eq4_8),
                };
                let factors = discount_factors(&params, solution.xi_max, price.p0, payoff.x0, variant)?;
                report.implied_price = price_from_xi(&factors, &payoff, price.var_p, solution.xi_max, price_mode).ok();
            }
            report.solution = Some(solution);
            if payoff.var_x > 0.0 {
                report.positivity_bound = Some(xi_bound_positivity(&params, &payoff)?);
            }
            if scenario.r_f.is_some() {
                match idiosyncratic_relations(&params, &price, &payoff, scenario.r_f) {
                    Ok(rel) => report.idiosyncratic = Some(rel),
                    Err(e) => report.idiosyncratic_error = Some(e.to_string()),
                }
            }
        }
        CapmMode::Eq4_23 => {
            let rel = idiosyncratic_relations(&params, &price, &payoff, scenario.r_f)?;
            report.xi = rel.xi;
            report.idiosyncratic = Some(rel);
        }
    }
    report.regime = second_order_regime(&params, &payoff, report.xi, scenario.include_gamma3);
    Ok(report)
}

pub fn cmd_capm(args: &CapmArgs) -> Result<CapmReport, CliError> {
    let bytes = read_input(&args.scenario)?;
    let text = String::from_utf8(bytes).map_err(|e| CliError::parse(format!("scenario is not UTF-8: {e}")))?;
    let scenario = parse_scenario(&text)?;
    let report = solve_scenario(&scenario, args.mode)?;
    write_json(&args.out, &report)?;
    if !report.flags.is_empty() {
        return Err(CliError::numeric(format!("solver flagged: {}", report.flags.join(", "))));
    }
    Ok(report)
}

pub fn synth_config(args: &SynthArgs) -> Result<SynthConfig, CliError> {
    let config = SynthConfig {
        seed: args.seed,
        n_ticks: args.n,
        tick_spacing: args.spacing,
        price_process: args.price.parse::<PriceProcess>()?,
        volume_dist: args.volume.parse::<VolumeDist>()?,
        coupling: args.coupling,
    };
    config.validate()?;
    Ok(config)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<usize, CliError> {
    let ticks = generate(&synth_config(args)?)?;
    write_output(&args.out, format_ticks(&ticks, false).as_bytes())?;
    Ok(ticks.len())
}

/// Parses a comma list of widths, dropping repeats. Returns the widths in
/// first-seen order and one warning per dropped repeat.
pub fn parse_deltas(list: &str) -> Result<(Vec<f64>, Vec<String>), CliError> {
    let mut deltas: Vec<f64> = Vec::new();
    let mut warnings = Vec::new();
    for field in list.split(',') {
        let d: f64 = field
            .trim()
            .parse()
            .map_err(|_| CliError::config(format!("bad delta '{field}'")))?;
        if !(d > 0.0 && d.is_finite()) {
            return Err(CliError::config(format!("delta must be positive and finite, got {d}")));
        }
        if deltas.contains(&d) {
            warnings.push(format!("duplicate delta {d} ignored"));
        } else {
            deltas.push(d);
        }
    }
    Ok((deltas, warnings))
}

fn csv_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Sweep CSV with columns `delta,window,n,p1,variance,a3`.
pub fn sweep_ticks(ticks: &[TradeTick], origin: f64, deltas: &[f64], max_n: usize) -> Result<String, CliError> {
    if max_n == 0 {
        return Err(CliError::config("max-n must be at least 1"));
    }
    let mut out = String::from("delta,window,n,p1,variance,a3\n");
    for &delta in deltas {
        let spec = window_spec(origin, delta)?;
        let windows = partition(ticks, &spec)?;
        let rows = with_threads(|| {
            windows
                .par_iter()
                .filter(|w| !w.is_empty())
                .map(|w| {
                    let agg = aggregate(w, max_n)?;
                    let m = MarketMoments::from_aggregates(&agg)?;
                    Ok(format!(
                        "{delta},{},{},{},{},{}\n",
                        w.index,
                        w.len(),
                        m.vwap,
                        csv_opt(m.variance),
                        csv_opt(m.gamma3)
                    ))
                })
                .collect::<Result<Vec<String>, MomentError>>()
        })??;
        rows.iter().for_each(|r| out.push_str(r));
    }
    Ok(out)
}

pub fn cmd_sweep_delta(args: &SweepArgs) -> Result<Vec<String>, CliError> {
    let (deltas, warnings) = parse_deltas(&args.deltas)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let ticks = parse_tick_bytes(&read_input(&args.input)?)?;
    let csv = sweep_ticks(&ticks, args.origin, &deltas, args.max_n)?;
    write_output(&args.out, csv.as_bytes())?;
    Ok(warnings)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Analyze(a) => cmd_analyze(a).map(|_| ()),
        Command::Measure(a) => cmd_measure(a).map(|_| ()),
        Command::Capm(a) => cmd_capm(a).map(|_| ()),
        Command::Synth(a) => cmd_synth(a).map(|_| ()),
        Command::SweepDelta(a) => cmd_sweep_delta(a).map(|_| ()),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Usage errors map to the configuration code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
