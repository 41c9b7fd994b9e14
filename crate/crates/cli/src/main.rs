//! `linkpad`: replay traces through the shaper, sweep parameters, check
//! schedule independence, and run a live sender/receiver pair.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or I/O error.

mod demo;
mod output;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use linkpad::config::{ConfigFile, ShaperConfig};
use linkpad::dist::DistributionSpec;
use linkpad::replay::{self, synth, ReplayError, ReplayOptions, SweepParam, Trace, TraceError};

use output::Format;

#[derive(Debug, Parser)]
#[command(
    name = "linkpad",
    version,
    about = "Independent link padding shaper and replay harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Replay a trace through the shaper under a virtual clock.
    Replay(ReplayArgs),
    /// Replay once per value of one distribution parameter.
    Sweep(SweepArgs),
    /// Check that the shaped schedule is independent of the workload.
    Independence(IndependenceArgs),
    /// Live shaped sender or receiver over TCP.
    #[command(subcommand)]
    Demo(demo::DemoCommand),
    /// Write one of the bundled synthetic traces as CSV.
    GenTrace(GenTraceArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    HighLatency,
    LowLatency,
}

/// Shaper configuration sources, applied in order: preset, config file, flags.
#[derive(Debug, Clone, Args)]
pub(crate) struct ShaperArgs {
    /// Starting configuration preset.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Key-value config file (delay, size, seed, max_queue_bytes).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Delay distribution, e.g. "uniform 0 0.6" or "constant 0.05".
    #[arg(long)]
    delay: Option<String>,
    /// Size distribution, e.g. "uniform 50 200", "normal 125 30 50 200".
    #[arg(long)]
    size: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_queue_bytes: Option<usize>,
}

#[derive(Debug, Args)]
struct ReplayCommon {
    /// Trace CSV (`timestamp_s,payload_len`).
    #[arg(long)]
    trace: PathBuf,
    /// Replay horizon in seconds; defaults to the last event rounded up.
    #[arg(long)]
    horizon: Option<f64>,
    /// Per-record transport overhead used for the on-wire estimate.
    #[arg(long, default_value_t = replay::DEFAULT_WIRE_OVERHEAD)]
    wire_overhead: u32,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    #[command(flatten)]
    common: ReplayCommon,
    #[command(flatten)]
    shaper: ShaperArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: ReplayCommon,
    #[command(flatten)]
    shaper: ShaperArgs,
    /// d_low, d_high, s_low, s_high, const_d or const_x.
    #[arg(long)]
    param: SweepParam,
    /// Comma-separated parameter values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
}

#[derive(Debug, Args)]
struct IndependenceArgs {
    /// Workload trace; compared against `--trace-b`, or an empty trace.
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    trace_b: Option<PathBuf>,
    /// Seed for the independent second run (default: seed + 1).
    #[arg(long)]
    alt_seed: Option<u64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    shaper: ShaperArgs,
}

#[derive(Debug, Args)]
struct GenTraceArgs {
    /// sense_like or nest_like.
    #[arg(long)]
    name: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
pub(crate) enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

impl From<ReplayError> for CliError {
    fn from(e: ReplayError) -> Self {
        match e {
            ReplayError::Config(_)
            | ReplayError::SweepMismatch { .. }
            | ReplayError::Horizon { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        CliError::Data(e.to_string())
    }
}

pub(crate) type CliResult<T> = Result<T, CliError>;

impl ShaperArgs {
    /// Resolves the configuration; `default_seed` fills in a missing seed.
    pub(crate) fn resolve(&self, default_seed: impl FnOnce() -> u64) -> CliResult<ShaperConfig> {
        let mut doc = match self.preset {
            Some(Preset::HighLatency) => preset_doc(ShaperConfig::high_latency(0)),
            Some(Preset::LowLatency) => preset_doc(ShaperConfig::low_latency(0)),
            None => ConfigFile::default(),
        };
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            let file = ConfigFile::parse(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            doc.delay = file.delay.or(doc.delay);
            doc.size = file.size.or(doc.size);
            doc.seed = file.seed.or(doc.seed);
            doc.max_queue_bytes = file.max_queue_bytes.or(doc.max_queue_bytes);
        }
        if let Some(d) = &self.delay {
            doc.delay = Some(parse_spec(d)?);
        }
        if let Some(s) = &self.size {
            doc.size = Some(parse_spec(s)?);
        }
        if let Some(seed) = self.seed {
            doc.seed = Some(seed);
        }
        if let Some(limit) = self.max_queue_bytes {
            doc.max_queue_bytes = Some(limit);
        }
        if doc.seed.is_none() {
            doc.seed = Some(default_seed());
        }
        doc.resolve().map_err(|e| CliError::Usage(e.to_string()))
    }
}

fn preset_doc(cfg: ShaperConfig) -> ConfigFile {
    ConfigFile {
        delay: Some(cfg.delay_spec()),
        size: Some(cfg.size_spec()),
        seed: None,
        max_queue_bytes: None,
    }
}

fn parse_spec(s: &str) -> CliResult<DistributionSpec> {
    s.parse()
        .map_err(|e: linkpad::ConfigError| CliError::Usage(e.to_string()))
}

fn resolve_horizon(trace: &Trace, horizon: Option<f64>) -> f64 {
    horizon.unwrap_or_else(|| trace.last_timestamp().ceil().max(1.0))
}

fn cmd_replay(args: &ReplayArgs) -> CliResult<()> {
    let config = args.shaper.resolve(|| 0)?;
    let trace = replay::load_trace(&args.common.trace)?;
    let opts = ReplayOptions::new(resolve_horizon(&trace, args.common.horizon))
        .with_wire_overhead(args.common.wire_overhead);
    let report = replay::replay(&trace, &config, &opts)?;
    output::emit(
        args.common.out.as_deref(),
        &output::report_text(&report, args.common.format),
    )
}

fn cmd_sweep(args: &SweepArgs) -> CliResult<()> {
    let config = args.shaper.resolve(|| 0)?;
    // Check applicability before touching the trace, so kind mismatches are
    // reported as configuration errors.
    for &v in &args.values {
        args.param.apply(&config, v)?;
    }
    let trace = replay::load_trace(&args.common.trace)?;
    let opts = ReplayOptions::new(resolve_horizon(&trace, args.common.horizon))
        .with_wire_overhead(args.common.wire_overhead);
    let points = replay::sweep(&trace, &config, args.param, &args.values, &opts)?;
    output::emit(
        args.common.out.as_deref(),
        &output::sweep_text(args.param, &points, args.common.format),
    )
}

fn cmd_independence(args: &IndependenceArgs) -> CliResult<()> {
    let config = args.shaper.resolve(|| 0)?;
    let trace_a = replay::load_trace(&args.trace)?;
    let trace_b = match &args.trace_b {
        Some(p) => replay::load_trace(p)?,
        None => Trace::empty("empty"),
    };
    let horizon = args
        .horizon
        .unwrap_or_else(|| resolve_horizon(&trace_a, None).max(resolve_horizon(&trace_b, None)));
    let alt_seed = args.alt_seed.unwrap_or(config.rng_seed.wrapping_add(1));
    let report = replay::independence_test(
        &trace_a,
        &trace_b,
        &config,
        alt_seed,
        &ReplayOptions::new(horizon),
    )?;
    output::emit(
        args.out.as_deref(),
        &output::independence_text(&trace_a.name, &trace_b.name, &report, args.format),
    )
}

fn cmd_gen_trace(args: &GenTraceArgs) -> CliResult<()> {
    let synthetic = synth::by_name(&args.name)
        .ok_or_else(|| CliError::Usage(format!("unknown synthetic trace `{}`", args.name)))?;
    output::emit(args.out.as_deref(), &synthetic.trace.to_csv())
}

fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Replay(a) => cmd_replay(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Independence(a) => cmd_independence(a),
        Command::Demo(d) => demo::run(d),
        Command::GenTrace(a) => cmd_gen_trace(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("linkpad: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
