//! The `prunekit` command line.
//!
//! Exit codes: 0 success, 2 bad input, 3 pruning stopped short of the target
//! (infeasible or iteration cap). Outputs are still written on exit 3.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::arch::{parse_architecture, propagate_shapes, serialize_architecture, validate_graph, NetworkGraph};
use crate::complexity::{energy_estimate, network_complexity, EnergyEstimate, Mode, Totals};
use crate::pruner::{prune_to_target, PruneConfig, PruneTrace, Terminal, TraceSource, DEFAULT_MAX_ITERATIONS};
use crate::report::{layer_breakdown, reduction_report, to_csv, tradeoff_series, BreakdownRow, MetricsDoc};
use crate::zoo;

pub const EXIT_OK: u8 = 0;
pub const EXIT_BAD_INPUT: u8 = 2;
pub const EXIT_SHORT_OF_TARGET: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "prunekit", version, about = "Complexity-driven structured filter pruning for CNNs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print total and per-layer complexity of an architecture.
    Inspect(InspectArgs),
    /// Prune filters until the target complexity is met.
    Prune(PruneArgs),
    /// Merge pruning traces and training metrics into a trade-off series.
    Report(ReportArgs),
    /// Built-in architectures.
    #[command(subcommand)]
    Zoo(ZooCommand),
}

#[derive(Debug, Subcommand)]
pub enum ZooCommand {
    /// List built-in architectures.
    List,
    /// Print a built-in architecture as JSON.
    Export { name: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Zoo name or path to an architecture JSON file.
    #[arg(long)]
    pub arch: String,
    /// FLOPs per multiply-accumulate (1 or 2).
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..=2))]
    pub flops_factor: u32,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Write `inspect.<format>` into this directory instead of standard output.
    #[arg(long, env = "PRUNEKIT_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("target").required(true).args(["target_abs", "target_frac"])))]
pub struct PruneArgs {
    /// Zoo name or path to an architecture JSON file.
    #[arg(long)]
    pub arch: String,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Mode,
    /// Target complexity in the mode's unit (FLOPs, bytes or parameters).
    #[arg(long)]
    pub target_abs: Option<u64>,
    /// Target as a fraction of the baseline; the budget is floor(f * baseline).
    #[arg(long)]
    pub target_frac: Option<f64>,
    /// Fraction of the sampled layer's filters removed per step.
    #[arg(long, default_value_t = 0.1)]
    pub ratio: f64,
    #[arg(long)]
    pub seed: u64,
    /// Fewest filters any layer may keep.
    #[arg(long, default_value_t = 1)]
    pub min_filters: usize,
    /// FLOPs per multiply-accumulate (1 or 2).
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..=2))]
    pub flops_factor: u32,
    /// Output directory.
    #[arg(long, env = "PRUNEKIT_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Trace file written by `prune`; repeat for several runs.
    #[arg(long = "trace", required = true)]
    pub traces: Vec<PathBuf>,
    /// Metrics file from the training harness; repeatable.
    #[arg(long = "metrics")]
    pub metrics: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Write `tradeoff.<format>` into this directory instead of standard output.
    #[arg(long, env = "PRUNEKIT_OUT")]
    pub out: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse::<Mode>().map_err(|e| e.to_string())
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn bad_input(message: impl Into<String>) -> Self {
        Self { code: EXIT_BAD_INPUT, message: message.into() }
    }
}

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        Self::bad_input(e.to_string())
    }
}

type CliResult = Result<u8, CliError>;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub arguments: BTreeMap<String, String>,
    pub input_hashes: BTreeMap<String, String>,
    pub output_paths: Vec<String>,
    pub seed: u64,
    pub tool_version: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct LoadedArch {
    graph: NetworkGraph,
    /// Zoo name, or the path as given.
    label: String,
    sha256: String,
}

fn load_arch(source: &str) -> Result<LoadedArch, CliError> {
    let (graph, text) = if let Some(e) = zoo::entry(source) {
        let graph = (e.builder)();
        let text = serialize_architecture(&graph);
        (graph, text)
    } else if Path::new(source).is_file() {
        let text = fs::read_to_string(source).map_err(|e| CliError::bad_input(format!("{source}: {e}")))?;
        let parsed = parse_architecture(&text).map_err(|e| CliError::bad_input(format!("{source}: {e}")))?;
        let graph =
            propagate_shapes(&parsed, parsed.input_shape).map_err(|e| CliError::bad_input(format!("{source}: {e}")))?;
        (graph, text)
    } else {
        return Err(CliError::bad_input(zoo::UnknownArch(source.to_string()).to_string()));
    };
    let report = validate_graph(&graph);
    if !report.ok {
        return Err(CliError::bad_input(format!("{source}: invalid architecture\n{}", report.render().trim_end())));
    }
    Ok(LoadedArch { graph, label: source.to_string(), sha256: sha256_hex(text.as_bytes()) })
}

fn pretty_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn emit(out: Option<&Path>, stem: &str, format: Format, body: &str) -> Result<(), CliError> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let ext = match format {
                Format::Json => "json",
                Format::Csv => "csv",
            };
            fs::write(dir.join(format!("{stem}.{ext}")), body)?;
        }
        None => std::io::stdout().write_all(body.as_bytes())?,
    }
    Ok(())
}

#[derive(Serialize)]
struct InspectDoc<'a> {
    arch: &'a str,
    flops_factor: u32,
    totals: Totals,
    energy: EnergyEstimate,
    layers: &'a [BreakdownRow],
}

#[derive(Serialize)]
struct InspectCsvRow<'a> {
    id: &'a str,
    flops: u64,
    memory_bytes: u64,
    params: u64,
    flops_share: f64,
    memory_share: f64,
    params_share: f64,
}

fn cmd_inspect(args: &InspectArgs) -> CliResult {
    let arch = load_arch(&args.arch)?;
    let profile = network_complexity(&arch.graph, args.flops_factor)?;
    let breakdown = layer_breakdown(&profile);
    let body = match args.format {
        Format::Json => pretty_json(&InspectDoc {
            arch: &arch.label,
            flops_factor: profile.flops_factor,
            totals: profile.totals,
            energy: energy_estimate(&profile),
            layers: &breakdown.rows,
        })?,
        Format::Csv => {
            let t = profile.totals;
            let rows = breakdown
                .rows
                .iter()
                .map(|r| InspectCsvRow {
                    id: &r.id,
                    flops: r.flops,
                    memory_bytes: r.memory_bytes,
                    params: r.params,
                    flops_share: r.flops_share,
                    memory_share: r.memory_share,
                    params_share: r.params_share,
                })
                .chain(std::iter::once(InspectCsvRow {
                    id: "total",
                    flops: t.flops,
                    memory_bytes: t.memory_bytes,
                    params: t.params,
                    flops_share: 1.0,
                    memory_share: 1.0,
                    params_share: 1.0,
                }));
            to_csv(rows)?
        }
    };
    emit(args.out.as_deref(), "inspect", args.format, &body)?;
    Ok(EXIT_OK)
}

pub const PRUNE_OUTPUTS: [&str; 5] = ["pruned_arch.json", "trace.json", "report.json", "report.csv", "manifest.json"];

fn approach_label(mode: Mode) -> &'static str {
    match mode {
        Mode::Flops => "FA",
        Mode::Memory => "MA",
        Mode::Params => "PA",
    }
}

fn cmd_prune(args: &PruneArgs) -> CliResult {
    let arch = load_arch(&args.arch)?;
    let baseline = network_complexity(&arch.graph, args.flops_factor)?;
    let base_total = baseline.totals.get(args.mode);
    let target = match (args.target_abs, args.target_frac) {
        (Some(abs), None) => abs,
        (None, Some(f)) if f.is_finite() && f >= 0.0 => (f * base_total as f64).floor() as u64,
        (None, Some(f)) => return Err(CliError::bad_input(format!("--target-frac must be finite and >= 0, got {f}"))),
        _ => return Err(CliError::bad_input("give exactly one of --target-abs and --target-frac")),
    };

    let config = PruneConfig {
        min_filters: args.min_filters,
        max_iterations: DEFAULT_MAX_ITERATIONS,
        flops_factor: args.flops_factor,
        ..PruneConfig::new(args.mode, target, args.ratio, args.seed)
    };
    let (pruned, mut trace) = prune_to_target(&arch.graph, &config)?;
    let pruned_text = serialize_architecture(&pruned);
    trace.source = Some(TraceSource {
        arch: arch.label.clone(),
        baseline_sha256: arch.sha256.clone(),
        pruned_sha256: sha256_hex(pruned_text.as_bytes()),
    });
    let pruned_profile = network_complexity(&pruned, args.flops_factor)?;
    let report = reduction_report(&baseline, &pruned_profile, None)?;

    fs::create_dir_all(&args.out)?;
    let write = |name: &str, body: &str| fs::write(args.out.join(name), body);
    write("pruned_arch.json", &pruned_text)?;
    write("trace.json", &pretty_json(&trace)?)?;
    write("report.json", &pretty_json(&report)?)?;
    write("report.csv", &report.to_csv(approach_label(args.mode))?)?;

    let mut arguments = BTreeMap::new();
    arguments.insert("arch".into(), arch.label.clone());
    arguments.insert("mode".into(), args.mode.to_string());
    if let Some(abs) = args.target_abs {
        arguments.insert("target_abs".into(), abs.to_string());
    }
    if let Some(f) = args.target_frac {
        arguments.insert("target_frac".into(), f.to_string());
    }
    arguments.insert("target_complexity".into(), target.to_string());
    arguments.insert("ratio".into(), args.ratio.to_string());
    arguments.insert("seed".into(), args.seed.to_string());
    arguments.insert("min_filters".into(), args.min_filters.to_string());
    arguments.insert("flops_factor".into(), args.flops_factor.to_string());
    let manifest = RunManifest {
        command: "prune".into(),
        arguments,
        input_hashes: BTreeMap::from([(arch.label.clone(), arch.sha256.clone())]),
        output_paths: PRUNE_OUTPUTS.iter().map(|s| s.to_string()).collect(),
        seed: args.seed,
        tool_version: env!("CARGO_PKG_VERSION").into(),
    };
    write("manifest.json", &pretty_json(&manifest)?)?;

    eprintln!(
        "{}: {} after {} steps, {} {} -> {} (target {})",
        arch.label,
        trace.terminal.as_str(),
        trace.steps.len(),
        args.mode,
        base_total,
        pruned_profile.totals.get(args.mode),
        target
    );
    Ok(match trace.terminal {
        Terminal::TargetMet => EXIT_OK,
        Terminal::Infeasible | Terminal::MaxIterations => EXIT_SHORT_OF_TARGET,
    })
}

fn cmd_report(args: &ReportArgs) -> CliResult {
    let read = |p: &Path| fs::read_to_string(p).map_err(|e| CliError::bad_input(format!("{}: {e}", p.display())));
    let traces = args
        .traces
        .iter()
        .map(|p| {
            serde_json::from_str::<PruneTrace>(&read(p)?)
                .map_err(|e| CliError::bad_input(format!("{}: {e}", p.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let metrics = args
        .metrics
        .iter()
        .map(|p| MetricsDoc::from_json(&read(p)?).map_err(|e| CliError::bad_input(format!("{}: {e}", p.display()))))
        .collect::<Result<Vec<_>, _>>()?;
    let series = tradeoff_series(&traces, &metrics)?;
    let body = match args.format {
        Format::Json => pretty_json(&series)?,
        Format::Csv => series.to_csv()?,
    };
    emit(args.out.as_deref(), "tradeoff", args.format, &body)?;
    Ok(EXIT_OK)
}

fn cmd_zoo(cmd: &ZooCommand) -> CliResult {
    let mut stdout = std::io::stdout();
    match cmd {
        ZooCommand::List => {
            for e in zoo::ENTRIES {
                writeln!(stdout, "{}\t{}", e.name, e.notes)?;
            }
        }
        ZooCommand::Export { name } => {
            let graph = zoo::builtin_arch(name)?;
            stdout.write_all(serialize_architecture(&graph).as_bytes())?;
        }
    }
    Ok(EXIT_OK)
}

pub fn run(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Inspect(a) => cmd_inspect(a),
        Command::Prune(a) => cmd_prune(a),
        Command::Report(a) => cmd_report(a),
        Command::Zoo(z) => cmd_zoo(z),
    }
}

/// Parses `args` (program name first) and runs the command in-process.
/// Usage errors map to exit code 2.
pub fn run_from<I, T>(args: I) -> CliResult
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::bad_input(e.to_string()))?;
    run(&cli)
}
