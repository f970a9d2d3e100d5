//! The `proxysynth` command line. [`run`] takes explicit output streams so it can be
//! driven from tests; the binary only forwards process arguments and exits with its
//! status.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::align::{align, AlignConfig};
use crate::blockgen::{default_library_with, render_block, render_program, BlockLibrary, LibraryOptions};
use crate::error::{Error, Result};
use crate::evaluate::{build_report, mean_abs_rel_error, pearson, AccuracyReport};
use crate::io::{read_to_string, write_atomic};
use crate::measure::{export_counts, import_counts, Noise, NoiseModel, SimulatedMeasurer, DEFAULT_SEED};
use crate::model::{builtin_metrics, compute_all_metrics, MeasurementResult, MetricDefinition, ProxyProgram, TargetMetrics};

/// File names written by `align` into its output directory.
pub const PROGRAM_FILE: &str = "program.json";
pub const SOURCE_FILE: &str = "proxy.c";
pub const TRACE_FILE: &str = "trace.json";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Parser)]
#[command(name = "proxysynth", version, about = "Synthesize proxy benchmarks from micro-architectural targets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create, list or check a block library document.
    Library {
        #[arg(value_enum)]
        action: LibraryAction,
        path: PathBuf,
        /// With init-default: leave out the floating-point arithmetic variants.
        #[arg(long)]
        int_only: bool,
    },
    /// Run the alignment loop and write program, source, trace and report.
    Align(AlignArgs),
    /// Render a program manifest, or a single block, as C source.
    Render(RenderArgs),
    /// Parse a counts file and print it in canonical form.
    ImportCounts {
        path: PathBuf,
        /// Write the canonical form here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare real and proxy counts files.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LibraryAction {
    InitDefault,
    Show,
    Validate,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    /// Target metrics document.
    #[arg(long)]
    pub targets: PathBuf,
    /// Calibrated block library document.
    #[arg(long)]
    pub library: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of rounds, including the initial solve.
    #[arg(long, default_value_t = AlignConfig::default().rounds)]
    pub rounds: usize,
    /// Instruction growth per round as a fraction of the measured total.
    #[arg(long, default_value_t = AlignConfig::default().growth)]
    pub growth: f64,
    /// Instruction budget of the first-round program.
    #[arg(long, default_value_t = AlignConfig::default().ins1)]
    pub ins1: f64,
    /// Relative KKT tolerance of the solver.
    #[arg(long, default_value_t = AlignConfig::default().tol)]
    pub tol: f64,
    #[arg(long, default_value_t = AlignConfig::default().max_iter)]
    pub max_iter: usize,
    /// Pruning threshold for block selection.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Stop once every metric accuracy reaches this value.
    #[arg(long)]
    pub early_stop: Option<f64>,
    /// `none`, `uniform:EPS`, `gaussian:SIGMA` or `interaction:MATRIX.json`.
    #[arg(long, default_value = "uniform:0.03")]
    pub noise: NoiseSpec,
    /// Seed of the simulated measurement noise.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Also write the tab-separated accuracy table to this path.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub library: PathBuf,
    /// Program manifest to render as a complete translation unit.
    #[arg(long, conflicts_with = "block", required_unless_present = "block")]
    pub program: Option<PathBuf>,
    /// Render only this block's loop nest.
    #[arg(long, requires = "iterations")]
    pub block: Option<String>,
    #[arg(long)]
    pub iterations: Option<u64>,
    /// Write the source here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Real benchmark counts; repeat together with `--proxy` for series mode.
    #[arg(long, required = true)]
    pub real: Vec<PathBuf>,
    /// Proxy counts, paired with `--real` in order.
    #[arg(long, required = true)]
    pub proxy: Vec<PathBuf>,
    /// Comma-separated metric ids; defaults to every builtin metric.
    #[arg(long, value_delimiter = ',')]
    pub metrics: Vec<String>,
    /// Write the report document here (single-pair mode only).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// Noise selection as given on the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    None,
    Uniform(f64),
    Gaussian(f64),
    Interaction(PathBuf),
}

impl FromStr for NoiseSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
        let number = || arg.parse::<f64>().map_err(|_| format!("`{s}`: expected a number after `{kind}:`"));
        match kind {
            "none" if arg.is_empty() => Ok(NoiseSpec::None),
            "uniform" => Ok(NoiseSpec::Uniform(number()?)),
            "gaussian" => Ok(NoiseSpec::Gaussian(number()?)),
            "interaction" if !arg.is_empty() => Ok(NoiseSpec::Interaction(arg.into())),
            _ => Err(format!("`{s}`: expected none, uniform:EPS, gaussian:SIGMA or interaction:PATH")),
        }
    }
}

impl NoiseSpec {
    fn model(&self, seed: u64) -> Result<NoiseModel> {
        let noise = match self {
            NoiseSpec::None => Noise::None,
            NoiseSpec::Uniform(epsilon) => Noise::Uniform { epsilon: *epsilon },
            NoiseSpec::Gaussian(sigma) => Noise::Gaussian { sigma: *sigma },
            NoiseSpec::Interaction(path) => {
                let matrix = serde_json::from_str(&read_to_string(path)?).map_err(|e| Error::from(e).in_file(path))?;
                Noise::Interaction { matrix }
            }
        };
        let model = NoiseModel { noise, seed };
        model.validate()?;
        Ok(model)
    }
}

/// Parses `args` (program name first) and runs the command. Data goes to `out`,
/// diagnostics to `err`. Returns the process exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return e.exit_code();
        }
    };
    match execute(&cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", chain(&e));
            1
        }
    }
}

/// Error message with every nested source, outermost first.
fn chain(e: &(dyn std::error::Error + 'static)) -> String {
    let mut s = e.to_string();
    let mut cur = e.source();
    while let Some(inner) = cur {
        let msg = inner.to_string();
        if !s.ends_with(&msg) {
            s.push_str(": ");
            s.push_str(&msg);
        }
        cur = inner.source();
    }
    s
}

pub fn execute(command: &Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match command {
        Command::Library { action, path, int_only } => cmd_library(*action, path, *int_only, out, err),
        Command::Align(a) => cmd_align(a, out, err),
        Command::Render(r) => cmd_render(r, out),
        Command::ImportCounts { path, out: dest } => {
            let canonical = export_counts(&load_counts(path)?);
            match dest {
                Some(p) => write_atomic(p, canonical.as_bytes()),
                None => Ok(out.write_all(canonical.as_bytes())?),
            }
        }
        Command::Evaluate(e) => cmd_evaluate(e, out, err),
    }
}

fn load<T>(path: &Path, parse: impl FnOnce(&str) -> Result<T>) -> Result<T> {
    parse(&read_to_string(path)?).map_err(|e| e.in_file(path))
}

fn load_library(path: &Path) -> Result<BlockLibrary> {
    load(path, BlockLibrary::from_json)
}

fn load_counts(path: &Path) -> Result<MeasurementResult> {
    load(path, import_counts)
}

pub fn cmd_library(action: LibraryAction, path: &Path, int_only: bool, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match action {
        LibraryAction::InitDefault => {
            let lib = default_library_with(LibraryOptions { fp_variants: !int_only });
            write_atomic(path, lib.to_json().as_bytes())?;
            writeln!(err, "wrote {} blocks to {}", lib.len(), path.display())?;
        }
        LibraryAction::Show => {
            for b in load_library(path)?.blocks() {
                writeln!(out, "{}\t{}\t{}", b.id, b.family(), b.params.describe())?;
            }
        }
        LibraryAction::Validate => {
            let lib = load(path, BlockLibrary::from_json_unchecked)?;
            let mut problems = lib.violations();
            problems.extend(lib.blocks().iter().filter(|b| b.profile.is_none()).map(|b| format!("block `{}`: no calibrated profile", b.id)));
            for p in &problems {
                writeln!(err, "{}: {p}", path.display())?;
            }
            if !problems.is_empty() {
                return Err(Error::Invariant(format!("{} violation(s) in {}", problems.len(), path.display())));
            }
            writeln!(out, "ok\t{} blocks", lib.len())?;
        }
    }
    Ok(())
}

pub fn cmd_align(a: &AlignArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let defs = builtin_metrics();
    let library = load_library(&a.library)?;
    let targets = load(&a.targets, |t| TargetMetrics::from_json(t, &defs))?;
    let config = AlignConfig {
        rounds: a.rounds,
        growth: a.growth,
        ins1: a.ins1,
        tol: a.tol,
        max_iter: a.max_iter,
        eps: a.eps,
        early_stop: a.early_stop,
    };
    let measurer = SimulatedMeasurer::new(a.noise.model(a.seed)?);

    let (program, trace) = align(&library, &targets, &defs, &config, &measurer)?;
    for r in trace.rounds.iter().filter(|r| !r.certified) {
        writeln!(err, "warning: round {} solution is not certified optimal", r.round)?;
    }
    let mut report = build_report(&targets, &trace, &defs)?;
    report.metadata.library_hash = Some(library.content_hash());
    report.metadata.config = Some(config);

    std::fs::create_dir_all(&a.out).map_err(|e| Error::from(e).in_file(&a.out))?;
    write_atomic(&a.out.join(PROGRAM_FILE), program.to_json().as_bytes())?;
    write_atomic(&a.out.join(SOURCE_FILE), render_program(&program, &library)?.as_bytes())?;
    write_atomic(&a.out.join(TRACE_FILE), trace.to_json().as_bytes())?;
    write_atomic(&a.out.join(REPORT_FILE), report.to_json().as_bytes())?;
    if let Some(t) = &a.table {
        write_atomic(t, report.to_table().as_bytes())?;
    }
    write_categories(&report, out)
}

fn write_categories(report: &AccuracyReport, out: &mut dyn Write) -> Result<()> {
    for (cat, a) in &report.categories {
        writeln!(out, "{cat}\t{:.1}%", a * 100.0)?;
    }
    Ok(())
}

pub fn cmd_render(r: &RenderArgs, out: &mut dyn Write) -> Result<()> {
    let library = load_library(&r.library)?;
    let source = match (&r.program, &r.block) {
        (Some(p), _) => {
            let program = load(p, ProxyProgram::from_json)?;
            render_program(&program, &library)?
        }
        (None, Some(id)) => {
            let spec = library.get(id).ok_or_else(|| Error::UnresolvedBlock(id.clone()))?;
            render_block(spec, r.iterations.unwrap_or(1))?
        }
        (None, None) => return Err(Error::InvalidParameter("either --program or --block is required".into())),
    };
    match &r.out {
        Some(p) => write_atomic(p, source.as_bytes()),
        None => Ok(out.write_all(source.as_bytes())?),
    }
}

fn selected_metrics(ids: &[String]) -> Result<Vec<MetricDefinition>> {
    let all = builtin_metrics();
    if ids.is_empty() {
        return Ok(all);
    }
    ids.iter().map(|id| crate::model::find_metric(&all, id).cloned()).collect()
}

fn metrics_of(path: &Path, defs: &[MetricDefinition]) -> Result<BTreeMap<String, f64>> {
    compute_all_metrics(&load_counts(path)?, defs).map_err(|e| e.in_file(path))
}

pub fn cmd_evaluate(e: &EvaluateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    if e.real.len() != e.proxy.len() {
        return Err(Error::InvalidParameter(format!("{} --real files but {} --proxy files", e.real.len(), e.proxy.len())));
    }
    let defs = selected_metrics(&e.metrics)?;
    let mut pairs = Vec::with_capacity(e.real.len());
    for (r, p) in e.real.iter().zip(&e.proxy) {
        pairs.push((metrics_of(r, &defs)?, metrics_of(p, &defs)?));
    }

    if let [(real, proxy)] = pairs.as_slice() {
        let report = AccuracyReport::from_values(&TargetMetrics::new(real.clone()), proxy, &defs).map_err(|err| err.in_file(&e.real[0]))?;
        out.write_all(report.to_table().as_bytes())?;
        writeln!(out)?;
        writeln!(out, "category\taccuracy")?;
        write_categories(&report, out)?;
        if let Some(path) = &e.report {
            write_atomic(path, report.to_json().as_bytes())?;
        }
        return Ok(());
    }
    if e.report.is_some() {
        return Err(Error::InvalidParameter("--report needs exactly one --real/--proxy pair".into()));
    }

    writeln!(out, "metric\trho\tmean_error")?;
    for def in &defs {
        let x: Vec<f64> = pairs.iter().map(|(r, _)| r[&def.id]).collect();
        let y: Vec<f64> = pairs.iter().map(|(_, p)| p[&def.id]).collect();
        let rho = pearson(&x, &y);
        let mare = mean_abs_rel_error(&x, &y);
        let cell = |v: &Result<f64>, what: &str, err: &mut dyn Write| -> Result<String> {
            match v {
                Ok(v) => Ok(v.to_string()),
                Err(e) => {
                    writeln!(err, "warning: {} {what}: {e}", def.id)?;
                    Ok("NA".into())
                }
            }
        };
        let (a, b) = (cell(&rho, "rho", err)?, cell(&mare, "mean_error", err)?);
        writeln!(out, "{}\t{a}\t{b}", def.id)?;
    }
    Ok(())
}
