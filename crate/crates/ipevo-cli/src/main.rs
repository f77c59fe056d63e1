// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod render;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ipevo::clade::BlockSampler;
use ipevo::ip::{dist_alpha, dist_alpha_truncated, dist_hausdorff, dist_hausdorff_truncated, IntervalPartition};
use ipevo::par::{self, ProcessingMode};
use ipevo::rng;
use ipevo::scaffold::{sample_prm, Scaffolding, SpindlePointProcess, DEFAULT_POINT_BUDGET};
use ipevo::skewer::{evolve_seeded, skewer_levels, EvolutionPath, EvolveConfig, SkewerSnapshot};
use ipevo::spindle::DiffusionParams;
use ipevo::verify::{self, Suite, SuiteOptions};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ipevo", version, about = "Interval-partition evolutions built from spindles on a stable scaffolding")]
struct Cli {
    /// Master seed; required by simulate, evolve and verify.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file (default: stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML file whose keys mirror the long flags.
    #[arg(long = "config", global = true, value_name = "FILE")]
    _config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a spindle point process and its scaffolding.
    Simulate(SimulateArgs),
    /// Evolve an interval partition over a grid of levels.
    Evolve(EvolveArgs),
    /// Distance between two interval partitions.
    Metric(MetricArgs),
    /// Run the Monte Carlo checks.
    Verify(VerifyArgs),
    /// Draw a simulate or evolve output as SVG.
    Render(RenderArgs),
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    q: f64,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Lifetime cutoff ε for spindles.
    #[arg(long, default_value_t = 1e-3)]
    cutoff: f64,
    /// Grid points per spindle.
    #[arg(long, default_value_t = 64)]
    n_grid: usize,
    /// Maximum number of spindles per sampled process.
    #[arg(long, default_value_t = DEFAULT_POINT_BUDGET)]
    budget: usize,
}

impl ModelArgs {
    fn params(&self) -> Result<DiffusionParams, CliError> {
        Ok(DiffusionParams::new(self.alpha, self.q, self.c)?)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    horizon: f64,
    /// Scaffolding CSV (default: next to --out with extension csv).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct EvolveArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Initial block masses, comma separated ("" for the empty partition).
    #[arg(long, conflicts_with = "init_file", allow_hyphen_values = true)]
    init: Option<String>,
    /// Initial partition as JSON.
    #[arg(long)]
    init_file: Option<PathBuf>,
    /// Levels as start:stop:step, or a comma-separated list.
    #[arg(long)]
    levels: String,
    /// Euler step for block diffusions; exact sampling when omitted.
    #[arg(long)]
    dt: Option<f64>,
    /// Per-level summary CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricKind {
    Alpha,
    Hausdorff,
}

#[derive(Args)]
struct MetricArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long, value_enum, default_value = "alpha")]
    metric: MetricKind,
    /// Drop blocks lighter than this first; the error bound goes to stderr.
    #[arg(long)]
    cutoff: Option<f64>,
}

#[derive(Args)]
struct VerifyArgs {
    /// all, laws, controls or exact.
    #[arg(long, default_value = "all")]
    suite: String,
    /// Multiplier on every sample size.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Keep wall-clock runtimes in the JSON (makes output vary between runs).
    #[arg(long)]
    timing: bool,
    /// Run replicates on one thread without the worker pool.
    #[arg(long)]
    sequential: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum RenderMode {
    Scaffolding,
    Skewer,
    Massflow,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "scaffolding")]
    mode: RenderMode,
    /// Levels to skewer at when a point process is drawn in skewer or massflow mode.
    #[arg(long, default_value_t = 100)]
    strips: usize,
}

#[derive(Debug)]
enum CliError {
    Lib(ipevo::Error),
    Usage(String),
    Io(String),
    VerifyFailed(usize),
}

impl From<ipevo::Error> for CliError {
    fn from(e: ipevo::Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Lib(e) if e.is_budget() => 3,
            CliError::Lib(_) | CliError::Usage(_) | CliError::Io(_) => 2,
            CliError::VerifyFailed(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Usage(s) | CliError::Io(s) => f.write_str(s),
            CliError::VerifyFailed(n) => write!(f, "{n} check(s) did not give the expected outcome"),
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Write to `--out`, or stdout.
fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(p) => write_file(p, bytes),
        None => std::io::stdout().write_all(bytes).map_err(|e| CliError::Io(e.to_string())),
    }
}

fn need_seed(seed: Option<u64>, cmd: &str) -> Result<u64, CliError> {
    seed.ok_or_else(|| CliError::Usage(format!("{cmd} needs --seed")))
}

fn parse_f64(s: &str, what: &str) -> Result<f64, CliError> {
    s.trim().parse().map_err(|_| CliError::Usage(format!("{what}: not a number: {s:?}")))
}

/// `a:b:step` (inclusive of `b` up to rounding) or `y1,y2,...`.
fn parse_levels(s: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [a, b, step] => {
            let (a, b, step) = (parse_f64(a, "levels")?, parse_f64(b, "levels")?, parse_f64(step, "levels")?);
            if !(step > 0.0) || !(b >= a) {
                return Err(CliError::Usage(format!("levels {s:?}: need start <= stop and step > 0")));
            }
            let n = ((b - a) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|k| a + step * k as f64).collect())
        }
        [_] => s.split(',').map(|x| parse_f64(x, "levels")).collect(),
        _ => Err(CliError::Usage(format!("levels {s:?}: expected start:stop:step or a comma list"))),
    }
}

fn simulate(a: &SimulateArgs, seed: u64, out: Option<&Path>) -> Result<(), CliError> {
    let params = a.model.params()?;
    let mut r = rng::stream(seed, "simulate", 0);
    let mut pp = sample_prm(&params, a.model.cutoff, a.horizon, a.model.budget, &mut r)?;
    pp.n_grid = a.model.n_grid;
    pp.seed = Some(seed);
    let x = Scaffolding::of(&pp);
    emit(out, pp.to_jsonl().as_bytes())?;
    let csv = a.csv.clone().or_else(|| out.map(|p| p.with_extension("csv")));
    if let Some(p) = &csv {
        write_file(p, x.to_csv().as_bytes())?;
    }
    eprintln!(
        "simulate: {} spindles on [0, {}], cutoff {}, drift {:.6}, X(T) = {:.6}, range [{:.6}, {:.6}]",
        pp.len(),
        pp.length,
        pp.cutoff,
        x.slope,
        x.end_value(),
        x.min(),
        x.max()
    );
    Ok(())
}

fn evolve(a: &EvolveArgs, seed: u64, out: Option<&Path>) -> Result<(), CliError> {
    let params = a.model.params()?;
    let beta = match (&a.init, &a.init_file) {
        (Some(s), None) => {
            let masses: Vec<f64> = if s.trim().is_empty() {
                Vec::new()
            } else {
                s.split(',').map(|m| parse_f64(m, "init")).collect::<Result<_, _>>()?
            };
            IntervalPartition::from_masses(params.alpha_div(), &masses)?
        }
        (None, Some(p)) => IntervalPartition::from_json(&read(p)?)?,
        _ => return Err(CliError::Usage("evolve needs --init or --init-file".into())),
    };
    let levels = parse_levels(&a.levels)?;
    let block = match a.dt {
        Some(dt) if dt > 0.0 && dt.is_finite() => BlockSampler::Euler { dt },
        Some(dt) => return Err(CliError::Usage(format!("dt must be positive, got {dt}"))),
        None => BlockSampler::Exact,
    };
    let cfg = EvolveConfig { eps: a.model.cutoff, block, n_grid: a.model.n_grid, budget: a.model.budget, ..Default::default() };
    let path = evolve_seeded(&beta, &params, &levels, &cfg, seed)?;
    emit(out, path.to_jsonl().as_bytes())?;
    if let Some(p) = &a.csv {
        write_file(p, path.to_csv().as_bytes())?;
    }
    let last = path.snapshots.last();
    eprintln!(
        "evolve: {} levels, final mass {:.6} in {} blocks",
        path.snapshots.len(),
        last.map_or(0.0, |s| s.partition.total_mass()) + 0.0,
        last.map_or(0, |s| s.partition.len())
    );
    Ok(())
}

fn metric(a: &MetricArgs, out: Option<&Path>) -> Result<(), CliError> {
    let beta = IntervalPartition::from_json(&read(&a.a)?)?;
    let gamma = IntervalPartition::from_json(&read(&a.b)?)?;
    let value = match (a.metric, a.cutoff) {
        (MetricKind::Alpha, None) => dist_alpha(&beta, &gamma)?,
        (MetricKind::Hausdorff, None) => dist_hausdorff(&beta, &gamma),
        (kind, Some(m)) => {
            let d = match kind {
                MetricKind::Alpha => dist_alpha_truncated(&beta, &gamma, m)?,
                MetricKind::Hausdorff => dist_hausdorff_truncated(&beta, &gamma, m),
            };
            eprintln!("error bound {}", d.error_bound);
            d.value
        }
    };
    emit(out, format!("{value}\n").as_bytes())
}

fn run_verify(a: &VerifyArgs, seed: u64, out: Option<&Path>) -> Result<(), CliError> {
    let which: Suite = a.suite.parse()?;
    if !(a.scale > 0.0 && a.scale.is_finite()) {
        return Err(CliError::Usage(format!("scale must be positive, got {}", a.scale)));
    }
    let mode = if a.sequential { ProcessingMode::Sequential } else { ProcessingMode::Parallel };
    let reports = verify::suite(which, seed, &SuiteOptions { scale: a.scale, mode })?;
    for r in &reports {
        eprintln!("{}", r.summary());
    }
    let shown = if a.timing { reports.clone() } else { verify::without_timing(&reports) };
    let mut json = serde_json::to_string_pretty(&shown).map_err(|e| CliError::Io(e.to_string()))?;
    json.push('\n');
    emit(out, json.as_bytes())?;
    let bad = reports.iter().filter(|r| !r.ok()).count();
    if bad > 0 {
        return Err(CliError::VerifyFailed(bad));
    }
    Ok(())
}

enum Drawable {
    Process(SpindlePointProcess),
    Path(EvolutionPath),
}

fn load_drawable(path: &Path) -> Result<Drawable, CliError> {
    let text = read(path)?;
    let first = text.lines().find(|l| !l.trim().is_empty()).ok_or_else(|| ipevo::Error::Format("empty input file".into()))?;
    let header: serde_json::Value = serde_json::from_str(first).map_err(ipevo::Error::from)?;
    if header.get("horizon").is_some() {
        Ok(Drawable::Process(SpindlePointProcess::from_jsonl(&text)?))
    } else {
        Ok(Drawable::Path(EvolutionPath::from_jsonl(&text)?))
    }
}

fn render(a: &RenderArgs, out: Option<&Path>) -> Result<(), CliError> {
    let drawable = load_drawable(&a.input)?;
    let snaps = |d: &Drawable| -> Result<Vec<SkewerSnapshot>, CliError> {
        match d {
            Drawable::Path(p) => Ok(p.snapshots.clone()),
            Drawable::Process(pp) => {
                if a.strips == 0 {
                    return Err(CliError::Usage("strips must be positive".into()));
                }
                let x = Scaffolding::of(pp);
                let (lo, hi) = (x.min(), x.max());
                let n = a.strips;
                let levels: Vec<f64> =
                    (0..n).map(|k| if n == 1 { lo } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 }).collect();
                Ok(skewer_levels(pp, &levels))
            }
        }
    };
    let svg = match (a.mode, &drawable) {
        (RenderMode::Scaffolding, Drawable::Process(pp)) => render::scaffolding(pp),
        (RenderMode::Scaffolding, Drawable::Path(_)) => {
            return Err(CliError::Usage("scaffolding mode needs a point process from simulate".into()))
        }
        (RenderMode::Skewer, d) => render::skewer_strips(&snaps(d)?),
        (RenderMode::Massflow, d) => render::massflow(&snaps(d)?),
    };
    emit(out, svg.as_bytes())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("threads must be positive".into()));
        }
        par::set_threads(n);
    }
    let out = cli.out.as_deref();
    match &cli.cmd {
        Command::Simulate(a) => simulate(a, need_seed(cli.seed, "simulate")?, out),
        Command::Evolve(a) => evolve(a, need_seed(cli.seed, "evolve")?, out),
        Command::Metric(a) => metric(a, out),
        Command::Verify(a) => run_verify(a, need_seed(cli.seed, "verify")?, out),
        Command::Render(a) => render(a, out),
    }
}

fn main() -> ExitCode {
    let args = match config::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_grammar() {
        assert_eq!(parse_levels("0:1:0.25").unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(parse_levels("0:0.3:0.1").unwrap().len(), 4);
        assert_eq!(parse_levels("0.5").unwrap(), vec![0.5]);
        assert_eq!(parse_levels("0,0.2, 0.7").unwrap(), vec![0.0, 0.2, 0.7]);
        assert!(parse_levels("0:1:0").is_err());
        assert!(parse_levels("0:1").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::from(ipevo::Error::Budget("x".into())).code(), 3);
        assert_eq!(CliError::from(ipevo::Error::InvalidParameter("x".into())).code(), 2);
        assert_eq!(CliError::Usage("x".into()).code(), 2);
        assert_eq!(CliError::VerifyFailed(1).code(), 4);
    }
}
