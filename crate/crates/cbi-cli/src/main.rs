//! Command-line interface: derive constants, simulate paths, estimate
//! drift parameters, evaluate the characteristic functional, sample limit
//! laws, run experiments, and run the acceptance suites.
//!
//! Exit codes: 0 success, 1 runtime failure (including failed validation
//! suites), 2 usage or configuration errors. The `CBI_THREADS` variable
//! caps worker parallelism for experiments.

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cbi::estimate::estimate_all;
use cbi::harness::{report_to_csv, run_experiment, ExperimentConfig};
use cbi::limits::{
    sample_increment_law, sample_mixed_normal, sample_normal_limit, sample_series_c0, MixedKind,
    NormalLimit, WSource,
};
use cbi::model::CbiParams;
use cbi::simulate::{simulate, ObservationPath, Scheme};
use cbi::validation::{run_suite, Suite};
use cbi::CbiError;

#[derive(Parser)]
#[command(
    name = "cbi",
    version,
    about = "branching-with-immigration simulation and inference"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the derived model constants as JSON.
    Derive(DeriveArgs),
    /// Simulate a discrete skeleton and write it as CSV.
    Simulate(SimulateArgs),
    /// Estimate drift parameters from a path CSV.
    Estimate(EstimateArgs),
    /// Evaluate the characteristic functional on a theta grid (CSV).
    Charfn(CharfnArgs),
    /// Sample limit laws.
    Limits(LimitsArgs),
    /// Run a Monte Carlo experiment from a JSON config.
    Experiment(ExperimentArgs),
    /// Run the acceptance suites.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct DeriveArgs {
    /// Model parameters (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    #[value(name = "exact_cir", alias = "exact-cir")]
    ExactCir,
    #[value(name = "exact_pure_immigration", alias = "exact-pure-immigration")]
    ExactPureImmigration,
    #[value(name = "euler_thinning", alias = "euler-thinning")]
    EulerThinning,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::ExactCir => Scheme::ExactCir,
            SchemeArg::ExactPureImmigration => Scheme::ExactPureImmigration,
            SchemeArg::EulerThinning => Scheme::EulerThinning,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Model parameters (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Number of transitions.
    #[arg(long)]
    n: usize,
    #[arg(long, value_enum)]
    scheme: SchemeArg,
    #[arg(long)]
    seed: u64,
    /// Substeps per unit interval (Euler scheme).
    #[arg(long, default_value_t = 200)]
    substeps: u32,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Path CSV produced by `simulate`.
    #[arg(long)]
    path: PathBuf,
    /// Model parameters (JSON); provides the known immigration mean.
    #[arg(long)]
    params: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CharfnArgs {
    /// Model parameters (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Horizon t >= 0.
    #[arg(long)]
    t: f64,
    /// Initial value x >= 0.
    #[arg(long)]
    x: f64,
    /// Theta grid as lo:hi:points.
    #[arg(long, value_parser = parse_grid, allow_hyphen_values = true)]
    theta_grid: Grid,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy)]
struct Grid {
    lo: f64,
    hi: f64,
    points: usize,
}

fn parse_grid(s: &str) -> Result<Grid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err("expected lo:hi:points".into());
    }
    let lo: f64 = parts[0].parse().map_err(|e| format!("lo: {e}"))?;
    let hi: f64 = parts[1].parse().map_err(|e| format!("hi: {e}"))?;
    let points: usize = parts[2].parse().map_err(|e| format!("points: {e}"))?;
    if points < 2 || hi <= lo || hi.is_nan() || lo.is_nan() {
        return Err("need hi > lo and at least 2 points".into());
    }
    Ok(Grid { lo, hi, points })
}

#[derive(Args)]
struct LimitsArgs {
    #[command(subcommand)]
    action: LimitsAction,
}

#[derive(Subcommand)]
enum LimitsAction {
    /// Draw from a limit law and write one value per CSV row.
    Sample(LimitsSampleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum LimitKind {
    /// Mixed normal of the drift pair (first coordinate).
    MixedDriftB,
    /// Mixed normal of the drift pair (second coordinate).
    MixedDriftA,
    /// Mixed normal of the step pair (first coordinate).
    MixedStepRho,
    /// Mixed normal of the step pair (second coordinate).
    MixedStepInflow,
    /// Mixed normal of the martingale partial sums (first coordinate).
    MixedMartingale1,
    /// Mixed normal of the martingale partial sums (second coordinate).
    MixedMartingale2,
    /// Geometric series limit of the pure-immigration growth error.
    SeriesC0,
    /// One-step increment law of the pure-immigration regime.
    Increment,
    /// Normal limit of the pure-immigration immigration-mean error.
    NormalImmigration,
    /// Normal limit of the pure-immigration martingale mean.
    NormalMartingale,
}

#[derive(Args)]
struct LimitsSampleArgs {
    /// Model parameters (JSON).
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    kind: LimitKind,
    /// Number of draws.
    #[arg(long)]
    n: usize,
    /// Fixed growth-limit realization w > 0.
    #[arg(long, default_value_t = 1.0)]
    w: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tail tolerance for the series sampler.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Report JSON output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-replicate statistics CSV output.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Analytic,
    Distributional,
    All,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, value_enum)]
    suite: SuiteArg,
    /// Summary JSON output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_params(path: &Path) -> anyhow::Result<CbiParams> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let params: CbiParams = serde_json::from_str(&text)
        .map_err(|e| anyhow!(CbiError::Config(format!("{}: {e}", path.display()))))?;
    params.validate().map_err(|e| anyhow!(e))?;
    Ok(params)
}

fn write_out(out: &Option<PathBuf>, content: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, content).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{content}"),
    }
    Ok(())
}

fn path_to_csv(path: &ObservationPath) -> String {
    let mut out = format!(
        "# scheme={} seed={} delta_t={}\nk,X_k\n",
        path.scheme, path.seed, path.delta_t
    );
    for (k, x) in path.values.iter().enumerate() {
        out.push_str(&format!("{k},{x}\n"));
    }
    out
}

fn path_from_csv(text: &str) -> anyhow::Result<ObservationPath> {
    let mut scheme = Scheme::EulerThinning;
    let mut seed = 0u64;
    let mut values = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            for field in meta.split_whitespace() {
                if let Some(v) = field.strip_prefix("scheme=") {
                    scheme = v.parse().map_err(|e| anyhow!("{e}"))?;
                } else if let Some(v) = field.strip_prefix("seed=") {
                    seed = v.parse().context("seed metadata")?;
                }
            }
            continue;
        }
        if line.starts_with("k,") {
            continue;
        }
        let (_, x) = line
            .split_once(',')
            .ok_or_else(|| anyhow!(CbiError::Config(format!("bad CSV row '{line}'"))))?;
        values.push(x.trim().parse::<f64>().context("parsing observation")?);
    }
    let path = ObservationPath {
        values,
        delta_t: 1.0,
        scheme,
        seed,
    };
    path.validate().map_err(|e| anyhow!(e))?;
    Ok(path)
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(raw) = std::env::var("CBI_THREADS") {
        let threads: usize = raw
            .parse()
            .map_err(|e| anyhow!(CbiError::Config(format!("CBI_THREADS: {e}"))))?;
        if threads == 0 {
            return Err(anyhow!(CbiError::Config(
                "CBI_THREADS must be positive".into()
            )));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| anyhow!(CbiError::Config(format!("thread pool: {e}"))))?;
    }
    Ok(())
}

fn run() -> anyhow::Result<i32> {
    let cli = Cli::parse();
    configure_threads()?;
    match cli.command {
        Command::Derive(args) => {
            let params = load_params(&args.config)?;
            let derived = params.derive();
            let mut text = serde_json::to_string_pretty(&derived)?;
            text.push('\n');
            write_out(&args.out, &text)?;
        }
        Command::Simulate(args) => {
            let params = load_params(&args.config)?;
            let path = simulate(
                &params,
                args.scheme.into(),
                args.n,
                args.substeps,
                args.seed,
            )
            .map_err(|e| anyhow!(e))?;
            write_out(&args.out, &path_to_csv(&path))?;
        }
        Command::Estimate(args) => {
            let params = load_params(&args.params)?;
            let text = std::fs::read_to_string(&args.path)
                .with_context(|| format!("reading {}", args.path.display()))?;
            let path = path_from_csv(&text)?;
            let result = estimate_all(&path, &params.derive());
            let mut text = serde_json::to_string_pretty(&result)?;
            text.push('\n');
            write_out(&args.out, &text)?;
        }
        Command::Charfn(args) => {
            let params = load_params(&args.config)?;
            let g = args.theta_grid;
            let mut out = String::from("theta,re,im\n");
            for i in 0..g.points {
                let theta = g.lo + (g.hi - g.lo) * i as f64 / (g.points - 1) as f64;
                let phi = cbi::affine::char_functional(&params, args.t, args.x, theta)
                    .map_err(|e| anyhow!(e))?;
                out.push_str(&format!("{theta},{},{}\n", phi.re, phi.im));
            }
            write_out(&args.out, &out)?;
        }
        Command::Limits(args) => {
            let LimitsAction::Sample(s) = args.action;
            let params = load_params(&s.config)?;
            let d = params.derive();
            let mut rng = cbi::rng::seeded(s.seed);
            let source = WSource::Fixed(s.w);
            let mixed = |kind: MixedKind, coord: usize, rng: &mut _| {
                sample_mixed_normal(&d, kind, &source, rng).map(|v| v[coord])
            };
            let mut out = String::from("draw\n");
            for _ in 0..s.n {
                let v = match s.kind {
                    LimitKind::MixedDriftB => mixed(MixedKind::DriftPair, 0, &mut rng),
                    LimitKind::MixedDriftA => mixed(MixedKind::DriftPair, 1, &mut rng),
                    LimitKind::MixedStepRho => mixed(MixedKind::StepPair, 0, &mut rng),
                    LimitKind::MixedStepInflow => mixed(MixedKind::StepPair, 1, &mut rng),
                    LimitKind::MixedMartingale1 => mixed(MixedKind::MartingalePair, 0, &mut rng),
                    LimitKind::MixedMartingale2 => mixed(MixedKind::MartingalePair, 1, &mut rng),
                    LimitKind::SeriesC0 => sample_series_c0(&d, &params.nu, s.w, s.tol, &mut rng),
                    LimitKind::Increment => sample_increment_law(&d, &params.nu, &mut rng),
                    LimitKind::NormalImmigration => {
                        sample_normal_limit(&d, NormalLimit::DriftImmigration, &mut rng)
                    }
                    LimitKind::NormalMartingale => {
                        sample_normal_limit(&d, NormalLimit::MartingaleMean, &mut rng)
                    }
                }
                .map_err(|e| anyhow!(e))?;
                out.push_str(&format!("{v}\n"));
            }
            write_out(&s.out, &out)?;
        }
        Command::Experiment(args) => {
            let text = std::fs::read_to_string(&args.config)
                .with_context(|| format!("reading {}", args.config.display()))?;
            let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| {
                anyhow!(CbiError::Config(format!("{}: {e}", args.config.display())))
            })?;
            let report = run_experiment(&cfg).map_err(|e| anyhow!(e))?;
            eprintln!("experiment finished in {} ms", report.runtime_ms);
            let mut text = serde_json::to_string_pretty(&report)?;
            text.push('\n');
            write_out(&args.out, &text)?;
            if let Some(csv) = &args.csv {
                std::fs::write(csv, report_to_csv(&report))
                    .with_context(|| format!("writing {}", csv.display()))?;
            }
        }
        Command::Validate(args) => {
            let suite = match args.suite {
                SuiteArg::Analytic => Suite::Analytic,
                SuiteArg::Distributional => Suite::Distributional,
                SuiteArg::All => Suite::All,
            };
            let summary = run_suite(suite);
            for c in &summary.criteria {
                eprintln!(
                    "{} criterion {:>2} ({}): {} [{} ms]",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.id,
                    c.name,
                    c.detail,
                    c.runtime_ms
                );
            }
            let mut text = serde_json::to_string_pretty(&summary)?;
            text.push('\n');
            write_out(&args.out, &text)?;
            if !summary.all_passed {
                return Ok(1);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            let usage = err
                .downcast_ref::<CbiError>()
                .map(|e| matches!(e, CbiError::Config(_)))
                .unwrap_or(false);
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
