//! `fiberwalk` command line: fiber enumeration, Markov-chain sampling,
//! tilting MLE solves, and phase-transition scans.
//!
//! Exit codes: 0 success, 2 invalid input, 3 not converged, 4 budget
//! exceeded.

use std::fs;
use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use fiberwalk::fiber::{enumerate_fiber, fiber_weights, WeightKind, DEFAULT_FIBER_BUDGET};
use fiberwalk::moves::MoveSet;
use fiberwalk::phase::{
    fiber_experiment, scan_2way, scan_3way, scan_csv_2way, scan_csv_3way, FiberExperimentConfig,
    Scan2Config,
};
use fiberwalk::sampler::{empirical_distribution, run_chain, tv_distance, ChainConfig};
use fiberwalk::solver::{solve_mle, SolveOptions, SolveReport};
use fiberwalk::tensor::{MarginSpec, Table};
use fiberwalk::Error as CoreError;

#[derive(Parser)]
#[command(name = "fiberwalk", version, about = "Plane-sum table fibers: enumerate, sample, solve, scan")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// RNG seed for sampling commands.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads for grid scans (rows are sorted either way).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Output format where both are supported.
    #[arg(long, global = true, value_enum, default_value_t = Format::Default)]
    format: Format,

    /// Record a reproduction manifest alongside the output.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    /// csv for scans, json elsewhere
    Default,
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Target {
    Uniform,
    #[value(alias = "hypergeometric")]
    Hypergeom,
}

impl From<Target> for WeightKind {
    fn from(t: Target) -> WeightKind {
        match t {
            Target::Uniform => WeightKind::Uniform,
            Target::Hypergeom => WeightKind::Hypergeometric,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the Markov basis move count for a table shape.
    Moves(MovesArgs),
    /// Enumerate the fiber of a margin spec.
    Enumerate(EnumerateArgs),
    /// Run a Metropolis-Hastings chain on a fiber.
    Sample(SampleArgs),
    /// Sample, enumerate, and report the total variation distance.
    TvCheck(TvCheckArgs),
    /// Maximum-likelihood tilting for a margin spec.
    SolveMle(SolveArgs),
    /// Sweep (n, B) grids of the reduced heavy-corner system.
    BarvinokScan(Scan3Args),
    /// Sweep the 2-way two-value bezel margins.
    #[command(name = "scan-2way")]
    Scan2way(Scan2Args),
    /// Exact-vs-sampled comparison on one fiber.
    FiberExperiment(ExperimentArgs),
    /// Re-execute a recorded manifest.
    Rerun(RerunArgs),
}

#[derive(Args)]
struct MovesArgs {
    /// Table dims, e.g. 3,3,3 or 4,5.
    #[arg(long)]
    dims: UsizeList,
    /// Also print every move, one per line, as sparse "(i,j,k):+1;..." text
    /// with 0-based indices.
    #[arg(long)]
    list: bool,
    /// For 3-way dims, include the shared-index slice swaps (the basis the
    /// sampler uses) instead of only the distinct-index family.
    #[arg(long)]
    full_basis: bool,
}

#[derive(Args)]
struct EnumerateArgs {
    /// Margin spec JSON path, or '-' for stdin.
    #[arg(long, alias = "input", default_value = "-")]
    spec: String,
    /// Attach exact weights of this law to the output.
    #[arg(long, value_enum)]
    weights: Option<Target>,
    /// Enumeration budget.
    #[arg(long, default_value_t = DEFAULT_FIBER_BUDGET)]
    limit: usize,
    /// Emit only the count, not the tables.
    #[arg(long)]
    count_only: bool,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, alias = "input", default_value = "-")]
    spec: String,
    /// 'auto' for the greedy fill, or a Table JSON path.
    #[arg(long, default_value = "auto")]
    start: String,
    #[arg(long, value_enum, default_value_t = Target::Uniform)]
    target: Target,
    #[arg(long, default_value_t = 10_000)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    burnin: usize,
    #[arg(long, default_value_t = 1)]
    thin: usize,
    /// Keep every retained table in the output.
    #[arg(long)]
    keep_samples: bool,
}

#[derive(Args)]
struct TvCheckArgs {
    #[arg(long, alias = "input", default_value = "-")]
    spec: String,
    #[arg(long, value_enum, default_value_t = Target::Uniform)]
    target: Target,
    #[arg(long, default_value_t = 100_000)]
    steps: usize,
    #[arg(long, default_value_t = 1000)]
    burnin: usize,
    #[arg(long, default_value_t = 1)]
    thin: usize,
    #[arg(long, default_value_t = DEFAULT_FIBER_BUDGET)]
    limit: usize,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, alias = "input", default_value = "-")]
    spec: String,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
}

#[derive(Args)]
struct Scan3Args {
    #[arg(long)]
    n_grid: UsizeList,
    #[arg(long)]
    b_grid: F64List,
}

#[derive(Args)]
struct Scan2Args {
    #[arg(long)]
    n_grid: UsizeList,
    #[arg(long)]
    b_grid: F64List,
    /// Light-margin scale: light rows/columns get floor(C n).
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Bezel exponent in (0, 1): floor(n^delta) bezel rows and columns.
    #[arg(long, default_value_t = 0.55)]
    delta: f64,
    /// Heavy bezel (default): bezel margins floor(B C n), bulk floor(C n).
    /// Pass false for the light-bezel orientation.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    bezel_heavy: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, alias = "input", default_value = "-")]
    spec: String,
    #[arg(long, default_value_t = 10_000)]
    steps: usize,
    #[arg(long, default_value_t = 1000)]
    burnin: usize,
    #[arg(long, default_value_t = 1)]
    thin: usize,
    #[arg(long, default_value_t = DEFAULT_FIBER_BUDGET)]
    budget: usize,
}

#[derive(Args)]
struct RerunArgs {
    /// Manifest recorded by a previous run.
    #[arg(long)]
    manifest: PathBuf,
}

/// Comma-separated list attributes, e.g. `--dims 3,3,3`.
#[derive(Clone)]
struct UsizeList(Vec<usize>);

impl std::str::FromStr for UsizeList {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|e| e.to_string()))
            .collect::<Result<Vec<_>, _>>()
            .map(UsizeList)
    }
}

#[derive(Clone)]
struct F64List(Vec<f64>);

impl std::str::FromStr for F64List {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| e.to_string()))
            .collect::<Result<Vec<_>, _>>()
            .map(F64List)
    }
}

/// Everything needed to reproduce an output file byte for byte.
#[derive(Serialize, Deserialize)]
struct RunManifest {
    tool: String,
    version: String,
    command: String,
    argv: Vec<String>,
    seed: u64,
    threads: usize,
    output: Option<PathBuf>,
    unix_time: u64,
}

enum Failure {
    InvalidInput(String),
    NotConverged(String),
    BudgetExceeded(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::InvalidInput(_) => 2,
            Failure::NotConverged(_) => 3,
            Failure::BudgetExceeded(_) => 4,
        }
    }
    fn message(&self) -> &str {
        match self {
            Failure::InvalidInput(m) | Failure::NotConverged(m) | Failure::BudgetExceeded(m) => m,
        }
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Failure {
        match &e {
            CoreError::BudgetExceeded { .. } => Failure::BudgetExceeded(e.to_string()),
            CoreError::NotConverged { .. } | CoreError::PqNotConverged { .. } => {
                Failure::NotConverged(e.to_string())
            }
            _ => Failure::InvalidInput(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Failure {
        Failure::InvalidInput(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Failure {
        Failure::InvalidInput(format!("bad JSON: {e}"))
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    match run(&cli, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: &Cli, argv: &[String]) -> Result<(), Failure> {
    let output = match &cli.command {
        Command::Moves(args) => cmd_moves(args)?,
        Command::Enumerate(args) => cmd_enumerate(args, cli.format)?,
        Command::Sample(args) => cmd_sample(args, cli.seed)?,
        Command::TvCheck(args) => cmd_tv_check(args, cli)?,
        Command::SolveMle(args) => cmd_solve(args)?,
        Command::BarvinokScan(args) => {
            let rows = scan_3way(&args.n_grid.0, &args.b_grid.0, cli.threads)?;
            match cli.format {
                Format::Json => serde_json::to_string_pretty(&rows)?,
                _ => scan_csv_3way(&rows),
            }
        }
        Command::Scan2way(args) => {
            let config = Scan2Config {
                c: args.c,
                delta: args.delta,
                bezel_heavy: args.bezel_heavy,
            };
            let rows = scan_2way(&args.n_grid.0, &args.b_grid.0, &config, cli.threads)?;
            match cli.format {
                Format::Json => serde_json::to_string_pretty(&rows)?,
                _ => scan_csv_2way(&rows),
            }
        }
        Command::FiberExperiment(args) => cmd_experiment(args, cli.seed)?,
        Command::Rerun(args) => return rerun(args, cli),
    };

    match &cli.out {
        Some(path) => fs::write(path, output.as_bytes())?,
        None => print!("{output}"),
    }
    if let Some(path) = &cli.manifest {
        let manifest = RunManifest {
            tool: "fiberwalk".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command_name(&cli.command).to_string(),
            argv: argv.to_vec(),
            seed: cli.seed,
            threads: cli.threads,
            output: cli.out.clone(),
            unix_time: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
    }
    Ok(())
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Moves(_) => "moves",
        Command::Enumerate(_) => "enumerate",
        Command::Sample(_) => "sample",
        Command::TvCheck(_) => "tv-check",
        Command::SolveMle(_) => "solve-mle",
        Command::BarvinokScan(_) => "barvinok-scan",
        Command::Scan2way(_) => "scan-2way",
        Command::FiberExperiment(_) => "fiber-experiment",
        Command::Rerun(_) => "rerun",
    }
}

fn read_input(path: &str) -> Result<String, Failure> {
    if path == "-" {
        let mut buf = String::new();
        std::io::stdin().read_to_string(&mut buf)?;
        Ok(buf)
    } else {
        Ok(fs::read_to_string(path)?)
    }
}

fn read_spec(path: &str) -> Result<MarginSpec, Failure> {
    Ok(serde_json::from_str(&read_input(path)?)?)
}

fn cmd_moves(args: &MovesArgs) -> Result<String, Failure> {
    let dims = &args.dims.0;
    let (set, family) = match (dims.as_slice(), args.full_basis) {
        ([a, b, c], false) => (
            fiberwalk::moves::plane_moves_3way(*a, *b, *c)?,
            " (distinct-index family)",
        ),
        ([a, b, c], true) => (fiberwalk::moves::markov_basis_3way(*a, *b, *c)?, " (full basis)"),
        _ => (MoveSet::for_dims(dims)?, ""),
    };
    let mut out = format!("dims {dims:?}: {} moves{family}\n", set.len());
    if args.list {
        for m in set.moves()? {
            out.push_str(&m.sparse_text());
            out.push('\n');
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct EnumerateOutput {
    count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    tables: Option<Vec<Table>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
}

fn cmd_enumerate(args: &EnumerateArgs, format: Format) -> Result<String, Failure> {
    if format == Format::Csv {
        return Err(Failure::InvalidInput(
            "enumerate emits JSON; csv is not supported".into(),
        ));
    }
    let spec = read_spec(&args.spec)?;
    let fiber = enumerate_fiber(&spec, args.limit)?;
    let weights = match args.weights {
        Some(t) => Some(fiber_weights(&fiber, t.into())?.weights),
        None => None,
    };
    let out = EnumerateOutput {
        count: fiber.len(),
        tables: (!args.count_only).then(|| fiber.tables().to_vec()),
        weights,
    };
    Ok(serde_json::to_string_pretty(&out)? + "\n")
}

#[allow(clippy::too_many_arguments)]
fn chain_config(
    spec: &MarginSpec,
    start: &str,
    target: Target,
    steps: usize,
    burnin: usize,
    thin: usize,
    seed: u64,
    keep_samples: bool,
) -> Result<ChainConfig, Failure> {
    let start_table = if start == "auto" {
        spec.greedy_table()
    } else {
        let t: Table = serde_json::from_str(&read_input(start)?)?;
        if !spec.is_satisfied_by(&t) {
            return Err(Failure::InvalidInput(
                "start table does not satisfy the margin spec".into(),
            ));
        }
        t
    };
    Ok(ChainConfig {
        start: start_table,
        target: target.into(),
        steps,
        burn_in: burnin,
        thin,
        seed,
        keep_samples,
    })
}

fn cmd_sample(args: &SampleArgs, seed: u64) -> Result<String, Failure> {
    let spec = read_spec(&args.spec)?;
    let config = chain_config(
        &spec,
        &args.start,
        args.target,
        args.steps,
        args.burnin,
        args.thin,
        seed,
        args.keep_samples,
    )?;
    let moves = MoveSet::for_dims(&spec.dims())?;
    let stats = run_chain(&config, &moves)?;
    Ok(serde_json::to_string_pretty(&stats)? + "\n")
}

#[derive(Serialize)]
struct TvOutput {
    target: WeightKind,
    fiber_size: usize,
    kept: usize,
    acceptance_rate: f64,
    tv: f64,
}

fn cmd_tv_check(args: &TvCheckArgs, cli: &Cli) -> Result<String, Failure> {
    let spec = read_spec(&args.spec)?;
    let fiber = enumerate_fiber(&spec, args.limit)?;
    let config = chain_config(
        &spec,
        "auto",
        args.target,
        args.steps,
        args.burnin,
        args.thin,
        cli.seed,
        false,
    )?;
    let moves = MoveSet::for_dims(&spec.dims())?;
    let stats = run_chain(&config, &moves)?;
    let exact = fiber_weights(&fiber, args.target.into())?;
    let freq = empirical_distribution(&stats, &fiber)?;
    let tv = tv_distance(&freq, &exact.weights)?;
    let out = TvOutput {
        target: args.target.into(),
        fiber_size: fiber.len(),
        kept: stats.kept,
        acceptance_rate: stats.acceptance_rate,
        tv,
    };
    Ok(match cli.format {
        Format::Json => serde_json::to_string_pretty(&out)? + "\n",
        _ => format!(
            "tv = {tv:.6} (target {:?}, fiber size {}, {} kept samples)\n",
            out.target, out.fiber_size, out.kept
        ),
    })
}

fn cmd_solve(args: &SolveArgs) -> Result<String, Failure> {
    let spec = read_spec(&args.spec)?;
    let opts = SolveOptions {
        tol: args.tol,
        max_iter: args.max_iter,
    };
    let render = |report: &SolveReport| -> Result<String, Failure> {
        Ok(serde_json::to_string_pretty(report)? + "\n")
    };
    match solve_mle(&spec, &opts) {
        Ok(report) => render(&report),
        Err(CoreError::NotConverged { report }) => {
            // best iterate still goes to stdout; the exit code signals it
            print!("{}", render(&report)?);
            Err(Failure::NotConverged(format!(
                "residual {:.3e} after {} iterations",
                report.residual_inf, report.iterations
            )))
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_experiment(args: &ExperimentArgs, seed: u64) -> Result<String, Failure> {
    let spec = read_spec(&args.spec)?;
    let config = FiberExperimentConfig {
        steps: args.steps,
        burn_in: args.burnin,
        thin: args.thin,
        seed,
        budget: args.budget,
    };
    let report = fiber_experiment(&spec, &config)?;
    Ok(serde_json::to_string_pretty(&report)? + "\n")
}

fn rerun(args: &RerunArgs, cli: &Cli) -> Result<(), Failure> {
    let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(&args.manifest)?)?;
    if manifest.argv.first().map(String::as_str) == Some("rerun") {
        return Err(Failure::InvalidInput(
            "manifest records a rerun; refusing to recurse".into(),
        ));
    }
    // strip any recorded --out/--manifest, then honor the current flags
    let mut argv: Vec<String> = vec!["fiberwalk".into()];
    let mut skip = false;
    for arg in &manifest.argv {
        if skip {
            skip = false;
            continue;
        }
        if arg == "--out" || arg == "--manifest" {
            skip = true;
            continue;
        }
        argv.push(arg.clone());
    }
    if let Some(out) = &cli.out {
        argv.push("--out".into());
        argv.push(out.display().to_string());
    }
    let replay = Cli::try_parse_from(&argv)
        .map_err(|e| Failure::InvalidInput(format!("manifest argv: {e}")))?;
    let replay_argv: Vec<String> = argv.into_iter().skip(1).collect();
    run(&replay, &replay_argv)
}
