//! `snakesim` command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use sha2::{Digest, Sha256};
use snakesim::harness::{run_experiment, ExperimentResult, ExperimentSpec, Verdict, EXPERIMENTS};
use snakesim::SimError;

#[derive(Parser, Debug)]
#[command(name = "snakesim", version, about = "Monte Carlo experiments for branching particles and Brownian snakes in random environment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Survival probability against the exact oracle and its limit.
    Survival(RunArgs),
    /// Martingale problem residuals of the forward system.
    BranchingMp(RunArgs),
    /// Contour invariants and inverse local time of the snake.
    Snake(RunArgs),
    /// Pathwise and distributional reversal checks.
    Reversal(RunArgs),
    /// Occupation identity between contour and snake.
    Occupation(RunArgs),
    /// Functional decomposition of the contour.
    Functional(RunArgs),
    /// Brox diffusion, its embedded walk and the exit time.
    Brox(RunArgs),
    /// Snake occupation against the forward system.
    Theorem1(RunArgs),
    /// Every experiment in turn with its defaults and the given overrides.
    All(RunArgs),
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// TOML experiment spec; absent keys take the experiment defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated scaling parameters.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long)]
    replicates: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output root; each run writes <out>/<experiment>/<timestamp>/.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long, env = "SNAKESIM_WORKERS")]
    workers: Option<usize>,
    /// Print every check, not just the verdict line.
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

enum Failure {
    Usage(String),
    Run(String),
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Validation { .. } | SimError::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

fn load_spec(id: &str, args: &RunArgs) -> Result<ExperimentSpec, Failure> {
    let mut spec = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
            let spec = ExperimentSpec::from_toml_str(&text, Some(id))?;
            if spec.experiment != id {
                return Err(Failure::Usage(format!(
                    "{} describes experiment `{}`, not `{id}`",
                    path.display(),
                    spec.experiment
                )));
            }
            spec
        }
        None => ExperimentSpec::defaults(id)?,
    };
    if let Some(n) = &args.n {
        spec.n = n.clone();
    }
    if let Some(r) = args.replicates {
        spec.replicates = r;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(w) = args.workers {
        spec.workers = w;
    }
    spec.validate()?;
    Ok(spec)
}

fn run_dir(root: &Path, id: &str, stamp: &str) -> PathBuf {
    let base = root.join(id).join(stamp);
    let mut dir = base.clone();
    let mut k = 1;
    while dir.exists() {
        dir = PathBuf::from(format!("{}-{k}", base.display()));
        k += 1;
    }
    dir
}

fn write_run(dir: &Path, spec: &ExperimentSpec, result: &ExperimentResult, started: &str, wall: f64) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::Run(format!("writing {}: {e}", dir.display()));
    let toml = spec.to_toml_string()?;
    result.write_bundle(dir)?;
    fs::write(dir.join("config.toml"), &toml).map_err(io)?;
    let hash = Sha256::digest(toml.as_bytes());
    let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();
    let manifest = json!({
        "experiment": spec.experiment,
        "seed": spec.seed,
        "replicates": spec.replicates,
        "n": spec.n,
        "workers": spec.workers,
        "config_sha256": hex,
        "snakesim_version": snakesim::VERSION,
        "cli_version": env!("CARGO_PKG_VERSION"),
        "started_at": started,
        "wall_time_seconds": wall,
        "all_pass": result.all_pass,
        "replicate_failures": result.replicate_failures,
        "argv": std::env::args().collect::<Vec<_>>(),
    });
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Run(e.to_string()))?;
    fs::write(dir.join("manifest.json"), text).map_err(io)?;
    Ok(())
}

fn run_one(spec: &ExperimentSpec, args: &RunArgs) -> Result<bool, Failure> {
    let now = chrono::Utc::now();
    let started = now.to_rfc3339();
    let clock = Instant::now();
    let result = run_experiment(spec)?;
    let wall = clock.elapsed().as_secs_f64();
    let root = spec.output.clone().unwrap_or_else(|| args.out.clone());
    let dir = run_dir(&root, &spec.experiment, &now.format("%Y%m%dT%H%M%S%.3fZ").to_string());
    write_run(&dir, spec, &result, &started, wall)?;
    if args.verbose > 0 {
        for c in &result.checks {
            let tag = match c.verdict {
                Verdict::Pass => "pass",
                Verdict::Fail => "FAIL",
                Verdict::Informational => "info",
            };
            eprintln!("  [{tag}] {} = {:.6} (se {:.3e}) {} {}", c.statistic, c.estimate, c.stderr, c.tolerance, c.target_note);
        }
    }
    let failed = result.checks.iter().filter(|c| c.verdict == Verdict::Fail).count();
    println!(
        "{}: {} ({} checks, {} failed, {} replicate failures, {:.1}s) -> {}",
        spec.experiment,
        if result.all_pass { "PASS" } else { "FAIL" },
        result.checks.len(),
        failed,
        result.replicate_failures,
        wall,
        dir.display()
    );
    Ok(result.all_pass)
}

fn run(cli: Cli) -> Result<bool, Failure> {
    let (id, args) = match cli.command {
        Command::Survival(a) => ("survival", a),
        Command::BranchingMp(a) => ("branching-mp", a),
        Command::Snake(a) => ("snake", a),
        Command::Reversal(a) => ("reversal", a),
        Command::Occupation(a) => ("occupation", a),
        Command::Functional(a) => ("functional", a),
        Command::Brox(a) => ("brox", a),
        Command::Theorem1(a) => ("theorem1", a),
        Command::All(a) => {
            if a.config.is_some() {
                return Err(Failure::Usage("`all` takes overrides only, not --config".into()));
            }
            let specs = EXPERIMENTS.iter().map(|id| load_spec(id, &a)).collect::<Result<Vec<_>, _>>()?;
            let mut ok = true;
            for spec in &specs {
                ok &= run_one(spec, &a)?;
            }
            return Ok(ok);
        }
    };
    let spec = load_spec(id, &args)?;
    run_one(&spec, &args)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
