use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use vnsim::config::{RunConfig, RunMode};
use vnsim::io::{read_metrics, AGGREGATE_SCHEMA};
use vnsim::run::{aggregate_sweep, run_particle, run_pde, run_sweep, RunError};

const EXIT_VALIDATION: u8 = 1;
const EXIT_BLOW_UP: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "vnsim", version, about = "Saturated-drag Vlasov-Navier-Stokes particle and mean-field runs")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file; defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output_dir` in the configuration.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Master seed, overriding `seed` in the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a configuration and list every violated bound.
    Validate(RunArgs),
    /// Run the particle system.
    RunParticle(RunArgs),
    /// Run the mean-field solver.
    RunPde(RunArgs),
    /// Run an N-sweep with replicas and a mean-field reference.
    Sweep(RunArgs),
    /// Re-aggregate a sweep directory, or check the metrics table of a run directory.
    Metrics {
        dir: PathBuf,
    },
}

fn load(args: &RunArgs, mode: Option<RunMode>) -> Result<RunConfig, RunError> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(m) = mode {
        cfg.mode = m;
    }
    if let Some(o) = &args.output {
        cfg.output_dir = o.clone();
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn exit_for(err: &RunError) -> ExitCode {
    eprintln!("error: {err}");
    if err.is_blow_up() {
        ExitCode::from(EXIT_BLOW_UP)
    } else {
        ExitCode::from(EXIT_VALIDATION)
    }
}

fn metrics(dir: &Path) -> Result<ExitCode, RunError> {
    if dir.join("aggregate.csv").exists() || dir.join("failures.csv").exists() {
        let table = aggregate_sweep(dir)?;
        table.save(&dir.join("aggregate.csv"), AGGREGATE_SCHEMA)?;
        println!("{}: {} aggregate rows", dir.display(), table.rows.len());
    } else {
        let records = read_metrics(&dir.join("metrics.csv"))?;
        println!("{}: {} metrics rows", dir.display(), records.len());
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            eprintln!("error: cannot configure {w} workers: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    }
    let result = match &cli.command {
        Command::Validate(args) => load(args, None).and_then(|cfg| {
            cfg.validate()?;
            println!("configuration valid");
            Ok(ExitCode::SUCCESS)
        }),
        Command::RunParticle(args) => load(args, Some(RunMode::Particle)).and_then(|cfg| {
            let art = run_particle(&cfg, &cfg.output_dir)?;
            println!("{}", art.dir.display());
            Ok(ExitCode::SUCCESS)
        }),
        Command::RunPde(args) => load(args, Some(RunMode::Pde)).and_then(|cfg| {
            let art = run_pde(&cfg, &cfg.output_dir)?;
            println!("{}", art.dir.display());
            Ok(ExitCode::SUCCESS)
        }),
        Command::Sweep(args) => load(args, Some(RunMode::Sweep)).and_then(|cfg| {
            let report = run_sweep(&cfg, &cfg.output_dir)?;
            println!("{}", report.dir.display());
            for f in &report.failures {
                eprintln!("failed: {} ({})", f.label, f.message);
            }
            Ok(if report.failures.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_PARTIAL) })
        }),
        Command::Metrics { dir } => metrics(dir),
    };
    result.unwrap_or_else(|e| exit_for(&e))
}
