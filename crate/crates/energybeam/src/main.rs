use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use energybeam::config::LoadedConfig;
use energybeam::{commands, Error};

#[derive(Parser)]
#[command(name = "energybeam", version, about = "Clustered robust energy beamforming from RSSI feedback")]
struct Cli {
    /// Worker threads for Monte-Carlo sweeps (0 = one per logical core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration.
    config: PathBuf,
    /// Override a config key, e.g. `--set harvest.trials=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (default: config `output_dir`, then $ENERGYBEAM_OUT_DIR, then `out`).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Estimation error and MRT/EGT energy loss versus training length.
    EstimateSweep(ConfigArgs),
    /// Harvested energy versus cluster count, with baselines.
    HarvestSweep(ConfigArgs),
    /// Solve one robust max-min instance; prints the solution JSON.
    Solve { instance: PathBuf },
    /// Cluster receivers by phase; prints the assignment JSON.
    ClusterDemo(ConfigArgs),
    /// Audit a solution file against its instance; prints the report JSON.
    Certify {
        instance: PathBuf,
        solution: PathBuf,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        /// Random sphere perturbations per member.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Writes to stdout; a reader that hangs up early (`| head`) is not an error.
fn emit(text: &str) -> Result<(), Error> {
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::io("<stdout>", e)),
        _ => Ok(()),
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Error> {
    emit(&serde_json::to_string_pretty(value)?)
}

fn load(args: &ConfigArgs) -> Result<LoadedConfig, Error> {
    LoadedConfig::load(&args.config, &args.overrides)
}

fn report(kind: &str, files: &energybeam::output::Artifacts, hash: &str) -> Result<(), Error> {
    let show = |p: &Path| p.display().to_string();
    emit(&format!(
        "{kind}: config {}\n  csv  {}\n  json {}\n  svg  {}",
        &hash[..12],
        show(&files.csv),
        show(&files.json),
        show(&files.svg)
    ))
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::EstimateSweep(args) => {
            let cfg = load(&args)?;
            let dir = cfg.output_dir(args.out_dir.as_deref());
            let (_, files) = commands::estimate_sweep(&cfg, &dir)?;
            report("estimate-sweep", &files, &cfg.config.hash())?;
        }
        Command::HarvestSweep(args) => {
            let cfg = load(&args)?;
            let dir = cfg.output_dir(args.out_dir.as_deref());
            let (_, files) = commands::harvest_sweep(&cfg, &dir)?;
            report("harvest-sweep", &files, &cfg.config.hash())?;
        }
        Command::Solve { instance } => print_json(&commands::solve(&instance)?)?,
        Command::ClusterDemo(args) => print_json(&commands::cluster_demo(&load(&args)?)?)?,
        Command::Certify { instance, solution, tol, samples, seed } => {
            let report = commands::certify(&instance, &solution, tol, samples, seed)?;
            print_json(&report)?;
            if !report.passed() {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
