use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Parser, Subcommand};
use kimura_cli::{
    apply_overrides, execute, exit_status, load_config, read_report, summary_table, Command, ExperimentRegistry,
};
use kimura_core::model::ModelRegistry;

#[derive(Parser)]
#[command(name = "kimura", version, about = "Simulate and diagnose Kimura diffusions")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON run description.
    #[arg(long)]
    config: PathBuf,
    /// Overrides sim.master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the model coefficients against the standing assumptions.
    Validate(RunArgs),
    /// Simulate the configured equation and export paths.
    Simulate(RunArgs),
    /// Run the experiments listed in the config.
    Diagnose(RunArgs),
    /// Compare reweighted standard paths with singular paths.
    Compare(RunArgs),
    /// Estimate Hölder norms of the coefficients.
    Holder(RunArgs),
    /// Print the summary of an existing report.json.
    Report {
        /// Directory holding report.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// List registered models and experiments.
    List,
}

fn run_command(command: Command, args: RunArgs) -> anyhow::Result<u8> {
    let mut config = load_config(&args.config)?;
    apply_overrides(&mut config, args.seed, args.out);
    let models = ModelRegistry::with_builtins();
    let experiments = ExperimentRegistry::with_builtins();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(k) = args.workers {
        anyhow::ensure!(k > 0, "--workers must be positive");
        pool = pool.num_threads(k);
    }
    let pool = pool.build().context("building the worker pool")?;
    let reports = pool.install(|| execute(command, &config, &models, &experiments))?;
    print!("{}", summary_table(&reports));
    println!("report written to {}", config.output_dir.join("report.json").display());
    Ok(exit_status(&reports))
}

fn dispatch(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Cmd::Validate(a) => run_command(Command::Validate, a),
        Cmd::Simulate(a) => run_command(Command::Simulate, a),
        Cmd::Diagnose(a) => run_command(Command::Diagnose, a),
        Cmd::Compare(a) => run_command(Command::Compare, a),
        Cmd::Holder(a) => run_command(Command::Holder, a),
        Cmd::Report { out } => {
            let reports = read_report(&out)?;
            print!("{}", summary_table(&reports));
            Ok(exit_status(&reports))
        }
        Cmd::List => {
            println!("models:");
            for (name, desc) in ModelRegistry::with_builtins().describe() {
                println!("  {name:<24} {desc}");
            }
            println!("experiments:");
            for (name, desc) in ExperimentRegistry::with_builtins().describe() {
                println!("  {name:<24} {desc}");
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
