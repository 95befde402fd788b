use std::path::PathBuf;
use std::process::ExitCode;

use choicebo_harness::commands;
use choicebo_harness::{HarnessError, HarnessResult, RunConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "choicebo", version, about = "Choice-based Bayesian optimisation experiments and service")]
struct Cli {
    /// JSON file overriding the defaults; a run's resolved_config.json works
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Results directory
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
    /// Allow writing into a non-empty results directory
    #[arg(long, global = true)]
    force: bool,
    /// Use the full experimental sizes instead of the desk-scale defaults
    #[arg(long, global = true)]
    paper_scale: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write choice datasets for every repetition
    GenerateData,
    /// Choice-GP and Oracle-GP test accuracy
    FitEval,
    /// Choice-GP BO and the Sobol baseline on a benchmark
    BoRun {
        /// Benchmark name, overriding the config
        #[arg(long)]
        benchmark: Option<String>,
    },
    /// Latent-dimension selection by PSIS-LOO
    SelectDim,
    /// Run the session HTTP service
    Serve {
        #[arg(long, env = "CHOICEBO_BIND_ADDR", default_value = "127.0.0.1:8080")]
        bind: String,
        #[arg(long, env = "CHOICEBO_DATA_DIR", default_value = "choicebo-data")]
        data_dir: PathBuf,
    },
}

fn run(cli: Cli) -> HarnessResult<()> {
    let mut config = RunConfig::resolve(cli.paper_scale, cli.config.as_deref(), cli.seed)?;
    match cli.command {
        Command::GenerateData => {
            let files = commands::generate_data(&config, &cli.out, cli.force)?;
            println!("wrote {} dataset files to {}", files.len(), cli.out.display());
        }
        Command::FitEval => {
            let report = commands::fit_eval(&config, &cli.out, cli.force)?;
            println!("{}", report.columns.join("  "));
            println!("{}", report.mean.iter().map(|m| format!("{m:.3}")).collect::<Vec<_>>().join("  "));
        }
        Command::BoRun { benchmark } => {
            if let Some(b) = benchmark {
                config.bo_run.benchmark = b;
            }
            let summary = commands::bo_run(&config, &cli.out, cli.force)?;
            for (method, curve) in &summary.median_curves {
                let first = curve.first().copied().unwrap_or(f64::NAN);
                let last = curve.last().copied().unwrap_or(f64::NAN);
                println!("{method}: median log-HV difference {first:.3} -> {last:.3}");
            }
        }
        Command::SelectDim => {
            let summary = commands::select_dim(&config, &cli.out, cli.force)?;
            print!("{}", summary.table);
        }
        Command::Serve { bind, data_dir } => {
            let bind = bind.parse().map_err(|e| HarnessError::Config(format!("--bind {bind}: {e}")))?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(choicebo_service::serve(choicebo_service::ServiceConfig { data_dir, bind }))
                .map_err(|e| HarnessError::Io(e.to_string()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
