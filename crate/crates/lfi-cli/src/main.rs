//! Command-line front end: simulate datasets, calibrate a study, run the
//! replicated experiment described by a TOML config, and recompute metrics
//! from a finished run directory.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use lfi::harness::{
    calibrate_experiment, metrics_from_dir, run_experiment, simulate_to_file, ExperimentConfig,
    ModelId,
};

#[derive(Parser)]
#[command(name = "lfi", version, about = "Likelihood-free Bayesian inference toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one dataset from a generative model and write it to a file.
    Simulate(SimulateArgs),
    /// Run only the calibration stage of a study and print its products.
    Calibrate(CalibrateArgs),
    /// Run the replicated study described by a config file.
    Run(RunArgs),
    /// Recompute the metrics table from a finished run directory.
    Metrics(MetricsArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Generative model: gand-k, mg1, stereo or toad.
    #[arg(long, value_parser = parse_model)]
    model: ModelId,
    /// Parameter values in the reporting parameterization, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    theta: Vec<f64>,
    /// Observations to draw (g-and-k and M/G/1 only).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file, in the model's dataset format.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Study description (TOML).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Study description (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the output directory named in the config.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    /// Directory a previous run wrote (holds manifest.json and chains/).
    #[arg(long)]
    run_dir: PathBuf,
    /// Destination file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_model(s: &str) -> Result<ModelId, String> {
    match s {
        "gand-k" => Ok(ModelId::GandK),
        "mg1" => Ok(ModelId::Mg1),
        "stereo" => Ok(ModelId::Stereo),
        "toad" => Ok(ModelId::Toad),
        other => Err(format!("unknown model {other}; expected gand-k, mg1, stereo or toad")),
    }
}

fn dispatch(cli: Cli) -> Result<(), lfi::Error> {
    match cli.command {
        Command::Simulate(args) => {
            simulate_to_file(args.model, &args.theta, args.n, args.seed, &args.out)?;
            println!("wrote {}", args.out.display());
        }
        Command::Calibrate(args) => {
            let cfg = ExperimentConfig::read(&args.config)?;
            let calibration = calibrate_experiment(&cfg)?;
            if let Some(eps) = calibration.epsilon {
                println!("epsilon: {eps}");
            }
            if let Some(b) = calibration.mmd_bandwidth {
                println!("mmd bandwidth: {b}");
            }
            if let Some(weights) = &calibration.composite_weights {
                let parts: Vec<String> = weights.iter().map(f64::to_string).collect();
                println!("composite weights: {}", parts.join(","));
            }
            if let Some(m) = calibration.bsl_m {
                println!("bsl m: {m}");
            }
            if let Some(sd) = calibration.bsl_loglik_sd {
                println!("bsl log-likelihood sd: {sd}");
            }
        }
        Command::Run(args) => {
            let mut cfg = ExperimentConfig::read(&args.config)?;
            if let Some(out_dir) = args.out_dir {
                cfg.out_dir = out_dir;
            }
            let manifest = run_experiment(&cfg)?;
            println!("run directory: {}", cfg.out_dir.display());
            println!(
                "replicates completed: {} of {}",
                manifest.results.len(),
                cfg.replicates
            );
            for excluded in &manifest.exclusions {
                println!("replicate {} excluded: {}", excluded.replicate, excluded.error);
            }
            println!("total simulator calls: {}", manifest.total_sims);
        }
        Command::Metrics(args) => {
            let table = metrics_from_dir(&args.run_dir)?;
            match args.out {
                Some(path) => {
                    table.write_csv(&path)?;
                    println!("wrote {}", path.display());
                }
                None => print!("{}", table.to_csv()),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
