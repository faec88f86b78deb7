use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use oesnn_harness::config::Experiment;
use oesnn_harness::{run_experiment, ExperimentConfig, HarnessError};

/// Optoelectronic spiking neuron experiments.
#[derive(Parser)]
#[command(name = "oesnn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Print the default config of a recipe.
    Init { experiment: String },
    /// Run one recipe with its defaults, optionally starting from a config.
    #[command(external_subcommand)]
    Recipe(Vec<String>),
}

#[derive(clap::Args, Default)]
struct Common {
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Parser)]
struct RecipeArgs {
    /// Config file supplying parameter tables.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

fn build(cmd: Command) -> Result<Option<ExperimentConfig>, HarnessError> {
    let (mut cfg, common) = match cmd {
        Command::Run { config, common } => (ExperimentConfig::load(&config)?, common),
        Command::Init { experiment } => {
            let e: Experiment = experiment.parse()?;
            print!("{}", ExperimentConfig::new(e).to_toml());
            return Ok(None);
        }
        Command::Recipe(args) => {
            let name = args.first().cloned().unwrap_or_default();
            let e: Experiment = name.parse()?;
            let ra = RecipeArgs::try_parse_from(&args)
                .map_err(|err| HarnessError::config(err.render()))?;
            let mut cfg = match &ra.config {
                Some(p) => ExperimentConfig::load(p)?,
                None => ExperimentConfig::new(e),
            };
            cfg.experiment = e;
            (cfg, ra.common)
        }
    };
    if let Some(o) = common.out {
        cfg.output_dir = o;
    }
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    Ok(Some(cfg))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match build(cli.command) {
        Ok(Some(c)) => c,
        Ok(None) => return ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    match run_experiment(&cfg) {
        Ok(m) => {
            println!(
                "{}: {} artifacts in {}",
                m.experiment,
                m.outputs.len(),
                cfg.output_dir.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
