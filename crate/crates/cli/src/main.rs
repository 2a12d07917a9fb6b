use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use drgrad::data::Split;
use drgrad::experiment::{
    cmd_eval, cmd_gen_data, cmd_telemetry_summary, cmd_train, summarize, DatasetSource, ExperimentConfig, Overrides,
};
use drgrad::graph::Mode;
use drgrad::Error;

#[derive(Parser)]
#[command(name = "drgrad", version, about = "Multi-task learning experiments with gradient routing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic train/test CSVs and a manifest.
    GenData(ConfigArgs),
    /// Train every configured seed; one run directory per seed.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Run the seeds on concurrent threads.
        #[arg(long)]
        parallel_seeds: bool,
    },
    /// Re-evaluate a trained run directory.
    Eval {
        run: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
    },
    /// First/last-window means of a run's gradient telemetry.
    TelemetrySummary { run: PathBuf },
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON experiment config; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    cos_theta: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

impl ConfigArgs {
    fn resolve(&self) -> drgrad::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        let mode = self.mode.as_deref().map(str::parse::<Mode>).transpose()?;
        Overrides {
            mode,
            seed: self.seed,
            out: self.out.clone(),
            gamma: self.gamma,
            rho: self.rho,
            cos_theta: self.cos_theta,
        }
        .apply(&mut cfg)?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> drgrad::Result<()> {
    match cli.command {
        Command::GenData(args) => {
            let mut cfg = args.resolve()?;
            let DatasetSource::Synthetic(spec) = &mut cfg.dataset else {
                return Err(Error::Config("gen-data needs a synthetic dataset config".into()));
            };
            if let Some(seed) = args.seed {
                spec.seed = seed;
            }
            let manifest = cmd_gen_data(spec, &cfg.out)?;
            println!("{}", serde_json::to_string_pretty(&manifest)?);
        }
        Command::Train { config, parallel_seeds } => {
            let cfg = config.resolve()?;
            let outcomes = cmd_train(&cfg, parallel_seeds)?;
            for o in &outcomes {
                eprintln!("seed {}: {} steps -> {}", o.seed, o.steps, o.dir.display());
            }
            print!("{}", summarize(&outcomes).to_text());
        }
        Command::Eval { run, split } => {
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            println!("{}", serde_json::to_string_pretty(&cmd_eval(&run, split)?)?);
        }
        Command::TelemetrySummary { run } => {
            println!("{}", serde_json::to_string_pretty(&cmd_telemetry_summary(&run)?)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() {
                2
            } else if e.is_numeric() {
                3
            } else {
                1
            })
        }
    }
}
