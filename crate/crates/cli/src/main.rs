use std::path::PathBuf;
use std::process::ExitCode;

use aqa_cli::{CliError, Run, RunConfig};
use aqa_core::data::ExpertMode;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "aqa", version, about = "Siamese metric learning for action quality assessment")]
struct Cli {
    /// JSON configuration file; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory holding all artifacts of this run.
    #[arg(long, global = true, default_value = "run")]
    run_dir: PathBuf,
    /// Dataset manifest (default: <run-dir>/data/manifest.csv).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    expert_mode: Option<ModeArg>,
    #[arg(long, global = true, value_enum)]
    activity: Option<ActivityArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Write a synthetic dataset with planted scores and faults to <run-dir>/data.
    GenSynthetic,
    /// Train the Siamese similarity network.
    TrainDml,
    /// Train the regression head on the frozen network.
    TrainScore,
    /// Score the test split and write predictions and metrics.
    Evaluate,
    /// Write per-clip similarity tables and charts.
    Feedback,
    /// Rebuild reports and charts from stored outputs.
    Report,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ModeArg {
    Best,
    Worst,
    Constant,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ActivityArg {
    Diving,
    Vault,
    Custom,
}

fn build_run(cli: &Cli) -> Result<Run, CliError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(mode) = cli.expert_mode {
        config.expert_mode = match mode {
            ModeArg::Best => ExpertMode::Best,
            ModeArg::Worst => ExpertMode::Worst,
            ModeArg::Constant => ExpertMode::Constant,
        };
    }
    if let Some(activity) = cli.activity {
        config.activity = match activity {
            ActivityArg::Diving => "diving",
            ActivityArg::Vault => "vault",
            ActivityArg::Custom => "custom",
        }
        .into();
    }
    Run::new(config, &cli.run_dir, cli.manifest.clone())
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let run = build_run(cli)?;
    run.echo_config()?;
    match cli.command {
        Command::GenSynthetic => {
            let manifest = run.gen_synthetic()?;
            println!("manifest: {}", manifest.display());
        }
        Command::TrainDml => {
            let s = run.train_dml()?;
            println!(
                "dml: {} epochs (best {}), {} positive / {} negative pairs",
                s.epochs_run, s.best_epoch, s.positives, s.negatives
            );
        }
        Command::TrainScore => {
            let s = run.train_score()?;
            println!(
                "score head: {} pairs, loss {:.6} -> {:.6} (epoch {})",
                s.pairs, s.initial_loss, s.best_loss, s.best_epoch
            );
        }
        Command::Evaluate => {
            let r = run.evaluate()?;
            println!("rho {:.4}  mse {:.4}  n {}", r.rho, r.mse, r.n);
        }
        Command::Feedback => {
            let index = run.feedback()?;
            print!("feedback for {} videos", index.entries.len());
            match index.localization {
                Some(l) => println!("; precision {:.3} recall {:.3}", l.precision, l.recall),
                None => println!(),
            }
        }
        Command::Report => {
            let r = run.report()?;
            println!("rho {:.4}  mse {:.4}  n {}", r.rho, r.mse, r.n);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind.code() as u8)
        }
    }
}
