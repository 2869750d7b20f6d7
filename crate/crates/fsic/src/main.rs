use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fsic::config::{self, RunConfig};
use fsic::corpus::{load_corpus, save_corpus};
use fsic::runner;
use fsic::{selftest, Error, Result};
use fsic_core::harness::{make_synthetic_corpus, SyntheticSpec};

/// Few-shot intent classification experiments.
#[derive(Parser)]
#[command(name = "fsic", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split intents and sample episode files for every fold.
    PrepareEpisodes {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model per fold from prepared episodes.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        episodes: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on an episode file.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a comparison table from run directories.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Prepare, train and evaluate every fold into one run directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's `corpus` entry.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic keyword corpus as JSON lines.
    MakeCorpus {
        #[arg(long, default_value_t = 15)]
        intents: usize,
        #[arg(long, default_value_t = 40)]
        per_intent: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in checks.
    Selftest,
}

fn corpus_path(cfg: &RunConfig, explicit: Option<PathBuf>) -> Result<PathBuf> {
    explicit.or_else(|| cfg.corpus.clone()).ok_or_else(|| {
        Error::Config("no corpus given: pass --corpus or set `corpus` in the config".into())
    })
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::PrepareEpisodes {
            corpus,
            config,
            out,
        } => {
            let cfg = config::load(&config)?;
            runner::prepare_episodes(&cfg, &load_corpus(&corpus)?, &out)?;
            println!("episodes written to {}", out.display());
        }
        Command::Train {
            config,
            episodes,
            out,
        } => {
            let cfg = config::load(&config)?;
            for path in runner::train_from_episodes(&cfg, &episodes, &out)? {
                println!("{}", path.display());
            }
        }
        Command::Evaluate {
            checkpoint,
            episodes,
            out,
        } => {
            let report = runner::evaluate_checkpoint(&checkpoint, &episodes, &out)?;
            println!(
                "{} episodes: accuracy {:.2}% ± {:.2}",
                report.episode_accuracies.len(),
                100.0 * report.mean_accuracy,
                100.0 * report.std_accuracy
            );
        }
        Command::Report { runs, out } => {
            print!("{}", runner::report(&runs, &out)?);
        }
        Command::Run {
            config,
            corpus,
            out,
        } => {
            let cfg = config::load(&config)?;
            let corpus = load_corpus(&corpus_path(&cfg, corpus)?)?;
            let report = runner::run_experiment(&cfg, &corpus, &out)?;
            println!(
                "{}: accuracy {:.2}% ± {:.2} over {} episodes",
                cfg.experiment.row_label(),
                100.0 * report.mean_accuracy,
                100.0 * report.std_accuracy,
                report.episode_accuracies.len()
            );
        }
        Command::MakeCorpus {
            intents,
            per_intent,
            seed,
            out,
        } => {
            let corpus = make_synthetic_corpus(&SyntheticSpec::new(intents, per_intent), seed)?;
            save_corpus(&out, &corpus)?;
            println!("{} utterances written to {}", corpus.len(), out.display());
        }
        Command::Selftest => {
            let checks = selftest::run();
            for c in &checks {
                println!(
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            return Ok(checks.iter().all(|c| c.passed));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
