//! Command-line front end: argument parsing and the subcommands.

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use gestalt_probe::canvas::Polarity;
use gestalt_probe::dots::{self, DatasetOptions, EfKind, Task};
use gestalt_probe::experiment::{self, plot, ExperimentConfig};
use gestalt_probe::learn::{self, export, LearnabilityConfig, TrainConfig};

const SEED_ENV: &str = "GESTALT_PROBE_SEED";

#[derive(Parser)]
#[command(name = "gestalt-probe", version, about = "Configural-effect probing of vision models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment grid described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Render SVG figures for the result tables in a run directory.
    Plot { dir: PathBuf },
    /// Write rendered dot-pattern sequences, or a classification dataset.
    Gen {
        #[arg(long, conflicts_with = "task", required_unless_present = "task")]
        ef: Option<EfKind>,
        #[arg(long)]
        task: Option<Task>,
        #[arg(long)]
        out: PathBuf,
        /// Sequences for --ef.
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 6000)]
        n_train: usize,
        #[arg(long, default_value_t = 200)]
        n_test: usize,
        #[arg(long, default_value_t = 224)]
        size: u32,
        #[arg(long, default_value = "black_on_random_pixels")]
        style: Polarity,
        #[arg(long, env = SEED_ENV, default_value_t = 0)]
        seed: u64,
    },
    /// Train SmallNet on one task with the default learnability settings.
    Train {
        #[arg(long)]
        task: Task,
        #[arg(long, default_value = "train_out")]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 6000)]
        n_train: usize,
        #[arg(long, default_value_t = 200)]
        n_test: usize,
        /// Train on permuted labels (chance-level control).
        #[arg(long)]
        shuffled_labels: bool,
        #[arg(long, env = SEED_ENV, default_value_t = 0)]
        seed: u64,
    },
}

fn run(config: PathBuf) -> Result<bool> {
    let mut cfg = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
    if let Ok(seed) = std::env::var(SEED_ENV) {
        cfg.seed = seed.trim().parse().with_context(|| format!("{SEED_ENV}={seed} is not an unsigned integer"))?;
    }
    let manifest = experiment::run(&cfg)?;
    for cell in manifest.cells.iter().filter(|c| c.error.is_some()) {
        eprintln!("failed: {}: {}", cell.id, cell.error.as_deref().unwrap_or_default());
    }
    if let Some(e) = &manifest.plot_error {
        eprintln!("plot: {e}");
    }
    println!(
        "{} cells: {} done, {} skipped, {} failed -> {}",
        manifest.cells.len(),
        manifest.done,
        manifest.skipped,
        manifest.failed,
        cfg.output_dir.display()
    );
    Ok(manifest.success())
}

/// Parse `args` (program name first) and run the command. Returns the
/// process exit code: 0 on success, 1 if any cell failed, 2 on error.
pub fn run_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code() as u8;
        }
    };
    match dispatch(cli.command) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

fn dispatch(command: Command) -> Result<bool> {
    match command {
        Command::Run { config } => run(config),
        Command::Plot { dir } => {
            let files = plot::plot(&dir)?;
            println!("wrote {} figures to {}", files.len(), dir.join("figures").display());
            Ok(true)
        }
        Command::Gen { ef, task, out, n, n_train, n_test, size, style, seed } => {
            if let Some(kind) = ef {
                dots::export_ef_sequences(kind, n, seed, style, size, &out)?;
                println!("wrote {n} {} sequences to {}", kind.as_str(), out.display());
            } else if let Some(task) = task {
                let opts = DatasetOptions { size, polarity: style, ..DatasetOptions::default() };
                let (train, test) = dots::gen_training_dataset(task, n_train, n_test, seed, &opts)?;
                train.export(&out, "train")?;
                test.export(&out, "test")?;
                println!("wrote {} train and {} test images to {}", n_train, n_test, out.display());
            } else {
                bail!("one of --ef or --task is required");
            }
            Ok(true)
        }
        Command::Train { task, out, epochs, n_train, n_test, shuffled_labels, seed } => {
            let cfg = LearnabilityConfig {
                n_train,
                n_test,
                train: TrainConfig { epochs, seed, ..TrainConfig::default() },
                ..LearnabilityConfig::default()
            };
            let r = learn::run_learnability(task, &cfg, shuffled_labels)?;
            std::fs::create_dir_all(&out)?;
            learn::write_loss_curve(&out.join(format!("{}_loss.csv", task.as_str())), &r.trained.curve)?;
            learn::write_confusion(&out.join(format!("{}_confusion.csv", task.as_str())), task, &r.evaluation.confusion)?;
            let bundle = export::export_bundle(&r.trained.net, &out, &format!("smallnet_{}", task.as_str()))?;
            for e in &r.trained.curve {
                println!("epoch {:>2}  loss {:.4}  train acc {:.3}", e.epoch, e.train_loss, e.train_accuracy);
            }
            println!(
                "{}: test accuracy {:.3} ({:.0} s); bundle {}",
                task.as_str(),
                r.evaluation.accuracy,
                r.seconds,
                bundle.display()
            );
            Ok(true)
        }
    }
}
