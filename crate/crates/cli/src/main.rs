use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use epigraph_cli::{
    cmd_bench_knn, cmd_eval, cmd_export_embeddings, cmd_generate, cmd_gradcheck, cmd_train, CliError, EvalRequest,
    ExperimentConfig, GradCheckRequest,
};

/// Relative pose estimation from epipolar correspondence graphs.
#[derive(Debug, Parser)]
#[command(name = "epigraph", version)]
struct Cli {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override a config field, e.g. `--set train.epochs=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the effective config as TOML.
    Config,
    /// Write the trajectory, per-spacing correspondence files and manifests.
    Generate,
    /// Train a model and write the report and best checkpoint.
    Train,
    /// Evaluate a checkpoint and optionally the eight-point baseline.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// `none` or `eightpoint`; overrides eval.baseline.
        #[arg(long)]
        baseline: Option<String>,
        /// Skip the model and evaluate the baseline alone.
        #[arg(long)]
        baseline_only: bool,
    },
    /// Export node embeddings of one layer and their pooled descriptor.
    ExportEmbeddings {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// 0 is the input features, `n` the output of the n-th layer.
        #[arg(long)]
        layer: usize,
    },
    /// Compare analytic and finite-difference gradients for every preset and loss term.
    Gradcheck {
        /// Comma-separated presets; an empty list checks nothing.
        #[arg(long, value_delimiter = ',')]
        presets: Option<Vec<String>>,
        /// Comma-separated parameter tensors to check.
        #[arg(long, value_delimiter = ',')]
        tensors: Option<Vec<String>>,
        /// Deliberately corrupt the analytic gradient of this tensor.
        #[arg(long)]
        corrupt: Option<String>,
    },
    /// Build, train and evaluate all four edge variants.
    BenchKnn,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    for o in &cli.overrides {
        config.set(o)?;
    }
    match cli.command {
        Command::Config => {
            config.validate()?;
            print!("{}", config.to_toml());
        }
        Command::Generate => {
            for g in cmd_generate(&config)? {
                println!("spacing {} step {}: {} pairs -> {}", g.spacing, g.step, g.pairs, g.manifest.display());
            }
        }
        Command::Train => {
            let outcome = cmd_train(&config)?;
            let r = &outcome.report;
            match (r.best_epoch, r.best_val_total) {
                (Some(e), Some(v)) => println!("best epoch {e}: val total {v:e}"),
                _ => println!("no validation graph built; saved final parameters"),
            }
            if let Some(p) = &r.checkpoint {
                println!("checkpoint {}", p.display());
            }
        }
        Command::Eval {
            checkpoint,
            baseline,
            baseline_only,
        } => {
            if let Some(b) = baseline {
                config.eval.baseline = b;
            }
            let reports = cmd_eval(
                &config,
                &EvalRequest {
                    checkpoint,
                    baseline_only,
                },
            )?;
            print!("{}", epigraph::eval::write_table(&reports));
        }
        Command::ExportEmbeddings { checkpoint, layer } => {
            let path = cmd_export_embeddings(&config, checkpoint.as_deref(), layer)?;
            println!("{}", path.display());
        }
        Command::Gradcheck {
            presets,
            tensors,
            corrupt,
        } => {
            let request = GradCheckRequest {
                presets: presets.map(|v| v.into_iter().filter(|s| !s.is_empty()).collect()),
                tensors: tensors.map(|v| v.into_iter().filter(|s| !s.is_empty()).collect()),
                corrupt,
            };
            let outcome = cmd_gradcheck(&config, &request)?;
            let worst = outcome
                .reports
                .iter()
                .map(|(_, r)| r.relative_error())
                .fold(0.0, f64::max);
            println!(
                "{} objective reports, max relative error {worst:e} -> {}",
                outcome.reports.len(),
                outcome.path.display()
            );
        }
        Command::BenchKnn => {
            let rows = cmd_bench_knn(&config)?;
            print!("{}", epigraph_cli::write_bench_table(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
