use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Parser, Subcommand};
use fioc_cli::commands::{self, Context, EvalGraphsMode};
use fioc_cli::CliError;

#[derive(Debug, Parser)]
#[command(name = "fioc", version, about = "Object-centric world model and hierarchical control experiments")]
struct Cli {
    /// Flat `section.key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `io.out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a JSON-Lines dataset of episodes.
    GenData,
    /// Train the world model and write a checkpoint and loss curves.
    TrainWm {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Score inferred interaction graphs on held-out episodes.
    EvalGraphs {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Score the true graphs (sanity check, no checkpoint needed).
        #[arg(long, conflicts_with = "compare")]
        ground_truth: bool,
        /// Train and score all three regimes on the same data.
        #[arg(long)]
        compare: bool,
    },
    /// Linear probes from latent parts to true object attributes.
    Probe {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Evaluate (and optionally train) the hierarchical controller.
    RunPolicy {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("FIOC_THREADS") {
        let n: usize = v.parse().with_context(|| format!("FIOC_THREADS must be a positive integer, got `{v}`"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("cannot configure worker pool")?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    init_threads().map_err(|e| CliError::Setup(format!("{e:#}")))?;
    let ctx = Context::prepare(cli.config.as_deref(), cli.seed, cli.out.as_deref())?;
    match cli.command {
        Command::GenData => {
            let s = commands::gen_data(&ctx)?;
            println!(
                "episodes {} transitions {} contact_steps {} contact_rate {:.4}",
                s.episodes, s.transitions, s.contact_steps, s.contact_rate
            );
        }
        Command::TrainWm { dataset } => {
            let ckpt = commands::train_wm(&ctx, dataset.as_deref())?;
            println!("checkpoint {}", ckpt.display());
        }
        Command::EvalGraphs { checkpoint, dataset, ground_truth, compare } => {
            let mode = EvalGraphsMode { ground_truth, compare };
            let rows = commands::eval_graphs(&ctx, checkpoint.as_deref(), dataset.as_deref(), mode)?;
            let mut regimes: Vec<&str> = rows.iter().map(|r| r.regime.as_str()).collect();
            regimes.dedup();
            for g in regimes {
                let rs: Vec<_> = rows.iter().filter(|r| r.regime == g).collect();
                let mean = rs.iter().map(|r| r.nshd).sum::<f64>() / rs.len() as f64;
                println!("{g}: mean nshd {mean:.4} over {} episodes", rs.len());
            }
        }
        Command::Probe { checkpoint, dataset } => {
            for r in commands::probe(&ctx, checkpoint.as_deref(), dataset.as_deref())? {
                println!("{} -> {}: {:.4}", r.features, r.target, r.mse);
            }
        }
        Command::RunPolicy { checkpoint, dataset } => {
            for m in commands::run_policy(&ctx, checkpoint.as_deref(), dataset.as_deref())? {
                println!("{}: {:.3}", m.metric, m.value);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<CliError>().map_or(1, CliError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
