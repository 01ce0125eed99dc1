use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use design_rules::pipeline::{self, Overrides, RunConfig};

/// Explore schedules of a task graph, label performance classes and derive design rules.
#[derive(Parser)]
#[command(name = "design-rules", version)]
struct Cli {
    /// Run configuration (TOML). Defaults to the built-in SpMV example.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for the search.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Search rollouts.
    #[arg(long, global = true)]
    iterations: Option<usize>,
    /// Step kernel radius for labeling.
    #[arg(long, global = true)]
    radius: Option<usize>,
    /// Prominence percentile for keeping class boundaries.
    #[arg(long, global = true)]
    percentile: Option<f64>,
    /// Where artifacts are written.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measure every schedule in the design space.
    Enumerate,
    /// Measure schedules chosen by Monte-Carlo tree search.
    Search,
    /// Label, train and write design rules for a dataset.
    Analyze { dataset: PathBuf },
    /// Train on SUBSET and report how well its rules classify FULL.
    Evaluate { subset: PathBuf, full: PathBuf },
}

fn run(cli: Cli) -> design_rules::Result<()> {
    let base = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::spmv(),
    };
    let cfg = base.apply(&Overrides {
        seed: cli.seed,
        iterations: cli.iterations,
        radius: cli.radius,
        percentile: cli.percentile,
        out_dir: cli.out_dir,
    })?;
    match cli.command {
        Command::Enumerate => {
            let out = pipeline::cmd_enumerate(&cfg)?;
            println!("{}", out.message());
            println!("dataset: {}", out.dataset_path.display());
        }
        Command::Search => {
            let out = pipeline::cmd_search(&cfg)?;
            println!(
                "{} schedules measured; {} tree nodes, {:.3} fully explored",
                out.dataset.len(),
                out.summary.nodes,
                out.summary.explored_fraction()
            );
            println!("dataset: {}", out.dataset_path.display());
        }
        Command::Analyze { dataset } => {
            let a = pipeline::cmd_analyze(&dataset, &cfg)?;
            for w in &a.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "{} classes, {} features, tree with {} leaves (depth {}), training error {}",
                a.labeling.num_classes(),
                a.matrix.n_cols(),
                a.tree.leaf_count(),
                a.tree.depth(),
                a.tree.training_error
            );
            println!("artifacts in {}", cfg.out_dir.display());
        }
        Command::Evaluate { subset, full } => {
            println!("{}", pipeline::cmd_evaluate(&subset, &full, &cfg)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
