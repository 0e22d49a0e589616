//! Thin command-line front end over the `medcot` library.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use medcot::dataset::{load_dataset, DatasetKind, Split};
use medcot::harness::{
    run, run_grid, warm, write_reports, ExperimentConfig, ReportKind, SubsampleOptions,
};
use medcot::retrieval::{build_index, chunk_corpus, load_corpus};

#[derive(Parser)]
#[command(name = "medcot", version, about = "Evaluation harness for multiple-choice medical QA with LLMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one configured experiment.
    Run {
        /// Experiment config (JSON or TOML).
        #[arg(long)]
        config: PathBuf,
    },
    /// Run several configs over one dataset and ensemble their predictions.
    Grid {
        /// Config files; a single file may also hold a JSON array of configs.
        #[arg(long, required = true)]
        config: Vec<PathBuf>,
        /// Directory for the ensemble artifacts.
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit CSV/markdown reports from finished runs.
    Report {
        /// Run directories (each holding results.jsonl and summary.json).
        #[arg(long = "run", required = true)]
        runs: Vec<PathBuf>,
        /// Report kinds: summary, calibration, bias, subsample, agreement.
        #[arg(long = "kind", required = true)]
        kinds: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        /// Subset sizes for the subsample curve, e.g. --kprime 1,5,10,50.
        #[arg(long, value_delimiter = ',')]
        kprime: Option<Vec<usize>>,
        /// Random subsets drawn per subset size.
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Chunk a corpus and build the retrieval index sidecar.
    Index {
        /// Corpus JSONL: one {"id","title","text"} per line.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = medcot::retrieval::DEFAULT_WINDOW)]
        window: usize,
        #[arg(long, default_value_t = medcot::retrieval::DEFAULT_STRIDE)]
        stride: usize,
        #[arg(long, default_value_t = medcot::retrieval::DEFAULT_K1)]
        k1: f64,
        #[arg(long, default_value_t = medcot::retrieval::DEFAULT_B)]
        b: f64,
    },
    /// Completion cache maintenance.
    Cache {
        #[command(subcommand)]
        command: CacheCommand,
    },
    /// Lint a dataset file against the record schema.
    Validate(ValidateArgs),
}

#[derive(Subcommand)]
enum CacheCommand {
    /// Prefetch every completion a config will need.
    Warm {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// usmle-style, medmcqa-style or pubmedqa-style.
    #[arg(long)]
    format: String,
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run { config } => {
            let config = ExperimentConfig::from_file(&config)?;
            let dir = run(&config)?;
            let summary = medcot::harness::read_summary(&dir)?;
            println!(
                "run {} finished: accuracy {:.3} ± {:.3} over {} questions -> {}",
                summary.run_name,
                summary.accuracy.accuracy,
                summary.accuracy.stderr,
                summary.questions,
                dir.display()
            );
        }
        Command::Grid { config, out } => {
            let mut configs = Vec::new();
            for path in config {
                configs.extend(ExperimentConfig::list_from_file(&path)?);
            }
            let outcome = run_grid(&configs, &out)?;
            for entry in &outcome.runs {
                println!("{}: {:.3} ± {:.3}", entry.name, entry.accuracy.accuracy, entry.accuracy.stderr);
            }
            println!(
                "ensemble (n={}): {:.3} ± {:.3}, {} ties -> {}",
                outcome.n,
                outcome.ensemble_accuracy.accuracy,
                outcome.ensemble_accuracy.stderr,
                outcome.ties,
                out.display()
            );
        }
        Command::Report {
            runs,
            kinds,
            out,
            kprime,
            trials,
            seed,
        } => {
            let kinds: Vec<ReportKind> = kinds
                .iter()
                .map(|k| k.parse())
                .collect::<Result<_, _>>()?;
            let options = SubsampleOptions {
                grid: kprime,
                trials,
                seed,
            };
            for path in write_reports(&runs, &kinds, &out, &options)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Index {
            corpus,
            out,
            window,
            stride,
            k1,
            b,
        } => {
            let docs = load_corpus(&corpus)?;
            let passages = chunk_corpus(&docs, window, stride)?;
            let index = build_index(passages, k1, b)?;
            index.save(&out)?;
            println!(
                "indexed {} docs into {} passages -> {}",
                docs.len(),
                index.len(),
                out.display()
            );
        }
        Command::Cache { command } => match command {
            CacheCommand::Warm { config } => {
                let config = ExperimentConfig::from_file(&config)?;
                let stats = warm(&config)?;
                println!(
                    "cache warm: {} hits, {} misses, {} fetched",
                    stats.hits, stats.misses, stats.fetched
                );
            }
        },
        Command::Validate(args) => {
            let kind = DatasetKind::parse(&args.format)?;
            let records = load_dataset(&args.dataset, kind).context("dataset validation failed")?;
            let count = |s: Split| records.iter().filter(|r| r.split == s).count();
            println!(
                "{}: {} records valid ({} train / {} validation / {} test)",
                args.dataset.display(),
                records.len(),
                count(Split::Train),
                count(Split::Validation),
                count(Split::Test)
            );
        }
    }
    Ok(())
}
