//! Multi-prompt ensembling: run the direct prompt plus the five
//! shortlisted CoT cues as six separate experiments over one dataset, then
//! majority-vote their per-question predictions.
//!
//! ```bash
//! cargo run -p medcot --example ensemble_grid
//! ```

use medcot::dataset::{DatasetKind, Split};
use medcot::harness::{run_grid, DatasetConfig, ExperimentConfig};
use medcot::llm::{ProviderConfig, SamplingParams};
use medcot::prompting::{cue_shortlist, PromptRegime};
use std::path::Path;

fn main() -> anyhow::Result<()> {
    let testdata = Path::new(env!("CARGO_MANIFEST_DIR")).join("testdata");
    let work = std::env::temp_dir().join("medcot_ensemble_grid");
    let base = ExperimentConfig {
        dataset: DatasetConfig {
            path: testdata.join("replay_20q/dataset.jsonl"),
            kind: DatasetKind::UsmleStyle,
            split: Split::Test,
            subsample: None,
        },
        regime: PromptRegime::Direct,
        cue_id: None,
        cue_file: None,
        shots: None,
        grounding: None,
        provider: ProviderConfig::synthetic(2024),
        sampling: SamplingParams::reasoning(0.7, 3),
        permutation_seed: None,
        output_dir: work.join("direct"),
        calibration_bins: 10,
    };

    let mut configs = vec![base.clone()];
    for cue in cue_shortlist() {
        let mut config = base.clone();
        config.regime = PromptRegime::Cot;
        config.cue_id = Some(cue.id);
        config.output_dir = work.join(format!("cot{}", cue.id));
        configs.push(config);
    }

    let outcome = run_grid(&configs, work.join("ensemble"))?;
    println!("per-prompt accuracy:");
    for entry in &outcome.runs {
        println!("  {:<12} {:.3} ± {:.3}", entry.name, entry.accuracy.accuracy, entry.accuracy.stderr);
    }
    println!(
        "\nensemble (n={}): {:.3} ± {:.3} with {} tied votes",
        outcome.n,
        outcome.ensemble_accuracy.accuracy,
        outcome.ensemble_accuracy.stderr,
        outcome.ties
    );
    println!("artifacts in {}", work.join("ensemble").display());
    Ok(())
}
