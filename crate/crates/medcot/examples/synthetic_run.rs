//! A complete experiment offline: two-shot CoT prompting with k = 4
//! sampled chains of thought per question against the seeded synthetic
//! provider, over the bundled 20-question dataset. Prints the summary and
//! where the run directory landed.
//!
//! ```bash
//! cargo run -p medcot --example synthetic_run
//! ```

use medcot::dataset::{DatasetKind, ShotStrategy, Split};
use medcot::harness::{read_summary, run, DatasetConfig, ExperimentConfig, ShotConfig};
use medcot::llm::{ProviderConfig, SamplingParams};
use medcot::prompting::PromptRegime;
use std::path::Path;

fn main() -> anyhow::Result<()> {
    let testdata = Path::new(env!("CARGO_MANIFEST_DIR")).join("testdata");
    let out = std::env::temp_dir().join("medcot_synthetic_run");
    let config = ExperimentConfig {
        dataset: DatasetConfig {
            path: testdata.join("replay_20q/dataset.jsonl"),
            kind: DatasetKind::UsmleStyle,
            split: Split::Test,
            subsample: None,
        },
        regime: PromptRegime::Cot,
        cue_id: Some(17),
        cue_file: None,
        shots: Some(ShotConfig {
            n: 2,
            strategy: ShotStrategy::FirstN,
            seed: 0,
        }),
        grounding: None,
        provider: ProviderConfig::synthetic(1234),
        sampling: SamplingParams::reasoning(0.7, 4),
        permutation_seed: None,
        output_dir: out.clone(),
        calibration_bins: 10,
    };

    let dir = run(&config)?;
    let summary = read_summary(&dir)?;
    println!("run: {}", summary.run_name);
    println!(
        "accuracy: {:.3} ± {:.3} ({} / {} correct, {} vote ties)",
        summary.accuracy.accuracy,
        summary.accuracy.stderr,
        summary.accuracy.correct,
        summary.accuracy.total,
        summary.ties
    );
    println!("macro F1: {:.3}   micro F1: {:.3}", summary.f1.macro_f1, summary.f1.micro_f1);
    println!(
        "bias: chi2 {:.2} (dof {}), p = {:.3}",
        summary.bias.test.chi2, summary.bias.test.dof, summary.bias.test.p_value
    );
    println!("calibration ECE: {:.3}", summary.calibration.ece);
    println!("\nartifacts in {}", dir.display());
    for file in ["config.json", "cache.jsonl", "results.jsonl", "summary.json"] {
        println!("  {file}");
    }
    Ok(())
}
