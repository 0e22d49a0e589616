//! Renders one question through every prompt regime: direct, two-stage
//! CoT, five-shot CoT and retrieval-grounded, printing the exact bytes
//! that would be sent to a completion endpoint.
//!
//! ```bash
//! cargo run -p medcot --example render_prompts
//! ```

use medcot::dataset::{load_dataset, DatasetKind, select_shots, ShotStrategy, Split};
use medcot::prompting::{cue_by_id, render, render_extractive, PromptSpec};
use std::path::Path;

fn main() -> medcot::Result<()> {
    let testdata = Path::new(env!("CARGO_MANIFEST_DIR")).join("testdata");
    let records = load_dataset(testdata.join("replay_20q/dataset.jsonl"), DatasetKind::UsmleStyle)?;
    let question = records.iter().find(|r| r.split == Split::Test).unwrap().clone();

    let banner = |title: &str| println!("\n===== {title} =====");

    banner("direct");
    let direct = render(&PromptSpec::direct(question.clone()))?;
    println!("{}", direct.text);

    banner("zero-shot CoT, stage 1 (reasoning)");
    let cue = cue_by_id(17).unwrap();
    let stage1 = render(&PromptSpec::cot(question.clone(), cue.clone()))?;
    println!("{}", stage1.text);

    banner("zero-shot CoT, stage 2 (extraction)");
    let sampled_cot = " Gastric losses remove acid and chloride, so the classic disturbance is a hypokalemic alkalosis.";
    let stage2 = render_extractive(&stage1, sampled_cot)?;
    println!("{}", stage2.text);

    banner("two-shot CoT");
    let shots = select_shots(&records, 2, ShotStrategy::FirstN, 0)?;
    let few_shot = render(&PromptSpec::cot(question.clone(), cue).with_shots(shots))?;
    println!("{}", few_shot.text);

    banner("grounded direct");
    let docs = medcot::retrieval::load_corpus(testdata.join("corpus_sample.jsonl"))?;
    let passages = medcot::retrieval::chunk_corpus(&docs, 60, 30)?;
    let grounded = render(&PromptSpec::direct(question).with_grounding(passages[..2].to_vec()))?;
    println!("{}", grounded.text);

    Ok(())
}
