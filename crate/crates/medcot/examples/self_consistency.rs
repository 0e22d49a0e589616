//! Self-consistency over one question: sample k chains of thought from the
//! seeded synthetic provider, extract a label from each via the two-stage
//! prompt, and print the resulting answer distribution and majority vote.
//!
//! ```bash
//! cargo run -p medcot --example self_consistency
//! ```

use medcot::aggregation::{vote, AnswerDistribution};
use medcot::dataset::{load_dataset, DatasetKind, Split};
use medcot::extraction::extract_answer;
use medcot::llm::{LlmClient, ProviderConfig, SamplingParams};
use medcot::prompting::{cue_by_id, render, render_extractive, PromptSpec};
use std::path::Path;

fn main() -> medcot::Result<()> {
    let testdata = Path::new(env!("CARGO_MANIFEST_DIR")).join("testdata");
    let records = load_dataset(testdata.join("replay_20q/dataset.jsonl"), DatasetKind::UsmleStyle)?;
    let question = records.iter().find(|r| r.split == Split::Test).unwrap().clone();

    let work = tempfile::tempdir().expect("temp dir");
    let client = LlmClient::from_config(&ProviderConfig::synthetic(7), work.path().join("cache.jsonl"))?;

    let stage1 = render(&PromptSpec::cot(question.clone(), cue_by_id(17).unwrap()))?;
    let k = 25;
    let cots = client.complete(&stage1.text, &SamplingParams::reasoning(0.5, k))?;

    let mut labels = Vec::with_capacity(k);
    for cot in &cots {
        let stage2 = render_extractive(&stage1, &cot.text)?;
        let answer = client.complete(&stage2.text, &SamplingParams::extractive())?;
        labels.push(extract_answer(&answer[0].text, &question.options).label);
    }

    println!("question: {}", question.question);
    println!("gold: {}\n", question.gold);
    println!("first sampled chain of thought:{}", cots[0].text);

    let dist = AnswerDistribution::from_labels(&labels)?;
    println!("\nanswer likelihood over k = {k} samples:");
    for (label, mass) in dist.masses() {
        println!("  p({label}) = {mass:.2}");
    }
    if dist.inconclusive > 0 {
        println!("  inconclusive: {}/{}", dist.inconclusive, dist.k);
    }
    let prediction = vote(&dist);
    println!(
        "\nmajority vote: {}{}",
        prediction.label.map_or("inconclusive".to_string(), |l| l.to_string()),
        if prediction.tie { " (tie, smallest letter)" } else { "" }
    );
    Ok(())
}
