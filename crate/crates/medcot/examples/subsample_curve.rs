//! Accuracy as a function of the sampling budget: draw k = 60 completions
//! per question, then evaluate majority voting on random subsets of
//! k' = 1..60 samples. More samples buy accuracy until the curve saturates
//! at the full-ensemble value.
//!
//! ```bash
//! cargo run -p medcot --example subsample_curve
//! ```

use medcot::aggregation::{full_ensemble_accuracy, singleton_accuracy, subsample_curve, QuestionSamples};
use medcot::dataset::{load_dataset, DatasetKind, Split};
use medcot::extraction::extract_answer;
use medcot::llm::{LlmClient, ProviderConfig, SamplingParams};
use medcot::prompting::{render, PromptSpec};
use std::path::Path;

fn main() -> medcot::Result<()> {
    let testdata = Path::new(env!("CARGO_MANIFEST_DIR")).join("testdata");
    let records = load_dataset(testdata.join("replay_20q/dataset.jsonl"), DatasetKind::UsmleStyle)?;
    let work = tempfile::tempdir().expect("temp dir");
    let client = LlmClient::from_config(&ProviderConfig::synthetic(9), work.path().join("cache.jsonl"))?;
    let params = SamplingParams {
        temperature: 0.5,
        k: 60,
        max_tokens: 64,
        stop: vec![],
    };

    let per_question: Vec<QuestionSamples> = records
        .iter()
        .filter(|r| r.split == Split::Test)
        .map(|record| {
            let prompt = render(&PromptSpec::direct(record.clone()))?;
            let labels = client
                .complete(&prompt.text, &params)?
                .iter()
                .map(|c| extract_answer(&c.text, &record.options).label)
                .collect();
            Ok(QuestionSamples { labels, gold: record.gold })
        })
        .collect::<medcot::Result<_>>()?;

    println!("single-sample accuracy (closed form): {:.3}", singleton_accuracy(&per_question));
    println!("full-ensemble accuracy (k = 60):      {:.3}\n", full_ensemble_accuracy(&per_question));

    let grid = [1, 2, 3, 5, 8, 12, 20, 30, 45, 60];
    println!("  k'   mean accuracy   std over trials");
    for point in subsample_curve(&per_question, &grid, 20, 7)? {
        let bar = "#".repeat((point.mean_accuracy * 40.0).round() as usize);
        println!("{:>4}   {:.3}           {:.3}  {bar}", point.kprime, point.mean_accuracy, point.std);
    }
    Ok(())
}
