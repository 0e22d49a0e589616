//! Record/replay workflow: fetch completions once through the cache, then
//! answer the same prompts from a replay provider with the network (here,
//! the synthetic generator) switched off entirely.
//!
//! ```bash
//! cargo run -p medcot --example replay_cache
//! ```

use medcot::llm::{LlmClient, ProviderConfig, SamplingParams};

fn main() -> medcot::Result<()> {
    let work = tempfile::tempdir().expect("temp dir");
    let cache_path = work.path().join("cache.jsonl");
    let prompts: Vec<String> = (1..=6)
        .map(|i| format!("Question: placeholder {i}?\nA) first\nB) second\n\nAnswer: among A through B, the answer is"))
        .collect();
    let params = SamplingParams {
        temperature: 0.5,
        k: 3,
        max_tokens: 32,
        stop: vec![],
    };

    let recording = ProviderConfig::synthetic(5);
    let recorded: Vec<_> = {
        let client = LlmClient::from_config(&recording, &cache_path)?;
        let stats = client.warm_cache(&prompts, &params)?;
        println!("warm pass 1: {stats:?}");
        let stats = client.warm_cache(&prompts, &params)?;
        println!("warm pass 2: {stats:?} (idempotent, zero fetches)");
        client.complete(&prompts[0], &params)?
    };

    // Replay: same cache file, no generator behind it.
    let replay = LlmClient::from_config(&ProviderConfig::replay_of(&recording), &cache_path)?;
    let replayed = replay.complete(&prompts[0], &params)?;
    assert_eq!(replayed, recorded);
    println!("\nreplayed {} completions byte-identically, e.g.:", replayed.len());
    println!("  {:?}", replayed[0].text);

    // A prompt that was never recorded is an explicit cache miss.
    let miss = replay.complete("Question: unseen?\n\nAnswer: among A through B, the answer is", &params);
    println!("\nunrecorded prompt -> {}", miss.unwrap_err());
    Ok(())
}
