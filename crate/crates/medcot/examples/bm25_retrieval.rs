//! Grounding pipeline: chunk a corpus into overlapping 100-word passages,
//! build the two-field BM25 index, score passages per answer option with
//! the composite question/option weights, and assemble a prompt context.
//!
//! ```bash
//! cargo run -p medcot --example bm25_retrieval
//! ```

use medcot::dataset::{load_dataset, DatasetKind, Split};
use medcot::retrieval::{
    assemble_context, build_index, chunk_corpus, load_corpus, retrieve, RetrievalWeights,
    DEFAULT_B, DEFAULT_K1,
};
use std::path::Path;

fn main() -> medcot::Result<()> {
    let testdata = Path::new(env!("CARGO_MANIFEST_DIR")).join("testdata");
    let docs = load_corpus(testdata.join("corpus_sample.jsonl"))?;
    let passages = chunk_corpus(&docs, 100, 50)?;
    println!("chunked {} docs into {} passages", docs.len(), passages.len());

    let index = build_index(passages, DEFAULT_K1, DEFAULT_B)?;
    let weights = RetrievalWeights::default();

    let records = load_dataset(testdata.join("replay_20q/dataset.jsonl"), DatasetKind::UsmleStyle)?;
    let question = records.iter().find(|r| r.split == Split::Test).unwrap();
    println!("\nquestion: {}", question.question);

    let mut per_option = Vec::new();
    for option in &question.options {
        let hits = retrieve(question, option.label, &index, &weights, 3)?;
        println!("\noption {} ({}):", option.label, option.text);
        for hit in &hits {
            let passage = &index.passages[hit.passage];
            let (c1, c2, c3) = hit.components;
            println!(
                "  {:<22} score {:6.3} = 1.0*{c1:.3} + 1.0*{c2:.3} + 0.5*{c3:.3}",
                passage.title, hit.score
            );
        }
        per_option.push(hits);
    }

    println!("\nassembled context (budget 3, round-robin, deduplicated):");
    println!("{}", assemble_context(&per_option, &index, 3));
    Ok(())
}
