//! Calibration analysis of answer distributions: bins predictions by
//! confidence (the maximum option mass), compares per-bin confidence with
//! empirical accuracy, and reports the expected calibration error.
//!
//! The stream here is simulated so that true correctness probability
//! equals reported confidence; a well-behaved pipeline should show a
//! near-diagonal reliability table and a small ECE.
//!
//! ```bash
//! cargo run -p medcot --example calibration_curve
//! ```

use std::collections::BTreeMap;

use medcot::aggregation::AnswerDistribution;
use medcot::dataset::Label;
use medcot::metrics::calibration;
use rand::Rng;
use rand::SeedableRng;

fn main() -> medcot::Result<()> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
    let k = 100u32;
    let dists: Vec<(AnswerDistribution, Label)> = (0..5000)
        .map(|_| {
            let confident = rng.gen_range(26..=100u32);
            let mut counts = BTreeMap::new();
            counts.insert(Label::A, confident);
            // Spread the remaining mass so A stays the strict maximum.
            let mut rest = k - confident;
            let mut spill = Label::B;
            while rest > 0 {
                let chunk = rest.min(confident - 1);
                counts.insert(spill, chunk);
                rest -= chunk;
                spill = Label::from_index(spill.index() + 1).unwrap();
            }
            let correct = rng.gen_bool(confident as f64 / k as f64);
            let gold = if correct { Label::A } else { Label::E };
            (AnswerDistribution { counts, k, inconclusive: 0 }, gold)
        })
        .collect();

    let report = calibration(&dists, 10)?;
    println!("bin          n    confidence  accuracy");
    for bin in &report.bins {
        if bin.count == 0 {
            continue;
        }
        println!(
            "({:.1}, {:.1}]  {:>5}  {:>9.3}  {:>8.3}",
            bin.lo, bin.hi, bin.count, bin.mean_confidence, bin.accuracy
        );
    }
    println!("\nexpected calibration error: {:.4}", report.ece);
    println!(
        "confidence histogram — correct: {:?}",
        report.correct_hist
    );
    println!(
        "confidence histogram — incorrect: {:?}",
        report.incorrect_hist
    );
    Ok(())
}
