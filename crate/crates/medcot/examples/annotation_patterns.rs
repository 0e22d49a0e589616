//! Expert annotation statistics: load annotated chains of thought (six
//! success/failure pattern categories per CoT) and print the per-pattern
//! match frequencies split by prediction outcome.
//!
//! ```bash
//! cargo run -p medcot --example annotation_patterns
//! ```

use medcot::metrics::{load_annotations, pattern_frequencies};
use std::path::Path;

fn main() -> medcot::Result<()> {
    let testdata = Path::new(env!("CARGO_MANIFEST_DIR")).join("testdata");
    let annotations = load_annotations(testdata.join("annotations.jsonl"))?;
    let report = pattern_frequencies(&annotations)?;

    println!(
        "pattern   correct ({:>2})   incorrect ({:>2})   total ({:>2})",
        report.correct_group, report.incorrect_group, report.total_group
    );
    let describe = |p: medcot::metrics::Pattern| match p {
        medcot::metrics::Pattern::A => "correct reasoning",
        medcot::metrics::Pattern::B => "correct knowledge recall",
        medcot::metrics::Pattern::C => "correct reading",
        medcot::metrics::Pattern::D => "incorrect reasoning",
        medcot::metrics::Pattern::E => "incorrect knowledge",
        medcot::metrics::Pattern::F => "incorrect reading",
    };
    for row in &report.rows {
        println!(
            "{:?} {:<26} {:>3}% ({:>2})      {:>3}% ({:>2})      {:>3}% ({:>2})",
            row.pattern,
            describe(row.pattern),
            row.correct.percent,
            row.correct.count,
            row.incorrect.percent,
            row.incorrect.count,
            row.total.percent,
            row.total.count
        );
    }
    println!(
        "\ninconclusive among incorrect: {}% ({}/{})",
        report.inconclusive_incorrect.percent,
        report.inconclusive_incorrect.count,
        report.inconclusive_incorrect.group_size
    );
    Ok(())
}
