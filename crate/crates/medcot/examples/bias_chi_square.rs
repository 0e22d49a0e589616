//! Answering-bias analysis from label frequencies: chi-square
//! goodness-of-fit of predicted label counts against the gold counts, with
//! over/under flags at the ±10% relative threshold.
//!
//! ```bash
//! cargo run -p medcot --example bias_chi_square
//! ```

use medcot::dataset::Label;
use medcot::metrics::{bias_report, BiasFlag};

/// Expands count vectors into paired (prediction, gold) lists.
fn pairs(pred: &[u64; 4], gold: &[u64; 4]) -> (Vec<Option<Label>>, Vec<Label>) {
    let mut preds = Vec::new();
    let mut golds = Vec::new();
    for (i, &c) in pred.iter().enumerate() {
        preds.extend(std::iter::repeat_n(Some(Label::from_index(i).unwrap()), c as usize));
    }
    for (i, &c) in gold.iter().enumerate() {
        golds.extend(std::iter::repeat_n(Label::from_index(i).unwrap(), c as usize));
    }
    (preds, golds)
}

fn main() -> medcot::Result<()> {
    // Predicted label counts from three published zero-/few-shot board-exam
    // runs, against the gold label counts of the same 1273 questions.
    let gold = [353u64, 309, 346, 265];
    let rows: [(&str, [u64; 4]); 3] = [
        ("direct, zero-shot", [155, 299, 405, 414]),
        ("CoT cue #1, zero-shot", [421, 240, 291, 321]),
        ("CoT cue #1, five-shot", [334, 300, 324, 315]),
    ];

    for (name, predicted) in rows {
        let (preds, golds) = pairs(&predicted, &gold);
        let report = bias_report(&preds, &golds)?;
        println!("{name}:");
        for (i, label) in report.labels.iter().enumerate() {
            let marker = match report.flags[i] {
                BiasFlag::Over => " over",
                BiasFlag::Under => " under",
                BiasFlag::None => "",
            };
            println!(
                "  {label}: predicted {:>3} vs gold {:>3}{marker}",
                report.predicted[i], report.gold[i]
            );
        }
        println!(
            "  chi2 = {:.2}, dof = {}, p = {:.3e}\n",
            report.test.chi2, report.test.dof, report.test.p_value
        );
    }
    Ok(())
}
