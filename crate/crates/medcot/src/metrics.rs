//! The analysis suite: accuracy and its Bernoulli standard error, macro and
//! micro F1, calibration bins with expected calibration error, answering
//! bias with a chi-square goodness-of-fit test, prompt agreement matrices,
//! and expert annotation pattern frequencies.
//!
//! Inconclusive predictions score as incorrect for accuracy, never vote,
//! and are excluded (but reported) from bias counts and calibration.
//! Chi-square tail probabilities come from a self-contained regularized
//! incomplete gamma implementation; percentages shown in reports round half
//! to even.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aggregation::{vote, AnswerDistribution};
use crate::dataset::Label;
use crate::error::{Error, Result};

// ─── Accuracy ────────────────────────────────────────────────────────────────

/// Accuracy with the standard error of a Bernoulli mean estimate,
/// `sqrt(acc * (1 - acc) / n)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyEstimate {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
    pub stderr: f64,
}

/// Accuracy over (prediction, gold) pairs; inconclusive predictions count
/// as incorrect.
pub fn accuracy(preds: &[(Option<Label>, Label)]) -> Result<AccuracyEstimate> {
    if preds.is_empty() {
        return Err(Error::InvalidInput("accuracy requires at least one prediction".into()));
    }
    let total = preds.len();
    let correct = preds.iter().filter(|(p, g)| *p == Some(*g)).count();
    let acc = correct as f64 / total as f64;
    Ok(AccuracyEstimate {
        correct,
        total,
        accuracy: acc,
        stderr: (acc * (1.0 - acc) / total as f64).sqrt(),
    })
}

// ─── F1 ──────────────────────────────────────────────────────────────────────

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub per_label: Vec<(Label, f64)>,
    /// Labels absent from both predictions and golds; each contributed 0 to
    /// the macro average.
    pub absent: Vec<Label>,
}

/// Macro-averaged F1 over the given label set (micro reported alongside).
pub fn macro_f1(preds: &[Option<Label>], golds: &[Label], labels: &[Label]) -> Result<F1Report> {
    if labels.is_empty() {
        return Err(Error::InvalidInput("f1 requires a non-empty label set".into()));
    }
    if preds.len() != golds.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions vs {} golds",
            preds.len(),
            golds.len()
        )));
    }
    let mut per_label = Vec::with_capacity(labels.len());
    let mut absent = Vec::new();
    let mut tp_total = 0usize;
    let mut fp_total = 0usize;
    let mut fn_total = 0usize;
    for &label in labels {
        let tp = preds
            .iter()
            .zip(golds)
            .filter(|(p, g)| **p == Some(label) && **g == label)
            .count();
        let fp = preds
            .iter()
            .zip(golds)
            .filter(|(p, g)| **p == Some(label) && **g != label)
            .count();
        let fn_ = preds
            .iter()
            .zip(golds)
            .filter(|(p, g)| **p != Some(label) && **g == label)
            .count();
        tp_total += tp;
        fp_total += fp;
        fn_total += fn_;
        if tp + fp + fn_ == 0 {
            absent.push(label);
            per_label.push((label, 0.0));
            continue;
        }
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_label.push((label, f1));
    }
    let macro_f1 = per_label.iter().map(|(_, f)| f).sum::<f64>() / labels.len() as f64;
    let micro_denom = 2 * tp_total + fp_total + fn_total;
    let micro_f1 = if micro_denom == 0 {
        0.0
    } else {
        2.0 * tp_total as f64 / micro_denom as f64
    };
    Ok(F1Report {
        macro_f1,
        micro_f1,
        per_label,
        absent,
    })
}

// ─── Calibration ─────────────────────────────────────────────────────────────

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    /// Right-closed interval `(lo, hi]`.
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_confidence: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub bins: Vec<CalibrationBin>,
    pub ece: f64,
    /// Per-bin confidence histogram of correct predictions.
    pub correct_hist: Vec<usize>,
    /// Per-bin confidence histogram of incorrect predictions.
    pub incorrect_hist: Vec<usize>,
    /// Predictions whose samples were all inconclusive; excluded from the
    /// bins above.
    pub excluded_inconclusive: usize,
    pub total: usize,
}

/// Bins predictions by confidence (the distribution's maximum option mass)
/// into `bins` equal-width right-closed intervals over (0, 1] and reports
/// the expected calibration error
/// `sum_b (count_b / total) * |mean_confidence_b - accuracy_b|`.
pub fn calibration(dists: &[(AnswerDistribution, Label)], bins: usize) -> Result<CalibrationReport> {
    if bins == 0 {
        return Err(Error::InvalidInput("calibration requires at least one bin".into()));
    }
    let mut conf_sum = vec![0.0f64; bins];
    let mut counts = vec![0usize; bins];
    let mut correct_hist = vec![0usize; bins];
    let mut incorrect_hist = vec![0usize; bins];
    let mut excluded = 0usize;
    let mut total = 0usize;
    for (dist, gold) in dists {
        dist.check()?;
        let Some(confidence) = dist.confidence() else {
            excluded += 1;
            continue;
        };
        let correct = vote(dist).label == Some(*gold);
        let bin = ((confidence * bins as f64).ceil() as usize).clamp(1, bins) - 1;
        counts[bin] += 1;
        conf_sum[bin] += confidence;
        if correct {
            correct_hist[bin] += 1;
        } else {
            incorrect_hist[bin] += 1;
        }
        total += 1;
    }
    let mut out_bins = Vec::with_capacity(bins);
    let mut ece = 0.0;
    for b in 0..bins {
        let mean_confidence = if counts[b] == 0 { 0.0 } else { conf_sum[b] / counts[b] as f64 };
        let acc = if counts[b] == 0 {
            0.0
        } else {
            correct_hist[b] as f64 / counts[b] as f64
        };
        if total > 0 && counts[b] > 0 {
            ece += counts[b] as f64 / total as f64 * (mean_confidence - acc).abs();
        }
        out_bins.push(CalibrationBin {
            lo: b as f64 / bins as f64,
            hi: (b + 1) as f64 / bins as f64,
            count: counts[b],
            mean_confidence,
            accuracy: acc,
        });
    }
    Ok(CalibrationReport {
        bins: out_bins,
        ece,
        correct_hist,
        incorrect_hist,
        excluded_inconclusive: excluded,
        total,
    })
}

// ─── Chi-square goodness of fit ──────────────────────────────────────────────

mod gamma {
    //! Regularized incomplete gamma functions, enough for chi-square upper
    //! tails: series expansion below a+1, continued fraction above.

    const LANCZOS: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];

    pub fn ln_gamma(x: f64) -> f64 {
        if x < 0.5 {
            let pi = std::f64::consts::PI;
            (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x)
        } else {
            let x = x - 1.0;
            let t = x + 7.5;
            let mut a = LANCZOS[0];
            for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
                a += c / (x + i as f64);
            }
            0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
        }
    }

    fn lower_series(a: f64, x: f64) -> f64 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..600 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        sum * (-x + a * x.ln() - ln_gamma(a)).exp()
    }

    fn upper_continued_fraction(a: f64, x: f64) -> f64 {
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..600 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-17 {
                break;
            }
        }
        h * (-x + a * x.ln() - ln_gamma(a)).exp()
    }

    /// Q(a, x) = Γ(a, x) / Γ(a), the upper tail.
    pub fn upper_regularized(a: f64, x: f64) -> f64 {
        assert!(a > 0.0, "shape parameter must be positive");
        if x <= 0.0 {
            return 1.0;
        }
        if x < a + 1.0 {
            1.0 - lower_series(a, x)
        } else {
            upper_continued_fraction(a, x)
        }
    }
}

pub use gamma::upper_regularized as gamma_upper_regularized;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson goodness-of-fit test of observed counts against expected counts.
/// The expected vector is rescaled to the observed total first; the p-value
/// is the chi-square upper tail with `cells - 1` degrees of freedom.
pub fn chi_square_gof(observed: &[f64], expected: &[f64]) -> Result<ChiSquareTest> {
    if observed.len() != expected.len() || observed.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "chi-square needs matching count vectors of length >= 2, got {} and {}",
            observed.len(),
            expected.len()
        )));
    }
    if expected.iter().any(|&e| e <= 0.0) {
        return Err(Error::InvalidInput("chi-square expected counts must all be positive".into()));
    }
    let obs_total: f64 = observed.iter().sum();
    let exp_total: f64 = expected.iter().sum();
    let scale = obs_total / exp_total;
    let chi2: f64 = observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| {
            let e = e * scale;
            (o - e) * (o - e) / e
        })
        .sum();
    let dof = observed.len() - 1;
    let p_value = gamma::upper_regularized(dof as f64 / 2.0, chi2 / 2.0);
    Ok(ChiSquareTest { chi2, dof, p_value })
}

// ─── Answering bias ──────────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasFlag {
    /// Predicted more than 10% above the gold frequency.
    Over,
    /// Predicted more than 10% below the gold frequency.
    Under,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub labels: Vec<Label>,
    pub predicted: Vec<u64>,
    pub gold: Vec<u64>,
    /// Questions whose prediction was inconclusive; excluded from both
    /// count vectors.
    pub inconclusive: u64,
    pub test: ChiSquareTest,
    pub flags: Vec<BiasFlag>,
}

/// Predicted-vs-gold label frequencies with a chi-square test of the null
/// "the predictive distribution equals the empirical one". Labels deviating
/// from the gold count by more than 10% relative are flagged over/under.
pub fn bias_report(preds: &[Option<Label>], golds: &[Label]) -> Result<BiasReport> {
    if preds.len() != golds.len() || preds.is_empty() {
        return Err(Error::InvalidInput(format!(
            "bias report needs equal non-empty prediction/gold lists, got {} and {}",
            preds.len(),
            golds.len()
        )));
    }
    let labels: Vec<Label> = {
        let mut set: BTreeSet<Label> = golds.iter().copied().collect();
        set.extend(preds.iter().flatten().copied());
        set.into_iter().collect()
    };
    let mut predicted = vec![0u64; labels.len()];
    let mut gold = vec![0u64; labels.len()];
    let mut inconclusive = 0u64;
    let slot = |l: Label| labels.iter().position(|&x| x == l).expect("label in set");
    for (p, g) in preds.iter().zip(golds) {
        match p {
            Some(l) => {
                predicted[slot(*l)] += 1;
                gold[slot(*g)] += 1;
            }
            None => inconclusive += 1,
        }
    }
    let obs: Vec<f64> = predicted.iter().map(|&c| c as f64).collect();
    let exp: Vec<f64> = gold.iter().map(|&c| c as f64).collect();
    let test = chi_square_gof(&obs, &exp)?;
    let flags = predicted
        .iter()
        .zip(&gold)
        .map(|(&p, &g)| {
            if g == 0 {
                BiasFlag::None
            } else if p as f64 > 1.1 * g as f64 {
                BiasFlag::Over
            } else if (p as f64) < 0.9 * g as f64 {
                BiasFlag::Under
            } else {
                BiasFlag::None
            }
        })
        .collect();
    Ok(BiasReport {
        labels,
        predicted,
        gold,
        inconclusive,
        test,
        flags,
    })
}

// ─── Prompt agreement ────────────────────────────────────────────────────────

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementMatrix {
    pub prompts: Vec<String>,
    /// `matrix[i][j]` is the fraction of questions where prompts i and j
    /// predict the same label (inconclusive agrees only with inconclusive).
    pub matrix: Vec<Vec<f64>>,
}

pub fn agreement_matrix(per_prompt: &[(String, Vec<Option<Label>>)]) -> Result<AgreementMatrix> {
    if per_prompt.is_empty() {
        return Err(Error::InvalidInput("agreement matrix needs at least one prompt".into()));
    }
    let n = per_prompt[0].1.len();
    if n == 0 {
        return Err(Error::InvalidInput("agreement matrix needs at least one question".into()));
    }
    for (id, preds) in per_prompt {
        if preds.len() != n {
            return Err(Error::InvalidInput(format!(
                "prompt {id} has {} predictions, expected {n} (lists must align by question)",
                preds.len()
            )));
        }
    }
    let matrix = per_prompt
        .iter()
        .map(|(_, a)| {
            per_prompt
                .iter()
                .map(|(_, b)| {
                    let same = a.iter().zip(b).filter(|(x, y)| x == y).count();
                    same as f64 / n as f64
                })
                .collect()
        })
        .collect();
    Ok(AgreementMatrix {
        prompts: per_prompt.iter().map(|(id, _)| id.clone()).collect(),
        matrix,
    })
}

// ─── Annotation patterns ─────────────────────────────────────────────────────

/// The six annotation categories: evidence of correct reasoning (A),
/// correct knowledge recall (B), correct reading comprehension (C), and
/// their failure counterparts (D, E, F).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pattern {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl Pattern {
    pub const ALL: [Pattern; 6] = [
        Pattern::A,
        Pattern::B,
        Pattern::C,
        Pattern::D,
        Pattern::E,
        Pattern::F,
    ];
}

/// One annotated chain of thought. A record may carry both the success and
/// failure pattern for the same skill.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub id: String,
    pub correct: bool,
    pub patterns: BTreeSet<Pattern>,
    pub inconclusive: bool,
}

/// Reads annotation JSONL: `{"id", "correct", "patterns": ["A","D"], "inconclusive"}`.
pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: AnnotationRecord =
            serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
                path: path.to_path_buf(),
                line: lineno + 1,
                detail: e.to_string(),
            })?;
        out.push(record);
    }
    Ok(out)
}

/// Rounds to the nearest integer with ties going to the even neighbor.
pub fn round_half_even(x: f64) -> i64 {
    let floor = x.floor();
    let diff = x - floor;
    let f = floor as i64;
    match diff.partial_cmp(&0.5).expect("finite ratio") {
        std::cmp::Ordering::Greater => f + 1,
        std::cmp::Ordering::Less => f,
        std::cmp::Ordering::Equal if f % 2 == 0 => f,
        std::cmp::Ordering::Equal => f + 1,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupFrequency {
    pub count: usize,
    pub group_size: usize,
    /// Whole-percent display value, `round_half_even(100 * count / size)`.
    pub percent: i64,
}

impl GroupFrequency {
    fn new(count: usize, group_size: usize) -> GroupFrequency {
        let percent = if group_size == 0 {
            0
        } else {
            round_half_even(100.0 * count as f64 / group_size as f64)
        };
        GroupFrequency {
            count,
            group_size,
            percent,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternRow {
    pub pattern: Pattern,
    pub correct: GroupFrequency,
    pub incorrect: GroupFrequency,
    pub total: GroupFrequency,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternFrequencyReport {
    pub rows: Vec<PatternRow>,
    pub correct_group: usize,
    pub incorrect_group: usize,
    pub total_group: usize,
    /// Inconclusive chains of thought among the incorrect group.
    pub inconclusive_incorrect: GroupFrequency,
}

/// Per-pattern match frequencies split by prediction outcome, with raw
/// counts retained next to the whole-percent display values.
pub fn pattern_frequencies(annotations: &[AnnotationRecord]) -> Result<PatternFrequencyReport> {
    if annotations.is_empty() {
        return Err(Error::InvalidInput("pattern frequencies require annotations".into()));
    }
    let correct_group = annotations.iter().filter(|a| a.correct).count();
    let incorrect_group = annotations.len() - correct_group;
    let rows = Pattern::ALL
        .iter()
        .map(|&pattern| {
            let among = |want_correct: Option<bool>| {
                annotations
                    .iter()
                    .filter(|a| want_correct.is_none_or(|w| a.correct == w))
                    .filter(|a| a.patterns.contains(&pattern))
                    .count()
            };
            PatternRow {
                pattern,
                correct: GroupFrequency::new(among(Some(true)), correct_group),
                incorrect: GroupFrequency::new(among(Some(false)), incorrect_group),
                total: GroupFrequency::new(among(None), annotations.len()),
            }
        })
        .collect();
    let inconclusive = annotations
        .iter()
        .filter(|a| !a.correct && a.inconclusive)
        .count();
    Ok(PatternFrequencyReport {
        rows,
        correct_group,
        incorrect_group,
        total_group: annotations.len(),
        inconclusive_incorrect: GroupFrequency::new(inconclusive, incorrect_group),
    })
}
