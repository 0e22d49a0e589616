//! Turning per-question completion sets into predictions.
//!
//! The marginal answer likelihood over k sampled completions assigns each
//! option the fraction of samples whose extracted label names it;
//! inconclusive samples stay in the denominator, so the mass can
//! sub-normalize. Majority voting takes the argmax with ties broken toward
//! the smallest letter (and flagged). Multi-prompt ensembles vote one
//! prediction per prompt, ignoring inconclusive voters.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnswerOption, Label};
use crate::error::{Error, Result};
use crate::extraction::extract_answer;
use crate::llm::Completion;

/// Per-option probability mass over k completions, kept as exact integer
/// counts; `mass = count / k`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerDistribution {
    pub counts: BTreeMap<Label, u32>,
    pub k: u32,
    pub inconclusive: u32,
}

impl AnswerDistribution {
    /// Builds a distribution from one extracted label per completion.
    pub fn from_labels(labels: &[Option<Label>]) -> Result<AnswerDistribution> {
        if labels.is_empty() {
            return Err(Error::InvalidInput(
                "answer distribution requires at least one completion".into(),
            ));
        }
        let mut counts: BTreeMap<Label, u32> = BTreeMap::new();
        let mut inconclusive = 0u32;
        for label in labels {
            match label {
                Some(l) => *counts.entry(*l).or_insert(0) += 1,
                None => inconclusive += 1,
            }
        }
        Ok(AnswerDistribution {
            counts,
            k: labels.len() as u32,
            inconclusive,
        })
    }

    pub fn mass(&self, label: Label) -> f64 {
        *self.counts.get(&label).unwrap_or(&0) as f64 / self.k as f64
    }

    pub fn masses(&self) -> BTreeMap<Label, f64> {
        self.counts
            .iter()
            .map(|(&l, &c)| (l, c as f64 / self.k as f64))
            .collect()
    }

    /// The model's confidence: the largest option mass, if any sample was
    /// conclusive.
    pub fn confidence(&self) -> Option<f64> {
        self.counts.values().max().map(|&c| c as f64 / self.k as f64)
    }

    /// Counted mass plus inconclusive mass accounts for every sample.
    pub fn check(&self) -> Result<()> {
        let counted: u32 = self.counts.values().sum();
        if counted + self.inconclusive != self.k {
            return Err(Error::InvalidInput(format!(
                "distribution counts {} + inconclusive {} != k {}",
                counted, self.inconclusive, self.k
            )));
        }
        Ok(())
    }
}

/// The marginal answer likelihood over sampled completions: each option's
/// mass is the fraction of completions whose extracted answer names it.
/// Order-invariant in the completion list.
pub fn answer_likelihood(
    completions: &[Completion],
    options: &[AnswerOption],
) -> Result<AnswerDistribution> {
    let labels: Vec<Option<Label>> = completions
        .iter()
        .map(|c| extract_answer(&c.text, options).label)
        .collect();
    AnswerDistribution::from_labels(&labels)
}

/// A majority-vote outcome. `label` is `None` when every voter was
/// inconclusive.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsemblePrediction {
    pub label: Option<Label>,
    pub votes: BTreeMap<Label, u32>,
    pub n: usize,
    pub tie: bool,
}

fn argmax_vote(votes: &BTreeMap<Label, u32>, n: usize) -> EnsemblePrediction {
    let max = votes.values().copied().max().unwrap_or(0);
    if max == 0 {
        return EnsemblePrediction {
            label: None,
            votes: votes.clone(),
            n,
            tie: false,
        };
    }
    let mut leaders = votes.iter().filter(|(_, &c)| c == max).map(|(&l, _)| l);
    let label = leaders.next();
    let tie = leaders.next().is_some();
    EnsemblePrediction {
        label,
        votes: votes.clone(),
        n,
        tie,
    }
}

/// Majority vote over a single distribution's sample counts. Ties resolve
/// to the smallest letter with `tie` set; an all-inconclusive distribution
/// yields an inconclusive prediction.
pub fn vote(dist: &AnswerDistribution) -> EnsemblePrediction {
    argmax_vote(&dist.counts, dist.k as usize)
}

/// Majority vote across prompts, one predicted label per prompt.
/// Inconclusive voters are excluded from the counts but included in `n`.
pub fn ensemble_vote(per_prompt: &[(String, Option<Label>)]) -> EnsemblePrediction {
    let mut votes: BTreeMap<Label, u32> = BTreeMap::new();
    for (_, label) in per_prompt {
        if let Some(l) = label {
            *votes.entry(*l).or_insert(0) += 1;
        }
    }
    argmax_vote(&votes, per_prompt.len())
}

/// One question's sampled labels and gold answer, the unit of the
/// subsample accuracy curve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuestionSamples {
    pub labels: Vec<Option<Label>>,
    pub gold: Label,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsamplePoint {
    pub kprime: usize,
    pub mean_accuracy: f64,
    pub std: f64,
}

fn vote_labels(labels: &[Option<Label>]) -> Option<Label> {
    let mut votes: BTreeMap<Label, u32> = BTreeMap::new();
    for l in labels.iter().flatten() {
        *votes.entry(*l).or_insert(0) += 1;
    }
    argmax_vote(&votes, labels.len()).label
}

/// Ensemble accuracy using every sample of every question.
pub fn full_ensemble_accuracy(per_question: &[QuestionSamples]) -> f64 {
    let correct = per_question
        .iter()
        .filter(|q| vote_labels(&q.labels) == Some(q.gold))
        .count();
    correct as f64 / per_question.len() as f64
}

/// The exact expected accuracy of single-sample prediction: the average
/// fraction of samples naming the gold label.
pub fn singleton_accuracy(per_question: &[QuestionSamples]) -> f64 {
    let total: f64 = per_question
        .iter()
        .map(|q| {
            let correct = q.labels.iter().filter(|l| **l == Some(q.gold)).count();
            correct as f64 / q.labels.len() as f64
        })
        .sum();
    total / per_question.len() as f64
}

/// Accuracy of majority voting over random subsets of k' samples.
///
/// For each k' in the grid, draws `trials` seeded subsets without
/// replacement per question and averages the resulting vote accuracy; the
/// reported std is the population standard deviation over trials. At
/// k' = k the subsample is the whole set, so the mean equals the
/// full-ensemble accuracy exactly and the std is zero.
pub fn subsample_curve(
    per_question: &[QuestionSamples],
    kprime_grid: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<SubsamplePoint>> {
    if per_question.is_empty() {
        return Err(Error::InvalidInput("subsample curve needs at least one question".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidInput("subsample curve needs at least one trial".into()));
    }
    let min_k = per_question.iter().map(|q| q.labels.len()).min().unwrap_or(0);
    if let Some(&bad) = kprime_grid.iter().find(|&&kp| kp == 0 || kp > min_k) {
        return Err(Error::InvalidInput(format!(
            "subsample size {bad} exceeds the available 1..={min_k} completions of some question"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(kprime_grid.len());
    for &kprime in kprime_grid {
        let mut accs = Vec::with_capacity(trials);
        for _ in 0..trials {
            let mut correct = 0usize;
            for q in per_question {
                let picked = rand::seq::index::sample(&mut rng, q.labels.len(), kprime);
                let subset: Vec<Option<Label>> = picked.iter().map(|i| q.labels[i]).collect();
                if vote_labels(&subset) == Some(q.gold) {
                    correct += 1;
                }
            }
            accs.push(correct as f64 / per_question.len() as f64);
        }
        // All trials identical (always the case at k' = k, where every
        // subsample is the whole set): the mean is that value exactly.
        let (mean, std) = if accs.iter().all(|a| *a == accs[0]) {
            (accs[0], 0.0)
        } else {
            let mean = accs.iter().sum::<f64>() / trials as f64;
            let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / trials as f64;
            (mean, var.sqrt())
        };
        out.push(SubsamplePoint {
            kprime,
            mean_accuracy: mean,
            std,
        });
    }
    Ok(out)
}
