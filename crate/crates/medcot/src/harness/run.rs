//! Executing one configured experiment end to end.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, SubsampleMode};
use crate::aggregation::{vote, AnswerDistribution};
use crate::dataset::{
    load_dataset, permute_options, select_shots, Label, LabelPermutation, QuestionRecord, ShotSet,
};
use crate::error::{Error, Result};
use crate::extraction::extract_answer;
use crate::harness::config::GroundingConfig;
use crate::llm::{CacheStats, LlmClient, SamplingParams};
use crate::metrics::{
    accuracy, bias_report, calibration, macro_f1, AccuracyEstimate, BiasReport, CalibrationReport,
    F1Report,
};
use crate::prompting::{render, render_extractive, PromptRegime, PromptSpec};
use crate::retrieval::{
    assemble_passage_ids, build_index, chunk_corpus, load_corpus, retrieve, Bm25Index,
};

/// One sampled completion's journey: the cached reasoning text (CoT runs
/// only), the cached completion the label was parsed from, and that label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionOutcome {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning_key: Option<String>,
    pub answer_key: String,
    pub label: Option<Label>,
}

/// Everything recorded per question.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionResult {
    pub id: String,
    pub gold: Label,
    pub completions: Vec<CompletionOutcome>,
    pub distribution: AnswerDistribution,
    pub prediction: Option<Label>,
    pub tie: bool,
    pub correct: bool,
    /// Passage ids inserted into the prompt context, empty without
    /// grounding.
    pub retrieved: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    #[serde(rename = "final")]
    pub is_final: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub run_name: String,
    pub provider: String,
    pub questions: usize,
    pub k: usize,
    pub ties: usize,
    pub accuracy: AccuracyEstimate,
    pub f1: F1Report,
    pub bias: BiasReport,
    pub calibration: CalibrationReport,
}

fn permutation_for(seed: u64, id: &str, n: usize) -> LabelPermutation {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    let digest = h.finalize();
    let mut eight = [0u8; 8];
    eight.copy_from_slice(&digest[..8]);
    LabelPermutation::random(n, u64::from_le_bytes(eight))
}

/// Loads, filters, subsamples and (optionally) permutes the evaluation
/// records for a config.
pub(crate) fn prepare_eval(config: &ExperimentConfig) -> Result<Vec<QuestionRecord>> {
    let all = load_dataset(&config.dataset.path, config.dataset.kind)?;
    let mut eval: Vec<QuestionRecord> = all
        .into_iter()
        .filter(|r| r.split == config.dataset.split)
        .collect();
    if let Some(sub) = &config.dataset.subsample {
        if sub.count > eval.len() {
            return Err(Error::Config(format!(
                "subsample of {} requested but the split has only {} records",
                sub.count,
                eval.len()
            )));
        }
        eval = match sub.mode {
            SubsampleMode::Prefix => eval.into_iter().take(sub.count).collect(),
            SubsampleMode::Random => {
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(sub.seed);
                let mut picked = rand::seq::index::sample(&mut rng, eval.len(), sub.count).into_vec();
                picked.sort_unstable();
                picked.into_iter().map(|i| eval[i].clone()).collect()
            }
        };
    }
    if let Some(seed) = config.permutation_seed {
        eval = eval
            .iter()
            .map(|r| permute_options(r, &permutation_for(seed, &r.id, r.options.len())))
            .collect::<Result<Vec<_>>>()?;
    }
    if eval.is_empty() {
        return Err(Error::Config(format!(
            "no {} records in {}",
            config.dataset.split.as_str(),
            config.dataset.path.display()
        )));
    }
    Ok(eval)
}

fn prepare_shots(config: &ExperimentConfig, eval: &[QuestionRecord]) -> Result<Option<ShotSet>> {
    let Some(shot_config) = &config.shots else {
        return Ok(None);
    };
    let all = load_dataset(&config.dataset.path, config.dataset.kind)?;
    let shots = select_shots(&all, shot_config.n, shot_config.strategy, shot_config.seed)?;
    shots.ensure_disjoint(eval)?;
    Ok(Some(shots))
}

fn prepare_index(grounding: &GroundingConfig) -> Result<Bm25Index> {
    if let Some(path) = &grounding.index_path {
        return Bm25Index::load(path);
    }
    let corpus_path = grounding
        .corpus_path
        .as_ref()
        .expect("validated: corpus or index present");
    let docs = load_corpus(corpus_path)?;
    let passages = chunk_corpus(&docs, grounding.window, grounding.stride)?;
    build_index(passages, grounding.k1, grounding.b)
}

struct RunContext<'a> {
    config: &'a ExperimentConfig,
    client: LlmClient,
    shots: Option<ShotSet>,
    index: Option<Bm25Index>,
}

impl RunContext<'_> {
    fn prompt_spec(&self, record: &QuestionRecord) -> Result<(PromptSpec, Vec<usize>)> {
        let mut retrieved = Vec::new();
        let mut grounding_passages = Vec::new();
        if let (Some(index), Some(gc)) = (&self.index, &self.config.grounding) {
            let per_option: Vec<_> = record
                .options
                .iter()
                .map(|o| retrieve(record, o.label, index, &gc.weights, gc.budget))
                .collect::<Result<Vec<_>>>()?;
            retrieved = assemble_passage_ids(&per_option, gc.budget);
            grounding_passages = retrieved.iter().map(|&pid| index.passages[pid].clone()).collect();
        }
        let cue = match self.config.regime {
            PromptRegime::Cot => Some(self.config.resolve_cue(self.config.cue_id.expect("validated"))?),
            PromptRegime::Direct => None,
        };
        let spec = PromptSpec {
            regime: self.config.regime,
            shots: self.shots.clone(),
            cue,
            grounding: grounding_passages,
            record: record.clone(),
        };
        Ok((spec, retrieved))
    }

    fn process_question(&self, record: &QuestionRecord) -> Result<QuestionResult> {
        let (spec, retrieved) = self.prompt_spec(record)?;
        let stage1 = render(&spec)?;
        let samples = self.client.complete(&stage1.text, &self.config.sampling)?;
        let mut outcomes = Vec::with_capacity(samples.len());
        match self.config.regime {
            PromptRegime::Direct => {
                for sample in &samples {
                    outcomes.push(CompletionOutcome {
                        reasoning_key: None,
                        answer_key: sample.cache_key.clone(),
                        label: extract_answer(&sample.text, &record.options).label,
                    });
                }
            }
            PromptRegime::Cot => {
                let extract_params = SamplingParams::extractive();
                for sample in &samples {
                    let stage2 = render_extractive(&stage1, &sample.text)?;
                    let answers = self.client.complete(&stage2.text, &extract_params)?;
                    let answer = &answers[0];
                    outcomes.push(CompletionOutcome {
                        reasoning_key: Some(sample.cache_key.clone()),
                        answer_key: answer.cache_key.clone(),
                        label: extract_answer(&answer.text, &record.options).label,
                    });
                }
            }
        }
        let labels: Vec<Option<Label>> = outcomes.iter().map(|o| o.label).collect();
        let distribution = AnswerDistribution::from_labels(&labels)?;
        let prediction = vote(&distribution);
        Ok(QuestionResult {
            id: record.id.clone(),
            gold: record.gold,
            correct: prediction.label == Some(record.gold),
            prediction: prediction.label,
            tie: prediction.tie,
            completions: outcomes,
            distribution,
            retrieved,
        })
    }
}

/// Runs every question with at most `workers` in flight, keeping whatever
/// finished if any question fails.
fn map_questions(
    ctx: &RunContext<'_>,
    eval: &[QuestionRecord],
    workers: usize,
) -> (Vec<QuestionResult>, Option<Error>) {
    let workers = workers.max(1).min(eval.len().max(1));
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let slots: Vec<Mutex<Option<Result<QuestionResult>>>> =
        eval.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if failed.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= eval.len() {
                    break;
                }
                let result = ctx.process_question(&eval[i]);
                if result.is_err() {
                    failed.store(true, Ordering::SeqCst);
                }
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });
    let mut done = Vec::new();
    let mut first_error = None;
    for slot in slots {
        match slot.into_inner().unwrap() {
            Some(Ok(r)) => done.push(r),
            Some(Err(e)) if first_error.is_none() => first_error = Some(e),
            _ => {}
        }
    }
    (done, first_error)
}

fn write_results(dir: &Path, results: &[QuestionResult]) -> Result<()> {
    let mut lines = String::new();
    for r in results {
        lines.push_str(&serde_json::to_string(r)?);
        lines.push('\n');
    }
    let path = dir.join("results.jsonl");
    fs::write(&path, lines).map_err(|e| Error::io(path, e))
}

fn write_summary(dir: &Path, summary: &RunSummary) -> Result<()> {
    let mut json = serde_json::to_string_pretty(summary)?;
    json.push('\n');
    let path = dir.join("summary.json");
    fs::write(&path, json).map_err(|e| Error::io(path, e))
}

pub(crate) fn summarize(
    config: &ExperimentConfig,
    results: &[QuestionResult],
    labels: &[Label],
) -> Result<RunSummary> {
    let pairs: Vec<(Option<Label>, Label)> = results.iter().map(|r| (r.prediction, r.gold)).collect();
    let preds: Vec<Option<Label>> = results.iter().map(|r| r.prediction).collect();
    let golds: Vec<Label> = results.iter().map(|r| r.gold).collect();
    let dists: Vec<(AnswerDistribution, Label)> = results
        .iter()
        .map(|r| (r.distribution.clone(), r.gold))
        .collect();
    Ok(RunSummary {
        is_final: true,
        error: None,
        run_name: config.run_name(),
        provider: config.provider.model.clone(),
        questions: results.len(),
        k: config.sampling.k,
        ties: results.iter().filter(|r| r.tie).count(),
        accuracy: accuracy(&pairs)?,
        f1: macro_f1(&preds, &golds, labels)?,
        bias: bias_report(&preds, &golds)?,
        calibration: calibration(&dists, config.calibration_bins)?,
    })
}

/// Executes one experiment, returning the run directory. On a provider
/// failure the partial results are persisted with `"final": false` and the
/// error is returned; re-running the same config resumes from the cache.
pub fn run(config: &ExperimentConfig) -> Result<PathBuf> {
    config.validate()?;
    let dir = config.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let config_path = dir.join("config.json");
    fs::write(&config_path, config.to_canonical_json()).map_err(|e| Error::io(&config_path, e))?;

    let eval = prepare_eval(config)?;
    let shots = prepare_shots(config, &eval)?;
    let index = config.grounding.as_ref().map(prepare_index).transpose()?;
    let client = LlmClient::from_config(&config.provider, dir.join("cache.jsonl"))?;
    let ctx = RunContext {
        config,
        client,
        shots,
        index,
    };

    let option_count = eval.iter().map(|r| r.options.len()).max().unwrap_or(0);
    let labels = Label::first_n(option_count);
    let (mut results, error) = map_questions(&ctx, &eval, config.provider.max_concurrency);
    results.sort_by(|a, b| a.id.cmp(&b.id));
    write_results(&dir, &results)?;

    match error {
        None => {
            let summary = summarize(config, &results, &labels)?;
            write_summary(&dir, &summary)?;
            Ok(dir)
        }
        Some(err) => {
            let message = err.to_string();
            let summary = RunSummary {
                is_final: false,
                error: Some(message.clone()),
                run_name: config.run_name(),
                provider: config.provider.model.clone(),
                questions: results.len(),
                k: config.sampling.k,
                ties: results.iter().filter(|r| r.tie).count(),
                accuracy: AccuracyEstimate {
                    correct: 0,
                    total: 0,
                    accuracy: 0.0,
                    stderr: 0.0,
                },
                f1: F1Report {
                    macro_f1: 0.0,
                    micro_f1: 0.0,
                    per_label: Vec::new(),
                    absent: Vec::new(),
                },
                bias: BiasReport {
                    labels: Vec::new(),
                    predicted: Vec::new(),
                    gold: Vec::new(),
                    inconclusive: 0,
                    test: crate::metrics::ChiSquareTest {
                        chi2: 0.0,
                        dof: 0,
                        p_value: 1.0,
                    },
                    flags: Vec::new(),
                },
                calibration: CalibrationReport {
                    bins: Vec::new(),
                    ece: 0.0,
                    correct_hist: Vec::new(),
                    incorrect_hist: Vec::new(),
                    excluded_inconclusive: 0,
                    total: 0,
                },
            };
            write_summary(&dir, &summary)?;
            Err(Error::PartialRun(message))
        }
    }
}

/// Fills the completion cache for a config without aggregating: stage-one
/// prompts first, then (for CoT) the stage-two prompts derived from the
/// cached reasoning samples. Idempotent.
pub fn warm(config: &ExperimentConfig) -> Result<CacheStats> {
    config.validate()?;
    let dir = config.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let eval = prepare_eval(config)?;
    let shots = prepare_shots(config, &eval)?;
    let index = config.grounding.as_ref().map(prepare_index).transpose()?;
    let client = LlmClient::from_config(&config.provider, dir.join("cache.jsonl"))?;
    let ctx = RunContext {
        config,
        client,
        shots,
        index,
    };
    let mut stage1_prompts = Vec::with_capacity(eval.len());
    for record in &eval {
        let (spec, _) = ctx.prompt_spec(record)?;
        stage1_prompts.push(render(&spec)?);
    }
    let texts: Vec<String> = stage1_prompts.iter().map(|p| p.text.clone()).collect();
    let mut stats = ctx.client.warm_cache(&texts, &config.sampling)?;
    if config.regime == PromptRegime::Cot {
        let extract_params = SamplingParams::extractive();
        let mut stage2_texts = Vec::new();
        for stage1 in &stage1_prompts {
            for sample in ctx.client.complete(&stage1.text, &config.sampling)? {
                stage2_texts.push(render_extractive(stage1, &sample.text)?.text);
            }
        }
        let stage2 = ctx.client.warm_cache(&stage2_texts, &extract_params)?;
        stats.hits += stage2.hits;
        stats.misses += stage2.misses;
        stats.fetched += stage2.fetched;
    }
    Ok(stats)
}
