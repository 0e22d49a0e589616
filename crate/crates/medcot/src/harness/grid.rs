//! Multi-prompt grids: run several configs over one dataset and majority-
//! vote their per-question predictions into an ensemble.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::report::read_results;
use super::run::run;
use crate::aggregation::ensemble_vote;
use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::metrics::{accuracy, AccuracyEstimate};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridRunEntry {
    pub name: String,
    pub dir: PathBuf,
    pub accuracy: AccuracyEstimate,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridOutcome {
    pub runs: Vec<GridRunEntry>,
    /// Number of voters per question (one per run).
    pub n: usize,
    pub ensemble_accuracy: AccuracyEstimate,
    pub ties: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct EnsembleRow {
    id: String,
    gold: Label,
    prediction: Option<Label>,
    tie: bool,
    correct: bool,
    votes: BTreeMap<Label, u32>,
}

fn symmetric_difference(a: &[String], b: &[String]) -> Vec<String> {
    let sa: std::collections::BTreeSet<&String> = a.iter().collect();
    let sb: std::collections::BTreeSet<&String> = b.iter().collect();
    sa.symmetric_difference(&sb).map(|s| (*s).clone()).collect()
}

/// Runs every config and votes across them per question. All configs must
/// share the dataset, split, subsample and permutation settings, and use
/// distinct output directories.
pub fn run_grid(configs: &[ExperimentConfig], out_dir: impl AsRef<Path>) -> Result<GridOutcome> {
    if configs.is_empty() {
        return Err(Error::Config("grid needs at least one config".into()));
    }
    let first = &configs[0];
    for config in configs {
        config.validate()?;
        if config.dataset != first.dataset || config.permutation_seed != first.permutation_seed {
            return Err(Error::Config(
                "grid configs must share dataset, split, subsample and permutation settings".into(),
            ));
        }
    }
    {
        let mut dirs: Vec<&PathBuf> = configs.iter().map(|c| &c.output_dir).collect();
        dirs.sort();
        dirs.dedup();
        if dirs.len() != configs.len() {
            return Err(Error::Config("grid configs must use distinct output_dir values".into()));
        }
    }

    let out_dir = out_dir.as_ref().to_path_buf();
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;

    let mut runs = Vec::with_capacity(configs.len());
    let mut per_run_preds: Vec<(String, BTreeMap<String, Option<Label>>)> = Vec::new();
    let mut golds: BTreeMap<String, Label> = BTreeMap::new();
    let mut reference_ids: Option<Vec<String>> = None;

    for (i, config) in configs.iter().enumerate() {
        let dir = run(config)?;
        let results = read_results(&dir)?;
        let mut ids: Vec<String> = results.iter().map(|r| r.id.clone()).collect();
        ids.sort();
        match &reference_ids {
            None => reference_ids = Some(ids),
            Some(reference) => {
                if *reference != ids {
                    let diff = symmetric_difference(reference, &ids);
                    let shown: Vec<&String> = diff.iter().take(8).collect();
                    return Err(Error::MismatchedQuestions(format!(
                        "{} ids differ, e.g. {:?}",
                        diff.len(),
                        shown
                    )));
                }
            }
        }
        let mut name = config.run_name();
        if per_run_preds.iter().any(|(n, _)| *n == name) {
            name = format!("{name}#{i}");
        }
        let pairs: Vec<(Option<Label>, Label)> =
            results.iter().map(|r| (r.prediction, r.gold)).collect();
        runs.push(GridRunEntry {
            name: name.clone(),
            dir,
            accuracy: accuracy(&pairs)?,
        });
        for r in &results {
            golds.insert(r.id.clone(), r.gold);
        }
        per_run_preds.push((name, results.into_iter().map(|r| (r.id, r.prediction)).collect()));
    }

    let mut rows = Vec::with_capacity(golds.len());
    for (id, gold) in &golds {
        let voters: Vec<(String, Option<Label>)> = per_run_preds
            .iter()
            .map(|(name, preds)| (name.clone(), preds[id]))
            .collect();
        let prediction = ensemble_vote(&voters);
        rows.push(EnsembleRow {
            id: id.clone(),
            gold: *gold,
            prediction: prediction.label,
            tie: prediction.tie,
            correct: prediction.label == Some(*gold),
            votes: prediction.votes,
        });
    }
    let pairs: Vec<(Option<Label>, Label)> = rows.iter().map(|r| (r.prediction, r.gold)).collect();
    let outcome = GridOutcome {
        n: configs.len(),
        ensemble_accuracy: accuracy(&pairs)?,
        ties: rows.iter().filter(|r| r.tie).count(),
        runs,
    };

    let mut lines = String::new();
    for row in &rows {
        lines.push_str(&serde_json::to_string(&row)?);
        lines.push('\n');
    }
    let results_path = out_dir.join("ensemble_results.jsonl");
    fs::write(&results_path, lines).map_err(|e| Error::io(&results_path, e))?;
    let mut json = serde_json::to_string_pretty(&outcome)?;
    json.push('\n');
    let json_path = out_dir.join("ensemble.json");
    fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;
    let md_path = out_dir.join("grid_summary.md");
    fs::write(&md_path, grid_markdown(&outcome)).map_err(|e| Error::io(&md_path, e))?;

    Ok(outcome)
}

fn grid_markdown(outcome: &GridOutcome) -> String {
    let mut md = String::from("| run | accuracy | stderr |\n|---|---|---|\n");
    for entry in &outcome.runs {
        md.push_str(&format!(
            "| {} | {:.3} | {:.3} |\n",
            entry.name, entry.accuracy.accuracy, entry.accuracy.stderr
        ));
    }
    md.push_str(&format!(
        "| ensemble (n={}) | {:.3} | {:.3} |\n",
        outcome.n, outcome.ensemble_accuracy.accuracy, outcome.ensemble_accuracy.stderr
    ));
    md
}
