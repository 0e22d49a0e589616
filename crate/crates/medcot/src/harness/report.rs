//! Report emission: CSVs for calibration bins, bias counts, subsample
//! curves and agreement matrices, plus a markdown summary table.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::run::{QuestionResult, RunSummary};
use crate::aggregation::{subsample_curve, QuestionSamples};
use crate::error::{Error, Result};

pub const REPORT_KINDS: [&str; 5] = ["summary", "calibration", "bias", "subsample", "agreement"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportKind {
    Summary,
    Calibration,
    Bias,
    Subsample,
    Agreement,
}

impl FromStr for ReportKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<ReportKind> {
        match s {
            "summary" => Ok(ReportKind::Summary),
            "calibration" => Ok(ReportKind::Calibration),
            "bias" => Ok(ReportKind::Bias),
            "subsample" => Ok(ReportKind::Subsample),
            "agreement" => Ok(ReportKind::Agreement),
            other => Err(Error::UnknownReportKind {
                kind: other.to_string(),
                valid: REPORT_KINDS.join(", "),
            }),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SubsampleOptions {
    /// Subset sizes; defaults to 1..=k.
    pub grid: Option<Vec<usize>>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for SubsampleOptions {
    fn default() -> Self {
        SubsampleOptions {
            grid: None,
            trials: 20,
            seed: 0,
        }
    }
}

pub fn read_results(run_dir: impl AsRef<Path>) -> Result<Vec<QuestionResult>> {
    let path = run_dir.as_ref().join("results.jsonl");
    let raw = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: QuestionResult = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
            path: path.clone(),
            line: lineno + 1,
            detail: e.to_string(),
        })?;
        out.push(r);
    }
    Ok(out)
}

pub fn read_summary(run_dir: impl AsRef<Path>) -> Result<RunSummary> {
    let path = run_dir.as_ref().join("summary.json");
    let raw = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&raw)?)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn finish(mut writer: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    writer
        .flush()
        .map_err(|e| Error::io(path, std::io::Error::other(e)))
}

fn summary_markdown(runs: &[(PathBuf, RunSummary)]) -> String {
    let mut md = String::from(
        "| run | provider | questions | k | accuracy | stderr | macro F1 | inconclusive |\n|---|---|---|---|---|---|---|---|\n",
    );
    for (_, s) in runs {
        md.push_str(&format!(
            "| {} | {} | {} | {} | {:.3} | {:.3} | {:.3} | {} |\n",
            s.run_name,
            s.provider,
            s.questions,
            s.k,
            s.accuracy.accuracy,
            s.accuracy.stderr,
            s.f1.macro_f1,
            s.bias.inconclusive,
        ));
    }
    md
}

fn write_calibration_csv(out: &Path, name: &str, summary: &RunSummary) -> Result<PathBuf> {
    let path = out.join(format!("{name}_calibration.csv"));
    let mut w = csv_writer(&path)?;
    w.write_record(["bin_lo", "bin_hi", "count", "mean_confidence", "accuracy"])
        .map_err(|e| Error::io(&path, std::io::Error::other(e)))?;
    for bin in &summary.calibration.bins {
        w.write_record([
            format!("{}", bin.lo),
            format!("{}", bin.hi),
            format!("{}", bin.count),
            format!("{}", bin.mean_confidence),
            format!("{}", bin.accuracy),
        ])
        .map_err(|e| Error::io(&path, std::io::Error::other(e)))?;
    }
    finish(w, &path)?;
    Ok(path)
}

fn write_bias_csv(out: &Path, name: &str, summary: &RunSummary) -> Result<PathBuf> {
    let path = out.join(format!("{name}_bias.csv"));
    let mut w = csv_writer(&path)?;
    w.write_record(["label", "predicted", "gold", "flag"])
        .map_err(|e| Error::io(&path, std::io::Error::other(e)))?;
    let bias = &summary.bias;
    for (i, label) in bias.labels.iter().enumerate() {
        let flag = match bias.flags[i] {
            crate::metrics::BiasFlag::Over => "over",
            crate::metrics::BiasFlag::Under => "under",
            crate::metrics::BiasFlag::None => "",
        };
        w.write_record([
            label.to_string(),
            bias.predicted[i].to_string(),
            bias.gold[i].to_string(),
            flag.to_string(),
        ])
        .map_err(|e| Error::io(&path, std::io::Error::other(e)))?;
    }
    finish(w, &path)?;
    Ok(path)
}

fn write_subsample_csv(
    out: &Path,
    name: &str,
    results: &[QuestionResult],
    options: &SubsampleOptions,
) -> Result<PathBuf> {
    let per_question: Vec<QuestionSamples> = results
        .iter()
        .map(|r| QuestionSamples {
            labels: r.completions.iter().map(|c| c.label).collect(),
            gold: r.gold,
        })
        .collect();
    let k = per_question.first().map_or(0, |q| q.labels.len());
    let grid: Vec<usize> = match &options.grid {
        Some(g) => g.clone(),
        None => (1..=k).collect(),
    };
    let curve = subsample_curve(&per_question, &grid, options.trials, options.seed)?;
    let path = out.join(format!("{name}_subsample.csv"));
    let mut w = csv_writer(&path)?;
    w.write_record(["kprime", "mean_accuracy", "std"])
        .map_err(|e| Error::io(&path, std::io::Error::other(e)))?;
    for point in curve {
        w.write_record([
            point.kprime.to_string(),
            format!("{}", point.mean_accuracy),
            format!("{}", point.std),
        ])
        .map_err(|e| Error::io(&path, std::io::Error::other(e)))?;
    }
    finish(w, &path)?;
    Ok(path)
}

fn write_agreement_csv(out: &Path, runs: &[(PathBuf, RunSummary)]) -> Result<PathBuf> {
    let mut aligned: Vec<(String, Vec<Option<crate::dataset::Label>>)> = Vec::new();
    let mut reference_ids: Option<Vec<String>> = None;
    for (dir, summary) in runs {
        let mut results = read_results(dir)?;
        results.sort_by(|a, b| a.id.cmp(&b.id));
        let ids: Vec<String> = results.iter().map(|r| r.id.clone()).collect();
        match &reference_ids {
            None => reference_ids = Some(ids),
            Some(reference) => {
                if *reference != ids {
                    let sa: std::collections::BTreeSet<&String> = reference.iter().collect();
                    let sb: std::collections::BTreeSet<&String> = ids.iter().collect();
                    let diff: Vec<String> =
                        sa.symmetric_difference(&sb).take(8).map(|s| (*s).clone()).collect();
                    return Err(Error::MismatchedQuestions(format!("{diff:?}")));
                }
            }
        }
        aligned.push((
            summary.run_name.clone(),
            results.iter().map(|r| r.prediction).collect(),
        ));
    }
    let matrix = crate::metrics::agreement_matrix(&aligned)?;
    let path = out.join("agreement.csv");
    let mut w = csv_writer(&path)?;
    let mut header = vec!["run".to_string()];
    header.extend(matrix.prompts.iter().cloned());
    w.write_record(&header)
        .map_err(|e| Error::io(&path, std::io::Error::other(e)))?;
    for (i, name) in matrix.prompts.iter().enumerate() {
        let mut row = vec![name.clone()];
        row.extend(matrix.matrix[i].iter().map(|v| format!("{v}")));
        w.write_record(&row)
            .map_err(|e| Error::io(&path, std::io::Error::other(e)))?;
    }
    finish(w, &path)?;
    Ok(path)
}

/// Emits the requested reports for the given run directories into
/// `out_dir`, returning the written file paths.
pub fn write_reports(
    run_dirs: &[PathBuf],
    kinds: &[ReportKind],
    out_dir: impl AsRef<Path>,
    subsample: &SubsampleOptions,
) -> Result<Vec<PathBuf>> {
    if run_dirs.is_empty() {
        return Err(Error::InvalidInput("report needs at least one run directory".into()));
    }
    let out = out_dir.as_ref();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let runs: Vec<(PathBuf, RunSummary)> = run_dirs
        .iter()
        .map(|d| read_summary(d).map(|s| (d.clone(), s)))
        .collect::<Result<Vec<_>>>()?;
    let mut written = Vec::new();
    for kind in kinds {
        match kind {
            ReportKind::Summary => {
                let path = out.join("summary.md");
                fs::write(&path, summary_markdown(&runs)).map_err(|e| Error::io(&path, e))?;
                written.push(path);
            }
            ReportKind::Calibration => {
                for (dir, summary) in &runs {
                    written.push(write_calibration_csv(out, &summary.run_name, summary)?);
                    let _ = dir;
                }
            }
            ReportKind::Bias => {
                for (_, summary) in &runs {
                    written.push(write_bias_csv(out, &summary.run_name, summary)?);
                }
            }
            ReportKind::Subsample => {
                for (dir, summary) in &runs {
                    let results = read_results(dir)?;
                    written.push(write_subsample_csv(out, &summary.run_name, &results, subsample)?);
                }
            }
            ReportKind::Agreement => {
                written.push(write_agreement_csv(out, &runs)?);
            }
        }
    }
    Ok(written)
}
