//! Experiment configuration, loadable from JSON or TOML.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetKind, ShotStrategy, Split};
use crate::error::{Error, Result};
use crate::llm::{ProviderConfig, SamplingParams};
use crate::prompting::{cue_by_id, load_cues, CotCue, PromptRegime};
use crate::retrieval::{RetrievalWeights, DEFAULT_B, DEFAULT_K1, DEFAULT_STRIDE, DEFAULT_WINDOW};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsampleMode {
    /// Seeded draw without replacement, file order preserved.
    Random,
    /// The first `count` records.
    Prefix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsampleConfig {
    pub count: usize,
    pub mode: SubsampleMode,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub path: PathBuf,
    pub kind: DatasetKind,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsample: Option<SubsampleConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShotConfig {
    pub n: usize,
    pub strategy: ShotStrategy,
    #[serde(default)]
    pub seed: u64,
}

fn default_window() -> usize {
    DEFAULT_WINDOW
}

fn default_stride() -> usize {
    DEFAULT_STRIDE
}

fn default_k1() -> f64 {
    DEFAULT_K1
}

fn default_b() -> f64 {
    DEFAULT_B
}

fn default_budget() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundingConfig {
    /// Corpus JSONL to chunk and index on the fly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus_path: Option<PathBuf>,
    /// A prebuilt index sidecar file (see the `index` subcommand).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_path: Option<PathBuf>,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default = "default_k1")]
    pub k1: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default)]
    pub weights: RetrievalWeights,
    /// Passages inserted into the prompt context.
    #[serde(default = "default_budget")]
    pub budget: usize,
}

fn default_bins() -> usize {
    10
}

/// One experiment: dataset x prompt regime x cue x grounding x provider x
/// sampling. Serializes back to an identical config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub regime: PromptRegime,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cue_id: Option<u16>,
    /// Extra cue definitions beyond the built-in catalog.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cue_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<ShotConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grounding: Option<GroundingConfig>,
    pub provider: ProviderConfig,
    pub sampling: SamplingParams,
    /// Seed for the label-permutation rerun of the bias experiment; every
    /// question gets its own permutation derived from this seed and its id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutation_seed: Option<u64>,
    pub output_dir: PathBuf,
    #[serde(default = "default_bins")]
    pub calibration_bins: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.provider.validate()?;
        self.sampling.validate()?;
        match self.regime {
            PromptRegime::Cot => {
                if self.cue_id.is_none() {
                    return Err(Error::Config("cot regime requires cue_id".into()));
                }
            }
            PromptRegime::Direct => {
                if self.cue_id.is_some() {
                    return Err(Error::Config("direct regime takes no cue_id".into()));
                }
            }
        }
        if let Some(id) = self.cue_id {
            self.resolve_cue(id)?;
        }
        if let Some(g) = &self.grounding {
            if g.corpus_path.is_none() && g.index_path.is_none() {
                return Err(Error::Config(
                    "grounding requires corpus_path or index_path".into(),
                ));
            }
            if g.budget == 0 {
                return Err(Error::Config("grounding budget must be at least 1".into()));
            }
        }
        if self.calibration_bins == 0 {
            return Err(Error::Config("calibration_bins must be at least 1".into()));
        }
        Ok(())
    }

    /// Looks a cue up in the built-in catalog, falling back to `cue_file`.
    pub fn resolve_cue(&self, id: u16) -> Result<CotCue> {
        if let Some(cue) = cue_by_id(id) {
            if cue.is_direct_baseline() {
                return Err(Error::Config(format!(
                    "cue {id} is the direct baseline; use regime = direct instead"
                )));
            }
            return Ok(cue);
        }
        if let Some(path) = &self.cue_file {
            if let Some(cue) = load_cues(path)?.into_iter().find(|c| c.id == id) {
                return Ok(cue);
            }
        }
        Err(Error::Config(format!("cue id {id} not in the catalog or cue_file")))
    }

    /// A short human-readable tag for grids and reports.
    pub fn run_name(&self) -> String {
        let mut name = String::new();
        if let Some(shots) = &self.shots {
            name.push_str(&format!("{}shot-", shots.n));
        }
        match self.regime {
            PromptRegime::Direct => name.push_str("direct"),
            PromptRegime::Cot => name.push_str(&format!("cot{}", self.cue_id.unwrap_or_default())),
        }
        if self.grounding.is_some() {
            name.push_str("+bm25");
        }
        name
    }

    pub fn to_canonical_json(&self) -> String {
        let mut json = serde_json::to_string_pretty(self).expect("config serializes");
        json.push('\n');
        json
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: ExperimentConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        config.validate()?;
        Ok(config)
    }

    /// Parses either a single config or an array of configs (for grids).
    pub fn list_from_file(path: impl AsRef<Path>) -> Result<Vec<ExperimentConfig>> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if let Ok(list) = serde_json::from_str::<Vec<ExperimentConfig>>(&raw) {
            for config in &list {
                config.validate()?;
            }
            return Ok(list);
        }
        Ok(vec![ExperimentConfig::from_file(path)?])
    }
}
