//! Prompt rendering for the four answering regimes.
//!
//! Prompts are plain completion prompts (no chat roles) assembled from
//! blocks separated by one blank line, in the order: shot exemplars,
//! retrieved context, record context, question, answer stem. Inside a block
//! lines are separated by a single newline. Rendering the same spec twice
//! produces identical bytes; golden fixtures under `testdata/golden_prompts`
//! freeze the layout.
//!
//! Regimes:
//!
//! - direct: a single stage whose prompt ends `"Answer: among A through D,
//!   the answer is"` (label range adapted to the option count);
//! - CoT: two stages. Stage one ends `"Answer: <cue>"` and its completion
//!   is the chain of thought; stage two appends the sampled chain of
//!   thought and the extraction stem `"Therefore, among A through D, the
//!   answer is"`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{QuestionRecord, ShotSet};
use crate::error::{Error, Result};
use crate::retrieval::Passage;

/// A cue phrase that triggers chain-of-thought generation, e.g.
/// `"Let's think step by step"`. Cue text carries no trailing punctuation;
/// the templates add layout around it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotCue {
    pub id: u16,
    pub text: String,
    /// Position in the five-cue shortlist (1-5) when the cue belongs to it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shortlist_rank: Option<u8>,
}

impl CotCue {
    /// Validates a user-supplied cue: non-empty, no trailing punctuation.
    pub fn new(id: u16, text: impl Into<String>) -> Result<CotCue> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::InvalidInput(format!("cue {id}: empty text")));
        }
        if text
            .trim_end()
            .ends_with(['.', ',', '!', '?', ':', ';'])
        {
            return Err(Error::InvalidInput(format!(
                "cue {id}: trailing punctuation not allowed, templates add layout"
            )));
        }
        Ok(CotCue {
            id,
            text,
            shortlist_rank: None,
        })
    }

    /// Catalog entry 21 is the empty-cue direct baseline kept so that cue
    /// ids line up with the published benchmark rows; it cannot be used to
    /// render a CoT prompt.
    pub fn is_direct_baseline(&self) -> bool {
        self.text.is_empty()
    }
}

/// The 30 benchmark cue rows. Row 21 is the direct (no-cue) baseline.
/// The shortlist entries map ranks #1-#5 to ids 17, 9, 1, 2 and 0.
const CUE_ROWS: [(u16, &str, Option<u8>); 30] = [
    (0, "Let's derive the differential diagnosis step by step", Some(5)),
    (1, "Let's use step by step inductive reasoning, given the medical nature of the question", Some(3)),
    (2, "Let's differentiate using step by step reasoning like a medical expert", Some(4)),
    (3, "Let's think step by step using deductive reasoning", None),
    (4, "Let's differentiate using step by step reasoning", None),
    (5, "Let's think step by step to arrive at one of the options", None),
    (6, "Let's break the problem into multiple steps", None),
    (7, "Let's use step by step deductive reasoning, given the medical nature of the question", None),
    (8, "Let's think step by step like a doctor", None),
    (9, "Let's think step by step like a medical expert", Some(2)),
    (10, "Let's summarize the facts step by step", None),
    (11, "Let's think step by step using inductive reasoning", None),
    (12, "Let's think step by step using deductive reasoning like a medical expert", None),
    (13, "Let's be concise and think step by step", None),
    (14, "Let's differentiate using step by step deductive reasoning like a medical expert", None),
    (15, "Let's argue step by step", None),
    (16, "Let's think step by step like a clinician", None),
    (17, "Let's think step by step", Some(1)),
    (18, "Let's reflect on each answer option step by step", None),
    (19, "Let's reason and differentiate options step by step like a medical expert", None),
    (20, "Let's differentiate using step by step inductive reasoning like a medical expert", None),
    (21, "", None),
    (22, "Let's think step by step given every option equal consideration", None),
    (23, "Let's think step by step like a scientist", None),
    (24, "Let's use step by step inductive reasoning", None),
    (25, "Let's work by elimination step by step", None),
    (26, "Let's use step by step deductive reasoning", None),
    (27, "Let's follow a Bayesian step by step approach", None),
    (28, "Let's reflect on each option from the least likely to the most likely", None),
    (29, "Let's use step by step Bayesian reasoning, given the medical nature of the question", None),
];

/// All 30 catalog rows, ids matching the benchmark row numbers.
pub fn cue_catalog() -> Vec<CotCue> {
    CUE_ROWS
        .iter()
        .map(|&(id, text, shortlist_rank)| CotCue {
            id,
            text: text.to_string(),
            shortlist_rank,
        })
        .collect()
}

/// The five shortlisted cues, ordered by shortlist rank #1-#5.
pub fn cue_shortlist() -> Vec<CotCue> {
    let mut cues: Vec<CotCue> = cue_catalog()
        .into_iter()
        .filter(|c| c.shortlist_rank.is_some())
        .collect();
    cues.sort_by_key(|c| c.shortlist_rank);
    cues
}

pub fn cue_by_id(id: u16) -> Option<CotCue> {
    cue_catalog().into_iter().find(|c| c.id == id)
}

#[derive(Deserialize)]
struct CueFile {
    cues: Vec<CueFileEntry>,
}

#[derive(Deserialize)]
struct CueFileEntry {
    id: u16,
    text: String,
}

/// Loads additional cues from a TOML (`[[cues]]` array) or JSON
/// (`{"cues": [...]}`) file. Entries are validated like hand-built cues
/// and must not reuse a catalog id.
pub fn load_cues(path: impl AsRef<Path>) -> Result<Vec<CotCue>> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: CueFile = if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
    } else {
        serde_json::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
    };
    let builtin: Vec<u16> = CUE_ROWS.iter().map(|r| r.0).collect();
    let mut out = Vec::new();
    for entry in file.cues {
        if builtin.contains(&entry.id) || out.iter().any(|c: &CotCue| c.id == entry.id) {
            return Err(Error::Config(format!(
                "cue id {} already taken; pick an id above 29",
                entry.id
            )));
        }
        out.push(CotCue::new(entry.id, entry.text)?);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptRegime {
    Direct,
    Cot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptStage {
    /// The only stage of a direct prompt.
    Single,
    /// First CoT stage; the completion is the chain of thought.
    Reasoning,
    /// Second CoT stage; the completion is the answer.
    Extractive,
}

/// Everything needed to render one prompt for one question.
#[derive(Clone, Debug)]
pub struct PromptSpec {
    pub regime: PromptRegime,
    pub shots: Option<ShotSet>,
    pub cue: Option<CotCue>,
    pub grounding: Vec<Passage>,
    pub record: QuestionRecord,
}

impl PromptSpec {
    pub fn direct(record: QuestionRecord) -> PromptSpec {
        PromptSpec {
            regime: PromptRegime::Direct,
            shots: None,
            cue: None,
            grounding: Vec::new(),
            record,
        }
    }

    pub fn cot(record: QuestionRecord, cue: CotCue) -> PromptSpec {
        PromptSpec {
            regime: PromptRegime::Cot,
            shots: None,
            cue: Some(cue),
            grounding: Vec::new(),
            record,
        }
    }

    pub fn with_shots(mut self, shots: ShotSet) -> PromptSpec {
        self.shots = Some(shots);
        self
    }

    pub fn with_grounding(mut self, passages: Vec<Passage>) -> PromptSpec {
        self.grounding = passages;
        self
    }

    fn validate(&self) -> Result<()> {
        match self.regime {
            PromptRegime::Cot => match &self.cue {
                None => return Err(Error::PromptSpec("cot regime requires a cue".into())),
                Some(cue) if cue.is_direct_baseline() => {
                    return Err(Error::PromptSpec(format!(
                        "cue {} is the direct baseline and has no text",
                        cue.id
                    )))
                }
                Some(_) => {}
            },
            PromptRegime::Direct => {
                if self.cue.is_some() {
                    return Err(Error::PromptSpec("direct regime takes no cue".into()));
                }
            }
        }
        if let Some(shots) = &self.shots {
            for shot in &shots.shots {
                if shot.labels() != self.record.labels() {
                    return Err(Error::PromptSpec(format!(
                        "shot {} label set differs from the question's",
                        shot.id
                    )));
                }
                if self.regime == PromptRegime::Cot
                    && shot.explanation.as_deref().is_none_or(|e| e.trim().is_empty())
                {
                    return Err(Error::PromptSpec(format!(
                        "shot {} has no explanation for a CoT exemplar",
                        shot.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The exact prompt bytes for one generation stage.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub stage: PromptStage,
    pub label_range: String,
}

/// `"A through D"` for a four-option question, adapted to the option count.
pub fn label_range(option_count: usize) -> String {
    let last = (b'A' + option_count.saturating_sub(1) as u8) as char;
    format!("A through {last}")
}

fn question_block(record: &QuestionRecord) -> String {
    let mut block = format!("Question: {}", record.question);
    for opt in &record.options {
        block.push('\n');
        block.push_str(&format!("{}) {}", opt.label, opt.text));
    }
    block
}

fn answer_line(range: &str) -> String {
    format!("Answer: among {range}, the answer is")
}

fn extraction_stem(range: &str) -> String {
    format!("Therefore, among {range}, the answer is")
}

fn shot_blocks(shot: &QuestionRecord, regime: PromptRegime, cue: Option<&CotCue>, blocks: &mut Vec<String>) {
    if let Some(ctx) = &shot.context {
        blocks.push(format!("Context: {ctx}"));
    }
    blocks.push(question_block(shot));
    let range = label_range(shot.options.len());
    let answer = format!("{}) {}", shot.gold, shot.gold_text());
    match regime {
        PromptRegime::Direct => blocks.push(format!("{} {answer}", answer_line(&range))),
        PromptRegime::Cot => {
            let cue = cue.expect("validated: cot regime has a cue");
            let explanation = shot.explanation.as_deref().expect("validated: shot has explanation");
            blocks.push(format!(
                "Answer: {}\n{}\n{} {answer}",
                cue.text,
                explanation,
                extraction_stem(&range)
            ));
        }
    }
}

/// Renders the single direct stage or the first (reasoning) CoT stage.
pub fn render(spec: &PromptSpec) -> Result<RenderedPrompt> {
    spec.validate()?;
    let mut blocks: Vec<String> = Vec::new();
    if let Some(shots) = &spec.shots {
        for shot in &shots.shots {
            shot_blocks(shot, spec.regime, spec.cue.as_ref(), &mut blocks);
        }
    }
    if !spec.grounding.is_empty() {
        let body: Vec<String> = spec.grounding.iter().map(Passage::render_line).collect();
        blocks.push(format!("Context: {}", body.join("\n")));
    }
    if let Some(ctx) = &spec.record.context {
        blocks.push(format!("Context: {ctx}"));
    }
    blocks.push(question_block(&spec.record));
    let range = label_range(spec.record.options.len());
    let stage = match spec.regime {
        PromptRegime::Direct => {
            blocks.push(answer_line(&range));
            PromptStage::Single
        }
        PromptRegime::Cot => {
            let cue = spec.cue.as_ref().expect("validated");
            blocks.push(format!("Answer: {}", cue.text));
            PromptStage::Reasoning
        }
    };
    Ok(RenderedPrompt {
        text: blocks.join("\n\n"),
        stage,
        label_range: range,
    })
}

/// Appends a sampled chain of thought and the extraction stem to a
/// reasoning-stage prompt. The result always ends exactly with
/// `"the answer is"` so the completion concatenates cleanly.
pub fn render_extractive(stage1: &RenderedPrompt, cot_text: &str) -> Result<RenderedPrompt> {
    if stage1.stage != PromptStage::Reasoning {
        return Err(Error::PromptSpec(format!(
            "extractive prompts build on a reasoning stage, got {:?}",
            stage1.stage
        )));
    }
    Ok(RenderedPrompt {
        text: format!("{}{}\n{}", stage1.text, cot_text, extraction_stem(&stage1.label_range)),
        stage: PromptStage::Extractive,
        label_range: stage1.label_range.clone(),
    })
}
