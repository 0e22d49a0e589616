//! Shared fixture builders for the integration suites. The checked-in
//! fixtures under `testdata/` are produced from these builders by
//! `regen_fixtures.rs` (run with `--ignored`), so tests and fixtures cannot
//! drift apart silently.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use medcot::dataset::{AnswerOption, DatasetKind, Label, QuestionRecord, ShotStrategy, Split};
use medcot::harness::{DatasetConfig, ExperimentConfig, ShotConfig};
use medcot::llm::{ProviderConfig, SamplingParams};
use medcot::prompting::{cue_by_id, PromptRegime, PromptSpec};
use medcot::retrieval::{chunk_document, CorpusDoc, Passage};

pub fn testdata_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("testdata")
}

pub fn options(texts: &[&str]) -> Vec<AnswerOption> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| AnswerOption {
            label: Label::from_index(i).unwrap(),
            text: t.to_string(),
        })
        .collect()
}

// ─── Golden prompt inputs ────────────────────────────────────────────────────

pub fn golden_record() -> QuestionRecord {
    QuestionRecord {
        id: "golden-q1".into(),
        dataset: DatasetKind::UsmleStyle,
        split: Split::Test,
        question: "A 58-year-old presents with crushing substernal chest pain radiating to the left arm. Which initial test is most appropriate?".into(),
        options: options(&["electrocardiogram", "chest radiograph", "serum troponin", "echocardiogram"]),
        gold: Label::A,
        context: None,
        explanation: None,
    }
}

pub fn golden_pubmedqa_record() -> QuestionRecord {
    QuestionRecord {
        id: "golden-p1".into(),
        dataset: DatasetKind::PubmedqaStyle,
        split: Split::Test,
        question: "Does the discharge protocol reduce thirty-day readmissions?".into(),
        options: options(&["yes", "no", "maybe"]),
        gold: Label::A,
        context: Some("In a randomized cohort of 200 patients, thirty-day readmission rates fell from 18% to 11% after the protocol was introduced.".into()),
        explanation: None,
    }
}

pub fn golden_shots() -> Vec<QuestionRecord> {
    let specs: [(&str, &str, [&str; 4], char, &str); 5] = [
        (
            "shot-1",
            "A patient on long-term corticosteroids develops a vertebral compression fracture. Which underlying process is most likely?",
            ["osteoporosis", "osteomalacia", "metastatic disease", "hyperparathyroidism"],
            'A',
            "Chronic glucocorticoid exposure suppresses osteoblasts and accelerates bone loss, so a fragility fracture points to osteoporosis.",
        ),
        (
            "shot-2",
            "A toddler with a barking cough and inspiratory stridor improves with cool mist. Which is the most likely diagnosis?",
            ["epiglottitis", "croup", "foreign body aspiration", "bacterial tracheitis"],
            'B',
            "A barking cough with stridor that eases on cool mist is the classic picture of viral laryngotracheobronchitis.",
        ),
        (
            "shot-3",
            "A patient with polyuria and polydipsia has urine that fails to concentrate after water deprivation but responds to desmopressin. Which is the most likely cause?",
            ["primary polydipsia", "nephrogenic diabetes insipidus", "central diabetes insipidus", "osmotic diuresis"],
            'C',
            "A response to exogenous desmopressin after failed water deprivation localizes the defect to vasopressin release.",
        ),
        (
            "shot-4",
            "A tall young adult develops sudden pleuritic chest pain and dyspnea with hyperresonance on the affected side. Which is the most likely diagnosis?",
            ["pulmonary embolism", "pericarditis", "pneumonia", "spontaneous pneumothorax"],
            'D',
            "Sudden unilateral pleuritic pain with hyperresonance and reduced breath sounds in a tall thin patient indicates a ruptured apical bleb.",
        ),
        (
            "shot-5",
            "A patient with fatigue shows a macrocytic anemia and hypersegmented neutrophils. Which deficiency is most likely?",
            ["iron", "cobalamin", "folate before cobalamin is excluded", "pyridoxine"],
            'B',
            "Macrocytosis with hypersegmented neutrophils indicates impaired DNA synthesis; neurologic risk makes cobalamin the deficiency to establish first.",
        ),
    ];
    specs
        .iter()
        .map(|(id, q, opts, gold, expl)| QuestionRecord {
            id: id.to_string(),
            dataset: DatasetKind::UsmleStyle,
            split: Split::Train,
            question: q.to_string(),
            options: options(opts),
            gold: Label::from_char(*gold).unwrap(),
            context: None,
            explanation: Some(expl.to_string()),
        })
        .collect()
}

pub fn golden_passages() -> Vec<Passage> {
    let doc = CorpusDoc {
        id: "doc-mi".into(),
        title: "Myocardial infarction".into(),
        text: "Acute myocardial infarction presents with substernal chest pain that may radiate to the left arm or jaw. \
               The electrocardiogram is the first test obtained because ST segment changes guide immediate reperfusion decisions. \
               Cardiac troponin rises within hours and confirms myocardial injury but should not delay the initial tracing."
            .into(),
    };
    chunk_document(&doc, 30, 15).unwrap()
}

pub const GOLDEN_COT_TEXT: &str = " The pain pattern raises concern for an acute coronary event, and the first decision point is whether there is ST elevation. That information comes from the tracing, not from imaging or serology.";

pub fn golden_specs() -> Vec<(&'static str, PromptSpec)> {
    let cue = cue_by_id(17).unwrap();
    let shots = medcot::dataset::ShotSet {
        shots: golden_shots(),
        strategy: ShotStrategy::FirstN,
        seed: 0,
    };
    vec![
        ("direct", PromptSpec::direct(golden_record())),
        ("pubmedqa_direct", PromptSpec::direct(golden_pubmedqa_record())),
        ("cot_stage1", PromptSpec::cot(golden_record(), cue.clone())),
        (
            "fiveshot_cot",
            PromptSpec::cot(golden_record(), cue).with_shots(shots),
        ),
        (
            "grounded_direct",
            PromptSpec::direct(golden_record()).with_grounding(golden_passages()[..2].to_vec()),
        ),
    ]
}

// ─── Replay fixture (20 questions) ───────────────────────────────────────────

const TOPICS: [(&str, [&str; 4], char); 20] = [
    ("Which electrolyte disturbance most often follows prolonged vomiting?",
     ["hypokalemic alkalosis", "hyperkalemic acidosis", "hypernatremia", "hypermagnesemia"], 'A'),
    ("Which vessel is most commonly involved in an epidural hematoma?",
     ["middle cerebral artery", "middle meningeal artery", "bridging veins", "basilar artery"], 'B'),
    ("Which finding is most specific for nephrotic syndrome?",
     ["hematuria", "dysuria", "heavy proteinuria", "flank pain"], 'C'),
    ("Which murmur is expected with aortic stenosis?",
     ["holosystolic at the apex", "early diastolic at the base", "mid-diastolic rumble", "crescendo-decrescendo systolic"], 'D'),
    ("Which cell type is depleted first in untreated severe folate deficiency?",
     ["erythrocyte precursors", "platelets", "neutrophils", "lymphocytes"], 'A'),
    ("Which organism most often causes lobar pneumonia in adults?",
     ["mycoplasma species", "pneumococcus", "legionella species", "klebsiella species"], 'B'),
    ("Which feature distinguishes delirium from dementia?",
     ["memory loss", "language difficulty", "fluctuating attention", "personality change"], 'C'),
    ("Which hormone is deficient in primary adrenal insufficiency?",
     ["thyroxine", "insulin", "growth hormone", "cortisol"], 'D'),
    ("Which sign suggests peritoneal irritation?",
     ["rebound tenderness", "shifting dullness", "fluid wave", "borborygmi"], 'A'),
    ("Which nerve is at risk with a midshaft humeral fracture?",
     ["ulnar nerve", "radial nerve", "median nerve", "axillary nerve"], 'B'),
    ("Which marker is most useful for monitoring hepatocellular carcinoma?",
     ["carcinoembryonic antigen", "beta human chorionic gonadotropin", "alpha fetoprotein", "prostate specific antigen"], 'C'),
    ("Which valve is most often affected in rheumatic heart disease?",
     ["tricuspid valve", "pulmonic valve", "aortic valve", "mitral valve"], 'D'),
    ("Which vitamin deficiency causes night blindness?",
     ["vitamin a", "vitamin c", "vitamin d", "vitamin k"], 'A'),
    ("Which joint pattern is typical of rheumatoid arthritis?",
     ["distal interphalangeal involvement", "symmetric small joint involvement", "first metatarsophalangeal attack", "large joint monoarthritis"], 'B'),
    ("Which acid-base state accompanies an acute panic attack?",
     ["metabolic acidosis", "metabolic alkalosis", "respiratory alkalosis", "respiratory acidosis"], 'C'),
    ("Which tumor arises from chromaffin cells?",
     ["insulinoma", "carcinoid", "prolactinoma", "pheochromocytoma"], 'D'),
    ("Which antibody is most specific for systemic lupus erythematosus?",
     ["anti double stranded dna", "antinuclear antibody", "rheumatoid factor", "anticentromere antibody"], 'A'),
    ("Which agent is first line for status epilepticus?",
     ["phenytoin loading", "intravenous benzodiazepine", "valproate infusion", "barbiturate coma"], 'B'),
    ("Which lesion produces a homonymous hemianopia?",
     ["optic nerve transection", "chiasmal compression", "optic tract lesion", "ciliary ganglion injury"], 'C'),
    ("Which electrolyte must be corrected before refractory hypokalemia responds?",
     ["calcium", "phosphate", "sodium", "magnesium"], 'D'),
];

const REPLAY_SHOTS: [(&str, [&str; 4], char, &str); 2] = [
    ("Which intervention most reduces mortality in sepsis?",
     ["early antibiotics", "antipyretics", "colloid boluses", "vasopressin first"], 'A',
     "Time to effective antimicrobial therapy is the strongest modifiable mortality factor in sepsis."),
    ("Which study confirms a suspected pulmonary embolism in a stable patient?",
     ["chest radiograph", "computed tomography angiography", "peak flow measurement", "sputum culture"], 'B',
     "Computed tomography angiography directly visualizes the clot and is the confirmatory study of choice when renal function allows."),
];

pub fn replay_dataset() -> Vec<QuestionRecord> {
    let mut records: Vec<QuestionRecord> = REPLAY_SHOTS
        .iter()
        .enumerate()
        .map(|(i, (q, opts, gold, expl))| QuestionRecord {
            id: format!("train-{:02}", i + 1),
            dataset: DatasetKind::UsmleStyle,
            split: Split::Train,
            question: q.to_string(),
            options: options(opts),
            gold: Label::from_char(*gold).unwrap(),
            context: None,
            explanation: Some(expl.to_string()),
        })
        .collect();
    records.extend(TOPICS.iter().enumerate().map(|(i, (q, opts, gold))| QuestionRecord {
        id: format!("q-{:02}", i + 1),
        dataset: DatasetKind::UsmleStyle,
        split: Split::Test,
        question: q.to_string(),
        options: options(opts),
        gold: Label::from_char(*gold).unwrap(),
        context: None,
        explanation: None,
    }));
    records
}

pub fn replay_dir() -> PathBuf {
    testdata_dir().join("replay_20q")
}

/// The configuration recorded into (and replayed from) the 20-question
/// fixture. `provider_kind` switches between recording and replaying.
pub fn replay_config(dataset_path: &Path, output_dir: &Path, replay: bool) -> ExperimentConfig {
    let mut provider = ProviderConfig::synthetic(1234);
    if replay {
        provider = ProviderConfig::replay_of(&provider);
    }
    ExperimentConfig {
        dataset: DatasetConfig {
            path: dataset_path.to_path_buf(),
            kind: DatasetKind::UsmleStyle,
            split: Split::Test,
            subsample: None,
        },
        regime: PromptRegime::Cot,
        cue_id: Some(17),
        cue_file: None,
        shots: Some(ShotConfig {
            n: 2,
            strategy: ShotStrategy::FirstN,
            seed: 0,
        }),
        grounding: None,
        provider,
        sampling: SamplingParams::reasoning(0.7, 4),
        permutation_seed: None,
        output_dir: output_dir.to_path_buf(),
        calibration_bins: 10,
    }
}

// ─── Annotation fixture ──────────────────────────────────────────────────────

/// Raw pattern-match counts of the 50-CoT expert annotation table:
/// 16 correct / 34 incorrect, per-pattern matches (A..F) in each group, and
/// 16 inconclusive CoTs among the incorrect ones.
pub const ANNOTATION_CORRECT_MATCHES: [usize; 6] = [15, 14, 16, 2, 4, 1];
pub const ANNOTATION_INCORRECT_MATCHES: [usize; 6] = [20, 22, 29, 29, 25, 17];
pub const ANNOTATION_INCONCLUSIVE_INCORRECT: usize = 16;

pub fn annotation_fixture() -> Vec<medcot::metrics::AnnotationRecord> {
    use medcot::metrics::{AnnotationRecord, Pattern};
    let group = |size: usize, correct: bool, matches: [usize; 6], inconclusive: usize| {
        (0..size).map(move |i| AnnotationRecord {
            id: format!("{}-{i:02}", if correct { "correct" } else { "incorrect" }),
            correct,
            patterns: Pattern::ALL
                .iter()
                .enumerate()
                .filter(|(p, _)| i < matches[*p])
                .map(|(_, &pat)| pat)
                .collect(),
            inconclusive: !correct && i < inconclusive,
        })
    };
    let mut out: Vec<AnnotationRecord> = group(16, true, ANNOTATION_CORRECT_MATCHES, 0).collect();
    out.extend(group(34, false, ANNOTATION_INCORRECT_MATCHES, ANNOTATION_INCONCLUSIVE_INCORRECT));
    out
}

// ─── Sampled-label fixture for the subsample curve ───────────────────────────

/// Renders 10 direct prompts and samples k=100 completions each from the
/// seeded synthetic provider, returning (gold, extracted labels) per
/// question. Deterministic; the checked-in snapshot guards against drift.
pub fn sampled_labels_fixture(
    cache_path: &Path,
) -> Vec<(Label, Vec<Option<Label>>)> {
    use medcot::extraction::extract_answer;
    use medcot::llm::LlmClient;
    use medcot::prompting::render;

    let client = LlmClient::from_config(&ProviderConfig::synthetic(77), cache_path).unwrap();
    let params = SamplingParams {
        temperature: 0.5,
        k: 100,
        max_tokens: 64,
        stop: vec![],
    };
    replay_dataset()
        .into_iter()
        .filter(|r| r.split == Split::Test)
        .take(10)
        .map(|record| {
            let prompt = render(&PromptSpec::direct(record.clone())).unwrap();
            let labels = client
                .complete(&prompt.text, &params)
                .unwrap()
                .iter()
                .map(|c| extract_answer(&c.text, &record.options).label)
                .collect();
            (record.gold, labels)
        })
        .collect()
}

/// From-scratch Okapi BM25 written directly from the formula over
/// pre-tokenized fields, sharing no code with the index implementation.
/// Both the acceptance and property suites score against it.
pub fn oracle_bm25(passages: &[Vec<String>], query: &str, pid: usize, k1: f64, b: f64) -> f64 {
    let n = passages.len() as f64;
    let avg: f64 = passages.iter().map(|p| p.len() as f64).sum::<f64>() / n;
    let mut score = 0.0;
    for term in medcot::retrieval::tokenize(query) {
        let df = passages.iter().filter(|p| p.contains(&term)).count() as f64;
        if df == 0.0 {
            continue;
        }
        let tf = passages[pid].iter().filter(|t| **t == term).count() as f64;
        if tf == 0.0 {
            continue;
        }
        let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
        let len = passages[pid].len() as f64;
        score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / avg));
    }
    score
}

pub fn labels_to_strings(labels: &[(Label, Vec<Option<Label>>)]) -> serde_json::Value {
    serde_json::json!(labels
        .iter()
        .map(|(gold, ls)| {
            serde_json::json!({
                "gold": gold.to_string(),
                "labels": ls.iter().map(|l| l.map(|l| l.to_string())).collect::<Vec<_>>(),
            })
        })
        .collect::<Vec<_>>())
}
