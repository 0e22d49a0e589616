//! Passage chunking and composite BM25 retrieval.
//!
//! Documents are split into overlapping windows of whitespace-delimited
//! words (default 100 words with a 50-word stride) and indexed over two
//! fields, passage content and article title. A query against the index
//! scores each passage with
//!
//! ```text
//! score(q, a, d) = b1 * BM25(q, content) + b2 * BM25(a, content) + b3 * BM25(a, title)
//! ```
//!
//! where `q` is the question, `a` one answer option, and the default
//! weights are (1, 1, 0.5). The BM25 variant is Okapi with `k1 = 1.2`,
//! `b = 0.75` and the non-negative idf `ln(1 + (N - df + 0.5)/(df + 0.5))`;
//! query tokens are summed per occurrence. Tokenization lowercases and
//! splits on non-alphanumeric characters with no stemming or stopwords.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Label, QuestionRecord};
use crate::error::{Error, Result};

pub const DEFAULT_WINDOW: usize = 100;
pub const DEFAULT_STRIDE: usize = 50;
pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;
const INDEX_FORMAT_VERSION: u32 = 1;

/// A source document before chunking.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorpusDoc {
    pub id: String,
    pub title: String,
    pub text: String,
}

/// Reads a corpus JSONL file: one `{"id", "title", "text"}` object per line.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<CorpusDoc>> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: CorpusDoc = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: lineno + 1,
            detail: e.to_string(),
        })?;
        docs.push(doc);
    }
    Ok(docs)
}

/// One chunk of a document: at most `window` whitespace-delimited words.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub doc_id: String,
    pub title: String,
    /// Chunk position within its document.
    pub ordinal: usize,
    pub text: String,
    /// Half-open word offsets `(start, end)` into the source document.
    pub word_span: (usize, usize),
}

impl Passage {
    /// The context-line form used when passages are inserted into prompts.
    pub fn render_line(&self) -> String {
        format!("{}: {}", self.title, self.text)
    }
}

/// Splits one document into overlapping word windows.
///
/// Chunks start at word offsets `0, stride, 2*stride, ...` and stop with the
/// first chunk that reaches the end of the document, so every word is
/// covered and only the last chunk may be short.
pub fn chunk_document(doc: &CorpusDoc, window: usize, stride: usize) -> Result<Vec<Passage>> {
    if stride == 0 || window < stride {
        return Err(Error::InvalidInput(format!(
            "chunking requires window >= stride >= 1, got window {window}, stride {stride}"
        )));
    }
    let words: Vec<&str> = doc.text.split_whitespace().collect();
    let mut passages = Vec::new();
    if words.is_empty() {
        return Ok(passages);
    }
    let mut start = 0usize;
    loop {
        let end = (start + window).min(words.len());
        passages.push(Passage {
            doc_id: doc.id.clone(),
            title: doc.title.clone(),
            ordinal: passages.len(),
            text: words[start..end].join(" "),
            word_span: (start, end),
        });
        if start + window >= words.len() {
            break;
        }
        start += stride;
    }
    Ok(passages)
}

/// Chunks every document in a corpus with shared window parameters.
pub fn chunk_corpus(docs: &[CorpusDoc], window: usize, stride: usize) -> Result<Vec<Passage>> {
    let mut out = Vec::new();
    for doc in docs {
        out.extend(chunk_document(doc, window, stride)?);
    }
    Ok(out)
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_string())
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    Content,
    Title,
}

/// Per-field postings: term -> [(passage index, term frequency)].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldIndex {
    pub postings: BTreeMap<String, Vec<(u32, u32)>>,
    pub lengths: Vec<u32>,
    pub avg_length: f64,
}

impl FieldIndex {
    fn build(texts: impl Iterator<Item = String>) -> FieldIndex {
        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        let mut lengths = Vec::new();
        for (pid, text) in texts.enumerate() {
            let tokens = tokenize(&text);
            lengths.push(tokens.len() as u32);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_insert(0) += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push((pid as u32, count));
            }
        }
        let avg_length = if lengths.is_empty() {
            0.0
        } else {
            lengths.iter().map(|&l| l as f64).sum::<f64>() / lengths.len() as f64
        };
        FieldIndex {
            postings,
            lengths,
            avg_length,
        }
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, |p| p.len())
    }
}

/// Two-field inverted index with Okapi BM25 parameters baked in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bm25Index {
    pub version: u32,
    pub k1: f64,
    pub b: f64,
    pub content: FieldIndex,
    pub title: FieldIndex,
    pub passages: Vec<Passage>,
}

impl Bm25Index {
    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    fn field(&self, field: Field) -> &FieldIndex {
        match field {
            Field::Content => &self.content,
            Field::Title => &self.title,
        }
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.passages.len() as f64;
        (1.0 + (n - df as f64 + 0.5) / (df as f64 + 0.5)).ln()
    }

    /// Okapi BM25 of `query` against one field of one passage. Tokens
    /// absent from the field contribute zero.
    pub fn bm25(&self, query: &str, field: Field, passage: usize) -> f64 {
        let fi = self.field(field);
        let mut score = 0.0;
        for token in tokenize(query) {
            let Some(postings) = fi.postings.get(&token) else {
                continue;
            };
            let Ok(slot) = postings.binary_search_by_key(&(passage as u32), |&(p, _)| p) else {
                continue;
            };
            let tf = postings[slot].1 as f64;
            let len = fi.lengths[passage] as f64;
            let denom = tf + self.k1 * (1.0 - self.b + self.b * len / fi.avg_length);
            score += self.idf(postings.len()) * tf * (self.k1 + 1.0) / denom;
        }
        score
    }

    /// BM25 of `query` against one field for every passage at once.
    fn bm25_all(&self, query: &str, field: Field) -> Vec<f64> {
        let fi = self.field(field);
        let mut scores = vec![0.0; self.passages.len()];
        for token in tokenize(query) {
            let Some(postings) = fi.postings.get(&token) else {
                continue;
            };
            let idf = self.idf(postings.len());
            for &(pid, tf) in postings {
                let tf = tf as f64;
                let len = fi.lengths[pid as usize] as f64;
                let denom = tf + self.k1 * (1.0 - self.b + self.b * len / fi.avg_length);
                scores[pid as usize] += idf * tf * (self.k1 + 1.0) / denom;
            }
        }
        scores
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(self)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Bm25Index> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let index: Bm25Index = serde_json::from_str(&raw)?;
        if index.version != INDEX_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "index format version {} unsupported (expected {})",
                index.version, INDEX_FORMAT_VERSION
            )));
        }
        Ok(index)
    }
}

/// Builds the two-field index; rebuilding from the same passages is
/// bit-identical.
pub fn build_index(passages: Vec<Passage>, k1: f64, b: f64) -> Result<Bm25Index> {
    if passages.is_empty() {
        return Err(Error::InvalidInput("cannot index an empty passage list".into()));
    }
    let content = FieldIndex::build(passages.iter().map(|p| p.text.clone()));
    let title = FieldIndex::build(passages.iter().map(|p| p.title.clone()));
    Ok(Bm25Index {
        version: INDEX_FORMAT_VERSION,
        k1,
        b,
        content,
        title,
        passages,
    })
}

/// Weights of the three composite-score components.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalWeights {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
}

impl Default for RetrievalWeights {
    fn default() -> Self {
        RetrievalWeights {
            beta1: 1.0,
            beta2: 1.0,
            beta3: 0.5,
        }
    }
}

/// One scored passage with its component scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub passage: usize,
    pub score: f64,
    /// `(BM25(q, content), BM25(a, content), BM25(a, title))`.
    pub components: (f64, f64, f64),
}

/// The composite score of one passage for a (question, option) pair.
pub fn composite_score(
    question: &str,
    option: &str,
    passage: usize,
    index: &Bm25Index,
    weights: &RetrievalWeights,
) -> RetrievalHit {
    let c1 = index.bm25(question, Field::Content, passage);
    let c2 = index.bm25(option, Field::Content, passage);
    let c3 = index.bm25(option, Field::Title, passage);
    RetrievalHit {
        passage,
        score: weights.beta1 * c1 + weights.beta2 * c2 + weights.beta3 * c3,
        components: (c1, c2, c3),
    }
}

/// Ranks every passage for `(record.question, option text)` and returns the
/// best `top_k`, ordered by score descending with passage-id ascending as
/// the tie-break.
pub fn retrieve(
    record: &QuestionRecord,
    option_label: Label,
    index: &Bm25Index,
    weights: &RetrievalWeights,
    top_k: usize,
) -> Result<Vec<RetrievalHit>> {
    let option_text = record.option_text(option_label).ok_or_else(|| {
        Error::InvalidInput(format!(
            "option {option_label} not in record {}",
            record.id
        ))
    })?;
    let c1 = index.bm25_all(&record.question, Field::Content);
    let c2 = index.bm25_all(option_text, Field::Content);
    let c3 = index.bm25_all(option_text, Field::Title);
    let mut hits: Vec<RetrievalHit> = (0..index.len())
        .map(|pid| RetrievalHit {
            passage: pid,
            score: weights.beta1 * c1[pid] + weights.beta2 * c2[pid] + weights.beta3 * c3[pid],
            components: (c1[pid], c2[pid], c3[pid]),
        })
        .collect();
    hits.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("bm25 scores are finite")
            .then(a.passage.cmp(&b.passage))
    });
    hits.truncate(top_k);
    Ok(hits)
}

/// Merges per-option hit lists round-robin by rank, de-duplicated by
/// passage id and truncated to `budget` passage ids.
pub fn assemble_passage_ids(per_option: &[Vec<RetrievalHit>], budget: usize) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::new();
    let deepest = per_option.iter().map(|h| h.len()).max().unwrap_or(0);
    'outer: for rank in 0..deepest {
        for hits in per_option {
            if let Some(hit) = hits.get(rank) {
                if !chosen.contains(&hit.passage) {
                    chosen.push(hit.passage);
                    if chosen.len() == budget {
                        break 'outer;
                    }
                }
            }
        }
    }
    chosen
}

/// The passages behind [`assemble_passage_ids`], in assembly order.
pub fn assemble_passages<'a>(
    per_option: &[Vec<RetrievalHit>],
    index: &'a Bm25Index,
    budget: usize,
) -> Vec<&'a Passage> {
    assemble_passage_ids(per_option, budget)
        .into_iter()
        .map(|pid| &index.passages[pid])
        .collect()
}

/// The assembled context text: one `"<title>: <text>"` line per passage.
pub fn assemble_context(per_option: &[Vec<RetrievalHit>], index: &Bm25Index, budget: usize) -> String {
    assemble_passages(per_option, index, budget)
        .iter()
        .map(|p| p.render_line())
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{AnswerOption, DatasetKind, Split};

    fn doc(id: &str, title: &str, words: usize) -> CorpusDoc {
        CorpusDoc {
            id: id.into(),
            title: title.into(),
            text: (0..words).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" "),
        }
    }

    #[test]
    fn single_window_for_exact_fit() {
        let passages = chunk_document(&doc("d", "t", 100), 100, 50).unwrap();
        assert_eq!(passages.len(), 1);
        assert_eq!(passages[0].word_span, (0, 100));
    }

    #[test]
    fn strided_windows_cover_every_word() {
        let passages = chunk_document(&doc("d", "t", 180), 100, 50).unwrap();
        let spans: Vec<(usize, usize)> = passages.iter().map(|p| p.word_span).collect();
        assert_eq!(spans, vec![(0, 100), (50, 150), (100, 180)]);
        let mut covered = [false; 180];
        for (s, e) in spans {
            covered[s..e].iter_mut().for_each(|c| *c = true);
        }
        assert!(covered.iter().all(|&c| c));
    }

    #[test]
    fn empty_document_has_no_passages() {
        assert!(chunk_document(&doc("d", "t", 0), 100, 50).unwrap().is_empty());
    }

    #[test]
    fn chunking_rejects_bad_strides() {
        assert!(chunk_document(&doc("d", "t", 10), 5, 0).is_err());
        assert!(chunk_document(&doc("d", "t", 10), 5, 6).is_err());
    }

    fn passage(id: &str, title: &str, text: &str, ordinal: usize) -> Passage {
        Passage {
            doc_id: id.into(),
            title: title.into(),
            ordinal,
            text: text.into(),
            word_span: (0, text.split_whitespace().count()),
        }
    }

    #[test]
    fn term_and_document_frequencies() {
        let index = build_index(vec![passage("d", "t", "x y x", 0)], DEFAULT_K1, DEFAULT_B).unwrap();
        assert_eq!(index.content.postings["x"], vec![(0, 2)]);
        assert_eq!(index.content.postings["y"], vec![(0, 1)]);
        assert_eq!(index.content.document_frequency("x"), 1);

        let two = build_index(
            vec![passage("d", "t", "shared alpha", 0), passage("d", "t", "shared beta", 1)],
            DEFAULT_K1,
            DEFAULT_B,
        )
        .unwrap();
        assert_eq!(two.content.document_frequency("shared"), 2);
    }

    #[test]
    fn postings_match_an_independent_dictionary_pass() {
        use std::collections::HashMap;
        let passages: Vec<Passage> = (0..50)
            .map(|i| {
                passage(
                    "d",
                    &format!("title{}", i % 4),
                    &format!("alpha term{} beta term{} alpha", i % 7, i % 3),
                    i,
                )
            })
            .collect();
        let index = build_index(passages.clone(), DEFAULT_K1, DEFAULT_B).unwrap();

        // Second, independent pass: plain dictionaries over the raw texts.
        let mut tf: HashMap<(String, usize), u32> = HashMap::new();
        let mut df: HashMap<String, std::collections::BTreeSet<usize>> = HashMap::new();
        for (pid, p) in passages.iter().enumerate() {
            for token in tokenize(&p.text) {
                *tf.entry((token.clone(), pid)).or_insert(0) += 1;
                df.entry(token).or_default().insert(pid);
            }
        }
        for (term, postings) in &index.content.postings {
            assert_eq!(postings.len(), df[term].len(), "df({term})");
            for &(pid, count) in postings {
                assert_eq!(count, tf[&(term.clone(), pid as usize)], "tf({term}, {pid})");
            }
        }
        assert_eq!(index.content.postings.len(), df.len());
        let expected_avg = passages
            .iter()
            .map(|p| tokenize(&p.text).len() as f64)
            .sum::<f64>()
            / passages.len() as f64;
        assert_eq!(index.content.avg_length, expected_avg);
    }

    #[test]
    fn rebuild_is_bit_identical() {
        let passages: Vec<Passage> = (0..50)
            .map(|i| passage("d", &format!("title {i}"), &format!("term{} filler common", i % 7), i))
            .collect();
        let a = build_index(passages.clone(), DEFAULT_K1, DEFAULT_B).unwrap();
        let b = build_index(passages, DEFAULT_K1, DEFAULT_B).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    fn four_option_record(question: &str, options: [&str; 4]) -> QuestionRecord {
        QuestionRecord {
            id: "q".into(),
            dataset: DatasetKind::UsmleStyle,
            split: Split::Test,
            question: question.into(),
            options: options
                .iter()
                .enumerate()
                .map(|(i, t)| AnswerOption {
                    label: Label::from_index(i).unwrap(),
                    text: t.to_string(),
                })
                .collect(),
            gold: Label::A,
            context: None,
            explanation: None,
        }
    }

    #[test]
    fn no_shared_terms_scores_zero() {
        let index = build_index(vec![passage("d", "unrelated", "alpha beta gamma", 0)], DEFAULT_K1, DEFAULT_B)
            .unwrap();
        let hit = composite_score("different words", "other", 0, &index, &RetrievalWeights::default());
        assert_eq!(hit.score, 0.0);
        assert_eq!(hit.components, (0.0, 0.0, 0.0));
    }

    #[test]
    fn weight_collapse_reduces_to_plain_bm25() {
        let index = build_index(
            vec![
                passage("d", "anemia", "iron deficiency causes microcytic anemia", 0),
                passage("d", "other", "unrelated content here", 1),
            ],
            DEFAULT_K1,
            DEFAULT_B,
        )
        .unwrap();
        let weights = RetrievalWeights { beta1: 1.0, beta2: 0.0, beta3: 0.0 };
        let hit = composite_score("iron deficiency", "anemia", 0, &index, &weights);
        assert_eq!(hit.score, index.bm25("iron deficiency", Field::Content, 0));
    }

    #[test]
    fn option_bearing_passage_wins_under_large_beta2() {
        let passages = vec![
            passage("d1", "page one", "the question words appear here today", 0),
            passage("d2", "page two", "completely unrelated text mentioning methotrexate therapy", 0),
            passage("d3", "page three", "more question words appear in this one", 0),
        ];
        let index = build_index(passages, DEFAULT_K1, DEFAULT_B).unwrap();
        let record = four_option_record("question words appear", ["methotrexate", "x", "y", "z"]);
        let weights = RetrievalWeights { beta1: 1.0, beta2: 50.0, beta3: 0.5 };
        let hits = retrieve(&record, Label::A, &index, &weights, 3).unwrap();
        assert_eq!(hits[0].passage, 1);
    }

    #[test]
    fn top_k_zero_returns_nothing() {
        let index = build_index(vec![passage("d", "t", "a b c", 0)], DEFAULT_K1, DEFAULT_B).unwrap();
        let record = four_option_record("a", ["b", "c", "d", "e"]);
        assert!(retrieve(&record, Label::A, &index, &RetrievalWeights::default(), 0)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn ranking_is_total_and_idempotent() {
        let passages: Vec<Passage> = (0..30)
            .map(|i| passage("d", &format!("t{i}"), &format!("alpha beta term{} gamma", i % 5), i))
            .collect();
        let index = build_index(passages, DEFAULT_K1, DEFAULT_B).unwrap();
        let record = four_option_record("alpha gamma", ["term0", "term1", "term2", "term3"]);
        let hits = retrieve(&record, Label::B, &index, &RetrievalWeights::default(), 30).unwrap();
        for pair in hits.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            assert!(a.score > b.score || (a.score == b.score && a.passage < b.passage));
        }
        let again = retrieve(&record, Label::B, &index, &RetrievalWeights::default(), 30).unwrap();
        assert_eq!(hits, again);
    }

    #[test]
    fn round_robin_assembly_dedupes_and_respects_budget() {
        let passages: Vec<Passage> = (0..6).map(|i| passage("d", &format!("t{i}"), "body", i)).collect();
        let index = build_index(passages, DEFAULT_K1, DEFAULT_B).unwrap();
        let hit = |p: usize, s: f64| RetrievalHit { passage: p, score: s, components: (s, 0.0, 0.0) };

        // Four options with disjoint top hits: one passage each, label order.
        let per_option = vec![
            vec![hit(3, 9.0)],
            vec![hit(1, 8.0)],
            vec![hit(4, 7.0)],
            vec![hit(0, 6.0)],
        ];
        let chosen: Vec<usize> = assemble_passages(&per_option, &index, 4).iter().map(|p| p.ordinal).collect();
        assert_eq!(chosen, vec![3, 1, 4, 0]);

        // Two options sharing a top hit keep it once.
        let shared = vec![vec![hit(2, 9.0), hit(5, 1.0)], vec![hit(2, 9.0), hit(0, 1.0)]];
        let chosen: Vec<usize> = assemble_passages(&shared, &index, 4).iter().map(|p| p.ordinal).collect();
        assert_eq!(chosen, vec![2, 5, 0]);

        // Single option, budget one.
        let single = vec![vec![hit(5, 2.0), hit(1, 1.0)]];
        let chosen: Vec<usize> = assemble_passages(&single, &index, 1).iter().map(|p| p.ordinal).collect();
        assert_eq!(chosen, vec![5]);
    }

    #[test]
    fn context_lines_are_title_colon_text() {
        let index = build_index(vec![passage("d", "Anemia", "iron studies", 0)], DEFAULT_K1, DEFAULT_B).unwrap();
        let hits = vec![vec![RetrievalHit { passage: 0, score: 1.0, components: (1.0, 0.0, 0.0) }]];
        assert_eq!(assemble_context(&hits, &index, 2), "Anemia: iron studies");
    }

    #[test]
    fn index_roundtrips_through_sidecar_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.json");
        let index = build_index(vec![passage("d", "t", "a b a", 0)], DEFAULT_K1, DEFAULT_B).unwrap();
        index.save(&path).unwrap();
        let loaded = Bm25Index::load(&path).unwrap();
        assert_eq!(loaded, index);

        // Version mismatch is rejected.
        let mut bad = index.clone();
        bad.version = 99;
        bad.save(&path).unwrap();
        assert!(Bm25Index::load(&path).is_err());
    }
}
