//! Completion providers and the content-addressed completion cache.
//!
//! Three interchangeable providers sit behind [`LlmClient`]:
//!
//! - `http`: an OpenAI-compatible text-completions endpoint (POST JSON with
//!   `model`, `prompt`, `temperature`, `n`, `max_tokens`, `stop`), bearer
//!   token read from an environment variable, bounded retries with
//!   exponential backoff;
//! - `synthetic`: a seeded deterministic generator producing
//!   option-mentioning texts, for tests and offline development;
//! - `replay`: cache lookups only; a miss is an error, never a silent
//!   fallback to the network.
//!
//! Every fetched completion is appended to a JSONL cache file keyed by a
//! hash of (prompt text, sampling params, provider model, sample index)
//! before `complete` returns, so any run can later be replayed exactly.
//! Replay must be configured with the same `model` string as the recording
//! provider, since the model participates in the key.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::Label;
use crate::error::{Error, Result};

/// Sampling controls shared by every provider. `temperature == 0` means
/// greedy decoding: all k samples of a prompt are identical.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub k: usize,
    pub max_tokens: usize,
    pub stop: Vec<String>,
}

impl SamplingParams {
    /// Stage-one CoT sampling: stop before the model invents a next
    /// question, generous token budget for the reasoning text.
    pub fn reasoning(temperature: f64, k: usize) -> SamplingParams {
        SamplingParams {
            temperature,
            k,
            max_tokens: 512,
            stop: vec!["\nQuestion:".to_string()],
        }
    }

    /// Stage-two extraction: greedy, short, stops at the line end.
    pub fn extractive() -> SamplingParams {
        SamplingParams {
            temperature: 0.0,
            k: 1,
            max_tokens: 32,
            stop: vec!["\n".to_string()],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("sampling k must be at least 1".into()));
        }
        if self.temperature < 0.0 {
            return Err(Error::Config("temperature must be non-negative".into()));
        }
        if self.max_tokens == 0 {
            return Err(Error::Config("max_tokens must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

/// One sampled completion with provenance. `text` excludes the prompt.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub index: usize,
    pub finish: FinishReason,
    pub provider: String,
    pub cache_key: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Content hash identifying one sample: prompt, params, provider model and
/// sample index all participate, so equal keys imply equal provenance.
pub fn cache_key(prompt: &str, params: &SamplingParams, provider: &str, index: usize) -> String {
    let params_json = serde_json::to_string(params).expect("params serialize");
    let mut h = Sha256::new();
    h.update(prompt.as_bytes());
    h.update([0x1f]);
    h.update(params_json.as_bytes());
    h.update([0x1f]);
    h.update(provider.as_bytes());
    h.update([0x1f]);
    h.update(index.to_le_bytes());
    hex::encode(h.finalize())
}

/// One cache line: `{"key", "prompt_sha", "params", "index", "text", "finish"}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub key: String,
    pub prompt_sha: String,
    pub params: SamplingParams,
    pub index: usize,
    pub text: String,
    pub finish: FinishReason,
}

struct CacheInner {
    map: HashMap<String, CacheRecord>,
    file: Option<fs::File>,
}

/// Append-only JSONL completion store with an in-memory index. Writes are
/// serialized internally; reads are cheap map lookups.
pub struct CompletionCache {
    path: PathBuf,
    inner: Mutex<CacheInner>,
}

impl CompletionCache {
    /// Opens (or prepares to create) the cache file, loading any existing
    /// records.
    pub fn open(path: impl Into<PathBuf>) -> Result<CompletionCache> {
        let path = path.into();
        let mut map = HashMap::new();
        if path.exists() {
            let raw = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            for (lineno, line) in raw.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let record: CacheRecord =
                    serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
                        path: path.clone(),
                        line: lineno + 1,
                        detail: e.to_string(),
                    })?;
                map.insert(record.key.clone(), record);
            }
        }
        Ok(CompletionCache {
            path,
            inner: Mutex::new(CacheInner { map, file: None }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<CacheRecord> {
        self.inner.lock().unwrap().map.get(key).cloned()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.inner.lock().unwrap().map.contains_key(key)
    }

    /// Inserts a record, appending it to the backing file. Re-inserting an
    /// existing key is a no-op.
    pub fn put(&self, record: CacheRecord) -> Result<()> {
        let mut inner = self.inner.lock().unwrap();
        if inner.map.contains_key(&record.key) {
            return Ok(());
        }
        if inner.file.is_none() {
            if let Some(parent) = self.path.parent() {
                if !parent.as_os_str().is_empty() {
                    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                }
            }
            let file = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&self.path)
                .map_err(|e| Error::io(&self.path, e))?;
            inner.file = Some(file);
        }
        let line = serde_json::to_string(&record)?;
        let file = inner.file.as_mut().expect("just opened");
        writeln!(file, "{line}").map_err(|e| Error::io(&self.path, e))?;
        file.flush().map_err(|e| Error::io(&self.path, e))?;
        inner.map.insert(record.key.clone(), record);
        Ok(())
    }
}

/// A raw provider sample before caching.
#[derive(Clone, Debug)]
pub struct RawCompletion {
    pub text: String,
    pub finish: FinishReason,
}

/// The fetch side of a provider. `indices` are the sample ordinals being
/// requested (sparse on resume); deterministic backends must key their
/// output on them.
pub trait Backend: Send + Sync {
    fn sample(
        &self,
        prompt: &str,
        params: &SamplingParams,
        indices: &[usize],
    ) -> Result<Vec<RawCompletion>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Http,
    Replay,
    Synthetic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: usize,
    pub backoff_base_ms: u64,
    pub backoff_cap_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            backoff_base_ms: 250,
            backoff_cap_ms: 4_000,
        }
    }
}

fn default_model() -> String {
    "synthetic".to_string()
}

fn default_concurrency() -> usize {
    4
}

fn default_timeout() -> u64 {
    60_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    /// Completions URL, e.g. `http://localhost:8000/v1/completions`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// Model identifier; also the provenance string hashed into cache keys.
    #[serde(default = "default_model")]
    pub model: String,
    /// Name of the environment variable holding the bearer token. The key
    /// itself never appears in configs or flags.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env: Option<String>,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    /// Seed for the synthetic generator.
    #[serde(default)]
    pub seed: u64,
}

impl ProviderConfig {
    pub fn synthetic(seed: u64) -> ProviderConfig {
        ProviderConfig {
            kind: ProviderKind::Synthetic,
            endpoint: None,
            model: format!("synthetic-{seed}"),
            auth_env: None,
            max_concurrency: default_concurrency(),
            retry: RetryPolicy::default(),
            timeout_ms: default_timeout(),
            seed,
        }
    }

    pub fn replay_of(other: &ProviderConfig) -> ProviderConfig {
        ProviderConfig {
            kind: ProviderKind::Replay,
            ..other.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_concurrency == 0 {
            return Err(Error::Config("max_concurrency must be at least 1".into()));
        }
        if self.retry.max_attempts == 0 {
            return Err(Error::Config("retry.max_attempts must be at least 1".into()));
        }
        if self.kind == ProviderKind::Http && self.endpoint.is_none() {
            return Err(Error::Config("http provider requires an endpoint".into()));
        }
        Ok(())
    }
}

// ─── HTTP backend ────────────────────────────────────────────────────────────

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    n: usize,
    max_tokens: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    stop: Vec<String>,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    text: String,
    #[serde(default)]
    finish_reason: Option<String>,
}

pub struct HttpBackend {
    endpoint: String,
    model: String,
    auth_env: Option<String>,
    retry: RetryPolicy,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: &ProviderConfig) -> Result<HttpBackend> {
        let endpoint = config
            .endpoint
            .clone()
            .ok_or_else(|| Error::Config("http provider requires an endpoint".into()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| Error::Provider {
                provider: config.model.clone(),
                detail: e.to_string(),
            })?;
        Ok(HttpBackend {
            endpoint,
            model: config.model.clone(),
            auth_env: config.auth_env.clone(),
            retry: config.retry.clone(),
            client,
        })
    }

    fn request_once(&self, prompt: &str, params: &SamplingParams, n: usize) -> Result<Vec<RawCompletion>> {
        let body = CompletionRequest {
            model: &self.model,
            prompt,
            temperature: params.temperature,
            n,
            max_tokens: params.max_tokens,
            stop: params.stop.clone(),
        };
        let mut request = self.client.post(&self.endpoint).json(&body);
        if let Some(var) = &self.auth_env {
            if let Ok(token) = std::env::var(var) {
                request = request.bearer_auth(token);
            }
        }
        let response = request.send().map_err(|e| Error::Provider {
            provider: self.model.clone(),
            detail: e.to_string(),
        })?;
        let status = response.status();
        let text = response.text().map_err(|e| Error::Provider {
            provider: self.model.clone(),
            detail: e.to_string(),
        })?;
        if !status.is_success() {
            return Err(Error::ProviderStatus {
                provider: self.model.clone(),
                status: status.as_u16(),
                body_excerpt: text.chars().take(200).collect(),
            });
        }
        let parsed: CompletionResponse = serde_json::from_str(&text).map_err(|e| Error::Provider {
            provider: self.model.clone(),
            detail: format!("unparseable response: {e}"),
        })?;
        if parsed.choices.len() != n {
            return Err(Error::Provider {
                provider: self.model.clone(),
                detail: format!("requested n={n} completions, got {}", parsed.choices.len()),
            });
        }
        Ok(parsed
            .choices
            .into_iter()
            .map(|c| RawCompletion {
                text: c.text,
                finish: match c.finish_reason.as_deref() {
                    Some("length") => FinishReason::Length,
                    Some("error") => FinishReason::Error,
                    _ => FinishReason::Stop,
                },
            })
            .collect())
    }

    fn retryable(err: &Error) -> bool {
        match err {
            Error::ProviderStatus { status, .. } => *status == 429 || *status >= 500,
            Error::Provider { .. } => true, // connect / timeout / parse-free transport errors
            _ => false,
        }
    }
}

impl Backend for HttpBackend {
    fn sample(&self, prompt: &str, params: &SamplingParams, indices: &[usize]) -> Result<Vec<RawCompletion>> {
        let n = indices.len();
        let mut last: Option<Error> = None;
        for attempt in 0..self.retry.max_attempts {
            if attempt > 0 {
                let backoff = self
                    .retry
                    .backoff_base_ms
                    .saturating_mul(1u64 << (attempt - 1).min(16))
                    .min(self.retry.backoff_cap_ms);
                std::thread::sleep(Duration::from_millis(backoff));
            }
            match self.request_once(prompt, params, n) {
                Ok(raw) => return Ok(raw),
                Err(err) if Self::retryable(&err) => last = Some(err),
                Err(err) => return Err(err),
            }
        }
        Err(Error::RetriesExhausted {
            provider: self.model.clone(),
            attempts: self.retry.max_attempts,
            last_error: last.map(|e| e.to_string()).unwrap_or_default(),
        })
    }
}

// ─── Synthetic backend ───────────────────────────────────────────────────────

/// Deterministic stand-in for a live model. Output depends only on
/// (seed, prompt text, sampling params, sample index); greedy sampling
/// ignores the index so all k samples agree.
pub struct SyntheticBackend {
    seed: u64,
}

impl SyntheticBackend {
    pub fn new(seed: u64) -> SyntheticBackend {
        SyntheticBackend { seed }
    }

    fn rng_for(&self, prompt: &str, params: &SamplingParams, index: usize) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(prompt.as_bytes());
        h.update([0x1f]);
        h.update(params.temperature.to_bits().to_le_bytes());
        h.update(params.max_tokens.to_le_bytes());
        for stop in &params.stop {
            h.update(stop.as_bytes());
            h.update([0x1e]);
        }
        h.update(index.to_le_bytes());
        let digest = h.finalize();
        let mut seed_bytes = [0u8; 32];
        seed_bytes.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed_bytes)
    }

    /// Option lines of the final question block, `"X) text"`.
    fn parse_options(prompt: &str) -> Vec<(Label, String)> {
        let tail = prompt.rfind("Question:").map_or(prompt, |i| &prompt[i..]);
        tail.lines()
            .filter_map(|line| {
                let mut chars = line.chars();
                let label = Label::from_char(chars.next()?)?;
                chars.as_str().strip_prefix(") ").map(|t| (label, t.to_string()))
            })
            .collect()
    }

    /// A per-question anchor so each question has a stable preferred label.
    fn preferred(prompt: &str, n: usize) -> usize {
        let tail = prompt.rfind("Question:").map_or(prompt, |i| &prompt[i..]);
        let block = tail.split("\n\n").next().unwrap_or(tail);
        let digest = Sha256::digest(block.as_bytes());
        let mut eight = [0u8; 8];
        eight.copy_from_slice(&digest[..8]);
        (u64::from_le_bytes(eight) as usize) % n.max(1)
    }

    fn generate(&self, prompt: &str, params: &SamplingParams, index: usize) -> RawCompletion {
        let effective_index = if params.temperature == 0.0 { 0 } else { index };
        let mut rng = self.rng_for(prompt, params, effective_index);
        let options = Self::parse_options(prompt);
        let labels: Vec<(Label, String)> = if options.is_empty() {
            (0..4)
                .map(|i| (Label::from_index(i).unwrap(), format!("option {i}")))
                .collect()
        } else {
            options
        };
        let preferred = Self::preferred(prompt, labels.len());
        let pick = |rng: &mut ChaCha8Rng| {
            if rng.gen_bool(0.6) {
                preferred
            } else {
                rng.gen_range(0..labels.len())
            }
        };
        let text = if prompt.ends_with("the answer is") {
            if rng.gen_ratio(1, 12) {
                " none of the above.".to_string()
            } else {
                let (label, option_text) = &labels[pick(&mut rng)];
                match rng.gen_range(0..4u8) {
                    0 => format!(" {label}."),
                    1 => format!(" {label}) {option_text}."),
                    2 => format!(" {label}, {option_text}."),
                    _ => format!(" {label}"),
                }
            }
        } else {
            // Reasoning stage: a short pseudo chain of thought.
            let (label, option_text) = &labels[pick(&mut rng)];
            if rng.gen_ratio(1, 10) {
                " The vignette is ambiguous and several options remain plausible without further data.".to_string()
            } else {
                format!(
                    " The salient findings narrow the differential considerably. Weighing each option against the presentation, {option_text} accounts for the full picture, which points to {label}."
                )
            }
        };
        RawCompletion {
            text,
            finish: FinishReason::Stop,
        }
    }
}

impl Backend for SyntheticBackend {
    fn sample(&self, prompt: &str, params: &SamplingParams, indices: &[usize]) -> Result<Vec<RawCompletion>> {
        Ok(indices
            .iter()
            .map(|&i| self.generate(prompt, params, i))
            .collect())
    }
}

// ─── Client ──────────────────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    /// Prompts already fully cached.
    pub hits: usize,
    /// Prompts with at least one missing sample.
    pub misses: usize,
    /// Prompts actually fetched from the provider.
    pub fetched: usize,
}

/// Truncates at the earliest occurrence of any stop string.
fn apply_stops(text: &str, stops: &[String]) -> (String, bool) {
    let mut cut: Option<usize> = None;
    for stop in stops {
        if stop.is_empty() {
            continue;
        }
        if let Some(pos) = text.find(stop.as_str()) {
            cut = Some(cut.map_or(pos, |c| c.min(pos)));
        }
    }
    match cut {
        Some(pos) => (text[..pos].to_string(), true),
        None => (text.to_string(), false),
    }
}

/// Samples completions through a cache. All fetched samples are persisted
/// before `complete` returns; the replay flavor has no backend at all.
pub struct LlmClient {
    cache: CompletionCache,
    backend: Option<Box<dyn Backend>>,
    provider_name: String,
    max_concurrency: usize,
}

impl LlmClient {
    pub fn from_config(config: &ProviderConfig, cache_path: impl Into<PathBuf>) -> Result<LlmClient> {
        config.validate()?;
        let cache = CompletionCache::open(cache_path)?;
        let backend: Option<Box<dyn Backend>> = match config.kind {
            ProviderKind::Http => Some(Box::new(HttpBackend::new(config)?)),
            ProviderKind::Synthetic => Some(Box::new(SyntheticBackend::new(config.seed))),
            ProviderKind::Replay => None,
        };
        Ok(LlmClient {
            cache,
            backend,
            provider_name: config.model.clone(),
            max_concurrency: config.max_concurrency,
        })
    }

    /// Builds a client around a custom backend (used by tests to observe
    /// provider traffic).
    pub fn with_backend(
        backend: Box<dyn Backend>,
        cache_path: impl Into<PathBuf>,
        provider_name: impl Into<String>,
        max_concurrency: usize,
    ) -> Result<LlmClient> {
        Ok(LlmClient {
            cache: CompletionCache::open(cache_path)?,
            backend: Some(backend),
            provider_name: provider_name.into(),
            max_concurrency,
        })
    }

    pub fn provider_name(&self) -> &str {
        &self.provider_name
    }

    pub fn cache(&self) -> &CompletionCache {
        &self.cache
    }

    pub fn max_concurrency(&self) -> usize {
        self.max_concurrency
    }

    fn completion_from_record(&self, record: CacheRecord) -> Completion {
        Completion {
            text: record.text,
            index: record.index,
            finish: record.finish,
            provider: self.provider_name.clone(),
            cache_key: record.key,
        }
    }

    /// Fetches (or replays) exactly `params.k` completions for one prompt,
    /// indices `0..k`, each truncated at the first stop string.
    pub fn complete(&self, prompt: &str, params: &SamplingParams) -> Result<Vec<Completion>> {
        params.validate()?;
        let keys: Vec<String> = (0..params.k)
            .map(|i| cache_key(prompt, params, &self.provider_name, i))
            .collect();
        let mut records: Vec<Option<CacheRecord>> = keys.iter().map(|k| self.cache.get(k)).collect();
        let missing: Vec<usize> = records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_none())
            .map(|(i, _)| i)
            .collect();

        if !missing.is_empty() {
            let backend = match &self.backend {
                Some(b) => b,
                None => {
                    return Err(Error::CacheMiss {
                        key: keys[missing[0]].clone(),
                    })
                }
            };
            let prompt_sha = sha256_hex(prompt.as_bytes());
            let raws: Vec<(usize, RawCompletion)> = if params.temperature == 0.0 {
                // Greedy: one fetch (or any cached sample) covers every index.
                let raw = match records.iter().flatten().next() {
                    Some(existing) => RawCompletion {
                        text: existing.text.clone(),
                        finish: existing.finish,
                    },
                    None => {
                        let mut fetched = backend.sample(prompt, params, &[0])?;
                        if fetched.is_empty() {
                            return Err(Error::Provider {
                                provider: self.provider_name.clone(),
                                detail: "backend returned no completions".into(),
                            });
                        }
                        fetched.remove(0)
                    }
                };
                missing.iter().map(|&i| (i, raw.clone())).collect()
            } else {
                let fetched = backend.sample(prompt, params, &missing)?;
                if fetched.len() != missing.len() {
                    return Err(Error::Provider {
                        provider: self.provider_name.clone(),
                        detail: format!(
                            "requested {} completions, backend returned {}",
                            missing.len(),
                            fetched.len()
                        ),
                    });
                }
                missing.iter().copied().zip(fetched).collect()
            };
            for (index, raw) in raws {
                let (text, truncated) = apply_stops(&raw.text, &params.stop);
                let record = CacheRecord {
                    key: keys[index].clone(),
                    prompt_sha: prompt_sha.clone(),
                    params: params.clone(),
                    index,
                    text,
                    finish: if truncated { FinishReason::Stop } else { raw.finish },
                };
                self.cache.put(record.clone())?;
                records[index] = Some(record);
            }
        }

        Ok(records
            .into_iter()
            .map(|r| self.completion_from_record(r.expect("all indices filled")))
            .collect())
    }

    /// Ensures every prompt is fully cached, fetching misses concurrently
    /// up to `max_concurrency`. Idempotent: a second warm performs zero
    /// provider requests.
    pub fn warm_cache(&self, prompts: &[String], params: &SamplingParams) -> Result<CacheStats> {
        params.validate()?;
        let cold: Vec<&String> = prompts
            .iter()
            .filter(|p| {
                (0..params.k).any(|i| !self.cache.contains(&cache_key(p, params, &self.provider_name, i)))
            })
            .collect();
        let stats = CacheStats {
            hits: prompts.len() - cold.len(),
            misses: cold.len(),
            fetched: cold.len(),
        };
        for_each_bounded(&cold, self.max_concurrency, |prompt| {
            self.complete(prompt, params).map(|_| ())
        })?;
        Ok(stats)
    }
}

/// Runs `f` over `items` with at most `workers` invocations in flight,
/// returning results in input order or the lowest-index error.
pub fn for_each_bounded<T: Sync, R: Send>(
    items: &[T],
    workers: usize,
    f: impl Fn(&T) -> Result<R> + Sync,
) -> Result<Vec<R>> {
    let workers = workers.max(1).min(items.len().max(1));
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let slots: Vec<Mutex<Option<Result<R>>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if failed.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let result = f(&items[i]);
                if result.is_err() {
                    failed.store(true, Ordering::SeqCst);
                }
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });
    let mut out = Vec::with_capacity(items.len());
    for slot in slots {
        match slot.into_inner().unwrap() {
            Some(Ok(r)) => out.push(r),
            Some(Err(e)) => return Err(e),
            // A worker bailed out after a failure elsewhere; surface that
            // error instead.
            None => continue,
        }
    }
    Ok(out)
}
