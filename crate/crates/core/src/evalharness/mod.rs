//! Scores a model endpoint (or canned responses) on generated items:
//! prompt rendering, response caching, letter extraction and per-category
//! accuracy.

pub mod client;
pub mod extract;
pub mod prompt;

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qgen::{shuffle_and_nab, templates, Category, VQAItem};
use crate::rng::RngStream;

pub use client::{ChatClient, ClientError, Part, RetryPolicy, API_KEY_ENV, ENDPOINT_ENV};
pub use extract::extract_letter;
pub use prompt::{render_prompt, render_verifier_prompt, PromptMode};

/// Category columns always present in a report.
pub const REPORT_CATEGORIES: [Category; 11] = [
    Category::Rs,
    Category::Os,
    Category::Sr,
    Category::Su,
    Category::Mv,
    Category::TsG,
    Category::TsS,
    Category::TsGl,
    Category::Au,
    Category::Ip,
    Category::Tu,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Falls back to `ROBO2VLM_ENDPOINT`.
    pub endpoint_url: Option<String>,
    pub api_key_env: String,
    pub model: String,
    pub temperature: f64,
    pub max_new_tokens: u32,
    /// Sent as `max_context_length`; truncation is up to the server.
    pub context_length: Option<u32>,
    pub prompt_mode: PromptMode,
    pub max_parallel: usize,
    pub retry: RetryPolicy,
    pub timeout_s: u64,
    /// Re-draws "None of the above" with this probability before prompting.
    pub nab_fraction: Option<f64>,
    pub seed: u64,
    /// Second-stage extractor queried at temperature 0.
    pub verifier_url: Option<String>,
    pub verifier_model: Option<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            endpoint_url: None,
            api_key_env: API_KEY_ENV.to_string(),
            model: "model".to_string(),
            temperature: 0.7,
            max_new_tokens: 4096,
            context_length: Some(10240),
            prompt_mode: PromptMode::ZeroShot,
            max_parallel: 4,
            retry: RetryPolicy::default(),
            timeout_s: 120,
            nab_fraction: None,
            seed: 0,
            verifier_url: None,
            verifier_model: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid eval config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Client(#[from] ClientError),
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.temperature >= 0.0) {
            return Err(EvalError::Config("temperature must be nonnegative".into()));
        }
        if self.max_parallel == 0 {
            return Err(EvalError::Config("max_parallel must be at least 1".into()));
        }
        if let Some(p) = self.nab_fraction {
            if !(0.0..=1.0).contains(&p) {
                return Err(EvalError::Config("nab_fraction outside [0, 1]".into()));
            }
        }
        Ok(())
    }
}

/// Produces a raw response for an item, and optionally a second-stage
/// extraction when the first stage fails.
pub trait Responder: Sync {
    fn respond(&self, item: &VQAItem, prompt: &str) -> Result<String, String>;

    fn verify(&self, _item: &VQAItem, _response: &str) -> Option<char> {
        None
    }
}

/// Queries a chat endpoint with the prompt and the item's images.
pub struct EndpointResponder {
    pub client: ChatClient,
    pub verifier: Option<ChatClient>,
    pub media_root: PathBuf,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl EndpointResponder {
    pub fn from_config(cfg: &EvalConfig, media_root: &Path) -> Result<Self, EvalError> {
        let timeout = Duration::from_secs(cfg.timeout_s);
        let mut client = ChatClient::from_env(cfg.endpoint_url.as_deref(), &cfg.api_key_env, &cfg.model, timeout)?;
        client.retry = cfg.retry;
        if let Some(n) = cfg.context_length {
            client.extra.insert("max_context_length".into(), serde_json::json!(n));
        }
        let verifier = cfg.verifier_url.as_ref().map(|u| {
            let model = cfg.verifier_model.clone().unwrap_or_else(|| cfg.model.clone());
            let mut v = ChatClient::new(u.clone(), client.api_key.clone(), model, timeout);
            v.retry = cfg.retry;
            v
        });
        Ok(Self {
            client,
            verifier,
            media_root: media_root.to_path_buf(),
            temperature: cfg.temperature,
            max_tokens: cfg.max_new_tokens,
        })
    }
}

impl Responder for EndpointResponder {
    fn respond(&self, item: &VQAItem, prompt: &str) -> Result<String, String> {
        let mut parts = Vec::with_capacity(item.images.len() + 1);
        for img in &item.images {
            parts.push(client::image_part(&self.media_root.join(img)).map_err(|e| e.to_string())?);
        }
        parts.push(Part::Text(prompt.to_string()));
        self.client.chat(&parts, self.temperature, self.max_tokens).map_err(|e| e.to_string())
    }

    fn verify(&self, item: &VQAItem, response: &str) -> Option<char> {
        let v = self.verifier.as_ref()?;
        let p = render_verifier_prompt(&item.question, &item.choices, response);
        match v.chat(&[Part::Text(p)], 0.0, 8) {
            Ok(out) => extract_letter(&out, item.choices.len()),
            Err(e) => {
                log::warn!("verifier failed on {}: {e}", item.id);
                None
            }
        }
    }
}

/// Offline responses for dry runs.
#[derive(Debug, Clone, PartialEq)]
pub enum CannedResponder {
    /// Always the correct letter.
    Oracle,
    /// A uniformly random valid letter per item.
    Random { seed: u64 },
    /// Fixed responses by item id; missing ids are errors.
    Table(BTreeMap<String, String>),
}

impl CannedResponder {
    /// Reads `{"id": "response", ...}` or JSONL lines `{"id", "response"}`.
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = fs::read_to_string(path).map_err(|source| EvalError::Io { path: path.into(), source })?;
        if let Ok(map) = serde_json::from_str::<BTreeMap<String, String>>(&text) {
            return Ok(CannedResponder::Table(map));
        }
        #[derive(Deserialize)]
        struct Line {
            id: String,
            response: String,
        }
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let l: Line = serde_json::from_str(line).map_err(|e| EvalError::Malformed {
                path: path.into(),
                line: i + 1,
                message: e.to_string(),
            })?;
            map.insert(l.id, l.response);
        }
        Ok(CannedResponder::Table(map))
    }
}

impl Responder for CannedResponder {
    fn respond(&self, item: &VQAItem, _prompt: &str) -> Result<String, String> {
        match self {
            CannedResponder::Oracle => Ok(format!("Final Answer: {}", item.correct_letter())),
            CannedResponder::Random { seed } => {
                let mut rng = RngStream::new(*seed, &item.id, "canned", 0);
                let l = (b'A' + rng.below(item.choices.len()) as u8) as char;
                Ok(format!("Final Answer: {l}"))
            }
            CannedResponder::Table(m) => {
                m.get(&item.id).cloned().ok_or_else(|| format!("no canned response for {}", item.id))
            }
        }
    }
}

/// One cached model response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub item_id: String,
    pub model: String,
    pub mode: PromptMode,
    pub response: String,
    pub latency_ms: f64,
    /// Second-stage extraction, filled when stage one failed.
    #[serde(default)]
    pub verified: Option<char>,
}

type CacheKey = (String, String, PromptMode);

/// Append-only JSONL response cache keyed by (item id, model, mode).
#[derive(Debug, Default)]
pub struct ResponseCache {
    path: Option<PathBuf>,
    entries: BTreeMap<CacheKey, CacheEntry>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: &Path) -> Result<Self, EvalError> {
        let mut entries = BTreeMap::new();
        if path.exists() {
            let file = fs::File::open(path).map_err(|source| EvalError::Io { path: path.into(), source })?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|source| EvalError::Io { path: path.into(), source })?;
                if line.trim().is_empty() {
                    continue;
                }
                let e: CacheEntry = serde_json::from_str(&line).map_err(|e| EvalError::Malformed {
                    path: path.into(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
                entries.insert((e.item_id.clone(), e.model.clone(), e.mode), e);
            }
        }
        Ok(Self { path: Some(path.to_path_buf()), entries })
    }

    pub fn get(&self, id: &str, model: &str, mode: PromptMode) -> Option<&CacheEntry> {
        self.entries.get(&(id.to_string(), model.to_string(), mode))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn insert_all(&mut self, new: Vec<CacheEntry>) -> Result<(), EvalError> {
        if let Some(path) = &self.path {
            if !new.is_empty() {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(dir).map_err(|source| EvalError::Io { path: dir.into(), source })?;
                }
                let mut f = fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|source| EvalError::Io { path: path.clone(), source })?;
                for e in &new {
                    writeln!(f, "{}", serde_json::to_string(e).expect("cache entry serializes"))
                        .map_err(|source| EvalError::Io { path: path.clone(), source })?;
                }
            }
        }
        for e in new {
            self.entries.insert((e.item_id.clone(), e.model.clone(), e.mode), e);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
}

impl CategoryScore {
    fn new(n: usize, correct: usize) -> Self {
        Self { n, correct, accuracy: if n == 0 { 0.0 } else { correct as f64 / n as f64 } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub id: String,
    pub category: Category,
    pub expected: char,
    pub predicted: Option<char>,
    pub correct: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub mode: PromptMode,
    pub overall: CategoryScore,
    pub per_category: BTreeMap<String, CategoryScore>,
    pub extraction_failures: usize,
    pub extraction_failure_rate: f64,
    pub request_errors: usize,
    /// Response latency over answered items, in milliseconds.
    pub latency_ms: Option<LatencyStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub max: f64,
}

fn latency_stats(mut v: Vec<f64>) -> Option<LatencyStats> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
    let p95 = v[((0.95 * n as f64).ceil() as usize).clamp(1, n) - 1];
    Some(LatencyStats { mean: v.iter().sum::<f64>() / n as f64, median, p95, max: v[n - 1] })
}

/// Restores the grounded answer of a five-choice item and draws "None of
/// the above" again with probability `p`.
pub fn redraw_nab(item: &VQAItem, p: f64, seed: u64) -> VQAItem {
    let mut it = item.clone();
    let nab = &templates().none_of_the_above;
    if it.choices.len() != 5 || it.category.is_binary() {
        return it;
    }
    if it.correct_text() == nab {
        if let Some(ans) = it.grounded_answer().map(str::to_string) {
            let idx = it.correct_index;
            it.choices[idx] = ans;
        }
    }
    let purpose = format!("renab:{}", it.id);
    let mut rng = RngStream::substream(seed, &it.traj_id, it.category.as_str(), it.frame_indices[0], &purpose);
    shuffle_and_nab(it, p, &mut rng)
}

/// Queries uncached items, fills the cache and aggregates.
pub fn evaluate(
    items: &[VQAItem],
    cfg: &EvalConfig,
    responder: &dyn Responder,
    cache: &mut ResponseCache,
) -> Result<(EvalReport, Vec<ItemResult>), EvalError> {
    cfg.validate()?;
    let mut items: Vec<VQAItem> = match cfg.nab_fraction {
        Some(p) => items.iter().map(|i| redraw_nab(i, p, cfg.seed)).collect(),
        None => items.to_vec(),
    };
    items.sort_by(|a, b| a.id.cmp(&b.id));
    let pending: Vec<&VQAItem> =
        items.iter().filter(|i| cache.get(&i.id, &cfg.model, cfg.prompt_mode).is_none()).collect();
    let answers = crate::par::map(&pending, cfg.max_parallel, |it| {
        let prompt = render_prompt(it, cfg.prompt_mode);
        let t0 = Instant::now();
        let r = responder.respond(it, &prompt);
        let latency_ms = t0.elapsed().as_secs_f64() * 1e3;
        r.map(|response| {
            let verified = match extract_letter(&response, it.choices.len()) {
                Some(_) => None,
                None => responder.verify(it, &response),
            };
            CacheEntry {
                item_id: it.id.clone(),
                model: cfg.model.clone(),
                mode: cfg.prompt_mode,
                response,
                latency_ms,
                verified,
            }
        })
    });
    let mut errors: BTreeMap<String, String> = BTreeMap::new();
    let mut fresh = Vec::new();
    for (it, a) in pending.iter().zip(answers) {
        match a {
            Ok(e) => fresh.push(e),
            Err(msg) => {
                log::warn!("{}: {msg}", it.id);
                errors.insert(it.id.clone(), msg);
            }
        }
    }
    cache.insert_all(fresh)?;
    Ok(aggregate(&items, cfg, cache, &errors))
}

/// Pure scoring from cached responses.
pub fn aggregate(
    items: &[VQAItem],
    cfg: &EvalConfig,
    cache: &ResponseCache,
    errors: &BTreeMap<String, String>,
) -> (EvalReport, Vec<ItemResult>) {
    let mut sorted: Vec<&VQAItem> = items.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut results = Vec::with_capacity(sorted.len());
    let mut latencies = Vec::new();
    let mut extraction_failures = 0;
    let mut request_errors = 0;
    for it in sorted {
        let expected = it.correct_letter();
        let (predicted, error) = match cache.get(&it.id, &cfg.model, cfg.prompt_mode) {
            Some(e) => {
                latencies.push(e.latency_ms);
                let p = extract_letter(&e.response, it.choices.len()).or(e.verified);
                if p.is_none() {
                    extraction_failures += 1;
                }
                (p, None)
            }
            None => {
                request_errors += 1;
                (None, Some(errors.get(&it.id).cloned().unwrap_or_else(|| "no response".into())))
            }
        };
        results.push(ItemResult {
            id: it.id.clone(),
            category: it.category,
            expected,
            predicted,
            correct: predicted == Some(expected),
            error,
        });
    }
    let mut counts: BTreeMap<String, (usize, usize)> =
        REPORT_CATEGORIES.iter().map(|c| (c.as_str().to_string(), (0, 0))).collect();
    for r in &results {
        let e = counts.entry(r.category.as_str().to_string()).or_default();
        e.0 += 1;
        e.1 += r.correct as usize;
    }
    let n = results.len();
    let correct = results.iter().filter(|r| r.correct).count();
    let report = EvalReport {
        model: cfg.model.clone(),
        mode: cfg.prompt_mode,
        overall: CategoryScore::new(n, correct),
        per_category: counts.into_iter().map(|(k, (n, c))| (k, CategoryScore::new(n, c))).collect(),
        extraction_failures,
        extraction_failure_rate: if n == 0 { 0.0 } else { extraction_failures as f64 / n as f64 },
        request_errors,
        latency_ms: latency_stats(latencies),
    };
    (report, results)
}
