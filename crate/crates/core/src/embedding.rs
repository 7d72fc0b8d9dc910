//! Unit-norm sentence vectors behind a pluggable provider.
//!
//! Two backends exist: [`DeterministicEmbedder`], a hashed bag-of-tokens
//! embedder that needs no model and is fully reproducible, and
//! [`RemoteEmbedder`], a client for any HTTP service that accepts
//! `{"texts": [...]}` and answers `{"vectors": [[...], ...]}`.
//!
//! [`EmbeddingProvider`] wraps a backend with a content-addressed cache keyed
//! by the backend's configuration hash and the SHA-256 of each text.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::RwLock;
use std::time::Duration;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::transcript::tokenize;

pub const DEFAULT_EMBED_DIM: usize = 256;
pub const MIN_DETERMINISTIC_DIM: usize = 8;
pub const API_KEY_ENV: &str = "INCLUSION_EMBED_API_KEY";

/// A vector with unit Euclidean norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Normalizes `values`; fails on an empty, zero or non-finite vector.
    pub fn from_raw(values: Vec<f64>) -> Result<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if values.is_empty() || !norm.is_finite() || norm == 0.0 {
            return Err(Error::Provider {
                message: "embedding is empty, zero or non-finite".into(),
                failed_indices: Vec::new(),
            });
        }
        Ok(EmbeddingVector(values.into_iter().map(|v| v / norm).collect()))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    /// Dot product, accumulated in index order. Equals cosine for unit vectors.
    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn unit_uniform(rng: &mut ChaCha8Rng) -> f64 {
    // 53 random bits, offset by half a step so the result is never 0.
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Stable pseudo-random unit direction for one token (Box-Muller normals
/// from a ChaCha8 stream seeded by SHA-256 of the dimension and token).
fn token_direction(token: &str, d: usize) -> Vec<f64> {
    let mut h = Sha256::new();
    h.update(b"inclusion-analytics/token-direction/v1\0");
    h.update((d as u64).to_le_bytes());
    h.update(token.as_bytes());
    let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
    let mut v = Vec::with_capacity(d + 1);
    while v.len() < d {
        let r = (-2.0 * unit_uniform(&mut rng).ln()).sqrt();
        let theta = std::f64::consts::TAU * unit_uniform(&mut rng);
        v.push(r * theta.cos());
        v.push(r * theta.sin());
    }
    v.truncate(d);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Hashed bag-of-tokens embedding: the normalized sum of per-token unit
/// directions. Texts without tokens map to the first basis vector.
pub fn deterministic_embed(text: &str, d: usize) -> Result<EmbeddingVector> {
    if d < MIN_DETERMINISTIC_DIM {
        return Err(Error::Config(format!(
            "deterministic embedder needs dimension >= {MIN_DETERMINISTIC_DIM}, got {d}"
        )));
    }
    let tokens = tokenize(text);
    let mut sum = vec![0.0; d];
    for t in &tokens {
        for (s, x) in sum.iter_mut().zip(token_direction(t, d)) {
            *s += x;
        }
    }
    let norm = sum.iter().map(|x| x * x).sum::<f64>().sqrt();
    if tokens.is_empty() || norm == 0.0 {
        let mut e = vec![0.0; d];
        e[0] = 1.0;
        return Ok(EmbeddingVector(e));
    }
    Ok(EmbeddingVector(sum.into_iter().map(|x| x / norm).collect()))
}

/// Failure inside a backend; `failed` holds positions within the slice the
/// backend was given.
#[derive(Debug)]
pub struct BackendError {
    pub message: String,
    pub failed: Vec<usize>,
}

pub trait EmbeddingBackend: Send + Sync {
    fn kind(&self) -> ProviderKind;
    /// Declared output dimension, if known up front.
    fn dimension(&self) -> Option<usize>;
    /// Canonical description of everything that affects the output vectors.
    fn config_string(&self) -> String;
    fn embed(&self, texts: &[&str]) -> std::result::Result<Vec<Vec<f64>>, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    DeterministicTest,
    RemoteService,
}

#[derive(Debug, Clone)]
pub struct DeterministicEmbedder {
    dimension: usize,
}

impl DeterministicEmbedder {
    pub fn new(dimension: usize) -> Result<Self> {
        if dimension < MIN_DETERMINISTIC_DIM {
            return Err(Error::Config(format!(
                "deterministic embedder needs dimension >= {MIN_DETERMINISTIC_DIM}, got {dimension}"
            )));
        }
        Ok(DeterministicEmbedder { dimension })
    }
}

impl EmbeddingBackend for DeterministicEmbedder {
    fn kind(&self) -> ProviderKind {
        ProviderKind::DeterministicTest
    }

    fn dimension(&self) -> Option<usize> {
        Some(self.dimension)
    }

    fn config_string(&self) -> String {
        format!("deterministic_test/v1;dimension={}", self.dimension)
    }

    fn embed(&self, texts: &[&str]) -> std::result::Result<Vec<Vec<f64>>, BackendError> {
        Ok(texts
            .iter()
            .map(|t| {
                deterministic_embed(t, self.dimension)
                    .expect("dimension validated at construction")
                    .0
            })
            .collect())
    }
}

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            initial_backoff: Duration::from_millis(200),
            max_backoff: Duration::from_secs(5),
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.initial_backoff.saturating_mul(factor).min(self.max_backoff)
    }
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct RemoteResponse {
    vectors: Vec<Vec<f64>>,
}

/// Client for an HTTP embedding service.
pub struct RemoteEmbedder {
    url: String,
    api_key: Option<String>,
    dimension: Option<usize>,
    batch_size: usize,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

impl RemoteEmbedder {
    pub fn new(url: impl Into<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        RemoteEmbedder {
            url: url.into(),
            api_key: None,
            dimension: None,
            batch_size: 64,
            retry: RetryPolicy::default(),
            agent,
        }
    }

    /// Reads the API key from [`API_KEY_ENV`] when set.
    pub fn with_env_api_key(mut self) -> Self {
        self.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        self
    }

    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    pub fn with_dimension(mut self, dimension: Option<usize>) -> Self {
        self.dimension = dimension;
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn post(&self, texts: &[&str]) -> std::result::Result<Vec<Vec<f64>>, (bool, String)> {
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        match req.send_json(RemoteRequest { texts }) {
            Ok(mut resp) => {
                let parsed: RemoteResponse = resp
                    .body_mut()
                    .read_json()
                    .map_err(|e| (false, format!("malformed response: {e}")))?;
                if parsed.vectors.len() != texts.len() {
                    return Err((
                        false,
                        format!("expected {} vectors, got {}", texts.len(), parsed.vectors.len()),
                    ));
                }
                Ok(parsed.vectors)
            }
            // Client errors other than rate limiting will not improve on retry.
            Err(ureq::Error::StatusCode(code)) if (400..500).contains(&code) && code != 429 => {
                Err((false, format!("http status {code}")))
            }
            Err(e) => Err((true, e.to_string())),
        }
    }
}

impl EmbeddingBackend for RemoteEmbedder {
    fn kind(&self) -> ProviderKind {
        ProviderKind::RemoteService
    }

    fn dimension(&self) -> Option<usize> {
        self.dimension
    }

    fn config_string(&self) -> String {
        format!(
            "remote_service/v1;url={};dimension={}",
            self.url,
            self.dimension.map(|d| d.to_string()).unwrap_or_default()
        )
    }

    fn embed(&self, texts: &[&str]) -> std::result::Result<Vec<Vec<f64>>, BackendError> {
        let mut out = Vec::with_capacity(texts.len());
        for (b, chunk) in texts.chunks(self.batch_size).enumerate() {
            let offset = b * self.batch_size;
            let mut attempt = 0;
            loop {
                match self.post(chunk) {
                    Ok(vectors) => {
                        out.extend(vectors);
                        break;
                    }
                    Err((retryable, message)) => {
                        if !retryable || attempt >= self.retry.max_retries {
                            return Err(BackendError {
                                message: format!("{} after {} attempt(s): {message}", self.url, attempt + 1),
                                failed: (offset..offset + chunk.len()).collect(),
                            });
                        }
                        std::thread::sleep(self.retry.delay(attempt));
                        attempt += 1;
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheFile {
    config_hash: String,
    entries: BTreeMap<String, Vec<f64>>,
}

/// A backend plus its vector cache.
pub struct EmbeddingProvider {
    backend: Box<dyn EmbeddingBackend>,
    config: String,
    config_hash: String,
    cache: RwLock<BTreeMap<String, Vec<f64>>>,
    cache_path: Option<PathBuf>,
}

fn text_key(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl EmbeddingProvider {
    pub fn new(backend: impl EmbeddingBackend + 'static) -> Self {
        let config = backend.config_string();
        let config_hash = hex::encode(Sha256::digest(config.as_bytes()));
        EmbeddingProvider {
            backend: Box::new(backend),
            config,
            config_hash,
            cache: RwLock::new(BTreeMap::new()),
            cache_path: None,
        }
    }

    pub fn deterministic(dimension: usize) -> Result<Self> {
        Ok(Self::new(DeterministicEmbedder::new(dimension)?))
    }

    /// Persists the cache as `<dir>/<config_hash>.json`, loading it first if present.
    pub fn with_cache_dir(mut self, dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(format!("{}.json", self.config_hash));
        if path.exists() {
            let raw = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let file: CacheFile = serde_json::from_str(&raw)?;
            if file.config_hash != self.config_hash {
                return Err(Error::Config(format!("{}: cache belongs to another configuration", path.display())));
            }
            *self.cache.get_mut().expect("cache lock") = file.entries;
        }
        self.cache_path = Some(path);
        Ok(self)
    }

    pub fn kind(&self) -> ProviderKind {
        self.backend.kind()
    }

    pub fn dimension(&self) -> Option<usize> {
        self.backend.dimension()
    }

    /// The backend's canonical configuration string.
    pub fn config(&self) -> &str {
        &self.config
    }

    /// SHA-256 of the backend configuration; keys the cache file.
    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn cache_path(&self) -> Option<&Path> {
        self.cache_path.as_deref()
    }

    pub fn cached_entries(&self) -> usize {
        self.cache.read().expect("cache lock").len()
    }

    /// One unit vector per text, in input order.
    pub fn embed_batch<S: AsRef<str>>(&self, texts: &[S]) -> Result<Vec<EmbeddingVector>> {
        let keys: Vec<String> = texts.iter().map(|t| text_key(t.as_ref())).collect();

        let mut missing: Vec<usize> = Vec::new();
        {
            let cache = self.cache.read().expect("cache lock");
            let mut queued = std::collections::HashSet::new();
            for (i, k) in keys.iter().enumerate() {
                if !cache.contains_key(k) && queued.insert(k.as_str()) {
                    missing.push(i);
                }
            }
        }

        if !missing.is_empty() {
            let batch: Vec<&str> = missing.iter().map(|&i| texts[i].as_ref()).collect();
            let raw = self.backend.embed(&batch).map_err(|e| Error::Provider {
                message: e.message,
                failed_indices: e.failed.into_iter().map(|p| missing[p]).collect(),
            })?;
            let known = self
                .backend
                .dimension()
                .or_else(|| self.cache.read().expect("cache lock").values().next().map(Vec::len));
            let mut fresh: Vec<(usize, EmbeddingVector)> = Vec::with_capacity(raw.len());
            for (pos, values) in raw.into_iter().enumerate() {
                let expected = known.or_else(|| fresh.first().map(|(_, v)| v.dimension())).unwrap_or(values.len());
                if values.len() != expected {
                    return Err(Error::DimensionMismatch {
                        expected,
                        actual: values.len(),
                    });
                }
                let v = EmbeddingVector::from_raw(values).map_err(|_| Error::Provider {
                    message: "provider returned a zero or non-finite vector".into(),
                    failed_indices: vec![missing[pos]],
                })?;
                fresh.push((missing[pos], v));
            }
            let mut cache = self.cache.write().expect("cache lock");
            for (i, v) in fresh {
                cache.insert(keys[i].clone(), v.0);
            }
        }

        let cache = self.cache.read().expect("cache lock");
        Ok(keys
            .iter()
            .map(|k| EmbeddingVector(cache.get(k).expect("filled above").clone()))
            .collect())
    }

    /// Writes the cache file, if one was configured.
    pub fn save_cache(&self) -> Result<()> {
        let Some(path) = &self.cache_path else { return Ok(()) };
        let file = CacheFile {
            config_hash: self.config_hash.clone(),
            entries: self.cache.read().expect("cache lock").clone(),
        };
        let json = serde_json::to_string(&file)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }
}
