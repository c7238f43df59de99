//! Embedding providers: the deterministic hashing embedder, an
//! OpenAI-compatible remote embedder and a persistent content cache.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::EmbedError;
use crate::archive::write_atomic;
use crate::http::{backoff_delay, JsonTransport};
use crate::text::{terms, word_terms};

pub trait EmbeddingProvider: Send + Sync {
    /// Stable identifier; part of every cache key and index manifest.
    fn id(&self) -> &str;
    fn dimension(&self) -> usize;
    /// Largest number of texts accepted per call.
    fn max_batch(&self) -> usize {
        64
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError>;
}

/// Embeds `texts` and checks the provider contract: one vector per text,
/// the declared dimension, finite components.
pub fn embed_checked(provider: &dyn EmbeddingProvider, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
    let vectors = provider.embed_batch(texts)?;
    if vectors.len() != texts.len() {
        return Err(EmbedError::BatchSize {
            provider_id: provider.id().to_string(),
            expected: texts.len(),
            got: vectors.len(),
        });
    }
    for v in &vectors {
        if v.len() != provider.dimension() {
            return Err(EmbedError::DimensionMismatch {
                provider_id: provider.id().to_string(),
                expected: provider.dimension(),
                got: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::NonFinite { provider_id: provider.id().to_string() });
        }
    }
    Ok(vectors)
}

/// Embeds a single text.
pub fn embed(text: &str, provider: &dyn EmbeddingProvider) -> Result<Vec<f64>, EmbedError> {
    Ok(embed_checked(provider, &[text])?.remove(0))
}

/// Feature-hashing bag of identifier terms, L2-normalized.
///
/// Identifiers are split on camelCase and underscores and lowercased;
/// each term adds 1 to bucket `fnv1a(term) % dimension`. Text with no
/// identifiers falls back to its symbol tokens, and text with no tokens
/// embeds to the zero vector.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    id: String,
    dimension: usize,
}

impl HashingEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        Self { id: format!("hashing-{dimension}"), dimension }
    }

    pub fn vector(&self, text: &str) -> Vec<f64> {
        let mut features = word_terms(text);
        if features.is_empty() {
            features = terms(text);
        }
        let mut v = vec![0.0; self.dimension];
        for term in &features {
            v[(fnv1a(term.as_bytes()) % self.dimension as u64) as usize] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(256)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(*b)).wrapping_mul(0x0100_0000_01b3))
}

impl EmbeddingProvider for HashingEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn max_batch(&self) -> usize {
        256
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteEmbedderConfig {
    pub provider_id: String,
    pub base_url: String,
    pub model: String,
    pub dimension: usize,
    pub max_batch: usize,
    pub max_attempts: u32,
    pub backoff: Duration,
}

impl Default for RemoteEmbedderConfig {
    fn default() -> Self {
        Self {
            provider_id: "openai".to_string(),
            base_url: "https://api.openai.com/v1".to_string(),
            model: "text-embedding-3-small".to_string(),
            dimension: 1536,
            max_batch: 64,
            max_attempts: 3,
            backoff: Duration::from_secs(2),
        }
    }
}

/// OpenAI-compatible `POST {base_url}/embeddings` client.
pub struct RemoteEmbedder {
    config: RemoteEmbedderConfig,
    id: String,
    api_key: String,
    transport: Arc<dyn JsonTransport>,
}

impl RemoteEmbedder {
    pub fn new(config: RemoteEmbedderConfig, api_key: String, transport: Arc<dyn JsonTransport>) -> Self {
        let id = format!("{}:{}:{}", config.provider_id, config.model, config.dimension);
        Self { config, id, api_key, transport }
    }

    fn request(&self, texts: &[&str]) -> Value {
        json!({ "model": self.config.model, "input": texts })
    }

    fn parse(&self, response: &Value, expected: usize) -> Result<Vec<Vec<f64>>, EmbedError> {
        let bad = |what: &str| EmbedError::Response { provider_id: self.id.clone(), message: what.to_string() };
        let data = response.get("data").and_then(Value::as_array).ok_or_else(|| bad("missing `data` array"))?;
        let mut out: Vec<Option<Vec<f64>>> = vec![None; expected];
        for (pos, item) in data.iter().enumerate() {
            let idx = item.get("index").and_then(Value::as_u64).map_or(pos, |i| i as usize);
            let emb = item.get("embedding").and_then(Value::as_array).ok_or_else(|| bad("missing `embedding`"))?;
            let v =
                emb.iter().map(|x| x.as_f64().ok_or_else(|| bad("non-numeric component"))).collect::<Result<_, _>>()?;
            *out.get_mut(idx).ok_or_else(|| bad("embedding index out of range"))? = Some(v);
        }
        out.into_iter().map(|v| v.ok_or_else(|| bad("missing embedding for an input"))).collect()
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn max_batch(&self) -> usize {
        self.config.max_batch.max(1)
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let url = format!("{}/embeddings", self.config.base_url.trim_end_matches('/'));
        let body = self.request(texts);
        let attempts = self.config.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.transport.post_json(&url, Some(&self.api_key), &body) {
                Ok(resp) => return self.parse(&resp, texts.len()),
                Err(e) if e.retriable => {
                    last = e.message;
                    if attempt < attempts {
                        std::thread::sleep(backoff_delay(self.config.backoff, attempt));
                    }
                }
                Err(e) => {
                    return Err(EmbedError::Transport {
                        provider_id: self.id.clone(),
                        attempts: attempt,
                        message: e.message,
                    })
                }
            }
        }
        Err(EmbedError::Transport { provider_id: self.id.clone(), attempts, message: last })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    provider_id: String,
    hash: String,
    vector: Vec<f64>,
}

/// Counters for a [`CachedEmbedder`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: usize,
    pub misses: usize,
    /// Batches sent to the wrapped provider.
    pub provider_calls: usize,
}

/// Memoizes a provider by `(provider_id, sha256(text))`; the cache can be
/// persisted so repeated runs over unchanged files cost nothing.
pub struct CachedEmbedder<P> {
    inner: P,
    entries: Mutex<HashMap<String, Vec<f64>>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
    calls: AtomicUsize,
}

impl<P: EmbeddingProvider> CachedEmbedder<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            entries: Mutex::new(HashMap::new()),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
            calls: AtomicUsize::new(0),
        }
    }

    /// Loads persisted entries for this provider; a missing file is an
    /// empty cache.
    pub fn load(inner: P, path: &Path) -> Result<Self, EmbedError> {
        let cache = Self::new(inner);
        if !path.exists() {
            return Ok(cache);
        }
        let file = fs::File::open(path).map_err(|e| EmbedError::Cache(format!("{}: {e}", path.display())))?;
        let mut entries = cache.entries.lock().expect("cache lock");
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| EmbedError::Cache(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: CacheEntry = serde_json::from_str(&line)
                .map_err(|e| EmbedError::Cache(format!("{}:{}: {e}", path.display(), n + 1)))?;
            if entry.provider_id == cache.inner.id() && entry.vector.len() == cache.inner.dimension() {
                entries.insert(entry.hash, entry.vector);
            }
        }
        drop(entries);
        Ok(cache)
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbedError> {
        let entries = self.entries.lock().expect("cache lock");
        let mut keys: Vec<_> = entries.keys().collect();
        keys.sort();
        let mut out = Vec::new();
        for key in keys {
            let entry = CacheEntry {
                provider_id: self.inner.id().to_string(),
                hash: key.clone(),
                vector: entries[key].clone(),
            };
            serde_json::to_writer(&mut out, &entry).map_err(|e| EmbedError::Cache(e.to_string()))?;
            out.push(b'\n');
        }
        write_atomic(path, &out).map_err(|e| EmbedError::Cache(format!("{}: {e}", path.display())))
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            provider_calls: self.calls.load(Ordering::Relaxed),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

fn content_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl<P: EmbeddingProvider> EmbeddingProvider for CachedEmbedder<P> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn max_batch(&self) -> usize {
        self.inner.max_batch()
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let hashes: Vec<String> = texts.iter().map(|t| content_hash(t)).collect();
        let mut out: Vec<Option<Vec<f64>>> = {
            let entries = self.entries.lock().expect("cache lock");
            hashes.iter().map(|h| entries.get(h).cloned()).collect()
        };
        let missing: Vec<usize> = (0..texts.len()).filter(|&i| out[i].is_none()).collect();
        self.hits.fetch_add(texts.len() - missing.len(), Ordering::Relaxed);
        if !missing.is_empty() {
            self.misses.fetch_add(missing.len(), Ordering::Relaxed);
            let batch: Vec<&str> = missing.iter().map(|&i| texts[i]).collect();
            self.calls.fetch_add(1, Ordering::Relaxed);
            let vectors = embed_checked(&self.inner, &batch)?;
            let mut entries = self.entries.lock().expect("cache lock");
            for (&i, v) in missing.iter().zip(vectors) {
                entries.insert(hashes[i].clone(), v.clone());
                out[i] = Some(v);
            }
        }
        Ok(out.into_iter().map(|v| v.expect("filled above")).collect())
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<P> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn max_batch(&self) -> usize {
        (**self).max_batch()
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        (**self).embed_batch(texts)
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Arc<P> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn max_batch(&self) -> usize {
        (**self).max_batch()
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        (**self).embed_batch(texts)
    }
}
