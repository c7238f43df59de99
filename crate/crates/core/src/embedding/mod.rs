//! Chunk embeddings for every file of a [`CodeIndex`], and the cosine
//! shortlist of files most similar to a bug report.

mod chunk;
mod provider;
mod similarity;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::{self, ArchiveError, ArchiveKind};
use crate::code_index::{Changeset, CodeIndex};
use crate::eval::BugReport;
use crate::text::tokenize;

pub use chunk::{chunk_file, chunk_text, Chunk, TextChunk, DEFAULT_CHUNK_LIMIT};
pub use provider::{
    embed, embed_checked, CacheStats, CachedEmbedder, EmbeddingProvider, HashingEmbedder, RemoteEmbedder,
    RemoteEmbedderConfig,
};
pub use similarity::{cosine_similarity, SimilarityError};

/// Default shortlist size.
pub const DEFAULT_SHORTLIST_K: usize = 50;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding provider `{provider_id}` failed after {attempts} attempt(s): {message}")]
    Transport { provider_id: String, attempts: u32, message: String },
    #[error("embedding provider `{provider_id}` returned dimension {got}, expected {expected}")]
    DimensionMismatch { provider_id: String, expected: usize, got: usize },
    #[error("embedding provider `{provider_id}` returned {got} vectors for {expected} inputs")]
    BatchSize { provider_id: String, expected: usize, got: usize },
    #[error("embedding provider `{provider_id}` returned a non-finite component")]
    NonFinite { provider_id: String },
    #[error("embedding provider `{provider_id}` sent an unusable response: {message}")]
    Response { provider_id: String, message: String },
    #[error("embedding index was built with `{index}` but the provider is `{provider}`")]
    ProviderMismatch { index: String, provider: String },
    #[error("bug report has no text to embed")]
    EmptyBugText,
    #[error("embedding index is empty")]
    EmptyIndex,
    #[error("duplicate embedding record for {fq_path}#{seq}")]
    DuplicateRecord { fq_path: String, seq: u32 },
    #[error("similarity for {fq_path}: {source}")]
    Similarity {
        fq_path: String,
        #[source]
        source: SimilarityError,
    },
    #[error("embedding cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
}

impl EmbedError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, EmbedError::Transport { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub chunk: Chunk,
    pub vector: Vec<f64>,
}

/// Chunk vectors grouped by file, each file's chunks in `seq` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingIndex {
    provider_id: String,
    dimension: usize,
    files: BTreeMap<String, Vec<EmbeddingRecord>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbedOptions {
    pub chunk_limit: usize,
    /// Provider batches allowed in flight at once.
    pub max_in_flight: usize,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        Self { chunk_limit: DEFAULT_CHUNK_LIMIT, max_in_flight: 4 }
    }
}

/// A file whose chunks could not be embedded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileFailure {
    pub fq_path: String,
    pub message: String,
}

/// Result of a build or update: the (possibly partial) index plus the files
/// left out because of provider failures.
#[derive(Debug, Clone)]
pub struct EmbedOutcome {
    pub index: EmbeddingIndex,
    pub failures: Vec<FileFailure>,
}

const EMBED_ARCHIVE: ArchiveKind = ArchiveKind { magic: "BUGLOC-EMBED-INDEX", version: 1 };

#[derive(Debug, Serialize, Deserialize)]
struct EmbedManifest {
    provider_id: String,
    dimension: usize,
    record_count: usize,
}

impl EmbeddingIndex {
    pub fn new(provider_id: impl Into<String>, dimension: usize) -> Self {
        Self { provider_id: provider_id.into(), dimension, files: BTreeMap::new() }
    }

    /// Builds an index from records in any order.
    pub fn from_records(
        provider_id: impl Into<String>,
        dimension: usize,
        records: impl IntoIterator<Item = EmbeddingRecord>,
    ) -> Result<Self, EmbedError> {
        let mut index = Self::new(provider_id, dimension);
        for r in records {
            index.insert(r)?;
        }
        Ok(index)
    }

    pub fn insert(&mut self, record: EmbeddingRecord) -> Result<(), EmbedError> {
        if record.vector.len() != self.dimension {
            return Err(EmbedError::DimensionMismatch {
                provider_id: self.provider_id.clone(),
                expected: self.dimension,
                got: record.vector.len(),
            });
        }
        if record.vector.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::NonFinite { provider_id: self.provider_id.clone() });
        }
        let chunks = self.files.entry(record.chunk.fq_path.clone()).or_default();
        match chunks.binary_search_by_key(&record.chunk.seq, |r| r.chunk.seq) {
            Ok(_) => Err(EmbedError::DuplicateRecord { fq_path: record.chunk.fq_path, seq: record.chunk.seq }),
            Err(pos) => {
                chunks.insert(pos, record);
                Ok(())
            }
        }
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn file_count(&self) -> usize {
        self.files.len()
    }

    pub fn record_count(&self) -> usize {
        self.files.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    /// Records in `(fq_path, seq)` order.
    pub fn records(&self) -> impl Iterator<Item = &EmbeddingRecord> {
        self.files.values().flatten()
    }

    pub fn file_records(&self, fq_path: &str) -> Option<&[EmbeddingRecord]> {
        self.files.get(fq_path).map(Vec::as_slice)
    }

    pub fn remove_file(&mut self, fq_path: &str) -> Option<Vec<EmbeddingRecord>> {
        self.files.remove(fq_path)
    }

    /// Files ranked by their best chunk's cosine similarity to `query`,
    /// ties broken by ascending path, truncated to `k`.
    pub fn top_k(&self, query: &[f64], k: usize) -> Result<Shortlist, EmbedError> {
        let mut scored = Vec::with_capacity(self.files.len());
        for (path, records) in &self.files {
            let mut best = f64::NEG_INFINITY;
            for r in records {
                let s = cosine_similarity(query, &r.vector)
                    .map_err(|source| EmbedError::Similarity { fq_path: path.clone(), source })?;
                best = best.max(s);
            }
            if best.is_finite() {
                scored.push(ShortlistEntry { fq_path: path.clone(), score: best });
            }
        }
        scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.fq_path.cmp(&b.fq_path)));
        scored.truncate(k);
        Ok(Shortlist { entries: scored, k })
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbedError> {
        let manifest = EmbedManifest {
            provider_id: self.provider_id.clone(),
            dimension: self.dimension,
            record_count: self.record_count(),
        };
        archive::write(path, EMBED_ARCHIVE, &manifest, self.records())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EmbedError> {
        let (m, records): (EmbedManifest, Vec<EmbeddingRecord>) =
            archive::read(path, EMBED_ARCHIVE, |m: &EmbedManifest| m.record_count)?;
        Self::from_records(m.provider_id, m.dimension, records)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortlistEntry {
    pub fq_path: String,
    pub score: f64,
}

/// Files ordered by descending score, then ascending path; no duplicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shortlist {
    pub entries: Vec<ShortlistEntry>,
    pub k: usize,
}

impl Shortlist {
    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.fq_path.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn embed_chunks(
    chunks: Vec<Chunk>,
    provider: &dyn EmbeddingProvider,
    opts: EmbedOptions,
) -> Result<(Vec<EmbeddingRecord>, Vec<FileFailure>), EmbedError> {
    let batch_size = provider.max_batch().max(1);
    let batches: Vec<&[Chunk]> = chunks.chunks(batch_size).collect();
    let mut results: Vec<Result<Vec<Vec<f64>>, EmbedError>> = Vec::with_capacity(batches.len());
    for wave in batches.chunks(opts.max_in_flight.max(1)) {
        let wave_results: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = wave
                .iter()
                .map(|batch| {
                    s.spawn(move || {
                        let texts: Vec<&str> = batch.iter().map(|c| c.text.as_str()).collect();
                        embed_checked(provider, &texts)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("embedding worker panicked")).collect()
        });
        results.extend(wave_results);
    }

    let mut failed: BTreeMap<String, String> = BTreeMap::new();
    let mut records = Vec::with_capacity(chunks.len());
    for (batch, result) in batches.iter().zip(results) {
        match result {
            Ok(vectors) => records
                .extend(batch.iter().cloned().zip(vectors).map(|(chunk, vector)| EmbeddingRecord { chunk, vector })),
            Err(e @ (EmbedError::DimensionMismatch { .. } | EmbedError::BatchSize { .. })) => return Err(e),
            Err(e) => {
                let msg = e.to_string();
                for c in batch.iter() {
                    failed.entry(c.fq_path.clone()).or_insert_with(|| msg.clone());
                }
            }
        }
    }
    // a file is either fully embedded or left out
    records.retain(|r| !failed.contains_key(&r.chunk.fq_path));
    let failures = failed.into_iter().map(|(fq_path, message)| FileFailure { fq_path, message }).collect();
    Ok((records, failures))
}

fn chunks_for<'a>(index: &CodeIndex, paths: impl IntoIterator<Item = &'a str>, chunk_limit: usize) -> Vec<Chunk> {
    paths.into_iter().filter_map(|p| index.file(p)).flat_map(|f| chunk_file(f, chunk_limit)).collect()
}

/// Embeds every file of `index` from scratch.
pub fn build_embeddings(
    index: &CodeIndex,
    provider: &dyn EmbeddingProvider,
    opts: EmbedOptions,
) -> Result<EmbedOutcome, EmbedError> {
    let chunks = chunks_for(index, index.paths(), opts.chunk_limit);
    let (records, failures) = embed_chunks(chunks, provider, opts)?;
    let index = EmbeddingIndex::from_records(provider.id(), provider.dimension(), records)?;
    Ok(EmbedOutcome { index, failures })
}

/// Brings `eindex` in line with `index` (the post-changeset code index):
/// drops deleted and renamed-away files and re-embeds added, modified and
/// renamed-to files. Untouched records are kept as they are.
pub fn update_embeddings(
    eindex: &EmbeddingIndex,
    changeset: &Changeset,
    index: &CodeIndex,
    provider: &dyn EmbeddingProvider,
    opts: EmbedOptions,
) -> Result<EmbedOutcome, EmbedError> {
    if eindex.provider_id != provider.id() {
        return Err(EmbedError::ProviderMismatch {
            index: eindex.provider_id.clone(),
            provider: provider.id().to_string(),
        });
    }
    let mut next = eindex.clone();
    for path in changeset.removed_paths() {
        next.remove_file(path);
    }
    let touched = changeset.touched_new_paths();
    for path in &touched {
        next.remove_file(path);
    }
    let chunks = chunks_for(index, touched.iter().copied(), opts.chunk_limit);
    let (records, failures) = embed_chunks(chunks, provider, opts)?;
    for r in records {
        next.insert(r)?;
    }
    Ok(EmbedOutcome { index: next, failures })
}

/// Embeds a bug report's text. Text longer than `chunk_limit` tokens is
/// chunked and the chunk vectors are averaged.
pub fn embed_query(text: &str, provider: &dyn EmbeddingProvider, chunk_limit: usize) -> Result<Vec<f64>, EmbedError> {
    if tokenize(text).is_empty() {
        return Err(EmbedError::EmptyBugText);
    }
    let chunks = chunk_text(text, chunk_limit);
    if chunks.len() == 1 {
        return embed(text, provider);
    }
    let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
    let mut vectors = Vec::with_capacity(texts.len());
    for batch in texts.chunks(provider.max_batch().max(1)) {
        vectors.extend(embed_checked(provider, batch)?);
    }
    let mut mean = vec![0.0; provider.dimension()];
    for v in &vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    let n = vectors.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

/// The `k` files most similar to `bug`, scored by their best chunk.
pub fn shortlist_files(
    bug: &BugReport,
    eindex: &EmbeddingIndex,
    k: usize,
    provider: &dyn EmbeddingProvider,
    chunk_limit: usize,
) -> Result<Shortlist, EmbedError> {
    if eindex.is_empty() {
        return Err(EmbedError::EmptyIndex);
    }
    if eindex.provider_id != provider.id() {
        return Err(EmbedError::ProviderMismatch {
            index: eindex.provider_id.clone(),
            provider: provider.id().to_string(),
        });
    }
    let query = embed_query(&bug.query_text(), provider, chunk_limit)?;
    eindex.top_k(&query, k)
}
