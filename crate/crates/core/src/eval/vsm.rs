//! TF-IDF vector space baseline.

use std::collections::HashMap;

use super::{BugReport, DataError};
use crate::code_index::{file_representation, CodeIndex};
use crate::text::terms;

/// Files ranked by TF-IDF cosine similarity to a query.
#[derive(Debug, Clone, PartialEq)]
pub struct VsmRanking {
    pub entries: Vec<(String, f64)>,
    /// The query shared no term with the corpus; every score is zero.
    pub no_known_terms: bool,
}

impl VsmRanking {
    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(p, _)| p.as_str())
    }
}

struct Document {
    path: String,
    weights: HashMap<String, f64>,
    norm: f64,
}

/// Term weights `tf * ln(N / df)` with raw-count tf, over lowercased,
/// camelCase-split tokens.
pub struct VsmModel {
    docs: Vec<Document>,
    idf: HashMap<String, f64>,
}

fn term_counts(text: &str) -> HashMap<String, f64> {
    let mut counts = HashMap::new();
    for t in terms(text) {
        *counts.entry(t).or_insert(0.0) += 1.0;
    }
    counts
}

impl VsmModel {
    pub fn new(corpus: &[(String, String)]) -> Result<Self, DataError> {
        if corpus.is_empty() {
            return Err(DataError::EmptyCorpus);
        }
        let counts: Vec<_> = corpus.iter().map(|(p, text)| (p.clone(), term_counts(text))).collect();
        let mut df: HashMap<&str, usize> = HashMap::new();
        for (_, c) in &counts {
            for t in c.keys() {
                *df.entry(t.as_str()).or_insert(0) += 1;
            }
        }
        let n = corpus.len() as f64;
        let idf: HashMap<String, f64> = df.into_iter().map(|(t, d)| (t.to_string(), (n / d as f64).ln())).collect();
        let docs = counts
            .into_iter()
            .map(|(path, tf)| {
                let weights: HashMap<String, f64> = tf
                    .into_iter()
                    .map(|(t, c)| {
                        let w = c * idf[&t];
                        (t, w)
                    })
                    .collect();
                let norm = weights.values().map(|w| w * w).sum::<f64>().sqrt();
                Document { path, weights, norm }
            })
            .collect();
        Ok(Self { docs, idf })
    }

    /// Corpus of file representations from a code index.
    pub fn from_index(index: &CodeIndex) -> Result<Self, DataError> {
        let corpus: Vec<(String, String)> =
            index.files().map(|f| (f.fq_path.clone(), file_representation(f))).collect();
        Self::new(&corpus)
    }

    /// All documents, by descending score then ascending path.
    pub fn rank(&self, query: &str) -> VsmRanking {
        let q: HashMap<String, f64> =
            term_counts(query).into_iter().filter_map(|(t, c)| self.idf.get(&t).map(|idf| (t, c * idf))).collect();
        let q_norm = q.values().map(|w| w * w).sum::<f64>().sqrt();
        let no_known_terms = q_norm == 0.0;
        let mut entries: Vec<(String, f64)> = self
            .docs
            .iter()
            .map(|d| {
                let score = if no_known_terms || d.norm == 0.0 {
                    0.0
                } else {
                    q.iter().map(|(t, w)| w * d.weights.get(t).copied().unwrap_or(0.0)).sum::<f64>() / (q_norm * d.norm)
                };
                (d.path.clone(), score)
            })
            .collect();
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        VsmRanking { entries, no_known_terms }
    }
}

/// Ranks `corpus` (path, representation) against the bug's text.
pub fn vsm_rank(bug: &BugReport, corpus: &[(String, String)]) -> Result<VsmRanking, DataError> {
    let ranking = VsmModel::new(corpus)?.rank(&bug.query_text());
    if ranking.no_known_terms {
        log::warn!("bug {}: no query term occurs in the corpus; VSM ranking falls back to path order", bug.bug_id);
    }
    Ok(ranking)
}
