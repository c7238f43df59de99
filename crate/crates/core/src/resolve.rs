//! Maps the model's claimed file paths onto files that exist in the index.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::agent::RawPrediction;
use crate::code_index::{basename, CodeIndex, SourceFileRecord};
use crate::text::split_identifier;

pub const DEFAULT_FINAL_LIST_SIZE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    Exact,
    BasenameJaccard,
    DroppedExcluded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedPrediction {
    /// The indexed path; for dropped entries, the normalized claim.
    pub fq_path: String,
    pub rank: usize,
    pub resolution: Resolution,
    pub justification: String,
    /// The path as the model wrote it.
    pub claim: String,
    /// Path-token Jaccard score for basename matches.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
}

/// Surviving predictions ranked `1..`, plus everything that was removed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResolvedList {
    pub kept: Vec<ResolvedPrediction>,
    /// Claims with no matching file (rank is the raw rank), and claims that
    /// resolved to a path already kept at a better rank.
    pub dropped: Vec<ResolvedPrediction>,
}

impl ResolvedList {
    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.kept.iter().map(|p| p.fq_path.as_str())
    }
}

/// `|a ∩ b| / |a ∪ b|`; two empty sets count as identical (1.0).
pub fn jaccard_similarity<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    inter as f64 / (a.len() + b.len() - inter) as f64
}

/// Lowercased path tokens: split on `/` and `.`, then on camelCase and `_`.
pub fn path_tokens(path: &str) -> BTreeSet<String> {
    path.split(['/', '.']).flat_map(split_identifier).collect()
}

/// Strips quoting and markup the model may wrap around a path.
fn normalize_claim(claim: &str) -> String {
    let trimmed = claim.trim().trim_matches(|c| matches!(c, '`' | '"' | '\'' | '*' | '<' | '>'));
    let slashed = trimmed.replace('\\', "/");
    let mut path = slashed.as_str();
    while let Some(rest) = path.strip_prefix("./").or_else(|| path.strip_prefix('/')) {
        path = rest;
    }
    path.to_string()
}

/// Same-name files for a claim: by basename, else for a dotted name such as
/// `org.foo.Bar`, files whose name without extension is `Bar`.
fn same_name_files<'a>(index: &'a CodeIndex, claim: &str) -> Vec<&'a SourceFileRecord> {
    let base = basename(claim);
    let found: Vec<_> = index.files_with_basename(base).collect();
    if !found.is_empty() || claim.contains('/') {
        return found;
    }
    let stem = base.rsplit('.').next().unwrap_or(base);
    index.files().filter(|f| f.basename.split('.').next() == Some(stem)).collect()
}

/// Verifies each claim against `index`, keeping at most `limit` files in
/// the model's order.
pub fn resolve_predictions(raw: &[RawPrediction], index: &CodeIndex, limit: usize) -> ResolvedList {
    let mut out = ResolvedList::default();
    let mut seen = HashSet::new();
    let mut ordered: Vec<&RawPrediction> = raw.iter().collect();
    ordered.sort_by_key(|p| p.rank);
    for p in ordered {
        let claim = normalize_claim(&p.fq_path_claim);
        let mut entry = ResolvedPrediction {
            fq_path: claim.clone(),
            rank: p.rank,
            resolution: Resolution::DroppedExcluded,
            justification: p.justification.clone(),
            claim: p.fq_path_claim.clone(),
            similarity: None,
        };
        if index.file(&claim).is_some() {
            entry.resolution = Resolution::Exact;
        } else {
            let claim_tokens = path_tokens(&claim);
            let best = same_name_files(index, &claim)
                .into_iter()
                .map(|f| (jaccard_similarity(&claim_tokens, &path_tokens(&f.fq_path)), &f.fq_path))
                // Highest score; among equals the smallest path.
                .max_by(|a, b| a.0.total_cmp(&b.0).then_with(|| b.1.cmp(a.1)));
            if let Some((score, path)) = best {
                entry.fq_path = path.clone();
                entry.resolution = Resolution::BasenameJaccard;
                entry.similarity = Some(score);
            }
        }
        if entry.resolution == Resolution::DroppedExcluded || !seen.insert(entry.fq_path.clone()) {
            out.dropped.push(entry);
            continue;
        }
        if out.kept.len() == limit {
            break;
        }
        entry.rank = out.kept.len() + 1;
        out.kept.push(entry);
    }
    out
}
