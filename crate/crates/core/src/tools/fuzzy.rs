use serde::{Deserialize, Serialize};

use crate::code_index::CodeIndex;

pub const DEFAULT_FUZZY_CANDIDATES: usize = 5;

/// Optimal string alignment distance: insertions, deletions, substitutions
/// and transpositions of adjacent characters, with no substring edited more
/// than once. Counted in chars.
pub fn damerau_levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (n, m) = (a.len(), b.len());
    // Three rolling rows: i-2, i-1, i.
    let mut prev2 = vec![0usize; m + 1];
    let mut prev: Vec<usize> = (0..=m).collect();
    let mut cur = vec![0usize; m + 1];
    for i in 1..=n {
        cur[0] = i;
        for j in 1..=m {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            let mut d = (prev[j] + 1).min(cur[j - 1] + 1).min(prev[j - 1] + cost);
            if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                d = d.min(prev2[j - 2] + 1);
            }
            cur[j] = d;
        }
        std::mem::swap(&mut prev2, &mut prev);
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

/// Default distance cap for a query: `max(2, ceil(chars / 4))`.
pub fn default_cap(query: &str) -> usize {
    query.chars().count().div_ceil(4).max(2)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FuzzyCandidate {
    pub name: String,
    pub fq_path: String,
    pub distance: usize,
}

/// Nearest `(name, distance)` pairs among `names` within `cap`, by distance
/// then name.
pub fn nearest_names<'a>(query: &str, names: impl IntoIterator<Item = &'a str>, cap: usize) -> Vec<(&'a str, usize)> {
    let qlen = query.chars().count();
    let mut out: Vec<(&str, usize)> = names
        .into_iter()
        .filter(|n| n.chars().count().abs_diff(qlen) <= cap)
        .map(|n| (n, damerau_levenshtein(query, n)))
        .filter(|(_, d)| *d <= cap)
        .collect();
    out.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(b.0)));
    out.dedup();
    out
}

/// Every indexed `(method, file)` whose name is within `cap` edits of
/// `query`, sorted by distance, name, then path, truncated to `n`.
pub fn fuzzy_method_candidates(query: &str, index: &CodeIndex, n: usize, cap: Option<usize>) -> Vec<FuzzyCandidate> {
    let cap = cap.unwrap_or_else(|| default_cap(query));
    let mut out = Vec::new();
    for (name, distance) in nearest_names(query, index.method_locator().keys().map(String::as_str), cap) {
        for path in &index.method_locator()[name] {
            if out.len() == n {
                return out;
            }
            out.push(FuzzyCandidate { name: name.to_string(), fq_path: path.clone(), distance });
        }
    }
    out
}
