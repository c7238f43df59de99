use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{LocalizationResult, MetricError};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapCounts {
    pub localized: usize,
    pub overlapping: usize,
    pub unique: usize,
}

/// Per technique: bugs localized within the top `k` in at least one run,
/// how many of those another technique also localized, and how many only
/// this technique did.
pub fn overlap_analysis(
    per_technique: &BTreeMap<String, Vec<LocalizationResult>>,
    k: usize,
) -> Result<BTreeMap<String, OverlapCounts>, MetricError> {
    if per_technique.len() < 2 {
        return Err(MetricError::TooFewTechniques(per_technique.len()));
    }
    if k == 0 {
        return Err(MetricError::InvalidK);
    }
    let localized: BTreeMap<&str, BTreeSet<&str>> = per_technique
        .iter()
        .map(|(t, results)| (t.as_str(), results.iter().filter(|r| r.hit_at(k)).map(|r| r.bug_id.as_str()).collect()))
        .collect();
    let mut out = BTreeMap::new();
    for (t, hits) in &localized {
        let others: BTreeSet<&str> =
            localized.iter().filter(|(o, _)| *o != t).flat_map(|(_, h)| h.iter().copied()).collect();
        let unique = hits.difference(&others).count();
        out.insert(t.to_string(), OverlapCounts { localized: hits.len(), overlapping: hits.len() - unique, unique });
    }
    Ok(out)
}
