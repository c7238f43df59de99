use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::MetricError;

/// Fixed files per bug id.
pub type GroundTruths = HashMap<String, BTreeSet<String>>;

/// One technique's ranked answer for one bug in one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalizationResult {
    pub bug_id: String,
    pub technique: String,
    pub run_id: u32,
    pub ranked_paths: Vec<String>,
    /// 1-based rank of the first ground-truth file, if any.
    pub first_hit_rank: Option<usize>,
    /// Set when the pipeline failed for this bug; `ranked_paths` is empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl LocalizationResult {
    /// Builds a result, dropping repeated paths (first occurrence wins) and
    /// keeping at most `limit` paths.
    pub fn new(
        bug_id: impl Into<String>,
        technique: impl Into<String>,
        run_id: u32,
        ranked_paths: impl IntoIterator<Item = String>,
        limit: usize,
        ground_truth: &BTreeSet<String>,
    ) -> Self {
        let mut seen = HashSet::new();
        let ranked_paths: Vec<String> =
            ranked_paths.into_iter().filter(|p| seen.insert(p.clone())).take(limit).collect();
        let first_hit_rank = first_hit_rank(&ranked_paths, ground_truth);
        Self { bug_id: bug_id.into(), technique: technique.into(), run_id, ranked_paths, first_hit_rank, failure: None }
    }

    pub fn failed(
        bug_id: impl Into<String>,
        technique: impl Into<String>,
        run_id: u32,
        reason: impl Into<String>,
    ) -> Self {
        Self {
            bug_id: bug_id.into(),
            technique: technique.into(),
            run_id,
            ranked_paths: Vec::new(),
            first_hit_rank: None,
            failure: Some(reason.into()),
        }
    }

    /// Hit within the top `k`.
    pub fn hit_at(&self, k: usize) -> bool {
        self.first_hit_rank.is_some_and(|r| r <= k)
    }
}

pub fn first_hit_rank(ranked: &[String], ground_truth: &BTreeSet<String>) -> Option<usize> {
    ranked.iter().position(|p| ground_truth.contains(p)).map(|i| i + 1)
}

fn truth<'a>(gts: &'a GroundTruths, bug_id: &str) -> Result<&'a BTreeSet<String>, MetricError> {
    gts.get(bug_id).ok_or_else(|| MetricError::MissingGroundTruth(bug_id.to_string()))
}

fn check(results: &[LocalizationResult], k: usize) -> Result<(), MetricError> {
    if k == 0 {
        return Err(MetricError::InvalidK);
    }
    if results.is_empty() {
        return Err(MetricError::EmptyResults);
    }
    Ok(())
}

/// Share of bugs with a ground-truth file in the top `k`.
pub fn accuracy_at_k(results: &[LocalizationResult], gts: &GroundTruths, k: usize) -> Result<f64, MetricError> {
    check(results, k)?;
    let mut hits = 0usize;
    for r in results {
        if first_hit_rank(&r.ranked_paths, truth(gts, &r.bug_id)?).is_some_and(|rank| rank <= k) {
            hits += 1;
        }
    }
    Ok(hits as f64 / results.len() as f64)
}

/// Mean over bugs of `1/rank` of the first hit, counting 0 when the first
/// hit is below `k` or missing.
pub fn mrr_at_k(results: &[LocalizationResult], gts: &GroundTruths, k: usize) -> Result<f64, MetricError> {
    check(results, k)?;
    let mut sum = 0.0;
    for r in results {
        if let Some(rank) = first_hit_rank(&r.ranked_paths, truth(gts, &r.bug_id)?) {
            if rank <= k {
                sum += 1.0 / rank as f64;
            }
        }
    }
    Ok(sum / results.len() as f64)
}

/// Average precision over the top `k`, normalized by the total number of
/// relevant files (not only those retrieved).
pub fn average_precision(ranked: &[String], ground_truth: &BTreeSet<String>, k: usize) -> f64 {
    let mut relevant_seen = 0usize;
    let mut sum = 0.0;
    for (j, path) in ranked.iter().take(k).enumerate() {
        if ground_truth.contains(path) {
            relevant_seen += 1;
            sum += relevant_seen as f64 / (j + 1) as f64;
        }
    }
    sum / ground_truth.len() as f64
}

/// Mean of per-bug average precision at `k`.
pub fn map_at_k(results: &[LocalizationResult], gts: &GroundTruths, k: usize) -> Result<f64, MetricError> {
    check(results, k)?;
    let mut sum = 0.0;
    for r in results {
        let gt = truth(gts, &r.bug_id)?;
        if gt.is_empty() {
            return Err(MetricError::EmptyGroundTruth(r.bug_id.clone()));
        }
        sum += average_precision(&r.ranked_paths, gt, k);
    }
    Ok(sum / results.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt(files: &[&str]) -> BTreeSet<String> {
        files.iter().map(|s| s.to_string()).collect()
    }

    /// One bug whose first hit sits at `rank` (None = miss), padded to 10.
    fn at_rank(id: &str, rank: Option<usize>) -> (LocalizationResult, BTreeSet<String>) {
        let truth = gt(&["HIT"]);
        let ranked = (1..=10).map(|i| if Some(i) == rank { "HIT".to_string() } else { format!("f{i}") });
        (LocalizationResult::new(id, "t", 0, ranked, 10, &truth), truth)
    }

    fn fixture(ranks: &[Option<usize>]) -> (Vec<LocalizationResult>, GroundTruths) {
        let mut results = Vec::new();
        let mut gts = GroundTruths::new();
        for (i, r) in ranks.iter().enumerate() {
            let (res, truth) = at_rank(&i.to_string(), *r);
            gts.insert(res.bug_id.clone(), truth);
            results.push(res);
        }
        (results, gts)
    }

    #[test]
    fn accuracy_examples() {
        let (r, g) = fixture(&[Some(1), Some(1)]);
        for k in [1, 5, 10] {
            assert_eq!(accuracy_at_k(&r, &g, k).unwrap(), 1.0);
        }
        let (r, g) = fixture(&[Some(1), None, Some(4)]);
        assert_eq!(accuracy_at_k(&r, &g, 5).unwrap(), 2.0 / 3.0);
        assert_eq!(accuracy_at_k(&r, &g, 1).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn mrr_examples() {
        let (r, g) = fixture(&[Some(5)]);
        assert_eq!(mrr_at_k(&r, &g, 10).unwrap(), 0.2);
        let (r, g) = fixture(&[None]);
        assert_eq!(mrr_at_k(&r, &g, 10).unwrap(), 0.0);
        let (r, g) = fixture(&[Some(1), None, Some(4)]);
        assert!((mrr_at_k(&r, &g, 10).unwrap() - 1.25 / 3.0).abs() < 1e-15);
        let (r, g) = fixture(&[Some(7)]);
        assert_eq!(mrr_at_k(&r, &g, 5).unwrap(), 0.0);
    }

    #[test]
    fn average_precision_examples() {
        let ranked: Vec<String> = ["A", "x", "B", "y"].iter().map(|s| s.to_string()).collect();
        assert_eq!(average_precision(&ranked, &gt(&["A"]), 10), 1.0);
        assert!((average_precision(&ranked, &gt(&["A", "B"]), 10) - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        let ranked: Vec<String> = ["x", "A"].iter().map(|s| s.to_string()).collect();
        assert_eq!(average_precision(&ranked, &gt(&["A", "OUTSIDE"]), 10), 0.25);
    }

    #[test]
    fn errors() {
        let (r, mut g) = fixture(&[Some(1)]);
        assert!(matches!(accuracy_at_k(&[], &g, 1), Err(MetricError::EmptyResults)));
        assert!(matches!(mrr_at_k(&r, &g, 0), Err(MetricError::InvalidK)));
        g.insert("0".into(), BTreeSet::new());
        assert!(matches!(map_at_k(&r, &g, 10), Err(MetricError::EmptyGroundTruth(_))));
        assert!(matches!(map_at_k(&r, &GroundTruths::new(), 10), Err(MetricError::MissingGroundTruth(_))));
    }

    #[test]
    fn result_construction_dedupes_and_truncates() {
        let truth = gt(&["b"]);
        let r = LocalizationResult::new("1", "t", 0, ["a", "a", "c", "b", "d"].map(String::from), 3, &truth);
        assert_eq!(r.ranked_paths, vec!["a", "c", "b"]);
        assert_eq!(r.first_hit_rank, Some(3));
        assert!(r.hit_at(3) && !r.hit_at(2));
    }

    proptest::proptest! {
        #[test]
        fn metrics_are_bounded_and_monotone_in_k(ranks in proptest::collection::vec(proptest::option::of(1usize..=10), 1..8)) {
            let (results, gts) = fixture(&ranks);
            let mut prev = (0.0, 0.0, 0.0);
            for k in 1..=10 {
                let acc = accuracy_at_k(&results, &gts, k).unwrap();
                let mrr = mrr_at_k(&results, &gts, k).unwrap();
                let map = map_at_k(&results, &gts, k).unwrap();
                // one relevant file per bug, so MAP equals MRR here
                proptest::prop_assert!((map - mrr).abs() < 1e-12);
                proptest::prop_assert!((0.0..=1.0).contains(&acc) && mrr <= acc);
                proptest::prop_assert!(acc >= prev.0 && mrr >= prev.1 && map >= prev.2);
                prev = (acc, mrr, map);
            }
        }
    }
}
