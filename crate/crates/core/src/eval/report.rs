use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{accuracy_at_k, map_at_k, mrr_at_k, GroundTruths, LocalizationResult, MetricError, OverlapCounts};
use crate::archive::write_atomic;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
const ACCURACY_KS: [usize; 3] = [1, 5, 10];

/// Which requested bugs produced a ranked list.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    pub requested: usize,
    pub completed: usize,
    /// `bug_id` (and run) of every failure.
    pub failed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub technique: String,
    pub runs: usize,
    pub accuracy_at: BTreeMap<usize, f64>,
    pub mrr_at_10: f64,
    pub map_at_10: f64,
    pub coverage: Coverage,
    pub per_bug: Vec<LocalizationResult>,
}

impl EvalReport {
    /// Scores one run's results. Failed bugs count as misses.
    pub fn compute(
        technique: impl Into<String>,
        results: Vec<LocalizationResult>,
        gts: &GroundTruths,
    ) -> Result<Self, MetricError> {
        let mut accuracy_at = BTreeMap::new();
        for k in ACCURACY_KS {
            accuracy_at.insert(k, accuracy_at_k(&results, gts, k)?);
        }
        let failed: Vec<String> =
            results.iter().filter(|r| r.failure.is_some()).map(|r| format!("{}#{}", r.bug_id, r.run_id)).collect();
        Ok(Self {
            schema_version: REPORT_SCHEMA_VERSION,
            technique: technique.into(),
            runs: 1,
            mrr_at_10: mrr_at_k(&results, gts, 10)?,
            map_at_10: map_at_k(&results, gts, 10)?,
            coverage: Coverage { requested: results.len(), completed: results.len() - failed.len(), failed },
            accuracy_at,
            per_bug: results,
        })
    }

    fn bug_set(&self) -> BTreeSet<&str> {
        self.per_bug.iter().map(|r| r.bug_id.as_str()).collect()
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self).map_err(std::io::Error::other)?;
        bytes.push(b'\n');
        write_atomic(path, &bytes)
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

/// Averages each metric over per-run reports of one technique; per-bug
/// results of every run are kept.
pub fn aggregate_runs(reports: &[EvalReport]) -> Result<EvalReport, MetricError> {
    let first = reports.first().ok_or(MetricError::EmptyResults)?;
    let bugs = first.bug_set();
    if reports.iter().any(|r| r.bug_set() != bugs) {
        return Err(MetricError::MismatchedBugSets);
    }
    let n = reports.len() as f64;
    let mean = |f: &dyn Fn(&EvalReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let accuracy_at = first
        .accuracy_at
        .keys()
        .map(|k| (*k, mean(&|r: &EvalReport| r.accuracy_at.get(k).copied().unwrap_or(0.0))))
        .collect();
    let mut coverage = Coverage::default();
    for r in reports {
        coverage.requested += r.coverage.requested;
        coverage.completed += r.coverage.completed;
        coverage.failed.extend(r.coverage.failed.iter().cloned());
    }
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        technique: first.technique.clone(),
        runs: reports.iter().map(|r| r.runs).sum(),
        accuracy_at,
        mrr_at_10: mean(&|r: &EvalReport| r.mrr_at_10),
        map_at_10: mean(&|r: &EvalReport| r.map_at_10),
        coverage,
        per_bug: reports.iter().flat_map(|r| r.per_bug.iter().cloned()).collect(),
    })
}

/// Plain-text table: technique, Accuracy@1/5/10 in percent, MAP@10, MRR@10.
pub fn render_table(reports: &[EvalReport]) -> String {
    let width = reports.iter().map(|r| r.technique.len()).max().unwrap_or(0).max("Technique".len());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>8}  {:>8}  {:>8}  {:>7}  {:>7}",
        "Technique", "Acc@1%", "Acc@5%", "Acc@10%", "MAP@10", "MRR@10"
    );
    for r in reports {
        let acc = |k| r.accuracy_at.get(&k).copied().unwrap_or(0.0) * 100.0;
        let _ = writeln!(
            out,
            "{:<width$}  {:>8.2}  {:>8.2}  {:>8.2}  {:>7.2}  {:>7.2}",
            r.technique,
            acc(1),
            acc(5),
            acc(10),
            r.map_at_10,
            r.mrr_at_10
        );
    }
    out
}

/// Plain-text overlap table: localized, overlapping and unique bug counts.
pub fn render_overlap_table(counts: &BTreeMap<String, OverlapCounts>) -> String {
    let width = counts.keys().map(String::len).max().unwrap_or(0).max("Technique".len());
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>9}  {:>11}  {:>6}", "Technique", "Localized", "Overlapping", "Unique");
    for (t, c) in counts {
        let _ = writeln!(out, "{:<width$}  {:>9}  {:>11}  {:>6}", t, c.localized, c.overlapping, c.unique);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(acc1: f64, bugs: &[&str]) -> EvalReport {
        EvalReport {
            schema_version: REPORT_SCHEMA_VERSION,
            technique: "t".into(),
            runs: 1,
            accuracy_at: [(1, acc1), (5, acc1), (10, acc1)].into(),
            mrr_at_10: acc1,
            map_at_10: acc1,
            coverage: Coverage { requested: bugs.len(), completed: bugs.len(), failed: vec![] },
            per_bug: bugs.iter().map(|b| LocalizationResult::failed(*b, "t", 0, "x")).collect(),
        }
    }

    #[test]
    fn mean_of_runs() {
        let agg = aggregate_runs(&[report(0.4, &["a"]), report(0.5, &["a"]), report(0.6, &["a"])]).unwrap();
        assert!((agg.accuracy_at[&1] - 0.5).abs() < 1e-15);
        assert_eq!(agg.runs, 3);
        assert_eq!(agg.per_bug.len(), 3);
    }

    #[test]
    fn identical_runs_aggregate_to_themselves() {
        let r = report(0.25, &["a", "b"]);
        let agg = aggregate_runs(&[r.clone(), r.clone()]).unwrap();
        assert_eq!(agg.accuracy_at, r.accuracy_at);
        assert_eq!(agg.mrr_at_10, r.mrr_at_10);
    }

    #[test]
    fn mismatched_bug_sets_rejected() {
        assert!(matches!(
            aggregate_runs(&[report(0.1, &["a"]), report(0.1, &["b"])]),
            Err(MetricError::MismatchedBugSets)
        ));
        assert!(matches!(aggregate_runs(&[]), Err(MetricError::EmptyResults)));
    }

    #[test]
    fn table_has_one_row_per_technique() {
        let t = render_table(&[report(0.4319, &["a"])]);
        assert_eq!(t.lines().count(), 2);
        assert!(t.contains("43.19"));
    }
}
