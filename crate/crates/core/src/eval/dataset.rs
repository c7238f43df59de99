use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::archive::write_atomic;

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.6;

/// A bug report, with the evaluation-only fields of a benchmark record.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugReport {
    pub bug_id: String,
    pub summary: String,
    #[serde(default)]
    pub description: String,
    /// Repository version the bug was reported against (before the fix).
    #[serde(default)]
    pub version_id: String,
    /// Files changed by the fix.
    #[serde(default)]
    pub ground_truth: BTreeSet<String>,
    /// Seconds since the Unix epoch.
    #[serde(default)]
    pub report_time: Option<i64>,
}

impl BugReport {
    /// Summary and description joined by a newline.
    pub fn query_text(&self) -> String {
        format!("{}\n{}", self.summary, self.description)
    }

    pub fn is_blank(&self) -> bool {
        self.summary.trim().is_empty() && self.description.trim().is_empty()
    }
}

/// Reads line-delimited JSON bug records. Blank lines are skipped.
pub fn load_dataset(path: &Path) -> Result<Vec<BugReport>, DataError> {
    let shown = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| DataError::Io { path: shown.clone(), source })?;
    let mut bugs = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bug: BugReport = serde_json::from_str(line).map_err(|e| DataError::Parse {
            path: shown.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(bug.bug_id.clone()) {
            return Err(DataError::DuplicateBugId(bug.bug_id));
        }
        bugs.push(bug);
    }
    Ok(bugs)
}

pub fn save_dataset(path: &Path, bugs: &[BugReport]) -> Result<(), DataError> {
    let mut out = Vec::new();
    for b in bugs {
        serde_json::to_writer(&mut out, b).expect("bug reports serialize");
        out.push(b'\n');
    }
    write_atomic(path, &out).map_err(|source| DataError::Io { path: path.display().to_string(), source })
}

/// Orders bugs by report time (ties by id) and splits off the oldest
/// `train_fraction` as history; the rest is the evaluation set.
///
/// The evaluation set holds `floor(n * (1 - train_fraction))` bugs, so a
/// 60/40 split of 593 bugs evaluates 237 of them.
pub fn split_chronological(
    bugs: &[BugReport],
    train_fraction: f64,
) -> Result<(Vec<BugReport>, Vec<BugReport>), DataError> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(DataError::BadFraction(train_fraction));
    }
    let mut sorted = Vec::with_capacity(bugs.len());
    for b in bugs {
        let t = b.report_time.ok_or_else(|| DataError::MissingTimestamp(b.bug_id.clone()))?;
        sorted.push((t, b));
    }
    sorted.sort_by(|(ta, a), (tb, b)| ta.cmp(tb).then_with(|| a.bug_id.cmp(&b.bug_id)));
    // tolerance absorbs binary rounding of fractions like 0.4
    let eval_count = ((sorted.len() as f64) * (1.0 - train_fraction) + 1e-9).floor() as usize;
    let cut = sorted.len() - eval_count.min(sorted.len());
    let mut historical: Vec<BugReport> = sorted.into_iter().map(|(_, b)| b.clone()).collect();
    let evaluation = historical.split_off(cut);
    Ok((historical, evaluation))
}

/// Converts a benchmark table (CSV, or TSV for `.tsv`/`.txt` files) in the
/// column layout of the widely used six-project Java benchmark into bug
/// records.
///
/// Recognized columns: `bug_id`, `summary`, `description`,
/// `report_timestamp` (epoch seconds) or `report_time`
/// (`YYYY-MM-DD HH:MM:SS`), `commit` (the fixing commit) and `files`
/// (whitespace-separated paths). The version is the fixing commit's parent,
/// `<commit>~1`.
pub fn ingest_benchmark_table(path: &Path) -> Result<Vec<BugReport>, DataError> {
    let shown = path.display().to_string();
    let tab = matches!(path.extension().and_then(|e| e.to_str()), Some("tsv") | Some("txt"));
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(if tab { b'\t' } else { b',' })
        .flexible(true)
        .from_path(path)
        .map_err(|e| DataError::Parse { path: shown.clone(), line: 0, message: e.to_string() })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| DataError::Parse { path: shown.clone(), line: 1, message: e.to_string() })?
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let bug_col = col("bug_id").ok_or_else(|| DataError::Parse {
        path: shown.clone(),
        line: 1,
        message: "missing `bug_id` column".to_string(),
    })?;
    let (summary_col, desc_col, ts_col, time_col, commit_col, files_col) =
        (col("summary"), col("description"), col("report_timestamp"), col("report_time"), col("commit"), col("files"));

    let mut bugs = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| DataError::Parse { path: shown.clone(), line, message: e.to_string() })?;
        let get = |c: Option<usize>| c.and_then(|c| row.get(c)).unwrap_or("").trim().to_string();
        let bug_id = get(Some(bug_col));
        if bug_id.is_empty() {
            continue;
        }
        let report_time = match get(ts_col).parse::<i64>() {
            Ok(t) => Some(t),
            Err(_) => parse_datetime(&get(time_col)),
        };
        let commit = get(commit_col);
        let bug = BugReport {
            summary: get(summary_col),
            description: get(desc_col),
            version_id: if commit.is_empty() { String::new() } else { format!("{commit}~1") },
            ground_truth: get(files_col).split_whitespace().map(str::to_string).collect(),
            report_time,
            bug_id,
        };
        if !seen.insert(bug.bug_id.clone()) {
            return Err(DataError::DuplicateBugId(bug.bug_id));
        }
        bugs.push(bug);
    }
    Ok(bugs)
}

/// `YYYY-MM-DD[ HH:MM[:SS]]` in UTC to epoch seconds.
fn parse_datetime(s: &str) -> Option<i64> {
    let (date, time) = match s.split_once([' ', 'T']) {
        Some((d, t)) => (d, t),
        None => (s, "00:00:00"),
    };
    let mut d = date.split('-').map(|p| p.parse::<i64>());
    let (y, m, day) = (d.next()?.ok()?, d.next()?.ok()?, d.next()?.ok()?);
    let mut t = time.trim_end_matches('Z').split(':').map(|p| p.parse::<i64>());
    let hh = t.next().and_then(Result::ok).unwrap_or(0);
    let mm = t.next().and_then(Result::ok).unwrap_or(0);
    let ss = t.next().and_then(Result::ok).unwrap_or(0);
    if !(1..=12).contains(&m) || !(1..=31).contains(&day) {
        return None;
    }
    // days from civil, proleptic Gregorian
    let y = if m <= 2 { y - 1 } else { y };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let mp = (m + 9) % 12;
    let doy = (153 * mp + 2) / 5 + day - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    let days = era * 146_097 + doe - 719_468;
    Some(days * 86_400 + hh * 3_600 + mm * 60 + ss)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bug(id: &str, t: i64) -> BugReport {
        BugReport { bug_id: id.into(), summary: "s".into(), report_time: Some(t), ..Default::default() }
    }

    #[test]
    fn ten_bugs_split_six_four() {
        let bugs: Vec<_> = (0..10).rev().map(|i| bug(&format!("b{i}"), i)).collect();
        let (hist, eval) = split_chronological(&bugs, 0.6).unwrap();
        assert_eq!((hist.len(), eval.len()), (6, 4));
        assert_eq!(hist[0].bug_id, "b0");
        assert_eq!(eval.iter().map(|b| b.bug_id.as_str()).collect::<Vec<_>>(), vec!["b6", "b7", "b8", "b9"]);
    }

    #[test]
    fn equal_timestamps_fall_back_to_id() {
        let bugs: Vec<_> = ["e", "a", "d", "b", "c"].iter().map(|id| bug(id, 7)).collect();
        let (hist, eval) = split_chronological(&bugs, 0.6).unwrap();
        assert_eq!(hist.iter().map(|b| b.bug_id.as_str()).collect::<Vec<_>>(), vec!["a", "b", "c"]);
        assert_eq!(eval.iter().map(|b| b.bug_id.as_str()).collect::<Vec<_>>(), vec!["d", "e"]);
    }

    #[test]
    fn missing_timestamp_is_an_error() {
        let mut b = bug("x", 0);
        b.report_time = None;
        assert!(matches!(split_chronological(&[b], 0.6), Err(DataError::MissingTimestamp(_))));
        assert!(matches!(split_chronological(&[], 1.5), Err(DataError::BadFraction(_))));
    }

    #[test]
    fn benchmark_scale_split() {
        // bug counts per project and the evaluation sizes of the 40% split
        let projects = [(593, 237), (4178, 1671), (6495, 2598), (6274, 2509), (4151, 1660), (1056, 422)];
        let mut total_eval = 0;
        for (n, expected) in projects {
            let bugs: Vec<_> = (0..n).map(|i| bug(&format!("{i:05}"), i as i64)).collect();
            let (_, eval) = split_chronological(&bugs, 0.6).unwrap();
            assert_eq!(eval.len(), expected);
            total_eval += eval.len();
        }
        assert_eq!(total_eval, 9097);
    }

    #[test]
    fn datetime_parsing() {
        assert_eq!(parse_datetime("1970-01-01 00:00:00"), Some(0));
        assert_eq!(parse_datetime("2002-03-31 17:19:00"), Some(1_017_595_140));
        assert_eq!(parse_datetime("2000-02-29"), Some(951_782_400));
        assert_eq!(parse_datetime("nonsense"), None);
    }

    #[test]
    fn jsonl_roundtrip_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let bugs = vec![bug("1", 5), bug("2", 3)];
        save_dataset(&path, &bugs).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), bugs);
        fs::write(
            &path,
            format!("{}\n\n{}\n", serde_json::to_string(&bugs[0]).unwrap(), serde_json::to_string(&bugs[0]).unwrap()),
        )
        .unwrap();
        assert!(matches!(load_dataset(&path), Err(DataError::DuplicateBugId(_))));
        fs::write(&path, "{not json}\n").unwrap();
        assert!(matches!(load_dataset(&path), Err(DataError::Parse { line: 1, .. })));
    }

    #[test]
    fn ingest_tsv_table() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("Tomcat.tsv");
        fs::write(
            &path,
            "id\tbug_id\tsummary\tdescription\treport_time\treport_timestamp\tstatus\tcommit\tcommit_timestamp\tfiles\n\
             1\t55125\tTomcat does not shut down\tLifecycleListener throws\t2013-06-20 10:00:00\t1371722400\tresolved fixed\tabc123\t1371800000\tjava/org/apache/catalina/startup/Catalina.java\n\
             2\t55126\tOther\t\t2013-06-21 10:00:00\t\tresolved fixed\tdef456\t0\ta/B.java c/D.java\n",
        )
        .unwrap();
        let bugs = ingest_benchmark_table(&path).unwrap();
        assert_eq!(bugs.len(), 2);
        assert_eq!(bugs[0].bug_id, "55125");
        assert_eq!(bugs[0].version_id, "abc123~1");
        assert_eq!(bugs[0].report_time, Some(1_371_722_400));
        assert_eq!(bugs[0].ground_truth.len(), 1);
        assert_eq!(bugs[1].report_time, parse_datetime("2013-06-21 10:00:00"));
        assert_eq!(bugs[1].ground_truth.len(), 2);
    }
}
