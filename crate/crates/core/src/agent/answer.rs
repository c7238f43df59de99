use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One entry of the model's final ranked list, before verification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPrediction {
    pub fq_path_claim: String,
    pub justification: String,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnswerError {
    #[error("no ranked file list found in the answer")]
    NoList,
}

pub const ANSWER_FENCE: &str = "ranking";

/// Separators accepted between path and justification, longest first.
const SEPARATORS: [&str; 5] = [" — ", " – ", " -- ", " - ", ": "];

/// Lines inside the first ```ranking fence, or `None` if there is none.
fn fenced_lines(text: &str) -> Option<Vec<&str>> {
    let mut lines = text.lines();
    lines.by_ref().find(|l| {
        let t = l.trim_start();
        t.strip_prefix("```").is_some_and(|info| info.trim().eq_ignore_ascii_case(ANSWER_FENCE))
    })?;
    Some(lines.take_while(|l| !l.trim_start().starts_with("```")).collect())
}

/// `N. rest` or `N) rest`.
fn numbered(line: &str) -> Option<&str> {
    let line = line.trim();
    let digits = line.find(|c: char| !c.is_ascii_digit())?;
    if digits == 0 {
        return None;
    }
    let rest = line[digits..].strip_prefix(['.', ')'])?;
    rest.starts_with(char::is_whitespace).then(|| rest.trim())
}

fn split_entry(entry: &str) -> (String, String) {
    let cut = SEPARATORS.iter().filter_map(|s| entry.find(s).map(|i| (i, s.len()))).min_by_key(|(i, _)| *i);
    let (head, tail) = match cut {
        Some((i, len)) => (&entry[..i], entry[i + len..].trim()),
        None => (entry, ""),
    };
    let head = head.trim().trim_matches(|c| matches!(c, '`' | '*' | '"' | '\''));
    // A path has no spaces; anything after the first space is commentary.
    let (path, extra) = head.split_once(char::is_whitespace).unwrap_or((head, ""));
    let path = path.trim_matches(|c| matches!(c, '`' | '*' | '"' | '\''));
    let justification = [extra.trim(), tail].iter().filter(|s| !s.is_empty()).copied().collect::<Vec<_>>().join(" ");
    (path.to_string(), justification)
}

fn looks_like_path(s: &str) -> bool {
    s.contains('/')
        || s.rsplit_once('.').is_some_and(|(stem, ext)| {
            !stem.is_empty() && !ext.is_empty() && ext.chars().all(|c| c.is_ascii_alphanumeric())
        })
}

/// Extracts up to `limit` predictions from the model's final answer.
///
/// The answer should contain a fenced ```ranking block of lines
/// `N. path - justification`. Without the fence, numbered lines whose first
/// word looks like a file path are accepted. Repeated paths keep their
/// first position; ranks follow the order of emission.
pub fn parse_final_answer(text: &str, limit: usize) -> Result<Vec<RawPrediction>, AnswerError> {
    let (lines, strict) = match fenced_lines(text) {
        Some(lines) => (lines, false),
        None => (text.lines().collect(), true),
    };
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for line in lines {
        let Some(entry) = numbered(line) else { continue };
        let (path, justification) = split_entry(entry);
        if path.is_empty() || (strict && !looks_like_path(&path)) {
            continue;
        }
        if !seen.insert(path.clone()) {
            continue;
        }
        if out.len() == limit {
            break;
        }
        out.push(RawPrediction { fq_path_claim: path, justification, rank: out.len() + 1 });
    }
    if out.is_empty() {
        return Err(AnswerError::NoList);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(entries: &[&str]) -> String {
        let body: Vec<String> = entries.iter().enumerate().map(|(i, e)| format!("{}. {e}", i + 1)).collect();
        format!("Here is my answer.\n```ranking\n{}\n```\n", body.join("\n"))
    }

    #[test]
    fn ten_entries() {
        let entries: Vec<String> = (0..10).map(|i| format!("p/F{i}.java — reason {i}")).collect();
        let refs: Vec<&str> = entries.iter().map(String::as_str).collect();
        let got = parse_final_answer(&block(&refs), 10).unwrap();
        assert_eq!(got.len(), 10);
        assert_eq!(got.iter().map(|p| p.rank).collect::<Vec<_>>(), (1..=10).collect::<Vec<_>>());
        assert_eq!(got[3].fq_path_claim, "p/F3.java");
        assert_eq!(got[3].justification, "reason 3");
    }

    #[test]
    fn duplicates_collapse() {
        let got =
            parse_final_answer(&block(&["a/A.java — x", "b/B.java — y", "a/A.java — z", "c/C.java — w"]), 10).unwrap();
        let paths: Vec<_> = got.iter().map(|p| (p.fq_path_claim.as_str(), p.rank)).collect();
        assert_eq!(paths, vec![("a/A.java", 1), ("b/B.java", 2), ("c/C.java", 3)]);
    }

    #[test]
    fn prose_is_rejected() {
        assert_eq!(parse_final_answer("I think the bug is in the parser somewhere.", 10), Err(AnswerError::NoList));
        assert_eq!(parse_final_answer("1. First I read the report\n2. Then I searched", 10), Err(AnswerError::NoList));
    }

    #[test]
    fn separators_and_markup() {
        let got = parse_final_answer(
            &block(&[
                "`a/A.java` - dash",
                "**b/B.java**: colon",
                "c/C.java -- double",
                "d/D.java (see stack trace) — note",
                "e/E.java",
            ]),
            10,
        )
        .unwrap();
        let j: Vec<_> = got.iter().map(|p| (p.fq_path_claim.as_str(), p.justification.as_str())).collect();
        assert_eq!(
            j,
            vec![
                ("a/A.java", "dash"),
                ("b/B.java", "colon"),
                ("c/C.java", "double"),
                ("d/D.java", "(see stack trace) note"),
                ("e/E.java", ""),
            ]
        );
    }

    #[test]
    fn unfenced_numbered_paths_accepted_and_limit_applies() {
        let got = parse_final_answer("1. a/A.java — x\n2) B.java — y\n3. c/C.java", 2).unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(got[1].fq_path_claim, "B.java");
    }
}
