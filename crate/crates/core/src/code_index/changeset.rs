use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{digest, source_paths, CodeIndex, Grammar, IndexError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChangesetError {
    #[error("path `{0}` appears more than once in the changeset")]
    DuplicatePath(String),
}

/// Files added, modified, deleted or renamed between two versions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Changeset {
    #[serde(default)]
    pub added: BTreeSet<String>,
    #[serde(default)]
    pub modified: BTreeSet<String>,
    #[serde(default)]
    pub deleted: BTreeSet<String>,
    /// `(old_path, new_path)` pairs.
    #[serde(default)]
    pub renamed: Vec<(String, String)>,
}

impl Changeset {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.modified.is_empty() && self.deleted.is_empty() && self.renamed.is_empty()
    }

    /// Every path may be listed once across all four groups.
    pub fn validate(&self) -> Result<(), ChangesetError> {
        let mut seen = BTreeSet::new();
        let all = self
            .added
            .iter()
            .chain(&self.modified)
            .chain(&self.deleted)
            .chain(self.renamed.iter().flat_map(|(a, b)| [a, b]));
        for path in all {
            if !seen.insert(path) {
                return Err(ChangesetError::DuplicatePath(path.clone()));
            }
        }
        Ok(())
    }

    /// Paths whose content must be (re)read at the new version.
    pub fn touched_new_paths(&self) -> BTreeSet<&str> {
        self.added
            .iter()
            .chain(&self.modified)
            .map(String::as_str)
            .chain(self.renamed.iter().map(|(_, new)| new.as_str()))
            .collect()
    }

    /// Paths that no longer exist at the new version.
    pub fn removed_paths(&self) -> BTreeSet<&str> {
        self.deleted.iter().map(String::as_str).chain(self.renamed.iter().map(|(old, _)| old.as_str())).collect()
    }

    /// Diffs an index against the content digests of a newer tree.
    ///
    /// A deleted path whose digest reappears under a new path is reported as
    /// a rename; pairing is by sorted path order when digests collide.
    pub fn between(old: &CodeIndex, new_digests: &BTreeMap<String, String>) -> Self {
        let mut cs = Changeset::default();
        let mut deleted: BTreeMap<&str, &str> = BTreeMap::new();
        for f in old.files() {
            match new_digests.get(&f.fq_path) {
                None => {
                    deleted.insert(&f.fq_path, &f.digest);
                }
                Some(d) if *d != f.digest => {
                    cs.modified.insert(f.fq_path.clone());
                }
                Some(_) => {}
            }
        }
        let mut added_by_digest: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (path, d) in new_digests {
            if old.file(path).is_none() {
                added_by_digest.entry(d).or_default().push(path);
            }
        }
        for (old_path, d) in deleted {
            match added_by_digest.get_mut(d).filter(|v| !v.is_empty()) {
                Some(candidates) => {
                    let new_path = candidates.remove(0);
                    cs.renamed.push((old_path.to_string(), new_path.to_string()));
                }
                None => {
                    cs.deleted.insert(old_path.to_string());
                }
            }
        }
        cs.added = added_by_digest.into_values().flatten().map(str::to_string).collect();
        cs
    }

    /// Drops paths the grammar does not own; a rename across that boundary
    /// degrades to a plain add or delete.
    pub fn restricted_to(&self, grammar: &dyn Grammar) -> Self {
        let keep = |p: &String| grammar.accepts(p);
        let mut cs = Changeset {
            added: self.added.iter().filter(|p| keep(p)).cloned().collect(),
            modified: self.modified.iter().filter(|p| keep(p)).cloned().collect(),
            deleted: self.deleted.iter().filter(|p| keep(p)).cloned().collect(),
            renamed: Vec::new(),
        };
        for (old, new) in &self.renamed {
            match (keep(old), keep(new)) {
                (true, true) => cs.renamed.push((old.clone(), new.clone())),
                (true, false) => {
                    cs.deleted.insert(old.clone());
                }
                (false, true) => {
                    cs.added.insert(new.clone());
                }
                (false, false) => {}
            }
        }
        cs
    }
}

/// Content digests of every grammar-owned file under `repo_root`.
pub fn scan_digests(repo_root: &Path, grammar: &dyn Grammar) -> Result<BTreeMap<String, String>, IndexError> {
    let mut out = BTreeMap::new();
    for path in source_paths(repo_root, grammar)? {
        match fs::read(repo_root.join(&path)) {
            Ok(bytes) => {
                out.insert(path, digest(&bytes));
            }
            Err(e) => log::warn!("skipping unreadable file {path}: {e}"),
        }
    }
    Ok(out)
}
