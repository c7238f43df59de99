//! Versioned model of a source repository: files, method signatures and
//! method bodies, with incremental updates between versions.

mod changeset;
mod grammar;
mod repo;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use walkdir::WalkDir;

use crate::archive::{self, ArchiveError, ArchiveKind};

pub use changeset::{scan_digests, Changeset, ChangesetError};
pub use grammar::{grammar_for, Grammar, JavaGrammar, ParseOutcome};
pub use repo::{RepoError, RepoSource};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("repository root {0} does not exist or is not a directory")]
    MissingRepoRoot(PathBuf),
    #[error("unsupported grammar `{0}`")]
    UnsupportedGrammar(String),
    #[error("failed to walk {path}: {message}")]
    Walk { path: PathBuf, message: String },
    #[error("invalid changeset: {0}")]
    Changeset(#[from] ChangesetError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
}

/// A method, constructor or compact constructor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodRecord {
    pub name: String,
    /// `name(ParamType1,ParamType2)`, parameter types with whitespace removed.
    pub signature: String,
    /// Verbatim block text including braces; empty when `has_body` is false.
    pub body: String,
    /// False for abstract and interface methods.
    pub has_body: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFileRecord {
    pub fq_path: String,
    pub basename: String,
    pub methods: Vec<MethodRecord>,
    pub parse_ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
    /// SHA-256 of the raw file bytes, used to detect modifications.
    pub digest: String,
}

impl SourceFileRecord {
    pub fn parse(fq_path: &str, bytes: &[u8], grammar: &dyn Grammar) -> Self {
        let source = String::from_utf8_lossy(bytes);
        let (methods, parse_ok, parse_error) = match grammar.parse(&source) {
            ParseOutcome::Parsed(methods) => (methods, true, None),
            ParseOutcome::Failed(reason) => (Vec::new(), false, Some(reason)),
        };
        Self {
            fq_path: fq_path.to_string(),
            basename: basename(fq_path).to_string(),
            methods,
            parse_ok,
            parse_error,
            digest: digest(bytes),
        }
    }
}

/// Final `/`-separated segment of a path.
pub fn basename(path: &str) -> &str {
    path.rsplit('/').next().unwrap_or(path)
}

pub(crate) fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// The text a file is embedded as: its path, then each method body on its
/// own line, in source order.
pub fn file_representation(file: &SourceFileRecord) -> String {
    let mut out = file.fq_path.clone();
    for m in &file.methods {
        out.push('\n');
        out.push_str(&m.body);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeIndex {
    version_id: String,
    grammar: String,
    files: BTreeMap<String, Arc<SourceFileRecord>>,
    method_locator: BTreeMap<String, BTreeSet<String>>,
}

/// A changeset path that could not be applied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathError {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct UpdateOutcome {
    pub index: CodeIndex,
    pub errors: Vec<PathError>,
}

const CODE_ARCHIVE: ArchiveKind = ArchiveKind { magic: "BUGLOC-CODE-INDEX", version: 1 };

#[derive(Debug, Serialize, Deserialize)]
struct CodeManifest {
    version_id: String,
    grammar: String,
    file_count: usize,
}

impl CodeIndex {
    pub fn empty(version_id: impl Into<String>, grammar: impl Into<String>) -> Self {
        Self {
            version_id: version_id.into(),
            grammar: grammar.into(),
            files: BTreeMap::new(),
            method_locator: BTreeMap::new(),
        }
    }

    /// Assembles an index from file records, deriving the method locator.
    pub fn from_records(
        version_id: impl Into<String>,
        grammar: impl Into<String>,
        records: impl IntoIterator<Item = SourceFileRecord>,
    ) -> Self {
        let mut index = Self::empty(version_id, grammar);
        for record in records {
            index.insert(Arc::new(record));
        }
        index
    }

    pub fn version_id(&self) -> &str {
        &self.version_id
    }

    pub fn grammar(&self) -> &str {
        &self.grammar
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    pub fn file(&self, fq_path: &str) -> Option<&SourceFileRecord> {
        self.files.get(fq_path).map(Arc::as_ref)
    }

    /// Shared handle to a record, for callers checking reuse across versions.
    pub fn file_arc(&self, fq_path: &str) -> Option<&Arc<SourceFileRecord>> {
        self.files.get(fq_path)
    }

    /// Files in path order.
    pub fn files(&self) -> impl Iterator<Item = &SourceFileRecord> {
        self.files.values().map(Arc::as_ref)
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.files.keys().map(String::as_str)
    }

    /// Paths of files defining a method called `name`.
    pub fn files_defining(&self, name: &str) -> Option<&BTreeSet<String>> {
        self.method_locator.get(name)
    }

    /// All method names with the files defining them, in name order.
    pub fn method_locator(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.method_locator
    }

    /// Files whose basename equals `name`, in path order.
    pub fn files_with_basename(&self, name: &str) -> impl Iterator<Item = &SourceFileRecord> + use<'_> {
        let name = name.to_string();
        self.files().filter(move |f| f.basename == name)
    }

    fn insert(&mut self, record: Arc<SourceFileRecord>) {
        self.remove(&record.fq_path.clone());
        for m in &record.methods {
            self.method_locator.entry(m.name.clone()).or_default().insert(record.fq_path.clone());
        }
        self.files.insert(record.fq_path.clone(), record);
    }

    fn remove(&mut self, fq_path: &str) -> Option<Arc<SourceFileRecord>> {
        let record = self.files.remove(fq_path)?;
        for m in &record.methods {
            if let Some(paths) = self.method_locator.get_mut(&m.name) {
                paths.remove(fq_path);
                if paths.is_empty() {
                    self.method_locator.remove(&m.name);
                }
            }
        }
        Some(record)
    }

    /// Recomputes the method locator from the file records alone.
    pub fn derived_locator(&self) -> BTreeMap<String, BTreeSet<String>> {
        let mut locator: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for f in self.files() {
            for m in &f.methods {
                locator.entry(m.name.clone()).or_default().insert(f.fq_path.clone());
            }
        }
        locator
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let manifest = CodeManifest {
            version_id: self.version_id.clone(),
            grammar: self.grammar.clone(),
            file_count: self.files.len(),
        };
        archive::write(path, CODE_ARCHIVE, &manifest, self.files.values().map(Arc::as_ref))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let (manifest, records): (CodeManifest, Vec<SourceFileRecord>) =
            archive::read(path, CODE_ARCHIVE, |m: &CodeManifest| m.file_count)?;
        Ok(Self::from_records(manifest.version_id, manifest.grammar, records))
    }
}

/// Repository-relative, `/`-separated paths of every file the grammar owns.
pub(crate) fn source_paths(repo_root: &Path, grammar: &dyn Grammar) -> Result<Vec<String>, IndexError> {
    if !repo_root.is_dir() {
        return Err(IndexError::MissingRepoRoot(repo_root.to_path_buf()));
    }
    let mut paths = Vec::new();
    let walker = WalkDir::new(repo_root)
        .follow_links(false)
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || !e.file_name().to_string_lossy().starts_with('.'));
    for entry in walker {
        let entry = entry.map_err(|e| IndexError::Walk { path: repo_root.to_path_buf(), message: e.to_string() })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(repo_root).unwrap_or(entry.path());
        let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        if grammar.accepts(&rel) {
            paths.push(rel);
        }
    }
    paths.sort();
    Ok(paths)
}

fn parse_path(repo_root: &Path, fq_path: &str, grammar: &dyn Grammar) -> std::io::Result<SourceFileRecord> {
    let bytes = fs::read(repo_root.join(fq_path))?;
    Ok(SourceFileRecord::parse(fq_path, &bytes, grammar))
}

/// Parses every file under `repo_root` owned by `grammar`.
///
/// Files that fail to parse are kept with `parse_ok = false`; files that
/// cannot be read at all are skipped with a warning.
pub fn build_index(repo_root: &Path, grammar: &dyn Grammar, version_id: &str) -> Result<CodeIndex, IndexError> {
    let paths = source_paths(repo_root, grammar)?;
    let records: Vec<_> = paths
        .par_iter()
        .filter_map(|p| match parse_path(repo_root, p, grammar) {
            Ok(r) => Some(r),
            Err(e) => {
                log::warn!("skipping unreadable file {p}: {e}");
                None
            }
        })
        .collect();
    Ok(CodeIndex::from_records(version_id, grammar.id(), records))
}

/// Applies `changeset` to `index`, re-parsing only touched files.
///
/// Records of untouched files are shared with the input index. A path listed
/// as added or modified that is missing on disk is reported in
/// [`UpdateOutcome::errors`] and left out of the result.
pub fn update_index(
    index: &CodeIndex,
    changeset: &Changeset,
    repo_root: &Path,
    grammar: &dyn Grammar,
    new_version: &str,
) -> Result<UpdateOutcome, IndexError> {
    if !repo_root.is_dir() {
        return Err(IndexError::MissingRepoRoot(repo_root.to_path_buf()));
    }
    changeset.validate()?;
    let mut next = index.clone();
    next.version_id = new_version.to_string();
    for path in &changeset.deleted {
        next.remove(path);
    }
    let mut to_parse: Vec<&str> = Vec::new();
    for (old, new) in &changeset.renamed {
        next.remove(old);
        to_parse.push(new);
    }
    to_parse.extend(changeset.added.iter().map(String::as_str));
    to_parse.extend(changeset.modified.iter().map(String::as_str));
    to_parse.retain(|p| grammar.accepts(p));

    let parsed: Vec<_> = to_parse.par_iter().map(|p| (*p, parse_path(repo_root, p, grammar))).collect();
    let mut errors = Vec::new();
    for (path, result) in parsed {
        match result {
            Ok(record) => next.insert(Arc::new(record)),
            Err(e) => {
                next.remove(path);
                errors.push(PathError { path: path.to_string(), message: e.to_string() });
            }
        }
    }
    Ok(UpdateOutcome { index: next, errors })
}
