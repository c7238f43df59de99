//! Wires the stages together: per-version indexes, the three run modes, the
//! TF-IDF baseline and the multi-run evaluation driver.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{run_localization, AgentConfig, AgentTranscript, ChatProvider};
use crate::code_index::{
    build_index, scan_digests, update_index, Changeset, CodeIndex, Grammar, IndexError, RepoError, RepoSource,
};
use crate::embedding::{
    build_embeddings, shortlist_files, update_embeddings, EmbedError, EmbedOptions, EmbeddingIndex, EmbeddingProvider,
    Shortlist, DEFAULT_SHORTLIST_K,
};
use crate::eval::{BugReport, LocalizationResult, VsmModel};
use crate::resolve::{resolve_predictions, ResolvedList, DEFAULT_FINAL_LIST_SIZE};
use crate::tools::{ToolConfig, ToolName, ToolRegistry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Shortlist, then the agent with all five tools.
    Genloc,
    /// The shortlist's top files, no agent.
    EmbeddingOnly,
    /// The agent without the shortlist or `get_candidate_filenames`.
    #[serde(rename = "noembed")]
    NoEmbed,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Genloc => "genloc",
            Mode::EmbeddingOnly => "embedding_only",
            Mode::NoEmbed => "noembed",
        }
    }

    pub fn uses_embeddings(self) -> bool {
        self != Mode::NoEmbed
    }

    pub fn uses_agent(self) -> bool {
        self != Mode::EmbeddingOnly
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "genloc" => Ok(Mode::Genloc),
            "embedding_only" => Ok(Mode::EmbeddingOnly),
            "noembed" | "no_embed" => Ok(Mode::NoEmbed),
            _ => Err(format!("unknown mode `{s}` (expected genloc, embedding_only or noembed)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Repo(#[from] RepoError),
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// The indexes of one repository version.
pub struct VersionEnv {
    pub code: CodeIndex,
    pub embeddings: Option<EmbeddingIndex>,
    vsm: OnceLock<Option<VsmModel>>,
}

impl VersionEnv {
    pub fn new(code: CodeIndex, embeddings: Option<EmbeddingIndex>) -> Self {
        Self { code, embeddings, vsm: OnceLock::new() }
    }

    /// TF-IDF model over this version, built on first use.
    pub fn vsm(&self) -> Option<&VsmModel> {
        self.vsm.get_or_init(|| VsmModel::from_index(&self.code).ok()).as_ref()
    }
}

/// One technique's answer for one bug.
#[derive(Debug, Clone, PartialEq)]
pub struct Localization {
    pub bug_id: String,
    pub technique: String,
    pub run_id: u32,
    pub ranked: Vec<String>,
    pub shortlist: Option<Shortlist>,
    pub resolved: Option<ResolvedList>,
    pub transcript: Option<AgentTranscript>,
    pub failure: Option<String>,
}

impl Localization {
    fn new(bug: &BugReport, technique: &str, run_id: u32) -> Self {
        Self {
            bug_id: bug.bug_id.clone(),
            technique: technique.to_string(),
            run_id,
            ranked: Vec::new(),
            shortlist: None,
            resolved: None,
            transcript: None,
            failure: None,
        }
    }

    pub fn to_result(&self, ground_truth: &BTreeSet<String>, limit: usize) -> LocalizationResult {
        let mut r = LocalizationResult::new(
            &self.bug_id,
            &self.technique,
            self.run_id,
            self.ranked.iter().cloned(),
            limit,
            ground_truth,
        );
        r.failure = self.failure.clone();
        r
    }
}

/// A way of ranking files for a bug against a prepared version.
pub trait Technique: Sync {
    fn label(&self) -> String;
    fn needs_embeddings(&self) -> bool;
    fn localize(&self, bug: &BugReport, env: &VersionEnv, run_id: u32) -> Localization;
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizerConfig {
    pub mode: Mode,
    pub shortlist_k: usize,
    pub chunk_limit: usize,
    pub agent: AgentConfig,
    pub tools: ToolConfig,
}

impl Default for LocalizerConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Genloc,
            shortlist_k: DEFAULT_SHORTLIST_K,
            chunk_limit: crate::embedding::DEFAULT_CHUNK_LIMIT,
            agent: AgentConfig::default(),
            tools: ToolConfig::default(),
        }
    }
}

/// Runs one of the three modes.
pub struct Localizer<'p> {
    pub config: LocalizerConfig,
    embedder: Option<&'p dyn EmbeddingProvider>,
    chat: Option<&'p dyn ChatProvider>,
}

impl<'p> Localizer<'p> {
    /// Checks that the providers the mode needs are present.
    pub fn new(
        config: LocalizerConfig,
        embedder: Option<&'p dyn EmbeddingProvider>,
        chat: Option<&'p dyn ChatProvider>,
    ) -> Result<Self, PipelineError> {
        let mode = config.mode;
        if mode.uses_embeddings() && embedder.is_none() {
            return Err(PipelineError::Config(format!("mode {mode} needs an embedding provider")));
        }
        if mode.uses_agent() && chat.is_none() {
            return Err(PipelineError::Config(format!("mode {mode} needs a chat provider")));
        }
        if config.shortlist_k == 0 || config.chunk_limit == 0 {
            return Err(PipelineError::Config("shortlist_k and chunk_limit must be at least 1".into()));
        }
        config.agent.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        let embedder = embedder.filter(|_| mode.uses_embeddings());
        let chat = chat.filter(|_| mode.uses_agent());
        Ok(Self { config, embedder, chat })
    }

    fn shortlist(&self, bug: &BugReport, env: &VersionEnv) -> Result<Shortlist, String> {
        let (Some(embedder), Some(eindex)) = (self.embedder, env.embeddings.as_ref()) else {
            return Err(format!("no embedding index for version {}", env.code.version_id()));
        };
        shortlist_files(bug, eindex, self.config.shortlist_k, embedder, self.config.chunk_limit)
            .map_err(|e| e.to_string())
    }
}

impl Technique for Localizer<'_> {
    fn label(&self) -> String {
        self.config.mode.to_string()
    }

    fn needs_embeddings(&self) -> bool {
        self.config.mode.uses_embeddings()
    }

    fn localize(&self, bug: &BugReport, env: &VersionEnv, run_id: u32) -> Localization {
        let mode = self.config.mode;
        let mut out = Localization::new(bug, mode.as_str(), run_id);
        let limit = self.config.agent.final_list_size;
        if mode.uses_embeddings() {
            match self.shortlist(bug, env) {
                Ok(s) => out.shortlist = Some(s),
                Err(e) => {
                    out.failure = Some(format!("shortlist: {e}"));
                    return out;
                }
            }
        }
        if mode == Mode::EmbeddingOnly {
            out.ranked = out.shortlist.iter().flat_map(|s| s.paths()).take(limit).map(String::from).collect();
            return out;
        }
        let mut agent = self.config.agent.clone();
        agent.run_seed = format!("run-{run_id}");
        if mode == Mode::NoEmbed {
            agent.tool_whitelist.remove(&ToolName::GetCandidateFilenames);
        }
        let tools = ToolRegistry::new(&env.code, out.shortlist.as_ref()).with_config(self.config.tools);
        let chat = self.chat.expect("checked in Localizer::new");
        match run_localization(bug, &tools, chat, &agent) {
            Ok(run) => {
                let resolved = resolve_predictions(&run.predictions, &env.code, limit);
                out.ranked = resolved.paths().map(String::from).collect();
                out.resolved = Some(resolved);
                out.transcript = Some(run.transcript);
            }
            Err(f) => {
                out.failure = Some(f.error.to_string());
                out.transcript = Some(f.transcript);
            }
        }
        out
    }
}

/// The TF-IDF baseline.
pub struct VsmTechnique {
    pub limit: usize,
}

impl Default for VsmTechnique {
    fn default() -> Self {
        Self { limit: DEFAULT_FINAL_LIST_SIZE }
    }
}

impl Technique for VsmTechnique {
    fn label(&self) -> String {
        "vsm".to_string()
    }

    fn needs_embeddings(&self) -> bool {
        false
    }

    fn localize(&self, bug: &BugReport, env: &VersionEnv, run_id: u32) -> Localization {
        let mut out = Localization::new(bug, "vsm", run_id);
        match env.vsm() {
            Some(model) => {
                let ranking = model.rank(&bug.query_text());
                if ranking.no_known_terms {
                    log::warn!("bug {}: no query term occurs in the corpus", bug.bug_id);
                }
                out.ranked = ranking.paths().take(self.limit).map(String::from).collect();
            }
            None => out.failure = Some(format!("version {} has no source files", env.code.version_id())),
        }
        out
    }
}

/// Builds the indexes of successive versions, reusing the previous
/// version's indexes through a changeset when possible.
pub struct VersionIndexer<'a> {
    source: &'a RepoSource,
    grammar: &'a dyn Grammar,
    embedder: Option<&'a dyn EmbeddingProvider>,
    embed_options: EmbedOptions,
    current: Option<(CodeIndex, Option<EmbeddingIndex>)>,
}

impl<'a> VersionIndexer<'a> {
    pub fn new(
        source: &'a RepoSource,
        grammar: &'a dyn Grammar,
        embedder: Option<&'a dyn EmbeddingProvider>,
        embed_options: EmbedOptions,
    ) -> Self {
        Self { source, grammar, embedder, embed_options, current: None }
    }

    /// Starts from already-built indexes (for example loaded from disk).
    pub fn with_current(mut self, code: CodeIndex, embeddings: Option<EmbeddingIndex>) -> Self {
        self.current = Some((code, embeddings));
        self
    }

    /// Indexes `version`, incrementally when a previous version is loaded.
    pub fn advance(&mut self, version: &str) -> Result<VersionEnv, PipelineError> {
        self.advance_with(version, None)
    }

    /// Like [`advance`](Self::advance), but applies `changeset` to the
    /// loaded version instead of computing one.
    pub fn advance_with(&mut self, version: &str, changeset: Option<Changeset>) -> Result<VersionEnv, PipelineError> {
        let root = self.source.checkout(version)?;
        let (code, changeset) = match self.current.take() {
            Some((prev, prev_embed)) => {
                let cs = match changeset {
                    Some(cs) => cs.restricted_to(self.grammar),
                    None => match self.source.changeset(prev.version_id(), version)? {
                        Some(cs) => cs.restricted_to(self.grammar),
                        None => Changeset::between(&prev, &scan_digests(&root, self.grammar)?),
                    },
                };
                let outcome = update_index(&prev, &cs, &root, self.grammar, version)?;
                for e in &outcome.errors {
                    log::warn!("version {version}: {}: {}", e.path, e.message);
                }
                self.current = Some((prev, prev_embed));
                (outcome.index, Some(cs))
            }
            None => (build_index(&root, self.grammar, version)?, None),
        };
        let embeddings = match self.embedder {
            None => None,
            Some(embedder) => {
                let prev = self.current.as_ref().and_then(|(_, e)| e.as_ref());
                let outcome = match (prev, &changeset) {
                    (Some(prev), Some(cs)) if prev.provider_id() == embedder.id() => {
                        update_embeddings(prev, cs, &code, embedder, self.embed_options)?
                    }
                    _ => build_embeddings(&code, embedder, self.embed_options)?,
                };
                for f in &outcome.failures {
                    log::warn!("version {version}: {} left out of the embedding index: {}", f.fq_path, f.message);
                }
                Some(outcome.index)
            }
        };
        self.current = Some((code.clone(), embeddings.clone()));
        Ok(VersionEnv::new(code, embeddings))
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub runs: u32,
    /// Bugs localized at once.
    pub concurrency: usize,
    /// Final list length scored per bug.
    pub limit: usize,
    /// Where to write one transcript per bug and run.
    pub transcript_dir: Option<PathBuf>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { runs: 3, concurrency: 1, limit: DEFAULT_FINAL_LIST_SIZE, transcript_dir: None }
    }
}

/// Per-run results, each in dataset order.
pub type RunResults = Vec<Vec<LocalizationResult>>;

/// A file-system-safe form of a bug id.
pub fn safe_name(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' }).collect()
}

/// Runs `technique` over `bugs` `runs` times, visiting versions in order of
/// first appearance so consecutive versions are indexed incrementally.
pub fn evaluate(
    bugs: &[BugReport],
    indexer: &mut VersionIndexer<'_>,
    technique: &dyn Technique,
    opts: &EvalOptions,
) -> Result<RunResults, PipelineError> {
    let runs = opts.runs.max(1);
    let mut by_version: Vec<(&str, Vec<usize>)> = Vec::new();
    let mut slot: HashMap<&str, usize> = HashMap::new();
    for (i, bug) in bugs.iter().enumerate() {
        let s = *slot.entry(bug.version_id.as_str()).or_insert_with(|| {
            by_version.push((bug.version_id.as_str(), Vec::new()));
            by_version.len() - 1
        });
        by_version[s].1.push(i);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.concurrency.max(1))
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let mut results: Vec<Vec<Option<LocalizationResult>>> = vec![vec![None; bugs.len()]; runs as usize];
    for (version, members) in &by_version {
        log::info!("version {version}: {} bug(s)", members.len());
        let env = indexer.advance(version)?;
        for run in 0..runs {
            let done: Vec<(usize, Localization)> = pool.install(|| {
                use rayon::prelude::*;
                members.par_iter().map(|&i| (i, technique.localize(&bugs[i], &env, run))).collect()
            });
            for (i, loc) in done {
                if let Some(failure) = &loc.failure {
                    log::warn!("bug {} run {run}: {failure}", loc.bug_id);
                }
                if let (Some(dir), Some(t)) = (&opts.transcript_dir, &loc.transcript) {
                    let path = dir.join(format!("run-{run}")).join(format!("{}.json", safe_name(&loc.bug_id)));
                    t.save(&path).map_err(|source| PipelineError::Io { path, source })?;
                }
                results[run as usize][i] = Some(loc.to_result(&bugs[i].ground_truth, opts.limit));
            }
        }
    }
    Ok(results.into_iter().map(|run| run.into_iter().flatten().collect()).collect())
}

/// Loads a saved index pair, if both archives exist.
pub fn load_cached(dir: &Path, version: &str, embeddings: bool) -> Option<(CodeIndex, Option<EmbeddingIndex>)> {
    let (code_path, embed_path) = cache_paths(dir, version);
    let code = CodeIndex::load(&code_path).ok()?;
    let emb = if embeddings { Some(EmbeddingIndex::load(&embed_path).ok()?) } else { None };
    Some((code, emb))
}

/// Archive paths for a version inside an index directory.
pub fn cache_paths(dir: &Path, version: &str) -> (PathBuf, PathBuf) {
    let name = safe_name(version);
    (dir.join(format!("{name}.code.jsonl")), dir.join(format!("{name}.embed.jsonl")))
}
