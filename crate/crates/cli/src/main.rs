mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use bugloc_core::agent::{ChatProvider, RecordingProvider};
use bugloc_core::archive::write_atomic;
use bugloc_core::code_index::{Changeset, JavaGrammar, RepoSource};
use bugloc_core::embedding::{CachedEmbedder, EmbedOptions};
use bugloc_core::eval::{
    aggregate_runs, load_dataset, overlap_analysis, render_overlap_table, render_table, split_chronological, BugReport,
    EvalReport, GroundTruths, REPORT_SCHEMA_VERSION,
};
use bugloc_core::pipeline::{
    cache_paths, evaluate, load_cached, safe_name, EvalOptions, Localizer, LocalizerConfig, Mode, Technique,
    VersionEnv, VersionIndexer, VsmTechnique,
};
use bugloc_core::EmbeddingProvider;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::{build_chat, build_embedder, FileConfig};

const EXIT_BUG_FAILURES: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

/// Locate the source files a bug report is most likely about.
#[derive(Parser)]
#[command(name = "bugloc", version)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build or update the code and embedding indexes of one version.
    Index {
        #[arg(long)]
        version: String,
        /// Start from the saved indexes of this version and apply the changes.
        #[arg(long)]
        from: Option<String>,
        /// JSON changeset to apply instead of computing one (needs --from).
        #[arg(long, requires = "from")]
        changeset: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Rank files for one bug report.
    Localize {
        /// A bug report as JSON, or a JSONL dataset together with --bug-id.
        #[arg(long)]
        bug: PathBuf,
        #[arg(long)]
        bug_id: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a technique over a dataset and score it.
    Evaluate {
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// genloc, embedding_only, noembed or vsm; defaults to --mode.
        #[arg(long)]
        technique: Option<String>,
        /// Share of the oldest bugs left out of the evaluation; 0 keeps all.
        #[arg(long)]
        train_fraction: Option<f64>,
        /// Reports of other techniques to include in an overlap table.
        #[arg(long = "with")]
        with_reports: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Tabulate saved reports and their overlap.
    Compare {
        #[arg(long = "report", required = true, num_args = 1..)]
        reports: Vec<PathBuf>,
        /// Depth at which a bug counts as localized.
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert a published benchmark table (CSV/TSV) to a JSONL dataset.
    Ingest {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Default, Clone)]
struct Common {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    runs: Option<u32>,
    #[arg(long)]
    shortlist_k: Option<usize>,
    #[arg(long)]
    chunk_limit: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Chat provider: openai or replay.
    #[arg(long)]
    provider: Option<String>,
    /// Replay canned model turns from this file (implies --provider replay).
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Save the model turns of this session as a replay file.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Embedding provider: hashing or openai.
    #[arg(long)]
    embedder: Option<String>,
    #[arg(long)]
    repo: Option<PathBuf>,
    #[arg(long)]
    index_dir: Option<PathBuf>,
    #[arg(long)]
    concurrency: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Invalid input or configuration, reported before any work starts.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(e: impl std::fmt::Display) -> anyhow::Error {
    anyhow!(ConfigError(format!("{e:#}")))
}

struct Settings {
    file: FileConfig,
    mode: Mode,
}

impl Settings {
    fn resolve(c: &Common) -> Result<Self> {
        let mut file = match &c.config {
            Some(p) => FileConfig::load(p).map_err(config_err)?,
            None => FileConfig::default(),
        };
        let run = &mut file.run;
        if let Some(v) = &c.mode {
            run.mode = v.clone();
        }
        macro_rules! set {
            ($($flag:ident),*) => { $(if let Some(v) = c.$flag { run.$flag = v; })* };
        }
        set!(runs, shortlist_k, chunk_limit, max_iterations, concurrency);
        if let Some(p) = &c.provider {
            file.chat.provider = p.clone();
        }
        if let Some(r) = &c.replay {
            file.chat.provider = "replay".into();
            file.chat.replay = Some(r.clone());
        }
        if let Some(e) = &c.embedder {
            file.embedding.provider = e.clone();
        }
        for (flag, slot) in
            [(&c.repo, &mut file.paths.repo), (&c.index_dir, &mut file.paths.index_dir), (&c.out, &mut file.paths.out)]
        {
            if flag.is_some() {
                slot.clone_from(flag);
            }
        }
        let mode = file.run.mode.parse::<Mode>().map_err(config_err)?;
        Ok(Self { file, mode })
    }

    fn localizer_config(&self, mode: Mode) -> LocalizerConfig {
        let run = &self.file.run;
        let mut c =
            LocalizerConfig { mode, shortlist_k: run.shortlist_k, chunk_limit: run.chunk_limit, ..Default::default() };
        c.agent.max_iterations = run.max_iterations;
        c.agent.final_list_size = run.final_list_size;
        c.agent.temperature = self.file.chat.temperature;
        c.agent.tool_result_char_cap = run.tool_result_char_cap;
        c
    }

    fn embed_options(&self) -> EmbedOptions {
        EmbedOptions { chunk_limit: self.file.run.chunk_limit, ..Default::default() }
    }

    fn repo(&self) -> Result<&Path> {
        self.file.paths.repo.as_deref().ok_or_else(|| config_err("a repository is required (--repo)"))
    }

    fn index_dir(&self) -> Result<&Path> {
        self.file.paths.index_dir.as_deref().ok_or_else(|| config_err("an index directory is required (--index-dir)"))
    }

    fn out_dir(&self) -> PathBuf {
        self.file.paths.out.clone().unwrap_or_else(|| PathBuf::from("bugloc-out"))
    }

    fn embedder(&self, cache_dir: Option<&Path>) -> Result<CachedEmbedder<Box<dyn EmbeddingProvider>>> {
        let inner = build_embedder(&self.file.embedding).map_err(config_err)?;
        match cache_dir.map(|d| d.join("embedding-cache.jsonl")).filter(|p| p.exists()) {
            Some(path) => CachedEmbedder::load(inner, &path).with_context(|| format!("loading {}", path.display())),
            None => Ok(CachedEmbedder::new(inner)),
        }
    }

    /// The configured chat provider; its turns are kept for `--record`.
    fn chat(&self) -> Result<Recorder> {
        Ok(RecordingProvider::new(build_chat(&self.file.chat).map_err(config_err)?))
    }
}

fn save_embed_cache(embedder: &CachedEmbedder<Box<dyn EmbeddingProvider>>, dir: Option<&Path>) -> Result<()> {
    if let Some(dir) = dir {
        let path = dir.join("embedding-cache.jsonl");
        embedder.save(&path).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes).with_context(|| format!("writing {}", path.display()))
}

type Recorder = RecordingProvider<Box<dyn ChatProvider>>;

/// Writes the recorded turns when recording was requested.
fn save_recording(chat: Option<&Recorder>, path: Option<&Path>) -> Result<()> {
    let (Some(path), Some(rec)) = (path, chat) else {
        return Ok(());
    };
    rec.replay().save(path).with_context(|| format!("writing {}", path.display()))
}

fn cmd_index(version: &str, from: Option<&str>, changeset: Option<&Path>, common: &Common) -> Result<u8> {
    let s = Settings::resolve(common)?;
    let repo = s.repo()?;
    let index_dir = s.index_dir()?;
    let changeset: Option<Changeset> = match changeset {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).map_err(config_err)?;
            let cs: Changeset = serde_json::from_str(&text).map_err(config_err)?;
            cs.validate().map_err(config_err)?;
            Some(cs)
        }
        None => None,
    };
    let with_embeddings = s.mode.uses_embeddings();
    let embedder = if with_embeddings { Some(s.embedder(Some(index_dir))?) } else { None };
    let source = RepoSource::detect(repo, index_dir);
    let grammar = JavaGrammar::default();
    let embed_ref = embedder.as_ref().map(|e| e as &dyn EmbeddingProvider);
    let mut indexer = VersionIndexer::new(&source, &grammar, embed_ref, s.embed_options());
    let base = from.unwrap_or(version);
    match load_cached(index_dir, base, with_embeddings) {
        Some((code, emb)) => indexer = indexer.with_current(code, emb),
        None if from.is_some() => {
            return Err(config_err(format!("no saved index for version {base} in {}", index_dir.display())))
        }
        None => {}
    }
    let env = indexer.advance_with(version, changeset)?;
    let (code_path, embed_path) = cache_paths(index_dir, version);
    env.code.save(&code_path)?;
    if let Some(e) = &env.embeddings {
        e.save(&embed_path)?;
    }
    let mut summary = json!({ "version": version, "files": env.code.len() });
    if let Some(embedder) = &embedder {
        save_embed_cache(embedder, Some(index_dir))?;
        let stats = embedder.stats();
        summary["records"] = json!(env.embeddings.as_ref().map_or(0, |e| e.record_count()));
        summary["provider_calls"] = json!(stats.provider_calls);
        summary["cache_hits"] = json!(stats.hits);
    }
    println!("{summary}");
    Ok(0)
}

fn load_bug(path: &Path, bug_id: Option<&str>) -> Result<BugReport> {
    let is_jsonl = path.extension().is_some_and(|e| e == "jsonl");
    if !is_jsonl {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(config_err)?;
        let bug: BugReport = serde_json::from_str(&text).map_err(config_err)?;
        return Ok(bug);
    }
    let bugs = load_dataset(path).map_err(config_err)?;
    match bug_id {
        Some(id) => bugs
            .into_iter()
            .find(|b| b.bug_id == id)
            .ok_or_else(|| config_err(format!("no bug {id} in {}", path.display()))),
        None if bugs.len() == 1 => Ok(bugs.into_iter().next().expect("one bug")),
        None => Err(config_err("the dataset holds several bugs; pick one with --bug-id")),
    }
}

fn cmd_localize(bug_path: &Path, bug_id: Option<&str>, common: &Common) -> Result<u8> {
    let s = Settings::resolve(common)?;
    let bug = load_bug(bug_path, bug_id)?;
    if bug.is_blank() {
        return Err(config_err(format!("bug {} has an empty summary and description", bug.bug_id)));
    }
    let mode = s.mode;
    let index_dir = s.index_dir()?;
    let embedder = if mode.uses_embeddings() { Some(s.embedder(Some(index_dir))?) } else { None };
    let chat = if mode.uses_agent() { Some(s.chat()?) } else { None };
    let embed_ref = embedder.as_ref().map(|e| e as &dyn EmbeddingProvider);
    let localizer = Localizer::new(s.localizer_config(mode), embed_ref, chat.as_ref().map(|c| c as &dyn ChatProvider))
        .map_err(config_err)?;

    let env = match load_cached(index_dir, &bug.version_id, mode.uses_embeddings()) {
        Some((code, emb)) => VersionEnv::new(code, emb),
        None => {
            let Ok(repo) = s.repo() else {
                return Err(config_err(format!(
                    "no saved index for version {} in {}; run `bugloc index` first or pass --repo",
                    bug.version_id,
                    index_dir.display()
                )));
            };
            let source = RepoSource::detect(repo, index_dir);
            let grammar = JavaGrammar::default();
            let env = VersionIndexer::new(&source, &grammar, embed_ref, s.embed_options()).advance(&bug.version_id)?;
            let (code_path, embed_path) = cache_paths(index_dir, &bug.version_id);
            env.code.save(&code_path)?;
            if let Some(e) = &env.embeddings {
                e.save(&embed_path)?;
            }
            env
        }
    };
    let loc = localizer.localize(&bug, &env, 0);
    if let Some(e) = &embedder {
        save_embed_cache(e, Some(index_dir))?;
    }
    save_recording(chat.as_ref(), common.record.as_deref())?;

    let out = s.out_dir();
    let name = safe_name(&bug.bug_id);
    if let Some(t) = &loc.transcript {
        t.save(&out.join("transcripts").join(format!("{name}.json")))?;
    }
    write_json(
        &out.join(format!("localization-{name}.json")),
        &json!({
            "schema_version": REPORT_SCHEMA_VERSION,
            "bug_id": bug.bug_id,
            "mode": mode,
            "ranked_paths": loc.ranked,
            "resolved": loc.resolved,
            "shortlist": loc.shortlist.as_ref().map(|s| s.paths().map(String::from).collect::<Vec<_>>()),
            "failure": loc.failure,
        }),
    )?;
    for (i, p) in loc.ranked.iter().enumerate() {
        println!("{}. {p}", i + 1);
    }
    if let Some(f) = &loc.failure {
        eprintln!("bugloc: bug {} failed: {f}", bug.bug_id);
        return Ok(EXIT_BUG_FAILURES);
    }
    Ok(0)
}

fn cmd_evaluate(
    dataset: Option<&Path>,
    technique: Option<&str>,
    train_fraction: Option<f64>,
    with_reports: &[PathBuf],
    common: &Common,
) -> Result<u8> {
    let s = Settings::resolve(common)?;
    let dataset =
        dataset.or(s.file.paths.dataset.as_deref()).ok_or_else(|| config_err("a dataset is required (--dataset)"))?;
    let technique = technique.map(str::to_string).unwrap_or_else(|| s.mode.to_string());
    let mode = if technique == "vsm" { None } else { Some(technique.parse::<Mode>().map_err(config_err)?) };
    let fraction = train_fraction.unwrap_or(s.file.run.train_fraction);
    let others: Vec<EvalReport> = with_reports
        .iter()
        .map(|p| EvalReport::load(p).with_context(|| format!("reading {}", p.display())).map_err(config_err))
        .collect::<Result<_>>()?;

    let all = load_dataset(dataset).map_err(config_err)?;
    let bugs = if fraction > 0.0 { split_chronological(&all, fraction).map_err(config_err)?.1 } else { all };
    if bugs.is_empty() {
        return Err(config_err("no bugs to evaluate"));
    }
    if let Some(b) = bugs.iter().find(|b| b.ground_truth.is_empty()) {
        return Err(config_err(format!("bug {} has no ground-truth files", b.bug_id)));
    }
    let repo = s.repo()?;
    let out = s.out_dir().join(&technique);
    let work = s.file.paths.index_dir.clone().unwrap_or_else(|| out.join("work"));
    let uses_embeddings = mode.is_some_and(Mode::uses_embeddings);
    let embedder = if uses_embeddings { Some(s.embedder(s.file.paths.index_dir.as_deref())?) } else { None };
    let chat = match mode {
        Some(m) if m.uses_agent() => Some(s.chat()?),
        _ => None,
    };
    let embed_ref = embedder.as_ref().map(|e| e as &dyn EmbeddingProvider);
    let vsm = VsmTechnique { limit: s.file.run.final_list_size };
    let localizer;
    let tech: &dyn Technique = match mode {
        Some(m) => {
            localizer = Localizer::new(s.localizer_config(m), embed_ref, chat.as_ref().map(|c| c as &dyn ChatProvider))
                .map_err(config_err)?;
            &localizer
        }
        None => &vsm,
    };

    let source = RepoSource::detect(repo, &work);
    let grammar = JavaGrammar::default();
    let mut indexer = VersionIndexer::new(&source, &grammar, embed_ref, s.embed_options());
    let opts = EvalOptions {
        runs: if mode.is_some() { s.file.run.runs } else { 1 },
        concurrency: s.file.run.concurrency,
        limit: s.file.run.final_list_size,
        transcript_dir: Some(out.join("transcripts")),
    };
    let runs = evaluate(&bugs, &mut indexer, tech, &opts)?;
    if let Some(e) = &embedder {
        save_embed_cache(e, s.file.paths.index_dir.as_deref())?;
    }
    save_recording(chat.as_ref(), common.record.as_deref())?;

    let gts: GroundTruths = bugs.iter().map(|b| (b.bug_id.clone(), b.ground_truth.clone())).collect();
    let mut per_run = Vec::new();
    for (i, results) in runs.into_iter().enumerate() {
        let report = EvalReport::compute(&technique, results, &gts)?;
        write_json(&out.join(format!("report-run-{i}.json")), &report)?;
        per_run.push(report);
    }
    let report = aggregate_runs(&per_run)?;
    report.save(&out.join("report.json")).context("writing report")?;
    let mut table = render_table(std::slice::from_ref(&report));
    if !others.is_empty() {
        let mut all_reports = others;
        all_reports.push(report.clone());
        table = render_table(&all_reports);
        table.push('\n');
        table.push_str(&overlap(&all_reports, 10, Some(&s.out_dir()))?);
    }
    write_atomic(&out.join("table.txt"), table.as_bytes())?;
    print!("{table}");
    let c = &report.coverage;
    if !c.failed.is_empty() {
        eprintln!("bugloc: {} of {} localizations failed: {}", c.failed.len(), c.requested, c.failed.join(", "));
        return Ok(EXIT_BUG_FAILURES);
    }
    Ok(0)
}

/// Overlap table of `reports`, also written as JSON under `out`.
fn overlap(reports: &[EvalReport], k: usize, out: Option<&Path>) -> Result<String> {
    let mut per_technique = BTreeMap::new();
    for r in reports {
        if per_technique.insert(r.technique.clone(), r.per_bug.clone()).is_some() {
            return Err(config_err(format!("technique {} appears in more than one report", r.technique)));
        }
    }
    let counts = overlap_analysis(&per_technique, k).map_err(config_err)?;
    if let Some(dir) = out {
        write_json(
            &dir.join("overlap.json"),
            &json!({ "schema_version": REPORT_SCHEMA_VERSION, "k": k, "counts": counts }),
        )?;
    }
    Ok(render_overlap_table(&counts))
}

fn cmd_compare(paths: &[PathBuf], k: usize, out: Option<&Path>) -> Result<u8> {
    let reports: Vec<EvalReport> = paths
        .iter()
        .map(|p| EvalReport::load(p).with_context(|| format!("reading {}", p.display())).map_err(config_err))
        .collect::<Result<_>>()?;
    print!("{}", render_table(&reports));
    if reports.len() >= 2 {
        println!();
        print!("{}", overlap(&reports, k, out)?);
    }
    Ok(0)
}

fn cmd_ingest(table: &Path, out: &Path) -> Result<u8> {
    let bugs = bugloc_core::eval::ingest_benchmark_table(table).map_err(config_err)?;
    bugloc_core::eval::save_dataset(out, &bugs)?;
    eprintln!("bugloc: wrote {} bug(s) to {}", bugs.len(), out.display());
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Index { version, from, changeset, common } => {
            cmd_index(&version, from.as_deref(), changeset.as_deref(), &common)
        }
        Command::Localize { bug, bug_id, common } => cmd_localize(&bug, bug_id.as_deref(), &common),
        Command::Evaluate { dataset, technique, train_fraction, with_reports, common } => {
            cmd_evaluate(dataset.as_deref(), technique.as_deref(), train_fraction, &with_reports, &common)
        }
        Command::Compare { reports, k, out } => cmd_compare(&reports, k, out.as_deref()),
        Command::Ingest { table, out } => cmd_ingest(&table, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("bugloc: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::from(EXIT_RUNTIME)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        std::fs::write(&cfg, "[run]\nmode = \"noembed\"\nruns = 5\n[chat]\nprovider = \"openai\"\n").unwrap();
        let common = Common { config: Some(cfg), runs: Some(2), replay: Some("r.json".into()), ..Default::default() };
        let s = Settings::resolve(&common).unwrap();
        assert_eq!(s.mode, Mode::NoEmbed);
        assert_eq!(s.file.run.runs, 2);
        assert_eq!(s.file.chat.provider, "replay");
    }

    #[test]
    fn bad_mode_is_a_config_error() {
        let common = Common { mode: Some("turbo".into()), ..Default::default() };
        let err = Settings::resolve(&common).err().unwrap();
        assert!(err.downcast_ref::<ConfigError>().is_some());
    }

    #[test]
    fn cli_parses() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
