//! TOML run configuration with `${VAR}` environment interpolation.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use bugloc_core::agent::{ChatProvider, OpenAiChatConfig, OpenAiChatProvider, ReplayFile, ScriptedProvider};
use bugloc_core::embedding::{HashingEmbedder, RemoteEmbedder, RemoteEmbedderConfig};
use bugloc_core::http::UreqTransport;
use bugloc_core::EmbeddingProvider;
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub run: RunSection,
    pub paths: PathsSection,
    pub chat: ChatSection,
    pub embedding: EmbeddingSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub mode: String,
    pub runs: u32,
    pub shortlist_k: usize,
    pub chunk_limit: usize,
    pub max_iterations: usize,
    pub final_list_size: usize,
    pub concurrency: usize,
    pub tool_result_char_cap: Option<usize>,
    pub train_fraction: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            mode: "genloc".into(),
            runs: 3,
            shortlist_k: 50,
            chunk_limit: 300,
            max_iterations: 10,
            final_list_size: 10,
            concurrency: 1,
            tool_result_char_cap: None,
            train_fraction: bugloc_core::eval::DEFAULT_TRAIN_FRACTION,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub repo: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub index_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChatSection {
    /// `openai` or `replay`.
    pub provider: String,
    pub model: String,
    pub base_url: String,
    pub api_key: String,
    pub replay: Option<PathBuf>,
    pub temperature: f64,
    pub timeout_secs: u64,
}

impl Default for ChatSection {
    fn default() -> Self {
        let d = OpenAiChatConfig::default();
        Self {
            provider: "openai".into(),
            model: d.model,
            base_url: d.base_url,
            api_key: "${OPENAI_API_KEY}".into(),
            replay: None,
            temperature: 1.0,
            timeout_secs: 120,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    /// `hashing` or `openai`.
    pub provider: String,
    pub model: String,
    pub base_url: String,
    pub api_key: String,
    /// Defaults to 256 for `hashing` and to the model's size for `openai`.
    pub dimension: Option<usize>,
    pub max_batch: usize,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        let d = RemoteEmbedderConfig::default();
        Self {
            provider: "hashing".into(),
            model: d.model,
            base_url: d.base_url,
            api_key: "${OPENAI_API_KEY}".into(),
            dimension: None,
            max_batch: d.max_batch,
        }
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Replaces every `${NAME}` with the environment variable's value.
pub fn interpolate(raw: &str, lookup: impl Fn(&str) -> Option<String>) -> Result<String> {
    let mut out = String::new();
    let mut rest = raw;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let Some(end) = after.find('}') else { bail!("unterminated `${{` in `{raw}`") };
        let name = &after[..end];
        match lookup(name) {
            Some(v) => out.push_str(&v),
            None => bail!("environment variable {name} is not set"),
        }
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn env_lookup(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.is_empty())
}

fn api_key(raw: &str, what: &str) -> Result<String> {
    let key = interpolate(raw, env_lookup).with_context(|| format!("missing API key for the {what}"))?;
    if key.trim().is_empty() {
        bail!("missing API key for the {what}");
    }
    Ok(key)
}

pub fn build_embedder(cfg: &EmbeddingSection) -> Result<Box<dyn EmbeddingProvider>> {
    match cfg.provider.as_str() {
        _ if cfg.dimension == Some(0) => bail!("embedding.dimension must be at least 1"),
        "hashing" => Ok(Box::new(HashingEmbedder::new(cfg.dimension.unwrap_or(256)))),
        "openai" => {
            let key = api_key(&cfg.api_key, "embedding provider")?;
            let mut config = RemoteEmbedderConfig {
                base_url: interpolate(&cfg.base_url, env_lookup)?,
                model: cfg.model.clone(),
                max_batch: cfg.max_batch,
                ..Default::default()
            };
            if let Some(d) = cfg.dimension {
                config.dimension = d;
            }
            Ok(Box::new(RemoteEmbedder::new(config, key, Arc::new(UreqTransport::default()))))
        }
        other => bail!("unknown embedding provider `{other}` (expected hashing or openai)"),
    }
}

pub fn build_chat(cfg: &ChatSection) -> Result<Box<dyn ChatProvider>> {
    match cfg.provider.as_str() {
        "replay" => {
            let Some(path) = &cfg.replay else { bail!("chat provider `replay` needs a replay file (--replay)") };
            let replay = ReplayFile::load(path).map_err(|e| anyhow::anyhow!(e))?;
            Ok(Box::new(ScriptedProvider::new(replay)))
        }
        "openai" => {
            let key = api_key(&cfg.api_key, "chat provider")?;
            let config =
                OpenAiChatConfig { base_url: interpolate(&cfg.base_url, env_lookup)?, model: cfg.model.clone() };
            let transport = UreqTransport::new(Duration::from_secs(cfg.timeout_secs));
            Ok(Box::new(OpenAiChatProvider::new(config, key, Arc::new(transport))))
        }
        other => bail!("unknown chat provider `{other}` (expected openai or replay)"),
    }
}
