//! Fixture helpers shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;
use std::time::Duration;

use bugloc_core::agent::{ReplayFile, ScriptedProvider};
use bugloc_core::code_index::{build_index, JavaGrammar};
use bugloc_core::embedding::{build_embeddings, EmbedOptions, HashingEmbedder};
use bugloc_core::eval::load_dataset;
use bugloc_core::pipeline::{LocalizerConfig, Mode, VersionEnv};
use bugloc_core::BugReport;

pub const AUTOSCALE: &str = "chart/src/org/eclipse/birt/chart/computation/withaxes/AutoScale.java";
pub const METER: &str = "chart/src/org/eclipse/birt/chart/render/MeterRenderer.java";
pub const CATALINA: &str = "tomcat/java/org/apache/catalina/startup/Catalina.java";
pub const LIFECYCLE_BASE: &str = "tomcat/java/org/apache/catalina/util/LifecycleBase.java";
pub const LISTENER: &str = "tomcat/java/org/apache/catalina/LifecycleListener.java";

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn repo_root() -> PathBuf {
    fixtures().join("repo")
}

pub fn bugs() -> Vec<BugReport> {
    load_dataset(&fixtures().join("bugs.jsonl")).expect("fixture dataset")
}

pub fn bug(id: &str) -> BugReport {
    bugs().into_iter().find(|b| b.bug_id == id).expect("fixture bug")
}

pub fn embedder() -> HashingEmbedder {
    HashingEmbedder::new(256)
}

pub fn env(with_embeddings: bool) -> VersionEnv {
    let code = build_index(&repo_root().join("v1"), &JavaGrammar::default(), "v1").expect("fixture index");
    let emb = with_embeddings
        .then(|| build_embeddings(&code, &embedder(), EmbedOptions::default()).expect("fixture embeddings").index);
    VersionEnv::new(code, emb)
}

pub fn replay() -> ScriptedProvider {
    ScriptedProvider::new(ReplayFile::load(&fixtures().join("replay.json")).expect("fixture replay"))
}

pub fn localizer_config(mode: Mode) -> LocalizerConfig {
    let mut c = LocalizerConfig { mode, ..Default::default() };
    c.agent.provider_backoff = Duration::ZERO;
    c
}
