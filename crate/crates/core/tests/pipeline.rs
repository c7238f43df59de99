mod common;

use bugloc_core::code_index::{JavaGrammar, RepoSource};
use bugloc_core::embedding::EmbedOptions;
use bugloc_core::eval::{aggregate_runs, EvalReport, GroundTruths};
use bugloc_core::pipeline::{evaluate, EvalOptions, Localizer, Mode, VersionIndexer, VsmTechnique};
use bugloc_core::EmbeddingProvider;
use common::*;

#[test]
fn evaluation_over_the_fixture_dataset() {
    let bugs = bugs();
    let work = tempfile::tempdir().unwrap();
    let source = RepoSource::detect(&repo_root(), work.path());
    let grammar = JavaGrammar::default();
    let (emb, chat) = (embedder(), replay());
    let mut indexer =
        VersionIndexer::new(&source, &grammar, Some(&emb as &dyn EmbeddingProvider), EmbedOptions::default());
    let loc = Localizer::new(localizer_config(Mode::Genloc), Some(&emb), Some(&chat)).unwrap();
    let opts = EvalOptions { runs: 2, transcript_dir: Some(work.path().join("t")), ..Default::default() };
    let runs = evaluate(&bugs, &mut indexer, &loc, &opts).unwrap();
    assert_eq!(runs.len(), 2);
    assert!(work.path().join("t/run-1/TOMCAT-2.json").exists());

    let gts: GroundTruths = bugs.iter().map(|b| (b.bug_id.clone(), b.ground_truth.clone())).collect();
    let reports: Vec<EvalReport> = runs.into_iter().map(|r| EvalReport::compute("genloc", r, &gts).unwrap()).collect();
    let agg = aggregate_runs(&reports).unwrap();
    assert_eq!(agg.accuracy_at[&1], 1.0);
    assert_eq!(agg.mrr_at_10, 1.0);
    assert!(agg.coverage.failed.is_empty());
}

#[test]
fn vsm_baseline_runs_without_providers() {
    let bugs = bugs();
    let work = tempfile::tempdir().unwrap();
    let source = RepoSource::detect(&repo_root(), work.path());
    let grammar = JavaGrammar::default();
    let mut indexer = VersionIndexer::new(&source, &grammar, None, EmbedOptions::default());
    let opts = EvalOptions { runs: 1, ..Default::default() };
    let runs = evaluate(&bugs, &mut indexer, &VsmTechnique::default(), &opts).unwrap();
    let chart = runs[0].iter().find(|r| r.bug_id == "CHART-1").unwrap();
    // the renderer shares most of the report's vocabulary too
    assert!(chart.ranked_paths[..2].iter().any(|p| p == AUTOSCALE), "{:?}", chart.ranked_paths);
}

#[test]
fn saved_indexes_round_trip() {
    let env = env(true);
    let dir = tempfile::tempdir().unwrap();
    let (code_path, embed_path) = bugloc_core::pipeline::cache_paths(dir.path(), "v1");
    env.code.save(&code_path).unwrap();
    env.embeddings.as_ref().unwrap().save(&embed_path).unwrap();
    let (code, emb) = bugloc_core::pipeline::load_cached(dir.path(), "v1", true).unwrap();
    assert_eq!(code, env.code);
    assert_eq!(emb.as_ref(), env.embeddings.as_ref());
}
