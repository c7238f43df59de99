use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

macro_rules! argv {
    ($($a:expr),* $(,)?) => { [$(($a).to_string()),*] };
}

fn bugloc(args: &[String], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bugloc"))
        .args(args)
        .current_dir(dir)
        .env_remove("OPENAI_API_KEY")
        .output()
        .expect("run bugloc")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn path(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

#[test]
fn index_twice_reuses_the_embedding_cache() {
    let tmp = tempfile::tempdir().unwrap();
    let (repo, idx) = (fixtures().join("repo"), tmp.path().join("idx"));
    let args = argv!["index", "--version", "v1", "--repo", path(&repo), "--index-dir", path(&idx)];
    let first = bugloc(&args, tmp.path());
    assert!(first.status.success(), "{}", text(&first.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&first.stdout).unwrap();
    assert_eq!(summary["files"], 9);
    assert!(summary["provider_calls"].as_u64().unwrap() > 0);
    assert!(idx.join("v1.code.jsonl").exists() && idx.join("v1.embed.jsonl").exists());

    let second = bugloc(&args, tmp.path());
    let summary: serde_json::Value = serde_json::from_slice(&second.stdout).unwrap();
    assert_eq!(summary["provider_calls"], 0);
}

#[test]
fn localize_with_replay_prints_the_ranking() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = fixtures();
    let out = tmp.path().join("out");
    let args = argv![
        "localize",
        "--bug",
        path(&fx.join("bugs.jsonl")),
        "--bug-id",
        "CHART-1",
        "--repo",
        path(&fx.join("repo")),
        "--index-dir",
        path(&tmp.path().join("idx")),
        "--replay",
        path(&fx.join("replay.json")),
        "--out",
        path(&out),
    ];
    let run = bugloc(&args, tmp.path());
    assert!(run.status.success(), "{}", text(&run.stderr));
    let stdout = text(&run.stdout);
    assert!(
        stdout.starts_with("1. chart/src/org/eclipse/birt/chart/computation/withaxes/AutoScale.java\n"),
        "{stdout}"
    );
    assert!(out.join("transcripts/CHART-1.json").exists());
    assert!(out.join("localization-CHART-1.json").exists());
}

#[test]
fn a_failed_bug_still_writes_its_transcript() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = fixtures();
    let bug = tmp.path().join("bug.json");
    std::fs::write(&bug, r#"{"bug_id":"UNSCRIPTED","summary":"crash in render","version_id":"v1"}"#).unwrap();
    let out = tmp.path().join("out");
    let run = bugloc(
        &argv![
            "localize",
            "--bug",
            path(&bug),
            "--repo",
            path(&fx.join("repo")),
            "--index-dir",
            path(&tmp.path().join("idx")),
            "--replay",
            path(&fx.join("replay.json")),
            "--out",
            path(&out),
        ],
        tmp.path(),
    );
    assert_eq!(run.status.code(), Some(1), "{}", text(&run.stderr));
    assert!(out.join("transcripts/UNSCRIPTED.json").exists());
}

#[test]
fn evaluate_then_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = fixtures();
    let out = tmp.path().join("out");
    let common =
        argv!["--dataset", path(&fx.join("bugs.jsonl")), "--repo", path(&fx.join("repo")), "--train-fraction", "0"];
    let mut args = argv!["evaluate", "--technique", "vsm", "--out", path(&out)].to_vec();
    args.extend(common.clone());
    let vsm = bugloc(&args, tmp.path());
    assert!(vsm.status.success(), "{}", text(&vsm.stderr));

    let replay = fx.join("replay.json");
    let mut args =
        argv!["evaluate", "--technique", "genloc", "--runs", "2", "--replay", path(&replay), "--out", path(&out)]
            .to_vec();
    args.extend(common);
    args.extend(argv!["--with", "out/vsm/report.json"]);
    let genloc = bugloc(&args, tmp.path());
    assert!(genloc.status.success(), "{}", text(&genloc.stderr));
    let table = text(&genloc.stdout);
    assert!(table.contains("genloc") && table.contains("vsm"), "{table}");
    assert!(out.join("genloc/report-run-1.json").exists());
    assert!(out.join("overlap.json").exists());

    let cmp = bugloc(
        &argv!["compare", "--report", "out/genloc/report.json", "--report", "out/vsm/report.json", "--k", "1"],
        tmp.path(),
    );
    assert!(cmp.status.success(), "{}", text(&cmp.stderr));
    let stdout = text(&cmp.stdout);
    assert!(stdout.contains("MRR@10") && stdout.to_lowercase().contains("unique"), "{stdout}");
}

#[test]
fn configuration_errors_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = fixtures();
    let bugs = fx.join("bugs.jsonl");
    let bad_mode =
        bugloc(&argv!["localize", "--bug", path(&bugs), "--bug-id", "CHART-1", "--mode", "turbo"], tmp.path());
    assert_eq!(bad_mode.status.code(), Some(2));

    // the default chat provider needs OPENAI_API_KEY, which is unset here
    let no_key = bugloc(
        &argv!["localize", "--bug", path(&bugs), "--bug-id", "CHART-1", "--index-dir", path(tmp.path())],
        tmp.path(),
    );
    assert_eq!(no_key.status.code(), Some(2));
    assert!(text(&no_key.stderr).contains("API key"), "{}", text(&no_key.stderr));

    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "[run]\nmode = \"genloc\"\nunknown_key = 1\n").unwrap();
    let bad_cfg = bugloc(&argv!["compare", "--report", "x.json"], tmp.path());
    assert_eq!(bad_cfg.status.code(), Some(2));
    let bad_cfg = bugloc(&argv!["evaluate", "--config", path(&cfg)], tmp.path());
    assert_eq!(bad_cfg.status.code(), Some(2));
}
