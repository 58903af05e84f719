use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn cdcr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdcr"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A synthetic bundle whose config trains for only a couple of epochs.
fn quick_bundle(dir: &Path) -> PathBuf {
    let out = cdcr(&["synth", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let path = dir.join("config.json");
    let mut config: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    config["encoder"]["epochs"] = 3.into();
    config["pairwise"]["epochs"] = 3.into();
    std::fs::write(&path, config.to_string()).unwrap();
    path
}

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn pipeline_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = quick_bundle(dir.path());
    let config = config.to_str().unwrap();
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        let out = cdcr(&["pipeline", "--config", config, "--out", out_dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", stderr(&out));
        assert!(stdout(&out).contains("CoNLL"));
        runs.push(tree(&out_dir));
    }
    let names: Vec<_> = runs[0].iter().map(|(p, _)| p.clone()).collect();
    assert!(names.contains(&PathBuf::from("test/synthetic/embeddings.cemb")));
    assert_eq!(names, runs[1].iter().map(|(p, _)| p.clone()).collect::<Vec<_>>());
    for ((path, a), (_, b)) in runs[0].iter().zip(&runs[1]) {
        // The saved config records its own output directory.
        if path != Path::new("config.json") {
            assert!(a == b, "{} differs", path.display());
        }
    }
}

#[test]
fn stages_run_one_by_one_and_score() {
    let dir = tempfile::tempdir().unwrap();
    let config = quick_bundle(dir.path());
    let config = config.to_str().unwrap();
    for stage in [
        "train-encoder",
        "embed",
        "build-index",
        "gen-pairs",
        "train-pairwise",
        "score-pairs",
        "cluster",
        "score",
    ] {
        let out = cdcr(&[stage, "--config", config]);
        assert!(out.status.success(), "{stage}: {}", stderr(&out));
    }
    let out_dir = dir.path().join("out");
    assert!(out_dir.join("report.json").is_file());

    let gold = dir.path().join("test.jsonl");
    let pred = out_dir.join("test/synthetic/partition.json");
    let out = cdcr(&["score", "--gold", gold.to_str().unwrap(), "--pred", pred.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    for metric in ["MUC", "B3", "CEAFe", "LEA", "CoNLL"] {
        assert!(text.contains(metric), "{text}");
    }

    let out = cdcr(&["score", "--gold", pred.to_str().unwrap(), "--pred", pred.to_str().unwrap()]);
    assert!(stdout(&out).contains("100.00"), "{}", stdout(&out));
}

#[test]
fn out_of_order_stage_names_itself() {
    let dir = tempfile::tempdir().unwrap();
    let config = quick_bundle(dir.path());
    let out = cdcr(&["train-pairwise", "--config", config.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("[train-pairwise]"), "{}", stderr(&out));
}

#[test]
fn missing_input_fails_in_config_stage() {
    let dir = tempfile::tempdir().unwrap();
    let config = quick_bundle(dir.path());
    std::fs::remove_file(dir.path().join("test.jsonl")).unwrap();
    let out = cdcr(&["pipeline", "--config", config.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("[config]") && err.contains("test.jsonl"), "{err}");
    assert!(!dir.path().join("out/encoder").exists());
}

#[test]
fn oracle_study_at_depth_zero_reports_no_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let config = quick_bundle(dir.path());
    let out = cdcr(&["oracle-study", "--config", config.to_str().unwrap(), "--k", "0"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("(0 pairs"), "{}", stdout(&out));
}

#[test]
fn config_is_required() {
    let out = cdcr(&["pipeline"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("--config"));
}
