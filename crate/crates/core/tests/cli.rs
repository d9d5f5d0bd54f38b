use std::path::Path;
use std::process::{Command, Output};

fn edgehst(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgehst"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = edgehst(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// gen → train → score (val, test) → threshold → eval in one temp dir.
fn full_run(root: &Path, seed: &str) {
    let gen = root.join("gen");
    ok(&[
        "gen", "--nodes", "150", "--edges", "5000", "--inject", "burst,spike", "--communities", "5",
        "--seed", seed, "--run-dir", p(&gen),
    ]);
    let stream = gen.join("stream.csv");
    let train = root.join("train");
    ok(&[
        "train", "--stream", p(&stream), "--epochs", "2", "--window", "256", "--feature-dim", "64",
        "--seed", seed, "--run-dir", p(&train),
    ]);
    for part in ["val", "test"] {
        ok(&[
            "score", "--stream", p(&stream), "--model", p(&train), "--split-part", part,
            "--run-dir", p(&root.join(part)),
        ]);
    }
    ok(&[
        "threshold", "--scores", p(&root.join("val/scores.csv")), "--oracle",
        "--run-dir", p(&root.join("threshold")),
    ]);
    ok(&[
        "eval", "--scores", p(&root.join("test/scores.csv")),
        "--threshold", p(&root.join("threshold/threshold.json")),
        "--slices", "10", "--subsample", "0.5", "--repeats", "5",
        "--run-dir", p(&root.join("eval")),
    ]);
}

#[test]
fn commands_compose_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    full_run(root, "3");

    for f in ["gen/manifest.json", "gen/injections.json", "train/model.json", "train/forests.json",
              "train/manifest.json", "test/manifest.json", "threshold/threshold.json", "eval/metrics.json"] {
        assert!(root.join(f).exists(), "missing {f}");
    }
    let th = json(&root.join("threshold/threshold.json"));
    assert_eq!(th["oracle_checked"], true);
    assert!(th["tau_star"].is_f64());

    let m = json(&root.join("eval/metrics.json"));
    for key in ["roc_auc", "ap", "f1", "balanced_accuracy", "tau"] {
        assert!(m.get(key).is_some(), "metrics.json lacks {key}");
    }
    assert_eq!(m["subsample"]["repeats"], 5);

    let slices = std::fs::read_to_string(root.join("eval/slices.csv")).unwrap();
    let mut lines = slices.lines();
    assert_eq!(lines.next(), Some("window_index,auc,n_edges"));
    assert_eq!(lines.count(), 10);

    let scores = std::fs::read_to_string(root.join("test/scores.csv")).unwrap();
    assert_eq!(scores.lines().count() - 1, 1000);

    let manifest = json(&root.join("train/manifest.json"));
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 3);
}

#[test]
fn runs_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    full_run(a.path(), "5");
    full_run(b.path(), "5");
    for f in ["gen/stream.csv", "train/model.json", "train/forests.json", "test/scores.csv", "threshold/threshold.json"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between identical runs");
    }
}

#[test]
fn default_run_dir_is_named_by_timestamp_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["gen", "--nodes", "50", "--edges", "500", "--seed", "42", "--runs-root", p(dir.path())]);
    let run = Path::new(out.trim());
    assert!(run.starts_with(dir.path()));
    assert!(run.file_name().unwrap().to_str().unwrap().ends_with("-s42"));
    assert!(run.join("stream.csv").exists());
}

#[test]
fn exit_codes() {
    // usage
    assert_eq!(edgehst(&["train"]).status.code(), Some(1));
    assert_eq!(edgehst(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(edgehst(&["eval", "--scores", "x.csv"]).status.code(), Some(1));
    assert_eq!(edgehst(&["--help"]).status.code(), Some(0));

    // data
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "a,b,5\nb,c,1\n").unwrap();
    let out = edgehst(&["train", "--stream", p(&bad), "--run-dir", p(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let missing = dir.path().join("nope.csv");
    assert_eq!(
        edgehst(&["threshold", "--scores", p(&missing), "--run-dir", p(&dir.path().join("t"))]).status.code(),
        Some(2)
    );

    // config
    let out = edgehst(&["gen", "--nodes", "10", "--edges", "100", "--cross-rate", "2", "--run-dir", p(&dir.path().join("g"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn eval_accepts_a_literal_tau() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("s.csv");
    let mut text = String::from("# seq,source,destination,timestamp,score,source_term,dest_term,edge_term,cache_hit,label\n");
    for i in 0..40 {
        let label = (i % 4 == 0) as u8;
        let s = if label == 1 { 0.9 } else { 0.1 + i as f64 / 1000.0 };
        text.push_str(&format!("{i},a{i},b,{i},{s},0,0,{s},0,{label}\n"));
    }
    std::fs::write(&scores, text).unwrap();
    let stdout = ok(&["eval", "--scores", p(&scores), "--tau", "0.5", "--slices", "2", "--run-dir", p(&dir.path().join("e"))]);
    let m: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(m["f1"], 1.0);
    assert_eq!(m["roc_auc"], 1.0);
}
