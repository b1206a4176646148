use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;

use unicom::data::load_embeddings;

const BIN: &str = env!("CARGO_BIN_EXE_unicom");

fn run(args: &[&str]) -> i32 {
    let out = Command::new(BIN).args(args).env_remove("UNICOM_THREADS").output().unwrap();
    out.status.code().unwrap()
}

fn ok(args: &[&str]) {
    let out = Command::new(BIN).args(args).env_remove("UNICOM_THREADS").output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn synth_writes_expected_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    ok(&["synth", "--out", p(&out), "--seed", "3"]);
    let data = load_embeddings(out.join("data.uceb")).unwrap();
    assert_eq!(data.count(), 500);
    assert_eq!(data.dim(), 64);
    assert!(out.join("manifest.json").exists());
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "synth");
    assert_eq!(manifest["seed"], 3);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = |n: &str| tmp.path().join(n).to_str().unwrap().to_string();

    assert_eq!(run(&["--help"]), 0);
    assert_eq!(run(&["no-such-command"]), 2);
    assert_eq!(run(&["synth", "--out", &dir("a"), "--conflict", "1.5"]), 2);
    assert_eq!(run(&["synth", "--out", &dir("a"), "--threads", "0"]), 2);
    assert_eq!(run(&["gradcheck", "--out", &dir("g"), "--trials", "0"]), 2);
    assert_eq!(run(&["ablate", "--out", &dir("ab"), "--param", "r1", "--values", "0.5"]), 2);

    let bad = tmp.path().join("bad.uceb");
    fs::write(&bad, b"NOPE0000000000000000000000").unwrap();
    assert_eq!(run(&["eval", "--out", &dir("e"), "--input", p(&bad)]), 3);
    assert_eq!(run(&["eval", "--out", &dir("e"), "--input", &dir("missing.uceb")]), 3);

    ok(&["synth", "--out", &dir("s"), "--classes", "4", "--per-class", "5", "--dim", "8"]);
    let data = format!("{}/data.uceb", dir("s"));
    assert_eq!(run(&["cluster", "--out", &dir("c"), "--input", &data, "--k", "0"]), 2);
    assert_eq!(run(&["train", "--out", &dir("t"), "--input", &data, "--r1", "0"]), 2);
    assert_eq!(run(&["eval", "--out", &dir("e"), "--input", &data, "--metric", "map100"]), 2);

    // labels are required for retrieval scoring
    let centroids = tmp.path().join("c2");
    ok(&["cluster", "--out", p(&centroids), "--input", &data, "--k", "3"]);
    let unlabeled = format!("{}/centroids.uceb", p(&centroids));
    assert_eq!(run(&["eval", "--out", &dir("e"), "--input", &unlabeled]), 1);

    assert_eq!(run(&["gradcheck", "--out", &dir("g"), "--trials", "5"]), 0);
    assert_eq!(run(&["gradcheck", "--out", &dir("g"), "--trials", "5", "--inject-sign-flip"]), 1);
}

#[test]
fn config_file_and_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"seed": 4, "synth": {"true_classes": 3, "per_class": 4, "dim": 5}}"#).unwrap();
    let out = tmp.path().join("o");
    ok(&["synth", "--out", p(&out), "--config", p(&cfg), "--dim", "6"]);
    let data = load_embeddings(out.join("data.uceb")).unwrap();
    assert_eq!((data.count(), data.dim()), (12, 6));

    // malformed config files are format errors
    for bad in [r#"{"synth": {"colour": 1}}"#, r#"{"colour": 1}"#, "{"] {
        fs::write(&cfg, bad).unwrap();
        assert_eq!(run(&["synth", "--out", p(&out), "--config", p(&cfg)]), 3, "{bad}");
    }
    fs::write(&cfg, r#"{"threads": 0}"#).unwrap();
    assert_eq!(run(&["synth", "--out", p(&out), "--config", p(&cfg)]), 2);
}

fn pipeline(root: &Path, threads: &str) {
    let s = root.join("synth");
    let c = root.join("cluster");
    let t = root.join("train");
    let e = root.join("eval");
    let m = root.join("map");
    let common = ["--seed", "7", "--threads", threads];
    let with = |v: Vec<&str>| {
        let mut all = v;
        all.extend_from_slice(&common);
        ok(&all);
    };
    with(vec!["synth", "--out", p(&s), "--classes", "6", "--per-class", "20", "--dim", "16", "--conflict", "0.3"]);
    let data = s.join("data.uceb");
    let truth = s.join("truth.uceb");
    with(vec!["cluster", "--out", p(&c), "--input", p(&data), "--k", "6"]);
    with(vec![
        "train", "--out", p(&t), "--input", p(&c.join("labeled.uceb")), "--epochs", "3", "--batch-size", "16",
        "--lr", "0.01", "--r1", "0.5", "--r2", "0.5",
    ]);
    with(vec![
        "eval", "--out", p(&e), "--input", p(&truth), "--checkpoint", p(&t), "--k", "1,5", "--dims", "8",
    ]);
    with(vec![
        "eval", "--out", p(&m), "--input", p(&truth), "--gallery", p(&truth), "--metric", "map100",
    ]);
}

#[test]
fn single_thread_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path(), "1");
    pipeline(b.path(), "1");
    for stage in ["synth", "cluster", "train", "eval", "map"] {
        let fa = files(&a.path().join(stage));
        let fb = files(&b.path().join(stage));
        assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
        for (name, bytes) in &fa {
            if name == "manifest.json" {
                continue;
            }
            assert!(bytes == &fb[name], "{stage}/{name} differs");
        }
    }
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(dir.join("report.json")).unwrap()).unwrap()
}

fn close(a: &serde_json::Value, b: &serde_json::Value) {
    match (a, b) {
        (serde_json::Value::Number(x), serde_json::Value::Number(y)) => {
            assert!((x.as_f64().unwrap() - y.as_f64().unwrap()).abs() <= 1e-9, "{x} vs {y}");
        }
        (serde_json::Value::Object(x), serde_json::Value::Object(y)) => {
            assert_eq!(x.keys().collect::<Vec<_>>(), y.keys().collect::<Vec<_>>());
            for (k, v) in x {
                close(v, &y[k]);
            }
        }
        (serde_json::Value::Array(x), serde_json::Value::Array(y)) => {
            assert_eq!(x.len(), y.len());
            x.iter().zip(y).for_each(|(u, v)| close(u, v));
        }
        _ => assert_eq!(a, b),
    }
}

#[test]
fn thread_count_does_not_move_metrics() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path(), "1");
    pipeline(b.path(), "4");
    for stage in ["eval", "map"] {
        close(&report(&a.path().join(stage)), &report(&b.path().join(stage)));
    }
    let curve = |d: &Path| -> Vec<f64> {
        fs::read_to_string(d.join("train/loss_curve.tsv"))
            .unwrap()
            .lines()
            .map(|l| l.split('\t').nth(1).unwrap().parse().unwrap())
            .collect()
    };
    let (ca, cb) = (curve(a.path()), curve(b.path()));
    assert_eq!(ca.len(), cb.len());
    for (x, y) in ca.iter().zip(&cb) {
        assert!((x - y).abs() <= 1e-9);
    }
}
