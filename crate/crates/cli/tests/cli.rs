use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const TINY: &str = r#"{
    "steps": 6,
    "batch_size": 4,
    "checkpoint_interval": 3,
    "model": {"cond_dim": 20, "noise_dim": 4, "hidden": 8, "layers": 1, "disc_hidden": 8, "posterior_hidden": 4},
    "embedding": {"dim": 10, "window": 2, "negatives": 5, "epochs": 2, "batch_size": 64, "lr": 0.01, "seed": 0}
}"#;

fn songsmith(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_songsmith"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = songsmith(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn trained(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("tiny.json");
    std::fs::write(&cfg, TINY).unwrap();
    let ckpt = dir.join("model.ckpt");
    let metrics = dir.join("metrics.csv");
    ok(&[
        "train",
        "--out",
        p(&ckpt),
        "--config",
        p(&cfg),
        "--metrics",
        p(&metrics),
        "--pretrain-steps",
        "2",
    ]);
    let csv = std::fs::read_to_string(&metrics).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "step,loss_d,loss_g,loss_mi,tau");
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with("6,"));
    ckpt
}

#[test]
fn train_then_generate_is_repeatable_across_processes() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = trained(dir.path());
    let (a, b) = (dir.path().join("a.mid"), dir.path().join("b.mid"));
    let args = |out: &Path| {
        let out = p(out).to_string();
        move |ck: &str| {
            ok(&[
                "generate",
                "--checkpoint",
                ck,
                "--lyrics",
                "Mary had a little lamb",
                "--seed",
                "3",
                "--out",
                &out,
            ])
        }
    };
    let first = args(&a)(p(&ckpt));
    let second = args(&b)(p(&ckpt));
    assert_eq!(first, second);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(std::fs::read(&a).unwrap().starts_with(b"MThd"));

    let doc: Value = serde_json::from_str(&first).unwrap();
    assert_eq!(doc["score"]["steps"].as_array().unwrap().len(), 7);
    assert_eq!(doc["seed"], 3);
}

#[test]
fn eval_and_heatmap_exports() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = trained(dir.path());

    let report: Value = serde_json::from_str(&ok(&["eval", "--checkpoint", p(&ckpt), "--samples", "2"])).unwrap();
    for tv in report["tv"].as_array().unwrap() {
        let tv = tv.as_f64().unwrap();
        assert!((0.0..=1.0).contains(&tv));
    }
    assert!(report["mi_mse"].as_f64().unwrap() >= 0.0);

    let csv = dir.path().join("h.csv");
    let pgm = dir.path().join("h.pgm");
    for source in ["embedding", "interpretable"] {
        ok(&[
            "export-heatmap",
            "--checkpoint",
            p(&ckpt),
            "--syllables",
            "twin,kle,star",
            "--source",
            source,
            "--samples",
            "2",
            "--csv",
            p(&csv),
            "--pgm",
            p(&pgm),
            "--cell",
            "2",
        ]);
        let text = std::fs::read_to_string(&csv).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows[0], ",twin,kle,star");
        assert_eq!(rows.len(), 4);
        assert!(rows[1].starts_with("twin,1.000000,"));
        assert!(std::fs::read(&pgm).unwrap().starts_with(b"P5\n6 6\n255\n"));
    }
}

#[test]
fn embeddings_are_written_per_level() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["train-embeddings", "--out-dir", p(dir.path()), "--epochs", "1"]);
    for name in ["syllables.csv", "words.csv"] {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(text.lines().count() > 10, "{name}");
    }
}

#[test]
fn failures_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.ckpt");
    let out = songsmith(&[
        "generate",
        "--checkpoint",
        p(&missing),
        "--lyrics",
        "la",
        "--out",
        p(&dir.path().join("x.mid")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(
        &bad,
        "{\"lyrics\": \"la la\", \"notes\": [{\"pitch\": 60, \"duration\": 1.0, \"rest\": 0.0}]}\n",
    )
    .unwrap();
    let out = songsmith(&["train", "--corpus", p(&bad), "--out", p(&missing), "--steps", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 1") && err.contains("alignment"), "{err}");
}
