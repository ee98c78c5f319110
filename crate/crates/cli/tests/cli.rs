use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn logq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_logq")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn json(out: &Output) -> Value {
    assert_eq!(code(out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn build(dir: &Path, seed: &str) -> Value {
    json(&logq(&[
        "build-corpus",
        "--synthetic",
        "400",
        "--num-sets",
        "80",
        "--embed-dim",
        "8",
        "--seed",
        seed,
        "--out",
        dir.to_str().unwrap(),
    ]))
}

fn train(data: &Path, out: &Path) -> Output {
    let emb = data.join("embeddings.txt");
    logq(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--embeddings",
        emb.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--ql",
        "1",
        "--loss",
        "sw,game",
        "--seed",
        "3",
        "--hidden",
        "4",
        "--epochs",
        "1",
        "--batch-size",
        "16",
        "--quiet",
    ])
}

#[test]
fn build_corpus_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let counts = build(a.path(), "5");
    assert_eq!(build(b.path(), "5"), counts);
    let total: u64 = counts.as_object().unwrap().values().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(total, 80);
    for f in [
        "sets.jsonl",
        "splits.json",
        "pairs.tsv",
        "embeddings.txt",
        "manifest.json",
    ] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&logq(&[])), 1);
    assert_eq!(code(&logq(&["train", "--data", "x"])), 1);
    assert_eq!(
        code(&logq(&[
            "dump",
            "--checkpoint",
            "c",
            "--data",
            "d",
            "--out",
            "o",
            "--limit",
            "0"
        ])),
        1
    );
    let dir = tempfile::tempdir().unwrap();
    let out = logq(&[
        "build-corpus",
        "--out",
        dir.path().to_str().unwrap(),
        "--num-sets",
        "10",
        "--seed",
        "1",
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn data_errors_exit_with_two() {
    let missing = logq(&[
        "baseline",
        "--data",
        "/nonexistent/corpus",
        "--random-embeddings",
        "8",
        "--seed",
        "1",
    ]);
    assert_eq!(code(&missing), 2);

    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    build(data.path(), "1");
    let emb = out.path().join("other.txt");
    fs::write(&emb, "dog 0.1 0.2\ncat 0.3 0.4\n").unwrap();
    let mismatched = logq(&[
        "train",
        "--data",
        data.path().to_str().unwrap(),
        "--embeddings",
        emb.to_str().unwrap(),
        "--out",
        out.path().join("run").to_str().unwrap(),
        "--ql",
        "1",
        "--loss",
        "game",
        "--seed",
        "1",
    ]);
    assert_eq!(code(&mismatched), 2);
    assert!(String::from_utf8_lossy(&mismatched.stderr).contains("digest"));
}

#[test]
fn train_eval_dump_and_play() {
    let data = tempfile::tempdir().unwrap();
    let run = tempfile::tempdir().unwrap();
    build(data.path(), "9");
    let trained = json(&train(data.path(), run.path()));
    assert!(trained["game_acc"].is_number());
    let ckpt = run.path().join("best.ckpt");
    assert!(ckpt.exists());
    assert!(run.path().join("latest.ckpt").exists());
    assert_eq!(
        fs::read_to_string(run.path().join("metrics.jsonl"))
            .unwrap()
            .lines()
            .count(),
        1
    );

    let (d, c) = (data.path().to_str().unwrap(), ckpt.to_str().unwrap());
    let dev = json(&logq(&["eval", "--checkpoint", c, "--data", d, "--split", "dev"]));
    assert_eq!(dev["game_acc"], trained["game_acc"]);
    let nosw = json(&logq(&["eval", "--checkpoint", c, "--data", d, "--split", "test_nosw"]));
    assert!(nosw["sw_pred"].is_null());
    assert_eq!(
        code(&logq(&["eval", "--checkpoint", c, "--data", d, "--split", "nope"])),
        1
    );

    let dumped = run.path().join("dump.jsonl");
    let out = logq(&[
        "dump",
        "--checkpoint",
        c,
        "--data",
        d,
        "--out",
        dumped.to_str().unwrap(),
        "--limit",
        "2",
        "--split",
        "dev",
    ]);
    assert_eq!(code(&out), 0);
    let lines: Vec<Value> = fs::read_to_string(&dumped)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 8);
    assert_eq!(lines[0]["rounds"][0]["question"].as_array().unwrap().len(), 1);

    let set_id = lines[0]["set_id"].as_str().unwrap().to_string();
    let transcript = run.path().join("session.jsonl");
    let mut child = Command::new(env!("CARGO_BIN_EXE_logq"))
        .args([
            "play",
            "--checkpoint",
            c,
            "--set-id",
            &set_id,
            "--transcript",
            transcript.to_str().unwrap(),
        ])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"maybe\ny\nno\n2\n").unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("Please answer y or n."));
    assert!(text.contains("My guess"));
    let session: Value = serde_json::from_str(fs::read_to_string(&transcript).unwrap().trim()).unwrap();
    assert_eq!(session["target"], 1);
    let bits: Vec<u64> = session["rounds"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["response"].as_u64().unwrap())
        .collect();
    assert_eq!(bits, [1, 0]);
    assert_eq!(session["rounds"][0]["source"], "human");
}

#[test]
fn baseline_reports_accuracy() {
    let data = tempfile::tempdir().unwrap();
    build(data.path(), "4");
    let d = data.path().to_str().unwrap();
    let emb = data.path().join("embeddings.txt");
    let random = json(&logq(&[
        "baseline",
        "--data",
        d,
        "--random-embeddings",
        "256",
        "--seed",
        "1",
    ]));
    assert!(random["sets"].as_u64().unwrap() > 0);
    assert!(random["accuracy"].as_f64().unwrap() >= 0.95);
    let given = json(&logq(&[
        "baseline",
        "--data",
        d,
        "--embeddings",
        emb.to_str().unwrap(),
        "--aggregation",
        "mean",
    ]));
    assert_eq!(given["aggregation"], "mean");
}
