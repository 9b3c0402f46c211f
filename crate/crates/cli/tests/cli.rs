use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use recheck_core::corpus::{discrepant_ids, ParallelCorpus, Split};
use serde_json::Value;

fn recheck(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recheck")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = recheck(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path, n: usize, seed: u64) -> String {
    let out = dir.join(format!("synth-{n}-{seed}"));
    let out = out.to_str().unwrap().to_string();
    ok(&["synth", "--n", &n.to_string(), "--rho", "0.15", "--seed", &seed.to_string(), "--out-dir", &out]);
    out
}

/// Hits column of the `k`-row of a rank-eval table.
fn hits_at(table: &str, k: usize) -> usize {
    let row = table
        .lines()
        .find(|l| l.split_whitespace().next() == Some(&k.to_string()))
        .unwrap_or_else(|| panic!("no row for k={k} in\n{table}"));
    row.split_whitespace().nth(1).unwrap().parse().unwrap()
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(recheck(&["--help"]).status.code(), Some(0));
    assert_eq!(recheck(&["rank", "--help"]).status.code(), Some(0));
    let v = recheck(&["--version"]);
    assert_eq!(v.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&v.stdout).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn usage_errors_exit_one_with_help() {
    for args in [
        vec!["frobnicate"],
        vec!["synth", "--out-dir", "x", "--bogus"],
        vec!["rank", "--method", "psychic", "--corpus", "x"],
        vec!["rank-eval", "--ranking", "r", "--corpus", "c", "--thresholds", "ten"],
        vec!["synth", "--rho", "1.5", "--out-dir", "x"],
    ] {
        let out = recheck(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("--help"), "{args:?}");
    }
}

#[test]
fn missing_files_exit_two_naming_the_path() {
    let out = recheck(&["eval", "--gold", "/no/such/gold.conll", "--pred", "/no/such/pred"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/gold"));
    let out = recheck(&["train", "--corpus", "/no/such/corpus", "--model-out", "/tmp/never.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/corpus"));
}

#[test]
fn synth_then_random_rank_matches_the_discrepancy_rate() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_dir = synth(dir.path(), 100, 1);
    let corpus = ParallelCorpus::load(&corpus_dir).unwrap();
    let pool = corpus.ids_in(&[Split::Train, Split::Dev]).len();
    let d = discrepant_ids(&corpus, &[Split::Train, Split::Dev]).unwrap().len();
    assert!(d > 0);

    let (k, runs) = (10usize, 120u64);
    let ranking = dir.path().join("r.jsonl");
    let ranking = ranking.to_str().unwrap();
    let mut total = 0usize;
    for seed in 0..runs {
        ok(&["rank", "--method", "random", "--corpus", &corpus_dir, "--seed", &seed.to_string(), "--out", ranking]);
        let table = ok(&["rank-eval", "--ranking", ranking, "--corpus", &corpus_dir, "--thresholds", "10"]);
        total += hits_at(&table, k);
    }
    let mean = total as f64 / (runs as f64 * k as f64);
    let p = d as f64 / pool as f64;
    let var = k as f64 * p * (1.0 - p) * (pool - k) as f64 / (pool - 1) as f64;
    let se = var.sqrt() / k as f64 / (runs as f64).sqrt();
    assert!((mean - p).abs() <= 3.0 * se, "mean {mean}, expected {p}, se {se}");
}

#[test]
fn threshold_beyond_pool_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_dir = synth(dir.path(), 60, 2);
    let ranking = dir.path().join("r.jsonl");
    let ranking = ranking.to_str().unwrap();
    ok(&["rank", "--method", "random", "--corpus", &corpus_dir, "--out", ranking]);
    let out = recheck(&["rank-eval", "--ranking", ranking, "--corpus", &corpus_dir, "--thresholds", "10,500"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("500"));
}

#[test]
fn eval_of_gold_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_dir = synth(dir.path(), 60, 3);
    let gold = format!("{corpus_dir}/corpus.adj.conll");
    let table = ok(&["eval", "--gold", &gold, "--pred", &gold]);
    let row = table.lines().last().unwrap();
    let cells: Vec<&str> = row.split_whitespace().collect();
    assert_eq!(&cells[..4], ["all", "100.0", "100.0", "100.0"]);
}

#[test]
fn outputs_are_deterministic_and_carry_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), 80, 9);
    let b = dir.path().join("again");
    ok(&["synth", "--n", "80", "--rho", "0.15", "--seed", "9", "--out-dir", b.to_str().unwrap()]);
    for f in ["corpus.adj.conll", "corpus.pre.conll", "corpus.splits", "provenance.json"] {
        let x = std::fs::read(Path::new(&a).join(f)).unwrap();
        let y = std::fs::read(b.join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
    let prov: Value = serde_json::from_slice(&std::fs::read(Path::new(&a).join("provenance.json")).unwrap()).unwrap();
    assert_eq!(prov["tool_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(prov["config_hash"].as_str().unwrap().len(), 64);

    let r1 = ok(&["rank", "--method", "random", "--corpus", &a, "--seed", "4"]);
    let r2 = ok(&["rank", "--method", "random", "--corpus", &a, "--seed", "4"]);
    assert_eq!(r1, r2);
    let header: Value = serde_json::from_str(r1.lines().next().unwrap()).unwrap();
    assert_eq!(header["kind"], "header");
    assert_eq!(header["tool_version"], env!("CARGO_PKG_VERSION"));
    assert!(header["config_hash"].is_string());
}

#[test]
fn train_tag_eval_and_rank_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let c = synth(dir.path(), 150, 5);
    let model = dir.path().join("model.json");
    let model = model.to_str().unwrap();
    ok(&["train", "--corpus", &c, "--annotation", "pre", "--epochs", "8", "--seed", "1", "--model-out", model]);
    assert!(Path::new(&format!("{model}.provenance.json")).exists());

    let preds = ok(&["tag", "--model", model, "--corpus", &c, "--split", "test2"]);
    let header: Value = serde_json::from_str(preds.lines().next().unwrap()).unwrap();
    assert_eq!(header["schema"], "recheck/predictions/v1");
    let pred_path = dir.path().join("p.jsonl");
    std::fs::write(&pred_path, &preds).unwrap();
    let table = ok(&["eval", "--gold", &c, "--split", "test2", "--pred", pred_path.to_str().unwrap(), "--type", "Mutation"]);
    assert!(table.contains("Mutation"));

    // Tagging a CoNLL file read from stdin.
    let mut child = Command::new(env!("CARGO_BIN_EXE_recheck"))
        .args(["tag", "--model", model, "--input", "-"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let conll = std::fs::read(format!("{c}/corpus.adj.conll")).unwrap();
    child.stdin.take().unwrap().write_all(&conll).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 151);

    let conf = ok(&["rank", "--method", "confidence", "--corpus", &c, "--model", model]);
    let scores: Vec<f64> = conf
        .lines()
        .skip(1)
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["score"].as_f64().unwrap())
        .collect();
    assert!(scores.windows(2).all(|w| w[0] <= w[1]));

    let sim = ok(&["rank", "--method", "similarity", "--corpus", &c, "--model", model, "--type", "Mutation"]);
    let first: Value = serde_json::from_str(sim.lines().nth(1).unwrap()).unwrap();
    assert_eq!(first["explanation"]["kind"], "similarity");

    let out = recheck(&["rank", "--method", "similarity", "--corpus", &c]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn split_pairs_versions_and_assigns_every_sentence() {
    let dir = tempfile::tempdir().unwrap();
    let c = synth(dir.path(), 50, 6);
    let out = dir.path().join("resplit");
    ok(&[
        "split",
        "--input",
        &format!("{c}/corpus.adj.conll"),
        "--pre",
        &format!("{c}/corpus.pre.conll"),
        "--ratios",
        "0.6,0.2,0.1,0.1",
        "--seed",
        "3",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    let corpus = ParallelCorpus::load(&out).unwrap();
    assert_eq!(corpus.len(), 50);
    assert_eq!(corpus.ids_in(&[Split::Train]).len(), 30);
    let original = ParallelCorpus::load(&c).unwrap();
    assert_eq!(
        discrepant_ids(&corpus, &Split::ALL).unwrap(),
        discrepant_ids(&original, &Split::ALL).unwrap()
    );
    assert!(out.join("provenance.json").exists());

    let bad = recheck(&["split", "--input", &format!("{c}/corpus.adj.conll"), "--ratios", "0.5,0.5", "--out-dir", "x"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn simulate_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("gap.toml");
    std::fs::write(
        &config,
        "version = 1\nseeds = [0, 1]\n\n[corpus.synthetic]\nn = 120\nrho = 0.2\n\n[tagger]\nepochs = 5\n",
    )
    .unwrap();
    let report = dir.path().join("report.json");
    let table = ok(&["simulate", "gap", "--config", config.to_str().unwrap(), "--out", report.to_str().unwrap()]);
    assert!(table.contains("pre-adjudicated"));
    let v: Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(v["schema"], "recheck/report/v1");
    assert_eq!(v["provenance"]["seeds"], serde_json::json!([0, 1]));

    std::fs::write(&config, "version = 1\nunknown = true\n").unwrap();
    assert_eq!(recheck(&["simulate", "gap", "--config", config.to_str().unwrap()]).status.code(), Some(2));
}

fn get(port: u16, path: &str) -> Option<String> {
    let mut s = TcpStream::connect(("127.0.0.1", port)).ok()?;
    write!(s, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").ok()?;
    let mut buf = String::new();
    s.read_to_string(&mut buf).ok()?;
    Some(buf)
}

#[test]
fn serve_answers_queue_requests() {
    let dir = tempfile::tempdir().unwrap();
    let c = synth(dir.path(), 60, 7);
    let ranking = dir.path().join("r.jsonl");
    ok(&["rank", "--method", "random", "--corpus", &c, "--out", ranking.to_str().unwrap()]);
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut child = Command::new(env!("CARGO_BIN_EXE_recheck"))
        .args(["serve", "--corpus", &c, "--ranking", ranking.to_str().unwrap(), "--port", &port.to_string()])
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(30);
    let response = loop {
        if let Some(r) = get(port, "/queue?limit=1") {
            break r;
        }
        assert!(Instant::now() < deadline, "server did not come up");
        std::thread::sleep(Duration::from_millis(50));
    };
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.contains("recheck/triage/v1"));
    assert!(dir.path().join("adjudications.jsonl").exists());

    let out = recheck(&["serve", "--corpus", &c, "--ranking", "/no/such/ranking.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
}
