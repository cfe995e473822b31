use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::thread;

use serde_json::Value;

fn demo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/demo.jsonl")
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_batcheval"))
        .args(args)
        .env_remove("JUDGE_API_KEY")
        .env_remove("JUDGE_API_BASE")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn ok(args: &[&str]) -> Value {
    let out = cli(args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap_or(Value::Null)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn sim_run(out: &Path, extra: &[&str]) -> Value {
    let data = demo();
    let mut args = vec!["run", "--dataset", s(&data), "--out", s(out), "--batch-size", "4"];
    args.extend_from_slice(extra);
    ok(&args)
}

#[test]
fn sim_run_writes_a_full_table() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let summary = sim_run(&run, &[]);
    assert_eq!(summary["rounds"], 5);
    assert_eq!(summary["batches"], 15);
    assert_eq!(summary["missing"], Value::Array(vec![]));
    for f in ["manifest.json", "transcripts.jsonl", "score_table.json", "ensemble.json", "partitions.json", "ledger.json"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let table = json(&run.join("score_table.json"));
    let entries = table["entries"].as_object().unwrap();
    assert_eq!(entries.len(), 12);
    assert!(entries.values().all(|v| v.as_array().unwrap().iter().filter(|x| x.is_number()).count() == 5));
    assert_eq!(fs::read_to_string(run.join("transcripts.jsonl")).unwrap().lines().count(), 15);
    let manifest = json(&run.join("manifest.json"));
    assert!(manifest.get("started").is_none());
    assert_eq!(manifest["templates"][0], "topical_chat.two_stage.decimal");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    sim_run(&a, &["--seed", "7"]);
    sim_run(&b, &["--seed", "7"]);
    for f in ["transcripts.jsonl", "score_table.json", "ensemble.json", "partitions.json", "ledger.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let (ma, mb) = (json(&a.join("manifest.json")), json(&b.join("manifest.json")));
    let strip = |mut m: Value| {
        m.as_object_mut().unwrap().remove("outputs");
        m
    };
    assert_eq!(strip(ma), strip(mb));
}

#[test]
fn strategies_differ_only_in_the_strategy_field() {
    let dir = tempfile::tempdir().unwrap();
    let (homo, het) = (dir.path().join("homo"), dir.path().join("het"));
    sim_run(&homo, &["--strategy", "homogeneous"]);
    sim_run(&het, &["--strategy", "heterogeneous"]);
    let (mut a, mut b) = (json(&homo.join("manifest.json")), json(&het.join("manifest.json")));
    assert_eq!(a["config"]["strategy"], "homogeneous");
    assert_eq!(b["config"]["strategy"], "heterogeneous");
    a["config"]["strategy"] = Value::Null;
    b["config"]["strategy"] = Value::Null;
    assert_eq!(a, b);
}

#[test]
fn config_file_wins_over_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "rounds = 2\nstrategy = \"random\"\n").unwrap();
    let run = dir.path().join("run");
    let summary = sim_run(&run, &["--config", s(&cfg), "--rounds", "4", "--seed", "3"]);
    assert_eq!(summary["rounds"], 2);
    let manifest = json(&run.join("manifest.json"));
    assert_eq!(manifest["config"]["strategy"], "random");
    assert_eq!(manifest["config"]["seed"], 3);
}

#[test]
fn invalid_configuration_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let r = cli(&["run", "--dataset", s(&demo()), "--out", s(&out), "--rounds", "0"]);
    assert_eq!(code(&r), 2);
    assert!(!out.join("transcripts.jsonl").exists());
    let r = cli(&["run", "--dataset", s(&demo()), "--out", s(&out), "--criterion", "Fluency"]);
    assert_eq!(code(&r), 2);
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{\"id\":\"a\",\"fields\":{\"Text\":\"x\"}}\n{\"id\":\"a\",\"fields\":{\"Text\":\"y\"}}\n").unwrap();
    assert_eq!(code(&cli(&["validate", "--dataset", s(&bad)])), 2);
    let cfg = dir.path().join("typo.toml");
    fs::write(&cfg, "batchsize = 3\n").unwrap();
    assert_eq!(code(&cli(&["run", "--config", s(&cfg), "--dataset", s(&demo()), "--out", s(&out)])), 2);
}

#[test]
fn api_judge_without_key_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let r = cli(&["run", "--dataset", s(&demo()), "--out", s(&dir.path().join("r")), "--judge", "api"]);
    assert_eq!(code(&r), 3, "{}", String::from_utf8_lossy(&r.stderr));
}

#[test]
fn diag_reports_a_curve_per_round() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    sim_run(&run, &[]);
    let report = ok(&["diag", "--run", s(&run)]);
    let curve = report["decomposition"].as_array().unwrap();
    assert_eq!(curve.len(), 5);
    for (i, p) in curve.iter().enumerate() {
        assert_eq!(p["rounds"], i + 1);
        let (e, m, v) = (p["err_ensemble"].as_f64().unwrap(), p["err_mean"].as_f64().unwrap(), p["variance"].as_f64().unwrap());
        assert!((e - (m - v)).abs() < 1e-9);
    }
    assert_eq!(report["batch_bias"]["per_round"].as_array().unwrap().len(), 5);
    assert!(run.join("report.json").is_file());
    let hist = fs::read_to_string(run.join("histogram.csv")).unwrap();
    assert_eq!(hist.lines().next(), Some("bin_start,bin_end,count"));
    assert_eq!(hist.lines().count(), 1 + 21);
}

#[test]
fn oracle_judge_correlates_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    sim_run(&run, &["--sim-alpha", "0", "--sim-sigma", "0"]);
    let report = ok(&["diag", "--run", s(&run)]);
    let r = report["correlation"]["pearson"].as_f64().unwrap();
    assert!((r - 1.0).abs() < 1e-12, "{r}");
    assert!(report["batch_bias"]["overall"].as_f64().unwrap() < 1e-9);
}

#[test]
fn diag_rejects_missing_runs_and_changed_datasets() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&cli(&["diag", "--run", s(&dir.path().join("nothing"))])), 2);
    let run = dir.path().join("run");
    sim_run(&run, &[]);
    let copy = dir.path().join("edited.jsonl");
    fs::write(&copy, fs::read_to_string(demo()).unwrap().replace("jazz", "blues")).unwrap();
    assert_eq!(code(&cli(&["diag", "--run", s(&run), "--dataset", s(&copy)])), 2);
}

#[test]
fn plot_writes_charts() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    sim_run(&run, &[]);
    ok(&["plot", "--run", s(&run)]);
    for f in ["histogram.svg", "bias.svg", "decomposition.svg", "histogram.csv", "decomposition.csv", "batch_bias.csv"] {
        let path = run.join("plots").join(f);
        assert!(fs::metadata(&path).unwrap().len() > 0, "{f}");
    }
    assert!(fs::read_to_string(run.join("plots/bias.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn simulate_single_cell_is_one_row() {
    let out = cli(&["simulate", "--samples", "20"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("strategy,batch_size,rounds,alpha,sigma,format,seed,pearson"));
    assert!(lines[1].starts_with("heterogeneous,10,5,0.5,0.2,decimal,0,"));
}

#[test]
fn simulate_grid_and_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    ok(&["simulate", "--samples", "20", "--batch-sizes", "2,5", "--strategies", "random,homogeneous", "--seed-count", "2", "--out", s(&csv)]);
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 1 + 8);
    ok(&["simulate", "--samples", "20", "--batch-sizes", "2,5", "--seed-count", "3", "--aggregate", "--out", s(&csv)]);
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1 + 2);
    assert!(text.lines().next().unwrap().contains(",seeds,"));
    assert_eq!(code(&cli(&["simulate", "--batch-sizes", "0"])), 2);
}

#[test]
fn perturb_writes_a_noisy_copy() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("noisy.jsonl");
    let stats = ok(&["perturb", "--dataset", s(&demo()), "--out", s(&out), "--p-delete", "0.3", "--fields", "Response", "--seed", "5"]);
    assert!(stats["deleted"].as_u64().unwrap() > 0);
    let clean: Vec<Value> = fs::read_to_string(demo()).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let noisy: Vec<Value> = fs::read_to_string(&out).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(noisy[0]["dataset"]["name"], "topical_chat-noisy");
    assert_eq!(clean.len(), noisy.len());
    for (c, n) in clean.iter().zip(&noisy).skip(2) {
        assert_eq!(c["id"], n["id"]);
        assert_eq!(c["fields"]["Conversation"], n["fields"]["Conversation"]);
        assert_eq!(c["human"], n["human"]);
    }
    let again = dir.path().join("again.jsonl");
    ok(&["perturb", "--dataset", s(&demo()), "--out", s(&again), "--p-delete", "0.3", "--fields", "Response", "--seed", "5"]);
    assert_eq!(fs::read(&out).unwrap(), fs::read(&again).unwrap());
    assert_eq!(code(&cli(&["perturb", "--dataset", s(&demo()), "--out", s(&again), "--p-delete", "1.5"])), 2);
}

#[test]
fn validate_summarises_a_dataset() {
    let v = ok(&["validate", "--dataset", s(&demo()), "--criterion", "Coherence"]);
    assert_eq!(v["samples"], 12);
    assert_eq!(v["criteria"][0]["human_scores"], 12);
    assert_eq!(v["digest"].as_str().unwrap().len(), 64);
}

/// Answers every request with the same two-sample score block.
fn scoring_server(calls: usize) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    thread::spawn(move || {
        let body = r#"{"choices":[{"message":{"content":"Float Scores: [Sample1:2.5, Sample2:1.5]"}}],"usage":{"prompt_tokens":100,"completion_tokens":20}}"#;
        for _ in 0..calls {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream);
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line.trim_end().is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            let reply = format!(
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            reader.into_inner().write_all(reply.as_bytes()).unwrap();
        }
    });
    base
}

fn two_samples(dir: &Path) -> PathBuf {
    let text = fs::read_to_string(demo()).unwrap();
    let path = dir.join("two.jsonl");
    fs::write(&path, text.lines().take(4).collect::<Vec<_>>().join("\n")).unwrap();
    path
}

#[test]
fn api_run_records_costs_and_timestamps() {
    let dir = tempfile::tempdir().unwrap();
    let data = two_samples(dir.path());
    let run = dir.path().join("run");
    let out = Command::new(env!("CARGO_BIN_EXE_batcheval"))
        .args(["run", "--judge", "api", "--dataset", s(&data), "--out", s(&run), "--rounds", "2", "--batch-size", "2"])
        .args(["--price-prompt", "0.03", "--price-completion", "0.06", "--model", "judge-model"])
        .env("JUDGE_API_KEY", "k")
        .env("JUDGE_API_BASE", scoring_server(2))
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["calls"], 2);
    assert_eq!(summary["total_cost"], "0.0084");
    assert_eq!(summary["cost_per_item"], "0.0042");
    let manifest = json(&run.join("manifest.json"));
    assert_eq!(manifest["judge"]["model"], "judge-model");
    assert!(manifest["started"].is_string() && manifest["finished"].is_string());
    let ensemble = json(&run.join("ensemble.json"));
    let scores: Vec<f64> = ensemble["scores"].as_object().unwrap().values().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(scores.len(), 2);
    assert!(scores.iter().all(|v| [1.5, 2.0, 2.5].contains(v)));
    assert_eq!(scores.iter().sum::<f64>(), 4.0);
}

#[test]
fn budget_overrun_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = two_samples(dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_batcheval"))
        .args(["run", "--judge", "api", "--dataset", s(&data), "--out", s(&dir.path().join("run"))])
        .args(["--rounds", "3", "--batch-size", "2", "--price-prompt", "0.03", "--budget", "0.001"])
        .env("JUDGE_API_KEY", "k")
        .env("JUDGE_API_BASE", scoring_server(3))
        .output()
        .unwrap();
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}
