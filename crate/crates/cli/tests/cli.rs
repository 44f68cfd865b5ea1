use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use curekit::ingest::{make_fixture_dataset, FixtureSpec};
use curekit::io::to_jsonl_string;
use curekit::{Split, TaskFamily};
use tempfile::TempDir;

fn curekit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curekit")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn fixture(dir: &TempDir) -> PathBuf {
    let spec = FixtureSpec::single("fx", TaskFamily::Pg, Split::Train, &[("A", 20), ("B", 80)]);
    let path = dir.path().join("records.jsonl");
    std::fs::write(&path, to_jsonl_string(&make_fixture_dataset(1, &spec)).unwrap()).unwrap();
    path
}

#[test]
fn unknown_subcommand_is_usage_error() {
    assert_eq!(code(&curekit(&["frobnicate"])), 2);
    assert_eq!(code(&curekit(&[])), 2);
    assert_eq!(code(&curekit(&["--help"])), 0);
}

#[test]
fn stochastic_command_without_seed_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let recs = fixture(&dir);
    let o = curekit(&["sample", "--records", p(&recs)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("--seed"));
}

#[test]
fn eval_on_matching_fixture_writes_report_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let recs = fixture(&dir);
    let tasks = dir.path().join("tasks.jsonl");
    assert_eq!(code(&curekit(&["gen-tasks", "--records", p(&recs), "--out", p(&tasks)])), 0);
    // gold responses as predictions score IoU 1
    let preds: String = std::fs::read_to_string(&tasks)
        .unwrap()
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            let id = v["structured"]["id"].as_str().map(str::to_string).unwrap_or_else(|| {
                let r: curekit::AnnotationRecord = serde_json::from_value(v["structured"].clone()).unwrap();
                r.key()
            });
            serde_json::json!({"id": id, "output": v["response"]}).to_string() + "\n"
        })
        .collect();
    let pred = dir.path().join("pred.jsonl");
    std::fs::write(&pred, preds).unwrap();
    let report = dir.path().join("report.json");
    let o = curekit(&["eval", "--pred", p(&pred), "--gold", p(&recs), "--task", "PG", "--out", p(&report)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(r["n"], 100);
    assert_eq!(r["micro_iou"], 1.0);
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("report.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(m["inputs"].as_object().unwrap().len(), 2);
}

#[test]
fn plan_without_metrics_for_a_source_fails_with_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let recs = fixture(&dir);
    let metrics = dir.path().join("metrics.jsonl");
    std::fs::write(&metrics, r#"{"source": "other-pg", "iou": 0.5, "text_score": null, "per_category": {}, "per_subtask": {}}"#).unwrap();
    let o = curekit(&["plan", "--records", p(&recs), "--metrics", p(&metrics)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("metrics"), "{}", stderr(&o));
}

#[test]
fn plan_with_metrics_moves_mass_to_the_worse_category() {
    let dir = tempfile::tempdir().unwrap();
    let recs = fixture(&dir);
    let metrics = dir.path().join("metrics.jsonl");
    std::fs::write(
        &metrics,
        r#"{"source": "fx-pg", "iou": 0.5, "per_category": {"A": {"iou": 0.2}, "B": {"iou": 0.9}}, "per_subtask": {}}"#,
    )
    .unwrap();
    let out = dir.path().join("state.json");
    let o = curekit(&["plan", "--records", p(&recs), "--metrics", p(&metrics), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let st: curekit::curriculum::CurriculumState = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    let cats = &st.sources[0].intra[0].categories;
    assert!(cats.iter().find(|c| c.category == "A").unwrap().prob > 0.85);
}

#[test]
fn simulate_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let recs = fixture(&dir);
    let learner = dir.path().join("learner.json");
    std::fs::write(
        &learner,
        r#"{"default": {"e0": 0.5, "k": 0.001, "floor": 0.05}, "categories": {"A": {"e0": 0.8, "k": 0.0005, "floor": 0.05}}}"#,
    )
    .unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"version": 1, "curriculum": {"warmup_steps": 200, "reweight_interval": 100, "total_steps": 500}}"#).unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = curekit(&["simulate", "--config", p(&config), "--seed", seed, "--records", p(&recs), "--learner", p(&learner), "--out", p(&out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        std::fs::read(out).unwrap()
    };
    let a = run("a.json", "7");
    assert_eq!(a, run("b.json", "7"));
    assert_ne!(a, run("c.json", "8"));
    let log: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(log["stages"].as_array().unwrap().len(), 4);
}

#[test]
fn ingest_sample_and_augment_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.jsonl");
    std::fs::write(
        &raw,
        concat!(
            r#"{"image_id":"i1","location":"spine","box":[0.5,0.5,0.1,0.8],"sentence":"Normal alignment."}"#,
            "\n",
            r#"{"image_id":"i2","location":"abdomen","box":[0.48,0.78,0.73,0.44],"sentence":"No free air."}"#,
            "\n"
        ),
    )
    .unwrap();
    let recs = dir.path().join("recs.jsonl");
    let o = curekit(&["ingest", "--input", p(&raw), "--format", "scene-graph", "--dataset", "cig", "--out", p(&recs)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(&recs).unwrap().lines().count(), 6);

    let sample = dir.path().join("sample.jsonl");
    assert_eq!(code(&curekit(&["sample", "--seed", "3", "--records", p(&recs), "--n", "25", "--out", p(&sample)])), 0);
    assert_eq!(std::fs::read_to_string(&sample).unwrap().lines().count(), 25);

    let tasks = dir.path().join("tasks.jsonl");
    assert_eq!(code(&curekit(&["gen-tasks", "--records", p(&recs), "--out", p(&tasks)])), 0);
    let aug = dir.path().join("aug.jsonl");
    let o = curekit(&["augment", "--seed", "11", "--instances", p(&tasks), "--trace", "--out", p(&aug)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(&aug).unwrap().lines().count(), 6);

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"image_id\": 3}\n").unwrap();
    assert_eq!(code(&curekit(&["ingest", "--input", p(&bad), "--format", "scene-graph", "--dataset", "cig"])), 1);
    assert_eq!(code(&curekit(&["ingest", "--input", p(&bad), "--format", "nope", "--dataset", "cig"])), 2);
}

#[test]
fn preprocess_reports_eval_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("img.json");
    let values: Vec<u16> = (0..64 * 64).map(|i| (i % 256) as u16).collect();
    std::fs::write(&img, serde_json::json!({"width": 64, "height": 64, "max_level": 255, "values": values}).to_string()).unwrap();
    let o = curekit(&["preprocess", "--image", p(&img)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["meta"]["clahe_clip"], 3.0);
    assert_eq!(v["image"]["width"], 448);
}

const VERDICT: &str = r#"{"reason": "r", "gt_has_abnormalities": "yes", "gt_has_devices": "no", "gen_has_abnormalities": "yes", "gen_has_devices": "no", "gen_has_correct_abnormalities": "yes", "gen_has_hallucinated_abnormalities": "no", "gen_has_correct_devices": "no", "gen_has_hallucinated_devices": "no", "nli_status": "entailment"}"#;

/// Answers `n` POSTs with `VERDICT`, checking each carries model and prompt.
fn mock_judge(n: usize) -> (String, std::thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/judge", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        for stream in listener.incoming().take(n) {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
            assert!(req["prompt"].as_str().unwrap().contains("[GEN]"));
            assert_eq!(req["model"], "mock-model");
            write!(stream, "HTTP/1.1 200 OK\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{VERDICT}", VERDICT.len()).unwrap();
        }
    });
    (url, handle)
}

#[test]
fn judge_then_aggregate_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("pred.jsonl");
    std::fs::write(
        &pred,
        concat!(
            r#"{"id": "a", "output": "Spine: [0.50,0.50,0.10,0.80] Normal alignment."}"#,
            "\n",
            r#"{"id": "b", "output": "Heart size is normal."}"#,
            "\n"
        ),
    )
    .unwrap();
    let gold = dir.path().join("gold.jsonl");
    std::fs::write(
        &gold,
        concat!(
            r#"{"id": "a", "anatomy": "Spine", "report": "Normal spinal alignment."}"#,
            "\n",
            r#"{"id": "b", "anatomy": "Cardiac Silhouette", "report": "Heart size normal."}"#,
            "\n",
            r#"{"id": "c", "anatomy": "Spine", "report": "No prediction for this one."}"#,
            "\n"
        ),
    )
    .unwrap();
    let (url, server) = mock_judge(2);
    let verdicts = dir.path().join("verdicts.jsonl");
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"version": 1, "judge": {"api_key_env": null, "parallelism": 1}}"#).unwrap();
    let o = curekit(&[
        "judge", "--config", p(&config), "--pred", p(&pred), "--gold", p(&gold), "--endpoint", &url, "--model", "mock-model", "--out", p(&verdicts),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    server.join().unwrap();
    assert_eq!(std::fs::read_to_string(&verdicts).unwrap().lines().count(), 3);

    let table = dir.path().join("table.json");
    let o = curekit(&["judge-aggregate", "--in", p(&verdicts), "--out", p(&table)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let t: serde_json::Value = serde_json::from_slice(&std::fs::read(&table).unwrap()).unwrap();
    assert_eq!(t["anatomies"].as_array().unwrap().len(), 2);
    assert_eq!(t["mean"]["entailment_rate"], 100.0);
    assert_eq!(t["verdict_failures"]["Spine"], 1);
}

#[test]
fn json_logs_are_structured() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.jsonl");
    std::fs::write(&raw, r#"{"image_id":"i1","location":"spine","sentence":"Normal."}"#).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_curekit"))
        .args(["--log", "json", "ingest", "--input", p(&raw), "--format", "scene-graph", "--dataset", "cig"])
        .env("RUST_LOG", "info")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let line = stderr(&o).lines().next().unwrap().to_string();
    let v: serde_json::Value = serde_json::from_str(&line).unwrap();
    assert_eq!(v["level"], "INFO");
}
