use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vlgrasp"))
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn run_stdin(args: &[&str], input: &str) -> Output {
    let mut child = bin()
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(input.as_bytes())
        .unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn dataset() -> String {
    fixture("dataset.jsonl").to_string_lossy().into_owned()
}

fn oracle() -> String {
    fixture("oracle_predictions.jsonl")
        .to_string_lossy()
        .into_owned()
}

#[test]
fn eval_oracle_fixture_prints_full_marks() {
    let o = run(&["eval", "--dataset", &dataset(), "--pred", &oracle()]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.starts_with("| task | split | total | valid | gIoU |"));
    assert_eq!(out.lines().count(), 2 + 12);
    assert_eq!(out.matches("100.0").count(), 36);
}

#[test]
fn eval_output_ignores_job_count() {
    let a = run(&[
        "eval",
        "--dataset",
        &dataset(),
        "--pred",
        &oracle(),
        "--format",
        "csv",
        "--jobs",
        "1",
    ]);
    let b = run(&[
        "eval",
        "--dataset",
        &dataset(),
        "--pred",
        &oracle(),
        "--format",
        "csv",
        "--jobs",
        "4",
    ]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).starts_with("task,split,total,valid,metric,value\n"));
}

#[test]
fn exit_codes() {
    assert_eq!(
        run(&["eval", "--dataset", &dataset()]).status.code(),
        Some(1)
    );
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["train-toy", "--algo", "grpo"]).status.code(), Some(1));
    assert_eq!(
        run(&["train-toy", "--seed", "1", "--algo", "ppo"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        run(&["train-toy", "--seed", "1", "--group", "1"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        run(&["train-toy", "--seed", "1", "--grid", "4x4"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(run(&["serve", "--alpha", "0.5"]).status.code(), Some(1));
    assert_eq!(
        run(&["eval", "--dataset", "/nonexistent", "--pred", &oracle()])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(run(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"record_id\": 1}\n").unwrap();
    let o = run(&["qc", "--dataset", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
}

#[test]
fn parse_reads_stdin() {
    let o = run_stdin(
        &["parse", "--task", "grasp"],
        "<think>handle</think>\n<answer>(10, 20, 45, 30)</answer>\n",
    );
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["format_ok"], true);
    assert_eq!(v["valid"], true);
    assert_eq!(v["think_text"], "handle");
    assert_eq!(v["payload"]["grasp"]["x"], 10.0);
}

#[test]
fn reward_matches_service_field_for_field() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (
            "bbox",
            json!({"bbox": [10, 10, 50, 50]}),
            "<think>x</think>\n<answer>(12,10),(50,52)</answer>",
        ),
        (
            "grasp",
            json!({"grasps": [[300, 200, 45, 50, 20], [80, 90, 10, 30, 20]]}),
            "<think>x</think><answer>(305, 198, 50, 48)</answer>",
        ),
        (
            "contact",
            json!({"contacts": [[10, 40], [50, 40]], "image_w": 320, "image_h": 240}),
            "<answer>(51,41),(9,40)</answer>",
        ),
        (
            "seg",
            json!({"bbox": [1, 1, 4, 3], "mask_rle": "6 5; 7,4,2,4,2,4,7"}),
            "<think>x</think><answer>(1,1),(3,3)</answer>",
        ),
        (
            "grasp",
            json!({"grasps": [[300, 200, 45, 50, 20]]}),
            "<think>x</think><answer>nowhere</answer>",
        ),
    ];
    let mut requests = String::new();
    let mut expected = Vec::new();
    for (i, (task, gt, text)) in cases.iter().enumerate() {
        let gt_path = dir.path().join(format!("gt{i}.json"));
        let resp_path = dir.path().join(format!("resp{i}.txt"));
        std::fs::write(&gt_path, gt.to_string()).unwrap();
        std::fs::write(&resp_path, text).unwrap();
        let o = run(&[
            "reward",
            "--task",
            task,
            "--gt-file",
            gt_path.to_str().unwrap(),
            "--response-file",
            resp_path.to_str().unwrap(),
        ]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        expected.push(serde_json::from_str::<Value>(&stdout(&o)).unwrap());

        let mut wire_gt = gt.clone();
        let obj = wire_gt.as_object_mut().unwrap();
        let w = obj.remove("image_w");
        let h = obj.remove("image_h");
        let mut req = json!({"id": i, "task": task, "raw_text": text, "gt": wire_gt});
        if let (Some(w), Some(h)) = (w, h) {
            req["image_w"] = w;
            req["image_h"] = h;
        }
        requests.push_str(&req.to_string());
        requests.push('\n');
    }
    let o = run_stdin(&["serve", "--transport", "stdio", "--jobs", "2"], &requests);
    assert_eq!(o.status.code(), Some(0));
    let mut got: Vec<Value> = stdout(&o)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(got.len(), cases.len());
    got.sort_by_key(|v| v["id"].as_u64().unwrap());
    for (mut g, e) in got.into_iter().zip(expected) {
        g.as_object_mut().unwrap().remove("id");
        assert_eq!(g, e);
    }
}

#[test]
fn serve_tcp_reports_its_address() {
    let mut child = bin()
        .args(["serve", "--transport", "tcp", "--port", "0"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut err = BufReader::new(child.stderr.take().unwrap());
    let mut line = String::new();
    err.read_line(&mut line).unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on ")
        .unwrap()
        .to_string();

    let mut s = TcpStream::connect(&addr).unwrap();
    writeln!(s, "not json").unwrap();
    let req = json!({"id": "a", "task": "bbox", "raw_text": "<think>x</think><answer>(1,1),(9,9)</answer>", "gt": {"bbox": [1, 1, 9, 9]}});
    writeln!(s, "{req}").unwrap();
    let mut r = BufReader::new(s);
    let mut lines = Vec::new();
    for _ in 0..2 {
        let mut l = String::new();
        r.read_line(&mut l).unwrap();
        lines.push(serde_json::from_str::<Value>(&l).unwrap());
    }
    child.kill().unwrap();
    let _ = child.wait();
    assert!(lines.contains(&json!({"id": null, "error": "parse"})));
    assert!(lines.iter().any(|v| v["id"] == "a" && v["r_total"] == 1.0));
}

#[test]
fn qc_and_annotation() {
    let o = run(&["qc", "--dataset", &dataset(), "--jobs", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(
        (v["r_s"].as_f64(), v["r_g"].as_f64(), v["r_c"].as_f64()),
        (Some(1.0), Some(1.0), Some(1.0))
    );
    assert_eq!(v["skipped"], 0);
    assert!(v["mtld"].as_f64().unwrap() > 0.0);

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("annotated.jsonl");
    let o = run(&[
        "annotate-contacts",
        "--dataset",
        &dataset(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let rep: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(rep["annotated"], 5);
    assert_eq!(rep["failures"], json!([]));
    let written = std::fs::read_to_string(&out).unwrap();
    assert_eq!(written.lines().count(), 20);
    let q = run(&["qc", "--dataset", out.to_str().unwrap()]);
    let v: Value = serde_json::from_str(&stdout(&q)).unwrap();
    assert_eq!(v["r_c"], 1.0);
}

#[test]
fn convert_round_trip() {
    let o = run_stdin(
        &["convert", "rect-to-contacts"],
        "[100, 50, 0, 40, 20]\n\n[10, 10, 90, 6, 4]\n",
    );
    assert_eq!(o.status.code(), Some(0));
    let lines: Vec<Value> = stdout(&o)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines[0], json!([[80.0, 50.0], [120.0, 50.0]]));

    let o = run_stdin(
        &["convert", "contacts-to-rect", "--jaw", "12"],
        "[[80, 50], [120, 50]]\n",
    );
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v, json!([100.0, 50.0, 0.0, 40.0, 12.0]));

    let o = run_stdin(&["convert", "contacts-to-rect"], "[[1, 1], [1, 1]]\n");
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn convert_lift_on_a_flat_plane() {
    let dir = tempfile::tempdir().unwrap();
    let k = dir.path().join("k.json");
    let d = dir.path().join("d.json");
    std::fs::write(&k, r#"{"fx": 100, "fy": 100, "cx": 50, "cy": 50}"#).unwrap();
    let depth = json!({"width": 100, "height": 100, "data": vec![2.0; 10000]});
    std::fs::write(&d, depth.to_string()).unwrap();
    let o = run_stdin(
        &[
            "convert",
            "lift-6dof",
            "--intrinsics",
            k.to_str().unwrap(),
            "--depth",
            d.to_str().unwrap(),
        ],
        "[50, 50, 0, 20, 10]\n",
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let t: Vec<f64> = serde_json::from_value(v["translation"].clone()).unwrap();
    assert!(t[0].abs() < 1e-12 && t[1].abs() < 1e-12 && (t[2] - 2.0).abs() < 1e-12);
    let r: Vec<Vec<f64>> = serde_json::from_value(v["rotation"].clone()).unwrap();
    // closing axis along +x, approach along +z
    assert!((r[0][0] - 1.0).abs() < 1e-12 && (r[2][2] - 1.0).abs() < 1e-12);
}

#[test]
fn train_toy_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("curve.csv");
    let o = run(&[
        "train-toy",
        "--algo",
        "gspo",
        "--seed",
        "3",
        "--iters",
        "20",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(
        csv.lines().next(),
        Some("iteration,mean_reward,loss,clipped_fraction")
    );
    assert_eq!(csv.lines().count(), 21);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["algo"], "gspo");
    assert_eq!(v["seed"], 3);

    let o = run(&[
        "train-toy",
        "--seed",
        "3",
        "--iters",
        "20",
        "--algo",
        "gspo",
    ]);
    assert_eq!(stdout(&o), csv);
}
