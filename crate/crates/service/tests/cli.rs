use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

const CORE_DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/data");

fn run(args: &[&str], stdin: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_gesturegen"))
        .args(args)
        .env_remove("GESTURE_LLM_API_KEY")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn select_trust_fund() {
    let out = run(&["select", "--backend", "mock"], "We put it into a trust fund.\n");
    assert!(out.status.success(), "{}", stderr(&out));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let proposals = v["utterances"][0]["proposals"].as_array().unwrap();
    assert_eq!(proposals.len(), 1);
    assert_eq!(proposals[0]["intent"], "Container");
    assert_eq!(proposals[0]["span"], serde_json::json!([3, 6]));
}

#[test]
fn empty_stdin_is_silent() {
    for cmd in ["select", "bml"] {
        let out = run(&[cmd], "");
        assert_eq!(out.status.code(), Some(0));
        assert!(out.stdout.is_empty());
    }
}

#[test]
fn unreachable_backend_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let config = dir.path().join("gesturegen.toml");
    std::fs::write(
        &config,
        format!("[backend]\nkind = \"remote\"\nendpoint = \"http://127.0.0.1:{port}/v1/chat/completions\"\ntimeout_secs = 2\n"),
    )
    .unwrap();
    let out = run(&["select", "--config", config.to_str().unwrap()], "Hello there.");
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("backend unavailable"), "{}", stderr(&out));
}

#[test]
fn bml_to_files() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = run(
        &["bml", "--out", out_dir.to_str().unwrap()],
        "We put it into a trust fund.",
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let files: Vec<_> = std::fs::read_dir(&out_dir).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(files, vec!["u0.bml"]);
    let bml = std::fs::read_to_string(out_dir.join("u0.bml")).unwrap();
    assert_eq!(bml.matches("<gesture ").count(), 1);
    assert!(bml.contains(r#"stroke-start="T3" lexeme="Container" type="METAPHORIC" emotion="neutral""#));
}

#[test]
fn timings_file_emits_timeline() {
    let dir = tempfile::tempdir().unwrap();
    let times = [0.0, 0.31, 0.52, 0.9, 1.12, 1.4, 1.77, 2.05];
    let timing_json = format!(
        "{{{}}}",
        times
            .iter()
            .enumerate()
            .map(|(i, t)| format!("\"T{i}\": {t}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    let timings = dir.path().join("timings.json");
    std::fs::write(&timings, timing_json).unwrap();
    let out_dir = dir.path().join("out");
    let out = run(
        &["bml", "--timings", timings.to_str().unwrap(), "--out", out_dir.to_str().unwrap()],
        "We put it into a trust fund.",
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let line = std::fs::read_to_string(out_dir.join("u0.timeline.jsonl")).unwrap();
    let v: Value = serde_json::from_str(line.trim()).unwrap();
    // One gesture: stroke at its mark, preparation 0.25 s earlier, held for
    // the minimum duration.
    let stroke = times[3];
    assert_eq!(v["lexeme"], "Container");
    assert_eq!(v["stroke_time"].as_f64().unwrap(), stroke);
    assert_eq!(v["start_time"].as_f64().unwrap(), stroke - 0.25);
    assert_eq!(v["end_time"].as_f64().unwrap(), stroke + 1.0);
    assert_eq!(v["dropped"], false);
}

#[test]
fn timings_missing_a_mark_fail_the_utterance() {
    let dir = tempfile::tempdir().unwrap();
    let timings = dir.path().join("timings.json");
    std::fs::write(&timings, r#"{"T0": 0.0, "T1": 0.4}"#).unwrap();
    let out = run(&["bml", "--timings", timings.to_str().unwrap()], "We put it into a trust fund.");
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("T3"));
}

fn expected() -> Value {
    serde_json::from_str(&std::fs::read_to_string(Path::new(CORE_DATA).join("recorded_expected.json")).unwrap())
        .unwrap()
}

#[test]
fn eval_replay_reproduces_fixture_counts() {
    let labels = format!("{CORE_DATA}/replica_labels.jsonl");
    let out = run(&["eval", "--backend", "replay", "--labels", &labels], "");
    assert!(out.status.success(), "{}", stderr(&out));
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let want = expected();
    let sections = report["approaches"].as_array().unwrap();
    assert_eq!(sections.len(), 4);
    for s in sections {
        let a = s["approach"].as_u64().unwrap().to_string();
        for key in ["both", "model_only", "speaker_only"] {
            assert_eq!(s["alignment"][key], want["approaches"][&a][key], "approach {a} {key}");
        }
        assert!(s["appropriateness"].is_object());
    }
}

#[test]
fn eval_single_approach() {
    let out = run(&["eval", "--backend", "replay", "--approaches", "1"], "");
    assert!(out.status.success(), "{}", stderr(&out));
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let sections = report["approaches"].as_array().unwrap();
    assert_eq!(sections.len(), 1);
    assert_eq!(sections[0]["approach"], 1);
    assert!(sections[0].get("appropriateness").is_none());
}

#[test]
fn eval_missing_labels_warns() {
    let out = run(&["eval", "--backend", "replay", "--approaches", "2", "--labels", "/nonexistent/labels.jsonl"], "");
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("warning"));
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(report["approaches"][0].get("appropriateness").is_none());
    assert_eq!(report["approaches"][0]["alignment"]["both"], expected()["approaches"]["2"]["both"]);
}

#[test]
fn eval_table_and_report_file() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let out = run(
        &["eval", "--backend", "replay", "--table", "--out", report.to_str().unwrap()],
        "",
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).lines().count(), 5);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(v["tolerance"], 2);
}

#[test]
fn corrupt_corpus_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    std::fs::write(&corpus, "{\"format\": \"gesture-corpus\"\nthis is not json\n").unwrap();
    let out = run(&["eval", "--corpus", corpus.to_str().unwrap()], "");
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("corpus.jsonl"), "{}", stderr(&out));
}

#[test]
fn bad_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("gesturegen.toml");
    std::fs::write(&config, "[scheduler]\nseconds_per_word = 0\n").unwrap();
    let out = run(&["select", "--config", config.to_str().unwrap()], "Hello.");
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("seconds_per_word"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("gesturegen.toml");
    std::fs::write(&config, "[backend]\nkind = \"remote\"\nendpoint = \"http://127.0.0.1:9/\"\n").unwrap();
    let out = run(
        &["select", "--config", config.to_str().unwrap(), "--backend", "mock"],
        "We put it into a trust fund.",
    );
    assert!(out.status.success(), "{}", stderr(&out));
}
