use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn crashwatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crashwatch"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

#[test]
fn synth_detect_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let scen = dir.path().join("scen");
    let o = crashwatch(&["synth", "--seed", "7", "--kind", "crash_crossing", "--out-dir", s(&scen)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["detections.jsonl", "lanes.json", "truth.json", "scenario.json"] {
        assert!(scen.join(f).is_file(), "{f}");
    }
    let config = dir.path().join("config.json");
    fs::write(&config, "{}").unwrap();

    let events = dir.path().join("events.jsonl");
    let o = crashwatch(&[
        "detect",
        "--detections",
        s(&scen.join("detections.jsonl")),
        "--lanes",
        s(&scen.join("lanes.json")),
        "--config",
        s(&config),
        "--out",
        s(&events),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let log = fs::read_to_string(&events).unwrap();
    let positives = log.lines().filter(|l| l.contains("\"accident\":true")).count();
    assert_eq!(positives, 1, "{log}");
    assert!(dir.path().join("events.jsonl.manifest.json").is_file());

    let again = dir.path().join("again.jsonl");
    let o = crashwatch(&[
        "detect",
        "--detections",
        s(&scen.join("detections.jsonl")),
        "--lanes",
        s(&scen.join("lanes.json")),
        "--config",
        s(&config),
        "--out",
        s(&again),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(&events).unwrap(), fs::read(&again).unwrap());

    let metrics = dir.path().join("metrics.json");
    let o = crashwatch(&[
        "eval",
        "--events",
        s(&events),
        "--truth",
        s(&scen.join("truth.json")),
        "--out",
        s(&metrics),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(&metrics).unwrap();
    assert!(report.contains("\"adr_percent\": 100.0"), "{report}");
    assert!(report.contains("\"far_percent\": 0.0"), "{report}");
}

#[test]
fn synth_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = crashwatch(&["synth", "--seed", "7", "--kind", "crash_crossing", "--out-dir", s(d)]);
        assert_eq!(code(&o), 0);
    }
    for f in ["detections.jsonl", "lanes.json", "truth.json", "scenario.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn rendered_frames_drive_lanes_and_ego() {
    let dir = tempfile::tempdir().unwrap();
    let scen = dir.path().join("scen");
    let o = crashwatch(&["synth", "--seed", "3", "--kind", "crash_rear_end", "--out-dir", s(&scen), "--render"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let frames = scen.join("frames");
    assert!(frames.join("000000.pgm").is_file());

    let lanes = dir.path().join("est_lanes.json");
    let o = crashwatch(&["estimate-lanes", "--frames", s(&frames), "--out", s(&lanes)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(&lanes).unwrap().contains("\"left\""));

    let config = dir.path().join("config.json");
    fs::write(&config, "{}").unwrap();
    let events = dir.path().join("events.jsonl");
    let o = crashwatch(&[
        "detect",
        "--detections",
        s(&scen.join("detections.jsonl")),
        "--frames",
        s(&frames),
        "--config",
        s(&config),
        "--out",
        s(&events),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = fs::read_to_string(dir.path().join("events.jsonl.manifest.json")).unwrap();
    assert!(manifest.contains("\"lane_source\": \"estimated\""), "{manifest}");
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&crashwatch(&[])), 1);
    assert_eq!(code(&crashwatch(&["detect"])), 1);
    let dir = tempfile::tempdir().unwrap();
    let o = crashwatch(&["synth", "--seed", "1", "--kind", "pileup", "--out-dir", s(dir.path())]);
    assert_eq!(code(&o), 1);
    assert_eq!(code(&crashwatch(&["--help"])), 0);
}

#[test]
fn bad_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    fs::write(&config, "{}").unwrap();
    let dets = dir.path().join("d.jsonl");
    fs::write(&dets, "{\"frame\": 0, \"boxes\": [}\n").unwrap();
    let out = dir.path().join("e.jsonl");
    let args = ["detect", "--detections", s(&dets), "--config", s(&config), "--out", s(&out)];
    assert_eq!(code(&crashwatch(&args)), 2);

    fs::write(&dets, "").unwrap();
    fs::write(&config, "{\"fps\": -1}").unwrap();
    assert_eq!(code(&crashwatch(&args)), 2);
    fs::write(&config, "{\"no_such_key\": 1}").unwrap();
    assert_eq!(code(&crashwatch(&args)), 2);

    let missing = dir.path().join("missing.jsonl");
    let o = crashwatch(&["eval", "--events", s(&missing), "--truth", s(&missing), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn truncated_log_is_rejected_by_eval() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("e.jsonl");
    fs::write(&events, "{\"truncated\":true,\"frame\":4,\"error\":\"x\"}\n").unwrap();
    let truth = dir.path().join("t.json");
    fs::write(&truth, "[]").unwrap();
    let out = dir.path().join("m.json");
    let o = crashwatch(&["eval", "--events", s(&events), "--truth", s(&truth), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
}
