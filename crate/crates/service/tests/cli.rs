use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dixit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dixit")).args(args).output().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stdout);
    serde_json::from_str(text.lines().last().unwrap_or("null")).unwrap()
}

fn stderr_json(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str(text.lines().last().unwrap_or("null")).unwrap()
}

const ROSTER: &str = r#"
seed = 42

[[roster]]
name = "oracle"
kind = "scripted"
policy = { id = "oracle_listener" }

[[roster]]
name = "random"
kind = "scripted"
policy = { id = "random_uniform" }
"#;

fn tournament(dir: &Path) -> std::path::PathBuf {
    let config = dir.join("t.toml");
    std::fs::write(&config, ROSTER).unwrap();
    let out = dir.join("run");
    let o = dixit(&["run-tournament", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = stdout_json(&o);
    assert_eq!(summary["matches"], 3);
    assert_eq!(summary["rounds"], 72);
    out
}

#[test]
fn two_model_roster_writes_three_logs_and_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = tournament(dir.path());
    let logs = std::fs::read_dir(out.join("matches")).unwrap().count();
    assert_eq!(logs, 3);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["model_order"], serde_json::json!(["oracle", "random"]));

    let o = dixit(&["report", "--manifest", out.join("tournament.json").to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    for column in ["Storyteller", "Listener", "Overall(points)", "Overall(mean)", "Head-to-head", "Stability", "chi2"] {
        assert!(text.contains(column), "missing {column}");
    }

    let o = dixit(&["replay", "--log", out.join("tournament.json").to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(stdout_json(&o)["matches"].as_array().unwrap().len(), 3);
}

#[test]
fn tampered_log_fails_replay_with_the_round() {
    let dir = tempfile::tempdir().unwrap();
    let out = tournament(dir.path());
    let log = out.join("matches/match-002.jsonl");
    let text = std::fs::read_to_string(&log).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut round: Value = serde_json::from_str(&lines[5]).unwrap();
    let d = round["round"]["deltas"]["2"].as_u64().unwrap();
    round["round"]["deltas"]["2"] = Value::from(d ^ 1);
    lines[5] = round.to_string();
    std::fs::write(&log, lines.join("\n") + "\n").unwrap();

    let o = dixit(&["replay", "--log", log.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = stderr_json(&o);
    assert_eq!(err["error"], "ReplayDivergence");
    assert_eq!(err["detail"]["round_index"], 5);
    assert_eq!(err["detail"]["match_id"], 2);
}

#[test]
fn bad_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "seed = 1\n[[roster]]\nname = \"solo\"\nkind = \"scripted\"\npolicy = { id = \"first_card\" }\n").unwrap();
    let o = dixit(&["run-tournament", "--config", config.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "ConfigError");
}

#[test]
fn curate_then_run_bench() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    std::fs::create_dir(&corpus).unwrap();
    let words = ["lantern", "river", "owl", "mirror", "storm", "garden", "tower", "violin", "whale", "key", "mask", "snow"];
    let mut labels = serde_json::Map::new();
    for i in 1..=24usize {
        std::fs::write(corpus.join(format!("{i}.png")), [0x89, b'P', b'N', b'G', i as u8]).unwrap();
        let text = format!("{} {} {}", words[i % 12], words[(i * 5) % 12], words[(i * 7 + 3) % 12]);
        labels.insert(i.to_string(), Value::String(text));
    }
    std::fs::write(corpus.join("labels.json"), Value::Object(labels).to_string()).unwrap();
    let out = dir.path().join("bench");
    let o = dixit(&[
        "curate-bench",
        "--corpus",
        corpus.to_str().unwrap(),
        "--k-distractors",
        "3",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o)["items"], 48);
    let first = std::fs::read(out.join("bench.json")).unwrap();

    // Cached captions and embeddings give the same bench.
    let o = dixit(&["curate-bench", "--corpus", corpus.to_str().unwrap(), "--seed", "7", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(out.join("bench.json")).unwrap(), first);

    for strategy in ["direct", "entailment"] {
        let o = dixit(&[
            "run-bench",
            "--bench",
            out.join("bench.json").to_str().unwrap(),
            "--model",
            "oracle_listener",
            "--strategy",
            strategy,
            "--corpus",
            corpus.to_str().unwrap(),
            "--out",
            dir.path().join("reports").to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let s = stdout_json(&o);
        assert_eq!(s["total_acc"], 100.0);
        assert_eq!(s["evaluated"], 48);
    }
}
