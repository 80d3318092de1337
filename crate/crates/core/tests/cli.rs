//! The `kurosawa` binary: outputs and exit codes (0 ok, 1 validation,
//! 2 backend).

mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{fixture, STORYLINE};
use serde_json::Value;

fn kurosawa(data_dir: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_kurosawa"));
    for (k, _) in std::env::vars() {
        if k.starts_with("KUROSAWA_") {
            cmd.env_remove(k);
        }
    }
    cmd.arg("--data-dir").arg(data_dir).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn parse_renders_the_corpus_script() {
    let dir = tempfile::tempdir().unwrap();
    let script = fixture("corpus/salt_road.txt");
    let out = kurosawa(dir.path(), &["--format", "json", "parse", script.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let parsed = json(&out);
    assert!(parsed["script"]["scenes"].as_array().unwrap().len() > 5);

    let out = kurosawa(dir.path(), &["parse", script.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).lines().any(|l| l.starts_with("INT.") || l.starts_with("EXT.")));
}

#[test]
fn encode_then_decode_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene.json");
    std::fs::write(
        &scene,
        r#"{"elements":[{"kind":"slugline","text":"EXT. PIER - DAWN","line_span":{"start":0,"end":0}},{"kind":"action","text":"Gulls circle.","line_span":{"start":0,"end":0}}]}"#,
    )
    .unwrap();
    let out = kurosawa(dir.path(), &["encode", scene.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let tagged = stdout(&out);
    assert_eq!(tagged.trim_end(), "<bsl> EXT. PIER - DAWN <esl>\n<bal> Gulls circle. <eal>");

    let tagged_path = dir.path().join("scene.tagged");
    std::fs::write(&tagged_path, &tagged).unwrap();
    let out = kurosawa(dir.path(), &["--format", "json", "decode", "--strict", tagged_path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["scene"]["elements"][1]["text"], "Gulls circle.");

    std::fs::write(&tagged_path, "<bd> open").unwrap();
    let out = kurosawa(dir.path(), &["decode", tagged_path.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
}

#[test]
fn validate_plot_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let plot = dir.path().join("plot.txt");
    std::fs::write(&plot, "A <one> B <two-a> C <two-b> D <three>").unwrap();
    let out = kurosawa(dir.path(), &["validate-plot", plot.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("warning: LengthOutOfRange"));

    std::fs::write(&plot, "A <two-a> B <one> C <two-b> D <three>").unwrap();
    let out = kurosawa(dir.path(), &["validate-plot", plot.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("error: OutOfOrderTags"), "{}", stdout(&out));
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&kurosawa(dir.path(), &["no-such-command"])), 1);
    assert_eq!(code(&kurosawa(dir.path(), &["generate", "plot"])), 1);
    assert_eq!(code(&kurosawa(dir.path(), &["--help"])), 0);
    assert_eq!(code(&kurosawa(dir.path(), &["parse", "/definitely/not/here.txt"])), 1);
}

#[test]
fn dataset_workflow_matches_golden_export() {
    let dir = tempfile::tempdir().unwrap();
    let out = kurosawa(dir.path(), &["dataset", "create", "twenty"]);
    assert_eq!(code(&out), 0);
    let id = stdout(&out).trim().to_string();

    let records = fixture("datasets/export_20.jsonl");
    let out = kurosawa(dir.path(), &["dataset", "add", "twenty", "--record", records.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).starts_with("accepted 20, rejected 0"));

    let out = kurosawa(dir.path(), &["dataset", "add", &id, "--record", records.to_str().unwrap()]);
    assert_eq!(code(&out), 1, "duplicate ids are rejected");

    let target = dir.path().join("al.jsonl");
    let out = kurosawa(
        dir.path(),
        &["dataset", "export", &id, "--profile", "AL", "-o", target.to_str().unwrap()],
    );
    assert_eq!(code(&out), 0);
    assert_eq!(
        std::fs::read_to_string(&target).unwrap(),
        common::read_fixture("datasets/export_20.AL.jsonl")
    );

    let out = kurosawa(dir.path(), &["--format", "json", "dataset", "stats", "twenty"]);
    assert_eq!(json(&out)["records"], 20);
    assert_eq!(code(&kurosawa(dir.path(), &["dataset", "export", &id, "--profile", "XX"])), 1);
    assert_eq!(code(&kurosawa(dir.path(), &["dataset", "stats", "missing"])), 1);
}

#[test]
fn eval_prints_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("c.txt");
    let r = dir.path().join("r.txt");
    std::fs::write(&c, "a b c d\n").unwrap();
    std::fs::write(&r, "a b x d\n").unwrap();
    let out = kurosawa(
        dir.path(),
        &["--format", "json", "eval", "--candidates", c.to_str().unwrap(), "--references", r.to_str().unwrap()],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!((json(&out)["bleu"]["2"].as_f64().unwrap() - 50.0).abs() < 1e-9);

    std::fs::write(&r, "a b x d\nextra line\n").unwrap();
    let out = kurosawa(
        dir.path(),
        &["eval", "--candidates", c.to_str().unwrap(), "--references", r.to_str().unwrap()],
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn generate_and_rate_with_the_mock_backend() {
    let dir = tempfile::tempdir().unwrap();
    let out = kurosawa(
        dir.path(),
        &["--format", "json", "generate", "plot", "--storyline", STORYLINE, "--profile", "AS"],
    );
    assert!(matches!(code(&out), 0 | 1), "{}", String::from_utf8_lossy(&out.stderr));
    let item = json(&out);
    let id = item["id"].as_str().unwrap().to_string();
    assert_eq!(item["kind"], "plot_generation");
    let has_errors = !item["payload"]["report"]["errors"].as_array().unwrap().is_empty();
    assert_eq!(code(&out) == 1, has_errors);

    for rater in ["r1", "r2", "r3"] {
        let out = kurosawa(dir.path(), &["ratings", "add", "--item", &id, "--rater", rater, "--scores", "4,4,4,4,4"]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let out = kurosawa(dir.path(), &["--format", "json", "ratings", "summary", "--item", &id]);
    assert_eq!(code(&out), 0);
    let summary = json(&out);
    assert_eq!(summary["n_ratings"], 3);
    assert_eq!(summary["creativity"]["mean"], 4.0);

    let out = kurosawa(dir.path(), &["ratings", "add", "--item", &id, "--scores", "4,4,4,4,9"]);
    assert_eq!(code(&out), 1);
    let out = kurosawa(dir.path(), &["generate", "plot", "--storyline", STORYLINE, "--profile", "ASG"]);
    assert_eq!(code(&out), 1, "genres are required for ASG");
}

#[test]
fn unreachable_live_backend_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port();
    drop(listener);
    let config = dir.path().join("kurosawa.toml");
    std::fs::write(
        &config,
        format!(
            "[backend]\nkind = \"live\"\nretry_attempts = 1\n\n[backend.live]\nurl = \"http://127.0.0.1:{port}/v1/completions\"\nmodel_ref = \"test-model\"\ntimeout_secs = 5\n"
        ),
    )
    .unwrap();
    let out = kurosawa(
        dir.path(),
        &["--config", config.to_str().unwrap(), "generate", "scene", "--description", "A quiet scene."],
    );
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}
