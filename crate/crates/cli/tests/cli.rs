use std::path::Path;
use std::process::{Command, Output};

fn bpminer(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bpminer"))
        .current_dir(dir)
        .env_remove("BPMINER_API_KEY")
        .args(args)
        .output()
        .expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn synth_then_run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = bpminer(dir.path(), &["synth", "fixture.xml.gz"]);
    assert!(out.status.success(), "{}", text(&out.stderr));

    let args = [
        "run",
        "--input",
        "fixture.xml.gz",
        "--out",
        "run",
        "--backend",
        "mock",
    ];
    let out = bpminer(dir.path(), &args);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let report = text(&out.stdout);
    assert!(report.contains("cohort"), "{report}");
    assert!(
        report.contains("male peak SBP − female peak SBP = +5.0 mmHg"),
        "{report}"
    );

    let out = bpminer(dir.path(), &["report", "--out", "run"]);
    assert!(out.status.success());
    assert!(text(&out.stdout).contains("analyze   completed"));

    let out = bpminer(dir.path(), &args);
    assert!(text(&out.stdout).contains("analyze   up to date"));
}

#[test]
fn stage_subcommand_stops_early() {
    let dir = tempfile::tempdir().unwrap();
    assert!(bpminer(dir.path(), &["synth", "f.xml.gz"]).status.success());
    let out = bpminer(
        dir.path(),
        &["filter", "--input", "f.xml.gz", "--out", "run"],
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    let report = text(&out.stdout);
    assert!(report.contains("keyword stage 2  40"), "{report}");
    assert!(report.contains("extract   not run"), "{report}");
    assert!(dir.path().join("run/filtered.jsonl").exists());
    assert!(!dir.path().join("run/extractions.jsonl").exists());
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "template = \"nope.txt\"\n").unwrap();
    let out = bpminer(dir.path(), &["run", "--config", "run.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("nope.txt"));

    let out = bpminer(dir.path(), &["run", "--backend", "remote"]);
    assert_eq!(out.status.code(), Some(2));

    let out = bpminer(dir.path(), &["report", "--out", "missing"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn budget_exhaustion_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    assert!(bpminer(dir.path(), &["synth", "f.xml.gz"]).status.success());
    let args = [
        "run",
        "--input",
        "f.xml.gz",
        "--out",
        "run",
        "--max-requests",
        "3",
    ];
    let out = bpminer(dir.path(), &args);
    assert_eq!(out.status.code(), Some(4), "{}", text(&out.stderr));
}

#[test]
fn unreachable_remote_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    assert!(bpminer(dir.path(), &["synth", "f.xml.gz"]).status.success());
    let cfg = "inputs = [\"f.xml.gz\"]\nout_dir = \"run\"\n[backend]\nkind = \"remote\"\n\
               endpoint = \"http://127.0.0.1:9/v1/chat/completions\"\ntimeout_secs = 2\nrequests_per_second = 0.0\n\
               [backend.retry]\nmax_retries = 1\nbase_delay_ms = 1\nmax_delay_ms = 1\n";
    std::fs::write(dir.path().join("run.toml"), cfg).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_bpminer"))
        .current_dir(dir.path())
        .env("BPMINER_API_KEY", "test-key")
        .args(["run", "--config", "run.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", text(&out.stderr));
    assert!(!text(&out.stderr).contains("test-key"));
    let manifest = std::fs::read_to_string(dir.path().join("run/manifest.json")).unwrap();
    assert!(manifest.contains("\"failed_stage\": \"extract\""));
    assert!(!manifest.contains("test-key"));
}

#[test]
fn default_config_prints_as_toml() {
    let dir = tempfile::tempdir().unwrap();
    let out = bpminer(dir.path(), &["config", "--seed", "9"]);
    assert!(out.status.success());
    let t = text(&out.stdout);
    assert!(t.contains("seed = 9") && t.contains("[validation]"), "{t}");
}
