//! End-to-end CLI tests against the built binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ledgersim"))
}

fn personas_file() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/personas_sample.jsonl")
}

fn run_ok(cmd: &mut Command) -> Output {
    let output = cmd.output().expect("binary runs");
    assert!(
        output.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn generate(out: &Path, seed: u64, users: u32, days: u32) -> PathBuf {
    run_ok(bin().args([
        "generate",
        "--personas",
        personas_file().to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        &seed.to_string(),
        "--users",
        &users.to_string(),
        "--days",
        &days.to_string(),
        "--jobs",
        "2",
    ]));
    std::fs::read_dir(out)
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path()
}

#[test]
fn generate_verify_replay_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let run = generate(&dir.path().join("a"), 5, 12, 60);

    // Same seed again: identical events bytes and identical run dir name.
    let run_again = generate(&dir.path().join("b"), 5, 12, 60);
    assert_eq!(run.file_name(), run_again.file_name());
    assert_eq!(
        std::fs::read(run.join("events.jsonl")).unwrap(),
        std::fs::read(run_again.join("events.jsonl")).unwrap()
    );

    let verify = run_ok(bin().args(["verify", "--run", run.to_str().unwrap()]));
    assert!(String::from_utf8_lossy(&verify.stdout).contains("clean"));

    let replay = run_ok(bin().args(["replay", "--run", run.to_str().unwrap()]));
    assert!(String::from_utf8_lossy(&replay.stdout).contains("0 divergences"));
}

#[test]
fn verify_flags_a_deleted_event_line() {
    let dir = tempfile::tempdir().unwrap();
    let run = generate(dir.path(), 6, 6, 45);
    let events_path = run.join("events.jsonl");
    let text = std::fs::read_to_string(&events_path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let removed = lines.remove(lines.len() / 2);
    assert!(!removed.is_empty());
    std::fs::write(&events_path, lines.join("\n") + "\n").unwrap();

    let output = bin()
        .args(["verify", "--run", run.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(
        output.status.code(),
        Some(1),
        "verify must exit 1 on findings"
    );
    assert!(String::from_utf8_lossy(&output.stdout).contains("missing_export"));
}

#[test]
fn build_task_encode_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    let run = generate(dir.path(), 7, 6, 120);

    run_ok(bin().args([
        "build-task",
        "illiquidity",
        "--run",
        run.to_str().unwrap(),
        "--n-months",
        "3",
    ]));
    run_ok(bin().args([
        "build-task",
        "theft",
        "--run",
        run.to_str().unwrap(),
        "--n-months",
        "3",
        "--injections",
        "20",
    ]));
    let task = run.join("task-theft-n3.jsonl");
    assert!(task.exists());

    // Inverse oracle: stripping labeled events from each example leaves only
    // events belonging to the primary user's original window.
    let text = std::fs::read_to_string(&task).unwrap();
    for line in text.lines() {
        let example: ledgersim::benchmark::TaskExample = serde_json::from_str(line).unwrap();
        let stripped = ledgersim::benchmark::strip_injected(&example);
        assert!(stripped.len() < example.events.len());
        assert!(stripped.iter().all(|e| e.user_id == example.user_id));
    }

    let enc_dir = dir.path().join("enc");
    run_ok(bin().args([
        "encode",
        "--task",
        task.to_str().unwrap(),
        "--vocab-threshold",
        "10",
        "--out-dir",
        enc_dir.to_str().unwrap(),
    ]));
    assert!(enc_dir.join("features-train.csv").exists());
    assert!(enc_dir.join("features-test.csv").exists());
    assert!(enc_dir.join("features-header.json").exists());

    let stats = run_ok(bin().args(["stats", "--run", run.to_str().unwrap()]));
    let stdout = String::from_utf8_lossy(&stats.stdout);
    assert!(stdout.contains("corpus summary"));
    assert!(run.join("stats-distributions.csv").exists());
}

#[test]
fn verify_flags_an_injected_limit_violation() {
    let dir = tempfile::tempdir().unwrap();
    let run = generate(dir.path(), 9, 4, 40);
    // Inflate one accepted plan purchase far past the credit limit. The
    // pre-state hash still matches, so verify reaches the invariant check
    // and must report it.
    let audit_path = run.join("audit.jsonl");
    let text = std::fs::read_to_string(&audit_path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let target = lines
        .iter()
        .position(|l| {
            l.contains("\"TRANSITION\"") && l.contains("\"plan\"") && l.contains("\"purchase\"")
        })
        .expect("corpus has an accepted plan purchase");
    let mut record: serde_json::Value = serde_json::from_str(&lines[target]).unwrap();
    record["event"]["amount"] = serde_json::json!(99_000_000);
    lines[target] = record.to_string();
    std::fs::write(&audit_path, lines.join("\n") + "\n").unwrap();

    let output = bin()
        .args(["verify", "--run", run.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("invariant_check"), "stdout: {stdout}");
}

#[test]
fn stressed_preset_runs_from_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(bin().args([
        "generate",
        "--personas",
        personas_file().to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--preset",
        "stressed",
        "--seed",
        "99",
        "--users",
        "8",
        "--days",
        "150",
        "--jobs",
        "2",
    ]));
    let run = std::fs::read_dir(dir.path())
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(
        manifest["config"]["mock"]["spend_scale"],
        serde_json::json!(1.7)
    );
    run_ok(bin().args(["verify", "--run", run.to_str().unwrap()]));
}

#[test]
fn derive_profiles_fills_missing_profiles() {
    let dir = tempfile::tempdir().unwrap();
    // Strip profiles from the bundled sample to make raw persona input.
    let text = std::fs::read_to_string(personas_file()).unwrap();
    let raw_path = dir.path().join("raw.jsonl");
    let mut lines = Vec::new();
    for line in text.lines() {
        let mut value: serde_json::Value = serde_json::from_str(line).unwrap();
        value
            .as_object_mut()
            .unwrap()
            .remove("user_financial_profile");
        lines.push(value.to_string());
    }
    std::fs::write(&raw_path, lines.join("\n") + "\n").unwrap();

    let out_path = dir.path().join("augmented.jsonl");
    run_ok(bin().args([
        "derive-profiles",
        "--personas",
        raw_path.to_str().unwrap(),
        "--mode",
        "heuristic",
        "--seed",
        "3",
        "--out",
        out_path.to_str().unwrap(),
    ]));
    let personas = ledgersim::persona::load_personas(&out_path).unwrap();
    assert_eq!(personas.len(), 9);
    for p in &personas {
        assert!(ledgersim::persona::validate_augmented_persona(p).is_empty());
    }
}

#[test]
fn usage_errors_exit_two() {
    let output = bin().arg("frobnicate").output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    let output = bin().args(["generate"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}
