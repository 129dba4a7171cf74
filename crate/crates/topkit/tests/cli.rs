//! End-to-end smoke tests for the command-line interface: synth ->
//! benchmark -> profile -> evaluate/diff, plus error-path exit codes, on a
//! miniature corpus so the whole file runs in seconds.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn topkit() -> Command {
    Command::new(env!("CARGO_BIN_EXE_topkit"))
}

fn run(args: &[&str]) -> Output {
    topkit().args(args).output().expect("binary runs")
}

fn assert_ok(output: &Output) -> String {
    assert!(
        output.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8_lossy(&output.stdout).to_string()
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("topkit-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn path_str(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn synth_benchmark_profile_pipeline() {
    let dir = workdir("pipeline");
    let corpus_dir = dir.join("corpus");
    // Small corpus keeps the test quick; 150 samples per domain.
    let out = run(&[
        "synth",
        "--out",
        path_str(&corpus_dir),
        "--seed",
        "13",
        "--samples",
        "150",
    ]);
    let stdout = assert_ok(&out);
    assert!(stdout.contains("600 samples across 4 domains"), "stdout: {stdout}");
    assert!(corpus_dir.join("corpus.tsv").exists());
    assert!(corpus_dir.join("specs.toml").exists());

    // Determinism: same seed, same bytes.
    let corpus_dir2 = dir.join("corpus2");
    assert_ok(&run(&["synth", "--out", path_str(&corpus_dir2), "--seed", "13", "--samples", "150"]));
    assert_eq!(
        std::fs::read(corpus_dir.join("corpus.tsv")).unwrap(),
        std::fs::read(corpus_dir2.join("corpus.tsv")).unwrap()
    );

    let bench_dir = dir.join("bench");
    let corpus_tsv = corpus_dir.join("corpus.tsv");
    let out = run(&[
        "benchmark",
        "--corpus",
        path_str(&corpus_tsv),
        "--out",
        path_str(&bench_dir),
        "--ks",
        "1,2",
        "--seed",
        "0",
    ]);
    let stdout = assert_ok(&out);
    assert!(stdout.contains("4 scenarios x 2 subsets"));
    for domain in ["alarm", "timer", "event", "messaging"] {
        assert!(bench_dir.join(domain).join("source.tsv").exists());
        assert!(bench_dir.join(domain).join("target_1spis.tsv").exists());
        assert!(bench_dir.join(domain).join("target_2spis.tsv").exists());
        assert!(bench_dir.join(domain).join("target_test.tsv").exists());
        assert!(bench_dir.join("inventories").join(format!("{domain}.tsv")).exists());
    }

    // Idempotent: second run produces identical summary.
    let summary = std::fs::read(bench_dir.join("summary.tsv")).unwrap();
    assert_ok(&run(&[
        "benchmark",
        "--corpus",
        path_str(&corpus_tsv),
        "--out",
        path_str(&bench_dir),
        "--ks",
        "1,2",
        "--seed",
        "0",
    ]));
    assert_eq!(std::fs::read(bench_dir.join("summary.tsv")).unwrap(), summary);

    let out = run(&["profile", "--corpus", path_str(&corpus_tsv)]);
    let stdout = assert_ok(&out);
    assert!(stdout.lines().count() >= 5, "expected 4 domains plus header: {stdout}");
    assert!(stdout.contains("messaging\t"));

    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn evaluate_and_diff_roundtrip() {
    let dir = workdir("eval");
    let gold = dir.join("gold.tsv");
    std::fs::write(
        &gold,
        "a\tdelete my alarm\t[IN:DELETE_ALARM [SL:DATE_TIME 6pm ] ]\n\
         a\tset an alarm\t[IN:CREATE_ALARM ]\n",
    )
    .unwrap();
    let pred = dir.join("pred.txt");
    std::fs::write(
        &pred,
        "[IN:DELETE_ALARM [SL:DATE_TIME 6pm ] ]\n[IN:CREATE_ALARM [SL:DATE_TIME now ] ]\n",
    )
    .unwrap();

    let out = run(&["evaluate", "--pred", path_str(&pred), "--gold", path_str(&gold)]);
    let stdout = assert_ok(&out);
    assert!(stdout.contains("em=0.5000 matches=1 n=2"), "stdout: {stdout}");

    let out = run(&["diff", "--pred", path_str(&pred), "--gold", path_str(&gold)]);
    let stdout = assert_ok(&out);
    assert!(stdout.contains("1 errors"));
    assert!(stdout.contains("-[SL:DATE_TIME"), "stdout: {stdout}");

    // Identical predictions: zero errors.
    let out = run(&["diff", "--pred", path_str(&pred), "--gold", path_str(&gold), "--sample", "5"]);
    assert_ok(&out);

    let same = dir.join("same.txt");
    std::fs::write(&same, "[IN:DELETE_ALARM [SL:DATE_TIME 6pm ] ]\n[IN:CREATE_ALARM ]\n").unwrap();
    let out = run(&["diff", "--pred", path_str(&same), "--gold", path_str(&gold)]);
    let stdout = assert_ok(&out);
    assert!(stdout.contains("0 errors"));

    // Malformed prediction lines surface as decode failures, not crashes.
    let broken = dir.join("broken.txt");
    std::fs::write(&broken, "[IN:DELETE_ALARM [SL:DATE_TIME 6pm ]\n[IN:CREATE_ALARM ]\n").unwrap();
    let out = run(&["diff", "--pred", path_str(&broken), "--gold", path_str(&gold)]);
    let stdout = assert_ok(&out);
    assert!(stdout.contains("decode-failure"), "stdout: {stdout}");

    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn errors_exit_nonzero_with_category() {
    // Missing corpus file.
    let out = run(&["benchmark", "--corpus", "/nonexistent/corpus.tsv", "--out", "/tmp/x"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("\"category\":\"io\""), "stderr: {stderr}");

    // Single-domain corpus cannot build a leave-one-out benchmark.
    let dir = workdir("errors");
    let corpus = dir.join("single.tsv");
    std::fs::write(&corpus, "only\tdo it\t[IN:DO_IT ]\n").unwrap();
    let out = run(&[
        "benchmark",
        "--corpus",
        path_str(&corpus),
        "--out",
        path_str(&dir.join("bench")),
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("single-domain-dataset"), "stderr: {stderr}");

    // Bad spec file surfaces a config error.
    let spec = dir.join("bad.toml");
    std::fs::write(&spec, "domains = 3").unwrap();
    let out = run(&[
        "synth",
        "--out",
        path_str(&dir.join("c")),
        "--spec",
        path_str(&spec),
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("\"category\":\"config\""), "stderr: {stderr}");

    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn grad_check_command_reports_small_error() {
    let out = run(&["grad-check", "--checks", "60", "--dim", "8", "--ffn", "12", "--layers", "1"]);
    let stdout = assert_ok(&out);
    assert!(stdout.contains("max_rel_error"), "stdout: {stdout}");
}

#[test]
fn custom_spec_synthesis() {
    let dir = workdir("spec");
    let spec = dir.join("suite.toml");
    std::fs::write(
        &spec,
        r#"
[[domains]]
name = "lights"
intents = ["TURN_ON", "TURN_OFF"]
slots = ["ROOM"]
nesting_rate = 0.0
templates = [
  { intent = "TURN_ON", text = "turn on the {ROOM} lights" },
  { intent = "TURN_OFF", text = "turn off the {ROOM} lights" },
]
[domains.slot_fillers]
ROOM = ["kitchen", "bedroom"]

[[domains]]
name = "locks"
intents = ["LOCK", "UNLOCK"]
slots = ["DOOR"]
nesting_rate = 0.0
templates = [
  { intent = "LOCK", text = "lock the {DOOR}" },
  { intent = "UNLOCK", text = "unlock the {DOOR}" },
]
[domains.slot_fillers]
DOOR = ["front door", "garage"]
"#,
    )
    .unwrap();
    let out_dir = dir.join("out");
    let out = run(&[
        "synth",
        "--out",
        path_str(&out_dir),
        "--spec",
        path_str(&spec),
        "--samples",
        "40",
    ]);
    let stdout = assert_ok(&out);
    assert!(stdout.contains("80 samples across 2 domains"), "stdout: {stdout}");
    let profile = run(&["profile", "--corpus", path_str(&out_dir.join("corpus.tsv"))]);
    let stdout = assert_ok(&profile);
    assert!(stdout.contains("lights\t0.000\t3"), "stdout: {stdout}");
    assert!(stdout.contains("locks\t0.000\t3"), "stdout: {stdout}");
    std::fs::remove_dir_all(&dir).unwrap();
}
