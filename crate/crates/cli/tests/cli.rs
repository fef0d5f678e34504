use std::path::Path;
use std::process::{Command, Output};

fn splitkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splitkd")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn default_text() -> String {
    splitkd::scenario_io::default_scenario_text().to_string()
}

#[test]
fn compare_prints_summary() {
    let o = splitkd(&["compare"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("# splitkd summary"));
    for m in ["proposed", "server-only", "device-only"] {
        assert_eq!(text.lines().filter(|l| l.contains(m)).count(), 3, "{m}");
    }
}

#[test]
fn compare_reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = splitkd(&["compare", "--regime", "all", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    for name in ["rounds.csv", "summary.txt", "scenario.resolved.toml"] {
        let x = std::fs::read(a.join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, std::fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn run_single_method_and_regime() {
    let o = splitkd(&["run", "--method", "device-only", "--regime", "poor"]);
    assert_eq!(o.status.code(), Some(0));
    let body: Vec<String> = stdout(&o)
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(String::from)
        .collect();
    assert_eq!(body.len(), 2);
    assert!(body[1].starts_with("poor     device-only"));
}

#[test]
fn seed_flag_overrides_scenario() {
    let o = splitkd(&["run", "--seed", "99"]);
    assert!(stdout(&o).contains("# seed: 99"));
}

#[test]
fn resolved_scenario_can_be_fed_back() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("first");
    splitkd(&["compare", "--out", out.to_str().unwrap()]);
    let resolved = out.join("scenario.resolved.toml");
    let again = dir.path().join("second");
    let o = splitkd(&[
        "compare",
        "--scenario",
        resolved.to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        std::fs::read(out.join("rounds.csv")).unwrap(),
        std::fs::read(again.join("rounds.csv")).unwrap()
    );
}

fn write_scenario(dir: &Path, text: &str) -> String {
    let path = dir.join("s.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_scenario(dir.path(), &default_text().replace("seed = 7", "seed = 7\nunknown = 1"));
    let o = splitkd(&["compare", "--scenario", &bad]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown"));

    assert_eq!(
        splitkd(&["compare", "--scenario", "/nonexistent.toml"]).status.code(),
        Some(1)
    );
    assert_eq!(splitkd(&["compare", "--regime", "stormy"]).status.code(), Some(1));
    assert_eq!(splitkd(&["run", "--method", "cloud"]).status.code(), Some(1));
    assert_eq!(splitkd(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(splitkd(&["plan", "--device", "10"]).status.code(), Some(1));
}

#[test]
fn infeasible_everywhere_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let tight = write_scenario(
        dir.path(),
        &default_text().replace("delay_budget_s = 10.0", "delay_budget_s = 0.001"),
    );
    let out = dir.path().join("out");
    let o = splitkd(&["compare", "--scenario", &tight, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    // reports are still written
    assert!(out.join("rounds.csv").is_file());
}

#[test]
fn plan_reports_all_three_methods() {
    let o = splitkd(&["plan", "--device", "4", "--distance", "80", "--regime", "all"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("regime=")).count(), 3);
    assert_eq!(text.lines().filter(|l| l.starts_with("proposed")).count(), 3);
    assert!(text.contains("server-only  cut=1 "));
    assert!(text.contains("device-only  cut=11"));
}

#[test]
fn kd_selftest_passes() {
    let o = splitkd(&["kd-selftest", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 4);
}

#[test]
fn catalog_lists_seven_entries() {
    let o = splitkd(&["catalog"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 7);
    assert!(text
        .lines()
        .next()
        .unwrap()
        .starts_with("GPT-3 (text-davinci-002) (700 GB) -> MT-CoT (12 GB)"));
}

#[test]
fn help_exits_cleanly() {
    let o = splitkd(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("kd-selftest"));
}
