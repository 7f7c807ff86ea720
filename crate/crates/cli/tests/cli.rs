use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn quadcbf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quadcbf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

#[test]
fn run_builtin_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let result = quadcbf(&[
        "run",
        "--scenario",
        "static-overtake",
        "--filter",
        "c3bf",
        "--out",
        out,
    ]);
    assert_eq!(code(&result), 0, "{}", stderr(&result));
    assert!(dir.path().join("trace.csv").is_file());
    let metrics = std::fs::read_to_string(dir.path().join("metrics.toml")).unwrap();
    assert!(metrics.contains("success = true"), "{metrics}");
}

#[test]
fn unfiltered_collision_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let result = quadcbf(&[
        "run",
        "--scenario",
        "static-overtake",
        "--filter",
        "none",
        "--out",
        out,
    ]);
    assert_eq!(code(&result), 2);
    let metrics = std::fs::read_to_string(dir.path().join("metrics.toml")).unwrap();
    assert!(metrics.contains("success = false"));
}

#[test]
fn malformed_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenarios_dir().join("static-overtake.toml")).unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, text.replace("duration = ", "durration = ")).unwrap();
    let result = quadcbf(&[
        "run",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&result), 1);
    assert!(stderr(&result).contains("durration"), "{}", stderr(&result));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(
        code(&quadcbf(&["run", "--scenario", "no-such-scenario"])),
        1
    );
    assert_eq!(code(&quadcbf(&["run", "--bogus"])), 1);
    assert_eq!(code(&quadcbf(&[])), 1);
    assert_eq!(code(&quadcbf(&["--help"])), 0);
}

#[test]
fn overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let result = quadcbf(&[
        "run",
        "--scenario",
        "moving-slow",
        "--dt",
        "0.01",
        "--seed",
        "3",
        "--out",
        out,
    ]);
    assert_eq!(code(&result), 0, "{}", stderr(&result));
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 1001);
    let bad = quadcbf(&["run", "--scenario", "moving-slow", "--dt=-1", "--out", out]);
    assert_eq!(code(&bad), 1);
    assert!(stderr(&bad).contains("dt"));
}

#[test]
fn two_agent_writes_one_trace_per_vehicle() {
    let dir = tempfile::tempdir().unwrap();
    let result = quadcbf(&[
        "run",
        "--scenario",
        "two-agent",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&result), 0, "{}", stderr(&result));
    assert!(dir.path().join("trace_agent1.csv").is_file());
    let metrics = std::fs::read_to_string(dir.path().join("metrics.toml")).unwrap();
    assert!(metrics.contains("[[peers]]"), "{metrics}");
}

#[test]
fn compare_head_on_reports_both_filters() {
    let dir = tempfile::tempdir().unwrap();
    let result = quadcbf(&[
        "compare",
        "--scenario",
        "moving-head-on",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&result), 0, "{}", stderr(&result));
    let report: toml::Table = std::fs::read_to_string(dir.path().join("comparison.toml"))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(report["a"]["filter"].as_str(), Some("c3bf"));
    assert_eq!(report["b"]["filter"].as_str(), Some("hocbf(gamma=1)"));
    for side in ["a", "b"] {
        assert!(report[side]["metrics"]["min_separation"]
            .as_float()
            .is_some());
    }
    assert!(dir.path().join("trace_a.csv").is_file());
    assert!(dir.path().join("cone_ratio_b.csv").is_file());
}

#[test]
fn identical_filters_give_zero_difference() {
    let dir = tempfile::tempdir().unwrap();
    let result = quadcbf(&[
        "compare",
        "--scenario",
        "static-overtake",
        "--filter",
        "c3bf",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&result), 0, "{}", stderr(&result));
    let report: toml::Table = std::fs::read_to_string(dir.path().join("comparison.toml"))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(report["a"], report["b"]);
    assert_eq!(report["min_separation_gap"].as_float(), Some(0.0));
    let a = std::fs::read(dir.path().join("trace_a.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("trace_b.csv")).unwrap());
}

#[test]
fn gamma_sweep_has_one_section_per_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let result = quadcbf(&[
        "compare",
        "--scenario",
        "static-overtake",
        "--sweep-gamma",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_ne!(code(&result), 1, "{}", stderr(&result));
    let report: toml::Table = std::fs::read_to_string(dir.path().join("comparison.toml"))
        .unwrap()
        .parse()
        .unwrap();
    let sections = report["sections"].as_array().unwrap();
    let names: Vec<_> = sections
        .iter()
        .map(|s| s["b"]["filter"].as_str().unwrap())
        .collect();
    assert_eq!(
        names,
        ["hocbf(gamma=0.5)", "hocbf(gamma=1)", "hocbf(gamma=2)"]
    );
    for g in ["0.5", "1", "2"] {
        assert!(dir.path().join(format!("gamma_{g}")).is_dir());
    }

    let custom = quadcbf(&[
        "compare",
        "--scenario",
        "static-overtake",
        "--sweep-gamma",
        "3,4",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_ne!(code(&custom), 1, "{}", stderr(&custom));
}

#[test]
fn list_has_all_builtins() {
    let result = quadcbf(&["list-scenarios"]);
    assert_eq!(code(&result), 0);
    let text = String::from_utf8(result.stdout).unwrap();
    for name in [
        "static-overtake",
        "static-brake",
        "moving-head-on",
        "moving-slow",
        "cylinder-side",
        "cylinder-top",
        "multi-obstacle",
        "two-agent",
    ] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing");
    }
}

#[test]
fn validate_accepts_shipped_configs() {
    let mut seen = 0;
    for entry in std::fs::read_dir(scenarios_dir()).unwrap() {
        let path = entry.unwrap().path();
        let result = quadcbf(&["validate-config", path.to_str().unwrap()]);
        assert_eq!(code(&result), 0, "{}: {}", path.display(), stderr(&result));
        seen += 1;
    }
    assert_eq!(seen, 8);
}

#[test]
fn validate_rejects_negative_radius() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenarios_dir().join("static-overtake.toml")).unwrap();
    let path = dir.path().join("neg.toml");
    std::fs::write(&path, text.replace("radius = 0.15", "radius = -0.15")).unwrap();
    let result = quadcbf(&["validate-config", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&result), 1);
    assert!(stderr(&result).contains("radius"), "{}", stderr(&result));
}
