//! End-to-end checks of the command-line interface: exit codes, error
//! reporting on bad configs, and artifact placement.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_goodput"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr_lines(out: &Output) -> Vec<String> {
    String::from_utf8_lossy(&out.stderr)
        .lines()
        .map(str::to_string)
        .collect()
}

fn config_path(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

#[test]
fn props_scenario_writes_artifacts_and_exits_zero() {
    let out_dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "props",
        "--config",
        &config_path("props.toml"),
        "--seed",
        "7",
        "--out",
        out_dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {:?}", stderr_lines(&out));
    let report = out_dir.path().join("props_report.csv");
    let manifest = out_dir.path().join("props_report.manifest.toml");
    assert!(report.is_file());
    let manifest_text = fs::read_to_string(manifest).unwrap();
    assert!(manifest_text.contains("seed = 7"), "{manifest_text}");
    assert!(String::from_utf8_lossy(&out.stdout).contains("wrote"));
}

#[test]
fn figures_scenario_needs_no_config() {
    let out_dir = tempfile::tempdir().unwrap();
    let out = run(&["figures", "--out", out_dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "stderr: {:?}", stderr_lines(&out));
    for name in [
        "fig2_goodput_vs_own_power.csv",
        "fig3_goodput_vs_interference.csv",
        "fig4_retain_all_points.csv",
        "fig4_retain_half_points.csv",
        "fig4_drop_all_points.csv",
        "fig5_colocated_points.csv",
        "fig6_loop_comparison.csv",
    ] {
        assert!(out_dir.path().join(name).is_file(), "missing {name}");
    }
}

#[test]
fn missing_config_file_exits_one() {
    let out_dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "props",
        "--config",
        "/nonexistent/nowhere.toml",
        "--out",
        out_dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
}

#[test]
fn invalid_config_lists_every_problem_and_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    // Four separate mistakes: short noise vector, a zero lower power
    // bound, an inverted bound pair, and a self-loop link.
    fs::write(
        &bad,
        r#"
scenario = "props"

[topology]
nodes = 2
gains = [[0.0, 1.0], [1.0, 0.0]]
noise = [1.0]
power_bounds = [[0.0, 2.0], [2.0, 1.0]]

[links]
pairs = [[0, 1], [0, 0]]

[rates]
menu = [0.5, 1.0]
"#,
    )
    .unwrap();
    let out = run(&[
        "props",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let errors: Vec<String> =
        stderr_lines(&out).into_iter().filter(|l| l.starts_with("error:")).collect();
    assert!(errors.len() >= 3, "expected every problem listed, got {errors:?}");
}

#[test]
fn declared_scenario_must_match_the_subcommand() {
    let out_dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "region",
        "--config",
        &config_path("game.toml"),
        "--out",
        out_dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario"));
}

#[test]
fn unconverged_solver_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tight.toml");
    // Nearly uncoupled pair: the first round jumps both players from the
    // interval floor to the cap, and the single allowed round leaves the
    // run short of the stopping tolerance.
    fs::write(
        &cfg,
        r#"
scenario = "game"

[topology]
nodes = 4
gains = [
  [0.0, 0.0, 0.0, 0.0],
  [0.0, 0.0, 0.0, 0.0],
  [1.0, 0.01, 0.0, 0.0],
  [0.01, 1.0, 0.0, 0.0],
]
noise = [1.0, 1.0, 1.0, 1.0]
power_bounds = [[0.5, 2.5], [0.5, 2.5], [0.5, 2.5], [0.5, 2.5]]

[links]
pairs = [[0, 2], [1, 3]]

[game]
link_rates = [0.8, 0.8]
tolerance = 1e-9
max_rounds = 1
"#,
    )
    .unwrap();
    let out = run(&[
        "game",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "stderr: {:?}", stderr_lines(&out));
    assert!(String::from_utf8_lossy(&out.stderr).contains("converge"));
    // The trace artifacts are still written for inspection.
    assert!(dir.path().join("out/game_trace.csv").is_file());
}

#[test]
fn seed_flag_overrides_the_config_seed() {
    let out_dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "region",
        "--config",
        &config_path("region_box.toml"),
        "--seed",
        "99",
        "--out",
        out_dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let manifest =
        fs::read_to_string(out_dir.path().join("region_points.manifest.toml")).unwrap();
    assert!(manifest.contains("seed = 99"), "{manifest}");
}
