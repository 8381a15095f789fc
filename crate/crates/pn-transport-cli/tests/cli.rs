//! End-to-end tests of the command-line interface: exit codes, file
//! outputs, determinism, and config handling.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pn-transport"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn help_exits_zero() {
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("stationary"));
}

#[test]
fn unknown_flag_exits_one_with_usage() {
    let out = run(&["--definitely-not-a-flag", "stationary"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("Usage"));
}

#[test]
fn missing_config_exits_one_and_names_the_path() {
    let out = run(&["stationary", "--config", "does_not_exist.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("does_not_exist.json"));
}

#[test]
fn invalid_parameters_exit_one() {
    let out = run(&["stationary", "--N", "4"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("odd"));
    let out = run(&["transient", "--tau", "-0.5"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"n": 1, "divisions": [2], "tau": 0.2, "t_end": 0.4, "n_max": 1}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("results");
    let out = run(&[
        "transient",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--t-end",
        "0.2",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    // t_end 0.2 at tau 0.2 is a single step.
    assert!(stdout(&out).contains("steps           = 1"));
    assert!(out_dir.join("energy_trace.csv").is_file());
    assert!(out_dir.join("transient_errors.txt").is_file());
    assert!(out_dir.join("scalar_flux.vtk").is_file());
}

#[test]
fn config_with_unknown_key_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"sigma_b": 1.0}"#).unwrap();
    let out = run(&["stationary", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("sigma_b"));
}

#[test]
fn spatial_study_writes_a_well_formed_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "study",
        "--kind",
        "spatial",
        "--divisions",
        "2,4",
        "--tau",
        "0.1",
        "--t-end",
        "0.3",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("study_spatial.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "param,e_plus,eoc_plus,E_plus,eoc_E,e_minus,eoc_minus,dofs");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("2,"));
    assert!(lines[2].starts_with("4,"));
    assert_eq!(lines[1].matches("--").count(), 3, "first row has no eoc");
    assert!(!lines[2].contains("--"), "later rows have eoc values");
}

#[test]
fn repeated_study_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &Path| {
        vec![
            "study".to_string(),
            "--kind".into(),
            "temporal".into(),
            "--divisions".into(),
            "2".into(),
            "--N".into(),
            "1".into(),
            "--t-end".into(),
            "0.5".into(),
            "--out".into(),
            out.to_str().unwrap().to_string(),
        ]
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out_dir in [&a, &b] {
        let out = bin().args(args(out_dir)).output().unwrap();
        assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    }
    let csv_a = std::fs::read(a.join("study_temporal.csv")).unwrap();
    let csv_b = std::fs::read(b.join("study_temporal.csv")).unwrap();
    assert!(!csv_a.is_empty());
    assert_eq!(csv_a, csv_b);
}

#[test]
fn verify_passes_on_a_pristine_build() {
    let out = run(&["verify"]);
    assert_eq!(out.status.code(), Some(0), "stdout: {}", stdout(&out));
    let text = stdout(&out);
    assert!(text.contains("PASS"));
    assert!(!text.contains("FAIL"));
    assert!(text.contains("checks passed"));
}

#[test]
fn dump_matrices_writes_all_families() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "dump-matrices",
        "--N",
        "1",
        "--divisions",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    for name in [
        "streaming_a1.csv",
        "streaming_a2.csv",
        "streaming_a3.csv",
        "halfrange_px.csv",
        "halfrange_mx.csv",
        "halfrange_pz.csv",
        "halfrange_mz.csv",
        "collision_even.csv",
        "collision_odd.csv",
        "mass_p1.csv",
    ] {
        let path = dir.path().join(name);
        assert!(path.is_file(), "{name} missing");
        let text = std::fs::read_to_string(&path).unwrap();
        let header = text.lines().next().unwrap();
        if name == "mass_p1.csv" {
            assert_eq!(header, "row,col,value");
        } else {
            assert_eq!(header, "row_l,row_m,col_l,col_m,value");
        }
        assert!(text.lines().count() > 1, "{name} has data rows");
    }
}

#[test]
fn closing_stdout_early_does_not_panic() {
    // `pn-transport ... | head -n 1` must end quietly (SIGPIPE), not with
    // a broken-pipe panic from println!.
    let dir = tempfile::tempdir().unwrap();
    let cmd = format!(
        "{} transient --N 1 --divisions 4 --tau 0.1 --t-end 0.3 --out {} | head -n 1",
        env!("CARGO_BIN_EXE_pn-transport"),
        dir.path().to_str().unwrap(),
    );
    let out = Command::new("sh").args(["-c", &cmd]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "pipeline failed: {}", stderr(&out));
    assert!(
        !stderr(&out).contains("panic"),
        "broken pipe panicked: {}",
        stderr(&out)
    );
}

#[test]
fn stationary_writes_summary_and_flux() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "stationary",
        "--N",
        "1",
        "--divisions",
        "4",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let summary = std::fs::read_to_string(dir.path().join("stationary_summary.txt")).unwrap();
    assert!(summary.contains("dofs"));
    assert!(summary.contains("e_plus"));
    let vtk = std::fs::read_to_string(dir.path().join("scalar_flux.vtk")).unwrap();
    assert!(vtk.starts_with("# vtk DataFile Version 2.0"));
}
