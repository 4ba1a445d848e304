use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn homobs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homobs"))
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

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_scenario(dir: &TempDir, body: &str) -> String {
    let path = dir.path().join("scenario.json");
    fs::write(&path, body).unwrap();
    path.display().to_string()
}

fn significant_digits(field: &str) -> usize {
    let mantissa = field.trim_start_matches('-').split('e').next().unwrap();
    mantissa.chars().filter(char::is_ascii_digit).count()
}

#[test]
fn preset_list_names_every_preset() {
    let out = homobs(&["preset", "list"]);
    assert_eq!(code(&out), 0);
    let names: Vec<String> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(str::to_owned)
        .collect();
    assert_eq!(
        names,
        [
            "metni-s2",
            "explicit-complementary",
            "autonomy-demo",
            "almost-global-sweep"
        ]
    );
}

#[test]
fn run_writes_trajectory_and_summary() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let out = homobs(&[
        "run",
        "--preset",
        "metni-s2",
        "--out",
        out_dir.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(out.stdout.is_empty());

    let csv = fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,y_x,y_y,y_z,yhat_x,yhat_y,yhat_z,theta,drift"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 1001);
    for row in &rows {
        assert_eq!(row.len(), 9);
        for field in row {
            assert_eq!(significant_digits(field), 17, "{field}");
        }
    }
    let last: f64 = rows.last().unwrap()[0].parse().unwrap();
    assert_eq!(last, 10.0);

    let summary = read_json(&out_dir.join("summary.json"));
    assert_eq!(summary["mode"], "projected");
    assert_eq!(summary["code_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(summary["scenario"]["schema_version"], 1);
    let s = &summary["summary"];
    for key in [
        "initial_angle",
        "final_angle",
        "t_converged",
        "fitted_rate",
        "max_drift",
    ] {
        assert!(s.get(key).is_some(), "missing {key}");
    }
    assert!((s["initial_angle"].as_f64().unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    assert!(summary["closed_form_deviation"].as_f64().unwrap() < 1e-5);
}

#[test]
fn cosim_and_synchrony_modes_report_their_checks() {
    let dir = TempDir::new().unwrap();
    for (mode, key) in [
        ("co-sim", "projection_consistency"),
        ("synchrony", "synchrony"),
    ] {
        let path = write_scenario(
            &dir,
            &format!(
                r#"{{"schema_version": 1, "instance": "so3-s2", "mode": "{mode}", "t_end": 2.0,
                    "input": {{"type": "constant", "value": [0.1, 0.2, 0.3]}}}}"#
            ),
        );
        let out_dir = dir.path().join(mode);
        let out = homobs(&[
            "run",
            "--scenario",
            &path,
            "--out",
            out_dir.to_str().unwrap(),
            "--quiet",
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let summary = read_json(&out_dir.join("summary.json"));
        assert_eq!(summary[key]["pass"], true, "{mode}");
        assert!(
            summary[key]["max_residual"].as_f64().unwrap()
                <= summary[key]["tolerance"].as_f64().unwrap()
        );
    }
}

#[test]
fn circle_instance_runs() {
    let dir = TempDir::new().unwrap();
    let path = write_scenario(
        &dir,
        r#"{"schema_version": 1, "instance": "so2-s1", "k": 2.0, "t_end": 10.0,
            "input": {"type": "sinusoid", "amplitude": [0, 0, 0.5], "frequency": 0.3}}"#,
    );
    let out_dir = dir.path().join("out");
    let out = homobs(&[
        "run",
        "--scenario",
        &path,
        "--out",
        out_dir.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary = read_json(&out_dir.join("summary.json"));
    assert!(summary["oracle_deviation"].as_f64().unwrap() < 1e-8);
    assert!(summary["final_state_error"].as_f64().unwrap() < 1e-6);
}

#[test]
fn verify_prints_one_line_per_property() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let out = homobs(&[
        "verify",
        "--samples",
        "200",
        "--seed",
        "3",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let residuals = read_json(&out_dir.join("residuals.json"));
    let entries = residuals.as_array().unwrap();
    assert!(entries.len() >= 10);
    for entry in entries {
        let name = entry["name"].as_str().unwrap();
        assert!(
            stdout
                .lines()
                .any(|l| l.starts_with(name) && l.ends_with("PASS")),
            "{name}"
        );
        for key in ["max_residual", "tolerance", "pass"] {
            assert!(entry.get(key).is_some());
        }
    }
    assert_eq!(
        read_json(&out_dir.join("summary.json"))["scenario"]["verify"]["seed"],
        3
    );
}

#[test]
fn sweep_is_deterministic_in_its_seed() {
    let dir = TempDir::new().unwrap();
    let run = |seed: &str, name: &str| {
        let out_dir = dir.path().join(name);
        let out = homobs(&[
            "sweep",
            "--preset",
            "almost-global-sweep",
            "--runs",
            "20",
            "--seed",
            seed,
            "--out",
            out_dir.to_str().unwrap(),
            "--quiet",
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let summary = read_json(&out_dir.join("summary.json"));
        assert_eq!(summary["converged_fraction"], 1.0);
        assert_eq!(summary["runs"], 20);
        fs::read_to_string(out_dir.join("runs.csv")).unwrap()
    };
    let a = run("11", "a");
    let b = run("11", "b");
    let c = run("12", "c");
    assert_eq!(a.lines().count(), 21);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn input_errors_exit_with_code_two() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let out_arg = out_dir.to_str().unwrap();

    let path = write_scenario(
        &dir,
        r#"{"schema_version": 1, "instance": "so3-s2", "k": -1}"#,
    );
    let out = homobs(&["run", "--scenario", &path, "--out", out_arg]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("`k`"), "{}", stderr(&out));

    let path = write_scenario(&dir, "{\"schema_version\": 1,\n \"instance\": }");
    let out = homobs(&["run", "--scenario", &path, "--out", out_arg]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));

    let path = write_scenario(
        &dir,
        r#"{"schema_version": 1, "instance": "so3-s2", "y0": [0, 0, 2]}"#,
    );
    let out = homobs(&["run", "--scenario", &path, "--out", out_arg]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("y0"));

    let out = homobs(&[
        "run",
        "--scenario",
        "/definitely/not/here.json",
        "--out",
        out_arg,
    ]);
    assert_eq!(code(&out), 2);

    let out = homobs(&["run", "--preset", "no-such-preset", "--out", out_arg]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("metni-s2"));

    let out = homobs(&["run"]);
    assert_eq!(code(&out), 2);
    assert!(!out_dir.exists());
}

#[test]
fn unwritable_output_is_a_runtime_abort() {
    let dir = TempDir::new().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "not a directory").unwrap();
    let out = homobs(&[
        "run",
        "--preset",
        "metni-s2",
        "--out",
        blocker.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}
