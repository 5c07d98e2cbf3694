use std::fs;
use std::path::Path;
use std::process::Command as Process;

use clap::Parser;
use ieq_rk::cli::{run, Cli, EXIT_FAIL, EXIT_OK, EXIT_SOLVER, EXIT_USAGE, TIMESERIES_HEADER};

fn invoke(args: &[&str]) -> (i32, String, String) {
    let cli = Cli::try_parse_from(std::iter::once("ieq-rk").chain(args.iter().copied())).unwrap();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(&cli, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.toml");
    let out = dir.join("out");
    fs::write(
        &path,
        format!("{body}\n[output]\nout_dir = {:?}\n", out.to_str().unwrap()),
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

fn columns(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn constant_data_gives_zero_residual_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "initial = \"constant:0.3\"\n[grid]\nn = 32\n[time]\nn_steps = 20\ntableau = \"gauss6\"",
    );
    let (code, out, _) = invoke(&["simulate", &cfg]);
    assert_eq!(code, EXIT_OK, "{out}");
    let csv = fs::read_to_string(dir.path().join("out/timeseries.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), TIMESERIES_HEADER);
    let rows = columns(&csv);
    assert_eq!(rows.len(), 21);
    for row in &rows {
        let q_res: f64 = row[4].parse().unwrap();
        let defect: f64 = row[6].parse().unwrap();
        assert!(q_res <= 1e-13 && defect.abs() <= 1e-13, "{row:?}");
    }
    assert!(dir.path().join("out/phi_final.csv").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/verdicts.json")).unwrap())
            .unwrap();
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["verdicts"].as_array().unwrap().len(), 5);
}

#[test]
fn default_spinodal_energy_column_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let (code, report, _) = invoke(&["simulate", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{report}");
    let rows = columns(&fs::read_to_string(out.join("timeseries.csv")).unwrap());
    assert_eq!(rows.len(), 1001);
    let energies: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    let scale = energies[0].abs().max(1.0);
    assert!(energies.windows(2).all(|w| w[1] - w[0] <= 1e-9 * scale));
    assert!(energies[1000] < energies[0]);
}

#[test]
fn missing_or_malformed_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = invoke(&["simulate", dir.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("cannot read config"), "{err}");

    let cfg = write_config(dir.path(), "[grid]\nn = 7");
    assert_eq!(invoke(&["simulate", &cfg]).0, EXIT_USAGE);
    let cfg = write_config(dir.path(), "unknown_key = 1");
    assert_eq!(invoke(&["simulate", &cfg]).0, EXIT_USAGE);
    assert_eq!(invoke(&["simulate", "--tableau", "heun"]).0, EXIT_USAGE);
}

#[test]
fn solver_failure_flushes_the_partial_series() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[time]\ntableau = \"euler\"");
    let (code, _, err) = invoke(&["simulate", &cfg]);
    assert_eq!(code, EXIT_SOLVER, "{err}");
    let csv = fs::read_to_string(dir.path().join("out/timeseries.csv")).unwrap();
    let rows = columns(&csv);
    assert!(!rows.is_empty() && rows.len() < 1001);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/verdicts.json")).unwrap())
            .unwrap();
    assert_eq!(summary["status"], "solver_error");
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[time]\nn_steps = 1000\ndt = 1e-3");
    let (code, _, _) = invoke(&[
        "simulate",
        &cfg,
        "--n-steps",
        "5",
        "--dt",
        "2e-3",
        "--n",
        "16",
        "--c",
        "-0.5",
    ]);
    assert_eq!(code, EXIT_OK);
    let rows = columns(&fs::read_to_string(dir.path().join("out/timeseries.csv")).unwrap());
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[5][1], "1e-2");
    let field = fs::read_to_string(dir.path().join("out/phi_final.csv")).unwrap();
    assert_eq!(field.lines().count(), 17);
    assert_eq!(field.lines().next().unwrap(), "x,phi,q");
}

#[test]
fn non_symplectic_run_fails_its_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "initial = \"sine:0.3:1\"\n[grid]\nn = 16\n[time]\ntableau = \"implicit-euler\"\nn_steps = 50");
    let (code, out, _) = invoke(&["simulate", &cfg]);
    assert_eq!(code, EXIT_FAIL, "{out}");
    assert!(out.contains("FAIL q_consistency"), "{out}");
}

#[test]
fn verify_tableau_exit_codes() {
    let (code, out, _) = invoke(&["verify-tableau", "gauss4"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("PASS symplectic"));
    let (code, out, _) = invoke(&["verify-tableau", "euler"]);
    assert_eq!(code, EXIT_FAIL);
    assert!(out.contains("S = [[-1]]"), "{out}");
    assert_eq!(invoke(&["verify-tableau", "rk4"]).0, EXIT_FAIL);
    let (code, _, err) = invoke(&["verify-tableau", "radau"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("unknown tableau"));
}

#[test]
fn compare_midpoint_within_bound() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "initial = \"sine:0.5:1\"\n[grid]\nn = 64\n[time]\nn_steps = 20",
    );
    let (code, out, _) = invoke(&["compare-midpoint", &cfg]);
    assert_eq!(code, EXIT_OK, "{out}");
    assert_eq!(
        out.lines()
            .filter(|l| l.starts_with(char::is_numeric))
            .count(),
        20
    );
}

#[test]
fn convergence_small_ladder() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[grid]\nn = 32\n[convergence]\ntableaus = [\"gauss2\"]\ndts = [1e-2, 5e-3, 2.5e-3]\nreference_dt = 1e-4",
    );
    let (code, out, _) = invoke(&["convergence", &cfg]);
    assert_eq!(code, EXIT_OK, "{out}");
    assert!(out.contains("gauss2"));
    assert!(dir.path().join("out/convergence.json").exists());
}

#[test]
fn binary_csv_is_bit_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_ieq-rk");
    let mut outputs = Vec::new();
    for tag in ["a", "b"] {
        let out = dir.path().join(tag);
        let status = Process::new(bin)
            .args([
                "simulate",
                "--n-steps",
                "200",
                "--seed",
                "7",
                "--out-dir",
                out.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(
            status.status.success(),
            "{}",
            String::from_utf8_lossy(&status.stderr)
        );
        outputs.push(fs::read(out.join("timeseries.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);

    let missing = Process::new(bin)
        .args(["simulate", "/definitely/not/here.toml"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(EXIT_USAGE));
    let bad_flag = Process::new(bin)
        .args(["simulate", "--no-such-flag"])
        .output()
        .unwrap();
    assert_eq!(bad_flag.status.code(), Some(EXIT_USAGE));
}
