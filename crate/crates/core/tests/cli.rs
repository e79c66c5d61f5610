use std::fs;
use std::process::Command;

use ambiclt_core::cli::run;
use serde_json::Value;

fn run_capture(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(std::iter::once("ambiclt").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn json_ok(args: &[&str]) -> Value {
    let (code, out, err) = run_capture(args);
    assert_eq!(code, 0, "stderr: {err}");
    serde_json::from_str(&out).unwrap()
}

fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

#[test]
fn closed_form_without_ambiguity_is_a_normal_probability() {
    let v = json_ok(&["closed-form", "--a", "-0.5", "--b", "1.5"]);
    let value = v["results"][0]["value"].as_f64().unwrap();
    assert!((value - (phi(1.5) - phi(-0.5))).abs() < 1e-12);
    assert_eq!(v["command"], "closed-form");
    assert_eq!(v["config"]["closed-form"]["a"], -0.5);
}

#[test]
fn flags_override_config_which_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "seed = 9\n[closed-form]\nmu-lo = -0.2\nmu-hi = 0.2\na = -2.0\n").unwrap();
    let v = json_ok(&["--config", cfg.to_str().unwrap(), "closed-form", "--a", "-1"]);
    let resolved = &v["config"]["closed-form"];
    assert_eq!(resolved["a"], -1.0);
    assert_eq!(resolved["mu-lo"], -0.2);
    assert_eq!(resolved["b"], 1.0);
    assert_eq!(v["config"]["global"]["seed"], 9);
}

#[test]
fn unknown_config_keys_are_rejected_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[closed-form]\nmu_low = 0.1\n").unwrap();
    let (code, out, err) = run_capture(&["--config", cfg.to_str().unwrap(), "closed-form"]);
    assert_eq!(code, 2);
    assert!(out.is_empty());
    let record: Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(record["kind"], "ConfigError");
    assert_eq!(record["exit_code"], 2);

    fs::write(&cfg, "colour = \"red\"\n").unwrap();
    assert_eq!(run_capture(&["--config", cfg.to_str().unwrap(), "closed-form"]).0, 2);
}

#[test]
fn unknown_flag_is_a_config_error() {
    let (code, out, err) = run_capture(&["dp", "--bogus", "1"]);
    assert_eq!(code, 2);
    assert!(out.is_empty());
    assert!(err.contains("--bogus"));
}

#[test]
fn invalid_parameters_report_an_error_record() {
    let (code, out, err) = run_capture(&["closed-form", "--mu-lo", "0.5", "--mu-hi", "-0.5"]);
    assert_ne!(code, 0);
    assert!(out.is_empty());
    let record: Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(record["exit_code"], code);
}

#[test]
fn monte_carlo_payload_is_independent_of_thread_count() {
    let base = ["mc", "--n", "8", "--paths", "2000", "--seed", "5"];
    let one: Vec<&str> = base.iter().copied().chain(["--threads", "1"]).collect();
    let four: Vec<&str> = base.iter().copied().chain(["--threads", "4"]).collect();
    let (a, b) = (json_ok(&one), json_ok(&four));
    assert_eq!(a["results"], b["results"]);
    // repeated runs are byte-identical
    assert_eq!(run_capture(&one).1, run_capture(&one).1);
}

#[test]
fn monte_carlo_stays_under_the_dp_bound() {
    let v = json_ok(&["mc", "--n", "10", "--paths", "4000", "--seed", "3"]);
    let rows = v["results"].as_array().unwrap();
    let bound = rows.iter().find_map(|r| r["dp_bound"].as_f64()).expect("dp bound reported");
    for r in rows.iter().filter(|r| r["estimate"].is_number()) {
        let (est, se) = (r["estimate"].as_f64().unwrap(), r["stderr"].as_f64().unwrap());
        assert!(est <= bound + 4.0 * se + 1e-12, "{r}");
    }
}

#[test]
fn output_file_and_csv_format() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    let (code, out, _) =
        run_capture(&["--format", "csv", "--output", path.to_str().unwrap(), "closed-form", "--side", "both"]);
    assert_eq!(code, 0);
    assert!(out.is_empty());
    let text = fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# ambiclt "));
    let header = lines.next().unwrap();
    assert!(header.split(',').any(|h| h == "value"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn trace_reads_a_path_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("path.csv");
    fs::write(&data, "0.5\n-0.2\n0.1\n").unwrap();
    let (code, out, err) =
        run_capture(&["trace", "--data", data.to_str().unwrap(), "--mu-lo", "-0.3", "--mu-hi", "0.3"]);
    assert_eq!(code, 0, "{err}");
    let rows: Vec<&str> = out.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "m,mu_m,M_m");
    assert_eq!(rows.len(), 4);
}

#[test]
fn hyptest_size_and_power_are_ordered() {
    let v = json_ok(&["hyptest", "--kappa", "0.3", "--n", "100", "--paths", "2000", "--xi", "2"]);
    let s = &v["summary"];
    let size = s["size"]["accept_rate"].as_f64().unwrap();
    let power = s["power"]["accept_rate"].as_f64().unwrap();
    assert!(power < size);
    assert!(s["b"].as_f64().unwrap() < 1.96);
}

#[test]
fn binary_reports_version_and_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_ambiclt");
    let out = Command::new(exe).arg("--version").output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains(env!("CARGO_PKG_VERSION")));
    let out = Command::new(exe).args(["lln", "--n", "0"]).output().unwrap();
    assert!(!out.status.success());
    assert!(out.stdout.is_empty());
}
