use std::path::Path;
use std::process::{Command, Output};

fn nhskin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nhskin")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().map(|l| l.split(',').map(str::to_owned).collect()).collect()
}

#[test]
fn open_chain_spectrum_is_real_with_one_fewer_level() {
    let out = nhskin(&["spectrum", "--model", "hatano-nelson", "--N", "100", "--J", "1", "--delta", "0.05", "--boundary", "obc"]);
    assert!(out.status.success());
    let table = rows(&stdout(&out));
    assert_eq!(table[0], ["index", "label", "re_energy", "im_energy"]);
    assert_eq!(table.len(), 1 + 99);
    let expected_max = 2.0 * (1.0f64 - 0.05 * 0.05).sqrt() * (std::f64::consts::PI / 100.0).cos();
    let re: f64 = table[1][2].parse().unwrap();
    assert!((re - expected_max).abs() < 1e-12);
    assert!(table[1..].iter().all(|r| r[3].parse::<f64>().unwrap() == 0.0));
}

#[test]
fn periodic_and_impurity_spectra_have_full_length() {
    for args in [["--boundary", "pbc"], ["--epsilon", "2.5"]] {
        let out = nhskin(&[&["spectrum", "--N", "12", "--delta", "0.3"][..], &args[..]].concat());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(rows(&stdout(&out)).len(), 1 + 12);
    }
}

#[test]
fn open_chain_states_pile_up_at_the_right_edge() {
    let out = nhskin(&["states", "--N", "20", "--delta", "0.5"]);
    assert!(out.status.success());
    let table = rows(&stdout(&out));
    assert_eq!(table[0][4..6], ["route", "site"]);
    assert_eq!(table.len(), 1 + 19 * 19);
    for state in table[1..].chunks(19) {
        let amp: Vec<f64> = state
            .iter()
            .map(|r| r[6].parse::<f64>().unwrap().hypot(r[7].parse().unwrap()))
            .collect();
        assert!(amp[18] > amp[0]);
    }
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let args = ["figure", "--id", "fig3", "--N", "6", "--epsilon-grid", "0.01:1000:25:log", "--format", "json"];
    let a = nhskin(&args);
    let b = nhskin(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let doc: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(doc["columns"][4], "ep_flags");
    assert_eq!(doc["rows"].as_array().unwrap().len(), 6 * 25);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "model = \"hatano-nelson\"\nN = 12\ndelta = 0.2\nboundary = \"obc\"\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    assert_eq!(rows(&stdout(&nhskin(&["spectrum", "--config", cfg]))).len(), 1 + 11);
    assert_eq!(rows(&stdout(&nhskin(&["spectrum", "--config", cfg, "--N", "8"]))).len(), 1 + 7);
}

#[test]
fn json_format_follows_the_output_extension() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("spec.json");
    let out = nhskin(&["spectrum", "--model", "ssh", "--N", "5", "--output", path.to_str().unwrap()]);
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(doc["model"], "ssh");
    assert_eq!(doc["spectrum"]["eigenvalues"].as_array().unwrap().len(), 9);
}

#[test]
fn sweep_reports_tracks_per_grid_value() {
    let out = nhskin(&["sweep-epsilon", "--N", "8", "--epsilon-grid", "0.1:1e4:30:log"]);
    assert!(out.status.success());
    let table = rows(&stdout(&out));
    assert_eq!(table.len(), 1 + 8 * 30);
    let flagged: usize = table[1..].chunks(8).map(|g| g[0][4].parse::<usize>().unwrap()).sum();
    assert!(flagged >= 1);
}

#[test]
fn vicinity_crosses_one_half() {
    let out = nhskin(&["vicinity", "--N", "20", "--t2-grid", "0.1:1.5:15:lin", "--format", "json"]);
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let c = doc["crossover_t2"].as_f64().unwrap();
    assert!((0.4..0.7).contains(&c), "{c}");
}

#[test]
fn validate_prints_a_passing_table() {
    let out = nhskin(&["validate", "--model", "ssh", "--N", "16", "--t1", "1", "--t2", "2", "--gamma", "1"]);
    assert!(out.status.success());
    let table = rows(&stdout(&out));
    assert_eq!(table[0], ["check", "parameters", "value", "tolerance", "passed"]);
    assert!(table[1..].iter().all(|r| r[4] == "1"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("PASS similarity_hermitian"));
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad_cfg = dir.path().join("bad.toml");
    std::fs::write(&bad_cfg, "temperature = 4\n").unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["spectrum", "--t2", "1"],
        vec!["spectrum", "--N", "1"],
        vec!["spectrum", "--boundary", "epsilon"],
        vec!["sweep-epsilon", "--epsilon-grid", "5:1:10:log"],
        vec!["figure", "--id", "fig4", "--delta", "0.1"],
        vec!["spectrum", "--config", bad_cfg.to_str().unwrap()],
        vec!["spectrum", "--config", "/nonexistent/run.toml"],
        vec!["spectrum", "--no-such-flag"],
    ];
    for args in cases {
        assert_eq!(nhskin(&args).status.code(), Some(1), "{args:?}");
    }
}

#[test]
fn numerical_failures_exit_with_two() {
    // t1 + gamma/2 = t2 makes a Bloch matrix defective; t2 = t1 - gamma/2 puts the open chain at an exceptional point
    let defective = nhskin(&["states", "--model", "ssh", "--t1", "1", "--t2", "2", "--gamma", "2", "--N", "4", "--boundary", "pbc"]);
    assert_eq!(defective.status.code(), Some(2));
    let coalesced = nhskin(&["states", "--model", "ssh", "--t1", "1", "--t2", "1", "--gamma", "2", "--N", "4"]);
    assert_eq!(coalesced.status.code(), Some(2));
}

#[test]
fn failed_checks_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("checks.csv");
    let out = nhskin(&[
        "validate", "--model", "ssh", "--N", "60", "--t1", "3", "--t2", "0.2", "--gamma", "5.9", "--output",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(Path::new(&path).exists());
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAIL"));
}
