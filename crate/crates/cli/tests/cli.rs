//! End-to-end tests of the `chiroptic` binary: exit codes, file outputs,
//! reproducibility, and the pipeline consistency between simulate and
//! estimate.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chiroptic"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn chiroptic");
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// A fast reference-like campaign: full default grid, thinned statistics.
fn small_simulate(out_dir: &Path, seed: &str) {
    run_ok(&[
        "simulate",
        "--eta-h",
        "0.25",
        "--eta-v",
        "0.25",
        "--heralds",
        "2000",
        "--trials",
        "60",
        "--seed",
        seed,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
}

#[test]
fn simulate_writes_the_full_grid_and_estimate_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    small_simulate(&sim, "11");

    for name in ["results.csv", "counts.csv", "results.json", "config.resolved.json"] {
        assert!(sim.join(name).is_file(), "{name} missing");
    }

    let sim_result = json(&sim.join("results.json"));
    let rows = sim_result["result"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 21);

    let est = dir.path().join("est");
    run_ok(&[
        "estimate",
        "--counts",
        sim.join("counts.csv").to_str().unwrap(),
        "--eta-h",
        "0.25",
        "--eta-v",
        "0.25",
        "--out",
        est.to_str().unwrap(),
    ]);
    let est_result = json(&est.join("results.json"));
    let cells = est_result["result"]["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 21);

    // Re-estimating the simulator's own counts reproduces its estimates
    // exactly, row by row.
    for (row, cell) in rows.iter().zip(cells) {
        assert_eq!(row["theta_in_deg"], cell["theta_in_deg"]);
        assert_eq!(row["estimate"]["concentration"], cell["estimate"]["concentration"]);
        assert_eq!(row["estimate"]["theta_out_std_deg"], cell["estimate"]["theta_out_std_deg"]);
        assert_eq!(row["estimate"]["excluded"], cell["estimate"]["excluded"]);
    }
}

#[test]
fn missing_efficiency_is_a_config_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["simulate", "--eta-v", "0.25", "--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("eta_h"), "stderr was: {stderr}");
    // Nothing may be written on a validation failure.
    assert!(!dir.path().join("config.resolved.json").exists());
}

#[test]
fn unknown_config_field_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"eta_h": 0.25, "eta_vee": 0.25}"#).unwrap();
    let out = bin()
        .args([
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().join("o").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("eta_vee"), "stderr was: {stderr}");
}

#[test]
fn malformed_grid_flag_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "simulate",
            "--eta-h",
            "0.25",
            "--eta-v",
            "0.25",
            "--grid",
            "10:5:1",
            "--out",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn counts_violating_conservation_fail_with_the_row_number() {
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("bad.csv");
    fs::write(&counts, "theta_in_deg,trial_index,n_h,n_v,nu\n0,0,10,5,100\n0,1,90,20,100\n").unwrap();
    let out = bin()
        .args([
            "estimate",
            "--counts",
            counts.to_str().unwrap(),
            "--eta-h",
            "0.25",
            "--eta-v",
            "0.25",
            "--out",
            dir.path().join("o").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("row 2"), "stderr was: {stderr}");
    assert!(stderr.contains("exceed"), "stderr was: {stderr}");
    // The same file passes as a classical-benchmark record set.
    run_ok(&[
        "estimate",
        "--counts",
        counts.to_str().unwrap(),
        "--regime",
        "classical",
        "--eta-h",
        "0.25",
        "--eta-v",
        "0.25",
        "--out",
        dir.path().join("o2").to_str().unwrap(),
    ]);
}

#[test]
fn reruns_are_byte_identical_and_resolved_config_reproduces_them() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    small_simulate(&a, "4242");
    small_simulate(&b, "4242");
    for name in ["results.csv", "counts.csv", "results.json", "config.resolved.json"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name} differs between identical reruns"
        );
    }

    // Replaying the resolved config with no flags is the same run.
    let c = dir.path().join("c");
    run_ok(&[
        "simulate",
        "--config",
        a.join("config.resolved.json").to_str().unwrap(),
        "--out",
        c.to_str().unwrap(),
    ]);
    for name in ["results.csv", "counts.csv", "results.json", "config.resolved.json"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(c.join(name)).unwrap(),
            "{name} differs when replayed from the resolved config"
        );
    }

    // A different seed changes the data.
    let d = dir.path().join("d");
    small_simulate(&d, "4243");
    assert_ne!(fs::read(a.join("counts.csv")).unwrap(), fs::read(d.join("counts.csv")).unwrap());
}

#[test]
fn flags_override_config_fields() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"eta_h": 0.25, "eta_v": 0.25, "heralds": 2000, "trials": 50, "master_seed": 9}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("o");
    run_ok(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--trials",
        "20",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    let resolved = json(&out_dir.join("config.resolved.json"));
    assert_eq!(resolved["trials"], 20);
    assert_eq!(resolved["heralds"], 2000);
    assert_eq!(resolved["master_seed"], 9);
}

#[test]
fn budget_report_reproduces_the_reference_rows_and_total() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("o");
    let out = run_ok(&["budget", "--out", out_dir.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("0.0585"), "stdout was: {stdout}");

    let report = json(&out_dir.join("results.json"));
    let total = report["result"]["combined_total"].as_f64().unwrap();
    assert!((total - 0.0585).abs() <= 5e-5, "total {total}");
    assert_eq!(report["result"]["combined_sources"].as_array().unwrap().len(), 4);
    let entries = report["result"]["entries"].as_array().unwrap();
    let expected = [0.0793, 0.0539, 0.0517, 0.0205, 0.0049, 0.0176];
    assert_eq!(entries.len(), expected.len());
    for (entry, expect) in entries.iter().zip(expected) {
        let std = entry["value"].as_f64().unwrap() / entry["divisor"].as_f64().unwrap()
            * entry["sensitivity"].as_f64().unwrap();
        assert!((std - expect).abs() <= 5e-5, "row {} std {std}", entry["source"]);
    }
}

#[test]
fn estimate_attaches_a_budget_table_total() {
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("counts.csv");
    fs::write(&counts, "theta_in_deg,trial_index,n_h,n_v,nu\n10,0,230,270,2000\n10,1,260,240,2000\n")
        .unwrap();
    // The four rows that enter the published total: the normalized
    // difference statistic plus the three systematic contributions.
    let table = dir.path().join("b1.csv");
    fs::write(
        &table,
        "source,value,unit,divisor,distribution,sensitivity,std\n\
         \"counting statistics, normalized difference\",0.1763,deg,1,normal,0.293,\n\
         sample temperature,0.41,K,1,normal,0.05,\n\
         probe wavelength,0.0005,um,,rectangular,17.07,\n\
         launch angle calibration,0.03,deg,1,normal,0.586,\n",
    )
    .unwrap();
    let out_dir = dir.path().join("o");
    let out = run_ok(&[
        "estimate",
        "--counts",
        counts.to_str().unwrap(),
        "--budget",
        table.to_str().unwrap(),
        "--eta-h",
        "0.25",
        "--eta-v",
        "0.25",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("0.0585"), "stdout was: {stdout}");
    let report = json(&out_dir.join("results.json"));
    let total = report["result"]["combined_budget_total"].as_f64().unwrap();
    assert!((total - 0.0585).abs() <= 5e-5, "total {total}");
}

#[test]
fn fisher_gap_column_is_zero_across_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("o");
    run_ok(&[
        "fisher",
        "--scheme",
        "single",
        "--regime",
        "quantum",
        "--grid",
        "10:80:5",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    let report = json(&out_dir.join("results.json"));
    let rows = report["result"].as_array().unwrap();
    assert_eq!(rows.len(), 15);
    for row in rows {
        let gap = row["saturation_gap"].as_f64().unwrap();
        assert!(gap.abs() < 1e-9, "gap {gap} at {}", row["theta_out_deg"]);
    }

    // The CSV mirror carries the same column.
    let text = fs::read_to_string(out_dir.join("results.csv")).unwrap();
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert!(header.contains("saturation_gap"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#') && !l.is_empty()).count(), 16);
}

#[test]
fn mc_pe_bias_shows_the_low_angle_drop() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("o");
    run_ok(&[
        "mc",
        "--study",
        "pe-bias",
        "--rpe",
        "1e-3",
        "--concentrations",
        "0.5",
        "--grid",
        "0:45:45",
        "--heralds",
        "20000",
        "--trials",
        "400",
        "--seed",
        "5",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    let report = json(&out_dir.join("results.json"));
    let rows = report["result"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    let find = |deg: f64, r_pe: f64| {
        rows.iter()
            .find(|r| {
                (r["theta_out_true_deg"].as_f64().unwrap() - deg).abs() < 1e-9
                    && r["r_pe"].as_f64().unwrap() == r_pe
            })
            .unwrap()
    };
    // The leak pulls the estimate at the projection extreme far below the
    // truth while the balanced point stays near it.
    let dropped = find(0.0, 1e-3)["c_mean"].as_f64().unwrap();
    let balanced = find(45.0, 1e-3)["c_mean"].as_f64().unwrap();
    assert!(dropped < 0.4, "no drop at the extreme: {dropped}");
    assert!((balanced - 0.5).abs() < 0.05, "balanced point off: {balanced}");
}

#[test]
fn mc_validate_flags_column_and_seed_separation() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("o");
    run_ok(&[
        "mc",
        "--study",
        "validate",
        "--estimators",
        "dsr",
        "--heralds",
        "3000",
        "--grid",
        "30:60:15",
        "--seed",
        "3",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(out_dir.join("results.csv")).unwrap();
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(
        header,
        "estimator,regime,theta_out_deg,expected_std_deg,empirical_std_deg,z_score,passed,trials_used,excluded"
    );
    let report = json(&out_dir.join("results.json"));
    for row in report["result"]["rows"].as_array().unwrap() {
        assert_eq!(row["passed"], true, "row {row}");
    }
}
