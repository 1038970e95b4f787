//! End-to-end tests of the `simulate` binary: artifact files, exit codes,
//! config-file handling, and sweeps.

use std::path::{Path, PathBuf};
use std::process::Command;

fn simulate() -> Command {
    Command::new(env!("CARGO_BIN_EXE_simulate"))
}

fn tmp(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name)
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("read {path:?}: {e}"))
}

#[test]
fn preset_run_writes_all_artifacts() {
    let out = tmp("cli_fig3i");
    let status = simulate()
        .args(["fig3i", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    for name in ["signal.csv", "summary.json", "plot.gnu", "probe_0.csv"] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    let signal = read(&out.join("signal.csv"));
    assert!(signal.starts_with("t_s,absorption,coherence_magnitude\n"));
    let probe = read(&out.join("probe_0.csv"));
    assert!(probe.starts_with("t_s,rho13_re,rho13_im,rho33,phase_rad\n"));
    let summary: serde_json::Value =
        serde_json::from_str(&read(&out.join("summary.json"))).unwrap();
    assert_eq!(summary["scenario"], "fig3i");
    assert_eq!(summary["config"]["grid"]["n_atoms"], 1);
    assert_eq!(summary["probes"][0]["file"], "probe_0.csv");
    assert_eq!(summary["recovery_satisfied"], true);
}

#[test]
fn spectrum_files_follow_snapshots() {
    let out = tmp("cli_fig2e_coarse");
    let status = simulate()
        .args([
            "fig2e",
            "--grid-step",
            "4000",
            "--grid-span",
            "750000",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    for t in ["16000", "136000"] {
        for level in ["1", "2", "3"] {
            let name = format!("spectrum_{level}_{t}ns.csv");
            assert!(out.join(&name).is_file(), "{name} missing");
        }
    }
    let spectrum = read(&out.join("spectrum_1_16000ns.csv"));
    assert!(spectrum.starts_with("delta_rad_s,population\n"));
    // 2·round(span/step)+1 data rows plus header
    let half = (750_000.0f64 / 4_000.0).round() as usize;
    assert_eq!(spectrum.lines().count(), 1 + 2 * half + 1);
}

#[test]
fn unknown_scenario_exits_2_with_error_record() {
    let out = tmp("cli_unknown");
    let output = simulate()
        .args(["fig9x", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    let record: serde_json::Value =
        serde_json::from_str(stderr.trim()).expect("stderr carries a JSON error record");
    assert_eq!(record["exit_code"], 2);
    assert!(out.join("error.json").is_file());
}

#[test]
fn invalid_sequence_config_exits_2() {
    let out = tmp("cli_overlap");
    let config = tmp("cli_overlap_config.json");
    std::fs::write(
        &config,
        r#"{
            "sequence": {
                "pulses": [
                    {"channel": "P", "t_start_ns": 1000, "duration_ns": 100, "area_pi": 0.5},
                    {"channel": "B", "t_start_ns": 1050, "duration_ns": 100, "area_pi": 1.0}
                ],
                "t_end_ns": 10000
            }
        }"#,
    )
    .unwrap();
    let output = simulate()
        .arg(config.to_str().unwrap())
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn malformed_json_exits_2() {
    let out = tmp("cli_badjson");
    let config = tmp("cli_badjson_config.json");
    std::fs::write(&config, "{ not json").unwrap();
    let output = simulate()
        .arg(config.to_str().unwrap())
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn check_flag_reports_anomalies_with_exit_3() {
    // A prominence floor of 0.99 discards the weaker stimulated echo, so
    // its timing oracle goes unmatched and --check must exit 3.
    let out = tmp("cli_check_anomaly");
    let config = tmp("cli_check_anomaly_config.json");
    std::fs::write(
        &config,
        r#"{
            "scenario": "fig2e",
            "grid": {"step_hz": 4000.0, "span_hz": 750000.0},
            "detector": {
                "guard_us": 0.5,
                "median_factor": 5.0,
                "abs_floor": 1e-6,
                "relative_floor": 0.99
            }
        }"#,
    )
    .unwrap();
    let output = simulate()
        .arg(config.to_str().unwrap())
        .args(["--check", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));

    // the same run without --check succeeds
    let out2 = tmp("cli_nocheck_anomaly");
    let status = simulate()
        .arg(config.to_str().unwrap())
        .arg("--out")
        .arg(&out2)
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn check_flag_passes_on_clean_run() {
    let out = tmp("cli_check_ok");
    let status = simulate()
        .args([
            "fig2e",
            "--check",
            "--grid-step",
            "4000",
            "--grid-span",
            "750000",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn delta_t_sweep_marks_no_echo_rows() {
    let out = tmp("cli_sweep_dt");
    let status = simulate()
        .args([
            "fig3a",
            "--sweep",
            "delta_t_b1",
            "--values",
            "2,6",
            "--grid-step",
            "4000",
            "--grid-span",
            "750000",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = read(&out.join("sweep.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "value,value2,echo_time_s,echo_amplitude,no_echo");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].ends_with(",false"), "ΔT = 2 μs row: {}", lines[1]);
    assert!(lines[2].ends_with(",true"), "ΔT = 6 μs row: {}", lines[2]);

    let summary: serde_json::Value =
        serde_json::from_str(&read(&out.join("sweep_summary.json"))).unwrap();
    assert_eq!(summary["parameter"], "delta_t_b1");
    assert!(summary["rows"][0]["residual_s"].as_f64().unwrap().abs() <= 0.2e-6);
    assert_eq!(summary["rows"][1]["no_echo"], true);
    assert!(out.join("runs/00/summary.json").is_file());
    assert!(out.join("runs/01/summary.json").is_file());
}

#[test]
fn area_override_toggles_recovery_flag() {
    let out = tmp("cli_areas");
    let status = simulate()
        .args([
            "fig3a",
            "--areas",
            "1,1",
            "--delta-t-b1",
            "1",
            "--grid-step",
            "4000",
            "--grid-span",
            "750000",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&read(&out.join("summary.json"))).unwrap();
    assert_eq!(summary["recovery_satisfied"], false);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let args = [
        "fig2e",
        "--grid-step",
        "4000",
        "--grid-span",
        "750000",
        "--dt-out",
        "250",
    ];
    let out_a = tmp("cli_repeat_a");
    let out_b = tmp("cli_repeat_b");
    for out in [&out_a, &out_b] {
        let status = simulate()
            .args(args)
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    for name in ["signal.csv", "summary.json", "plot.gnu"] {
        assert_eq!(
            std::fs::read(out_a.join(name)).unwrap(),
            std::fs::read(out_b.join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }
}
