mod common;

use std::path::{Path, PathBuf};
use std::process::Command;

use combitrial::inference::{sample_toxicity_posterior, McmcConfig, ToxicityPrior};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_combitrial"))
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn write_design(dir: &Path) -> PathBuf {
    let p = dir.join("design.json");
    std::fs::write(&p, common::quick_design().to_json_pretty()).unwrap();
    p
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_design(dir.path());
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        let st = bin()
            .arg("--config")
            .arg(&cfg)
            .args(["simulate", "--M", "1", "--seed", "42", "--w", "0,0.5", "--scenario"])
            .arg(scenarios().join("h1_agreement.json"))
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(st.success());
        outputs.push((
            std::fs::read(out.join("oc_report.json")).unwrap(),
            std::fs::read(out.join("oc_table.csv")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn report_writes_one_surface_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_design(dir.path());
    let out = dir.path().join("sim");
    let st = bin()
        .arg("--config")
        .arg(&cfg)
        .args(["simulate", "-m", "2", "--seed", "7", "--w", "0,0.8"])
        .arg("--scenario")
        .arg(scenarios().join("h1_agreement.spec.json"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(st.success());
    let plots = dir.path().join("plots");
    let st = bin()
        .args(["report", "--oc"])
        .arg(out.join("oc_report.json"))
        .arg("--out")
        .arg(&plots)
        .status()
        .unwrap();
    assert!(st.success());
    let grid = common::quick_design().stage2.grid_size;
    for w in ["0", "0.8"] {
        let text = std::fs::read_to_string(plots.join(format!("surface_w{w}.csv"))).unwrap();
        assert_eq!(text.lines().count(), grid + 1);
    }
    let power = std::fs::read_to_string(plots.join("power_by_w.csv")).unwrap();
    assert_eq!(power.lines().count(), 3);
}

#[test]
fn exit_codes_distinguish_config_and_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let mut d = combitrial::config::Design::ciscab();
    d.stage2.delta_1 = 0.3;
    std::fs::write(&bad, d.to_json_pretty()).unwrap();
    let st = bin().arg("--config").arg(&bad).arg("config").status().unwrap();
    assert_eq!(st.code(), Some(2));

    let st = bin()
        .args(["mtd-curve", "--draws"])
        .arg(dir.path().join("missing.csv"))
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(3));

    let st = bin().arg("no-such-command").status().unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn mtd_curve_emits_grid_from_draws() {
    let dir = tempfile::tempdir().unwrap();
    let draws = sample_toxicity_posterior(
        &[],
        &ToxicityPrior::ciscab(),
        &McmcConfig {
            chains: 1,
            burn_in: 200,
            kept_per_chain: 500,
            thin: 1,
        },
        3,
    )
    .unwrap();
    let csv = dir.path().join("draws.csv");
    draws.write_csv(std::fs::File::create(&csv).unwrap()).unwrap();
    let out = bin()
        .args(["mtd-curve", "--points", "11", "--draws"])
        .arg(&csv)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "k,x,y,dose_a,dose_b");
    assert_eq!(lines.count(), 11);
}

#[test]
fn build_scenario_matches_checked_in_output() {
    let out = bin()
        .args(["build-scenario", "--spec"])
        .arg(scenarios().join("h0_boundary.spec.json"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let built: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let stored: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(scenarios().join("h0_boundary.json")).unwrap()).unwrap();
    assert_eq!(built, stored);
}
