//! Builds a scenario from its specification and reports the construction residuals.
//!
//! `cargo run --example build_scenario -- scenarios/h1_disagreement.spec.json`

use std::path::PathBuf;

use combitrial::simulator::{build_scenario, ScenarioSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/h1_agreement.spec.json")
    });
    let spec: ScenarioSpec = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
    let sc = build_scenario(&spec)?;
    let curve = sc.true_curve()?;
    println!("{} ({:?}, {:?})", sc.name, sc.hypothesis, sc.label);
    println!("toxicity {:?}", sc.true_tox);
    println!("curve x in [{:.3}, {:.3}]", curve.x_lo, curve.x_hi);
    println!("stage-2 efficacy {:?}", sc.true_eff_stage2);
    println!("stage-1 efficacy {:?}", sc.true_eff_stage1);
    println!("stage-2 maximum on the curve {:.4} against p0 {}", sc.stage2_max_on_curve()?, sc.p0);
    println!("{}", serde_json::to_string_pretty(&sc.construction)?);
    Ok(())
}
