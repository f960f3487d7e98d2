//! Operating characteristics over the borrowing grid, written as JSON and CSV.
//!
//! `cargo run --release --example operating_characteristics -- 50 out/`

use std::path::PathBuf;

use combitrial::config::Design;
use combitrial::export;
use combitrial::simulator::{build_scenario, run_oc_grid, OcReport, ScenarioSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let m: usize = args.next().map(|a| a.parse()).transpose()?.unwrap_or(20);
    let out = args.next().map(PathBuf::from);
    let spec_path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/h1_agreement.spec.json");
    let sc = build_scenario(&serde_json::from_str::<ScenarioSpec>(&std::fs::read_to_string(spec_path)?)?)?;
    let design = Design::ciscab_desk();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let run = run_oc_grid(&sc, m, &design, &[0.0, 0.3, 0.8], 1, workers)?;
    println!("{:>4} {:>7} {:>7} {:>7} {:>7} {:>7}", "w", "reject", "futile", "early", "safety", "n2");
    for s in &run.summaries {
        println!(
            "{:>4.1} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7.2}",
            s.w, s.reject_rate, s.p_stop_futility, s.p_stop_efficacy, s.p_stop_safety, s.mean_n2
        );
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir)?;
        let report = OcReport::new(&sc, &design, 1, &run)?;
        std::fs::write(dir.join("oc_report.json"), serde_json::to_string_pretty(&report)?)?;
        export::write_oc_table(std::fs::File::create(dir.join("oc_table.csv"))?, &report.summaries)?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}
