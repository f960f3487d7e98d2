//! Independent oracles and end-to-end drivers used by the acceptance suite.

pub mod http;
pub mod oracles;
#[cfg(test)]
mod statistics;

use std::path::{Path, PathBuf};

use combitrial::simulator::{build_scenario, Scenario, ScenarioSpec};

/// Root of the checked-in scenario specifications.
pub fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

/// Builds `scenarios/{name}.spec.json`.
pub fn scenario(name: &str) -> Scenario {
    let path = scenarios_dir().join(format!("{name}.spec.json"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let spec: ScenarioSpec = serde_json::from_str(&text).expect("scenario spec parses");
    build_scenario(&spec).expect("scenario builds")
}
