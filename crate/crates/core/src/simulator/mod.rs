//! Monte-Carlo operating characteristics of the two-stage design.

mod oc;
mod scenario;

pub use oc::{
    run_oc, run_oc_grid, scenario_outcomes, simulate_trial, simulate_trial_grid, summarize,
    trial_seed, OcRun, OcSummary, TrialEnd, TrialRecord,
};
pub use scenario::{
    build_scenario, fit_efficacy_peak, fit_toxicity, generate_outcome, Agreement,
    ConstructionReport, EfficacySpec, Hypothesis, PeakSpec, ProfileReport, Scenario,
    ScenarioSpec, Stage1Spec, ToxicitySpec,
};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::config::Design;
use crate::error::Result;
use crate::math::StdDose;

/// Persisted result of `simulate`: inputs, the true curve grid and one
/// summary per value of `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct OcReport {
    pub scenario: Scenario,
    pub design: Design,
    pub master_seed: u64,
    pub m: usize,
    pub true_curve_grid: Vec<StdDose>,
    pub summaries: Vec<OcSummary>,
}

impl OcReport {
    pub fn new(scenario: &Scenario, design: &Design, master_seed: u64, run: &OcRun) -> Result<Self> {
        let grid = scenario.true_curve()?.grid(design.stage2.grid_size);
        Ok(OcReport {
            scenario: scenario.clone(),
            design: design.clone(),
            master_seed,
            m: run.summaries.first().map_or(0, |s| s.m),
            true_curve_grid: grid.points,
            summaries: run.summaries.clone(),
        })
    }
}
