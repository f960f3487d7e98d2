use std::path::Path;

use combitrial::conduct::{OutcomeEntry, RecommendationKind, Trial, TrialState};
use combitrial::config::Design;
use combitrial::inference::McmcConfig;
use combitrial::math::StdDose;
use combitrial::simulator::{build_scenario, scenario_outcomes, simulate_trial, Scenario, ScenarioSpec};

fn scenario() -> Scenario {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/h1_disagreement.spec.json");
    let spec: ScenarioSpec = serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap();
    build_scenario(&spec).unwrap()
}

fn quick() -> Design {
    let mut d = Design::ciscab_desk();
    d.mcmc = McmcConfig {
        chains: 1,
        burn_in: 200,
        kept_per_chain: 400,
        thin: 1,
    };
    d.stage2.grid_size = 101;
    d
}

/// Conducts a trial in-process, reporting each cohort's outcomes in one batch.
fn conduct(sc: &Scenario, design: &Design, seed: u64) -> Trial {
    let mut trial = Trial::new(design.clone(), seed).unwrap();
    let mut source = scenario_outcomes(sc, seed);
    loop {
        let rec = trial.state().recommendation();
        match rec.kind {
            RecommendationKind::Dose => {
                let cohort = rec.cohort.unwrap();
                let batch: Vec<OutcomeEntry> = cohort
                    .patients
                    .iter()
                    .map(|p| {
                        let o = source(p.patient, cohort.stage, StdDose { x: p.dose.x, y: p.dose.y });
                        OutcomeEntry {
                            patient: p.patient,
                            stage: Some(cohort.stage),
                            z: Some(o.z),
                            e: Some(o.e),
                        }
                    })
                    .collect();
                trial.record(&batch).unwrap();
            }
            RecommendationKind::AwaitingStage1Efficacy => panic!("every stage-I efficacy was reported"),
            RecommendationKind::Pending => panic!("in-process refits are synchronous"),
            RecommendationKind::Decision => break,
        }
    }
    trial
}

#[test]
fn in_process_conduct_matches_simulation() {
    let sc = scenario();
    let design = quick();
    for seed in [1u64, 2, 3, 4] {
        let trial = conduct(&sc, &design, seed);
        let sim = simulate_trial(&sc, &design, seed).unwrap();
        let state = trial.state();
        let d = state.recommendation().decision.unwrap();
        assert_eq!(d.end, sim.end, "seed {seed}");
        assert_eq!(state.stage2_records(), sim.stage2, "seed {seed}");
        assert_eq!(state.stage1_records(), sim.stage1, "seed {seed}");
        assert_eq!(d.max_exceedance, sim.decision.map(|x| x.max_exceedance));

        let replayed = TrialState::replay(trial.events()).unwrap();
        assert_eq!(replayed.document(), state.document());
    }
}
