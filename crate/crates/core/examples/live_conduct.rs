//! Conducts a trial cohort by cohort the way an investigator would, previewing
//! each batch with a dry run before recording it.

use combitrial::conduct::{OutcomeEntry, RecommendationKind, Trial, TrialState};
use combitrial::config::Design;
use combitrial::math::{efficacy_prob, tox_prob, EfficacyStageParams, StdDose, ToxicityParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> combitrial::Result<()> {
    let tox = ToxicityParams {
        rho00: 0.05,
        rho10: 0.4,
        rho01: 0.5,
        alpha3: 2.0,
        theta: 0.33,
    };
    let eff = EfficacyStageParams {
        beta0: -2.5,
        beta1: 0.8,
        beta2: 0.3,
        beta3: 1.0,
    };
    let mut trial = Trial::new(Design::ciscab_desk(), 42)?;
    let mut clinic = ChaCha8Rng::seed_from_u64(42);
    loop {
        let rec = trial.state().recommendation();
        match rec.kind {
            RecommendationKind::Dose => {
                let cohort = rec.cohort.expect("dose recommendations carry a cohort");
                let batch: Vec<OutcomeEntry> = cohort
                    .patients
                    .iter()
                    .map(|p| {
                        let d = StdDose {
                            x: p.dose.x,
                            y: p.dose.y,
                        };
                        OutcomeEntry {
                            patient: p.patient,
                            stage: Some(cohort.stage),
                            z: Some(clinic.random::<f64>() < tox_prob(&tox, d)),
                            e: Some(clinic.random::<f64>() < efficacy_prob(&eff, d)),
                        }
                    })
                    .collect();
                let preview = trial.state().dry_run(&batch)?;
                println!(
                    "stage {:?} cohort {:2}: {} patients, previewed next step {:?}",
                    cohort.stage,
                    cohort.cohort,
                    batch.len(),
                    preview.recommendation.kind
                );
                trial.record(&batch)?;
            }
            RecommendationKind::Decision => {
                let d = rec.decision.expect("decisions carry a verdict");
                println!("{} ({:?}), max exceedance {:?}", d.rule, d.end, d.max_exceedance);
                if let Some(o) = d.optimal_dose {
                    println!("selected {:.1} / {:.1} mg/m²", o.dose_a, o.dose_b);
                }
                break;
            }
            other => unreachable!("in-process conduct never reports {other:?}"),
        }
    }
    let replayed = TrialState::replay(trial.events())?;
    assert_eq!(&replayed, trial.state());
    println!("{} events replay to the same state", trial.events().len());
    Ok(())
}
