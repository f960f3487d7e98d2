//! Stage II on a fixed curve: initial cohort, adaptive cohorts and the decision.

use combitrial::config::Design;
use combitrial::inference::{OutcomeRecord, Stage};
use combitrial::math::{efficacy_prob, EfficacyStageParams, MtdCurve, StdDose, ToxicityParams};
use combitrial::outcome::Outcome;
use combitrial::rng::{rng_for, Stream};
use combitrial::stage2::run_stage2;
use rand::Rng;

fn main() -> combitrial::Result<()> {
    let tox = ToxicityParams {
        rho00: 0.05,
        rho10: 0.4,
        rho01: 0.5,
        alpha3: 2.0,
        theta: 0.33,
    };
    let eff = EfficacyStageParams {
        beta0: -3.0,
        beta1: 1.0,
        beta2: 0.5,
        beta3: 1.0,
    };
    let curve = MtdCurve::new(tox)?;
    let design = Design::ciscab_desk();
    let seed = 9;
    // stage-I efficacy from the same profile at a spread of doses
    let data1: Vec<OutcomeRecord> = (0..30)
        .map(|i| {
            let dose = StdDose {
                x: (i % 6) as f64 / 5.0,
                y: (i / 6) as f64 / 4.0,
            };
            let mut rng = rng_for(seed, Stream::Outcome, i as u64);
            OutcomeRecord {
                patient: i,
                stage: Stage::One,
                dose,
                z: Some(false),
                e: Some(rng.random::<f64>() < efficacy_prob(&eff, dose)),
            }
        })
        .collect();
    let mut source = |patient: usize, _: Stage, d: StdDose| {
        let mut rng = rng_for(seed, Stream::Outcome, patient as u64);
        Outcome {
            z: rng.random::<f64>() < 0.2,
            e: rng.random::<f64>() < efficacy_prob(&eff, d),
        }
    };
    let r = run_stage2(&curve, &data1, &design.stage2, &design.hyper, &design.mcmc, &mut source, 30, seed)?;
    for f in &r.fits {
        println!("n2 {:2}  max exceedance {:.3}  P(EX) {:.3}  {:?}", f.n2, f.max_exceedance, f.exnex_weight, f.verdict);
    }
    let d = r.decision;
    println!("decision {:?} at ({:.3}, {:.3})", d.verdict, d.optimal_dose.x, d.optimal_dose.y);
    Ok(())
}
