//! Posterior of the stage-2 main effects as the prior exchangeability weight grows.

use combitrial::inference::{posterior_exnex_weight, sample_efficacy_posterior, ExnexHyper, McmcConfig, OutcomeRecord, Stage};
use combitrial::math::{efficacy_prob, EfficacyStageParams, StdDose};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn records(e: &EfficacyStageParams, stage: Stage, n: usize, rng: &mut ChaCha8Rng) -> Vec<OutcomeRecord> {
    (0..n)
        .map(|i| {
            let dose = StdDose {
                x: rng.random(),
                y: rng.random(),
            };
            OutcomeRecord {
                patient: i,
                stage,
                dose,
                z: Some(false),
                e: Some(rng.random::<f64>() < efficacy_prob(e, dose)),
            }
        })
        .collect()
}

fn main() -> combitrial::Result<()> {
    let truth = EfficacyStageParams {
        beta0: -2.5,
        beta1: 1.0,
        beta2: 0.5,
        beta3: 0.5,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let data1 = records(&truth, Stage::One, 60, &mut rng);
    let data2 = records(&truth, Stage::Two, 15, &mut rng);
    println!("truth: beta1 {:.2}, beta2 {:.2}", truth.beta1, truth.beta2);
    for w in [0.0, 0.3, 0.5, 0.8, 1.0] {
        let draws = sample_efficacy_posterior(&data1, &data2, &ExnexHyper::default().with_w(w), &McmcConfig::desk(), 3)?;
        println!(
            "w {w:.1}: beta1_s2 {:+.3}  beta2_s2 {:+.3}  P(EX | data) {:.3}",
            draws.mean("beta1_s2")?,
            draws.mean("beta2_s2")?,
            posterior_exnex_weight(&draws)?
        );
    }
    Ok(())
}
