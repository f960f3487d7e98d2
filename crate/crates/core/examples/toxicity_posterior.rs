//! Toxicity posterior after a handful of outcomes, with convergence diagnostics.

use combitrial::inference::{mcmc_diagnostics, sample_toxicity_posterior, McmcConfig, OutcomeRecord, Stage, ToxicityPrior};
use combitrial::math::StdDose;
use combitrial::stage1::{median_params, prob_rho00_above};

fn main() -> combitrial::Result<()> {
    let cohorts = [((0.33, 0.5), [false, false]), ((0.5, 0.5), [false, true]), ((0.4, 0.6), [true, false])];
    let mut data = Vec::new();
    for ((x, y), zs) in cohorts {
        for z in zs {
            data.push(OutcomeRecord {
                patient: data.len(),
                stage: Stage::One,
                dose: StdDose { x, y },
                z: Some(z),
                e: None,
            });
        }
    }
    let draws = sample_toxicity_posterior(&data, &ToxicityPrior::ciscab(), &McmcConfig::default(), 7)?;
    println!("posterior medians: {:?}", median_params(&draws, 0.33)?);
    println!("P(rho00 > theta) = {:.3}", prob_rho00_above(&draws, 0.33)?);
    println!("{}", serde_json::to_string_pretty(&mcmc_diagnostics(&draws)).expect("serializable"));
    Ok(())
}
