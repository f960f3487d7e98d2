//! Stage I against a simulated truth, ending with the estimated MTD curve.

use combitrial::config::Design;
use combitrial::inference::Stage;
use combitrial::math::{tox_prob, StdDose, ToxicityParams};
use combitrial::outcome::Outcome;
use combitrial::rng::{rng_for, Stream};
use combitrial::stage1::run_stage1;
use rand::Rng;

fn main() -> combitrial::Result<()> {
    let truth = ToxicityParams {
        rho00: 0.05,
        rho10: 0.4,
        rho01: 0.5,
        alpha3: 2.0,
        theta: 0.33,
    };
    let design = Design::ciscab_desk();
    let seed = 2024;
    let mut source = |patient: usize, _: Stage, d: StdDose| {
        let mut rng = rng_for(seed, Stream::Outcome, patient as u64);
        Outcome {
            z: rng.random::<f64>() < tox_prob(&truth, d),
            e: false,
        }
    };
    let result = run_stage1(&design.stage1, &design.tox_prior, &design.mcmc, &mut source, seed)?;
    for pair in result.records.chunks(2) {
        let row: Vec<String> = pair
            .iter()
            .map(|r| format!("({:.3}, {:.3}) z={}", r.dose.x, r.dose.y, r.z == Some(true)))
            .collect();
        println!("{}", row.join("   "));
    }
    match (&result.curve, result.stopped_for_safety) {
        (_, true) => println!("stopped for safety"),
        (Some(c), _) => println!("estimated curve over x in [{:.3}, {:.3}], medians {:?}", c.x_lo, c.x_hi, c.tox),
        (None, _) => println!("no MTD combination inside the unit square: {:?}", result.curve_error),
    }
    Ok(())
}
