//! MTD curve of a known toxicity surface, printed in raw doses.

use combitrial::config::Agents;
use combitrial::math::{tox_prob, MtdCurve, ToxicityParams};

fn main() -> combitrial::Result<()> {
    let tox = ToxicityParams {
        rho00: 0.05,
        rho10: 0.4,
        rho01: 0.5,
        alpha3: 2.0,
        theta: 0.33,
    };
    let curve = MtdCurve::new(tox)?;
    let agents = Agents::ciscab();
    println!("feasible x in [{:.3}, {:.3}]", curve.x_lo, curve.x_hi);
    for d in curve.grid(11).points {
        let raw = agents.raw(d);
        println!(
            "x {:.3}  y {:.3}  {} {:5.2}  {} {:6.2}  P(DLT) {:.3}",
            d.x,
            d.y,
            agents.a.name,
            raw.a,
            agents.b.name,
            raw.b,
            tox_prob(&tox, d)
        );
    }
    Ok(())
}
