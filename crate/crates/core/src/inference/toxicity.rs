//! Posterior of the reparameterized dose-toxicity model.
//!
//! Sampled coordinates: `logit(rho01)`, `logit(rho10)`, `logit(r)` with
//! `rho00 = r * min(rho01, rho10)`, and `ln(alpha3)`. On these scales the
//! beta priors become `a ln F(u) + b ln F(-u)` and the gamma prior
//! `shape * v - rate * e^v`, Jacobians included.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::draws::PosteriorDraws;
use super::sampler::{self, Target};
use super::{McmcConfig, OutcomeRecord, ToxicityPrior};
use crate::error::{Error, Result};
use crate::math::{ln_logistic, logit, softplus, ToxicityParams};

pub const TOXICITY_NAMES: [&str; 4] = ["rho00", "rho10", "rho01", "alpha3"];

const U01: usize = 0;
const U10: usize = 1;
const U_RATIO: usize = 2;
const V_ALPHA3: usize = 3;

struct ToxicityTarget<'a> {
    prior: &'a ToxicityPrior,
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<bool>,
}

/// ln(rho00) and logit(rho00) from the sampled coordinates.
fn rho00_logit(s: &[f64]) -> f64 {
    let ln_min = ln_logistic(s[U01].min(s[U10]));
    let ln_rho00 = ln_logistic(s[U_RATIO]) + ln_min;
    ln_rho00 - (-ln_rho00.exp()).ln_1p()
}

impl ToxicityTarget<'_> {
    fn ln_likelihood(&self, s: &[f64]) -> f64 {
        let a0 = rho00_logit(s);
        let a1 = s[U10] - a0;
        let a2 = s[U01] - a0;
        let a3 = s[V_ALPHA3].exp();
        let mut ll = 0.0;
        for i in 0..self.z.len() {
            let (x, y) = (self.x[i], self.y[i]);
            let eta = a0 + a1 * x + a2 * y + a3 * x * y;
            ll -= if self.z[i] { softplus(-eta) } else { softplus(eta) };
        }
        ll
    }

    fn ln_prior_term(&self, s: &[f64], i: usize) -> f64 {
        let beta = |(a, b): (f64, f64), u: f64| a * ln_logistic(u) + b * ln_logistic(-u);
        match i {
            U01 => beta(self.prior.rho01_beta, s[U01]),
            U10 => beta(self.prior.rho10_beta, s[U10]),
            U_RATIO => beta(self.prior.rho00_ratio_beta, s[U_RATIO]),
            _ => {
                let (shape, rate) = self.prior.alpha3_gamma;
                shape * s[V_ALPHA3] - rate * s[V_ALPHA3].exp()
            }
        }
    }
}

impl Target for ToxicityTarget<'_> {
    fn dim(&self) -> usize {
        4
    }

    fn ln_conditional(&self, s: &[f64], i: usize) -> f64 {
        self.ln_prior_term(s, i) + self.ln_likelihood(s)
    }

    fn initial_step(&self, i: usize) -> f64 {
        match i {
            U_RATIO | V_ALPHA3 => 1.0,
            _ => 0.8,
        }
    }

    fn initial(&self, rngs: &mut [ChaCha8Rng]) -> Vec<f64> {
        let rng = &mut rngs[0];
        let mut jitter = |center: f64| center + 0.3 * rng.sample::<f64, _>(StandardNormal);
        let beta_mean = |(a, b): (f64, f64)| a / (a + b);
        let (shape, rate) = self.prior.alpha3_gamma;
        vec![
            jitter(logit(beta_mean(self.prior.rho01_beta))),
            jitter(logit(beta_mean(self.prior.rho10_beta))),
            jitter(logit(beta_mean(self.prior.rho00_ratio_beta))),
            jitter((shape / rate).ln()),
        ]
    }

    fn names(&self) -> Vec<String> {
        TOXICITY_NAMES.iter().map(|s| s.to_string()).collect()
    }

    fn output(&self, s: &[f64], out: &mut Vec<f64>) {
        let rho01 = ln_logistic(s[U01]).exp();
        let rho10 = ln_logistic(s[U10]).exp();
        let ratio = ln_logistic(s[U_RATIO]).exp();
        out.extend_from_slice(&[ratio * rho01.min(rho10), rho10, rho01, s[V_ALPHA3].exp()]);
    }
}

/// Draws `(rho00, rho10, rho01, alpha3)` from the toxicity posterior given
/// records whose DLT outcomes are all known.
pub fn sample_toxicity_posterior(
    data: &[OutcomeRecord],
    prior: &ToxicityPrior,
    cfg: &McmcConfig,
    seed: u64,
) -> Result<PosteriorDraws> {
    prior.validate()?;
    cfg.validate()?;
    let mut target = ToxicityTarget {
        prior,
        x: Vec::with_capacity(data.len()),
        y: Vec::with_capacity(data.len()),
        z: Vec::with_capacity(data.len()),
    };
    for r in data {
        let z = r.z.ok_or_else(|| {
            Error::Precondition(format!("patient {} has a pending DLT outcome", r.patient))
        })?;
        target.x.push(r.dose.x);
        target.y.push(r.dose.y);
        target.z.push(z);
    }
    sampler::run(&target, cfg, seed)
}

/// The `j`-th draw as model parameters with target `theta`.
pub fn toxicity_params_of_draw(draws: &PosteriorDraws, j: usize, theta: f64) -> Result<ToxicityParams> {
    let col = |n: &str| draws.expect_column(n).map(|c| c[j]);
    Ok(ToxicityParams {
        rho00: col("rho00")?,
        rho10: col("rho10")?,
        rho01: col("rho01")?,
        alpha3: col("alpha3")?,
        theta,
    })
}
