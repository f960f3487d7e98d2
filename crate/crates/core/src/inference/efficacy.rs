//! Two-stage dose-efficacy posterior with exchangeable/nonexchangeable
//! main effects.
//!
//! Random-walk coordinates, in order: per stage `beta0`, `beta1`, `beta2`,
//! `ln beta3`; then `mu1`, `mu2`, `ln tau1`, `ln tau2`, `rho`. The latent
//! indicator `lambda` (1 = exchangeable) follows at index 13 and is drawn
//! exactly from its full conditional.
//!
//! Streams: block 0 owns stage 1, block 1 stage 2, block 2 the
//! hyperparameters and block 3 the indicator. Each sweep also translates
//! `mu_j` jointly with the exchangeable main effects `j`, drawing from
//! block 2, and proposes switching the indicator together with fresh
//! stage-2 main effects, drawing from block 3. With `w = 0` the stage-2
//! conditionals never touch stage-1 quantities, so the stage-2 columns are
//! bit-identical with or without stage-1 data.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::draws::PosteriorDraws;
use super::sampler::{self, Support, Target};
use super::{ExnexHyper, McmcConfig, OutcomeRecord, Stage};
use crate::error::{Error, Result};
use crate::math::{softplus, EfficacyStageParams};

pub const EFFICACY_NAMES: [&str; 14] = [
    "beta0_s1", "beta1_s1", "beta2_s1", "beta3_s1", "beta0_s2", "beta1_s2", "beta2_s2",
    "beta3_s2", "mu1", "mu2", "tau1", "tau2", "rho", "lambda",
];

const STAGE_DIM: usize = 4;
const MU1: usize = 8;
const MU2: usize = 9;
const LN_TAU1: usize = 10;
const LN_TAU2: usize = 11;
const RHO: usize = 12;
const LAMBDA: usize = 13;
const RW_DIM: usize = 13;
/// Step sizes of the joint translation moves, relative to the prior sd of `mu`.
const SHIFT_SCALES: [f64; 3] = [1.0, 0.25, 0.0625];

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Default)]
struct StageData {
    x: Vec<f64>,
    y: Vec<f64>,
    e: Vec<bool>,
}

impl StageData {
    fn collect(records: &[OutcomeRecord], label: &str) -> Result<Self> {
        let mut d = StageData::default();
        for r in records {
            let e = r.e.ok_or_else(|| {
                Error::Precondition(format!(
                    "{label}: patient {} has a pending efficacy outcome",
                    r.patient
                ))
            })?;
            d.x.push(r.dose.x);
            d.y.push(r.dose.y);
            d.e.push(e);
        }
        Ok(d)
    }

    /// Log-likelihood given `(beta0, beta1, beta2, ln beta3)`.
    fn ln_likelihood(&self, p: &[f64]) -> f64 {
        let (b0, a, b, c) = (p[0], p[1].exp(), p[2].exp(), p[3].exp());
        let mut ll = 0.0;
        for i in 0..self.e.len() {
            let (x, y) = (self.x[i], self.y[i]);
            let eta = b0 + a * x + b * y + c * x * y;
            ll -= if self.e[i] { softplus(-eta) } else { softplus(eta) };
        }
        ll
    }
}

/// Inverse and log-determinant of a 2x2 covariance.
struct Gauss2 {
    mean: (f64, f64),
    inv: [[f64; 2]; 2],
    ln_det: f64,
}

impl Gauss2 {
    fn new(mean: (f64, f64), cov: [[f64; 2]; 2]) -> Self {
        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        Gauss2 {
            mean,
            inv: [
                [cov[1][1] / det, -cov[0][1] / det],
                [-cov[1][0] / det, cov[0][0] / det],
            ],
            ln_det: det.ln(),
        }
    }

    fn ln_pdf(&self, b: (f64, f64)) -> f64 {
        let d0 = b.0 - self.mean.0;
        let d1 = b.1 - self.mean.1;
        let q = d0 * d0 * self.inv[0][0] + 2.0 * d0 * d1 * self.inv[0][1] + d1 * d1 * self.inv[1][1];
        -LN_2PI - 0.5 * self.ln_det - 0.5 * q
    }
}

/// Normalized log density of `BVN(mu, Phi)` with `Phi` built from
/// `(tau1, tau2, rho)`.
fn ln_bvn_exchangeable(s: &[f64], b: (f64, f64)) -> f64 {
    let (t1, t2, r) = (s[LN_TAU1].exp(), s[LN_TAU2].exp(), s[RHO]);
    let d0 = (b.0 - s[MU1]) / t1;
    let d1 = (b.1 - s[MU2]) / t2;
    let one_m = 1.0 - r * r;
    let q = (d0 * d0 - 2.0 * r * d0 * d1 + d1 * d1) / one_m;
    -LN_2PI - s[LN_TAU1] - s[LN_TAU2] - 0.5 * one_m.ln() - 0.5 * q
}

struct EfficacyTarget<'a> {
    hyper: &'a ExnexHyper,
    data: [StageData; 2],
    nex: Gauss2,
}

fn main_effects(s: &[f64], stage: usize) -> (f64, f64) {
    let o = stage * STAGE_DIM;
    (s[o + 1], s[o + 2])
}

impl EfficacyTarget<'_> {
    fn exchangeable(&self, s: &[f64]) -> bool {
        s[LAMBDA] > 0.5
    }

    /// Log prior of the stage-2 main effects given the current indicator.
    fn ln_stage2_main_prior(&self, s: &[f64]) -> f64 {
        let b = main_effects(s, 1);
        if self.exchangeable(s) {
            ln_bvn_exchangeable(s, b)
        } else {
            self.nex.ln_pdf(b)
        }
    }

    fn ln_hyper_prior(&self, s: &[f64], i: usize) -> f64 {
        let h = self.hyper;
        match i {
            MU1 => -0.5 * ((s[MU1] - h.v.0) / h.s.0).powi(2),
            MU2 => -0.5 * ((s[MU2] - h.v.1) / h.s.1).powi(2),
            LN_TAU1 => s[LN_TAU1] - 0.5 * (s[LN_TAU1].exp() / h.z.0).powi(2),
            LN_TAU2 => s[LN_TAU2] - 0.5 * (s[LN_TAU2].exp() / h.z.1).powi(2),
            RHO => {
                if s[RHO] > 0.0 && s[RHO] < 1.0 {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            _ => unreachable!(),
        }
    }
}

impl EfficacyTarget<'_> {
    /// Terms of the joint density that change when `mu_j` and every
    /// exchangeable main effect `j` move together.
    fn ln_shift_density(&self, s: &[f64], j: usize) -> f64 {
        let (mu, v, sd) = if j == 0 {
            (MU1, self.hyper.v.0, self.hyper.s.0)
        } else {
            (MU2, self.hyper.v.1, self.hyper.s.1)
        };
        let mut lp = -0.5 * ((s[mu] - v) / sd).powi(2) + self.data[0].ln_likelihood(&s[..STAGE_DIM]);
        if self.exchangeable(s) {
            lp += self.data[1].ln_likelihood(&s[STAGE_DIM..2 * STAGE_DIM]);
        }
        lp
    }

    /// Metropolis translation of `mu_j` together with the exchangeable
    /// main effects `j`. The exchangeable density depends only on their
    /// differences, so it cancels from the ratio.
    fn shift_move(&self, s: &mut [f64], j: usize, step: f64, rng: &mut ChaCha8Rng) {
        let mut idx = vec![if j == 0 { MU1 } else { MU2 }, 1 + j];
        if self.exchangeable(s) {
            idx.push(STAGE_DIM + 1 + j);
        }
        let delta = step * rng.sample::<f64, _>(StandardNormal);
        let u: f64 = rng.random();
        let before = self.ln_shift_density(s, j);
        idx.iter().for_each(|&i| s[i] += delta);
        if !(u.ln() < self.ln_shift_density(s, j) - before) {
            idx.iter().for_each(|&i| s[i] -= delta);
        }
    }
}

impl EfficacyTarget<'_> {
    /// Proposes the other mixture component for the stage-2 main effects,
    /// drawing them afresh from that component's prior. Prior and proposal
    /// densities cancel, leaving the weight and likelihood ratios.
    fn switch_move(&self, s: &mut [f64], rng: &mut ChaCha8Rng) {
        let w = self.hyper.w;
        let to_ex = !self.exchangeable(s);
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let u: f64 = rng.random();
        let proposal = if to_ex {
            let (t1, t2, r) = (s[LN_TAU1].exp(), s[LN_TAU2].exp(), s[RHO]);
            (s[MU1] + t1 * z1, s[MU2] + t2 * (r * z1 + (1.0 - r * r).sqrt() * z2))
        } else {
            let r0 = self.hyper.r0;
            let l11 = r0[0][0].sqrt();
            let l21 = r0[1][0] / l11;
            let l22 = (r0[1][1] - l21 * l21).sqrt();
            (self.hyper.m0.0 + l11 * z1, self.hyper.m0.1 + l21 * z1 + l22 * z2)
        };
        let ln_w = |ex: bool| if ex { w.ln() } else { (1.0 - w).ln() };
        let o = STAGE_DIM;
        let before = ln_w(!to_ex) + self.data[1].ln_likelihood(&s[o..o + STAGE_DIM]);
        let current = (s[o + 1], s[o + 2]);
        s[o + 1] = proposal.0;
        s[o + 2] = proposal.1;
        let after = ln_w(to_ex) + self.data[1].ln_likelihood(&s[o..o + STAGE_DIM]);
        if u.ln() < after - before {
            s[LAMBDA] = if to_ex { 1.0 } else { 0.0 };
        } else {
            s[o + 1] = current.0;
            s[o + 2] = current.1;
        }
    }
}

impl Target for EfficacyTarget<'_> {
    fn dim(&self) -> usize {
        RW_DIM
    }

    fn ln_conditional(&self, s: &[f64], i: usize) -> f64 {
        if i < 2 * STAGE_DIM {
            let stage = i / STAGE_DIM;
            let o = stage * STAGE_DIM;
            let p = &s[o..o + STAGE_DIM];
            let prior = match i - o {
                0 => {
                    let (m, sd) = self.hyper.intercept_prior;
                    -0.5 * ((p[0] - m) / sd).powi(2)
                }
                3 => {
                    let (shape, rate) = self.hyper.interaction_gamma;
                    shape * p[3] - rate * p[3].exp()
                }
                _ if stage == 0 => ln_bvn_exchangeable(s, main_effects(s, 0)),
                _ => self.ln_stage2_main_prior(s),
            };
            return prior + self.data[stage].ln_likelihood(p);
        }
        let mut lp = self.ln_hyper_prior(s, i);
        if !lp.is_finite() {
            return lp;
        }
        lp += ln_bvn_exchangeable(s, main_effects(s, 0));
        if self.exchangeable(s) {
            lp += ln_bvn_exchangeable(s, main_effects(s, 1));
        }
        lp
    }

    fn support(&self, i: usize) -> Support {
        if i == RHO {
            Support::Unit
        } else {
            Support::Real
        }
    }

    fn initial_step(&self, i: usize) -> f64 {
        match i {
            RHO => 0.3,
            3 | 7 => 1.5,
            _ => 0.5,
        }
    }

    fn blocks(&self) -> usize {
        4
    }

    fn block_of(&self, i: usize) -> usize {
        if i < STAGE_DIM {
            0
        } else if i < 2 * STAGE_DIM {
            1
        } else {
            2
        }
    }

    fn initial(&self, rngs: &mut [ChaCha8Rng]) -> Vec<f64> {
        let h = self.hyper;
        let mut s = vec![0.0; RW_DIM + 1];
        for stage in 0..2 {
            let rng = &mut rngs[stage];
            let mut n = || 0.3 * rng.sample::<f64, _>(StandardNormal);
            let o = stage * STAGE_DIM;
            s[o] = h.intercept_prior.0 + n();
            s[o + 1] = h.v.0 + n();
            s[o + 2] = h.v.1 + n();
            s[o + 3] = (h.interaction_gamma.0 / h.interaction_gamma.1).ln() + n();
        }
        let rng = &mut rngs[2];
        let mut n = || 0.3 * rng.sample::<f64, _>(StandardNormal);
        s[MU1] = h.v.0 + n();
        s[MU2] = h.v.1 + n();
        s[LN_TAU1] = h.z.0.ln() + n();
        s[LN_TAU2] = h.z.1.ln() + n();
        s[RHO] = rngs[2].random_range(0.2..0.8);
        s[LAMBDA] = if h.w >= 1.0 {
            1.0
        } else if h.w <= 0.0 {
            0.0
        } else if rngs[3].random::<f64>() < h.w {
            1.0
        } else {
            0.0
        };
        s
    }

    fn gibbs_step(&self, s: &mut [f64], rngs: &mut [ChaCha8Rng]) {
        for j in 0..2 {
            let sd = if j == 0 { self.hyper.s.0 } else { self.hyper.s.1 };
            for scale in SHIFT_SCALES {
                self.shift_move(s, j, sd * scale, &mut rngs[2]);
            }
        }
        let w = self.hyper.w;
        if w <= 0.0 || w >= 1.0 {
            return;
        }
        self.switch_move(s, &mut rngs[3]);
        let b = main_effects(s, 1);
        let l_ex = w.ln() + ln_bvn_exchangeable(s, b);
        let l_nex = (1.0 - w).ln() + self.nex.ln_pdf(b);
        let p_ex = 1.0 / (1.0 + (l_nex - l_ex).exp());
        s[LAMBDA] = if rngs[3].random::<f64>() < p_ex { 1.0 } else { 0.0 };
    }

    fn names(&self) -> Vec<String> {
        EFFICACY_NAMES.iter().map(|s| s.to_string()).collect()
    }

    fn output(&self, s: &[f64], out: &mut Vec<f64>) {
        for stage in 0..2 {
            let o = stage * STAGE_DIM;
            out.extend_from_slice(&[s[o], s[o + 1], s[o + 2], s[o + 3].exp()]);
        }
        out.extend_from_slice(&[
            s[MU1],
            s[MU2],
            s[LN_TAU1].exp(),
            s[LN_TAU2].exp(),
            s[RHO],
            s[LAMBDA],
        ]);
    }
}

/// Joint posterior of both stages' efficacy parameters, the hierarchical
/// parameters and the exchangeability indicator.
pub fn sample_efficacy_posterior(
    data1: &[OutcomeRecord],
    data2: &[OutcomeRecord],
    hyper: &ExnexHyper,
    cfg: &McmcConfig,
    seed: u64,
) -> Result<PosteriorDraws> {
    hyper.validate()?;
    cfg.validate()?;
    let target = EfficacyTarget {
        hyper,
        data: [
            StageData::collect(data1, "stage 1")?,
            StageData::collect(data2, "stage 2")?,
        ],
        nex: Gauss2::new(hyper.m0, hyper.r0),
    };
    sampler::run(&target, cfg, seed)
}

/// Posterior probability that the stage-2 main effects are exchangeable.
pub fn posterior_exnex_weight(draws: &PosteriorDraws) -> Result<f64> {
    draws.mean("lambda")
}

/// Posterior means of one stage's efficacy parameters on the model scale.
pub fn stage_params_mean(draws: &PosteriorDraws, stage: Stage) -> Result<EfficacyStageParams> {
    let k = stage.number();
    Ok(EfficacyStageParams {
        beta0: draws.mean(&format!("beta0_s{k}"))?,
        beta1: draws.mean(&format!("beta1_s{k}"))?,
        beta2: draws.mean(&format!("beta2_s{k}"))?,
        beta3: draws.mean(&format!("beta3_s{k}"))?,
    })
}

/// Per-draw stage parameters, for surfaces evaluated over the posterior.
pub(crate) fn stage_params_columns(
    draws: &PosteriorDraws,
    stage: Stage,
) -> Result<[&[f64]; 4]> {
    let k = stage.number();
    Ok([
        draws.expect_column(&format!("beta0_s{k}"))?,
        draws.expect_column(&format!("beta1_s{k}"))?,
        draws.expect_column(&format!("beta2_s{k}"))?,
        draws.expect_column(&format!("beta3_s{k}"))?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::StdDose;

    fn rec(patient: usize, stage: Stage, x: f64, e: bool) -> OutcomeRecord {
        OutcomeRecord {
            patient,
            stage,
            dose: StdDose { x, y: 1.0 - x },
            z: Some(false),
            e: Some(e),
        }
    }

    #[test]
    fn gauss2_matches_independent_formula() {
        let g = Gauss2::new((1.0, -1.0), [[4.0, 0.0], [0.0, 9.0]]);
        let direct = -LN_2PI - 2f64.ln() - 3f64.ln() - 0.5 * (0.25 + 4.0 / 9.0);
        assert!((g.ln_pdf((2.0, 1.0)) - direct).abs() < 1e-12);
    }

    #[test]
    fn exchangeable_density_matches_gauss2() {
        let mut s = vec![0.0; RW_DIM + 1];
        s[MU1] = 0.3;
        s[MU2] = -0.2;
        s[LN_TAU1] = 0.5f64.ln();
        s[LN_TAU2] = 0.8f64.ln();
        s[RHO] = 0.4;
        let cov = [[0.25, 0.4 * 0.5 * 0.8], [0.4 * 0.5 * 0.8, 0.64]];
        let g = Gauss2::new((0.3, -0.2), cov);
        let b = (1.1, 0.7);
        assert!((ln_bvn_exchangeable(&s, b) - g.ln_pdf(b)).abs() < 1e-12);
    }

    #[test]
    fn forced_indicator_weights() {
        let d1: Vec<_> = (0..6).map(|i| rec(i, Stage::One, 0.1 * i as f64, i % 2 == 0)).collect();
        let d2: Vec<_> = (0..6).map(|i| rec(i + 6, Stage::Two, 0.1 * i as f64, i > 2)).collect();
        let cfg = McmcConfig {
            chains: 2,
            burn_in: 100,
            kept_per_chain: 200,
            thin: 1,
        };
        for (w, expect) in [(0.0, 0.0), (1.0, 1.0)] {
            let h = ExnexHyper::default().with_w(w);
            let d = sample_efficacy_posterior(&d1, &d2, &h, &cfg, 3).unwrap();
            assert_eq!(posterior_exnex_weight(&d).unwrap(), expect);
        }
    }

    #[test]
    fn pending_efficacy_rejected() {
        let mut r = rec(0, Stage::Two, 0.5, true);
        r.e = None;
        let err = sample_efficacy_posterior(&[], &[r], &ExnexHyper::default(), &McmcConfig::desk(), 1);
        assert!(matches!(err, Err(Error::Precondition(_))));
    }

    #[test]
    fn invalid_w_is_config_error() {
        let h = ExnexHyper::default().with_w(-0.1);
        let err = sample_efficacy_posterior(&[], &[], &h, &McmcConfig::desk(), 1);
        assert!(matches!(err, Err(Error::Config { .. })));
    }

    #[test]
    fn w_zero_stage2_columns_ignore_stage1_data() {
        let d1: Vec<_> = (0..8).map(|i| rec(i, Stage::One, 0.12 * i as f64, true)).collect();
        let d2: Vec<_> = (0..5).map(|i| rec(i + 8, Stage::Two, 0.2 * i as f64, i == 4)).collect();
        let h = ExnexHyper::default().with_w(0.0);
        let cfg = McmcConfig {
            chains: 2,
            burn_in: 200,
            kept_per_chain: 300,
            thin: 1,
        };
        let with = sample_efficacy_posterior(&d1, &d2, &h, &cfg, 17).unwrap();
        let without = sample_efficacy_posterior(&[], &d2, &h, &cfg, 17).unwrap();
        for name in ["beta0_s2", "beta1_s2", "beta2_s2", "beta3_s2"] {
            assert_eq!(with.column(name), without.column(name), "{name}");
        }
    }
}
