//! Statistical checks of the posterior samplers against the oracles. They
//! live with the library so they run ahead of the acceptance gate.

use combitrial::inference::{
    sample_efficacy_posterior, sample_toxicity_posterior, ExnexHyper, McmcConfig, OutcomeRecord, PosteriorDraws,
    Stage, ToxicityPrior,
};
use combitrial::math::{efficacy_prob, tox_prob, EfficacyStageParams, StdDose, ToxicityParams};
use crate::oracles::{ks_one_sample, ks_two_sample, normal_cdf, Rho00};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use statrs::distribution::{Beta as BetaDist, ChiSquared, ContinuousCDF, Gamma as GammaDist};

fn col<'a>(d: &'a PosteriorDraws, name: &str) -> &'a [f64] {
    d.column(name).unwrap_or_else(|| panic!("missing column {name}"))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn random_dose(rng: &mut impl Rng) -> StdDose {
    StdDose {
        x: rng.random(),
        y: rng.random(),
    }
}

fn tox_records(truth: &ToxicityParams, n: usize, rng: &mut impl Rng) -> Vec<OutcomeRecord> {
    (0..n)
        .map(|i| {
            let dose = random_dose(rng);
            OutcomeRecord {
                patient: i,
                stage: Stage::One,
                dose,
                z: Some(rng.random::<f64>() < tox_prob(truth, dose)),
                e: None,
            }
        })
        .collect()
}

fn eff_records(truth: &EfficacyStageParams, stage: Stage, n: usize, rng: &mut impl Rng) -> Vec<OutcomeRecord> {
    (0..n)
        .map(|i| {
            let dose = random_dose(rng);
            OutcomeRecord {
                patient: i,
                stage,
                dose,
                z: Some(false),
                e: Some(rng.random::<f64>() < efficacy_prob(truth, dose)),
            }
        })
        .collect()
}

#[test]
fn toxicity_posterior_concentrates_on_truth() {
    let truth = ToxicityParams {
        rho00: 0.08,
        rho10: 0.4,
        rho01: 0.3,
        alpha3: 3.0,
        theta: 0.33,
    };
    // the four corners and the centre carry the corner probabilities directly;
    // uniform doses leave the posterior sd of rho10 near 0.08 at this size
    let corners = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (0.5, 0.5)];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let data: Vec<OutcomeRecord> = (0..500)
        .map(|i| {
            let (x, y) = corners[i % corners.len()];
            let dose = StdDose { x, y };
            OutcomeRecord {
                patient: i,
                stage: Stage::One,
                dose,
                z: Some(rng.random::<f64>() < tox_prob(&truth, dose)),
                e: None,
            }
        })
        .collect();
    let cfg = McmcConfig {
        chains: 2,
        burn_in: 1000,
        kept_per_chain: 2000,
        thin: 2,
    };
    let draws = sample_toxicity_posterior(&data, &ToxicityPrior::ciscab(), &cfg, 5).unwrap();
    for (name, t) in [("rho00", truth.rho00), ("rho10", truth.rho10), ("rho01", truth.rho01)] {
        let m = mean(col(&draws, name));
        assert!((m - t).abs() < 0.08, "{name}: mean {m:.3}, truth {t}");
    }
}

#[test]
fn no_data_draws_reproduce_priors() {
    let cfg = McmcConfig {
        chains: 4,
        burn_in: 1000,
        kept_per_chain: 5000,
        thin: 10,
    };
    let prior = ToxicityPrior::ciscab();
    let tox = sample_toxicity_posterior(&[], &prior, &cfg, 3).unwrap();
    let b = |(a, c): (f64, f64)| BetaDist::new(a, c).unwrap();
    let (r10, r01) = (b(prior.rho10_beta), b(prior.rho01_beta));
    let (shape, rate) = prior.alpha3_gamma;
    let g = GammaDist::new(shape, rate).unwrap();
    let r00 = Rho00::new(prior.rho10_beta, prior.rho01_beta, prior.rho00_ratio_beta);
    let checks: Vec<(&str, f64)> = vec![
        ("rho10", ks_one_sample(col(&tox, "rho10"), |t| r10.cdf(t)).d),
        ("rho01", ks_one_sample(col(&tox, "rho01"), |t| r01.cdf(t)).d),
        ("alpha3", ks_one_sample(col(&tox, "alpha3"), |t| g.cdf(t)).d),
        ("rho00", ks_one_sample(col(&tox, "rho00"), |t| r00.cdf(t)).d),
    ];

    let hyper = ExnexHyper::default();
    let eff = sample_efficacy_posterior(&[], &[], &hyper, &cfg, 4).unwrap();
    let (m, s) = hyper.intercept_prior;
    let (gs, gr) = hyper.interaction_gamma;
    let g3 = GammaDist::new(gs, gr).unwrap();
    let mut all = checks;
    for stage in ["s1", "s2"] {
        let b0 = format!("beta0_{stage}");
        let b3 = format!("beta3_{stage}");
        all.push(("beta0", ks_one_sample(col(&eff, &b0), |t| normal_cdf(t, m, s)).d));
        all.push(("beta3", ks_one_sample(col(&eff, &b3), |t| g3.cdf(t)).d));
    }
    for (name, d) in all {
        assert!(d < 0.03, "{name}: D = {d:.4}");
    }
}

/// Random-walk Metropolis for the stage-2 model alone: intercept, two log
/// slopes and the log interaction, each prior independent.
fn reference_stage2(data: &[OutcomeRecord], hyper: &ExnexHyper, n: usize, thin: usize, seed: u64) -> Vec<[f64; 4]> {
    let (m0, s0) = hyper.intercept_prior;
    let (gs, gr) = hyper.interaction_gamma;
    let sd = [hyper.r0[0][0].sqrt(), hyper.r0[1][1].sqrt()];
    let log_post = |t: &[f64; 4]| {
        let b3 = t[3].exp();
        let mut lp = -0.5 * ((t[0] - m0) / s0).powi(2)
            - 0.5 * ((t[1] - hyper.m0.0) / sd[0]).powi(2)
            - 0.5 * ((t[2] - hyper.m0.1) / sd[1]).powi(2)
            + gs * t[3]
            - gr * b3;
        for r in data {
            let eta = t[0] + t[1].exp() * r.dose.x + t[2].exp() * r.dose.y + b3 * r.dose.x * r.dose.y;
            // log F(eta) and log(1 - F(eta)), stable on both tails
            let log1pexp = |u: f64| if u > 0.0 { u + (-u).exp().ln_1p() } else { u.exp().ln_1p() };
            lp -= if r.e == Some(true) { log1pexp(-eta) } else { log1pexp(eta) };
        }
        lp
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = [m0, 0.0, 0.0, 0.0];
    let mut lp = log_post(&t);
    let mut step = [0.5; 4];
    let burn = 20_000;
    let mut accepted = [0usize; 4];
    let mut out = Vec::with_capacity(n);
    for it in 0..burn + n * thin {
        for k in 0..4 {
            let mut prop = t;
            let z: f64 = StandardNormal.sample(&mut rng);
            prop[k] += step[k] * z;
            let lq = log_post(&prop);
            if rng.random::<f64>().ln() < lq - lp {
                t = prop;
                lp = lq;
                accepted[k] += 1;
            }
        }
        if it < burn && (it + 1) % 200 == 0 {
            // aim each coordinate at roughly 0.44 acceptance
            for k in 0..4 {
                let rate = accepted[k] as f64 / 200.0;
                step[k] *= ((rate - 0.44) * 2.0).exp();
                accepted[k] = 0;
            }
        }
        if it >= burn && (it - burn) % thin == 0 {
            out.push([t[0], t[1], t[2], t[3].exp()]);
        }
    }
    out
}

#[test]
fn independence_matches_reference_sampler() {
    let truth = EfficacyStageParams {
        beta0: -2.0,
        beta1: 0.3,
        beta2: -0.5,
        beta3: 1.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let data1 = eff_records(&truth, Stage::One, 30, &mut rng);
    let data2 = eff_records(&truth, Stage::Two, 40, &mut rng);
    let hyper = ExnexHyper::default().with_w(0.0);
    let cfg = McmcConfig {
        chains: 4,
        burn_in: 2000,
        kept_per_chain: 6000,
        thin: 10,
    };
    let draws = sample_efficacy_posterior(&data1, &data2, &hyper, &cfg, 8).unwrap();
    let reference = reference_stage2(&data2, &hyper, 24_000, 25, 9);
    for (k, name) in ["beta0_s2", "beta1_s2", "beta2_s2", "beta3_s2"].iter().enumerate() {
        let r: Vec<f64> = reference.iter().map(|t| t[k]).collect();
        let ks = ks_two_sample(col(&draws, name), &r);
        assert!(ks.d < 0.05, "{name}: D = {:.4}", ks.d);
    }
}

#[test]
fn full_borrowing_pulls_main_effects_together() {
    let truth = EfficacyStageParams {
        beta0: -1.5,
        beta1: 0.5,
        beta2: 0.2,
        beta3: 0.5,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let data1 = eff_records(&truth, Stage::One, 300, &mut rng);
    let data2: Vec<OutcomeRecord> = data1
        .iter()
        .map(|r| OutcomeRecord {
            stage: Stage::Two,
            ..*r
        })
        .collect();
    let hyper = ExnexHyper {
        z: (0.01, 0.01),
        ..ExnexHyper::default().with_w(1.0)
    };
    let cfg = McmcConfig {
        chains: 2,
        burn_in: 2000,
        kept_per_chain: 3000,
        thin: 2,
    };
    let draws = sample_efficacy_posterior(&data1, &data2, &hyper, &cfg, 12).unwrap();
    for j in ["beta1", "beta2"] {
        let a = mean(col(&draws, &format!("{j}_s1")));
        let b = mean(col(&draws, &format!("{j}_s2")));
        assert!((a - b).abs() < 0.1, "{j}: stage 1 {a:.3}, stage 2 {b:.3}");
    }
}

#[test]
fn exchangeability_weight_tracks_agreement() {
    let steep = EfficacyStageParams {
        beta0: -3.0,
        beta1: 1.5,
        beta2: 1.5,
        beta3: 0.0,
    };
    let flat = EfficacyStageParams {
        beta0: -1.0,
        beta1: -4.0,
        beta2: -4.0,
        beta3: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let data1 = eff_records(&steep, Stage::One, 200, &mut rng);
    let agree = eff_records(&steep, Stage::Two, 200, &mut rng);
    let conflict = eff_records(&flat, Stage::Two, 200, &mut rng);
    let hyper = ExnexHyper::default().with_w(0.5);
    let cfg = McmcConfig {
        chains: 2,
        burn_in: 2000,
        kept_per_chain: 4000,
        thin: 2,
    };
    let weight = |d2: &[OutcomeRecord]| mean(col(&sample_efficacy_posterior(&data1, d2, &hyper, &cfg, 6).unwrap(), "lambda"));
    let (wa, wc) = (weight(&agree), weight(&conflict));
    assert!(wc < 0.5, "conflicting data: weight {wc:.3}");
    assert!(wa > wc, "agreeing {wa:.3} vs conflicting {wc:.3}");
}

/// Rank of the truth among thinned draws after each of `reps` prior-drawn fits.
#[test]
fn toxicity_ranks_are_uniform() {
    let prior = ToxicityPrior::ciscab();
    let beta = |(a, b): (f64, f64)| Beta::new(a, b).unwrap();
    let (shape, rate) = prior.alpha3_gamma;
    let gamma = Gamma::new(shape, 1.0 / rate).unwrap();
    let cfg = McmcConfig {
        chains: 1,
        burn_in: 1000,
        kept_per_chain: 990,
        thin: 10,
    };
    let (reps, bins) = (200, 10);
    let names = ["rho00", "rho10", "rho01", "alpha3"];
    let mut counts = vec![vec![0usize; bins]; names.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    for rep in 0..reps {
        let rho10 = beta(prior.rho10_beta).sample(&mut rng);
        let rho01 = beta(prior.rho01_beta).sample(&mut rng);
        let truth = ToxicityParams {
            rho00: beta(prior.rho00_ratio_beta).sample(&mut rng) * rho10.min(rho01),
            rho10,
            rho01,
            alpha3: gamma.sample(&mut rng),
            theta: 0.33,
        };
        let data = tox_records(&truth, 30, &mut rng);
        let draws = sample_toxicity_posterior(&data, &prior, &cfg, rep).unwrap();
        let values = [truth.rho00, truth.rho10, truth.rho01, truth.alpha3];
        for (k, name) in names.iter().enumerate() {
            let c = col(&draws, name);
            // draws are thinned so 99 of them, every tenth, are near-independent
            let rank = c.iter().step_by(10).filter(|&&v| v < values[k]).count();
            counts[k][rank * bins / 100] += 1;
        }
    }
    let expected = reps as f64 / bins as f64;
    let chi = ChiSquared::new((bins - 1) as f64).unwrap();
    for (k, name) in names.iter().enumerate() {
        let stat: f64 = counts[k].iter().map(|&n| (n as f64 - expected).powi(2) / expected).sum();
        let p = chi.sf(stat);
        assert!(p > 0.01, "{name}: counts {:?}, p {p:.4}", counts[k]);
    }
}
