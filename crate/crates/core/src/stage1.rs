//! Stage I: cohorts of two patients escalated with overdose control,
//! alternating which agent moves, followed by a plug-in MTD curve.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{
    sample_toxicity_posterior, McmcConfig, OutcomeRecord, PosteriorDraws, Stage, ToxicityPrior,
};
use crate::math::{logit, MtdCurve, StdDose, ToxicityParams};
use crate::outcome::OutcomeSource;
use crate::rng::{derive, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Stage1Config {
    pub n1_max: usize,
    /// Feasibility bound: the quantile level of the posterior MTD used for
    /// each assignment.
    pub phi: f64,
    pub start_dose: StdDose,
    pub theta: f64,
    pub safety_xi: f64,
    /// Largest per-cohort change of either coordinate, if any.
    #[serde(default)]
    pub max_step: Option<f64>,
}

impl Stage1Config {
    /// Stage-I settings of the cisplatin/cabazitaxel trial, started at 15/75 mg/m².
    pub fn ciscab() -> Self {
        Stage1Config {
            start_dose: StdDose { x: 1.0 / 3.0, y: 0.5 },
            ..Self::generic()
        }
    }

    /// Same settings started at the lowest combination.
    pub fn generic() -> Self {
        Stage1Config {
            n1_max: 30,
            phi: 0.25,
            start_dose: StdDose::ORIGIN,
            theta: 0.33,
            safety_xi: 0.8,
            max_step: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.phi > 0.0 && self.phi < 1.0) {
            return Err(Error::config("stage1/phi", "must lie in (0,1)"));
        }
        if self.n1_max < 2 || !self.n1_max.is_multiple_of(2) {
            return Err(Error::config("stage1/n1_max", "must be even and at least 2"));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::config("stage1/theta", "must lie in (0,1)"));
        }
        if !(self.safety_xi > 0.0 && self.safety_xi < 1.0) {
            return Err(Error::config("stage1/safety_xi", "must lie in (0,1)"));
        }
        self.start_dose
            .validate()
            .map_err(|e| Error::config("stage1/start_dose", e.to_string()))?;
        if let Some(s) = self.max_step {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::config("stage1/max_step", "must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum SafetyVerdict {
    Continue,
    Stop,
}

/// Per-draw MTD root clamped into [0,1]; an undefined root maps to the
/// bound on the side of its numerator.
#[inline]
fn clamped_root(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        return if num > 0.0 { 1.0 } else { 0.0 };
    }
    (num / den).clamp(0.0, 1.0)
}

/// Type-1 empirical quantile: the smallest value whose ECDF reaches `p`.
pub fn empirical_quantile(values: &mut [f64], p: f64) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let k = ((p * values.len() as f64).ceil() as usize).clamp(1, values.len());
    values[k - 1]
}

struct Columns<'a> {
    rho00: &'a [f64],
    rho10: &'a [f64],
    rho01: &'a [f64],
    alpha3: &'a [f64],
}

fn columns(draws: &PosteriorDraws) -> Result<Columns<'_>> {
    if draws.is_empty() {
        return Err(Error::Precondition("no toxicity draws".into()));
    }
    Ok(Columns {
        rho00: draws.expect_column("rho00")?,
        rho10: draws.expect_column("rho10")?,
        rho01: draws.expect_column("rho01")?,
        alpha3: draws.expect_column("alpha3")?,
    })
}

#[derive(Clone, Copy)]
enum Axis {
    XGivenY,
    YGivenX,
}

fn ewoc_quantile(draws: &PosteriorDraws, other: f64, theta: f64, phi: f64, axis: Axis) -> Result<f64> {
    let c = columns(draws)?;
    let lt = logit(theta);
    let mut roots: Vec<f64> = (0..draws.len())
        .map(|j| {
            let a0 = logit(c.rho00[j]);
            let a1 = logit(c.rho10[j]) - a0;
            let a2 = logit(c.rho01[j]) - a0;
            let a3 = c.alpha3[j];
            match axis {
                Axis::XGivenY => clamped_root(lt - a0 - a2 * other, a1 + a3 * other),
                Axis::YGivenX => clamped_root(lt - a0 - a1 * other, a2 + a3 * other),
            }
        })
        .collect();
    Ok(empirical_quantile(&mut roots, phi).clamp(0.0, 1.0))
}

/// The `phi`-quantile of the posterior distribution of the MTD of agent A
/// when agent B is held at `y`.
pub fn ewoc_quantile_x_given_y(draws: &PosteriorDraws, y: f64, theta: f64, phi: f64) -> Result<f64> {
    ewoc_quantile(draws, y, theta, phi, Axis::XGivenY)
}

/// The `phi`-quantile of the posterior MTD of agent B when A is held at `x`.
pub fn ewoc_quantile_y_given_x(draws: &PosteriorDraws, x: f64, theta: f64, phi: f64) -> Result<f64> {
    ewoc_quantile(draws, x, theta, phi, Axis::YGivenX)
}

fn clip(prev: f64, next: f64, max_step: Option<f64>) -> f64 {
    match max_step {
        Some(s) => next.clamp(prev - s, prev + s).clamp(0.0, 1.0),
        None => next,
    }
}

/// Doses for the next cohort of two. The first cohort starts at
/// `start_dose`. Afterwards the first patient keeps the previous first
/// patient's y and moves x to its EWOC quantile, and the second keeps the
/// previous second patient's x and moves y.
pub fn next_cohort_stage1(
    records: &[OutcomeRecord],
    draws: Option<&PosteriorDraws>,
    cfg: &Stage1Config,
) -> Result<[StdDose; 2]> {
    if records.is_empty() {
        return Ok([cfg.start_dose; 2]);
    }
    if let Some(r) = records.iter().find(|r| r.z.is_none()) {
        return Err(Error::Precondition(format!(
            "patient {} has a pending DLT outcome",
            r.patient
        )));
    }
    if records.len() < 2 {
        return Err(Error::Precondition("stage-I cohorts have two patients".into()));
    }
    let draws = draws.ok_or_else(|| Error::Precondition("posterior draws required".into()))?;
    let a = records[records.len() - 2].dose;
    let b = records[records.len() - 1].dose;
    let xa = ewoc_quantile_x_given_y(draws, a.y, cfg.theta, cfg.phi)?;
    let yb = ewoc_quantile_y_given_x(draws, b.x, cfg.theta, cfg.phi)?;
    Ok([
        StdDose {
            x: clip(a.x, xa, cfg.max_step),
            y: a.y,
        },
        StdDose {
            x: b.x,
            y: clip(b.y, yb, cfg.max_step),
        },
    ])
}

/// Posterior probability that the lowest combination is already above target.
pub fn prob_rho00_above(draws: &PosteriorDraws, theta: f64) -> Result<f64> {
    let c = columns(draws)?;
    Ok(c.rho00.iter().filter(|&&r| r > theta).count() as f64 / c.rho00.len() as f64)
}

/// Stops when `P(rho00 > theta | data) > safety_xi`.
pub fn check_stage1_safety(draws: &PosteriorDraws, cfg: &Stage1Config) -> Result<SafetyVerdict> {
    Ok(if prob_rho00_above(draws, cfg.theta)? > cfg.safety_xi {
        SafetyVerdict::Stop
    } else {
        SafetyVerdict::Continue
    })
}

/// Coordinatewise posterior medians of the toxicity parameters.
pub fn median_params(draws: &PosteriorDraws, theta: f64) -> Result<ToxicityParams> {
    columns(draws)?;
    Ok(ToxicityParams {
        rho00: draws.median("rho00")?,
        rho10: draws.median("rho10")?,
        rho01: draws.median("rho01")?,
        alpha3: draws.median("alpha3")?,
        theta,
    })
}

/// Plug-in MTD curve at the posterior medians.
pub fn estimate_mtd_curve(draws: &PosteriorDraws, theta: f64) -> Result<MtdCurve> {
    MtdCurve::new(median_params(draws, theta)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Stage1Decision {
    /// Doses for the next cohort.
    Next { doses: [StdDose; 2] },
    StopSafety,
    /// Budget reached. `curve` is `None` when the medians admit no MTD
    /// combination inside the unit square.
    Complete {
        curve: Option<MtdCurve>,
        curve_error: Option<String>,
    },
}

/// Outcome of the refit that follows a completed cohort.
#[derive(Debug, Clone)]
pub struct Stage1Step {
    /// Number of completed cohorts the fit conditions on.
    pub cohort: usize,
    pub draws: PosteriorDraws,
    pub p_rho00_above_theta: f64,
    pub medians: ToxicityParams,
    pub decision: Stage1Decision,
}

/// Seed of the toxicity fit after `cohort` completed cohorts.
pub fn stage1_fit_seed(trial_seed: u64, cohort: usize) -> u64 {
    derive(trial_seed, Stream::ToxicityFit, cohort as u64)
}

/// Refits the toxicity posterior on all completed stage-I records and
/// decides how the trial proceeds.
pub fn stage1_step(
    records: &[OutcomeRecord],
    cfg: &Stage1Config,
    prior: &ToxicityPrior,
    mcmc: &McmcConfig,
    trial_seed: u64,
) -> Result<Stage1Step> {
    if records.is_empty() || !records.len().is_multiple_of(2) {
        return Err(Error::Precondition(format!(
            "stage-I refits follow complete cohorts of two, got {} records",
            records.len()
        )));
    }
    let cohort = records.len() / 2;
    let draws = sample_toxicity_posterior(records, prior, mcmc, stage1_fit_seed(trial_seed, cohort))?;
    let p_above = prob_rho00_above(&draws, cfg.theta)?;
    let medians = median_params(&draws, cfg.theta)?;
    let decision = if p_above > cfg.safety_xi {
        Stage1Decision::StopSafety
    } else if records.len() >= cfg.n1_max {
        match MtdCurve::new(medians) {
            Ok(c) => Stage1Decision::Complete {
                curve: Some(c),
                curve_error: None,
            },
            Err(e) => Stage1Decision::Complete {
                curve: None,
                curve_error: Some(e.to_string()),
            },
        }
    } else {
        Stage1Decision::Next {
            doses: next_cohort_stage1(records, Some(&draws), cfg)?,
        }
    };
    Ok(Stage1Step {
        cohort,
        draws,
        p_rho00_above_theta: p_above,
        medians,
        decision,
    })
}

#[derive(Debug, Clone)]
pub struct Stage1Result {
    pub records: Vec<OutcomeRecord>,
    /// `None` after a safety stop or when no MTD combination is feasible.
    pub curve: Option<MtdCurve>,
    pub curve_error: Option<String>,
    /// Draws of the last refit.
    pub tox_draws: PosteriorDraws,
    pub stopped_for_safety: bool,
}

/// Runs stage I to completion against an outcome source. Outcomes resolve
/// at assignment, so efficacy is recorded alongside toxicity.
pub fn run_stage1(
    cfg: &Stage1Config,
    prior: &ToxicityPrior,
    mcmc: &McmcConfig,
    source: &mut dyn OutcomeSource,
    trial_seed: u64,
) -> Result<Stage1Result> {
    cfg.validate()?;
    let mut records: Vec<OutcomeRecord> = Vec::with_capacity(cfg.n1_max);
    let mut doses = [cfg.start_dose; 2];
    loop {
        for dose in doses {
            let patient = records.len();
            let o = source.outcome(patient, Stage::One, dose);
            records.push(OutcomeRecord {
                patient,
                stage: Stage::One,
                dose,
                z: Some(o.z),
                e: Some(o.e),
            });
        }
        let step = stage1_step(&records, cfg, prior, mcmc, trial_seed)?;
        match step.decision {
            Stage1Decision::Next { doses: d } => doses = d,
            Stage1Decision::StopSafety => {
                return Ok(Stage1Result {
                    records,
                    curve: None,
                    curve_error: None,
                    tox_draws: step.draws,
                    stopped_for_safety: true,
                })
            }
            Stage1Decision::Complete { curve, curve_error } => {
                return Ok(Stage1Result {
                    records,
                    curve,
                    curve_error,
                    tox_draws: step.draws,
                    stopped_for_safety: false,
                })
            }
        }
    }
}
