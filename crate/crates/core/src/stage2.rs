//! Stage II: allocation along the estimated MTD curve, adaptive
//! randomization toward efficacious combinations and the interim and final
//! decision rules.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{Error, Result};
use crate::inference::{
    posterior_exnex_weight, sample_efficacy_posterior, stage_params_mean, ExnexHyper, McmcConfig,
    OutcomeRecord, PosteriorDraws, Stage,
};
use crate::inference::stage_params_columns;
use crate::math::{equal_spacing, logistic, logit, CurveGrid, EfficacyStageParams, MtdCurve, StdDose};
use crate::outcome::OutcomeSource;
use crate::rng::{derive, rng_for, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Stage2Config {
    pub n_bar1: usize,
    pub n_bar2: usize,
    pub n2_max: usize,
    pub p0: f64,
    pub delta_u: f64,
    pub delta_0: f64,
    pub delta_1: f64,
    pub delta_theta: f64,
    pub theta: f64,
    pub grid_size: usize,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Stage2Config {
            n_bar1: 10,
            n_bar2: 5,
            n2_max: 30,
            p0: 0.15,
            delta_u: 0.4,
            delta_0: 0.2,
            delta_1: 0.8,
            delta_theta: 0.8,
            theta: 0.33,
            grid_size: 1001,
        }
    }
}

impl Stage2Config {
    pub fn validate(&self) -> Result<()> {
        let unit = [
            ("stage2/p0", self.p0),
            ("stage2/delta_u", self.delta_u),
            ("stage2/delta_0", self.delta_0),
            ("stage2/delta_1", self.delta_1),
            ("stage2/delta_theta", self.delta_theta),
            ("stage2/theta", self.theta),
        ];
        for (path, v) in unit {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::config(path, "must lie in (0,1)"));
            }
        }
        if self.delta_0 >= self.delta_u {
            return Err(Error::config("stage2/delta_0", "must be below delta_u"));
        }
        if self.delta_u >= self.delta_1 {
            return Err(Error::config("stage2/delta_1", "must be above delta_u"));
        }
        if self.n_bar1 == 0 {
            return Err(Error::config("stage2/n_bar1", "must be at least 1"));
        }
        if self.n_bar2 == 0 {
            return Err(Error::config("stage2/n_bar2", "must be at least 1"));
        }
        if self.n2_max < self.n_bar1 {
            return Err(Error::config("stage2/n2_max", "must be at least n_bar1"));
        }
        if self.grid_size < 2 {
            return Err(Error::config("stage2/grid_size", "must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Continue,
    StopFutility,
    StopEfficacy,
    StopSafety,
    CompleteRejectH0,
    CompleteAcceptH0,
}

impl Verdict {
    pub fn is_terminal(self) -> bool {
        self != Verdict::Continue
    }

    /// Whether the trial ends declaring the combination efficacious.
    pub fn rejects_h0(self) -> bool {
        matches!(self, Verdict::CompleteRejectH0 | Verdict::StopEfficacy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Stage2Decision {
    pub verdict: Verdict,
    pub max_exceedance: f64,
    pub optimal_dose: StdDose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum RulePhase {
    /// After a refit that follows the initial cohort or a later one.
    Interim,
    Final,
}

/// `n_bar1` doses with equal x-spacing over the curve's feasible interval.
pub fn initial_allocation(curve: &MtdCurve, n_bar1: usize) -> Result<Vec<StdDose>> {
    if !(curve.x_lo <= curve.x_hi) {
        return Err(Error::EmptyCurve("feasible interval is empty".into()));
    }
    Ok(equal_spacing(curve.x_lo, curve.x_hi, n_bar1)
        .into_iter()
        .map(|x| curve.point_at(x))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub doses: Vec<StdDose>,
    pub warnings: Vec<String>,
}

/// Draws `n` doses from the density along the curve proportional to the
/// efficacy probability at `params`. Cells of the `grid_size`-point grid
/// carry trapezoid mass; within a cell x is uniform and y follows the curve.
pub fn allocate_from_params(
    params: &EfficacyStageParams,
    curve: &MtdCurve,
    grid_size: usize,
    n: usize,
    rng: &mut impl Rng,
) -> Allocation {
    let xs = equal_spacing(curve.x_lo, curve.x_hi, grid_size.max(2));
    let mut warnings = Vec::new();
    if curve.width() <= 0.0 {
        return Allocation {
            doses: vec![curve.point_at(curve.x_lo); n],
            warnings,
        };
    }
    let f: Vec<f64> = xs
        .iter()
        .map(|&x| logistic(params.predictor(curve.point_at(x))))
        .collect();
    let mut cum = Vec::with_capacity(xs.len() - 1);
    let mut total = 0.0;
    for k in 0..xs.len() - 1 {
        total += 0.5 * (f[k] + f[k + 1]) * (xs[k + 1] - xs[k]);
        cum.push(total);
    }
    let uniform = !(total > 0.0 && total.is_finite());
    if uniform {
        warnings.push("efficacy density has no mass along the curve; allocating uniformly".into());
    }
    let doses = (0..n)
        .map(|_| {
            let x = if uniform {
                curve.x_lo + rng.random::<f64>() * curve.width()
            } else {
                let u = rng.random::<f64>() * total;
                let k = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
                xs[k] + rng.random::<f64>() * (xs[k + 1] - xs[k])
            };
            curve.point_at(x)
        })
        .collect();
    Allocation { doses, warnings }
}

/// Adaptive allocation at the posterior means of the stage-2 parameters.
pub fn adaptive_allocation(
    eff_draws: &PosteriorDraws,
    curve: &MtdCurve,
    grid_size: usize,
    n_bar2: usize,
    seed: u64,
) -> Result<Allocation> {
    let means = stage_params_mean(eff_draws, Stage::Two)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(allocate_from_params(&means, curve, grid_size, n_bar2, &mut rng))
}

/// Posterior probability, at each grid point, that stage-2 efficacy exceeds `p0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ExceedanceSurface {
    pub points: Vec<StdDose>,
    pub prob: Vec<f64>,
    pub max: f64,
    /// Index of the first grid point attaining `max`, i.e. the smallest x.
    pub argmax: usize,
}

impl ExceedanceSurface {
    pub fn optimal_dose(&self) -> StdDose {
        self.points[self.argmax]
    }
}

pub fn exceedance_surface(eff_draws: &PosteriorDraws, grid: &CurveGrid, p0: f64) -> Result<ExceedanceSurface> {
    if grid.is_empty() {
        return Err(Error::Precondition("empty curve grid".into()));
    }
    let cols = stage_params_columns(eff_draws, Stage::Two)?;
    let n = eff_draws.len();
    let a: Vec<f64> = cols[1].iter().map(|v| v.exp()).collect();
    let b: Vec<f64> = cols[2].iter().map(|v| v.exp()).collect();
    let cut = logit(p0);
    let prob: Vec<f64> = grid
        .points
        .iter()
        .map(|d| {
            let xy = d.x * d.y;
            let mut hits = 0usize;
            for j in 0..n {
                if cols[0][j] + a[j] * d.x + b[j] * d.y + cols[3][j] * xy > cut {
                    hits += 1;
                }
            }
            hits as f64 / n as f64
        })
        .collect();
    let mut argmax = 0;
    for (k, &p) in prob.iter().enumerate() {
        if p > prob[argmax] {
            argmax = k;
        }
    }
    Ok(ExceedanceSurface {
        points: grid.points.clone(),
        max: prob[argmax],
        prob,
        argmax,
    })
}

/// Interim: futility below `delta_0`, efficacy above `delta_1`, only once the
/// initial cohort is in. Final: reject H0 iff the maximum exceeds `delta_u`.
pub fn evaluate_rules(surface_max: f64, cfg: &Stage2Config, phase: RulePhase, n2_outcomes: usize) -> Result<Verdict> {
    if !(0.0..=1.0).contains(&surface_max) {
        return Err(Error::Domain(format!("surface maximum {surface_max} not in [0,1]")));
    }
    Ok(match phase {
        RulePhase::Final => {
            if surface_max > cfg.delta_u {
                Verdict::CompleteRejectH0
            } else {
                Verdict::CompleteAcceptH0
            }
        }
        RulePhase::Interim => {
            if n2_outcomes < cfg.n_bar1 {
                return Err(Error::Precondition(format!(
                    "interim rules need the initial cohort of {} outcomes, have {n2_outcomes}",
                    cfg.n_bar1
                )));
            }
            if surface_max < cfg.delta_0 {
                Verdict::StopFutility
            } else if surface_max > cfg.delta_1 {
                Verdict::StopEfficacy
            } else {
                Verdict::Continue
            }
        }
    })
}

/// Upper-tail probability beyond `theta` of the beta(1 + t, 1 + n - t)
/// posterior of the pooled stage-II DLT rate.
pub fn safety_tail(t: usize, n: usize, theta: f64) -> f64 {
    let beta = Beta::new(1.0 + t as f64, 1.0 + (n - t) as f64).expect("positive shapes");
    beta.sf(theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum SafetyMonitor {
    Continue,
    StopSafety,
}

pub fn safety_monitor(stage2_records: &[OutcomeRecord], theta: f64, delta_theta: f64) -> Result<SafetyMonitor> {
    let mut t = 0;
    for r in stage2_records {
        if r.stage != Stage::Two {
            return Err(Error::Precondition(format!("patient {} is not a stage-II record", r.patient)));
        }
        match r.z {
            Some(true) => t += 1,
            Some(false) => {}
            None => {
                return Err(Error::Precondition(format!(
                    "patient {} has a pending DLT outcome",
                    r.patient
                )))
            }
        }
    }
    let n = stage2_records.len();
    if n == 0 {
        return Ok(SafetyMonitor::Continue);
    }
    Ok(if safety_tail(t, n, theta) > delta_theta {
        SafetyMonitor::StopSafety
    } else {
        SafetyMonitor::Continue
    })
}

/// Outcome of the refit that follows a completed stage-II cohort.
#[derive(Debug, Clone)]
pub struct Stage2Step {
    /// Stage-II outcomes the fit conditions on.
    pub n2: usize,
    pub draws: PosteriorDraws,
    pub surface: ExceedanceSurface,
    pub exnex_weight: f64,
    pub stage2_mean: EfficacyStageParams,
    pub safety_tail: f64,
    pub verdict: Verdict,
    /// Doses of the next adaptive cohort; empty once the verdict is terminal.
    pub next: Vec<StdDose>,
    pub warnings: Vec<String>,
}

impl Stage2Step {
    pub fn decision(&self) -> Stage2Decision {
        Stage2Decision {
            verdict: self.verdict,
            max_exceedance: self.surface.max,
            optimal_dose: self.surface.optimal_dose(),
        }
    }
}

pub fn stage2_fit_seed(trial_seed: u64, n2: usize) -> u64 {
    derive(trial_seed, Stream::EfficacyFit, n2 as u64)
}

/// Refits the efficacy model on stage-I and accumulated stage-II data, then
/// applies the safety monitor, the interim or final rule and, when the trial
/// continues, draws the next adaptive cohort.
#[allow(clippy::too_many_arguments)]
pub fn stage2_step(
    curve: &MtdCurve,
    data1: &[OutcomeRecord],
    data2: &[OutcomeRecord],
    cfg: &Stage2Config,
    hyper: &ExnexHyper,
    mcmc: &McmcConfig,
    trial_seed: u64,
) -> Result<Stage2Step> {
    let n2 = data2.len();
    if n2 < cfg.n_bar1 {
        return Err(Error::Precondition(format!(
            "the first stage-II refit follows {} outcomes, have {n2}",
            cfg.n_bar1
        )));
    }
    let draws = sample_efficacy_posterior(data1, data2, hyper, mcmc, stage2_fit_seed(trial_seed, n2))?;
    let grid = curve.grid(cfg.grid_size);
    let surface = exceedance_surface(&draws, &grid, cfg.p0)?;
    let exnex_weight = posterior_exnex_weight(&draws)?;
    let stage2_mean = stage_params_mean(&draws, Stage::Two)?;
    let t = data2.iter().filter(|r| r.z == Some(true)).count();
    let tail = safety_tail(t, n2, cfg.theta);
    let mut warnings = draws.warnings().to_vec();

    let verdict = if safety_monitor(data2, cfg.theta, cfg.delta_theta)? == SafetyMonitor::StopSafety {
        Verdict::StopSafety
    } else if n2 >= cfg.n2_max {
        evaluate_rules(surface.max, cfg, RulePhase::Final, n2)?
    } else {
        evaluate_rules(surface.max, cfg, RulePhase::Interim, n2)?
    };
    let next = if verdict == Verdict::Continue {
        let n = cfg.n_bar2.min(cfg.n2_max - n2);
        let mut rng = rng_for(trial_seed, Stream::Allocation, n2 as u64);
        let alloc = allocate_from_params(&stage2_mean, curve, cfg.grid_size, n, &mut rng);
        warnings.extend(alloc.warnings);
        alloc.doses
    } else {
        Vec::new()
    };
    Ok(Stage2Step {
        n2,
        draws,
        surface,
        exnex_weight,
        stage2_mean,
        safety_tail: tail,
        verdict,
        next,
        warnings,
    })
}

/// Summary of one stage-II refit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Stage2FitSummary {
    pub n2: usize,
    pub max_exceedance: f64,
    pub optimal_dose: StdDose,
    pub exnex_weight: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone)]
pub struct Stage2Result {
    pub records: Vec<OutcomeRecord>,
    /// The first `n_initial` records form the equally spaced initial cohort.
    pub n_initial: usize,
    pub fits: Vec<Stage2FitSummary>,
    pub decision: Stage2Decision,
    pub surface: ExceedanceSurface,
    pub exnex_weight: f64,
    pub stage2_mean: EfficacyStageParams,
    /// Draws of the last refit.
    pub draws: PosteriorDraws,
    pub warnings: Vec<String>,
}

/// Runs stage II along `curve`. Stage-II patients are numbered from `first_patient`.
#[allow(clippy::too_many_arguments)]
pub fn run_stage2(
    curve: &MtdCurve,
    data1: &[OutcomeRecord],
    cfg: &Stage2Config,
    hyper: &ExnexHyper,
    mcmc: &McmcConfig,
    source: &mut dyn OutcomeSource,
    first_patient: usize,
    trial_seed: u64,
) -> Result<Stage2Result> {
    cfg.validate()?;
    let mut records: Vec<OutcomeRecord> = Vec::with_capacity(cfg.n2_max);
    let mut doses = initial_allocation(curve, cfg.n_bar1)?;
    let mut fits = Vec::new();
    let mut warnings = Vec::new();
    loop {
        for dose in doses {
            let patient = first_patient + records.len();
            let o = source.outcome(patient, Stage::Two, dose);
            records.push(OutcomeRecord {
                patient,
                stage: Stage::Two,
                dose,
                z: Some(o.z),
                e: Some(o.e),
            });
        }
        let step = stage2_step(curve, data1, &records, cfg, hyper, mcmc, trial_seed)?;
        fits.push(Stage2FitSummary {
            n2: step.n2,
            max_exceedance: step.surface.max,
            optimal_dose: step.surface.optimal_dose(),
            exnex_weight: step.exnex_weight,
            verdict: step.verdict,
        });
        warnings.extend(step.warnings.iter().cloned());
        if step.verdict.is_terminal() {
            return Ok(Stage2Result {
                decision: step.decision(),
                records,
                n_initial: cfg.n_bar1,
                fits,
                surface: step.surface,
                exnex_weight: step.exnex_weight,
                stage2_mean: step.stage2_mean,
                draws: step.draws,
                warnings,
            });
        }
        doses = step.next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{tox_prob, ToxicityParams};

    fn curve() -> MtdCurve {
        MtdCurve::new(ToxicityParams {
            rho00: 0.05,
            rho10: 0.4,
            rho01: 0.5,
            alpha3: 2.0,
            theta: 0.33,
        })
        .unwrap()
    }

    #[test]
    fn initial_allocation_spacing() {
        let c = curve();
        let two = initial_allocation(&c, 2).unwrap();
        assert_eq!(two[0].x, c.x_lo);
        assert_eq!(two[1].x, c.x_hi);
        let one = initial_allocation(&c, 1).unwrap();
        assert!((one[0].x - 0.5 * (c.x_lo + c.x_hi)).abs() < 1e-15);
        for d in initial_allocation(&c, 10).unwrap() {
            assert!((tox_prob(&c.tox, d) - 0.33).abs() < 1e-9);
        }
    }

    #[test]
    fn rule_boundaries() {
        let cfg = Stage2Config::default();
        assert_eq!(evaluate_rules(0.41, &cfg, RulePhase::Final, 30).unwrap(), Verdict::CompleteRejectH0);
        assert_eq!(evaluate_rules(0.40, &cfg, RulePhase::Final, 30).unwrap(), Verdict::CompleteAcceptH0);
        assert_eq!(evaluate_rules(0.19, &cfg, RulePhase::Interim, 10).unwrap(), Verdict::StopFutility);
        assert_eq!(evaluate_rules(0.5, &cfg, RulePhase::Interim, 10).unwrap(), Verdict::Continue);
        assert_eq!(evaluate_rules(0.81, &cfg, RulePhase::Interim, 15).unwrap(), Verdict::StopEfficacy);
        assert!(matches!(
            evaluate_rules(0.5, &cfg, RulePhase::Interim, 9),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn safety_tail_closed_form() {
        // beta(1, 11) tail beyond theta is (1 - theta)^11
        assert!((safety_tail(0, 10, 0.33) - 0.67f64.powi(11)).abs() < 1e-12);
        // beta(11, 1) tail is 1 - theta^11
        assert!((safety_tail(10, 10, 0.33) - (1.0 - 0.33f64.powi(11))).abs() < 1e-12);
    }

    #[test]
    fn safety_monitor_verdicts() {
        let rec = |i: usize, z: bool| OutcomeRecord {
            patient: i,
            stage: Stage::Two,
            dose: StdDose::ORIGIN,
            z: Some(z),
            e: Some(false),
        };
        let none: Vec<_> = (0..10).map(|i| rec(i, false)).collect();
        let all: Vec<_> = (0..10).map(|i| rec(i, true)).collect();
        assert_eq!(safety_monitor(&none, 0.33, 0.8).unwrap(), SafetyMonitor::Continue);
        assert_eq!(safety_monitor(&all, 0.33, 0.8).unwrap(), SafetyMonitor::StopSafety);
        assert_eq!(safety_monitor(&[], 0.33, 0.8).unwrap(), SafetyMonitor::Continue);
    }

    #[test]
    fn allocation_stays_on_curve() {
        let c = curve();
        let p = EfficacyStageParams {
            beta0: -2.0,
            beta1: 1.0,
            beta2: 0.0,
            beta3: 0.5,
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let a = allocate_from_params(&p, &c, 101, 200, &mut rng);
        for d in a.doses {
            assert!(d.x >= c.x_lo && d.x <= c.x_hi);
            assert!((tox_prob(&c.tox, d) - 0.33).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_mass_density_falls_back_to_uniform() {
        let c = curve();
        let p = EfficacyStageParams {
            beta0: -1e6,
            beta1: 0.0,
            beta2: 0.0,
            beta3: 0.0,
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let a = allocate_from_params(&p, &c, 11, 5, &mut rng);
        assert_eq!(a.doses.len(), 5);
        assert_eq!(a.warnings.len(), 1);
    }
}
