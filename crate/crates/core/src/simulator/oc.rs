use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::scenario::{generate_outcome, Scenario};
use crate::config::Design;
use crate::error::{Error, Result};
use crate::inference::{OutcomeRecord, Stage};
use crate::math::{efficacy_prob, EfficacyStageParams, MtdCurve, StdDose};
use crate::outcome::Outcome;
use crate::rng::{rng_for, split, Stream};
use crate::stage1::run_stage1;
use crate::stage2::{exceedance_surface, run_stage2, Stage2Decision, Stage2FitSummary, Verdict};

/// How a simulated trial ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "stage", content = "verdict", rename_all = "snake_case")]
pub enum TrialEnd {
    Stage1Safety,
    /// Stage I finished but the estimated curve misses the unit square.
    NoCurve,
    Stage2(Verdict),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TrialRecord {
    pub seed: u64,
    pub w: f64,
    pub stage1: Vec<OutcomeRecord>,
    pub curve: Option<MtdCurve>,
    pub stage2: Vec<OutcomeRecord>,
    /// Leading stage-II records allocated by equal spacing.
    pub n_initial: usize,
    pub fits: Vec<Stage2FitSummary>,
    pub decision: Option<Stage2Decision>,
    pub exnex_weight: Option<f64>,
    pub stage2_mean: Option<EfficacyStageParams>,
    /// Final exceedance probabilities on the grid of the true curve.
    pub true_curve_surface: Option<Vec<f64>>,
    pub end: TrialEnd,
}

impl TrialRecord {
    /// Whether the trial rejects H0: the last surface maximum exceeds
    /// `delta_u` and the trial was not stopped for safety.
    pub fn rejects(&self) -> bool {
        match self.end {
            TrialEnd::Stage2(v) => v.rejects_h0(),
            _ => false,
        }
    }
}

/// Per-trial seed `i` under a master seed.
pub fn trial_seed(master_seed: u64, i: usize) -> u64 {
    split(master_seed, i as u64)
}

/// Outcome stream of one trial. Each patient's uniforms are keyed by the
/// patient index, so designs that differ only after stage I see the same
/// random numbers patient by patient.
pub fn scenario_outcomes(scenario: &Scenario, seed: u64) -> impl FnMut(usize, Stage, StdDose) -> Outcome + '_ {
    move |patient, stage, dose| {
        let mut rng = rng_for(seed, Stream::Outcome, patient as u64);
        generate_outcome(scenario, dose, stage, &mut rng)
    }
}

/// Runs one full trial.
pub fn simulate_trial(scenario: &Scenario, design: &Design, seed: u64) -> Result<TrialRecord> {
    let mut v = simulate_trial_grid(scenario, design, &[design.hyper.w], seed)?;
    Ok(v.remove(0))
}

/// Runs stage I once and stage II for every `w`, on common random numbers.
pub fn simulate_trial_grid(scenario: &Scenario, design: &Design, ws: &[f64], seed: u64) -> Result<Vec<TrialRecord>> {
    design.validate()?;
    let true_curve = scenario.true_curve()?;
    let true_grid = true_curve.grid(design.stage2.grid_size);
    let mut source = scenario_outcomes(scenario, seed);
    let s1 = run_stage1(&design.stage1, &design.tox_prior, &design.mcmc, &mut source, seed)?;

    ws.iter()
        .map(|&w| {
            let mut rec = TrialRecord {
                seed,
                w,
                stage1: s1.records.clone(),
                curve: s1.curve,
                stage2: Vec::new(),
                n_initial: 0,
                fits: Vec::new(),
                decision: None,
                exnex_weight: None,
                stage2_mean: None,
                true_curve_surface: None,
                end: TrialEnd::NoCurve,
            };
            if s1.stopped_for_safety {
                rec.end = TrialEnd::Stage1Safety;
                return Ok(rec);
            }
            let Some(curve) = s1.curve else {
                return Ok(rec);
            };
            let hyper = design.hyper.with_w(w);
            let s2 = run_stage2(
                &curve,
                &s1.records,
                &design.stage2,
                &hyper,
                &design.mcmc,
                &mut source,
                s1.records.len(),
                seed,
            )?;
            let on_truth = exceedance_surface(&s2.draws, &true_grid, design.stage2.p0)?;
            rec.stage2 = s2.records;
            rec.n_initial = s2.n_initial;
            rec.fits = s2.fits;
            rec.decision = Some(s2.decision);
            rec.exnex_weight = Some(s2.exnex_weight);
            rec.stage2_mean = Some(s2.stage2_mean);
            rec.true_curve_surface = Some(on_truth.prob);
            rec.end = TrialEnd::Stage2(s2.decision.verdict);
            Ok(rec)
        })
        .collect()
}

/// Operating characteristics of one design over `m` simulated trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct OcSummary {
    pub m: usize,
    pub w: f64,
    /// Power under H1, type-I error under H0.
    pub reject_rate: f64,
    pub p_stop_futility: f64,
    pub p_stop_efficacy: f64,
    /// Safety stops in either stage.
    pub p_stop_safety: f64,
    pub p_stop_safety_stage1: f64,
    pub p_no_curve: f64,
    /// Trials that reached at least one stage-II fit.
    pub n_stage2: usize,
    pub mean_n2: f64,
    /// Mean final exceedance probability on the true curve grid, over trials
    /// with a stage-II fit.
    pub mean_exceedance_surface: Vec<f64>,
    /// Share of adaptively randomized stage-II patients whose true efficacy
    /// exceeds `p0`, pooled over trials.
    pub alloc_above_p0: Option<f64>,
    /// Share of trials whose selected dose truly exceeds `p0`.
    pub p_optimal_above_p0: Option<f64>,
    pub mean_optimal_dose: Option<StdDose>,
    pub mean_exnex_weight: Option<f64>,
    pub bias_beta1: Option<f64>,
    pub mse_beta1: Option<f64>,
    pub bias_beta2: Option<f64>,
    pub mse_beta2: Option<f64>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Aggregates trial records in their stored order.
pub fn summarize(scenario: &Scenario, design: &Design, w: f64, trials: &[TrialRecord]) -> Result<OcSummary> {
    if trials.is_empty() {
        return Err(Error::Precondition("no trials to summarize".into()));
    }
    let m = trials.len();
    let frac = |f: &dyn Fn(&TrialRecord) -> bool| trials.iter().filter(|t| f(t)).count() as f64 / m as f64;
    let truth = &scenario.true_eff_stage2;
    let p0 = scenario.p0;
    let fitted: Vec<&TrialRecord> = trials.iter().filter(|t| t.decision.is_some()).collect();

    let grid_size = design.stage2.grid_size;
    let mut surface = vec![0.0; grid_size];
    for t in &fitted {
        let s = t.true_curve_surface.as_ref().expect("fitted trials carry a surface");
        for (acc, v) in surface.iter_mut().zip(s) {
            *acc += v;
        }
    }
    if !fitted.is_empty() {
        surface.iter_mut().for_each(|v| *v /= fitted.len() as f64);
    }

    let (mut above, mut adaptive) = (0usize, 0usize);
    for t in trials {
        for r in t.stage2.iter().skip(t.n_initial) {
            adaptive += 1;
            above += (efficacy_prob(truth, r.dose) > p0) as usize;
        }
    }

    let means: Vec<EfficacyStageParams> = fitted.iter().filter_map(|t| t.stage2_mean).collect();
    let err1 = || means.iter().map(|e| e.beta1 - truth.beta1);
    let err2 = || means.iter().map(|e| e.beta2 - truth.beta2);
    let optimal: Vec<StdDose> = fitted.iter().filter_map(|t| t.decision.map(|d| d.optimal_dose)).collect();

    Ok(OcSummary {
        m,
        w,
        reject_rate: frac(&|t| t.rejects()),
        p_stop_futility: frac(&|t| t.end == TrialEnd::Stage2(Verdict::StopFutility)),
        p_stop_efficacy: frac(&|t| t.end == TrialEnd::Stage2(Verdict::StopEfficacy)),
        p_stop_safety: frac(&|t| {
            matches!(t.end, TrialEnd::Stage1Safety | TrialEnd::Stage2(Verdict::StopSafety))
        }),
        p_stop_safety_stage1: frac(&|t| t.end == TrialEnd::Stage1Safety),
        p_no_curve: frac(&|t| t.end == TrialEnd::NoCurve),
        n_stage2: fitted.len(),
        mean_n2: trials.iter().map(|t| t.stage2.len() as f64).sum::<f64>() / m as f64,
        mean_exceedance_surface: surface,
        alloc_above_p0: (adaptive > 0).then(|| above as f64 / adaptive as f64),
        p_optimal_above_p0: mean(optimal.iter().map(|d| (efficacy_prob(truth, *d) > p0) as u8 as f64)),
        mean_optimal_dose: mean(optimal.iter().map(|d| d.x)).map(|x| StdDose {
            x,
            y: mean(optimal.iter().map(|d| d.y)).unwrap_or(0.0),
        }),
        mean_exnex_weight: mean(fitted.iter().filter_map(|t| t.exnex_weight)),
        bias_beta1: mean(err1()),
        mse_beta1: mean(err1().map(|e| e * e)),
        bias_beta2: mean(err2()),
        mse_beta2: mean(err2().map(|e| e * e)),
    })
}

/// Simulated trials and their summaries for each value of `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct OcRun {
    pub summaries: Vec<OcSummary>,
    /// `trials[k]` holds the trials run with `summaries[k].w`.
    pub trials: Vec<Vec<TrialRecord>>,
}

fn pool(worker_count: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count.max(1))
        .build()
        .map_err(|e| Error::Precondition(format!("thread pool: {e}")))
}

/// Runs `m` trials per `w` on common random numbers. Results do not depend
/// on `worker_count`.
pub fn run_oc_grid(
    scenario: &Scenario,
    m: usize,
    design: &Design,
    ws: &[f64],
    master_seed: u64,
    worker_count: usize,
) -> Result<OcRun> {
    if m == 0 {
        return Err(Error::config("m", "at least one replication required"));
    }
    if ws.is_empty() {
        return Err(Error::config("w_grid", "at least one value required"));
    }
    for (i, &w) in ws.iter().enumerate() {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::config(format!("w_grid/{i}"), "must lie in [0,1]"));
        }
    }
    scenario.validate()?;
    design.validate()?;
    let per_trial: Vec<Vec<TrialRecord>> = pool(worker_count)?.install(|| {
        (0..m)
            .into_par_iter()
            .map(|i| simulate_trial_grid(scenario, design, ws, trial_seed(master_seed, i)))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut trials: Vec<Vec<TrialRecord>> = ws.iter().map(|_| Vec::with_capacity(m)).collect();
    for row in per_trial {
        for (k, rec) in row.into_iter().enumerate() {
            trials[k].push(rec);
        }
    }
    let summaries = ws
        .iter()
        .zip(&trials)
        .map(|(&w, t)| summarize(scenario, design, w, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(OcRun { summaries, trials })
}

/// Operating characteristics at the design's own `w`.
pub fn run_oc(scenario: &Scenario, m: usize, design: &Design, master_seed: u64, worker_count: usize) -> Result<OcSummary> {
    let mut run = run_oc_grid(scenario, m, design, &[design.hyper.w], master_seed, worker_count)?;
    Ok(run.summaries.remove(0))
}
