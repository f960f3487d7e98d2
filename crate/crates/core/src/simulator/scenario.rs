//! True dose-toxicity and dose-efficacy scenarios, built from geometric
//! targets rather than tabulated parameters.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::Stage;
use crate::math::{efficacy_prob, logit, tox_prob, EfficacyStageParams, MtdCurve, StdDose, ToxicityParams};
use crate::outcome::Outcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Agreement {
    CompleteAgreement,
    PartialAgreement,
    CompleteDisagreement,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
pub enum Hypothesis {
    H0,
    H1,
}

/// Diagnostics of a constructed scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ConstructionReport {
    /// Largest |DLT probability - theta| over the requested anchors.
    pub anchor_residual: f64,
    pub stage2: ProfileReport,
    pub stage1: ProfileReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ProfileReport {
    /// On-curve maximum of the efficacy probability.
    pub max_on_curve: f64,
    /// Dose attaining it.
    pub argmax: StdDose,
    /// Root-mean-square error of the logit fit to the requested profile; 0
    /// for explicit parameters.
    pub fit_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub label: Agreement,
    pub hypothesis: Hypothesis,
    pub p0: f64,
    pub true_tox: ToxicityParams,
    pub true_eff_stage1: EfficacyStageParams,
    pub true_eff_stage2: EfficacyStageParams,
    #[serde(default)]
    pub construction: Option<ConstructionReport>,
}

/// Grid resolution of the scenario checks.
const CHECK_GRID: usize = 1001;

impl Scenario {
    pub fn true_curve(&self) -> Result<MtdCurve> {
        MtdCurve::new(self.true_tox)
    }

    pub fn efficacy(&self, stage: Stage) -> &EfficacyStageParams {
        match stage {
            Stage::One => &self.true_eff_stage1,
            Stage::Two => &self.true_eff_stage2,
        }
    }

    /// Maximum of the stage-2 efficacy probability along the true curve.
    pub fn stage2_max_on_curve(&self) -> Result<f64> {
        Ok(profile_report(&self.true_eff_stage2, &self.true_curve()?, 0.0).max_on_curve)
    }

    pub fn validate(&self) -> Result<()> {
        self.true_tox.validate()?;
        self.true_eff_stage1.validate()?;
        self.true_eff_stage2.validate()?;
        if !(self.p0 > 0.0 && self.p0 < 1.0) {
            return Err(Error::config("scenario/p0", "must lie in (0,1)"));
        }
        if self.label == Agreement::CompleteAgreement && self.true_eff_stage1 != self.true_eff_stage2 {
            return Err(Error::config(
                "scenario/true_eff_stage1",
                "complete agreement requires identical stage profiles",
            ));
        }
        let max = self.stage2_max_on_curve()?;
        match self.hypothesis {
            Hypothesis::H0 if max > self.p0 + 1e-12 => Err(Error::Construction {
                message: format!("null scenario peaks at {max:.4} along the curve, above p0 = {}", self.p0),
                residual: max - self.p0,
            }),
            Hypothesis::H1 if max <= self.p0 => Err(Error::Construction {
                message: format!("alternative scenario peaks at {max:.4}, not above p0 = {}", self.p0),
                residual: self.p0 - max,
            }),
            _ => Ok(()),
        }
    }
}

/// Draws a patient's outcomes from the scenario truth. Two uniforms are
/// consumed, DLT first.
pub fn generate_outcome(scenario: &Scenario, dose: StdDose, stage: Stage, rng: &mut impl Rng) -> Outcome {
    let uz: f64 = rng.random();
    let ue: f64 = rng.random();
    Outcome {
        z: uz < tox_prob(&scenario.true_tox, dose),
        e: ue < efficacy_prob(scenario.efficacy(stage), dose),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ToxicitySpec {
    pub theta: f64,
    /// DLT probability at the lowest combination.
    pub rho00: f64,
    /// Combinations the MTD curve should pass through.
    pub anchors: Vec<StdDose>,
    /// Largest admissible |DLT probability - theta| at an anchor.
    #[serde(default = "default_anchor_tolerance")]
    pub tolerance: f64,
}

fn default_anchor_tolerance() -> f64 {
    0.01
}

/// An efficacy profile along the curve with its maximum at `peak_x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PeakSpec {
    /// Agent-A coordinate of the peak on the curve.
    pub peak_x: f64,
    pub level: f64,
    /// Curvature of the target logit profile, per squared curve width.
    #[serde(default = "default_sharpness")]
    pub sharpness: f64,
    /// Lower bound on `exp(beta1)` and `exp(beta2)`.
    #[serde(default = "default_min_slope")]
    pub min_slope: f64,
}

fn default_sharpness() -> f64 {
    2.0
}

fn default_min_slope() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum EfficacySpec {
    Peak(PeakSpec),
    Params(EfficacyStageParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Stage1Spec {
    /// Identical to stage 2.
    Same,
    Peak(PeakSpec),
    Params(EfficacyStageParams),
}

/// Construction inputs of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub label: Agreement,
    pub hypothesis: Hypothesis,
    pub p0: f64,
    /// Required peak minus `p0` under H1.
    #[serde(default)]
    pub effect_size: Option<f64>,
    pub toxicity: ToxicitySpec,
    pub stage2: EfficacySpec,
    pub stage1: Stage1Spec,
}

/// Minimizes `|A v - b|` with `v[k] >= 0` for every `k` in `nonneg` by
/// enumerating the active sets. Returns the solution and residual sum of squares.
fn bounded_least_squares(a: &DMatrix<f64>, b: &DVector<f64>, nonneg: &[usize]) -> Option<(DVector<f64>, f64)> {
    let p = a.ncols();
    let mut best: Option<(DVector<f64>, f64)> = None;
    for mask in 0u32..(1 << nonneg.len()) {
        let fixed: Vec<usize> = nonneg
            .iter()
            .enumerate()
            .filter(|(k, _)| mask & (1 << k) != 0)
            .map(|(_, &c)| c)
            .collect();
        let free: Vec<usize> = (0..p).filter(|c| !fixed.contains(c)).collect();
        let mut v = DVector::zeros(p);
        if !free.is_empty() {
            let sub = a.select_columns(&free);
            let Ok(sol) = sub.clone().svd(true, true).solve(b, 1e-12) else {
                continue;
            };
            for (i, &c) in free.iter().enumerate() {
                v[c] = sol[i];
            }
        }
        if nonneg.iter().any(|&c| v[c] < 0.0) {
            continue;
        }
        let ss = (a * &v - b).norm_squared();
        if best.as_ref().is_none_or(|(_, s)| ss < *s - 1e-15) {
            best = Some((v, ss));
        }
    }
    best
}

/// Toxicity parameters whose MTD curve passes through the anchors, by
/// nonnegative least squares on the logit scale with `rho00` fixed.
pub fn fit_toxicity(spec: &ToxicitySpec) -> Result<(ToxicityParams, f64)> {
    if spec.anchors.is_empty() {
        return Err(Error::config("toxicity/anchors", "at least one anchor required"));
    }
    if !(spec.rho00 > 0.0 && spec.rho00 < spec.theta && spec.theta < 1.0) {
        return Err(Error::config("toxicity/rho00", "must lie in (0, theta)"));
    }
    for (i, d) in spec.anchors.iter().enumerate() {
        d.validate().map_err(|e| Error::config(format!("toxicity/anchors/{i}"), e.to_string()))?;
    }
    let n = spec.anchors.len();
    let a = DMatrix::from_fn(n, 3, |i, j| {
        let d = spec.anchors[i];
        [d.x, d.y, d.x * d.y][j]
    });
    let rhs = DVector::from_element(n, logit(spec.theta) - logit(spec.rho00));
    let (v, _) = bounded_least_squares(&a, &rhs, &[0, 1, 2]).ok_or_else(|| Error::Construction {
        message: "no nonnegative solution for the toxicity anchors".into(),
        residual: f64::INFINITY,
    })?;
    let a0 = logit(spec.rho00);
    let inv = |u: f64| 1.0 / (1.0 + (-u).exp());
    let tox = ToxicityParams {
        rho00: spec.rho00,
        rho10: inv(a0 + v[0]),
        rho01: inv(a0 + v[1]),
        alpha3: v[2],
        theta: spec.theta,
    };
    let residual = spec
        .anchors
        .iter()
        .map(|d| (tox_prob(&tox, *d) - spec.theta).abs())
        .fold(0.0, f64::max);
    if residual > spec.tolerance || !(tox.rho10 < 1.0 && tox.rho01 < 1.0) {
        return Err(Error::Construction {
            message: format!(
                "anchors are not reachable by one monotone toxicity surface (max |p - theta| = {residual:.4})"
            ),
            residual,
        });
    }
    MtdCurve::new(tox).map_err(|e| Error::Construction {
        message: e.to_string(),
        residual,
    })?;
    Ok((tox, residual))
}

fn profile_report(e: &EfficacyStageParams, curve: &MtdCurve, fit_rmse: f64) -> ProfileReport {
    let grid = curve.grid(CHECK_GRID);
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (k, &d) in grid.points.iter().enumerate() {
        let p = efficacy_prob(e, d);
        if p > best.0 {
            best = (p, k);
        }
    }
    // golden-section refinement between the neighbours of the best node
    let k = best.1;
    let (mut a, mut b) = (grid.points[k.saturating_sub(1)].x, grid.points[(k + 1).min(grid.points.len() - 1)].x);
    let f = |x: f64| efficacy_prob(e, curve.point_at(x));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let (c, d) = (b - g * (b - a), a + g * (b - a));
        if f(c) >= f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let xr = 0.5 * (a + b);
    let best = if f(xr) > best.0 {
        (f(xr), curve.point_at(xr))
    } else {
        (best.0, grid.points[k])
    };
    ProfileReport {
        max_on_curve: best.0,
        argmax: best.1,
        fit_rmse,
    }
}

/// Efficacy parameters whose on-curve profile follows
/// `logit(level) - sharpness * ((x - peak_x) / width)^2` in the least-squares
/// sense, with the intercept then shifted so that the on-curve maximum is
/// exactly `level`.
pub fn fit_efficacy_peak(spec: &PeakSpec, curve: &MtdCurve) -> Result<(EfficacyStageParams, ProfileReport)> {
    if !(spec.level > 0.0 && spec.level < 1.0) {
        return Err(Error::config("peak/level", "must lie in (0,1)"));
    }
    if !(spec.min_slope > 0.0) {
        return Err(Error::config("peak/min_slope", "must be positive"));
    }
    let margin = 1e-9;
    if spec.peak_x < curve.x_lo - margin || spec.peak_x > curve.x_hi + margin {
        return Err(Error::Construction {
            message: format!(
                "peak x {} outside the curve's feasible interval [{:.4}, {:.4}]",
                spec.peak_x, curve.x_lo, curve.x_hi
            ),
            residual: (spec.peak_x - spec.peak_x.clamp(curve.x_lo, curve.x_hi)).abs(),
        });
    }
    let pts = curve.grid(201).points;
    let width = curve.width().max(1e-9);
    let top = logit(spec.level);
    let target: Vec<f64> = pts
        .iter()
        .map(|d| top - spec.sharpness * ((d.x - spec.peak_x) / width).powi(2))
        .collect();
    let n = pts.len();
    let a = DMatrix::from_fn(n, 4, |i, j| {
        let d = pts[i];
        [1.0, d.x, d.y, d.x * d.y][j]
    });
    let m = spec.min_slope;
    let rhs = DVector::from_fn(n, |i, _| target[i] - m * pts[i].x - m * pts[i].y);
    let (v, ss) = bounded_least_squares(&a, &rhs, &[1, 2, 3]).ok_or_else(|| Error::Construction {
        message: "efficacy profile fit failed".into(),
        residual: f64::INFINITY,
    })?;
    let mut e = EfficacyStageParams {
        beta0: v[0],
        beta1: (v[1] + m).ln(),
        beta2: (v[2] + m).ln(),
        beta3: v[3],
    };
    let pre = profile_report(&e, curve, 0.0);
    e.beta0 += top - logit(pre.max_on_curve);
    Ok((e, profile_report(&e, curve, (ss / n as f64).sqrt())))
}

fn efficacy_from(spec: &EfficacySpec, curve: &MtdCurve) -> Result<(EfficacyStageParams, ProfileReport)> {
    match spec {
        EfficacySpec::Peak(p) => fit_efficacy_peak(p, curve),
        EfficacySpec::Params(e) => {
            e.validate()?;
            Ok((*e, profile_report(e, curve, 0.0)))
        }
    }
}

/// Builds and validates a scenario from its construction inputs.
pub fn build_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    let (tox, anchor_residual) = fit_toxicity(&spec.toxicity)?;
    let curve = MtdCurve::new(tox)?;
    if let (Hypothesis::H1, Some(es), EfficacySpec::Peak(p)) = (spec.hypothesis, spec.effect_size, &spec.stage2) {
        if (p.level - (spec.p0 + es)).abs() > 1e-12 {
            return Err(Error::config(
                "stage2/peak/level",
                format!("must equal p0 + effect_size = {}", spec.p0 + es),
            ));
        }
    }
    if spec.hypothesis == Hypothesis::H0 {
        if let EfficacySpec::Peak(p) = &spec.stage2 {
            if p.level > spec.p0 {
                return Err(Error::config("stage2/peak/level", "null scenarios peak at or below p0"));
            }
        }
    }
    let (eff2, rep2) = efficacy_from(&spec.stage2, &curve)?;
    let (eff1, rep1) = match &spec.stage1 {
        Stage1Spec::Same => (eff2, rep2),
        Stage1Spec::Peak(p) => fit_efficacy_peak(p, &curve)?,
        Stage1Spec::Params(e) => efficacy_from(&EfficacySpec::Params(*e), &curve)?,
    };
    if spec.label == Agreement::CompleteAgreement && spec.stage1 != Stage1Spec::Same {
        return Err(Error::config("stage1", "complete agreement uses the stage-2 profile"));
    }
    let scenario = Scenario {
        name: spec.name.clone(),
        label: spec.label,
        hypothesis: spec.hypothesis,
        p0: spec.p0,
        true_tox: tox,
        true_eff_stage1: eff1,
        true_eff_stage2: eff2,
        construction: Some(ConstructionReport {
            anchor_residual,
            stage2: rep2,
            stage1: rep1,
        }),
    };
    scenario.validate()?;
    Ok(scenario)
}
