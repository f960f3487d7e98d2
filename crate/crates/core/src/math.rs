//! Model mathematics shared by every stage: the logistic link, dose
//! standardization, the toxicity and efficacy surfaces, and the geometry of
//! the MTD curve.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Logistic CDF without input checks, for inner loops.
#[inline]
pub fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `F(u) = 1 / (1 + e^-u)`.
pub fn logistic_cdf(u: f64) -> Result<f64> {
    if !u.is_finite() {
        return Err(Error::Domain(format!("logistic_cdf of non-finite {u}")));
    }
    Ok(logistic(u))
}

/// Inverse of the logistic CDF.
#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `ln F(u)`, stable for large |u|.
#[inline]
pub fn ln_logistic(u: f64) -> f64 {
    -softplus(-u)
}

/// `ln(1 + e^u)`.
#[inline]
pub fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

/// A dose combination on the standardized unit square.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct StdDose {
    pub x: f64,
    pub y: f64,
}

impl StdDose {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        let d = StdDose { x, y };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.x) || !(0.0..=1.0).contains(&self.y) {
            return Err(Error::Domain(format!(
                "standardized dose ({}, {}) outside [0,1]^2",
                self.x, self.y
            )));
        }
        Ok(())
    }

    pub const ORIGIN: StdDose = StdDose { x: 0.0, y: 0.0 };
}

/// Raw dose range of one agent, in mg/m².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct AgentRange {
    pub name: String,
    pub dose_min: f64,
    pub dose_max: f64,
}

impl AgentRange {
    pub fn new(name: impl Into<String>, dose_min: f64, dose_max: f64) -> Result<Self> {
        let r = AgentRange {
            name: name.into(),
            dose_min,
            dose_max,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dose_min.is_finite() && self.dose_max.is_finite()) || self.dose_min >= self.dose_max {
            return Err(Error::Domain(format!(
                "agent {}: dose_min {} must be below dose_max {}",
                self.name, self.dose_min, self.dose_max
            )));
        }
        Ok(())
    }

    /// Maps a raw dose onto [0,1].
    pub fn standardize(&self, dose: f64) -> Result<f64> {
        if !(self.dose_min..=self.dose_max).contains(&dose) {
            return Err(Error::Domain(format!(
                "dose {dose} outside [{}, {}] for {}",
                self.dose_min, self.dose_max, self.name
            )));
        }
        Ok((dose - self.dose_min) / (self.dose_max - self.dose_min))
    }

    pub fn destandardize(&self, x: f64) -> f64 {
        self.dose_min + x * (self.dose_max - self.dose_min)
    }
}

/// Reparameterized dose-toxicity model: DLT probabilities at the three
/// corners (0,0), (1,0), (0,1), a nonnegative interaction and the target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ToxicityParams {
    pub rho00: f64,
    pub rho10: f64,
    pub rho01: f64,
    pub alpha3: f64,
    pub theta: f64,
}

/// Coefficients of the logistic toxicity predictor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToxicityCoefficients {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl ToxicityParams {
    pub fn validate(&self) -> Result<()> {
        let open = |v: f64| v > 0.0 && v < 1.0;
        if !(open(self.rho00) && open(self.rho10) && open(self.rho01)) {
            return Err(Error::Domain(format!(
                "corner probabilities must lie in (0,1): {:?}",
                (self.rho00, self.rho10, self.rho01)
            )));
        }
        if !open(self.theta) {
            return Err(Error::Domain(format!("theta {} not in (0,1)", self.theta)));
        }
        if !(self.alpha3 >= 0.0 && self.alpha3.is_finite()) {
            return Err(Error::Domain(format!("alpha3 {} must be >= 0", self.alpha3)));
        }
        if self.rho10 < self.rho00 || self.rho01 < self.rho00 {
            return Err(Error::Domain(
                "toxicity must not decrease along either agent (rho10, rho01 >= rho00)".into(),
            ));
        }
        Ok(())
    }

    pub fn coefficients(&self) -> ToxicityCoefficients {
        let a0 = logit(self.rho00);
        ToxicityCoefficients {
            a0,
            a1: logit(self.rho10) - a0,
            a2: logit(self.rho01) - a0,
            a3: self.alpha3,
        }
    }

    pub fn predictor(&self, d: StdDose) -> f64 {
        let c = self.coefficients();
        c.a0 + c.a1 * d.x + c.a2 * d.y + c.a3 * d.x * d.y
    }
}

/// DLT probability at a standardized dose.
pub fn tox_prob(p: &ToxicityParams, d: StdDose) -> f64 {
    logistic(p.predictor(d))
}

/// The MTD curve's y at a given x, or `None` when the root leaves [0,1] or
/// the curve is undefined there.
pub fn mtd_y_given_x(p: &ToxicityParams, x: f64) -> Option<f64> {
    let c = p.coefficients();
    let num = logit(p.theta) - c.a0 - c.a1 * x;
    let den = c.a2 + c.a3 * x;
    root_in_unit(num, den)
}

/// The MTD curve's x at a given y.
pub fn mtd_x_given_y(p: &ToxicityParams, y: f64) -> Option<f64> {
    let c = p.coefficients();
    let num = logit(p.theta) - c.a0 - c.a2 * y;
    let den = c.a1 + c.a3 * y;
    root_in_unit(num, den)
}

fn root_in_unit(num: f64, den: f64) -> Option<f64> {
    if den == 0.0 {
        return None;
    }
    let r = num / den;
    // admit the rounding slop of the closed form at the square's edges
    const SLOP: f64 = 1e-12;
    if (-SLOP..=1.0 + SLOP).contains(&r) {
        Some(r.clamp(0.0, 1.0))
    } else {
        None
    }
}

/// Per-stage dose-efficacy parameters. Main effects enter through `exp`, so
/// the surface is nondecreasing in both agents whenever `beta3 >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct EfficacyStageParams {
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
}

impl EfficacyStageParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta0.is_finite() && self.beta1.is_finite() && self.beta2.is_finite()) {
            return Err(Error::Domain("efficacy parameters must be finite".into()));
        }
        if !(self.beta3 >= 0.0 && self.beta3.is_finite()) {
            return Err(Error::Domain(format!("beta3 {} must be >= 0", self.beta3)));
        }
        Ok(())
    }

    #[inline]
    pub fn predictor(&self, d: StdDose) -> f64 {
        self.beta0 + self.beta1.exp() * d.x + self.beta2.exp() * d.y + self.beta3 * d.x * d.y
    }
}

pub fn efficacy_prob(e: &EfficacyStageParams, d: StdDose) -> f64 {
    logistic(e.predictor(d))
}

/// The MTD locus of a toxicity model, stored exactly together with the
/// interval of x over which its y lies inside [0,1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct MtdCurve {
    pub tox: ToxicityParams,
    pub x_lo: f64,
    pub x_hi: f64,
}

impl MtdCurve {
    pub fn new(tox: ToxicityParams) -> Result<Self> {
        tox.validate()?;
        let (x_lo, x_hi) = feasible_interval(&tox)?;
        Ok(MtdCurve { tox, x_lo, x_hi })
    }

    /// y on the curve for a feasible x.
    pub fn y_at(&self, x: f64) -> f64 {
        let c = self.tox.coefficients();
        let num = logit(self.tox.theta) - c.a0 - c.a1 * x;
        let den = c.a2 + c.a3 * x;
        (num / den).clamp(0.0, 1.0)
    }

    pub fn point_at(&self, x: f64) -> StdDose {
        StdDose { x, y: self.y_at(x) }
    }

    pub fn width(&self) -> f64 {
        self.x_hi - self.x_lo
    }

    /// `n` points with equal x-spacing over the feasible interval.
    pub fn grid(&self, n: usize) -> CurveGrid {
        let xs = equal_spacing(self.x_lo, self.x_hi, n);
        CurveGrid {
            points: xs.into_iter().map(|x| self.point_at(x)).collect(),
        }
    }
}

/// `n` equally spaced values over `[lo, hi]`; a single value sits at the midpoint.
pub fn equal_spacing(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n)
            .map(|k| {
                if k == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * k as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// Solves `0 <= y(x) <= 1` for x in [0,1]. With `c = F^-1(theta) - a0`,
/// `y(x) = (c - a1 x) / (a2 + a3 x)` and the two constraints are linear in x
/// wherever the denominator is positive.
fn feasible_interval(tox: &ToxicityParams) -> Result<(f64, f64)> {
    let ToxicityCoefficients { a0, a1, a2, a3 } = tox.coefficients();
    let c = logit(tox.theta) - a0;
    if c < 0.0 {
        return Err(Error::EmptyCurve(format!(
            "DLT probability at (0,0) is {:.4}, above the target {}",
            tox.rho00, tox.theta
        )));
    }
    if a2 == 0.0 && (a3 == 0.0 || c == 0.0) {
        return Err(Error::EmptyCurve(
            "toxicity does not depend on agent B; the MTD locus is not a function of x".into(),
        ));
    }

    let mut lo: f64 = 0.0;
    let mut hi: f64 = 1.0;
    // y(x) >= 0  <=>  a1 x <= c
    if a1 > 0.0 {
        hi = hi.min(c / a1);
    }
    // y(x) <= 1  <=>  (a1 + a3) x >= c - a2
    let slope = a1 + a3;
    if slope > 0.0 {
        lo = lo.max((c - a2) / slope);
    } else if c - a2 > 0.0 {
        lo = f64::INFINITY;
    }
    if lo > hi {
        return Err(Error::EmptyCurve(format!(
            "no dose combination in the unit square reaches the target (x interval [{lo:.4}, {hi:.4}])"
        )));
    }
    Ok((lo, hi))
}

/// Discretization of an MTD curve used for quadrature, argmax and sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct CurveGrid {
    pub points: Vec<StdDose>,
}

impl CurveGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
