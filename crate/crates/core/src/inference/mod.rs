//! Posterior sampling for the stage-I toxicity model and the two-stage
//! exchangeable/nonexchangeable efficacy model.

mod diagnostics;
mod draws;
mod efficacy;
pub mod sampler;
mod toxicity;

pub use diagnostics::{mcmc_diagnostics, DiagnosticsReport, ParameterDiagnostics};
pub use draws::PosteriorDraws;
pub(crate) use efficacy::stage_params_columns;
pub use efficacy::{
    posterior_exnex_weight, sample_efficacy_posterior, stage_params_mean, EFFICACY_NAMES,
};
pub use toxicity::{sample_toxicity_posterior, toxicity_params_of_draw, TOXICITY_NAMES};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::StdDose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(try_from = "u8", into = "u8")]
#[schemars(with = "u8")]
pub enum Stage {
    One,
    Two,
}

impl From<Stage> for u8 {
    fn from(s: Stage) -> u8 {
        s.number()
    }
}

impl TryFrom<u8> for Stage {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Stage::One),
            2 => Ok(Stage::Two),
            _ => Err(format!("stage must be 1 or 2, got {v}")),
        }
    }
}

impl Stage {
    pub fn number(self) -> u8 {
        match self {
            Stage::One => 1,
            Stage::Two => 2,
        }
    }
}

/// One enrolled patient. Outcomes are `None` while pending.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct OutcomeRecord {
    pub patient: usize,
    pub stage: Stage,
    pub dose: StdDose,
    pub z: Option<bool>,
    pub e: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct McmcConfig {
    pub chains: usize,
    pub burn_in: usize,
    pub kept_per_chain: usize,
    #[serde(default = "one")]
    pub thin: usize,
}

fn one() -> usize {
    1
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            chains: 4,
            burn_in: 2000,
            kept_per_chain: 5000,
            thin: 1,
        }
    }
}

impl McmcConfig {
    /// Reduced settings for Monte-Carlo operating characteristics.
    pub fn desk() -> Self {
        McmcConfig {
            chains: 2,
            burn_in: 500,
            kept_per_chain: 1000,
            thin: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::config("mcmc/chains", "must be at least 1"));
        }
        if self.kept_per_chain == 0 {
            return Err(Error::config("mcmc/kept_per_chain", "must be at least 1"));
        }
        if self.thin == 0 {
            return Err(Error::config("mcmc/thin", "must be at least 1"));
        }
        Ok(())
    }
}

/// Priors of the toxicity model. Beta pairs are (a, b); the gamma pair is
/// (shape, rate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ToxicityPrior {
    pub rho01_beta: (f64, f64),
    pub rho10_beta: (f64, f64),
    pub rho00_ratio_beta: (f64, f64),
    pub alpha3_gamma: (f64, f64),
}

/// Gamma prior on the toxicity interaction, read as (shape, rate).
pub const ALPHA3_GAMMA_SHAPE_RATE: (f64, f64) = (0.8, 0.0384);

impl ToxicityPrior {
    /// Informative priors of the cisplatin/cabazitaxel trial.
    pub fn ciscab() -> Self {
        ToxicityPrior {
            rho01_beta: (1.4, 5.6),
            rho10_beta: (1.4, 5.6),
            rho00_ratio_beta: (0.8, 7.2),
            alpha3_gamma: ALPHA3_GAMMA_SHAPE_RATE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pairs = [
            ("tox_prior/rho01_beta", self.rho01_beta),
            ("tox_prior/rho10_beta", self.rho10_beta),
            ("tox_prior/rho00_ratio_beta", self.rho00_ratio_beta),
            ("tox_prior/alpha3_gamma", self.alpha3_gamma),
        ];
        for (path, (a, b)) in pairs {
            if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
                return Err(Error::config(path, "parameters must be positive"));
            }
        }
        Ok(())
    }
}

impl Default for ToxicityPrior {
    fn default() -> Self {
        Self::ciscab()
    }
}

/// Hyperparameters of the robust two-stage efficacy model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ExnexHyper {
    /// Prior probability that the stage-II main effects are exchangeable
    /// with stage I.
    pub w: f64,
    /// Means of the normal priors on the two components of `mu`.
    pub v: (f64, f64),
    /// Standard deviations of those priors.
    pub s: (f64, f64),
    /// Half-normal scales of `tau1`, `tau2`.
    pub z: (f64, f64),
    /// Mean of the nonexchangeable component.
    pub m0: (f64, f64),
    /// Covariance of the nonexchangeable component, row-major.
    pub r0: [[f64; 2]; 2],
    /// Normal prior (mean, sd) on each stage intercept.
    pub intercept_prior: (f64, f64),
    /// Gamma prior (shape, rate) on each stage interaction.
    pub interaction_gamma: (f64, f64),
}

impl Default for ExnexHyper {
    fn default() -> Self {
        let s = 3.16;
        ExnexHyper {
            w: 0.5,
            v: (0.0, 0.0),
            s: (s, s),
            z: (0.5, 0.5),
            m0: (0.0, 0.0),
            r0: [[s * s, 0.0], [0.0, s * s]],
            intercept_prior: (-1.8, s),
            interaction_gamma: (0.1, 0.1),
        }
    }
}

impl ExnexHyper {
    pub fn with_w(&self, w: f64) -> Self {
        ExnexHyper { w, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.w) {
            return Err(Error::config("hyper/w", "must lie in [0,1]"));
        }
        let positive = [
            ("hyper/s/0", self.s.0),
            ("hyper/s/1", self.s.1),
            ("hyper/z/0", self.z.0),
            ("hyper/z/1", self.z.1),
            ("hyper/intercept_prior/1", self.intercept_prior.1),
            ("hyper/interaction_gamma/0", self.interaction_gamma.0),
            ("hyper/interaction_gamma/1", self.interaction_gamma.1),
        ];
        for (path, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(path, "must be positive"));
            }
        }
        let r = self.r0;
        if r[0][1] != r[1][0] {
            return Err(Error::config("hyper/r0", "must be symmetric"));
        }
        if !(r[0][0] > 0.0 && r[0][0] * r[1][1] - r[0][1] * r[1][0] > 0.0) {
            return Err(Error::config("hyper/r0", "must be positive definite"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hyper_validation() {
        assert!(ExnexHyper::default().validate().is_ok());
        assert!(ExnexHyper::default().with_w(1.5).validate().is_err());
        let mut h = ExnexHyper::default();
        h.r0 = [[1.0, 2.0], [2.0, 1.0]];
        assert!(h.validate().is_err());
        h.r0 = [[1.0, 0.1], [0.2, 1.0]];
        assert!(h.validate().is_err());
    }

    #[test]
    fn mcmc_config_validation() {
        assert!(McmcConfig::default().validate().is_ok());
        let empty = McmcConfig {
            kept_per_chain: 0,
            ..McmcConfig::default()
        };
        assert!(matches!(empty.validate(), Err(Error::Config { .. })));
    }

    #[test]
    fn stage_serializes_as_number() {
        assert_eq!(serde_json::to_string(&Stage::Two).unwrap(), "2");
        assert!(serde_json::from_str::<Stage>("3").is_err());
    }
}
