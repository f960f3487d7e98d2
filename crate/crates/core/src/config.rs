//! The design document: every tunable of a trial in one schema-versioned
//! JSON value.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{ExnexHyper, McmcConfig, ToxicityPrior};
use crate::math::{AgentRange, StdDose};
use crate::stage1::Stage1Config;
use crate::stage2::Stage2Config;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Agents {
    /// Agent on the x axis.
    pub a: AgentRange,
    /// Agent on the y axis.
    pub b: AgentRange,
}

impl Agents {
    pub fn ciscab() -> Self {
        Agents {
            a: AgentRange {
                name: "cabazitaxel".into(),
                dose_min: 10.0,
                dose_max: 25.0,
            },
            b: AgentRange {
                name: "cisplatin".into(),
                dose_min: 50.0,
                dose_max: 100.0,
            },
        }
    }

    /// Raw doses in mg/m² of a standardized combination.
    pub fn raw(&self, d: StdDose) -> RawDose {
        RawDose {
            a: self.a.destandardize(d.x),
            b: self.b.destandardize(d.y),
        }
    }

    pub fn standardize(&self, raw: RawDose) -> Result<StdDose> {
        Ok(StdDose {
            x: self.a.standardize(raw.a)?,
            y: self.b.standardize(raw.b)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RawDose {
    pub a: f64,
    pub b: f64,
}

/// Complete trial design. Serialized as the configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Design {
    pub schema_version: u32,
    pub agents: Agents,
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
    pub tox_prior: ToxicityPrior,
    pub hyper: ExnexHyper,
    pub mcmc: McmcConfig,
}

pub type ConfigDocument = Design;

impl Design {
    /// The cisplatin/cabazitaxel design with default MCMC settings.
    pub fn ciscab() -> Self {
        Design {
            schema_version: SCHEMA_VERSION,
            agents: Agents::ciscab(),
            stage1: Stage1Config::ciscab(),
            stage2: Stage2Config::default(),
            tox_prior: ToxicityPrior::ciscab(),
            hyper: ExnexHyper::default(),
            mcmc: McmcConfig::default(),
        }
    }

    /// The same design at reduced MCMC settings for Monte-Carlo runs.
    pub fn ciscab_desk() -> Self {
        Design {
            mcmc: McmcConfig::desk(),
            ..Self::ciscab()
        }
    }

    pub fn with_w(&self, w: f64) -> Self {
        Design {
            hyper: self.hyper.with_w(w),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        for (path, agent) in [("agents/a", &self.agents.a), ("agents/b", &self.agents.b)] {
            agent.validate().map_err(|e| Error::config(path, e.to_string()))?;
        }
        self.stage1.validate()?;
        self.stage2.validate()?;
        self.tox_prior.validate()?;
        self.hyper.validate()?;
        self.mcmc.validate()?;
        if self.stage1.theta != self.stage2.theta {
            return Err(Error::config("stage2/theta", "must equal stage1/theta"));
        }
        Ok(())
    }

    /// Parses and validates a configuration document. Type errors carry
    /// the path of the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let design: Design = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string().replace('.', "/");
            Error::config(path, e.into_inner().to_string())
        })?;
        design.validate()?;
        Ok(design)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("design serializes")
    }
}

impl Default for Design {
    fn default() -> Self {
        Self::ciscab()
    }
}

/// JSON Schema of the configuration document.
pub fn design_schema() -> serde_json::Value {
    serde_json::to_value(schemars::schema_for!(Design)).expect("schema serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ciscab_round_trip() {
        let d = Design::ciscab();
        let text = d.to_json_pretty();
        assert_eq!(Design::from_json(&text).unwrap(), d);
    }

    #[test]
    fn ciscab_start_is_15_75() {
        let d = Design::ciscab();
        let raw = d.agents.raw(d.stage1.start_dose);
        assert!((raw.a - 15.0).abs() < 1e-12 && (raw.b - 75.0).abs() < 1e-12);
    }

    #[test]
    fn threshold_ordering_is_enforced() {
        let mut d = Design::ciscab();
        d.stage2.delta_0 = 0.45;
        let err = Design::from_json(&d.to_json_pretty()).unwrap_err();
        match err {
            Error::Config { path, .. } => assert_eq!(path, "stage2/delta_0"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn type_errors_report_field_path() {
        let mut v = serde_json::to_value(Design::ciscab()).unwrap();
        v["stage2"]["p0"] = serde_json::json!("high");
        let err = Design::from_json(&v.to_string()).unwrap_err();
        match err {
            Error::Config { path, .. } => assert_eq!(path, "stage2/p0"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn schema_names_top_level_fields() {
        let s = design_schema();
        let props = s["properties"].as_object().unwrap();
        for k in ["schema_version", "agents", "stage1", "stage2", "tox_prior", "hyper", "mcmc"] {
            assert!(props.contains_key(k), "{k}");
        }
    }
}
