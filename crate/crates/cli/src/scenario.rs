//! JSON scenario files.

use relaynet_core::{CostFamily, CostModel, Relay, Scenario, SourceModel, TypeDistribution};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub source: SourceSpec,
    pub relays: Vec<RelaySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceMode {
    Inelastic,
    Elastic,
}

/// Only `θ_s·log(1 + r)` is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Utility {
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub mode: SourceMode,
    pub r_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility: Option<Utility>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaySpec {
    pub cost: CostSpec,
    pub dist: DistSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    PowerExp,
    ExpOverTheta,
    QuadraticOverTheta,
    Mm1Delay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    pub family: FamilyName,
    #[serde(default)]
    pub params: CostParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostParams {
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams { scale: 1.0 }
    }
}

fn unit_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistSpec {
    Uniform(UniformParams),
    PowerCdf(PowerCdfParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformParams {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerCdfParams {
    pub a: f64,
    pub b: f64,
    pub gamma: f64,
}

impl ScenarioFile {
    /// Parses JSON, naming the offending key path on failure.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut de = serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Input(format!("{path}: {}", e.into_inner()))
        })
    }

    pub fn to_scenario(&self) -> Result<Scenario, CliError> {
        let src = &self.source;
        let source = match src.mode {
            SourceMode::Inelastic => {
                if src.theta_s.is_some() || src.utility.is_some() {
                    return Err(CliError::Input(
                        "source.theta_s: only elastic sources take a utility".into(),
                    ));
                }
                SourceModel::Inelastic { rate: src.r_s }
            }
            SourceMode::Elastic => match src.theta_s {
                Some(theta_s) => SourceModel::Elastic { rate: src.r_s, theta_s },
                None => return Err(CliError::Input("source.theta_s: required for an elastic source".into())),
            },
        };
        let relays = self
            .relays
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let family = match r.cost.family {
                    FamilyName::PowerExp => CostFamily::PowerExp,
                    FamilyName::ExpOverTheta => CostFamily::ExpOverTheta,
                    FamilyName::QuadraticOverTheta => CostFamily::QuadraticOverTheta,
                    FamilyName::Mm1Delay => CostFamily::Mm1Delay,
                };
                let cost = CostModel::with_scale(family, r.cost.params.scale)
                    .map_err(|e| CliError::Input(format!("relays[{i}].cost.params: {e}")))?;
                let dist = match &r.dist {
                    DistSpec::Uniform(p) => TypeDistribution::uniform(p.a, p.b),
                    DistSpec::PowerCdf(p) => TypeDistribution::power_cdf(p.a, p.b, p.gamma),
                }
                .map_err(|e| CliError::Input(format!("relays[{i}].dist.params: {e}")))?;
                Ok(Relay::new(cost, dist))
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        Scenario::new(source, relays).map_err(CliError::Core)
    }

    pub fn from_scenario(scenario: &Scenario, seed: Option<u64>) -> Self {
        let source = match *scenario.source() {
            SourceModel::Inelastic { rate } => SourceSpec {
                mode: SourceMode::Inelastic,
                r_s: rate,
                theta_s: None,
                utility: None,
            },
            SourceModel::Elastic { rate, theta_s } => SourceSpec {
                mode: SourceMode::Elastic,
                r_s: rate,
                theta_s: Some(theta_s),
                utility: Some(Utility::Log),
            },
        };
        let relays = scenario
            .relays()
            .iter()
            .map(|r| RelaySpec {
                cost: CostSpec {
                    family: match r.cost.family() {
                        CostFamily::PowerExp => FamilyName::PowerExp,
                        CostFamily::ExpOverTheta => FamilyName::ExpOverTheta,
                        CostFamily::QuadraticOverTheta => FamilyName::QuadraticOverTheta,
                        CostFamily::Mm1Delay => FamilyName::Mm1Delay,
                    },
                    params: CostParams { scale: r.cost.scale() },
                },
                dist: match r.dist {
                    TypeDistribution::Uniform { a, b } => DistSpec::Uniform(UniformParams { a, b }),
                    TypeDistribution::PowerCdf { a, b, gamma } => DistSpec::PowerCdf(PowerCdfParams { a, b, gamma }),
                },
            })
            .collect();
        ScenarioFile { source, relays, seed }
    }

    /// First 16 hex digits of the SHA-256 of the canonical scenario (seed
    /// excluded).
    pub fn hash(scenario: &Scenario) -> String {
        let canonical = serde_json::to_string(&ScenarioFile::from_scenario(scenario, None))
            .expect("scenario files always serialize");
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(&digest[..8])
    }
}
