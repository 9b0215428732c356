use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bssn::{BssnParams, ParamError};
use crate::constraint::{ConstraintError, ConstraintSystem};
use crate::scenario::Scenario;
use crate::shepherd::ShepherdConfig;
use crate::sut::{SpecError, SutSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Syntax(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("agent_defaults.{}: {} outside {}", .0.name, .0.value, .0.range)]
    Params(#[from] ParamError),
    #[error("constraints in {path}: {source}")]
    Constraints {
        path: PathBuf,
        #[source]
        source: ConstraintError,
    },
    #[error("SUT spec in {path}: {message}")]
    Sut { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSection {
    pub seed: u64,
    #[serde(default = "default_agents")]
    pub agents: usize,
    #[serde(default = "default_rounds")]
    pub rounds: u64,
    /// Last round before the SUT learns. No learning when absent.
    #[serde(default)]
    pub learning_round: Option<u64>,
    #[serde(default = "default_live_inputs")]
    pub live_inputs_per_round: usize,
    #[serde(default)]
    pub block_soft_violations: bool,
    /// Close every gate at the end of this round.
    #[serde(default)]
    pub shutdown_after_round: Option<u64>,
}

fn default_agents() -> usize {
    3
}

fn default_rounds() -> u64 {
    10
}

fn default_live_inputs() -> usize {
    20
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    TwoRow,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub kind: ScenarioKind,
    /// Constraint system text, for custom scenarios.
    #[serde(default)]
    pub constraints: Option<PathBuf>,
    /// SUT spec as JSON, for custom scenarios.
    #[serde(default)]
    pub sut: Option<PathBuf>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            kind: ScenarioKind::TwoRow,
            constraints: None,
            sut: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub report: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

/// Score floors enforced by `--check`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSection {
    pub recall_h_prime: f64,
    pub precision_h_prime: f64,
    pub recall_hs_prime: f64,
}

impl Default for CheckSection {
    fn default() -> Self {
        CheckSection {
            recall_h_prime: 0.90,
            precision_h_prime: 0.85,
            recall_hs_prime: 0.75,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub campaign: CampaignSection,
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub agent_defaults: BssnParams,
    #[serde(default)]
    pub shepherd: ShepherdConfig,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub check: CheckSection,
}

/// What the agents test, resolved from the scenario section.
#[derive(Debug, Clone)]
pub enum ScenarioSource {
    TwoRow(Scenario),
    Custom { checker: ConstraintSystem, sut: SutSpec },
}

impl ScenarioSource {
    pub fn checker(&self) -> &ConstraintSystem {
        match self {
            ScenarioSource::TwoRow(s) => &s.checker,
            ScenarioSource::Custom { checker, .. } => checker,
        }
    }

    pub fn two_row(&self) -> Option<&Scenario> {
        match self {
            ScenarioSource::TwoRow(s) => Some(s),
            ScenarioSource::Custom { .. } => None,
        }
    }

    /// SUT spec with the learning switch after `trigger` interactions, where
    /// the scenario controls learning.
    pub fn sut_spec(&self, trigger: u64) -> SutSpec {
        match self {
            ScenarioSource::TwoRow(s) => s.learning_sut(trigger),
            ScenarioSource::Custom { sut, .. } => sut.clone(),
        }
    }
}

impl CampaignConfig {
    /// Default configuration for the built-in scenario.
    pub fn two_row(seed: u64) -> Self {
        CampaignConfig {
            campaign: CampaignSection {
                seed,
                agents: default_agents(),
                rounds: default_rounds(),
                learning_round: None,
                live_inputs_per_round: default_live_inputs(),
                block_soft_violations: false,
                shutdown_after_round: None,
            },
            scenario: ScenarioSection::default(),
            agent_defaults: BssnParams::default(),
            shepherd: ShepherdConfig::default(),
            output: OutputSection::default(),
            check: CheckSection::default(),
        }
    }

    /// Parses TOML text. Relative paths are resolved against `base`.
    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut config: CampaignConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(path) = p.as_mut() {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        rebase(&mut config.scenario.constraints);
        rebase(&mut config.scenario.sut);
        rebase(&mut config.output.report);
        rebase(&mut config.output.trace);
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = read(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let c = &self.campaign;
        if c.agents == 0 {
            return Err(ConfigError::Invalid("campaign.agents must be positive".into()));
        }
        if let Some(l) = c.learning_round {
            if l == 0 || l > c.rounds {
                return Err(ConfigError::Invalid(format!(
                    "campaign.learning_round = {l} must lie in 1..={}",
                    c.rounds
                )));
            }
        }
        self.agent_defaults.validate()?;
        let s = &self.shepherd;
        if !(0.0 < s.epsilon_min && s.epsilon_min <= s.epsilon_max && s.epsilon_max < 1.0) {
            return Err(ConfigError::Invalid(
                "shepherd epsilon range must satisfy 0 < min <= max < 1".into(),
            ));
        }
        if s.rebalance_tolerance < 0.0 || !s.rebalance_tolerance.is_finite() {
            return Err(ConfigError::Invalid(
                "shepherd.rebalance_tolerance must be non-negative".into(),
            ));
        }
        if self.scenario.kind == ScenarioKind::Custom
            && (self.scenario.constraints.is_none() || self.scenario.sut.is_none())
        {
            return Err(ConfigError::Invalid(
                "custom scenarios need both scenario.constraints and scenario.sut".into(),
            ));
        }
        Ok(())
    }

    /// Loads the scenario the config points at.
    pub fn resolve_scenario(&self) -> Result<ScenarioSource, ConfigError> {
        match self.scenario.kind {
            ScenarioKind::TwoRow => Ok(ScenarioSource::TwoRow(Scenario::two_row(self.campaign.seed))),
            ScenarioKind::Custom => {
                let cpath = self.scenario.constraints.as_ref().expect("validated");
                let spath = self.scenario.sut.as_ref().expect("validated");
                let checker = ConstraintSystem::parse(&read(cpath)?).map_err(|source| ConfigError::Constraints {
                    path: cpath.clone(),
                    source,
                })?;
                let sut: SutSpec = serde_json::from_str(&read(spath)?).map_err(|e| ConfigError::Sut {
                    path: spath.clone(),
                    message: e.to_string(),
                })?;
                sut.validate().map_err(|e: SpecError| ConfigError::Sut {
                    path: spath.clone(),
                    message: e.to_string(),
                })?;
                if sut.action_space != *checker.space() {
                    return Err(ConfigError::Sut {
                        path: spath.clone(),
                        message: "action space differs from the constraint variables".into(),
                    });
                }
                Ok(ScenarioSource::Custom { checker, sut })
            }
        }
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}
