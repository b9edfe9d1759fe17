//! Experiment configuration: JSON schema for environments, oracles, the
//! policy architecture, distillation, and the memory hyperparameters.
//! Unknown fields are rejected so config mistakes fail before any run.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::{lqr_for_env, ControlLaw, ControllerSpec};
use crate::distill::DistillConfig;
use crate::env::{EnvId, EnvParams, TerminationSpec};
use crate::error::{Error, Result};
use crate::memory::{AeHyper, AutoencoderSpec};
use crate::net::PolicySpec;
use crate::Scalar;

/// Partial environment description; unspecified values fall back to the
/// environment's defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

impl EnvSpec {
    pub fn to_params(&self) -> Result<EnvParams<Scalar>> {
        let id = EnvId::parse(&self.id)?;
        let mut params = EnvParams::from_id(id);
        if let Some(goal) = &self.goal {
            params = params.with_goal(goal)?;
        }
        if let Some(dt) = self.dt {
            params.dt = dt;
        }
        params.validate()?;
        Ok(params)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub bounds: Vec<(f64, f64)>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            input_dim: 4,
            hidden: vec![16, 16],
            output_dim: 2,
            bounds: vec![(-10.0, 10.0), (-10.0, 10.0)],
        }
    }
}

impl PolicyConfig {
    pub fn to_spec(&self) -> Result<PolicySpec<Scalar>> {
        let mut dims = vec![self.input_dim];
        dims.extend_from_slice(&self.hidden);
        dims.push(self.output_dim);
        let spec = PolicySpec::new(dims, Some(self.bounds.clone()));
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AeConfig {
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub lr: f64,
    pub max_epochs: usize,
    pub target_rel_error: f64,
    pub seed: u64,
}

impl Default for AeConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128],
            latent_dim: 8,
            lr: 1e-3,
            max_epochs: 20_000,
            target_rel_error: 0.05,
            seed: 11,
        }
    }
}

impl AeConfig {
    pub fn to_spec(&self, param_count: usize) -> Result<AutoencoderSpec> {
        let spec = AutoencoderSpec {
            input_dim: param_count,
            hidden: self.hidden.clone(),
            latent_dim: self.latent_dim,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn hyper(&self) -> AeHyper {
        AeHyper {
            lr: self.lr,
            max_epochs: self.max_epochs,
            target_rel_error: self.target_rel_error,
        }
    }
}

/// Oracle description: a PD law or an LQR about the environment's goal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleConfig {
    Pd {
        kp: f64,
        kd: f64,
        #[serde(default)]
        gravity_feedforward: bool,
    },
    Lqr {
        q_diag: Vec<f64>,
        r_diag: Vec<f64>,
    },
}

impl OracleConfig {
    pub fn build(&self, env: &EnvParams<Scalar>) -> Result<ControllerSpec<Scalar>> {
        let spec = match self {
            OracleConfig::Pd {
                kp,
                kd,
                gravity_feedforward,
            } => ControllerSpec {
                law: ControlLaw::PdGoal {
                    kp: *kp,
                    kd: *kd,
                    gravity_feedforward: *gravity_feedforward,
                },
                env: env.clone(),
            },
            OracleConfig::Lqr { q_diag, r_diag } => lqr_for_env(env, q_diag, r_diag)?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkillConfig {
    pub env: EnvSpec,
    pub oracle: OracleConfig,
    pub termination: TerminationSpec<Scalar>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub policy: PolicyConfig,
    pub autoencoder: AeConfig,
    pub distill: DistillConfig,
    pub eval_seeds: u64,
    pub skills: BTreeMap<String, SkillConfig>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.policy.to_spec()?;
        self.distill.validate()?;
        if self.eval_seeds == 0 {
            return Err(Error::InvalidConfig("eval_seeds must be >= 1".into()));
        }
        let policy = self.policy.to_spec()?;
        self.autoencoder.to_spec(policy.param_count())?;
        for (name, skill) in &self.skills {
            if name.is_empty() {
                return Err(Error::InvalidConfig("skill names must be nonempty".into()));
            }
            let env = skill.env.to_params()?;
            skill.termination.validate()?;
            skill.oracle.build(&env)?;
            if env.state_dim() > self.policy.input_dim || env.action_dim() > self.policy.output_dim
            {
                return Err(Error::InvalidConfig(format!(
                    "skill {name}: environment dims exceed the policy architecture"
                )));
            }
        }
        Ok(())
    }

    /// Resolved (env, oracle, termination) for a named skill entry.
    pub fn skill_setup(
        &self,
        name: &str,
    ) -> Result<(
        EnvParams<Scalar>,
        ControllerSpec<Scalar>,
        TerminationSpec<Scalar>,
    )> {
        let skill = self
            .skills
            .get(name)
            .ok_or_else(|| Error::UnknownSkill(name.to_string()))?;
        let env = skill.env.to_params()?;
        let oracle = skill.oracle.build(&env)?;
        Ok((env, oracle, skill.termination.clone()))
    }
}
