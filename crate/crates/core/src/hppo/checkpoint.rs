//! Versioned JSON checkpoints and learning-curve tables.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::policy::PolicyParameters;
use super::trainer::IterationRecord;
use crate::env::ActionSpec;
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "arisnoma-policy";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// SHA-256 of the training configuration.
    pub config_hash: String,
    /// SHA-256 of the state/action interface; evaluation requires a match.
    pub interface_hash: String,
    pub seed: u64,
    pub state_dim: usize,
    pub action: ActionSpec,
    pub params: PolicyParameters,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of a serializable value's canonical JSON form.
pub fn hash_json<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value).map_err(|e| Error::Serde(e.to_string()))?;
    Ok(sha256_hex(&bytes))
}

pub fn interface_hash(state_dim: usize, action: &ActionSpec) -> String {
    sha256_hex(format!("state={state_dim};phase={};lambda={};amp={}", action.n_phase, action.n_lambda, action.n_amp).as_bytes())
}

impl Checkpoint {
    pub fn new(params: PolicyParameters, config_hash: String, seed: u64, action: ActionSpec) -> Self {
        let state_dim = params.state_dim();
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config_hash,
            interface_hash: interface_hash(state_dim, &action),
            seed,
            state_dim,
            action,
            params,
        }
    }

    /// Refuses checkpoints whose format, version or interface differ.
    pub fn check_compatible(&self, state_dim: usize, action: &ActionSpec) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::IncompatibleCheckpoint(format!(
                "format {} v{} (expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION})",
                self.format, self.version
            )));
        }
        let expected = interface_hash(state_dim, action);
        if self.interface_hash != expected
            || self.params.state_dim() != state_dim
            || self.params.action_dim() != action.continuous_dim()
        {
            return Err(Error::IncompatibleCheckpoint(format!(
                "checkpoint interface (state {}, action {:?}) does not match scenario (state {state_dim}, action {action:?})",
                self.state_dim, self.action
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

pub const CURVE_HEADER: [&str; 10] = [
    "iteration",
    "mean_episode_reward",
    "mean_step_reward",
    "mean_sum_rate",
    "policy_loss_discrete",
    "policy_loss_continuous",
    "value_loss",
    "entropy",
    "approx_kl",
    "clip_fraction",
];

pub fn write_learning_curve(path: &Path, curve: &[IterationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let err = |e: csv::Error| Error::io(path, e.into());
    w.write_record(CURVE_HEADER).map_err(err)?;
    for r in curve {
        w.write_record([
            r.iteration.to_string(),
            r.mean_episode_reward.to_string(),
            r.mean_step_reward.to_string(),
            r.mean_sum_rate.to_string(),
            r.policy_loss_d.to_string(),
            r.policy_loss_c.to_string(),
            r.value_loss.to_string(),
            r.entropy.to_string(),
            r.approx_kl.to_string(),
            r.clip_fraction.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
