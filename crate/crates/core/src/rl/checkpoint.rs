//! Trained-policy checkpoints.
//!
//! ```text
//! manip-policy-checkpoint 1
//! algo ppo
//! skill reach
//! obs_dim 12
//! action_dim 3
//! seed 3
//! tensor policy_mean mlp 12 64 64 3      (ppo)
//! tensor log_std vec 3                   (ppo)
//! tensor policy mlp 12 64 64 6           (sac: mean and log-std heads)
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sac::{squashed_mean, squashed_sample};
use super::{RlError, SkillId};
use crate::env::Action;
use crate::nn::io::{write_mlp, write_vec, Reader};
use crate::nn::{GaussianPolicy, Mlp};

pub const CHECKPOINT_MAGIC: &str = "manip-policy-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Ppo,
    Sac,
}

impl Algo {
    pub fn as_str(self) -> &'static str {
        match self {
            Algo::Ppo => "ppo",
            Algo::Sac => "sac",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ppo" => Ok(Algo::Ppo),
            "sac" => Ok(Algo::Sac),
            other => Err(format!("unknown algorithm `{other}` (valid: ppo, sac)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CheckpointPolicy {
    /// Unsquashed Gaussian with state-independent log-std.
    Gaussian(GaussianPolicy),
    /// Network emitting `[mean, log_std]`; actions pass through `tanh`.
    Squashed(Mlp),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyCheckpoint {
    pub algo: Algo,
    pub skill: SkillId,
    pub seed: u64,
    pub policy: CheckpointPolicy,
}

impl PolicyCheckpoint {
    pub fn obs_dim(&self) -> usize {
        match &self.policy {
            CheckpointPolicy::Gaussian(p) => p.obs_dim(),
            CheckpointPolicy::Squashed(m) => m.input_dim(),
        }
    }

    pub fn action_dim(&self) -> usize {
        match &self.policy {
            CheckpointPolicy::Gaussian(p) => p.action_dim(),
            CheckpointPolicy::Squashed(m) => m.output_dim() / 2,
        }
    }

    /// Policy output in normalized units: the mean (squashed for SAC) when
    /// `deterministic`, otherwise a draw from the policy.
    pub fn act_normalized<R: Rng + ?Sized>(
        &self,
        obs: &[f64],
        deterministic: bool,
        rng: &mut R,
    ) -> Result<Vec<f64>, RlError> {
        if obs.len() != self.obs_dim() {
            return Err(RlError::DimensionMismatch { expected: self.obs_dim(), got: obs.len() });
        }
        Ok(match (&self.policy, deterministic) {
            (CheckpointPolicy::Gaussian(p), true) => p.mean_action(obs)?,
            (CheckpointPolicy::Gaussian(p), false) => p.sample(obs, rng)?.0,
            (CheckpointPolicy::Squashed(m), true) => squashed_mean(m, obs)?,
            (CheckpointPolicy::Squashed(m), false) => squashed_sample(m, obs, rng)?.0,
        })
    }

    /// Environment action, each delta component within `[-MAX_STEP, MAX_STEP]`.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], deterministic: bool, rng: &mut R) -> Result<Action, RlError> {
        Ok(Action::from_normalized(&self.act_normalized(obs, deterministic, rng)?))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\nalgo {}\nskill {}\nobs_dim {}\naction_dim {}\nseed {}\n",
            self.algo,
            self.skill,
            self.obs_dim(),
            self.action_dim(),
            self.seed
        );
        match &self.policy {
            CheckpointPolicy::Gaussian(p) => {
                write_mlp(&mut out, "policy_mean", &p.mean);
                write_vec(&mut out, "log_std", p.log_std());
            }
            CheckpointPolicy::Squashed(m) => write_mlp(&mut out, "policy", m),
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, RlError> {
        let bad = RlError::Checkpoint;
        let mut r = Reader::new(text);
        let (_, header) = r.next_line().ok_or_else(|| bad("empty file".into()))?;
        let version = header
            .strip_prefix(CHECKPOINT_MAGIC)
            .map(str::trim)
            .ok_or_else(|| bad(format!("not a policy checkpoint (header `{header}`)")))?;
        if version != CHECKPOINT_VERSION.to_string() {
            return Err(bad(format!("unsupported checkpoint version `{version}`")));
        }
        let algo: Algo = r.field("algo").map_err(bad)?.parse().map_err(bad)?;
        let skill: SkillId = r.field("skill").map_err(bad)?.parse().map_err(bad)?;
        let num = |r: &mut Reader<'_>, key: &str| -> Result<u64, RlError> {
            let v = r.field(key).map_err(RlError::Checkpoint)?;
            v.parse().map_err(|_| RlError::Checkpoint(format!("bad `{key}` value `{v}`")))
        };
        let obs_dim = num(&mut r, "obs_dim")? as usize;
        let action_dim = num(&mut r, "action_dim")? as usize;
        let seed = num(&mut r, "seed")?;
        let policy = match algo {
            Algo::Ppo => {
                let mean = r.mlp("policy_mean").map_err(bad)?;
                let log_std = r.vec("log_std").map_err(bad)?;
                CheckpointPolicy::Gaussian(GaussianPolicy::new(mean, log_std)?)
            }
            Algo::Sac => {
                let m = r.mlp("policy").map_err(bad)?;
                if m.output_dim() % 2 != 0 {
                    return Err(bad("squashed policy needs an even output width".into()));
                }
                CheckpointPolicy::Squashed(m)
            }
        };
        let ckpt = PolicyCheckpoint { algo, skill, seed, policy };
        if ckpt.obs_dim() != obs_dim || ckpt.action_dim() != action_dim {
            return Err(bad(format!(
                "header declares {obs_dim}->{action_dim} but network is {}->{}",
                ckpt.obs_dim(),
                ckpt.action_dim()
            )));
        }
        if let Some((n, line)) = r.next_line() {
            return Err(bad(format!("line {n}: trailing content `{line}`")));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RlError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RlError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}
