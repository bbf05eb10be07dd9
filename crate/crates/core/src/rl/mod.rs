//! Skill Executor: advantage estimation, PPO and SAC, policy checkpoints and
//! goal-conditioned skill training.

pub mod buffer;
pub mod checkpoint;
pub mod gae;
pub mod ppo;
pub mod sac;
pub mod skills;
pub mod train;

use rand::Rng;
use thiserror::Error;

use crate::env::EnvError;
use crate::nn::NnError;

pub use buffer::{ReplayBuffer, RolloutBuffer, Transition};
pub use checkpoint::{Algo, CheckpointPolicy, PolicyCheckpoint};
pub use gae::compute_gae;
pub use ppo::{ppo_update, PpoAgent, PpoConfig, SurrogateRecord};
pub use sac::{sac_update, SacAgent, SacConfig};
pub use skills::{FlatTaskEnv, SkillEnv, SkillId};
pub use train::{train_ppo, train_sac, train_skill, EpisodeRecord, LearningCurve, TrainConfig};

#[derive(Debug, Error)]
pub enum RlError {
    #[error("length mismatch: {rewards} rewards, {values} values, {dones} done flags")]
    LengthMismatch { rewards: usize, values: usize, dones: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("update called on an empty rollout buffer")]
    EmptyBuffer,
    #[error("non-finite loss {0}; update aborted")]
    NonFiniteLoss(f64),
    #[error("replay buffer holds {have} transitions, batch needs {need}")]
    InsufficientReplay { have: usize, need: usize },
    #[error("observation dimension {got} does not match checkpoint dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Averaged diagnostics of one call to an update routine.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    /// SAC temperature after the update; zero for PPO.
    pub alpha: f64,
    /// Per-element surrogate terms, filled only when recording is enabled.
    pub surrogates: Vec<SurrogateRecord>,
}

impl UpdateStats {
    pub(crate) fn average_over(&mut self, n: usize) {
        if n == 0 {
            return;
        }
        let k = n as f64;
        self.policy_loss /= k;
        self.value_loss /= k;
        self.entropy /= k;
        self.clip_fraction /= k;
        self.approx_kl /= k;
    }
}

/// Result of one environment step as seen by a learner.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub success: bool,
    /// Ended by the step limit rather than by reaching a terminal state.
    pub truncated: bool,
}

/// Episodic environment with continuous actions in normalized units.
pub trait Environment {
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn reset(&mut self) -> Result<Vec<f64>, RlError>;
    fn step(&mut self, action: &[f64]) -> Result<EnvStep, RlError>;
}

/// One-dimensional toy task: drive `x` to the origin.
///
/// `x_0 ~ U[-1, 1]`, `x += 0.1 * clip(a, -1, 1)`, reward `-|x|`, 20 steps.
#[derive(Debug, Clone)]
pub struct ToyLineEnv {
    rng: rand_chacha::ChaCha8Rng,
    x: f64,
    t: usize,
}

impl ToyLineEnv {
    pub const HORIZON: usize = 20;

    pub fn new(seed: u64) -> Self {
        use rand::SeedableRng;
        Self { rng: rand_chacha::ChaCha8Rng::seed_from_u64(seed), x: 0.0, t: 0 }
    }
}

impl Environment for ToyLineEnv {
    fn obs_dim(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn reset(&mut self) -> Result<Vec<f64>, RlError> {
        self.x = self.rng.random_range(-1.0..=1.0);
        self.t = 0;
        Ok(vec![self.x])
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep, RlError> {
        let a = action.first().copied().unwrap_or(0.0);
        let a = if a.is_finite() { a.clamp(-1.0, 1.0) } else { 0.0 };
        self.x += 0.1 * a;
        self.t += 1;
        let done = self.t >= Self::HORIZON;
        Ok(EnvStep { obs: vec![self.x], reward: -self.x.abs(), done, success: false, truncated: done })
    }
}
