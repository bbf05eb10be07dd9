//! Episodic training loops and learning curves.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::buffer::{ReplayBuffer, RolloutBuffer, Transition};
use super::checkpoint::{Algo, CheckpointPolicy, PolicyCheckpoint};
use super::ppo::{PpoAgent, PpoConfig};
use super::sac::{sac_update, SacAgent, SacConfig};
use super::{Environment, RlError, SkillId};

/// Trailing window used for the smoothed learning-curve column.
pub const CURVE_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub index: usize,
    pub cumulative_reward: f64,
    pub success: bool,
    pub steps: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub episodes: Vec<EpisodeRecord>,
}

impl LearningCurve {
    pub fn push(&mut self, cumulative_reward: f64, success: bool, steps: u32) {
        let index = self.episodes.len();
        self.episodes.push(EpisodeRecord { index, cumulative_reward, success, steps });
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// Mean cumulative reward over `range` of episode indices.
    pub fn mean_reward(&self, range: std::ops::Range<usize>) -> f64 {
        let slice = &self.episodes[range];
        slice.iter().map(|e| e.cumulative_reward).sum::<f64>() / slice.len() as f64
    }

    /// Mean over the trailing `CURVE_WINDOW` episodes ending at `i` (fewer at the start).
    pub fn window_mean(&self, i: usize) -> f64 {
        self.mean_reward((i + 1).saturating_sub(CURVE_WINDOW)..i + 1)
    }

    /// CSV with one row per episode plus a trailing-window mean column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("episode,cumulative_reward,success,steps,window_mean\n");
        for (i, e) in self.episodes.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{:?},{},{},{:?}",
                e.index,
                e.cumulative_reward,
                u8::from(e.success),
                e.steps,
                self.window_mean(i)
            );
        }
        out
    }
}

/// Hyperparameters for both learners.
///
/// `Default` is the skill-training profile: 100-episode runs of 40-step
/// episodes, so the PPO horizon is shortened to give tens of updates rather
/// than one, and SAC starts learning after a short warm-up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub ppo: PpoConfig,
    pub sac: SacConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            ppo: PpoConfig { horizon: 128, lr: 1e-3, ..PpoConfig::default() },
            sac: SacConfig { batch: 64, warmup_steps: 200, lr: 1e-3, ..SacConfig::default() },
        }
    }
}

struct EpisodeTally {
    reward: f64,
    steps: u32,
}

/// Trains a PPO agent for `episodes` complete episodes.
pub fn train_ppo<E: Environment + ?Sized>(
    env: &mut E,
    episodes: usize,
    config: &PpoConfig,
    seed: u64,
) -> Result<(PpoAgent, LearningCurve), RlError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agent = PpoAgent::new(env.obs_dim(), env.action_dim(), config.clone(), &mut rng);
    let mut curve = LearningCurve::default();
    if episodes == 0 {
        return Ok((agent, curve));
    }
    let mut buffer = RolloutBuffer::new(config.horizon);
    let mut obs = env.reset()?;
    let mut tally = EpisodeTally { reward: 0.0, steps: 0 };

    while curve.len() < episodes {
        let (action, log_prob, value) = agent.act(&obs, &mut rng)?;
        let step = env.step(&action)?;
        tally.reward += step.reward;
        tally.steps += 1;
        // A step-limit cut is not a terminal state: fold the bootstrap into the
        // reward so the advantage recursion can still stop at the boundary.
        let mut reward = step.reward;
        if step.truncated {
            reward += config.gamma * agent.value_of(&step.obs)?;
        }
        buffer.push(Transition {
            obs: std::mem::take(&mut obs),
            action,
            reward,
            next_obs: step.obs.clone(),
            done: step.done,
            log_prob,
            value,
        });
        if step.done {
            curve.push(tally.reward, step.success, tally.steps);
            tally = EpisodeTally { reward: 0.0, steps: 0 };
            obs = env.reset()?;
        } else {
            obs = step.obs;
        }
        if buffer.is_full() {
            let bootstrap = if step.done { 0.0 } else { agent.value_of(&obs)? };
            agent.update(&buffer, bootstrap, &mut rng)?;
            buffer.clear();
        }
    }
    Ok((agent, curve))
}

/// Trains a SAC agent for `episodes` complete episodes, one gradient step per
/// environment step once the warm-up is over.
pub fn train_sac<E: Environment + ?Sized>(
    env: &mut E,
    episodes: usize,
    config: &SacConfig,
    seed: u64,
) -> Result<(SacAgent, LearningCurve), RlError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let action_dim = env.action_dim();
    let mut agent = SacAgent::new(env.obs_dim(), action_dim, config.clone(), &mut rng);
    let mut curve = LearningCurve::default();
    if episodes == 0 {
        return Ok((agent, curve));
    }
    let mut replay = ReplayBuffer::new(config.replay_capacity);
    let mut obs = env.reset()?;
    let mut tally = EpisodeTally { reward: 0.0, steps: 0 };
    let mut total = 0usize;

    while curve.len() < episodes {
        let action = if total < config.warmup_steps {
            (0..action_dim).map(|_| rng.random_range(-1.0..=1.0)).collect()
        } else {
            agent.act(&obs, &mut rng)?.0
        };
        let step = env.step(&action)?;
        total += 1;
        tally.reward += step.reward;
        tally.steps += 1;
        replay.push(Transition {
            obs: std::mem::take(&mut obs),
            action,
            reward: step.reward,
            next_obs: step.obs.clone(),
            done: step.done && !step.truncated,
            log_prob: 0.0,
            value: 0.0,
        });
        if step.done {
            curve.push(tally.reward, step.success, tally.steps);
            tally = EpisodeTally { reward: 0.0, steps: 0 };
            obs = env.reset()?;
        } else {
            obs = step.obs;
        }
        if total >= config.warmup_steps && replay.len() >= config.batch {
            sac_update(&mut agent, &replay, &mut rng)?;
        }
    }
    Ok((agent, curve))
}

/// Trains one policy for `skill` on the environment produced by `env_factory`
/// (called once with the run seed) and packages it as a checkpoint.
pub fn train_skill<E, F>(
    env_factory: F,
    skill: SkillId,
    algo: Algo,
    episodes: usize,
    seed: u64,
    config: &TrainConfig,
) -> Result<(PolicyCheckpoint, LearningCurve), RlError>
where
    E: Environment,
    F: FnOnce(SkillId, u64) -> Result<E, RlError>,
{
    let mut env = env_factory(skill, seed)?;
    if env.action_dim() != skill.action_dim() {
        return Err(RlError::InvalidConfig(format!(
            "environment action width {} does not match skill `{skill}` ({})",
            env.action_dim(),
            skill.action_dim()
        )));
    }
    let (policy, curve) = match algo {
        Algo::Ppo => {
            let (agent, curve) = train_ppo(&mut env, episodes, &config.ppo, seed)?;
            (CheckpointPolicy::Gaussian(agent.policy), curve)
        }
        Algo::Sac => {
            let (agent, curve) = train_sac(&mut env, episodes, &config.sac, seed)?;
            (CheckpointPolicy::Squashed(agent.policy), curve)
        }
    };
    Ok((PolicyCheckpoint { algo, skill, seed, policy }, curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::ToyLineEnv;

    #[test]
    fn curve_csv_shape() {
        let mut c = LearningCurve::default();
        assert_eq!(c.to_csv().lines().count(), 1);
        for i in 0..100 {
            c.push(i as f64, i % 2 == 0, 40);
        }
        let csv = c.to_csv();
        assert_eq!(csv.lines().count(), 101);
        let last: Vec<&str> = csv.lines().last().unwrap().split(',').collect();
        assert_eq!(last, ["99", "99.0", "0", "40", "94.5"]);
    }

    #[test]
    fn zero_episodes_gives_untrained_checkpoint() {
        let cfg = TrainConfig::default();
        let (ckpt, curve) =
            train_skill(crate::rl::SkillEnv::new, SkillId::Reach, Algo::Ppo, 0, 1, &cfg).unwrap();
        assert!(curve.is_empty());
        assert_eq!((ckpt.seed, ckpt.obs_dim(), ckpt.action_dim()), (1, 12, 3));
    }

    #[test]
    fn env_width_must_match_skill() {
        let cfg = TrainConfig::default();
        let r = train_skill(|_, s| Ok(ToyLineEnv::new(s)), SkillId::Reach, Algo::Ppo, 0, 1, &cfg);
        assert!(matches!(r, Err(RlError::InvalidConfig(_))));
    }

    fn toy_ppo_config() -> PpoConfig {
        PpoConfig { horizon: 200, lr: 3e-3, ..PpoConfig::default() }
    }

    #[test]
    fn ppo_improves_on_toy_line() {
        // 50 updates at 10 episodes each.
        let mut env = ToyLineEnv::new(0);
        let (_, curve) = train_ppo(&mut env, 500, &toy_ppo_config(), 7).unwrap();
        let n = curve.len();
        let first = curve.mean_reward(0..10);
        let last = curve.mean_reward(n - 10..n);
        assert!(last > first, "first {first} last {last}");
    }

    #[test]
    fn sac_improves_on_toy_line() {
        let mut env = ToyLineEnv::new(0);
        let cfg = SacConfig { batch: 64, warmup_steps: 200, lr: 3e-3, ..SacConfig::default() };
        let (_, curve) = train_sac(&mut env, 60, &cfg, 7).unwrap();
        let n = curve.len();
        let first = curve.mean_reward(0..10);
        let last = curve.mean_reward(n - 10..n);
        assert!(last > first, "first {first} last {last}");
    }

    #[test]
    fn training_is_deterministic() {
        let run = || {
            let mut env = ToyLineEnv::new(3);
            let cfg = PpoConfig { horizon: 64, epochs: 2, ..PpoConfig::default() };
            let (agent, curve) = train_ppo(&mut env, 10, &cfg, 5).unwrap();
            (agent.policy, curve)
        };
        assert_eq!(run(), run());
    }
}
