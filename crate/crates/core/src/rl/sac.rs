//! Soft actor-critic: twin critics with soft-updated targets, a tanh-squashed
//! Gaussian actor with state-dependent log-std, and automatic temperature tuning.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::buffer::Transition;
use super::{RlError, UpdateStats};
use crate::nn::{layer_sizes, AdamConfig, AdamState, ForwardCache, Gradients, Mlp, LOG_STD_MAX, LOG_STD_MIN};

const LOG_2PI: f64 = 1.837_877_066_409_345_3;
const SQUASH_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacConfig {
    pub gamma: f64,
    pub tau: f64,
    pub batch: usize,
    pub replay_capacity: usize,
    pub init_alpha: f64,
    pub auto_alpha: bool,
    pub lr: f64,
    /// Uniform-random steps collected before the first update.
    pub warmup_steps: usize,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            batch: 256,
            replay_capacity: 100_000,
            init_alpha: 0.2,
            auto_alpha: true,
            lr: 3e-4,
            warmup_steps: 1000,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let ok = self.tau > 0.0
            && self.tau <= 1.0
            && self.gamma >= 0.0
            && self.gamma <= 1.0
            && self.batch > 0
            && self.replay_capacity >= self.batch
            && self.init_alpha >= 0.0
            && (!self.auto_alpha || self.init_alpha > 0.0)
            && self.lr > 0.0;
        if ok {
            Ok(())
        } else {
            Err(RlError::InvalidConfig(format!("{self:?}")))
        }
    }
}

/// A reparameterized draw from the squashed policy.
#[derive(Debug, Clone)]
pub struct SquashedSample {
    pub action: Vec<f64>,
    pub log_prob: f64,
    noise: Vec<f64>,
    std: Vec<f64>,
    /// Whether each log-std entry sat inside the clamp (gradient flows).
    free: Vec<bool>,
    cache: ForwardCache,
}

/// Mean and clamped log-std of the squashed policy.
pub fn policy_head(policy: &Mlp, obs: &[f64]) -> Result<(Vec<f64>, Vec<f64>), RlError> {
    let out = policy.predict(obs)?;
    let a = out.len() / 2;
    let mean = out[..a].to_vec();
    let log_std = out[a..].iter().map(|l| l.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect();
    Ok((mean, log_std))
}

pub fn squashed_mean(policy: &Mlp, obs: &[f64]) -> Result<Vec<f64>, RlError> {
    Ok(policy_head(policy, obs)?.0.iter().map(|m| m.tanh()).collect())
}

/// Stochastic squashed action in `[-1, 1]^A` with its log-density.
pub fn squashed_sample<R: Rng + ?Sized>(policy: &Mlp, obs: &[f64], rng: &mut R) -> Result<(Vec<f64>, f64), RlError> {
    let s = sample_squashed(policy, obs, rng)?;
    Ok((s.action, s.log_prob))
}

fn sample_squashed<R: Rng + ?Sized>(policy: &Mlp, obs: &[f64], rng: &mut R) -> Result<SquashedSample, RlError> {
    let (out, cache) = policy.forward(obs)?;
    let a_dim = out.len() / 2;
    let mut action = Vec::with_capacity(a_dim);
    let mut noise = Vec::with_capacity(a_dim);
    let mut std = Vec::with_capacity(a_dim);
    let mut free = Vec::with_capacity(a_dim);
    let mut log_prob = 0.0;
    for k in 0..a_dim {
        let raw = out[a_dim + k];
        let ls = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
        let z: f64 = rng.sample(StandardNormal);
        let u = out[k] + ls.exp() * z;
        let a = u.tanh();
        log_prob += -0.5 * z * z - ls - 0.5 * LOG_2PI - (1.0 - a * a + SQUASH_EPS).ln();
        action.push(a);
        noise.push(z);
        std.push(ls.exp());
        free.push((LOG_STD_MIN..=LOG_STD_MAX).contains(&raw));
    }
    Ok(SquashedSample { action, log_prob, noise, std, free, cache })
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

#[derive(Debug, Clone)]
enum Temperature {
    Fixed(f64),
    Auto { log_alpha: f64, opt: AdamState },
}

#[derive(Debug, Clone)]
pub struct SacAgent {
    /// `obs -> [mean (A), log_std (A)]`.
    pub policy: Mlp,
    pub q1: Mlp,
    pub q2: Mlp,
    pub q1_target: Mlp,
    pub q2_target: Mlp,
    pub config: SacConfig,
    pub target_entropy: f64,
    temperature: Temperature,
    policy_opt: AdamState,
    q1_opt: AdamState,
    q2_opt: AdamState,
}

impl SacAgent {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, action_dim: usize, config: SacConfig, rng: &mut R) -> Self {
        let policy = Mlp::init(&layer_sizes(obs_dim, 2 * action_dim), 0.01, rng);
        let q1 = Mlp::init(&layer_sizes(obs_dim + action_dim, 1), 1.0, rng);
        let q2 = Mlp::init(&layer_sizes(obs_dim + action_dim, 1), 1.0, rng);
        let adam = AdamConfig::with_lr(config.lr);
        let temperature = if config.auto_alpha {
            Temperature::Auto { log_alpha: config.init_alpha.ln(), opt: AdamState::new(1, adam) }
        } else {
            Temperature::Fixed(config.init_alpha)
        };
        Self {
            policy_opt: AdamState::new(policy.num_params(), adam),
            q1_opt: AdamState::new(q1.num_params(), adam),
            q2_opt: AdamState::new(q2.num_params(), adam),
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            policy,
            q1,
            q2,
            target_entropy: -(action_dim as f64),
            temperature,
            config,
        }
    }

    pub fn action_dim(&self) -> usize {
        self.policy.output_dim() / 2
    }

    pub fn alpha(&self) -> f64 {
        match &self.temperature {
            Temperature::Fixed(a) => *a,
            Temperature::Auto { log_alpha, .. } => log_alpha.exp(),
        }
    }

    /// Squashed stochastic action in `[-1, 1]^A` with its log-density.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<(Vec<f64>, f64), RlError> {
        squashed_sample(&self.policy, obs, rng)
    }

    fn q_pair(&self, q1: &Mlp, q2: &Mlp, obs: &[f64], action: &[f64]) -> Result<f64, RlError> {
        let x = concat(obs, action);
        Ok(q1.predict(&x)?[0].min(q2.predict(&x)?[0]))
    }

    /// Bellman targets `r + gamma (1 - d) (min Q_target(s', a') - alpha log pi(a'|s'))`.
    pub fn critic_targets<R: Rng + ?Sized>(&self, batch: &[&Transition], rng: &mut R) -> Result<Vec<f64>, RlError> {
        let alpha = self.alpha();
        batch
            .iter()
            .map(|t| {
                if t.done {
                    return Ok(t.reward);
                }
                let next = sample_squashed(&self.policy, &t.next_obs, rng)?;
                let q = self.q_pair(&self.q1_target, &self.q2_target, &t.next_obs, &next.action)?;
                let soft = q - alpha * next.log_prob;
                // gamma == 0 must not let a non-finite soft value leak in as 0 * inf.
                Ok(if self.config.gamma == 0.0 { t.reward } else { t.reward + self.config.gamma * soft })
            })
            .collect()
    }

    pub fn update<R: Rng + ?Sized>(&mut self, batch: &[&Transition], rng: &mut R) -> Result<UpdateStats, RlError> {
        if batch.is_empty() {
            return Err(RlError::InsufficientReplay { have: 0, need: self.config.batch });
        }
        let n = batch.len() as f64;
        let targets = self.critic_targets(batch, rng)?;

        // Critics.
        let mut critic_loss = 0.0;
        for which in 0..2 {
            let net = if which == 0 { &self.q1 } else { &self.q2 };
            let mut g = Gradients::zeros_like(net);
            for (t, y) in batch.iter().zip(&targets) {
                let (q, cache) = net.forward(&concat(&t.obs, &t.action))?;
                let err = q[0] - y;
                critic_loss += err * err / n;
                g.add_assign(&net.backward(&cache, &[2.0 * err / n])?);
            }
            if which == 0 {
                self.q1_opt.step(self.q1.params_mut(), &g.0)?;
            } else {
                self.q2_opt.step(self.q2.params_mut(), &g.0)?;
            }
        }
        if !critic_loss.is_finite() {
            return Err(RlError::NonFiniteLoss(critic_loss));
        }

        // Actor, through the reparameterized action.
        let alpha = self.alpha();
        let a_dim = self.action_dim();
        let mut g_pol = Gradients::zeros_like(&self.policy);
        let (mut actor_loss, mut mean_log_prob) = (0.0, 0.0);
        for t in batch {
            let s = sample_squashed(&self.policy, &t.obs, rng)?;
            let x = concat(&t.obs, &s.action);
            let (q1, c1) = self.q1.forward(&x)?;
            let (q2, c2) = self.q2.forward(&x)?;
            let (q, net, cache) = if q1[0] <= q2[0] { (q1[0], &self.q1, c1) } else { (q2[0], &self.q2, c2) };
            let (_, dx) = net.backward_with_input(&cache, &[1.0])?;
            let dq_da = &dx[t.obs.len()..];
            actor_loss += (alpha * s.log_prob - q) / n;
            mean_log_prob += s.log_prob / n;

            let mut out = vec![0.0; 2 * a_dim];
            for k in 0..a_dim {
                let a = s.action[k];
                let one_m = 1.0 - a * a;
                let d_u = alpha * 2.0 * a * one_m / (one_m + SQUASH_EPS) - dq_da[k] * one_m;
                out[k] = d_u / n;
                if s.free[k] {
                    out[a_dim + k] = (d_u * s.std[k] * s.noise[k] - alpha) / n;
                }
            }
            g_pol.add_assign(&self.policy.backward(&s.cache, &out)?);
        }
        if !actor_loss.is_finite() {
            return Err(RlError::NonFiniteLoss(actor_loss));
        }
        self.policy_opt.step(self.policy.params_mut(), &g_pol.0)?;

        // Temperature: minimize -log_alpha * (log pi + target_entropy).
        let target_entropy = self.target_entropy;
        if let Temperature::Auto { log_alpha, opt } = &mut self.temperature {
            let g = -(mean_log_prob + target_entropy);
            let mut p = [*log_alpha];
            opt.step(&mut p, &[g])?;
            *log_alpha = p[0];
        }

        let tau = self.config.tau;
        self.q1_target.soft_update_from(&self.q1, tau);
        self.q2_target.soft_update_from(&self.q2, tau);

        Ok(UpdateStats {
            policy_loss: actor_loss,
            value_loss: critic_loss / 2.0,
            entropy: -mean_log_prob,
            alpha: self.alpha(),
            ..UpdateStats::default()
        })
    }
}

pub fn sac_update<R: Rng + ?Sized>(
    agent: &mut SacAgent,
    replay: &super::buffer::ReplayBuffer,
    rng: &mut R,
) -> Result<UpdateStats, RlError> {
    if replay.len() < agent.config.batch {
        return Err(RlError::InsufficientReplay { have: replay.len(), need: agent.config.batch });
    }
    let batch = replay.sample(agent.config.batch, rng);
    agent.update(&batch, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::buffer::ReplayBuffer;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn replay(rng: &mut ChaCha8Rng, n: usize) -> ReplayBuffer {
        let mut rb = ReplayBuffer::new(1000);
        for i in 0..n {
            let obs = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let action = vec![rng.random_range(-1.0..1.0)];
            rb.push(Transition {
                next_obs: vec![obs[0] + 0.1 * action[0], obs[1]],
                reward: -obs[0].abs(),
                obs,
                action,
                done: i % 9 == 8,
                log_prob: 0.0,
                value: 0.0,
            });
        }
        rb
    }

    #[test]
    fn full_tau_copies_online_into_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = SacConfig { tau: 1.0, batch: 16, ..SacConfig::default() };
        let mut agent = SacAgent::new(2, 1, cfg, &mut rng);
        let rb = replay(&mut rng, 64);
        sac_update(&mut agent, &rb, &mut rng).unwrap();
        assert_eq!(agent.q1_target, agent.q1);
        assert_eq!(agent.q2_target, agent.q2);
    }

    #[test]
    fn target_drift_is_polyak_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = SacConfig { tau: 0.05, batch: 16, ..SacConfig::default() };
        let mut agent = SacAgent::new(2, 1, cfg, &mut rng);
        let rb = replay(&mut rng, 64);
        sac_update(&mut agent, &rb, &mut rng).unwrap();
        let old_target = agent.q1_target.clone();
        sac_update(&mut agent, &rb, &mut rng).unwrap();
        for ((t_new, t_old), online) in agent.q1_target.params().iter().zip(old_target.params()).zip(agent.q1.params())
        {
            assert_eq!(*t_new, 0.95 * t_old + 0.05 * online);
        }
    }

    #[test]
    fn zero_discount_zero_temperature_target_is_reward() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = SacConfig { gamma: 0.0, init_alpha: 0.0, auto_alpha: false, batch: 8, ..SacConfig::default() };
        let agent = SacAgent::new(2, 1, cfg, &mut rng);
        let rb = replay(&mut rng, 20);
        let batch = rb.sample(8, &mut rng);
        let y = agent.critic_targets(&batch, &mut rng).unwrap();
        for (t, y) in batch.iter().zip(y) {
            assert_eq!(y, t.reward);
        }
    }

    #[test]
    fn insufficient_replay() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut agent = SacAgent::new(2, 1, SacConfig { batch: 32, ..SacConfig::default() }, &mut rng);
        let rb = replay(&mut rng, 10);
        assert!(matches!(
            sac_update(&mut agent, &rb, &mut rng),
            Err(RlError::InsufficientReplay { have: 10, need: 32 })
        ));
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        // With fixed noise the actor loss is a deterministic function of the
        // policy parameters; compare one coordinate per layer.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = SacConfig { auto_alpha: false, init_alpha: 0.3, batch: 4, ..SacConfig::default() };
        let mut agent = SacAgent::new(2, 2, cfg, &mut rng);
        for p in agent.policy.params_mut() {
            *p *= 30.0;
        }
        let obs = vec![0.4, -0.3];
        let loss = |policy: &Mlp, agent: &SacAgent| -> f64 {
            let mut r = ChaCha8Rng::seed_from_u64(99);
            let s = sample_squashed(policy, &obs, &mut r).unwrap();
            let x = concat(&obs, &s.action);
            let q = agent.q1.predict(&x).unwrap()[0].min(agent.q2.predict(&x).unwrap()[0]);
            agent.alpha() * s.log_prob - q
        };
        // Analytic gradient through the same path as `update`.
        let mut r = ChaCha8Rng::seed_from_u64(99);
        let s = sample_squashed(&agent.policy, &obs, &mut r).unwrap();
        let x = concat(&obs, &s.action);
        let (q1, c1) = agent.q1.forward(&x).unwrap();
        let (q2, c2) = agent.q2.forward(&x).unwrap();
        let (net, cache) = if q1[0] <= q2[0] { (&agent.q1, c1) } else { (&agent.q2, c2) };
        let (_, dx) = net.backward_with_input(&cache, &[1.0]).unwrap();
        let alpha = agent.alpha();
        let mut out = vec![0.0; 4];
        for k in 0..2 {
            let a = s.action[k];
            let one_m = 1.0 - a * a;
            let d_u = alpha * 2.0 * a * one_m / (one_m + SQUASH_EPS) - dx[2 + k] * one_m;
            out[k] = d_u;
            if s.free[k] {
                out[2 + k] = d_u * s.std[k] * s.noise[k] - alpha;
            }
        }
        let g = agent.policy.backward(&s.cache, &out).unwrap();
        let h = 1e-6;
        let base = agent.policy.clone();
        for idx in (0..base.num_params()).step_by(97) {
            let mut plus = base.clone();
            plus.params_mut()[idx] += h;
            let mut minus = base.clone();
            minus.params_mut()[idx] -= h;
            let fd = (loss(&plus, &agent) - loss(&minus, &agent)) / (2.0 * h);
            let an = g.0[idx];
            assert!((fd - an).abs() <= 1e-5 * (1.0 + fd.abs().max(an.abs())), "idx {idx}: fd {fd} vs {an}");
        }
        agent.policy = base;
    }
}
