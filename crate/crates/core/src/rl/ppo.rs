//! Proximal policy optimization with a clipped probability-ratio surrogate.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::buffer::RolloutBuffer;
use super::gae::{compute_gae, normalize};
use super::{RlError, UpdateStats};
use crate::nn::{
    clip_global_norm, gaussian_log_prob, layer_sizes, AdamConfig, AdamState, GaussianPolicy, Gradients, Mlp,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub clip_eps: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub horizon: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub lr: f64,
    pub init_log_std: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            epochs: 10,
            minibatch: 64,
            horizon: 2048,
            value_coef: 0.5,
            entropy_coef: 0.01,
            max_grad_norm: 0.5,
            lr: 3e-4,
            init_log_std: 0.0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let ok = self.gamma > 0.0
            && self.gamma <= 1.0
            && (0.0..=1.0).contains(&self.gae_lambda)
            && self.clip_eps > 0.0
            && self.epochs > 0
            && self.minibatch > 0
            && self.horizon > 0
            && self.lr > 0.0
            && self.max_grad_norm > 0.0;
        if ok {
            Ok(())
        } else {
            Err(RlError::InvalidConfig(format!("{self:?}")))
        }
    }
}

/// One element of a minibatch as seen by the surrogate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateRecord {
    pub ratio: f64,
    pub advantage: f64,
    /// `min(ratio * A, clip(ratio) * A)` as used in the loss.
    pub applied: f64,
}

/// Prepared training sample: everything the loss needs, fixed for the update.
#[derive(Debug, Clone)]
pub struct PpoSample {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub ret: f64,
}

/// Gradients and diagnostics of the PPO loss on one minibatch.
#[derive(Debug, Clone)]
pub struct MinibatchGrads {
    pub policy: Gradients,
    pub log_std: Vec<f64>,
    pub value: Gradients,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub records: Vec<SurrogateRecord>,
}

#[derive(Debug, Clone)]
pub struct PpoAgent {
    pub policy: GaussianPolicy,
    pub value: Mlp,
    pub config: PpoConfig,
    policy_opt: AdamState,
    log_std_opt: AdamState,
    value_opt: AdamState,
    /// When set, every update keeps the per-element surrogate terms in its stats.
    pub record_surrogates: bool,
}

impl PpoAgent {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, action_dim: usize, config: PpoConfig, rng: &mut R) -> Self {
        let mean = Mlp::init(&layer_sizes(obs_dim, action_dim), 0.01, rng);
        let value = Mlp::init(&layer_sizes(obs_dim, 1), 1.0, rng);
        let policy = GaussianPolicy::new(mean, vec![config.init_log_std; action_dim]).expect("sizes agree");
        Self::from_parts(policy, value, config)
    }

    pub fn from_parts(policy: GaussianPolicy, value: Mlp, config: PpoConfig) -> Self {
        let adam = AdamConfig::with_lr(config.lr);
        Self {
            policy_opt: AdamState::new(policy.mean.num_params(), adam),
            log_std_opt: AdamState::new(policy.action_dim(), adam),
            value_opt: AdamState::new(value.num_params(), adam),
            policy,
            value,
            config,
            record_surrogates: false,
        }
    }

    pub fn value_of(&self, obs: &[f64]) -> Result<f64, RlError> {
        Ok(self.value.predict(obs)?[0])
    }

    /// Samples an action; returns it with its log-density and the value estimate.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<(Vec<f64>, f64, f64), RlError> {
        let (a, lp) = self.policy.sample(obs, rng)?;
        Ok((a, lp, self.value_of(obs)?))
    }

    /// Turns a full rollout into normalized training samples.
    pub fn prepare(&self, buffer: &RolloutBuffer, bootstrap_value: f64) -> Result<Vec<PpoSample>, RlError> {
        if buffer.is_empty() {
            return Err(RlError::EmptyBuffer);
        }
        let tr = buffer.transitions();
        let rewards: Vec<f64> = tr.iter().map(|t| t.reward).collect();
        let values: Vec<f64> = tr.iter().map(|t| t.value).collect();
        let dones: Vec<bool> = tr.iter().map(|t| t.done).collect();
        let (mut adv, ret) =
            compute_gae(&rewards, &values, &dones, bootstrap_value, self.config.gamma, self.config.gae_lambda)?;
        normalize(&mut adv);
        Ok(tr
            .iter()
            .zip(adv)
            .zip(ret)
            .map(|((t, advantage), ret)| PpoSample {
                obs: t.obs.clone(),
                action: t.action.clone(),
                old_log_prob: t.log_prob,
                advantage,
                ret,
            })
            .collect())
    }

    /// Loss gradients on `batch` without touching any parameter.
    ///
    /// Loss = `-mean(min(r A, clip(r) A)) + c_v mean((V - R)^2) - c_e H`.
    pub fn minibatch_gradients(&self, batch: &[&PpoSample]) -> Result<MinibatchGrads, RlError> {
        let cfg = &self.config;
        let n = batch.len() as f64;
        let log_std = self.policy.log_std();
        let var: Vec<f64> = log_std.iter().map(|l| (2.0 * l).exp()).collect();

        let mut g_pol = Gradients::zeros_like(&self.policy.mean);
        let mut g_ls = vec![0.0; log_std.len()];
        let mut g_val = Gradients::zeros_like(&self.value);
        let (mut pl, mut vl, mut clipped, mut kl) = (0.0, 0.0, 0usize, 0.0);
        let mut records = Vec::new();

        for s in batch {
            let (mean, cache) = self.policy.mean.forward(&s.obs)?;
            let lp = gaussian_log_prob(&mean, log_std, &s.action);
            let ratio = (lp - s.old_log_prob).exp();
            let unclipped = ratio * s.advantage;
            let clipped_term = ratio.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * s.advantage;
            let applied = unclipped.min(clipped_term);
            pl -= applied;
            if (ratio - 1.0).abs() > cfg.clip_eps {
                clipped += 1;
            }
            kl += s.old_log_prob - lp;
            if self.record_surrogates {
                records.push(SurrogateRecord { ratio, advantage: s.advantage, applied });
            }

            // d(-applied)/d(log_prob); zero where the clipped branch is the minimum.
            let d_lp = if unclipped <= clipped_term { -s.advantage * ratio } else { 0.0 };
            if d_lp != 0.0 {
                let out: Vec<f64> = (0..mean.len()).map(|k| d_lp * (s.action[k] - mean[k]) / var[k] / n).collect();
                g_pol.add_assign(&self.policy.mean.backward(&cache, &out)?);
                for k in 0..g_ls.len() {
                    let z2 = (s.action[k] - mean[k]).powi(2) / var[k];
                    g_ls[k] += d_lp * (z2 - 1.0) / n;
                }
            }

            let (v, vcache) = self.value.forward(&s.obs)?;
            let err = v[0] - s.ret;
            vl += err * err;
            g_val.add_assign(&self.value.backward(&vcache, &[2.0 * cfg.value_coef * err / n])?);
        }
        for g in &mut g_ls {
            *g -= cfg.entropy_coef;
        }

        Ok(MinibatchGrads {
            policy: g_pol,
            log_std: g_ls,
            value: g_val,
            policy_loss: pl / n,
            value_loss: vl / n,
            clip_fraction: clipped as f64 / n,
            approx_kl: kl / n,
            records,
        })
    }

    /// Runs `epochs` passes of shuffled minibatch updates over the rollout.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        buffer: &RolloutBuffer,
        bootstrap_value: f64,
        rng: &mut R,
    ) -> Result<UpdateStats, RlError> {
        let samples = self.prepare(buffer, bootstrap_value)?;
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mb = self.config.minibatch.min(samples.len());
        let mut stats = UpdateStats::default();
        let mut batches = 0usize;

        for _ in 0..self.config.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(mb) {
                let batch: Vec<&PpoSample> = chunk.iter().map(|&i| &samples[i]).collect();
                let mut g = self.minibatch_gradients(&batch)?;
                let entropy = self.policy.entropy();
                let loss = g.policy_loss + self.config.value_coef * g.value_loss - self.config.entropy_coef * entropy;
                if !loss.is_finite() {
                    return Err(RlError::NonFiniteLoss(loss));
                }
                clip_global_norm(&mut [&mut g.policy.0, &mut g.log_std, &mut g.value.0], self.config.max_grad_norm);
                self.policy_opt.step(self.policy.mean.params_mut(), &g.policy.0)?;
                self.log_std_opt.step(self.policy.log_std_mut(), &g.log_std)?;
                self.policy.clamp_log_std();
                self.value_opt.step(self.value.params_mut(), &g.value.0)?;

                stats.policy_loss += g.policy_loss;
                stats.value_loss += g.value_loss;
                stats.entropy += entropy;
                stats.clip_fraction += g.clip_fraction;
                stats.approx_kl += g.approx_kl;
                stats.surrogates.extend(g.records);
                batches += 1;
            }
        }
        stats.average_over(batches);
        Ok(stats)
    }
}

pub fn ppo_update<R: Rng + ?Sized>(
    agent: &mut PpoAgent,
    buffer: &RolloutBuffer,
    bootstrap_value: f64,
    rng: &mut R,
) -> Result<UpdateStats, RlError> {
    agent.update(buffer, bootstrap_value, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::buffer::Transition;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn filled_buffer(agent: &PpoAgent, rng: &mut ChaCha8Rng, n: usize) -> RolloutBuffer {
        let mut buf = RolloutBuffer::new(n);
        for i in 0..n {
            let obs = vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()];
            let (a, lp, v) = agent.act(&obs, rng).unwrap();
            let reward = -a[0].abs() + 0.1 * obs[0];
            buf.push(Transition {
                next_obs: obs.clone(),
                obs,
                action: a,
                reward,
                done: i % 7 == 6,
                log_prob: lp,
                value: v,
            });
        }
        buf
    }

    #[test]
    fn first_minibatch_gradient_is_vanilla_policy_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let agent = PpoAgent::new(2, 1, PpoConfig::default(), &mut rng);
        let buf = filled_buffer(&agent, &mut rng, 32);
        let samples = agent.prepare(&buf, 0.0).unwrap();
        let batch: Vec<&PpoSample> = samples.iter().collect();
        let g = agent.minibatch_gradients(&batch).unwrap();
        assert_eq!(g.clip_fraction, 0.0);

        // -mean(A * grad log pi), accumulated independently.
        let mut expected = Gradients::zeros_like(&agent.policy.mean);
        let var = (2.0 * agent.policy.log_std()[0]).exp();
        for s in &samples {
            let (mean, cache) = agent.policy.mean.forward(&s.obs).unwrap();
            let d = -s.advantage * (s.action[0] - mean[0]) / var / samples.len() as f64;
            expected.add_assign(&agent.policy.mean.backward(&cache, &[d]).unwrap());
        }
        for (a, b) in g.policy.0.iter().zip(&expected.0) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_advantages_give_zero_policy_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let agent = PpoAgent::new(2, 1, PpoConfig::default(), &mut rng);
        let mut samples = agent.prepare(&filled_buffer(&agent, &mut rng, 16), 0.0).unwrap();
        let mut adv = vec![4.2; samples.len()];
        normalize(&mut adv);
        for (s, a) in samples.iter_mut().zip(adv) {
            s.advantage = a;
        }
        let batch: Vec<&PpoSample> = samples.iter().collect();
        let g = agent.minibatch_gradients(&batch).unwrap();
        assert_eq!(g.policy_loss, 0.0);
        assert!(g.policy.0.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn applied_surrogate_is_the_analytic_min() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut agent =
            PpoAgent::new(2, 1, PpoConfig { epochs: 4, minibatch: 8, lr: 1e-2, ..PpoConfig::default() }, &mut rng);
        agent.record_surrogates = true;
        let buf = filled_buffer(&agent, &mut rng, 32);
        let stats = agent.update(&buf, 0.0, &mut rng).unwrap();
        assert_eq!(stats.surrogates.len(), 4 * 32);
        let eps = agent.config.clip_eps;
        let mut saw_clip = false;
        for r in &stats.surrogates {
            let analytic = (r.ratio * r.advantage).min(r.ratio.clamp(1.0 - eps, 1.0 + eps) * r.advantage);
            assert_eq!(r.applied, analytic);
            saw_clip |= (r.ratio - 1.0).abs() > eps;
        }
        assert!(saw_clip, "large learning rate should push some ratios outside the clip range");
    }

    #[test]
    fn empty_buffer_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut agent = PpoAgent::new(2, 1, PpoConfig::default(), &mut rng);
        let buf = RolloutBuffer::new(4);
        assert!(matches!(agent.update(&buf, 0.0, &mut rng), Err(RlError::EmptyBuffer)));
    }
}
