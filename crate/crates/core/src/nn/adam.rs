use serde::{Deserialize, Serialize};

use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// Moment estimates for one flat parameter buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(n_params: usize, config: AdamConfig) -> Self {
        Self { m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0, config }
    }

    /// One bias-corrected Adam update of `params` in place.
    ///
    /// Gradients are checked before anything is touched, so a rejected step
    /// leaves both the parameters and the moments unchanged.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NnError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NnError::DimensionMismatch { expected: self.m.len(), got: grads.len() });
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(NnError::NonFiniteGradient { index: i });
        }
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState) -> Result<(), NnError> {
    state.step(params, grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![0.5, -1.0];
        let mut s = AdamState::new(2, AdamConfig::default());
        s.step(&mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(p, vec![0.5, -1.0]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        // m_hat = g, v_hat = g^2 at t = 1, so the update is -lr * g / (|g| + eps).
        let mut p = vec![0.0];
        let mut s = AdamState::new(1, AdamConfig::with_lr(0.1));
        s.step(&mut p, &[1.0]).unwrap();
        let expected = -0.1 * 1.0 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
        assert!((p[0] + 0.1).abs() < 1e-8);
    }

    #[test]
    fn non_finite_gradient_rejected_without_side_effects() {
        let mut p = vec![1.0, 2.0];
        let mut s = AdamState::new(2, AdamConfig::default());
        let err = s.step(&mut p, &[0.1, f64::NAN]).unwrap_err();
        assert_eq!(err, NnError::NonFiniteGradient { index: 1 });
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(s.t, 0);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut p = vec![0.3, -0.2, 0.9];
            let mut s = AdamState::new(3, AdamConfig::default());
            for k in 0..50 {
                let g: Vec<f64> = p.iter().map(|x| 2.0 * x + 0.01 * k as f64).collect();
                s.step(&mut p, &g).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn permutation_invariant() {
        let perm = [2usize, 0, 3, 1];
        let mut p: Vec<f64> = vec![0.1, -0.4, 0.7, 1.3];
        let mut q: Vec<f64> = perm.iter().map(|&i| p[i]).collect();
        let mut sp = AdamState::new(4, AdamConfig::with_lr(0.01));
        let mut sq = AdamState::new(4, AdamConfig::with_lr(0.01));
        for k in 0..20 {
            let gp: Vec<f64> = p.iter().enumerate().map(|(i, x)| x * x - 0.1 * (i + k) as f64).collect();
            let gq: Vec<f64> = perm.iter().map(|&i| gp[i]).collect();
            sp.step(&mut p, &gp).unwrap();
            sq.step(&mut q, &gq).unwrap();
        }
        for (j, &i) in perm.iter().enumerate() {
            assert_eq!(q[j].to_bits(), p[i].to_bits());
        }
    }
}
