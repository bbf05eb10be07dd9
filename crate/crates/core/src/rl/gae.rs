//! Generalized advantage estimation.
//!
//! `delta_t = r_t + gamma * V_{t+1} * (1 - done_t) - V_t`
//! `A_t = delta_t + gamma * lambda * (1 - done_t) * A_{t+1}`
//!
//! `V_T` is the bootstrap value of the state following the last transition.

use super::RlError;

pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), RlError> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(RlError::LengthMismatch { rewards: n, values: values.len(), dones: dones.len() });
    }
    if !(gamma > 0.0 && gamma <= 1.0) || !(0.0..=1.0).contains(&lambda) {
        return Err(RlError::InvalidConfig(format!("gamma {gamma} / lambda {lambda} out of range")));
    }

    let mut advantages = vec![0.0; n];
    let mut next_value = bootstrap_value;
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        advantages[t] = next_adv;
        next_value = values[t];
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((advantages, returns))
}

/// Shifts and scales to zero mean and unit standard deviation (floor `1e-8`).
/// A constant vector maps to exact zeros.
pub fn normalize(advantages: &mut [f64]) {
    let Some(&first) = advantages.first() else {
        return;
    };
    if advantages.iter().all(|&a| a == first) {
        advantages.fill(0.0);
        return;
    }
    let n = advantages.len() as f64;
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    for a in advantages.iter_mut() {
        *a = (*a - mean) / std;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn undiscounted_zero_values_give_reward_to_go() {
        let r = [1.0, 2.0, 3.0, 4.0];
        let (adv, ret) = compute_gae(&r, &[0.0; 4], &[false; 4], 0.0, 1.0, 1.0).unwrap();
        assert_eq!(adv, vec![10.0, 9.0, 7.0, 4.0]);
        assert_eq!(ret, adv);
    }

    #[test]
    fn single_step_definition() {
        let (adv, ret) = compute_gae(&[0.5], &[0.2], &[false], 1.5, 0.9, 0.95).unwrap();
        assert!((adv[0] - (0.5 + 0.9 * 1.5 - 0.2)).abs() < 1e-15);
        assert!((ret[0] - (adv[0] + 0.2)).abs() < 1e-15);
    }

    #[test]
    fn done_cuts_bootstrap() {
        let (adv, _) = compute_gae(&[1.0, 1.0], &[0.0, 0.0], &[true, false], 100.0, 0.9, 0.9).unwrap();
        assert_eq!(adv[0], 1.0);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            compute_gae(&[1.0], &[0.0, 0.0], &[false], 0.0, 0.9, 0.9),
            Err(RlError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn equal_advantages_normalize_to_zero() {
        let mut a = vec![3.0; 5];
        normalize(&mut a);
        assert!(a.iter().all(|x| *x == 0.0));
    }
}
