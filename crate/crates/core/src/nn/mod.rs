//! Minimal dense-network kernel: forward/backward passes, Gaussian policy
//! heads and Adam. Everything is `f64` and single-threaded.

mod adam;
mod gaussian;
pub mod io;
mod mlp;

use thiserror::Error;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gaussian::{gaussian_entropy, gaussian_log_prob, sample_action, GaussianPolicy, LOG_STD_MAX, LOG_STD_MIN};
pub use mlp::{ForwardCache, Gradients, Mlp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite gradient at flat index {index}")]
    NonFiniteGradient { index: usize },
}

/// Hidden layer widths used by every policy, value and critic network.
pub const HIDDEN: [usize; 2] = [64, 64];

/// `[input, 64, 64, output]`.
pub fn layer_sizes(input: usize, output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend(HIDDEN);
    s.push(output);
    s
}

/// Euclidean norm over several flat gradient buffers taken together.
pub fn global_norm(parts: &[&[f64]]) -> f64 {
    parts.iter().flat_map(|p| p.iter()).map(|g| g * g).sum::<f64>().sqrt()
}

/// Rescales all buffers so their joint norm is at most `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm(parts: &mut [&mut [f64]], max_norm: f64) -> f64 {
    let norm = parts.iter().flat_map(|p| p.iter()).map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        for p in parts.iter_mut() {
            p.iter_mut().for_each(|g| *g *= k);
        }
    }
    norm
}
