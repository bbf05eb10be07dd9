use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NnError;

/// Dense feed-forward network: tanh on hidden layers, identity on the output.
///
/// Parameters live in one flat buffer, layer by layer, each layer storing its
/// `out x in` weight matrix row-major followed by its bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Flat gradient buffer with the same layout as [`Mlp`] parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<f64>);

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Gradients(vec![0.0; net.num_params()])
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        for a in &mut self.0 {
            *a *= k;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|g| g.is_finite())
    }
}

/// Values recorded by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input of every layer; `inputs[0]` is the network input.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of every layer.
    pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn pre_activations(&self) -> &[Vec<f64>] {
        &self.pre
    }
}

impl Mlp {
    /// All-zero network with the given layer sizes `[n_0, ..., n_L]`.
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an mlp needs at least input and output sizes");
        assert!(sizes.iter().all(|&n| n > 0), "layer sizes must be positive");
        let n = sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum();
        Self { sizes: sizes.to_vec(), params: vec![0.0; n] }
    }

    /// Glorot-uniform weights, zero biases. The final layer is scaled by
    /// `out_gain` so fresh policies start close to their bias.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], out_gain: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        let layers = net.num_layers();
        for l in 0..layers {
            let (n_in, n_out) = (net.sizes[l], net.sizes[l + 1]);
            let limit = (6.0 / (n_in + n_out) as f64).sqrt();
            let gain = if l + 1 == layers { out_gain } else { 1.0 };
            let (w, _) = net.layer_range(l);
            for p in &mut net.params[w] {
                *p = gain * rng.random_range(-limit..limit);
            }
        }
        net
    }

    pub fn from_parts(sizes: &[usize], params: Vec<f64>) -> Result<Self, NnError> {
        let shell = Self::zeros(sizes);
        if params.len() != shell.params.len() {
            return Err(NnError::DimensionMismatch { expected: shell.params.len(), got: params.len() });
        }
        Ok(Self { sizes: sizes.to_vec(), params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offset(&self, layer: usize) -> usize {
        self.sizes[..=layer].windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    /// Index ranges of the weights and bias of `layer` inside the flat buffer.
    pub fn layer_range(&self, layer: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let start = self.offset(layer);
        let (n_in, n_out) = (self.sizes[layer], self.sizes[layer + 1]);
        let w_end = start + n_in * n_out;
        (start..w_end, w_end..w_end + n_out)
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.params[self.layer_range(layer).0]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        &self.params[self.layer_range(layer).1]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        let r = self.layer_range(layer).0;
        &mut self.params[r]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut [f64] {
        let r = self.layer_range(layer).1;
        &mut self.params[r]
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache), NnError> {
        self.check_input(input)?;
        let layers = self.num_layers();
        let mut inputs = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers);
        let mut x = input.to_vec();
        for l in 0..layers {
            let z = self.affine(l, &x);
            let next = if l + 1 == layers { z.clone() } else { z.iter().map(|v| v.tanh()).collect() };
            inputs.push(x);
            pre.push(z);
            x = next;
        }
        Ok((x, ForwardCache { inputs, pre }))
    }

    /// Forward pass without recording a cache.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        self.check_input(input)?;
        let layers = self.num_layers();
        let mut x = input.to_vec();
        for l in 0..layers {
            let mut z = self.affine(l, &x);
            if l + 1 < layers {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            x = z;
        }
        Ok(x)
    }

    fn check_input(&self, input: &[f64]) -> Result<(), NnError> {
        if input.len() != self.input_dim() {
            return Err(NnError::DimensionMismatch { expected: self.input_dim(), got: input.len() });
        }
        Ok(())
    }

    fn affine(&self, layer: usize, x: &[f64]) -> Vec<f64> {
        let (w, b) = (self.weights(layer), self.bias(layer));
        let n_in = x.len();
        b.iter()
            .enumerate()
            .map(|(j, bj)| bj + w[j * n_in..(j + 1) * n_in].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    pub fn backward(&self, cache: &ForwardCache, output_grad: &[f64]) -> Result<Gradients, NnError> {
        self.backward_with_input(cache, output_grad).map(|(g, _)| g)
    }

    /// Reverse accumulation; also returns the gradient with respect to the input.
    pub fn backward_with_input(
        &self,
        cache: &ForwardCache,
        output_grad: &[f64],
    ) -> Result<(Gradients, Vec<f64>), NnError> {
        if output_grad.len() != self.output_dim() {
            return Err(NnError::DimensionMismatch { expected: self.output_dim(), got: output_grad.len() });
        }
        if cache.inputs.len() != self.num_layers() || cache.inputs[0].len() != self.input_dim() {
            return Err(NnError::DimensionMismatch { expected: self.num_layers(), got: cache.inputs.len() });
        }
        let mut grads = Gradients::zeros_like(self);
        // Gradient with respect to the pre-activation of the current layer.
        let mut delta = output_grad.to_vec();
        for l in (0..self.num_layers()).rev() {
            let x = &cache.inputs[l];
            let n_in = x.len();
            let (wr, br) = self.layer_range(l);
            for (j, dj) in delta.iter().enumerate() {
                grads.0[br.start + j] = *dj;
                let row = &mut grads.0[wr.start + j * n_in..wr.start + (j + 1) * n_in];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g = dj * xi;
                }
            }
            let w = self.weights(l);
            let mut dx = vec![0.0; n_in];
            for (j, dj) in delta.iter().enumerate() {
                for (i, d) in dx.iter_mut().enumerate() {
                    *d += w[j * n_in + i] * dj;
                }
            }
            if l > 0 {
                // x = tanh(pre[l - 1]), so dpre = dx * (1 - x^2).
                for (d, xi) in dx.iter_mut().zip(x) {
                    *d *= 1.0 - xi * xi;
                }
            }
            delta = dx;
        }
        Ok((grads, delta))
    }

    /// `self <- (1 - tau) * self + tau * source`.
    pub fn soft_update_from(&mut self, source: &Mlp, tau: f64) {
        assert_eq!(self.sizes, source.sizes, "soft update between mismatched networks");
        for (t, s) in self.params.iter_mut().zip(&source.params) {
            *t = (1.0 - tau) * *t + tau * s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Scalar-by-scalar re-evaluation that shares nothing with `forward`.
    fn oracle_forward(net: &Mlp, input: &[f64]) -> Vec<f64> {
        let mut x = input.to_vec();
        for l in 0..net.num_layers() {
            let n_in = net.sizes()[l];
            let n_out = net.sizes()[l + 1];
            let (w, b) = (net.weights(l), net.bias(l));
            let mut y = vec![0.0; n_out];
            for j in 0..n_out {
                let mut acc = b[j];
                for i in 0..n_in {
                    acc += w[j * n_in + i] * x[i];
                }
                y[j] = if l + 1 < net.num_layers() { acc.tanh() } else { acc };
            }
            x = y;
        }
        x
    }

    #[test]
    fn zero_weights_output_bias() {
        let mut net = Mlp::zeros(&[3, 5, 2]);
        net.bias_mut(1).copy_from_slice(&[0.7, -1.3]);
        let (y, _) = net.forward(&[1.0, -2.0, 9.0]).unwrap();
        assert_eq!(y, vec![0.7, -1.3]);
    }

    #[test]
    fn identity_single_layer() {
        let mut net = Mlp::zeros(&[3, 3]);
        for i in 0..3 {
            net.weights_mut(0)[i * 3 + i] = 1.0;
        }
        let x = [0.25, -4.0, 3.5];
        assert_eq!(net.forward(&x).unwrap().0, x.to_vec());
    }

    #[test]
    fn forward_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = Mlp::init(&[4, 8, 2], 1.0, &mut rng);
        for b in net.bias_mut(0) {
            *b = rng.random_range(-0.5..0.5);
        }
        let x = [0.3, -0.7, 1.1, 0.05];
        let (y, cache) = net.forward(&x).unwrap();
        let o = oracle_forward(&net, &x);
        for (a, b) in y.iter().zip(&o) {
            assert!((a - b).abs() < 1e-14);
        }
        assert_eq!(cache.pre_activations().len(), 2);
        assert_eq!(net.predict(&x).unwrap(), y);
    }

    #[test]
    fn dimension_mismatch() {
        let net = Mlp::zeros(&[4, 2]);
        assert!(matches!(net.forward(&[1.0]), Err(NnError::DimensionMismatch { expected: 4, got: 1 })));
        let (_, cache) = net.forward(&[0.0; 4]).unwrap();
        assert!(net.backward(&cache, &[1.0]).is_err());
    }

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::init(&[4, 8, 2], 1.0, &mut rng);
        let (_, cache) = net.forward(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        let g = net.backward(&cache, &[0.0, 0.0]).unwrap();
        assert!(g.0.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn scalar_chain_rule() {
        // y = w2 * tanh(w1 * x + b1) + b2
        let (w1, b1, w2, b2, x) = (0.8, -0.3, 1.7, 0.2, 0.6);
        let net = Mlp::from_parts(&[1, 1, 1], vec![w1, b1, w2, b2]).unwrap();
        let (_, cache) = net.forward(&[x]).unwrap();
        let g = net.backward(&cache, &[1.0]).unwrap();
        let h = (w1 * x + b1).tanh();
        let dh = 1.0 - h * h;
        let expected = [w2 * dh * x, w2 * dh, h, 1.0];
        for (a, b) in g.0.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn soft_update_interpolates() {
        let mut a = Mlp::from_parts(&[1, 1], vec![1.0, 2.0]).unwrap();
        let b = Mlp::from_parts(&[1, 1], vec![3.0, 6.0]).unwrap();
        a.soft_update_from(&b, 0.25);
        assert_eq!(a.params(), &[1.5, 3.0]);
    }
}
