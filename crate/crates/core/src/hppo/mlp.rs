//! Dense tanh networks with hand-written backpropagation.
//!
//! Parameters live in one flat vector per network (layer by layer, weights
//! row-major `[out][in]` followed by biases) so that optimizers and gradient
//! checks can treat them uniformly.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    /// Apply tanh after the last layer too (encoders), or leave it linear (heads).
    tanh_output: bool,
    pub params: Vec<f64>,
}

/// Activations recorded during a forward pass, input first.
#[derive(Debug, Clone)]
pub struct MlpCache {
    acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn n_params(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Orthogonal-style scaled Gaussian init: weights `N(0, gain^2 / fan_in)`,
    /// zero biases. The last layer uses `out_gain`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], tanh_output: bool, out_gain: f64, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let mut params = Vec::with_capacity(n_params(sizes));
        let n_layers = sizes.len() - 1;
        for (l, w) in sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let gain = if l + 1 == n_layers { out_gain } else { 5.0 / 3.0 };
            let std = gain / (n_in as f64).sqrt();
            for _ in 0..n_in * n_out {
                let z: f64 = rng.sample(StandardNormal);
                params.push(std * z);
            }
            params.extend(std::iter::repeat_n(0.0, n_out));
        }
        Self {
            sizes: sizes.to_vec(),
            tanh_output,
            params,
        }
    }

    pub fn zeros(sizes: &[usize], tanh_output: bool) -> Self {
        Self {
            sizes: sizes.to_vec(),
            tanh_output,
            params: vec![0.0; n_params(sizes)],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Zeroes the weights and biases of the last layer.
    pub fn zero_last_layer(&mut self) {
        let n = self.sizes.len();
        let last = n_params(&self.sizes[n - 2..]);
        let len = self.params.len();
        self.params[len - last..].fill(0.0);
    }

    fn activate(&self, layer: usize) -> bool {
        layer + 2 < self.sizes.len() || self.tanh_output
    }

    pub fn forward(&self, x: &[f64]) -> MlpCache {
        debug_assert_eq!(x.len(), self.sizes[0]);
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.to_vec());
        let mut off = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[off..off + n_in * n_out];
            let bias = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let input = acts.last().unwrap();
            let act = self.activate(l);
            let out: Vec<f64> = weights
                .chunks_exact(n_in)
                .zip(bias)
                .map(|(row, b)| {
                    let z = b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
                    if act {
                        z.tanh()
                    } else {
                        z
                    }
                })
                .collect();
            acts.push(out);
        }
        MlpCache { acts }
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to the input.
    pub fn backward(&self, cache: &MlpCache, grad_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
        debug_assert_eq!(grad.len(), self.params.len());
        let mut offsets = Vec::with_capacity(self.sizes.len() - 1);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        let mut delta = grad_out.to_vec();
        for l in (0..self.sizes.len() - 1).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            if self.activate(l) {
                for (d, y) in delta.iter_mut().zip(&cache.acts[l + 1]) {
                    *d *= 1.0 - y * y;
                }
            }
            let input = &cache.acts[l];
            let o = offsets[l];
            let weights = &self.params[o..o + n_in * n_out];
            let (gw, gb) = grad[o..o + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for ((row, d), b) in gw.chunks_exact_mut(n_in).zip(&delta).zip(gb.iter_mut()) {
                *b += d;
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
            }
            let mut next = vec![0.0; n_in];
            for (row, d) in weights.chunks_exact(n_in).zip(&delta) {
                for (n, w) in next.iter_mut().zip(row) {
                    *n += d * w;
                }
            }
            delta = next;
        }
        delta
    }
}
