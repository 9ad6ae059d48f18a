//! Hybrid actor-critic: a shared tanh encoder feeding a categorical movement
//! head and a diagonal Gaussian head, plus a separate critic.

use std::f64::consts::{E, PI};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamHyper};
use super::mlp::Mlp;
use crate::env::N_MOVES;
use crate::{Error, Result};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub encoder: Adam,
    pub discrete: Adam,
    pub mean: Adam,
    pub log_std: Adam,
    pub critic: Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParameters {
    pub encoder: Mlp,
    pub discrete_head: Mlp,
    pub mean_head: Mlp,
    /// State-independent log standard deviation per continuous dimension.
    pub log_std: Vec<f64>,
    pub critic: Mlp,
    pub optimizer: OptimizerState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub logits: Vec<f64>,
    pub means: Vec<f64>,
    pub log_stds: Vec<f64>,
    pub value: f64,
}

/// Parameter gradients, laid out like [`PolicyParameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub encoder: Vec<f64>,
    pub discrete: Vec<f64>,
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    pub critic: Vec<f64>,
}

impl Grads {
    pub fn zeros_like(p: &PolicyParameters) -> Self {
        Self {
            encoder: vec![0.0; p.encoder.n_params()],
            discrete: vec![0.0; p.discrete_head.n_params()],
            mean: vec![0.0; p.mean_head.n_params()],
            log_std: vec![0.0; p.log_std.len()],
            critic: vec![0.0; p.critic.n_params()],
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        [&self.encoder, &self.discrete, &self.mean, &self.log_std, &self.critic]
            .into_iter()
            .flat_map(|v| v.iter().copied())
            .collect()
    }

    fn all_finite(&self) -> bool {
        self.flat().iter().all(|g| g.is_finite())
    }
}

impl PolicyParameters {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, hidden: usize, init_log_std: f64, rng: &mut R) -> Self {
        let encoder = Mlp::new(&[state_dim, hidden, hidden], true, 5.0 / 3.0, rng);
        let discrete_head = Mlp::new(&[hidden, N_MOVES], false, 0.01, rng);
        let mean_head = Mlp::new(&[hidden, action_dim], false, 0.01, rng);
        let critic = Mlp::new(&[state_dim, hidden, hidden, 1], false, 1.0, rng);
        let log_std = vec![init_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX); action_dim];
        let optimizer = OptimizerState {
            encoder: Adam::new(encoder.n_params()),
            discrete: Adam::new(discrete_head.n_params()),
            mean: Adam::new(mean_head.n_params()),
            log_std: Adam::new(action_dim),
            critic: Adam::new(critic.n_params()),
        };
        Self {
            encoder,
            discrete_head,
            mean_head,
            log_std,
            critic,
            optimizer,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    /// All trainable parameters, in gradient layout order.
    pub fn flat(&self) -> Vec<f64> {
        [
            &self.encoder.params,
            &self.discrete_head.params,
            &self.mean_head.params,
            &self.log_std,
            &self.critic.params,
        ]
        .into_iter()
        .flat_map(|v| v.iter().copied())
        .collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut rest = flat;
        for dst in [
            &mut self.encoder.params,
            &mut self.discrete_head.params,
            &mut self.mean_head.params,
            &mut self.log_std,
            &mut self.critic.params,
        ] {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        }
        assert!(rest.is_empty(), "flat parameter vector has the wrong length");
    }

    pub fn is_finite(&self) -> bool {
        self.flat().iter().all(|p| p.is_finite())
    }

    fn check_state(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.state_dim() {
            return Err(Error::Validation(format!(
                "state has {} entries, policy expects {}",
                state.len(),
                self.state_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, state: &[f64]) -> Result<PolicyOutput> {
        self.check_state(state)?;
        let h = self.encoder.forward(state);
        Ok(PolicyOutput {
            logits: self.discrete_head.forward(h.output()).output().to_vec(),
            means: self.mean_head.forward(h.output()).output().to_vec(),
            log_stds: self.log_std.iter().map(|l| l.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect(),
            value: self.critic.forward(state).output()[0],
        })
    }

    pub fn value(&self, state: &[f64]) -> Result<f64> {
        self.check_state(state)?;
        Ok(self.critic.forward(state).output()[0])
    }

    /// One Adam step on every parameter group, then the log-std projection.
    pub fn apply(&mut self, g: &Grads, lr_discrete: f64, lr_continuous: f64, lr_critic: f64, base: AdamHyper) {
        let with = |lr| AdamHyper { lr, ..base };
        // The shared encoder follows the continuous head's rate.
        self.optimizer.encoder.step(&mut self.encoder.params, &g.encoder, &with(lr_continuous));
        self.optimizer.discrete.step(&mut self.discrete_head.params, &g.discrete, &with(lr_discrete));
        self.optimizer.mean.step(&mut self.mean_head.params, &g.mean, &with(lr_continuous));
        self.optimizer.log_std.step(&mut self.log_std, &g.log_std, &with(lr_continuous));
        self.optimizer.critic.step(&mut self.critic.params, &g.critic, &with(lr_critic));
        for l in &mut self.log_std {
            *l = l.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }
}

pub fn forward_policy(params: &PolicyParameters, state: &[f64]) -> Result<PolicyOutput> {
    params.forward(state)
}

pub fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(z);
    z.iter().map(|v| (v - lse).exp()).collect()
}

pub fn categorical_log_prob(logits: &[f64], i: usize) -> f64 {
    logits[i] - log_sum_exp(logits)
}

pub fn categorical_entropy(logits: &[f64]) -> f64 {
    let lse = log_sum_exp(logits);
    -logits.iter().map(|z| (z - lse).exp() * (z - lse)).sum::<f64>()
}

pub fn gaussian_log_density(x: &[f64], means: &[f64], log_stds: &[f64]) -> f64 {
    let c = 0.5 * (2.0 * PI).ln();
    x.iter()
        .zip(means)
        .zip(log_stds)
        .map(|((x, m), l)| {
            let z = (x - m) / l.exp();
            -0.5 * z * z - l - c
        })
        .sum()
}

pub fn gaussian_entropy(log_stds: &[f64]) -> f64 {
    let c = 0.5 * (2.0 * PI * E).ln();
    log_stds.iter().map(|l| l + c).sum()
}

/// A stochastic draw from the hybrid policy. `logp_c` is the density of the
/// unsquashed Gaussian sample.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridSample {
    pub movement: usize,
    pub raw: Vec<f64>,
    pub logp_d: f64,
    pub logp_c: f64,
    pub value: f64,
}

pub fn sample_hybrid<R: Rng + ?Sized>(params: &PolicyParameters, state: &[f64], rng: &mut R) -> Result<HybridSample> {
    let out = params.forward(state)?;
    let probs = softmax(&out.logits);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut movement = probs.len() - 1;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            movement = i;
            break;
        }
    }
    let raw: Vec<f64> = out
        .means
        .iter()
        .zip(&out.log_stds)
        .map(|(m, l)| {
            let z: f64 = rng.sample(StandardNormal);
            m + l.exp() * z
        })
        .collect();
    Ok(HybridSample {
        movement,
        logp_d: categorical_log_prob(&out.logits, movement),
        logp_c: gaussian_log_density(&raw, &out.means, &out.log_stds),
        raw,
        value: out.value,
    })
}

/// Deterministic action: most likely move (lowest index on ties) and the means.
pub fn greedy_action(params: &PolicyParameters, state: &[f64]) -> Result<(usize, Vec<f64>)> {
    let out = params.forward(state)?;
    let mut best = 0;
    for (i, z) in out.logits.iter().enumerate() {
        if *z > out.logits[best] {
            best = i;
        }
    }
    Ok((best, out.means))
}

pub fn clip(ratio: f64, epsilon: f64) -> f64 {
    ratio.clamp(1.0 - epsilon, 1.0 + epsilon)
}

pub fn clipped_surrogate(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    (ratio * advantage).min(clip(ratio, epsilon) * advantage)
}

/// d(clipped surrogate)/d(ratio): the advantage where the unclipped branch is
/// active, zero where the clip binds.
pub fn clipped_surrogate_grad(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let unclipped = ratio * advantage;
    let clipped = clip(ratio, epsilon) * advantage;
    if unclipped <= clipped {
        advantage
    } else {
        0.0
    }
}

/// One training example with its behavior-policy log-probabilities.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub state: &'a [f64],
    pub movement: usize,
    pub raw: &'a [f64],
    pub logp_d_old: f64,
    pub logp_c_old: f64,
    pub advantage: f64,
    pub value_target: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct LossWeights {
    pub epsilon: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub policy_loss_d: f64,
    pub policy_loss_c: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub total: f64,
}

/// Minibatch objective to minimize:
/// `-mean(surr_d) - mean(surr_c) - c_ent * mean(H_d + H_c) + c_v * mean((V - R)^2)`,
/// with its gradient.
pub fn loss_and_grad(params: &PolicyParameters, batch: &[Sample<'_>], w: &LossWeights) -> Result<(LossStats, Grads)> {
    let mut g = Grads::zeros_like(params);
    let mut st = LossStats::default();
    if batch.is_empty() {
        return Ok((st, g));
    }
    let inv_b = 1.0 / batch.len() as f64;
    let log_stds: Vec<f64> = params.log_std.iter().map(|l| l.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect();
    let h_c = gaussian_entropy(&log_stds);
    let hidden = params.encoder.output_dim();
    let mut clipped = 0usize;

    for s in batch {
        params.check_state(s.state)?;
        let enc = params.encoder.forward(s.state);
        let h = enc.output();
        let d_cache = params.discrete_head.forward(h);
        let m_cache = params.mean_head.forward(h);
        let logits = d_cache.output();
        let means = m_cache.output();
        let probs = softmax(logits);
        let h_d = categorical_entropy(logits);

        let logp_d = categorical_log_prob(logits, s.movement);
        let logp_c = gaussian_log_density(s.raw, means, &log_stds);
        let r_d = (logp_d - s.logp_d_old).exp();
        let r_c = (logp_c - s.logp_c_old).exp();
        let a = s.advantage;

        st.policy_loss_d -= clipped_surrogate(r_d, a, w.epsilon) * inv_b;
        st.policy_loss_c -= clipped_surrogate(r_c, a, w.epsilon) * inv_b;
        st.entropy += (h_d + h_c) * inv_b;
        st.approx_kl += ((s.logp_d_old - logp_d) + (s.logp_c_old - logp_c)) * inv_b;
        if (r_d - 1.0).abs() > w.epsilon || (r_c - 1.0).abs() > w.epsilon {
            clipped += 1;
        }

        // dL/dlogp for each head.
        let gl_d = -clipped_surrogate_grad(r_d, a, w.epsilon) * r_d * inv_b;
        let gl_c = -clipped_surrogate_grad(r_c, a, w.epsilon) * r_c * inv_b;

        let dz: Vec<f64> = probs
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let onehot = if i == s.movement { 1.0 } else { 0.0 };
                let d_ent = -p * ((logits[i] - log_sum_exp(logits)) + h_d);
                gl_d * (onehot - p) - w.entropy_coef * inv_b * d_ent
            })
            .collect();
        let mut dmu = vec![0.0; means.len()];
        for (k, ((x, m), l)) in s.raw.iter().zip(means).zip(&log_stds).enumerate() {
            let var = (2.0 * l).exp();
            let diff = x - m;
            dmu[k] = gl_c * diff / var;
            let in_range = params.log_std[k] > LOG_STD_MIN && params.log_std[k] < LOG_STD_MAX;
            if in_range {
                g.log_std[k] += gl_c * (diff * diff / var - 1.0);
            }
        }

        let mut dh = vec![0.0; hidden];
        let gd = params.discrete_head.backward(&d_cache, &dz, &mut g.discrete);
        let gm = params.mean_head.backward(&m_cache, &dmu, &mut g.mean);
        for ((o, a), b) in dh.iter_mut().zip(&gd).zip(&gm) {
            *o = a + b;
        }
        params.encoder.backward(&enc, &dh, &mut g.encoder);

        let c_cache = params.critic.forward(s.state);
        let v = c_cache.output()[0];
        let err = v - s.value_target;
        st.value_loss += err * err * inv_b;
        params.critic.backward(&c_cache, &[2.0 * w.value_coef * inv_b * err], &mut g.critic);
    }
    for (k, l) in params.log_std.iter().enumerate() {
        if *l > LOG_STD_MIN && *l < LOG_STD_MAX {
            g.log_std[k] -= w.entropy_coef;
        }
    }
    st.clip_fraction = clipped as f64 * inv_b;
    st.total = st.policy_loss_d + st.policy_loss_c - w.entropy_coef * st.entropy + w.value_coef * st.value_loss;
    if !st.total.is_finite() || !g.all_finite() {
        return Err(Error::NonFinite(format!(
            "loss {} (policy {}, {}; value {})",
            st.total, st.policy_loss_d, st.policy_loss_c, st.value_loss
        )));
    }
    Ok((st, g))
}
