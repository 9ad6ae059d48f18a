//! Rollout collection, the clipped-surrogate update and the outer training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::AdamHyper;
use super::advantage::{n_step_advantage, normalize_advantages};
use super::policy::{loss_and_grad, sample_hybrid, LossStats, LossWeights, PolicyParameters, Sample};
use crate::env::{squash_action, squash_log_jacobian, Env, HybridAction, Move};
use crate::seed::{derive_seed, POLICY_INIT, TRAIN_EPISODES};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub discount: f64,
    pub n_step: usize,
    pub clip: f64,
    pub lr_discrete: f64,
    pub lr_continuous: f64,
    pub lr_critic: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub minibatch: usize,
    /// Steps collected per iteration.
    pub horizon: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub iterations: usize,
    pub hidden: usize,
    pub init_log_std: f64,
    pub normalize_advantages: bool,
    /// Multiplies rewards before advantages and value targets are formed.
    pub reward_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            discount: 0.99,
            n_step: 8,
            clip: 0.2,
            lr_discrete: 3e-4,
            lr_continuous: 3e-4,
            lr_critic: 3e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 4,
            minibatch: 256,
            horizon: 1024,
            entropy_coef: 0.01,
            value_coef: 0.5,
            iterations: 200,
            hidden: 64,
            init_log_std: 0.0,
            normalize_advantages: true,
            reward_scale: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return bad("discount must lie in (0, 1]");
        }
        if !(self.clip > 0.0) {
            return bad("clip must be positive");
        }
        if self.n_step == 0 || self.n_step > self.horizon {
            return bad("n_step must lie in [1, horizon]");
        }
        if self.minibatch == 0 || self.epochs == 0 || self.hidden == 0 {
            return bad("minibatch, epochs and hidden must be positive");
        }
        for lr in [self.lr_discrete, self.lr_continuous, self.lr_critic] {
            if !(lr > 0.0) {
                return bad("learning rates must be positive");
            }
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps >= 0.0) {
            return bad("invalid Adam constants");
        }
        if !(self.entropy_coef >= 0.0) || !(self.value_coef >= 0.0) || !(self.reward_scale > 0.0) {
            return bad("coefficients must be nonnegative and reward_scale positive");
        }
        Ok(())
    }

    fn adam(&self) -> AdamHyper {
        AdamHyper {
            lr: self.lr_continuous,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    fn weights(&self) -> LossWeights {
        LossWeights {
            epsilon: self.clip,
            entropy_coef: self.entropy_coef,
            value_coef: self.value_coef,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    /// Observation fed to the networks.
    pub state: Vec<f64>,
    pub movement: usize,
    /// Unsquashed continuous sample.
    pub raw: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub logp_d: f64,
    /// Pre-squash Gaussian log-density.
    pub logp_c: f64,
    /// `log |d squash / d raw|`; `logp_c - log_jacobian` is the density of
    /// the executed action inside the constraint boxes.
    pub log_jacobian: f64,
    pub value: f64,
    pub done: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    pub transitions: Vec<Transition>,
    /// Critic estimate of the state after the final transition.
    pub last_value: f64,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn clear(&mut self) {
        self.transitions.clear();
        self.last_value = 0.0;
    }

    /// Advantages and value targets for the stored steps.
    pub fn advantages(&self, cfg: &TrainConfig) -> (Vec<f64>, Vec<f64>) {
        let rewards: Vec<f64> = self.transitions.iter().map(|t| t.reward * cfg.reward_scale).collect();
        let values: Vec<f64> = self.transitions.iter().map(|t| t.value).collect();
        let dones: Vec<bool> = self.transitions.iter().map(|t| t.done).collect();
        let adv = n_step_advantage(&rewards, &values, &dones, self.last_value, cfg.discount, cfg.n_step);
        let targets = adv.iter().zip(&values).map(|(a, v)| a + v).collect();
        (adv, targets)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss_d: f64,
    pub policy_loss_c: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub minibatches: usize,
}

#[derive(Debug, Clone)]
pub struct UpdateReport {
    pub stats: UpdateStats,
    /// Behavior policy, as it was before the first epoch.
    pub snapshot: PolicyParameters,
}

/// Several epochs of shuffled minibatch steps on the clipped objectives.
/// On a non-finite loss the parameters are restored and the error returned.
/// The buffer is cleared in every case.
pub fn update(params: &mut PolicyParameters, buffer: &mut RolloutBuffer, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<UpdateReport> {
    let snapshot = params.clone();
    let result = run_epochs(params, buffer, cfg, rng);
    buffer.clear();
    match result {
        Ok(stats) => Ok(UpdateReport { stats, snapshot }),
        Err(e) => {
            *params = snapshot;
            Err(e)
        }
    }
}

fn run_epochs(params: &mut PolicyParameters, buffer: &RolloutBuffer, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<UpdateStats> {
    let mut stats = UpdateStats::default();
    if buffer.is_empty() {
        return Ok(stats);
    }
    let (mut adv, targets) = buffer.advantages(cfg);
    if cfg.normalize_advantages {
        normalize_advantages(&mut adv);
    }
    let samples: Vec<Sample<'_>> = buffer
        .transitions
        .iter()
        .zip(adv.iter().zip(&targets))
        .map(|(t, (&a, &r))| Sample {
            state: &t.state,
            movement: t.movement,
            raw: &t.raw,
            logp_d_old: t.logp_d,
            logp_c_old: t.logp_c,
            advantage: a,
            value_target: r,
        })
        .collect();
    let weights = cfg.weights();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut acc = LossStats::default();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch) {
            let batch: Vec<Sample<'_>> = chunk.iter().map(|&i| samples[i]).collect();
            let (st, g) = loss_and_grad(params, &batch, &weights)?;
            params.apply(&g, cfg.lr_discrete, cfg.lr_continuous, cfg.lr_critic, cfg.adam());
            if !params.is_finite() {
                return Err(Error::NonFinite("parameters diverged during the update".into()));
            }
            acc.policy_loss_d += st.policy_loss_d;
            acc.policy_loss_c += st.policy_loss_c;
            acc.value_loss += st.value_loss;
            acc.entropy += st.entropy;
            acc.approx_kl += st.approx_kl;
            acc.clip_fraction += st.clip_fraction;
            stats.minibatches += 1;
        }
    }
    let n = stats.minibatches as f64;
    stats.policy_loss_d = acc.policy_loss_d / n;
    stats.policy_loss_c = acc.policy_loss_c / n;
    stats.value_loss = acc.value_loss / n;
    stats.entropy = acc.entropy / n;
    stats.approx_kl = acc.approx_kl / n;
    stats.clip_fraction = acc.clip_fraction / n;
    Ok(stats)
}

/// Executes a raw policy output in the environment's constraint boxes.
pub fn to_env_action(env: &Env, movement: usize, raw: &[f64]) -> Result<HybridAction> {
    let m = Move::from_index(movement).ok_or_else(|| Error::Validation(format!("movement index {movement} out of range")))?;
    let c = squash_action(raw, &env.action_spec(), env.scenario().ris.s_max)?;
    Ok(HybridAction::new(m, c))
}

#[derive(Debug, Clone, Default)]
pub struct RolloutSummary {
    /// Returns of episodes that finished inside the rollout.
    pub episode_returns: Vec<f64>,
    pub mean_step_reward: f64,
    pub mean_sum_rate: f64,
}

/// Restarts `env` and collects `horizon` on-policy steps; episode seeds are
/// drawn from `next_episode`.
pub fn collect_rollout(
    env: &mut Env,
    params: &PolicyParameters,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    next_episode: &mut dyn FnMut() -> u64,
    buffer: &mut RolloutBuffer,
) -> Result<RolloutSummary> {
    buffer.clear();
    let spec = env.action_spec();
    let s_max = env.scenario().ris.s_max;
    let first = env.reset(next_episode())?;
    let mut obs = env.observe(&first);
    let mut summary = RolloutSummary::default();
    let mut ep_return = 0.0;
    let (mut reward_sum, mut rate_sum) = (0.0, 0.0);
    for _ in 0..cfg.horizon {
        let a = sample_hybrid(params, &obs, rng)?;
        let action = to_env_action(env, a.movement, &a.raw)?;
        let out = env.step(&action)?;
        let next_obs = env.observe(&out.next_state);
        ep_return += out.reward;
        reward_sum += out.reward;
        rate_sum += out.rates.r_total;
        buffer.transitions.push(Transition {
            state: obs,
            movement: a.movement,
            log_jacobian: squash_log_jacobian(&a.raw, &spec, s_max),
            raw: a.raw,
            reward: out.reward,
            next_state: next_obs.clone(),
            logp_d: a.logp_d,
            logp_c: a.logp_c,
            value: a.value,
            done: out.done,
        });
        if out.done {
            summary.episode_returns.push(ep_return);
            ep_return = 0.0;
            let s = env.reset(next_episode())?;
            obs = env.observe(&s);
        } else {
            obs = next_obs;
        }
    }
    buffer.last_value = params.value(&obs)?;
    let n = cfg.horizon.max(1) as f64;
    summary.mean_step_reward = reward_sum / n;
    summary.mean_sum_rate = rate_sum / n;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Mean return of the episodes completed in this iteration's rollout
    /// (per-step mean times episode length when none completed).
    pub mean_episode_reward: f64,
    pub mean_step_reward: f64,
    pub mean_sum_rate: f64,
    pub policy_loss_d: f64,
    pub policy_loss_c: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: PolicyParameters,
    pub curve: Vec<IterationRecord>,
}

pub fn initial_params(env: &Env, cfg: &TrainConfig, seed: u64) -> PolicyParameters {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, POLICY_INIT, 0));
    PolicyParameters::new(env.state_dim(), env.action_spec().continuous_dim(), cfg.hidden, cfg.init_log_std, &mut rng)
}

/// Runs `cfg.iterations` rounds of rollout, advantage estimation and update.
pub fn train(env: &mut Env, cfg: &TrainConfig, seed: u64) -> Result<TrainOutput> {
    train_with(env, cfg, seed, |_| {})
}

/// [`train`] with a callback after every iteration.
pub fn train_with(env: &mut Env, cfg: &TrainConfig, seed: u64, mut on_iter: impl FnMut(&IterationRecord)) -> Result<TrainOutput> {
    cfg.validate()?;
    let mut params = initial_params(env, cfg, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut episode = 0u64;
    let mut next_episode = || {
        let s = derive_seed(seed, TRAIN_EPISODES, episode);
        episode += 1;
        s
    };
    let mut buffer = RolloutBuffer::default();
    let mut curve = Vec::with_capacity(cfg.iterations);
    let ep_len = env.config().episode_len as f64;
    for iteration in 0..cfg.iterations {
        let summary = collect_rollout(env, &params, cfg, &mut rng, &mut next_episode, &mut buffer)?;
        let report = update(&mut params, &mut buffer, cfg, &mut rng)?;
        let mean_episode_reward = if summary.episode_returns.is_empty() {
            summary.mean_step_reward * ep_len
        } else {
            summary.episode_returns.iter().sum::<f64>() / summary.episode_returns.len() as f64
        };
        let rec = IterationRecord {
            iteration,
            mean_episode_reward,
            mean_step_reward: summary.mean_step_reward,
            mean_sum_rate: summary.mean_sum_rate,
            policy_loss_d: report.stats.policy_loss_d,
            policy_loss_c: report.stats.policy_loss_c,
            value_loss: report.stats.value_loss,
            entropy: report.stats.entropy,
            approx_kl: report.stats.approx_kl,
            clip_fraction: report.stats.clip_fraction,
        };
        on_iter(&rec);
        curve.push(rec);
    }
    Ok(TrainOutput { params, curve })
}

/// Ratio of the mean of the last tenth of `values` to the mean of the first
/// tenth (at least one entry each).
pub fn improvement_ratio(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let k = (values.len() / 10).max(1);
    let head = values[..k].iter().sum::<f64>() / k as f64;
    let tail = values[values.len() - k..].iter().sum::<f64>() / k as f64;
    Some(tail / head)
}
