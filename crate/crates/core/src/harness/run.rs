//! Controllers, episode rollouts, metric aggregation, sweeps and evaluation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Controller, ExperimentConfig, Fairness, Mode};
use super::oracle::oracle_search;
use crate::env::{ActionSpec, Env, EnvState, HybridAction, Move, ScenarioConfig, N_MOVES};
use crate::hppo::checkpoint::{hash_json, Checkpoint};
use crate::hppo::policy::greedy_action;
use crate::hppo::trainer::{to_env_action, train};
use crate::hppo::{IterationRecord, PolicyParameters};
use crate::network::{self, RateReport};
use crate::seed::{derive_seed, EVAL_EPISODES, SWEEP_REALIZATIONS};
use crate::{Error, Result};

const RANDOM_POLICY: u64 = 0x7261_6e64;

/// Uniform draw inside the action boxes.
pub fn random_action<R: Rng + ?Sized>(spec: &ActionSpec, s_max: f64, rng: &mut R) -> HybridAction {
    let movement = Move::from_index(rng.random_range(0..N_MOVES)).unwrap();
    let phases = (0..spec.n_phase).map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)).collect();
    let lambdas = (0..spec.n_lambda)
        .map(|_| loop {
            let l = rng.random_range(0.5..1.0);
            if l > 0.5 {
                break l;
            }
        })
        .collect();
    let amplification = (0..spec.n_amp)
        .map(|_| if s_max > 1.0 { rng.random_range(1.0..s_max) } else { 1.0 })
        .collect();
    HybridAction {
        movement,
        phases,
        lambdas,
        amplification,
    }
}

/// Orthogonal-access rates for composed links.
pub fn rate_oma(topo: &network::Topology, links: &network::ComposedLinks, radio: &network::RadioConfig) -> RateReport {
    network::oma_rates(topo, links, radio)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: usize,
    pub uav_x: f64,
    pub uav_y: f64,
    pub reward: f64,
    pub sum_rate: f64,
    pub worst_rate: f64,
    pub total_power: f64,
    pub energy_efficiency: f64,
    pub jain: f64,
}

/// Per-realization summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationStats {
    pub seed: u64,
    pub slots: usize,
    pub mean_sum_rate: f64,
    pub mean_energy_efficiency: f64,
    pub mean_jain: f64,
    /// Slots whose worst user fell below `r_min`.
    pub outage_slots: usize,
}

fn slot_metrics(report: &RateReport, p_total: f64, bandwidth: f64) -> Result<(f64, f64)> {
    let ee = network::energy_efficiency(report.r_total, bandwidth, p_total)?;
    let jain = network::jain_fairness(&report.user_rates).unwrap_or(0.0);
    Ok((ee, jain))
}

fn summarize(seed: u64, slots: &[SlotRecord], r_min: f64) -> RealizationStats {
    let n = slots.len().max(1) as f64;
    RealizationStats {
        seed,
        slots: slots.len(),
        mean_sum_rate: slots.iter().map(|s| s.sum_rate).sum::<f64>() / n,
        mean_energy_efficiency: slots.iter().map(|s| s.energy_efficiency).sum::<f64>() / n,
        mean_jain: slots.iter().map(|s| s.jain).sum::<f64>() / n,
        outage_slots: slots.iter().filter(|s| s.worst_rate < r_min).count(),
    }
}

/// Runs one episode from `env.reset(seed)` with `policy` choosing actions.
pub fn run_episode(env: &mut Env, seed: u64, policy: &mut dyn FnMut(&Env, &EnvState) -> Result<HybridAction>) -> Result<Vec<SlotRecord>> {
    let mut state = env.reset(seed)?;
    let bandwidth = env.radio().bandwidth;
    let mut out = Vec::with_capacity(env.config().episode_len);
    loop {
        let a = policy(env, &state)?;
        let step = env.step(&a)?;
        let p = env.total_power();
        let (ee, jain) = slot_metrics(&step.rates, p, bandwidth)?;
        out.push(SlotRecord {
            slot: env.slot(),
            uav_x: env.topology().uav[0],
            uav_y: env.topology().uav[1],
            reward: step.reward,
            sum_rate: step.rates.r_total,
            worst_rate: step.rates.worst_user_rate(),
            total_power: p,
            energy_efficiency: ee,
            jain,
        });
        if step.done {
            return Ok(out);
        }
        state = step.next_state;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub variable: String,
    pub value: f64,
    pub mode: Mode,
    pub controller: String,
    pub fairness: Fairness,
    pub realizations: usize,
    pub mean_sum_rate: f64,
    /// 95% normal-approximation half-width; `None` with fewer than two realizations.
    pub ci95_half_width: Option<f64>,
    pub outage: f64,
    pub energy_efficiency: f64,
    pub jain: f64,
}

/// Sum of values in sorted order, so the result does not depend on the
/// realization order.
fn ordered_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.into_iter().sum()
}

pub struct RowLabel<'a> {
    pub variable: &'a str,
    pub value: f64,
    pub mode: Mode,
    pub controller: &'a str,
    pub fairness: Fairness,
}

/// Mean, confidence half-width, outage, efficiency and fairness over realizations.
pub fn aggregate(label: RowLabel<'_>, stats: &[RealizationStats]) -> MetricRow {
    let n = stats.len();
    let nf = n.max(1) as f64;
    let mean = ordered_sum(stats.iter().map(|s| s.mean_sum_rate).collect()) / nf;
    let ci = (n >= 2).then(|| {
        let var = ordered_sum(stats.iter().map(|s| (s.mean_sum_rate - mean).powi(2)).collect()) / (nf - 1.0);
        1.96 * (var / nf).sqrt()
    });
    let slots: usize = stats.iter().map(|s| s.slots).sum();
    let outages: usize = stats.iter().map(|s| s.outage_slots).sum();
    MetricRow {
        variable: label.variable.to_string(),
        value: label.value,
        mode: label.mode,
        controller: label.controller.to_string(),
        fairness: label.fairness,
        realizations: n,
        mean_sum_rate: mean,
        ci95_half_width: ci,
        outage: if slots == 0 { 0.0 } else { outages as f64 / slots as f64 },
        energy_efficiency: ordered_sum(stats.iter().map(|s| s.mean_energy_efficiency).collect()) / nf,
        jain: ordered_sum(stats.iter().map(|s| s.mean_jain).collect()) / nf,
    }
}

/// Slot-by-slot record of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub label: String,
    pub slots: Vec<SlotRecord>,
}

#[derive(Debug, Clone)]
pub struct TrainedPolicy {
    pub label: String,
    pub checkpoint: Checkpoint,
    pub curve: Vec<IterationRecord>,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutput {
    pub rows: Vec<MetricRow>,
    pub traces: Vec<Trace>,
    pub policies: Vec<TrainedPolicy>,
}

#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub row: MetricRow,
    pub realizations: Vec<RealizationStats>,
    pub traces: Vec<Trace>,
}

fn realization_seed(cfg: &ExperimentConfig, r: usize) -> u64 {
    derive_seed(cfg.seed, SWEEP_REALIZATIONS, r as u64)
}

/// Evaluates one controller over `n` realizations of `scenario`.
fn evaluate_controller(
    cfg: &ExperimentConfig,
    scenario: &ScenarioConfig,
    controller: &ControllerImpl,
    n: usize,
    seed_of: &(dyn Fn(usize) -> u64 + Sync),
    label: RowLabel<'_>,
    trace_prefix: &str,
) -> Result<EvalOutput> {
    let env_cfg = cfg.resolved_env();
    let results: Vec<(RealizationStats, Option<Vec<SlotRecord>>)> = (0..n)
        .into_par_iter()
        .map(|r| {
            let seed = seed_of(r);
            let keep = r < cfg.sweep.trace_realizations;
            match controller {
                ControllerImpl::Oracle => {
                    let o = oracle_search(scenario, &cfg.oracle, seed)?;
                    let radio = scenario.radio.resolve()?;
                    let (ee, jain) = slot_metrics(&o.report, o.total_power, radio.bandwidth)?;
                    let slot = SlotRecord {
                        slot: 0,
                        uav_x: o.uav.0,
                        uav_y: o.uav.1,
                        reward: o.sum_rate,
                        sum_rate: o.sum_rate,
                        worst_rate: o.report.worst_user_rate(),
                        total_power: o.total_power,
                        energy_efficiency: ee,
                        jain,
                    };
                    let slots = vec![slot];
                    Ok((summarize(seed, &slots, cfg.r_min), keep.then_some(slots)))
                }
                ControllerImpl::Random => {
                    let mut env = Env::new(scenario.clone(), env_cfg.clone(), seed)?;
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, RANDOM_POLICY, 0));
                    let mut pol = |e: &Env, _: &EnvState| Ok(random_action(&e.action_spec(), e.scenario().ris.s_max, &mut rng));
                    let slots = run_episode(&mut env, seed, &mut pol)?;
                    Ok((summarize(seed, &slots, cfg.r_min), keep.then_some(slots)))
                }
                ControllerImpl::Greedy(params) => {
                    let mut env = Env::new(scenario.clone(), env_cfg.clone(), seed)?;
                    let mut pol = |e: &Env, s: &EnvState| {
                        let (m, raw) = greedy_action(params, &e.observe(s))?;
                        to_env_action(e, m, &raw)
                    };
                    let slots = run_episode(&mut env, seed, &mut pol)?;
                    Ok((summarize(seed, &slots, cfg.r_min), keep.then_some(slots)))
                }
            }
        })
        .collect::<Result<_>>()?;
    let stats: Vec<RealizationStats> = results.iter().map(|(s, _)| s.clone()).collect();
    let traces = results
        .into_iter()
        .enumerate()
        .filter_map(|(r, (_, t))| {
            t.map(|slots| Trace {
                label: format!("{trace_prefix}_r{r}"),
                slots,
            })
        })
        .collect();
    Ok(EvalOutput {
        row: aggregate(label, &stats),
        realizations: stats,
        traces,
    })
}

enum ControllerImpl {
    Random,
    Oracle,
    Greedy(Box<PolicyParameters>),
}

fn fmt_value(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Trains a policy on `scenario` with the experiment's training settings.
pub fn train_policy(cfg: &ExperimentConfig, scenario: &ScenarioConfig, label: &str) -> Result<TrainedPolicy> {
    let mut env = Env::new(scenario.clone(), cfg.resolved_env(), cfg.seed)?;
    let out = train(&mut env, &cfg.train, cfg.seed)?;
    let hash = hash_json(&(scenario, &cfg.resolved_env(), &cfg.train))?;
    Ok(TrainedPolicy {
        label: label.to_string(),
        checkpoint: Checkpoint::new(out.params, hash, cfg.seed, env.action_spec()),
        curve: out.curve,
    })
}

/// Runs the configured controller at every sweep point.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let mut out = SweepOutput::default();
    let fixed = match (&cfg.sweep.controller, &cfg.sweep.checkpoint) {
        (Controller::Trained, Some(path)) => Some(Checkpoint::load(path)?),
        _ => None,
    };
    for &value in &cfg.sweep.values {
        let scenario = cfg.scenario_at(value);
        let prefix = format!("{}_{}_{}{}", cfg.mode, cfg.sweep.controller.as_str(), cfg.sweep.variable.as_str(), fmt_value(value));
        let controller = match cfg.sweep.controller {
            Controller::Random => ControllerImpl::Random,
            Controller::Oracle => ControllerImpl::Oracle,
            Controller::Trained => {
                let ck = match &fixed {
                    Some(ck) => ck.clone(),
                    None => {
                        let p = train_policy(cfg, &scenario, &prefix)?;
                        let ck = p.checkpoint.clone();
                        out.policies.push(p);
                        ck
                    }
                };
                let spec = crate::env::action_spec(&scenario);
                ck.check_compatible(crate::env::state_dim(&scenario), &spec)?;
                ControllerImpl::Greedy(Box::new(ck.params))
            }
        };
        let label = RowLabel {
            variable: cfg.sweep.variable.as_str(),
            value,
            mode: cfg.mode,
            controller: cfg.sweep.controller.as_str(),
            fairness: cfg.fairness,
        };
        let seed_of = |r: usize| realization_seed(cfg, r);
        let ev = evaluate_controller(cfg, &scenario, &controller, cfg.realizations, &seed_of, label, &prefix)?;
        out.rows.push(ev.row);
        out.traces.extend(ev.traces);
    }
    Ok(out)
}

fn eval_seed(cfg: &ExperimentConfig, e: usize) -> u64 {
    derive_seed(cfg.seed, EVAL_EPISODES, e as u64)
}

/// Greedy evaluation of a checkpoint over `episodes` held-out episodes of
/// the configured scenario.
pub fn evaluate_policy(checkpoint: &Checkpoint, cfg: &ExperimentConfig, episodes: usize) -> Result<EvalOutput> {
    cfg.validate()?;
    if episodes == 0 {
        return Err(Error::Config("episodes must be positive".into()));
    }
    let scenario = cfg.resolved_scenario();
    checkpoint.check_compatible(crate::env::state_dim(&scenario), &crate::env::action_spec(&scenario))?;
    let label = RowLabel {
        variable: "p_t_dbm",
        value: scenario.radio.p_t_dbm,
        mode: cfg.mode,
        controller: "trained",
        fairness: cfg.fairness,
    };
    let seed_of = |e: usize| eval_seed(cfg, e);
    let prefix = format!("{}_eval", cfg.mode);
    evaluate_controller(cfg, &scenario, &ControllerImpl::Greedy(Box::new(checkpoint.params.clone())), episodes, &seed_of, label, &prefix)
}

/// Uniform random actions on the same held-out episodes as [`evaluate_policy`].
pub fn evaluate_random(cfg: &ExperimentConfig, episodes: usize) -> Result<EvalOutput> {
    cfg.validate()?;
    let scenario = cfg.resolved_scenario();
    let label = RowLabel {
        variable: "p_t_dbm",
        value: scenario.radio.p_t_dbm,
        mode: cfg.mode,
        controller: "random",
        fairness: cfg.fairness,
    };
    let seed_of = |e: usize| eval_seed(cfg, e);
    let prefix = format!("{}_random", cfg.mode);
    evaluate_controller(cfg, &scenario, &ControllerImpl::Random, episodes, &seed_of, label, &prefix)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(rates: &[f64]) -> Vec<RealizationStats> {
        rates
            .iter()
            .enumerate()
            .map(|(i, &r)| RealizationStats {
                seed: i as u64,
                slots: 2,
                mean_sum_rate: r,
                mean_energy_efficiency: 10.0 * r,
                mean_jain: 0.5,
                outage_slots: i % 2,
            })
            .collect()
    }

    fn label() -> RowLabel<'static> {
        RowLabel {
            variable: "p_t_dbm",
            value: 0.0,
            mode: Mode::ArisNoma,
            controller: "random",
            fairness: Fairness::Off,
        }
    }

    #[test]
    fn aggregate_single_realization_has_no_interval() {
        let row = aggregate(label(), &stats(&[3.0]));
        assert_eq!(row.realizations, 1);
        assert_eq!(row.ci95_half_width, None);
        assert_eq!(row.mean_sum_rate, 3.0);
    }

    #[test]
    fn aggregate_is_order_independent() {
        let v = [0.1, 7.3, 2.2, 1e-9, 5.5, 3.3333];
        let a = aggregate(label(), &stats(&v));
        let mut s = stats(&v);
        s.reverse();
        s.swap(1, 4);
        let b = aggregate(label(), &s);
        assert_eq!(a.mean_sum_rate.to_bits(), b.mean_sum_rate.to_bits());
        assert_eq!(a.ci95_half_width.map(f64::to_bits), b.ci95_half_width.map(f64::to_bits));
        assert_eq!(a.energy_efficiency.to_bits(), b.energy_efficiency.to_bits());
        assert_eq!(a.outage, 3.0 / 12.0);
    }

    #[test]
    fn random_actions_stay_in_boxes() {
        let spec = ActionSpec {
            n_phase: 4,
            n_lambda: 3,
            n_amp: 4,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let a = random_action(&spec, 10.0, &mut rng);
            assert!(a.phases.iter().all(|p| (-std::f64::consts::PI..std::f64::consts::PI).contains(p)));
            assert!(a.lambdas.iter().all(|l| *l > 0.5 && *l < 1.0));
            assert!(a.amplification.iter().all(|p| (1.0..10.0).contains(p)));
        }
    }
}
