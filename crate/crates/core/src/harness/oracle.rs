//! Exhaustive search over a quantized configuration space.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::OracleConfig;
use crate::env::{AccessScheme, ScenarioConfig};
use crate::network::{self, ChannelRealization, NomaPowerAlloc, PreparedChannels, RateReport, Topology};
use crate::ris::{RisMode, RisState};
use crate::{Error, Result};

pub fn phase_levels(q: usize) -> Vec<f64> {
    (0..q).map(|i| -PI + 2.0 * PI * i as f64 / q as f64).collect()
}

/// Interior points of `(0.5, 1)`.
pub fn lambda_levels(q: usize) -> Vec<f64> {
    (0..q).map(|i| 0.5 + 0.5 * (i + 1) as f64 / (q + 1) as f64).collect()
}

/// Evenly spaced over `[1, S_max]`, so unit amplification is always present.
pub fn amp_levels(q: usize, s_max: f64) -> Vec<f64> {
    if q == 1 {
        return vec![1.0];
    }
    (0..q).map(|i| 1.0 + (s_max - 1.0) * i as f64 / (q - 1) as f64).collect()
}

/// UAV candidates: the start position, or cell centers of an `n x n` grid
/// over the flight area.
pub fn uav_candidates(topo: &Topology, n: usize) -> Vec<(f64, f64)> {
    if n <= 1 {
        return vec![(topo.uav[0], topo.uav[1])];
    }
    let a = topo.flight_area;
    let step_x = (a.x_max - a.x_min) / n as f64;
    let step_y = (a.y_max - a.y_min) / n as f64;
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push((a.x_min + (i as f64 + 0.5) * step_x, a.y_min + (j as f64 + 0.5) * step_y));
        }
    }
    out
}

/// Mixed-radix sizes of the search, most significant first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpaceShape {
    pub uav: u128,
    pub phase: u128,
    pub lambda: u128,
    /// Amplification options, including the bypass option in active mode.
    pub amp: u128,
}

impl SpaceShape {
    pub fn size(&self) -> Option<u128> {
        self.uav.checked_mul(self.phase)?.checked_mul(self.lambda)?.checked_mul(self.amp)
    }
}

pub fn space_shape(scenario: &ScenarioConfig, q: &OracleConfig) -> Option<SpaceShape> {
    let n_entries = scenario.ris.action_entries() as u32;
    let pow = |b: usize, e: u32| (b as u128).checked_pow(e);
    let lambda = match scenario.access {
        AccessScheme::Noma => pow(q.q_lambda, scenario.n_bs() as u32)?,
        AccessScheme::Oma => 1,
    };
    let amp = match scenario.ris.mode {
        RisMode::Active => pow(q.q_amp, n_entries)?.checked_add(1)?,
        RisMode::Passive => 1,
    };
    Some(SpaceShape {
        uav: pow(q.uav_grid.max(1), 2)?,
        phase: pow(q.q_phase, n_entries)?,
        lambda,
        amp,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub sum_rate: f64,
    /// Position of the optimum in the enumeration order.
    pub index: u128,
    pub uav: (f64, f64),
    pub phases: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// `None` when the active panels are bypassed (switched to passive).
    pub amplification: Option<Vec<f64>>,
    pub states: Vec<RisState>,
    pub report: RateReport,
    pub total_power: f64,
    pub evaluated: u128,
}

fn digits(mut idx: usize, radix: usize, len: usize) -> Vec<usize> {
    let mut d = vec![0; len];
    for slot in d.iter_mut().rev() {
        *slot = idx % radix;
        idx /= radix;
    }
    d
}

/// Maximizes the sum rate over UAV grid, quantized phases, power shares and
/// amplification for the channel drawn from `seed`. Ties keep the smallest
/// configuration index. In active mode one extra option switches both panels
/// to passive reflection, so every passive configuration is also searched.
pub fn oracle_search(scenario: &ScenarioConfig, q: &OracleConfig, seed: u64) -> Result<OracleResult> {
    scenario.validate()?;
    let limit = q.max_configurations as u128;
    let shape = space_shape(scenario, q).ok_or(Error::SearchTooLarge {
        size: u128::MAX,
        limit,
    })?;
    let size = shape.size().ok_or(Error::SearchTooLarge {
        size: u128::MAX,
        limit,
    })?;
    if size > limit {
        return Err(Error::SearchTooLarge { size, limit });
    }

    let radio = scenario.radio.resolve()?;
    let noise = scenario.noise(&radio);
    let base = scenario.topology(seed)?;
    let n_entries = scenario.ris.action_entries();
    let n_bs = scenario.n_bs();
    let phases_q = phase_levels(q.q_phase);
    let lambdas_q = lambda_levels(q.q_lambda);
    let amps_q = amp_levels(q.q_amp, scenario.ris.s_max);
    let mut bypass_cfg = scenario.ris.clone();
    bypass_cfg.mode = RisMode::Passive;
    let lambda_len = if scenario.access == AccessScheme::Noma { n_bs } else { 0 };

    let mut best: Option<OracleResult> = None;
    let mut evaluated = 0u128;
    for (ui, &(x, y)) in uav_candidates(&base, q.uav_grid).iter().enumerate() {
        let mut topo = base.clone();
        if q.uav_grid > 1 {
            let (inside, clear) = topo.uav_position_allowed(x, y);
            if !(inside && clear) {
                continue;
            }
        }
        topo.uav[0] = x;
        topo.uav[1] = y;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = ChannelRealization::sample(&topo, &scenario.link, scenario.ris.elements, &mut rng)?;
        let prepared = PreparedChannels::new(&ch);
        let incoming = ch.incoming_powers(&radio);

        for pi in 0..shape.phase as usize {
            let phases: Vec<f64> = digits(pi, q.q_phase, n_entries).into_iter().map(|d| phases_q[d]).collect();
            for ai in 0..shape.amp as usize {
                let (states, amplification) = match scenario.ris.mode {
                    RisMode::Passive => (scenario.ris.panel_states(&phases, &vec![1.0; n_entries]), Some(vec![1.0; n_entries])),
                    RisMode::Active if ai == 0 => (bypass_cfg.panel_states(&phases, &vec![1.0; n_entries]), None),
                    RisMode::Active => {
                        let amp: Vec<f64> = digits(ai - 1, q.q_amp, n_entries).into_iter().map(|d| amps_q[d]).collect();
                        (scenario.ris.panel_states(&phases, &amp), Some(amp))
                    }
                };
                let links = prepared.compose(&states, &noise)?;
                for li in 0..shape.lambda as usize {
                    let lambdas: Vec<f64> = digits(li, q.q_lambda, lambda_len).into_iter().map(|d| lambdas_q[d]).collect();
                    let report = match scenario.access {
                        AccessScheme::Noma => network::noma_rates(
                            &topo,
                            &links,
                            &NomaPowerAlloc {
                                lambdas: lambdas.clone(),
                            },
                            &radio,
                            scenario.edge_variant,
                        )?,
                        AccessScheme::Oma => network::oma_rates(&topo, &links, &radio),
                    };
                    evaluated += 1;
                    let index = ((ui as u128 * shape.phase + pi as u128) * shape.lambda + li as u128) * shape.amp + ai as u128;
                    let better = match &best {
                        None => true,
                        Some(b) => report.r_total > b.sum_rate || (report.r_total == b.sum_rate && index < b.index),
                    };
                    if better {
                        best = Some(OracleResult {
                            sum_rate: report.r_total,
                            index,
                            uav: (x, y),
                            phases: phases.clone(),
                            lambdas,
                            amplification: amplification.clone(),
                            total_power: network::total_power(&scenario.power, &states, &incoming, &radio, n_bs),
                            states: states.clone(),
                            report,
                            evaluated: 0,
                        });
                    }
                }
            }
        }
    }
    let mut best = best.ok_or_else(|| Error::Validation("no admissible UAV position in the oracle grid".into()))?;
    best.evaluated = evaluated;
    Ok(best)
}
