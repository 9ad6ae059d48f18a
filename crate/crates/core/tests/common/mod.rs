//! Reference evaluators written directly from the rate definitions, sharing
//! nothing with the library's composition or rate code.
#![allow(dead_code, clippy::needless_range_loop)]

pub mod grad;

use arisnoma::env::{AccessScheme, ScenarioConfig};
use arisnoma::harness::oracle::{amp_levels, lambda_levels, phase_levels};
use arisnoma::harness::OracleConfig;
use arisnoma::network::{ChannelRealization, EdgeRateVariant, Topology, UserRole};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Per-panel configuration: (phase, amplification) for each element, and
/// whether the panel injects amplifier noise.
pub struct PanelCfg {
    pub phase: Vec<f64>,
    pub amp: Vec<f64>,
    pub amplitude: f64,
    pub active: bool,
}

pub struct RefOut {
    pub user_rates: Vec<f64>,
    pub r_c_to_e: Vec<f64>,
    pub total: f64,
}

pub fn effective(ch: &ChannelRealization, panels: &[PanelCfg], m: usize, u: usize) -> Complex64 {
    let mut h = ch.direct[m][u];
    for (r, cfg) in panels.iter().enumerate() {
        for k in 0..cfg.phase.len() {
            let refl = Complex64::new(0.0, cfg.phase[k]).exp() * cfg.amp[k] * cfg.amplitude;
            h += ch.panels[r].h_user[u][k] * refl * ch.panels[r].h_bs[m][k];
        }
    }
    h
}

pub fn ris_noise(ch: &ChannelRealization, panels: &[PanelCfg], u: usize, sigma_v2: f64) -> f64 {
    let mut n = 0.0;
    for (r, cfg) in panels.iter().enumerate() {
        if !cfg.active {
            continue;
        }
        for k in 0..cfg.phase.len() {
            let g = ch.panels[r].h_user[u][k] * cfg.amp[k] * cfg.amplitude;
            n += sigma_v2 * g.norm_sqr();
        }
    }
    n
}

fn log2_1p(x: f64) -> f64 {
    (1.0 + x).log2()
}

/// Rates for one configuration. `p_t[m]` is BS power in watts.
#[allow(clippy::too_many_arguments)]
pub fn rates(
    topo: &Topology,
    ch: &ChannelRealization,
    panels: &[PanelCfg],
    lambdas: &[f64],
    p_t: &[f64],
    sigma2: f64,
    sigma_v2: f64,
    variant: EdgeRateVariant,
    oma: bool,
) -> RefOut {
    let n_bs = p_t.len();
    let n_u = topo.users.len();
    let mut power = vec![vec![0.0; n_u]; n_bs];
    for m in 0..n_bs {
        for u in 0..n_u {
            power[m][u] = p_t[m] * effective(ch, panels, m, u).norm_sqr();
        }
    }
    let noise: Vec<f64> = (0..n_u).map(|u| ris_noise(ch, panels, u, sigma_v2) + sigma2).collect();
    let sinr = |u: usize, m: usize, serving: &[usize]| {
        let mut interf = 0.0;
        for j in 0..n_bs {
            if !serving.contains(&j) {
                interf += power[j][u];
            }
        }
        power[m][u] / (interf + noise[u])
    };
    let mut user_rates = vec![0.0; n_u];
    let mut r_ce = Vec::new();
    for (u, user) in topo.users.iter().enumerate() {
        match user.role {
            UserRole::Center { bs } => {
                let g = sinr(u, bs, &[bs]);
                user_rates[u] = if oma { 0.5 * log2_1p(g) } else { log2_1p((1.0 - lambdas[bs]) * g) };
            }
            UserRole::Edge { bs, partner } => {
                if oma {
                    user_rates[u] = 0.5 * log2_1p(sinr(u, bs, &[bs]));
                    continue;
                }
                let gm = sinr(u, bs, &[bs, partner]);
                let gj = sinr(u, partner, &[bs, partner]);
                let (lm, lj) = (lambdas[bs], lambdas[partner]);
                let den = match variant {
                    EdgeRateVariant::Corrected => (1.0 - lm) * gm + (1.0 - lj) * gj + 1.0,
                    EdgeRateVariant::Literal => (1.0 - lm) * gj + (1.0 - lj) * gj + 1.0,
                };
                user_rates[u] = log2_1p((lm * gm + lj * gj) / den);
                let c = topo
                    .users
                    .iter()
                    .position(|x| matches!(x.role, UserRole::Center { bs: b } if b == bs))
                    .unwrap();
                let gc = sinr(c, bs, &[bs]);
                r_ce.push(log2_1p(lm * gc / ((1.0 - lm) * gc + 1.0)));
            }
        }
    }
    let mut total = 0.0;
    for r in &user_rates {
        total += r;
    }
    RefOut {
        user_rates,
        r_c_to_e: r_ce,
        total,
    }
}

/// Straightforward enumeration for a fixed UAV: every phase vector, every
/// power-share vector, every amplification vector (plus the passive
/// bypass in active mode). Shared action layout only.
pub fn nested_loop_oracle(scenario: &ScenarioConfig, q: &OracleConfig, seed: u64) -> f64 {
    let topo = scenario.topology(seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ch = ChannelRealization::sample(&topo, &scenario.link, scenario.ris.elements, &mut rng).unwrap();
    let radio = scenario.radio.resolve().unwrap();
    let p_t: Vec<f64> = (0..scenario.n_bs()).map(|m| radio.bs_power(m)).collect();
    let sigma_v2 = scenario.ris.sigma_v2.unwrap_or(radio.sigma2);
    let k = scenario.ris.elements[0];
    let oma = scenario.access == AccessScheme::Oma;
    let active = scenario.ris.mode == arisnoma::ris::RisMode::Active;

    let all = |levels: &[f64], len: usize| -> Vec<Vec<f64>> {
        let mut out = vec![vec![]];
        for _ in 0..len {
            let mut next = Vec::new();
            for prefix in &out {
                for l in levels {
                    let mut v = prefix.clone();
                    v.push(*l);
                    next.push(v);
                }
            }
            out = next;
        }
        out
    };
    let phase_set = all(&phase_levels(q.q_phase), k);
    let lambda_set = if oma { vec![vec![0.75; scenario.n_bs()]] } else { all(&lambda_levels(q.q_lambda), scenario.n_bs()) };
    let mut amp_set: Vec<Option<Vec<f64>>> = vec![None];
    if active {
        amp_set.extend(all(&amp_levels(q.q_amp, scenario.ris.s_max), k).into_iter().map(Some));
    }

    let mut best = f64::NEG_INFINITY;
    for ph in &phase_set {
        for amp in &amp_set {
            let panels: Vec<PanelCfg> = (0..2)
                .map(|_| PanelCfg {
                    phase: ph.clone(),
                    amp: amp.clone().unwrap_or_else(|| vec![1.0; k]),
                    amplitude: scenario.ris.amplitude,
                    active: amp.is_some(),
                })
                .collect();
            for lam in &lambda_set {
                let r = rates(&topo, &ch, &panels, lam, &p_t, radio.sigma2, sigma_v2, scenario.edge_variant, oma);
                if r.total > best {
                    best = r.total;
                }
            }
        }
    }
    best
}
