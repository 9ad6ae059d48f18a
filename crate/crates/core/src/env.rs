//! The UAV/RIS control MDP.
//!
//! One step moves the UAV by a fixed stride (or hovers), applies the squashed
//! continuous action to the RIS panels and NOMA power shares, draws a fresh
//! block-fading realization and scores the resulting sum rate. Moves that
//! would leave the flight area or enter a no-fly disk are rejected and
//! penalised, so emitted positions always satisfy both constraints.

use std::f64::consts::{LN_2, PI};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::LinkModel;
use crate::error::{Error, Result};
use crate::network::{
    self, ChannelRealization, EdgeRateVariant, NomaPowerAlloc, PowerModel, PreparedChannels, RadioConfig,
    RateReport, ScenarioLayout, Topology, UserRole,
};
use crate::ris::{DynamicNoiseParams, RisMode, RisState};

/// Number of discrete UAV moves.
pub const N_MOVES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Move {
    Left,
    Right,
    Down,
    Up,
    Hover,
}

impl Move {
    pub const ALL: [Move; N_MOVES] = [Move::Left, Move::Right, Move::Down, Move::Up, Move::Hover];

    pub fn from_index(i: usize) -> Option<Move> {
        Self::ALL.get(i).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn delta(self) -> (f64, f64) {
        match self {
            Move::Left => (-1.0, 0.0),
            Move::Right => (1.0, 0.0),
            Move::Down => (0.0, -1.0),
            Move::Up => (0.0, 1.0),
            Move::Hover => (0.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AccessScheme {
    Noma,
    Oma,
}

/// How continuous RIS actions map onto the two panels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionLayout {
    /// Each panel has its own phase and amplification entries.
    Independent,
    /// One K-sized vector drives both panels (they must have equal K).
    Shared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RisConfig {
    /// Elements of the ground and UAV panels.
    pub elements: [usize; 2],
    pub s_max: f64,
    pub amplitude: f64,
    pub mode: RisMode,
    /// Element noise power in watts; `None` uses the receiver noise power.
    pub sigma_v2: Option<f64>,
    pub layout: ActionLayout,
}

impl Default for RisConfig {
    fn default() -> Self {
        Self {
            elements: [16, 16],
            s_max: 10.0,
            amplitude: 1.0,
            mode: RisMode::Active,
            sigma_v2: None,
            layout: ActionLayout::Independent,
        }
    }
}

impl RisConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.s_max >= 1.0) {
            return Err(Error::Config(format!("S_max must be >= 1, got {}", self.s_max)));
        }
        if !(self.amplitude > 0.0 && self.amplitude <= 1.0) {
            return Err(Error::Config(format!("amplitude {} outside (0, 1]", self.amplitude)));
        }
        if self.layout == ActionLayout::Shared && self.elements[0] != self.elements[1] {
            return Err(Error::Config("shared action layout needs equal element counts".into()));
        }
        if matches!(self.sigma_v2, Some(v) if !(v >= 0.0)) {
            return Err(Error::Config("element noise power must be >= 0".into()));
        }
        Ok(())
    }

    /// Continuous entries per action group (phases and amplification).
    pub fn action_entries(&self) -> usize {
        match self.layout {
            ActionLayout::Independent => self.elements[0] + self.elements[1],
            ActionLayout::Shared => self.elements[0],
        }
    }

    /// Builds panel states from per-group action entries.
    pub fn panel_states(&self, phases: &[f64], amplification: &[f64]) -> Vec<RisState> {
        let mut out = Vec::with_capacity(2);
        let mut offset = 0;
        for &k in &self.elements {
            let range = match self.layout {
                ActionLayout::Independent => offset..offset + k,
                ActionLayout::Shared => 0..k,
            };
            offset += k;
            let amplification = match self.mode {
                RisMode::Active => amplification[range.clone()].to_vec(),
                RisMode::Passive => vec![1.0; k],
            };
            out.push(RisState {
                phases: phases[range].to_vec(),
                amplitudes: vec![self.amplitude; k],
                amplification,
                mode: self.mode,
            });
        }
        out
    }
}

/// Physical radio settings in engineering units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioSettings {
    pub p_t_dbm: f64,
    pub p_t_per_bs_dbm: Option<Vec<f64>>,
    pub bandwidth: f64,
    pub carrier: f64,
    /// Receiver noise override; `None` uses the thermal floor over `bandwidth`.
    pub sigma2_dbm: Option<f64>,
}

impl Default for RadioSettings {
    fn default() -> Self {
        Self {
            p_t_dbm: 20.0,
            p_t_per_bs_dbm: None,
            bandwidth: 10e6,
            carrier: 2.4e9,
            sigma2_dbm: None,
        }
    }
}

impl RadioSettings {
    pub fn resolve(&self) -> Result<RadioConfig> {
        let sigma2_dbm = match self.sigma2_dbm {
            Some(v) => v,
            None => network::noise_power_dbm(self.bandwidth)?,
        };
        Ok(RadioConfig {
            p_t: network::dbm_to_watts(self.p_t_dbm),
            p_t_per_bs: self
                .p_t_per_bs_dbm
                .as_ref()
                .map(|v| v.iter().map(|&d| network::dbm_to_watts(d)).collect()),
            sigma2: network::dbm_to_watts(sigma2_dbm),
            bandwidth: self.bandwidth,
            carrier: self.carrier,
        })
    }
}

/// Everything that defines the simulated network, independent of control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub layout: ScenarioLayout,
    /// Fixed user placement; `None` draws a new placement from each episode seed.
    pub placement_seed: Option<u64>,
    pub link: LinkModel,
    pub radio: RadioSettings,
    pub ris: RisConfig,
    pub access: AccessScheme,
    pub edge_variant: EdgeRateVariant,
    pub power: PowerModel,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            layout: ScenarioLayout::default(),
            placement_seed: None,
            link: LinkModel::default(),
            radio: RadioSettings::default(),
            ris: RisConfig::default(),
            access: AccessScheme::Noma,
            edge_variant: EdgeRateVariant::Corrected,
            power: PowerModel::default(),
        }
    }
}

impl ScenarioConfig {
    /// Two cells, two-element panels sharing one action vector: small enough
    /// for exhaustive search.
    pub fn tiny() -> Self {
        Self {
            layout: ScenarioLayout::tiny(),
            ris: RisConfig {
                elements: [2, 2],
                layout: ActionLayout::Shared,
                ..RisConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        self.link.validate()?;
        self.ris.validate()?;
        self.radio.resolve()?.validate(self.layout.bs_positions.len())
    }

    pub fn n_bs(&self) -> usize {
        self.layout.bs_positions.len()
    }

    /// Placement for an episode seed.
    pub fn topology(&self, episode_seed: u64) -> Result<Topology> {
        let seed = self.placement_seed.unwrap_or(episode_seed);
        self.layout.generate(&mut placement_rng(seed))
    }

    pub fn noise(&self, radio: &RadioConfig) -> DynamicNoiseParams {
        DynamicNoiseParams {
            sigma_v2: self.ris.sigma_v2.unwrap_or(radio.sigma2),
        }
    }
}

/// Placement draws use a generator stream separate from fading draws.
pub(crate) fn placement_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardParams {
    pub xi_dist: f64,
    pub xi_oob: f64,
    pub c_const: f64,
    pub proximity_threshold: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            xi_dist: 1.0,
            xi_oob: 10.0,
            c_const: 10.0,
            proximity_threshold: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Slots per episode.
    pub episode_len: usize,
    /// UAV stride per slot, meters.
    pub step_size: f64,
    pub reward: RewardParams,
    /// Keep power shares and amplification at their episode-initial values.
    pub freeze_power_and_amplification: bool,
    /// Reward deduction per user below its minimum rate.
    pub qos_penalty: f64,
    pub r_min_center: f64,
    pub r_min_edge: f64,
    /// Weight of the Jain fairness bonus added to the reward.
    pub fairness_weight: f64,
    pub initial_lambda: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            episode_len: 100,
            step_size: 2.0,
            reward: RewardParams::default(),
            freeze_power_and_amplification: false,
            qos_penalty: 0.0,
            r_min_center: 1.0,
            r_min_edge: 1.0,
            fairness_weight: 0.0,
            initial_lambda: 0.75,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episode_len == 0 {
            return Err(Error::Config("episode length must be positive".into()));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::Config("UAV step size must be positive".into()));
        }
        let r = &self.reward;
        if !(r.xi_dist > 0.0 && r.xi_oob > 0.0 && r.c_const > 0.0 && r.proximity_threshold > 0.0) {
            return Err(Error::Config("reward constants must be positive".into()));
        }
        if !(self.initial_lambda > 0.5 && self.initial_lambda < 1.0) {
            return Err(Error::Config("initial power share must lie in (0.5, 1)".into()));
        }
        Ok(())
    }
}

/// Observable state of the MDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub uav_xy: (f64, f64),
    pub lambdas: Vec<f64>,
    pub amplification_flat: Vec<f64>,
    /// Aggregate center and edge rates of the last slot.
    pub last_rates: (f64, f64),
    pub slot_index: usize,
}

impl EnvState {
    pub fn dim(&self) -> usize {
        2 + self.lambdas.len() + self.amplification_flat.len() + 2
    }

    /// Raw state vector in the order position, power shares, amplification, rates.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.push(self.uav_xy.0);
        v.push(self.uav_xy.1);
        v.extend(&self.lambdas);
        v.extend(&self.amplification_flat);
        v.push(self.last_rates.0);
        v.push(self.last_rates.1);
        v
    }
}

/// Sizes of the continuous action groups, in raw-vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub n_phase: usize,
    pub n_lambda: usize,
    pub n_amp: usize,
}

impl ActionSpec {
    pub fn continuous_dim(&self) -> usize {
        self.n_phase + self.n_lambda + self.n_amp
    }
}

/// Squashed continuous action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousAction {
    pub phases: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub amplification: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridAction {
    pub movement: Move,
    pub phases: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub amplification: Vec<f64>,
}

impl HybridAction {
    pub fn new(movement: Move, c: ContinuousAction) -> Self {
        Self {
            movement,
            phases: c.phases,
            lambdas: c.lambdas,
            amplification: c.amplification,
        }
    }
}

/// `center + half * tanh(x)`, kept strictly inside the open interval.
fn squash_open(x: f64, center: f64, half: f64) -> f64 {
    let v = center + half * x.tanh();
    v.clamp((center - half).next_up(), (center + half).next_down())
}

/// Maps an unbounded policy output into the constraint boxes: phases into
/// `(-pi, pi)`, power shares into `(0.5, 1)` and amplification into `(1, S_max)`.
pub fn squash_action(raw: &[f64], spec: &ActionSpec, s_max: f64) -> Result<ContinuousAction> {
    if raw.len() != spec.continuous_dim() {
        return Err(Error::Validation(format!(
            "raw action has {} entries, expected {}",
            raw.len(),
            spec.continuous_dim()
        )));
    }
    let (ph, rest) = raw.split_at(spec.n_phase);
    let (la, amp) = rest.split_at(spec.n_lambda);
    let amp_mid = (1.0 + s_max) / 2.0;
    let amp_half = (s_max - 1.0) / 2.0;
    Ok(ContinuousAction {
        phases: ph.iter().map(|&x| squash_open(x, 0.0, PI)).collect(),
        lambdas: la.iter().map(|&x| squash_open(x, 0.75, 0.25)).collect(),
        amplification: amp
            .iter()
            .map(|&x| {
                if amp_half == 0.0 {
                    1.0
                } else {
                    squash_open(x, amp_mid, amp_half)
                }
            })
            .collect(),
    })
}

/// `log |d squash / d raw|` summed over all entries (change-of-variables term).
pub fn squash_log_jacobian(raw: &[f64], spec: &ActionSpec, s_max: f64) -> f64 {
    let half = |i: usize| {
        if i < spec.n_phase {
            PI
        } else if i < spec.n_phase + spec.n_lambda {
            0.25
        } else {
            (s_max - 1.0) / 2.0
        }
    };
    raw.iter()
        .enumerate()
        .map(|(i, &x)| {
            let h = half(i);
            if h == 0.0 {
                return 0.0;
            }
            // log sech^2(x), stable for large |x|
            let a = x.abs();
            h.ln() + 2.0 * (LN_2 - a - (-2.0 * a).exp().ln_1p())
        })
        .sum()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepFlags {
    pub oob: bool,
    pub no_fly_violation: bool,
    pub qos_violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub next_state: EnvState,
    pub reward: f64,
    pub rates: RateReport,
    pub flags: StepFlags,
    pub done: bool,
}

/// Sum rate plus a proximity bonus, minus a boundary penalty.
/// Distances below 0.1 m are clamped.
pub fn reward(r_sum: f64, d_uav_users: f64, oob: bool, rp: &RewardParams) -> f64 {
    let d = d_uav_users.max(0.1);
    let bonus = if d < rp.proximity_threshold {
        rp.xi_dist * rp.c_const / d
    } else {
        0.0
    };
    let penalty = if oob { rp.xi_oob } else { 0.0 };
    r_sum + bonus - penalty
}

/// One simulated network under control of an agent.
#[derive(Debug, Clone)]
pub struct Env {
    scenario: ScenarioConfig,
    cfg: EnvConfig,
    radio: RadioConfig,
    noise: DynamicNoiseParams,
    rng: ChaCha8Rng,
    topo: Topology,
    ris: Vec<RisState>,
    lambdas: Vec<f64>,
    channels: PreparedChannels,
    incoming: Vec<Vec<f64>>,
    last: RateReport,
    slot: usize,
}

impl Env {
    /// Builds an environment and resets it with `seed`.
    pub fn new(scenario: ScenarioConfig, cfg: EnvConfig, seed: u64) -> Result<Self> {
        scenario.validate()?;
        cfg.validate()?;
        let radio = scenario.radio.resolve()?;
        let noise = scenario.noise(&radio);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topo = scenario.topology(seed)?;
        let ris = initial_panels(&scenario.ris);
        let lambdas = vec![cfg.initial_lambda; scenario.n_bs()];
        let ch = ChannelRealization::sample(&topo, &scenario.link, scenario.ris.elements, &mut rng)?;
        let channels = PreparedChannels::new(&ch);
        let incoming = ch.incoming_powers(&radio);
        let mut env = Self {
            scenario,
            cfg,
            radio,
            noise,
            rng,
            topo,
            ris,
            lambdas,
            channels,
            incoming,
            last: RateReport {
                user_rates: Vec::new(),
                pairs: Vec::new(),
                sum_center: 0.0,
                sum_edge: 0.0,
                r_total: 0.0,
            },
            slot: 0,
        };
        env.last = env.evaluate()?;
        Ok(env)
    }

    /// Starts a new episode: UAV at the configured start, power shares at the
    /// initial value, unit amplification, fresh channels.
    pub fn reset(&mut self, seed: u64) -> Result<EnvState> {
        *self = Self::new(self.scenario.clone(), self.cfg.clone(), seed)?;
        Ok(self.state())
    }

    pub fn scenario(&self) -> &ScenarioConfig {
        &self.scenario
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn radio(&self) -> &RadioConfig {
        &self.radio
    }

    pub fn ris_states(&self) -> &[RisState] {
        &self.ris
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn last_report(&self) -> &RateReport {
        &self.last
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn action_spec(&self) -> ActionSpec {
        action_spec(&self.scenario)
    }

    pub fn state_dim(&self) -> usize {
        state_dim(&self.scenario)
    }

    pub fn state(&self) -> EnvState {
        let amplification_flat = match self.scenario.ris.layout {
            ActionLayout::Independent => self.ris.iter().flat_map(|s| s.amplification.iter().copied()).collect(),
            ActionLayout::Shared => self.ris[0].amplification.clone(),
        };
        EnvState {
            uav_xy: (self.topo.uav[0], self.topo.uav[1]),
            lambdas: self.lambdas.clone(),
            amplification_flat,
            last_rates: (self.last.sum_center, self.last.sum_edge),
            slot_index: self.slot,
        }
    }

    /// State rescaled to roughly unit range for the policy network.
    pub fn observe(&self, s: &EnvState) -> Vec<f64> {
        let (cx, cy) = self.topo.flight_area.center();
        let (hx, hy) = self.topo.flight_area.half_extent();
        let s_max = self.scenario.ris.s_max;
        let amp_mid = (1.0 + s_max) / 2.0;
        let amp_half = ((s_max - 1.0) / 2.0).max(1.0);
        let n_users = self.topo.users.len().max(1) as f64;
        let mut v = Vec::with_capacity(s.dim());
        v.push((s.uav_xy.0 - cx) / hx);
        v.push((s.uav_xy.1 - cy) / hy);
        v.extend(s.lambdas.iter().map(|l| (l - 0.75) / 0.25));
        v.extend(s.amplification_flat.iter().map(|p| (p - amp_mid) / amp_half));
        v.push(s.last_rates.0 / (5.0 * n_users));
        v.push(s.last_rates.1 / (5.0 * n_users));
        v
    }

    /// Total consumed power for the current configuration and channels.
    pub fn total_power(&self) -> f64 {
        network::total_power(&self.scenario.power, &self.ris, &self.incoming, &self.radio, self.topo.n_bs())
    }

    fn evaluate(&self) -> Result<RateReport> {
        let links = self.channels.compose(&self.ris, &self.noise)?;
        match self.scenario.access {
            AccessScheme::Noma => network::noma_rates(
                &self.topo,
                &links,
                &NomaPowerAlloc {
                    lambdas: self.lambdas.clone(),
                },
                &self.radio,
                self.scenario.edge_variant,
            ),
            AccessScheme::Oma => Ok(network::oma_rates(&self.topo, &links, &self.radio)),
        }
    }

    fn check_action(&self, a: &HybridAction) -> Result<()> {
        let spec = self.action_spec();
        if a.phases.len() != spec.n_phase || a.lambdas.len() != spec.n_lambda || a.amplification.len() != spec.n_amp {
            return Err(Error::Validation(format!(
                "action sizes ({}, {}, {}) do not match ({}, {}, {})",
                a.phases.len(),
                a.lambdas.len(),
                a.amplification.len(),
                spec.n_phase,
                spec.n_lambda,
                spec.n_amp
            )));
        }
        Ok(())
    }

    /// Advances one slot.
    pub fn step(&mut self, a: &HybridAction) -> Result<StepOutcome> {
        self.check_action(a)?;
        if self.slot >= self.cfg.episode_len {
            return Err(Error::Validation("episode already finished; call reset".into()));
        }
        self.slot += 1;

        let (dx, dy) = a.movement.delta();
        let x = self.topo.uav[0] + self.cfg.step_size * dx;
        let y = self.topo.uav[1] + self.cfg.step_size * dy;
        let (inside, clear) = self.topo.uav_position_allowed(x, y);
        let mut flags = StepFlags {
            oob: !inside,
            no_fly_violation: !clear,
            qos_violation: false,
        };
        if inside && clear {
            self.topo.uav[0] = x;
            self.topo.uav[1] = y;
        }

        let frozen = self.cfg.freeze_power_and_amplification;
        let amplification: Vec<f64> = if frozen {
            self.state().amplification_flat
        } else {
            a.amplification.clone()
        };
        let states = self.scenario.ris.panel_states(&a.phases, &amplification);
        for s in &states {
            s.validate(self.scenario.ris.s_max)?;
        }
        self.ris = states;
        if !frozen {
            let alloc = NomaPowerAlloc {
                lambdas: a.lambdas.clone(),
            };
            alloc.validate()?;
            self.lambdas = alloc.lambdas;
        }

        let ch = ChannelRealization::sample(&self.topo, &self.scenario.link, self.scenario.ris.elements, &mut self.rng)?;
        self.channels = PreparedChannels::new(&ch);
        self.incoming = ch.incoming_powers(&self.radio);
        let rates = self.evaluate()?;

        let qos_misses = self
            .topo
            .users
            .iter()
            .zip(&rates.user_rates)
            .filter(|(u, &r)| match u.role {
                UserRole::Center { .. } => r < self.cfg.r_min_center,
                UserRole::Edge { .. } => r < self.cfg.r_min_edge,
            })
            .count();
        flags.qos_violation = qos_misses > 0;

        let mut r = reward(
            rates.r_total,
            self.topo.mean_uav_user_distance(),
            flags.oob || flags.no_fly_violation,
            &self.cfg.reward,
        );
        r -= self.cfg.qos_penalty * qos_misses as f64;
        if self.cfg.fairness_weight != 0.0 {
            r += self.cfg.fairness_weight * network::jain_fairness(&rates.user_rates).unwrap_or(0.0);
        }

        self.last = rates.clone();
        Ok(StepOutcome {
            next_state: self.state(),
            reward: r,
            rates,
            flags,
            done: self.slot == self.cfg.episode_len,
        })
    }
}

fn initial_panels(cfg: &RisConfig) -> Vec<RisState> {
    cfg.elements
        .iter()
        .map(|&k| {
            let mut s = RisState::identity(k, cfg.mode);
            s.amplitudes = vec![cfg.amplitude; k];
            s
        })
        .collect()
}

pub fn action_spec(scenario: &ScenarioConfig) -> ActionSpec {
    let n = scenario.ris.action_entries();
    ActionSpec {
        n_phase: n,
        n_lambda: scenario.n_bs(),
        n_amp: n,
    }
}

/// `2 + M + amplification entries + 2`.
pub fn state_dim(scenario: &ScenarioConfig) -> usize {
    2 + scenario.n_bs() + scenario.ris.action_entries() + 2
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};

    fn hover(env: &Env) -> HybridAction {
        let spec = env.action_spec();
        let c = squash_action(&vec![0.0; spec.continuous_dim()], &spec, env.scenario().ris.s_max).unwrap();
        HybridAction::new(Move::Hover, c)
    }

    fn small_scenario() -> ScenarioConfig {
        ScenarioConfig {
            ris: RisConfig {
                elements: [4, 4],
                ..RisConfig::default()
            },
            placement_seed: Some(3),
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn reset_defaults() {
        let mut env = Env::new(small_scenario(), EnvConfig::default(), 1).unwrap();
        let s = env.reset(9).unwrap();
        assert_eq!(s.uav_xy, (-5.0, 0.0));
        assert_eq!(s.lambdas, vec![0.75; 3]);
        assert!(s.amplification_flat.iter().all(|&p| p == 1.0));
        assert_eq!(s.slot_index, 0);
        assert_eq!(s.dim(), 2 + 3 + 8 + 2);
        assert_eq!(s.dim(), env.state_dim());
        assert_eq!(env.reset(9).unwrap(), s);
    }

    #[test]
    fn hover_keeps_position() {
        let mut env = Env::new(small_scenario(), EnvConfig::default(), 1).unwrap();
        let a = hover(&env);
        let out = env.step(&a).unwrap();
        assert_eq!(out.next_state.uav_xy, (-5.0, 0.0));
        assert!(!out.flags.oob);
    }

    #[test]
    fn east_boundary_rejects_move() {
        let mut sc = small_scenario();
        sc.layout.uav_start = [50.0, 0.0, 40.0];
        let mut env = Env::new(sc, EnvConfig::default(), 1).unwrap();
        let mut a = hover(&env);
        a.movement = Move::Right;
        let out = env.step(&a).unwrap();
        assert_eq!(out.next_state.uav_xy, (50.0, 0.0));
        assert!(out.flags.oob);
        let d = env.topology().mean_uav_user_distance();
        let expect = reward(out.rates.r_total, d, true, &RewardParams::default());
        assert_eq!(out.reward, expect);
        assert!((out.reward - (out.rates.r_total - 10.0)).abs() < 1e-12 || d < 20.0);
    }

    #[test]
    fn no_fly_disk_rejects_move() {
        let mut sc = small_scenario();
        sc.layout.obstacles = vec![[-5.0, 12.0, 30.0]];
        sc.layout.uav_start = [-5.0, 0.0, 40.0];
        let mut env = Env::new(sc, EnvConfig::default(), 1).unwrap();
        let mut a = hover(&env);
        a.movement = Move::Up;
        let out = env.step(&a).unwrap();
        assert_eq!(out.next_state.uav_xy, (-5.0, 2.0));
        let out = env.step(&a).unwrap();
        assert_eq!(out.next_state.uav_xy, (-5.0, 2.0));
        assert!(out.flags.no_fly_violation && !out.flags.oob);
    }

    #[test]
    fn reward_examples() {
        let rp = RewardParams::default();
        assert_eq!(reward(5.0, 25.0, false, &rp), 5.0);
        let rp10 = RewardParams {
            xi_oob: 10.0,
            ..rp.clone()
        };
        assert_eq!(reward(5.0, 25.0, true, &rp10), -5.0);
        let rp_bonus = RewardParams {
            xi_dist: 1.0,
            c_const: 4.0,
            proximity_threshold: 10.0,
            xi_oob: 10.0,
        };
        assert!((reward(5.0, 2.0, false, &rp_bonus) - 7.0).abs() < 1e-15);
        assert!((reward(5.0, 0.0, false, &rp_bonus) - 45.0).abs() < 1e-12);
    }

    #[test]
    fn squash_midpoints_and_bounds() {
        let spec = ActionSpec {
            n_phase: 2,
            n_lambda: 1,
            n_amp: 1,
        };
        let c = squash_action(&[0.0; 4], &spec, 10.0).unwrap();
        assert_eq!(c.phases, vec![0.0, 0.0]);
        assert_eq!(c.lambdas, vec![0.75]);
        assert_eq!(c.amplification, vec![5.5]);
        let hi = squash_action(&[1e3, 40.0, 1e9, 1e6], &spec, 10.0).unwrap();
        assert!(hi.phases.iter().all(|&t| t < PI));
        assert!(hi.lambdas[0] < 1.0 && hi.amplification[0] < 10.0);
        let lo = squash_action(&[-1e3, -40.0, -1e9, -1e6], &spec, 10.0).unwrap();
        assert!(lo.phases.iter().all(|&t| t > -PI));
        assert!(lo.lambdas[0] > 0.5 && lo.amplification[0] > 1.0);
        assert!(squash_action(&[0.0; 3], &spec, 10.0).is_err());
    }

    #[test]
    fn squash_is_monotone() {
        let spec = ActionSpec {
            n_phase: 1,
            n_lambda: 1,
            n_amp: 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10_000 {
            let a: f64 = rng.random_range(-8.0..8.0);
            let b: f64 = rng.random_range(-8.0..8.0);
            if a == b {
                continue;
            }
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let sl = squash_action(&[lo; 3], &spec, 10.0).unwrap();
            let sh = squash_action(&[hi; 3], &spec, 10.0).unwrap();
            assert!(sl.phases[0] < sh.phases[0]);
            assert!(sl.lambdas[0] < sh.lambdas[0]);
            assert!(sl.amplification[0] < sh.amplification[0]);
        }
    }

    #[test]
    fn squash_jacobian_matches_finite_difference() {
        let spec = ActionSpec {
            n_phase: 1,
            n_lambda: 1,
            n_amp: 1,
        };
        for &x in &[-3.0, -0.4, 0.0, 0.7, 2.5] {
            let f = |x: f64| squash_action(&[x; 3], &spec, 10.0).unwrap();
            let h = 1e-6;
            let (p, m) = (f(x + h), f(x - h));
            let fd = ((p.phases[0] - m.phases[0]) / (2.0 * h)).ln()
                + ((p.lambdas[0] - m.lambdas[0]) / (2.0 * h)).ln()
                + ((p.amplification[0] - m.amplification[0]) / (2.0 * h)).ln();
            assert!((squash_log_jacobian(&[x; 3], &spec, 10.0) - fd).abs() < 1e-6);
        }
    }

    #[test]
    fn episode_ends_on_final_slot() {
        let cfg = EnvConfig {
            episode_len: 5,
            ..EnvConfig::default()
        };
        let mut env = Env::new(small_scenario(), cfg, 4).unwrap();
        let a = hover(&env);
        for t in 1..=5 {
            let out = env.step(&a).unwrap();
            assert_eq!(out.done, t == 5);
            assert_eq!(out.next_state.slot_index, t);
        }
        assert!(env.step(&a).is_err());
    }

    #[test]
    fn passive_mode_ignores_amplification() {
        let mut sc = small_scenario();
        sc.ris.mode = RisMode::Passive;
        let mut env = Env::new(sc, EnvConfig::default(), 2).unwrap();
        let a = hover(&env);
        let out = env.step(&a).unwrap();
        assert!(out.next_state.amplification_flat.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn frozen_controls_keep_initial_values() {
        let cfg = EnvConfig {
            freeze_power_and_amplification: true,
            ..EnvConfig::default()
        };
        let mut env = Env::new(small_scenario(), cfg, 2).unwrap();
        let spec = env.action_spec();
        let c = squash_action(&vec![1.0; spec.continuous_dim()], &spec, 10.0).unwrap();
        let out = env.step(&HybridAction::new(Move::Hover, c)).unwrap();
        assert_eq!(out.next_state.lambdas, vec![0.75; 3]);
        assert!(out.next_state.amplification_flat.iter().all(|&p| p == 1.0));
    }

    /// One element per panel, hand-set channels: the reward equals a rate
    /// computed term by term from the closed-form expressions.
    #[test]
    fn toy_reward_matches_hand_evaluation() {
        let mut sc = small_scenario();
        sc.ris.elements = [1, 1];
        let mut env = Env::new(sc, EnvConfig::default(), 6).unwrap();
        let c = |re: f64, im: f64| Complex64::new(re, im);
        // BS x user direct gains (3 BS, 6 users), one-element panels.
        let direct: Vec<Vec<Complex64>> = (0..3)
            .map(|m| (0..6).map(|u| c(1e-4 * (1 + m + u) as f64, 1e-5 * m as f64)).collect())
            .collect();
        let panels = (0..2)
            .map(|r| network::PanelLinks {
                h_bs: (0..3).map(|m| vec![c(1e-3 * (1 + r + m) as f64, 0.0)]).collect(),
                h_user: (0..6).map(|u| vec![c(0.0, 1e-3 * (1 + u) as f64)]).collect(),
            })
            .collect();
        let ch = ChannelRealization { direct, panels };
        env.channels = PreparedChannels::new(&ch);
        let spec = env.action_spec();
        let act = squash_action(&vec![0.3; spec.continuous_dim()], &spec, 10.0).unwrap();
        env.ris = env.scenario.ris.panel_states(&act.phases, &act.amplification);
        env.lambdas = act.lambdas.clone();
        let rep = env.evaluate().unwrap();

        // hand evaluation
        let p = env.radio.p_t;
        let s2 = env.radio.sigma2;
        let sv = env.noise.sigma_v2;
        let refl = Complex64::from_polar(act.amplification[0], act.phases[0]);
        let h = |m: usize, u: usize| {
            let mut g = ch.direct[m][u];
            for r in 0..2 {
                let refl = Complex64::from_polar(act.amplification[r], act.phases[r]);
                g += ch.panels[r].h_user[u][0] * refl * ch.panels[r].h_bs[m][0];
            }
            g
        };
        let _ = refl;
        let noise = |u: usize| -> f64 {
            (0..2)
                .map(|r| sv * ch.panels[r].h_user[u][0].norm_sqr() * act.amplification[r].powi(2))
                .sum()
        };
        let lam = &act.lambdas;
        let mut expect = 0.0;
        for (u, user) in env.topo.users.iter().enumerate() {
            match user.role {
                UserRole::Center { bs } => {
                    let i: f64 = (0..3).filter(|&j| j != bs).map(|j| p * h(j, u).norm_sqr()).sum();
                    let g = p * h(bs, u).norm_sqr() / (i + noise(u) + s2);
                    expect += (1.0 + (1.0 - lam[bs]) * g).log2();
                }
                UserRole::Edge { bs, partner } => {
                    let i: f64 = (0..3)
                        .filter(|&j| j != bs && j != partner)
                        .map(|j| p * h(j, u).norm_sqr())
                        .sum();
                    let gm = p * h(bs, u).norm_sqr() / (i + noise(u) + s2);
                    let gj = p * h(partner, u).norm_sqr() / (i + noise(u) + s2);
                    let (lm, lj) = (lam[bs], lam[partner]);
                    expect += (1.0 + (lm * gm + lj * gj) / ((1.0 - lm) * gm + (1.0 - lj) * gj + 1.0)).log2();
                }
            }
        }
        assert!((rep.r_total - expect).abs() < 1e-9, "{} vs {}", rep.r_total, expect);
        // far from every user: no indicator active
        let d = env.topo.mean_uav_user_distance();
        assert!(d >= 20.0);
        assert_eq!(reward(rep.r_total, d, false, &env.cfg.reward), rep.r_total);
    }

    #[test]
    fn same_seed_and_actions_reproduce() {
        let run = || {
            let mut env = Env::new(small_scenario(), EnvConfig::default(), 77).unwrap();
            let spec = env.action_spec();
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let mut out = Vec::new();
            for _ in 0..20 {
                let raw: Vec<f64> = (0..spec.continuous_dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
                let c = squash_action(&raw, &spec, 10.0).unwrap();
                let m = Move::from_index(rng.random_range(0..N_MOVES)).unwrap();
                out.push(env.step(&HybridAction::new(m, c)).unwrap());
            }
            out
        };
        assert_eq!(run(), run());
    }
}
