//! Multi-cell CoMP-NOMA downlink: topology, SINR, rate chains and power.
//!
//! Every BS serves one center user and one edge user through two-user NOMA.
//! An edge user is jointly served by its two nearest BSs (CoMP); all other BSs
//! contribute interference. The two RIS panels (ground and UAV-mounted) add a
//! cascade term to every BS-user link, including the interfering ones, and
//! active panels add amplified element noise at every receiver.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{self, ComplexVector, LinkModel, RisUserFading, RicianParams};
use crate::error::{Error, Result};
use crate::ris::{DynamicNoiseParams, RisMode, RisState};

pub type Position = [f64; 3];

/// Index of the ground panel in per-panel vectors.
pub const GROUND_RIS: usize = 0;
/// Index of the UAV-mounted panel in per-panel vectors.
pub const UAV_RIS: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn half_extent(&self) -> (f64, f64) {
        ((self.x_max - self.x_min) / 2.0, (self.y_max - self.y_min) / 2.0)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_max + self.x_min) / 2.0, (self.y_max + self.y_min) / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UserRole {
    /// Inside the cell radius, served by a single BS.
    Center { bs: usize },
    /// Outside the cell radius, served by `bs` (primary NOMA pair) and `partner` (CoMP).
    Edge { bs: usize, partner: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub pos: Position,
    pub role: UserRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub bs_positions: Vec<Position>,
    pub users: Vec<User>,
    pub obstacles: Vec<Position>,
    /// No-fly radius around every obstacle, meters.
    pub d_min: f64,
    pub ris_ground: Position,
    pub uav: Position,
    pub flight_area: Rect,
}

impl Topology {
    pub fn n_bs(&self) -> usize {
        self.bs_positions.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.n_bs();
        if m == 0 {
            return Err(Error::Validation("topology has no base stations".into()));
        }
        for (i, b) in self.bs_positions.iter().enumerate() {
            if !(b[2] > 0.0) {
                return Err(Error::Validation(format!("BS {i} height must be positive")));
            }
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            if !(o[2] > 0.0) {
                return Err(Error::Validation(format!("obstacle {i} height must be positive")));
            }
        }
        if !(self.ris_ground[2] > 0.0) || !(self.uav[2] > 0.0) {
            return Err(Error::Validation("RIS heights must be positive".into()));
        }
        for (i, u) in self.users.iter().enumerate() {
            match u.role {
                UserRole::Center { bs } if bs >= m => {
                    return Err(Error::Validation(format!("center user {i} served by missing BS {bs}")))
                }
                UserRole::Edge { bs, partner } if bs >= m || partner >= m || bs == partner => {
                    return Err(Error::Validation(format!(
                        "edge user {i} needs two distinct CoMP BSs, got ({bs}, {partner})"
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Center user index of each BS, if any.
    pub fn center_of(&self, bs: usize) -> Option<usize> {
        self.users
            .iter()
            .position(|u| matches!(u.role, UserRole::Center { bs: b } if b == bs))
    }

    /// Horizontal position is inside the flight area and clear of every no-fly disk.
    pub fn uav_position_allowed(&self, x: f64, y: f64) -> (bool, bool) {
        let inside = self.flight_area.contains(x, y);
        let clear = self
            .obstacles
            .iter()
            .all(|o| horizontal_distance([x, y, 0.0], *o) >= self.d_min);
        (inside, clear)
    }

    /// Mean horizontal distance from the UAV to all users.
    pub fn mean_uav_user_distance(&self) -> f64 {
        if self.users.is_empty() {
            return 0.0;
        }
        self.users
            .iter()
            .map(|u| horizontal_distance(self.uav, u.pos))
            .sum::<f64>()
            / self.users.len() as f64
    }

    /// Positions of the two RIS panels in panel order.
    pub fn ris_positions(&self) -> [Position; 2] {
        [self.ris_ground, self.uav]
    }
}

pub fn distance(a: Position, b: Position) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

pub fn horizontal_distance(a: Position, b: Position) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Placement recipe for random scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioLayout {
    pub bs_positions: Vec<Position>,
    /// Cell radius separating center users from edge users, meters.
    pub cell_radius: f64,
    /// Center users are placed at `[min_user_distance, center_radius]` from their BS.
    pub center_radius: f64,
    pub min_user_distance: f64,
    /// Edge users are placed at `[cell_radius, cell_radius + edge_width]`.
    pub edge_width: f64,
    pub obstacles: Vec<Position>,
    pub d_min: f64,
    /// Ground panel position; `None` places it at the BS circumcenter.
    pub ris_ground: Option<Position>,
    pub ris_ground_height: f64,
    pub uav_start: Position,
    pub flight_area: Rect,
}

impl Default for ScenarioLayout {
    fn default() -> Self {
        Self {
            bs_positions: vec![[-30.0, 30.0, 20.0], [30.0, 30.0, 20.0], [20.0, -30.0, 20.0]],
            cell_radius: 25.0,
            center_radius: 15.0,
            min_user_distance: 3.0,
            edge_width: 15.0,
            obstacles: Vec::new(),
            d_min: 10.0,
            ris_ground: None,
            ris_ground_height: 25.0,
            uav_start: [-5.0, 0.0, 40.0],
            flight_area: Rect {
                x_min: -50.0,
                x_max: 50.0,
                y_min: -50.0,
                y_max: 50.0,
            },
        }
    }
}

impl ScenarioLayout {
    /// Two-cell layout used by exhaustive-search checks.
    pub fn tiny() -> Self {
        Self {
            bs_positions: vec![[-30.0, 30.0, 20.0], [30.0, 30.0, 20.0]],
            ris_ground: Some([0.0, 30.0, 25.0]),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bs_positions.len() < 2 {
            return Err(Error::Config("CoMP needs at least two base stations".into()));
        }
        if !(self.min_user_distance > 0.0
            && self.center_radius > self.min_user_distance
            && self.cell_radius >= self.center_radius
            && self.edge_width > 0.0)
        {
            return Err(Error::Config("inconsistent user placement radii".into()));
        }
        if !(self.flight_area.x_max > self.flight_area.x_min && self.flight_area.y_max > self.flight_area.y_min) {
            return Err(Error::Config("flight area is empty".into()));
        }
        if !self.flight_area.contains(self.uav_start[0], self.uav_start[1]) {
            return Err(Error::Config("UAV start lies outside the flight area".into()));
        }
        if self
            .obstacles
            .iter()
            .any(|o| horizontal_distance(self.uav_start, *o) < self.d_min)
        {
            return Err(Error::Config("UAV start lies inside a no-fly zone".into()));
        }
        Ok(())
    }

    fn ground_ris_position(&self) -> Position {
        if let Some(p) = self.ris_ground {
            return p;
        }
        let (x, y) = circumcenter(&self.bs_positions);
        [x, y, self.ris_ground_height]
    }

    /// Draws user positions: one center and one edge user per BS. Edge users
    /// are rejection-sampled until their own BS is the nearest one, and the
    /// second-nearest BS becomes the CoMP partner.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Topology> {
        self.validate()?;
        let bs = &self.bs_positions;
        let mut users = Vec::with_capacity(2 * bs.len());
        for (m, p) in bs.iter().enumerate() {
            let (x, y) = sample_annulus(rng, *p, self.min_user_distance, self.center_radius);
            users.push(User {
                pos: [x, y, 0.0],
                role: UserRole::Center { bs: m },
            });
        }
        for (m, p) in bs.iter().enumerate() {
            let mut pos = None;
            for _ in 0..1000 {
                let (x, y) = sample_annulus(rng, *p, self.cell_radius, self.cell_radius + self.edge_width);
                let order = nearest_bs([x, y, 0.0], bs);
                if order[0] == m {
                    pos = Some(([x, y, 0.0], order[1]));
                    break;
                }
            }
            let (pos, partner) = pos.ok_or_else(|| {
                Error::Config(format!("could not place an edge user for BS {m}; cells overlap too much"))
            })?;
            users.push(User {
                pos,
                role: UserRole::Edge { bs: m, partner },
            });
        }
        let topo = Topology {
            bs_positions: bs.clone(),
            users,
            obstacles: self.obstacles.clone(),
            d_min: self.d_min,
            ris_ground: self.ground_ris_position(),
            uav: self.uav_start,
            flight_area: self.flight_area,
        };
        topo.validate()?;
        Ok(topo)
    }
}

fn sample_annulus<R: Rng + ?Sized>(rng: &mut R, c: Position, r_in: f64, r_out: f64) -> (f64, f64) {
    // area-uniform radius
    let u: f64 = rng.random();
    let r = (r_in * r_in + u * (r_out * r_out - r_in * r_in)).sqrt();
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    (c[0] + r * phi.cos(), c[1] + r * phi.sin())
}

/// BS indices sorted by horizontal distance to `p` (ties by index).
fn nearest_bs(p: Position, bs: &[Position]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..bs.len()).collect();
    idx.sort_by(|&a, &b| {
        horizontal_distance(p, bs[a])
            .total_cmp(&horizontal_distance(p, bs[b]))
            .then(a.cmp(&b))
    });
    idx
}

/// Point equidistant from the first three positions; falls back to the
/// centroid for fewer points or collinear triples.
fn circumcenter(pts: &[Position]) -> (f64, f64) {
    let centroid = || {
        let n = pts.len() as f64;
        (
            pts.iter().map(|p| p[0]).sum::<f64>() / n,
            pts.iter().map(|p| p[1]).sum::<f64>() / n,
        )
    };
    if pts.len() < 3 {
        return centroid();
    }
    let (ax, ay) = (pts[0][0], pts[0][1]);
    let (bx, by) = (pts[1][0], pts[1][1]);
    let (cx, cy) = (pts[2][0], pts[2][1]);
    let d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by));
    if d.abs() < 1e-9 {
        return centroid();
    }
    let a2 = ax * ax + ay * ay;
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    (
        (a2 * (by - cy) + b2 * (cy - ay) + c2 * (ay - by)) / d,
        (a2 * (cx - bx) + b2 * (ax - cx) + c2 * (bx - ax)) / d,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NomaPowerAlloc {
    /// Edge-user power share per BS.
    pub lambdas: Vec<f64>,
}

impl NomaPowerAlloc {
    pub fn uniform(m: usize, lambda: f64) -> Self {
        Self {
            lambdas: vec![lambda; m],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (m, &l) in self.lambdas.iter().enumerate() {
            if !(l > 0.5 && l < 1.0) {
                return Err(Error::Validation(format!("power share {l} of BS {m} outside (0.5, 1)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioConfig {
    /// Common BS transmit power, watts.
    pub p_t: f64,
    /// Optional per-BS override of `p_t`, watts.
    pub p_t_per_bs: Option<Vec<f64>>,
    /// Receiver noise power, watts.
    pub sigma2: f64,
    pub bandwidth: f64,
    pub carrier: f64,
}

impl RadioConfig {
    pub fn bs_power(&self, m: usize) -> f64 {
        self.p_t_per_bs
            .as_ref()
            .and_then(|v| v.get(m).copied())
            .unwrap_or(self.p_t)
    }

    pub fn total_transmit_power(&self, n_bs: usize) -> f64 {
        (0..n_bs).map(|m| self.bs_power(m)).sum()
    }

    pub fn validate(&self, n_bs: usize) -> Result<()> {
        if !(self.p_t > 0.0 && self.sigma2 > 0.0 && self.bandwidth > 0.0 && self.carrier > 0.0) {
            return Err(Error::Validation("radio parameters must be positive".into()));
        }
        if let Some(v) = &self.p_t_per_bs {
            if v.len() != n_bs || v.iter().any(|&p| !(p > 0.0)) {
                return Err(Error::Validation("per-BS powers must be positive, one per BS".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerModel {
    /// Static consumption per BS, watts.
    pub p_bs_static: f64,
    /// Amplification efficiency factor per panel, in panel order.
    pub eta_ris: [f64; 2],
    pub p_circuit_per_elem: f64,
    pub p_uav_hover: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        Self {
            p_bs_static: 5.0,
            eta_ris: [1.25, 1.25],
            p_circuit_per_elem: 0.01,
            p_uav_hover: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeRateVariant {
    /// Interference terms pair each power share with its own SINR.
    Corrected,
    /// Both interference terms use the partner BS SINR.
    Literal,
}

/// SIC diagnostics for one NOMA pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairRate {
    pub bs: usize,
    pub center: usize,
    pub edge: usize,
    /// Rate at which the center user decodes the edge message.
    pub r_c_to_e: f64,
    pub sic_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// Per-user rates, bits/s/Hz, in topology user order.
    pub user_rates: Vec<f64>,
    pub pairs: Vec<PairRate>,
    pub sum_center: f64,
    pub sum_edge: f64,
    pub r_total: f64,
}

impl RateReport {
    pub fn worst_user_rate(&self) -> f64 {
        self.user_rates.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

/// Thermal noise floor over `bandwidth` Hz, dBm.
pub fn noise_power_dbm(bandwidth: f64) -> Result<f64> {
    if !(bandwidth > 0.0) {
        return Err(Error::Domain(format!("bandwidth must be positive, got {bandwidth}")));
    }
    Ok(-174.0 + 10.0 * bandwidth.log10())
}

/// General SINR: `p_serving |H|^2 / (sum p_j |H_j|^2 + ris_noise + sigma2)`.
pub fn sinr(p_serving: f64, gain: Complex64, interferers: &[(f64, Complex64)], ris_noise: f64, sigma2: f64) -> f64 {
    let interference: f64 = interferers.iter().map(|(p, h)| p * h.norm_sqr()).sum();
    p_serving * gain.norm_sqr() / (interference + ris_noise + sigma2)
}

/// SINR of a center user with equal transmit power at every BS.
pub fn center_sinr(effective_gain_m: Complex64, interferer_gains: &[Complex64], ris_noise: f64, cfg: &RadioConfig) -> f64 {
    let interference: f64 = interferer_gains.iter().map(|h| cfg.p_t * h.norm_sqr()).sum();
    cfg.p_t * effective_gain_m.norm_sqr() / (interference + ris_noise + cfg.sigma2)
}

/// Rate at which the center user decodes the edge user's message before SIC.
pub fn rate_decode_edge_at_center(lambda_m: f64, gamma_m: f64) -> f64 {
    (1.0 + lambda_m * gamma_m / ((1.0 - lambda_m) * gamma_m + 1.0)).log2()
}

/// Center user rate after cancelling the edge message.
pub fn rate_center(lambda_m: f64, gamma_m: f64) -> f64 {
    (1.0 + (1.0 - lambda_m) * gamma_m).log2()
}

/// Edge user rate under CoMP joint transmission from BSs `m` and `j`.
pub fn rate_edge(lambda_m: f64, gamma_m: f64, lambda_j: f64, gamma_j: f64, variant: EdgeRateVariant) -> f64 {
    let num = lambda_m * gamma_m + lambda_j * gamma_j;
    let den = match variant {
        EdgeRateVariant::Corrected => (1.0 - lambda_m) * gamma_m + (1.0 - lambda_j) * gamma_j + 1.0,
        EdgeRateVariant::Literal => (1.0 - lambda_m) * gamma_j + (1.0 - lambda_j) * gamma_j + 1.0,
    };
    (1.0 + num / den).log2()
}

/// Whether the center user can decode the edge message it must cancel.
pub fn sic_feasibility(r_c_to_e: f64, r_e: f64) -> bool {
    r_c_to_e >= r_e
}

/// Assembles a report from per-user rates; center and edge sums follow the roles.
pub fn sum_rate(topology: &Topology, user_rates: Vec<f64>, pairs: Vec<PairRate>) -> RateReport {
    let mut sum_center = 0.0;
    let mut sum_edge = 0.0;
    for (u, r) in topology.users.iter().zip(&user_rates) {
        match u.role {
            UserRole::Center { .. } => sum_center += r,
            UserRole::Edge { .. } => sum_edge += r,
        }
    }
    RateReport {
        user_rates,
        pairs,
        sum_center,
        sum_edge,
        r_total: sum_center + sum_edge,
    }
}

/// Total consumed power: BSs, both RIS panels, UAV hover.
///
/// `incoming_powers[r][k]` is the signal power impinging on element `k` of panel `r`.
/// The amplification term only applies to active panels.
pub fn total_power(
    pm: &PowerModel,
    ris_states: &[RisState],
    incoming_powers: &[Vec<f64>],
    radio: &RadioConfig,
    n_bs: usize,
) -> f64 {
    let bs = n_bs as f64 * pm.p_bs_static + radio.total_transmit_power(n_bs);
    let mut ris = 0.0;
    for (r, s) in ris_states.iter().enumerate() {
        let eta = pm.eta_ris.get(r).copied().unwrap_or(0.0);
        for k in 0..s.len() {
            if s.mode == RisMode::Active {
                let gain = s.amplification[k] * s.amplitudes[k];
                let p_in = incoming_powers.get(r).and_then(|v| v.get(k)).copied().unwrap_or(0.0);
                ris += eta * gain * gain * p_in;
            }
            ris += pm.p_circuit_per_elem;
        }
    }
    bs + ris + pm.p_uav_hover
}

/// Delivered bits per joule.
pub fn energy_efficiency(r_total: f64, bandwidth: f64, p_total: f64) -> Result<f64> {
    if !(p_total > 0.0) {
        return Err(Error::Domain(format!("total power must be positive, got {p_total}")));
    }
    Ok(r_total * bandwidth / p_total)
}

/// Fraction of realizations whose worst user falls below `r_min`.
pub fn outage_probability(reports: &[RateReport], r_min: f64) -> Result<f64> {
    if reports.is_empty() {
        return Err(Error::Domain("outage over zero realizations".into()));
    }
    let n_out = reports.iter().filter(|r| r.worst_user_rate() < r_min).count();
    Ok(n_out as f64 / reports.len() as f64)
}

/// Jain's index `(sum r)^2 / (n sum r^2)`.
pub fn jain_fairness(rates: &[f64]) -> Result<f64> {
    if rates.is_empty() {
        return Err(Error::Domain("fairness of an empty rate vector".into()));
    }
    if rates.iter().any(|&r| r < 0.0) {
        return Err(Error::Domain("negative rate".into()));
    }
    let s: f64 = rates.iter().sum();
    let s2: f64 = rates.iter().map(|r| r * r).sum();
    if s2 == 0.0 {
        return Err(Error::Domain("fairness of all-zero rates".into()));
    }
    Ok(s * s / (rates.len() as f64 * s2))
}

/// One block-fading realization of every link.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// `direct[m][u]`: BS-user link.
    pub direct: Vec<Vec<Complex64>>,
    /// Per panel: `h_bs[m]` BS-to-panel and `h_user[u]` panel-to-user vectors.
    pub panels: Vec<PanelLinks>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelLinks {
    pub h_bs: Vec<ComplexVector>,
    pub h_user: Vec<ComplexVector>,
}

impl ChannelRealization {
    /// Samples every link. Draw order: direct links (BS-major), then per panel
    /// the BS-to-panel vectors followed by the panel-to-user vectors.
    pub fn sample<R: Rng + ?Sized>(
        topo: &Topology,
        model: &LinkModel,
        elements: [usize; 2],
        rng: &mut R,
    ) -> Result<Self> {
        let direct_pl = model.direct_params();
        let ris_pl = model.ris_params();
        let mut direct = Vec::with_capacity(topo.n_bs());
        for b in &topo.bs_positions {
            let row = topo
                .users
                .iter()
                .map(|u| channel::sample_bs_user_channel(distance(*b, u.pos), &direct_pl, rng))
                .collect::<Result<Vec<_>>>()?;
            direct.push(row);
        }
        let mut panels = Vec::with_capacity(2);
        for (pos, &k) in topo.ris_positions().iter().zip(&elements) {
            if k == 0 {
                panels.push(PanelLinks {
                    h_bs: vec![Vec::new(); topo.n_bs()],
                    h_user: vec![Vec::new(); topo.users.len()],
                });
                continue;
            }
            let h_bs = topo
                .bs_positions
                .iter()
                .map(|b| {
                    let p = RicianParams {
                        kappa: model.kappa,
                        aoa: channel::arrival_angle(*pos, *b),
                    };
                    channel::sample_rician(&p, k, distance(*pos, *b), &ris_pl, rng)
                })
                .collect::<Result<Vec<_>>>()?;
            let h_user = topo
                .users
                .iter()
                .map(|u| {
                    let d = distance(*pos, u.pos);
                    match model.ris_user_fading {
                        RisUserFading::Rician => {
                            let p = RicianParams {
                                kappa: model.kappa,
                                aoa: channel::arrival_angle(*pos, u.pos),
                            };
                            channel::sample_rician(&p, k, d, &ris_pl, rng)
                        }
                        RisUserFading::Rayleigh => channel::sample_rayleigh_vector(k, d, &ris_pl, rng),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            panels.push(PanelLinks { h_bs, h_user });
        }
        Ok(Self { direct, panels })
    }

    pub fn n_bs(&self) -> usize {
        self.direct.len()
    }

    pub fn n_users(&self) -> usize {
        self.direct.first().map_or(0, Vec::len)
    }

    /// Signal power arriving at each element of each panel from all BSs.
    pub fn incoming_powers(&self, radio: &RadioConfig) -> Vec<Vec<f64>> {
        self.panels
            .iter()
            .map(|p| {
                let k = p.h_bs.first().map_or(0, Vec::len);
                (0..k)
                    .map(|e| {
                        p.h_bs
                            .iter()
                            .enumerate()
                            .map(|(m, h)| radio.bs_power(m) * h[e].norm_sqr())
                            .sum()
                    })
                    .collect()
            })
            .collect()
    }
}

/// Channel realization with the per-element cascade products precomputed, so
/// that many RIS configurations can be evaluated against one draw.
#[derive(Debug, Clone)]
pub struct PreparedChannels {
    direct: Vec<Vec<Complex64>>,
    /// `cascade[r][m][u][k] = h_user[u][k] * h_bs[m][k]` for panel `r`.
    cascade: Vec<Vec<Vec<Vec<Complex64>>>>,
    /// `noise_weight[r][u][k] = |h_user[u][k]|^2`.
    noise_weight: Vec<Vec<Vec<f64>>>,
}

impl PreparedChannels {
    pub fn new(ch: &ChannelRealization) -> Self {
        let cascade = ch
            .panels
            .iter()
            .map(|p| {
                p.h_bs
                    .iter()
                    .map(|hb| {
                        p.h_user
                            .iter()
                            .map(|hu| hu.iter().zip(hb).map(|(a, b)| a * b).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let noise_weight = ch
            .panels
            .iter()
            .map(|p| p.h_user.iter().map(|hu| hu.iter().map(|h| h.norm_sqr()).collect()).collect())
            .collect();
        Self {
            direct: ch.direct.clone(),
            cascade,
            noise_weight,
        }
    }

    pub fn n_bs(&self) -> usize {
        self.direct.len()
    }

    pub fn n_users(&self) -> usize {
        self.direct.first().map_or(0, Vec::len)
    }

    fn check_states(&self, states: &[RisState]) -> Result<()> {
        if states.len() != self.cascade.len() {
            return Err(Error::Validation(format!(
                "{} RIS states for {} panels",
                states.len(),
                self.cascade.len()
            )));
        }
        for (r, s) in states.iter().enumerate() {
            let k = self.noise_weight[r].first().map_or(0, Vec::len);
            if s.len() != k {
                return Err(Error::Validation(format!("panel {r} has {k} elements, state has {}", s.len())));
            }
        }
        Ok(())
    }

    /// Effective channel matrix `H[m][u]` and per-user RIS noise for the
    /// given panel states.
    pub fn compose(&self, states: &[RisState], noise: &DynamicNoiseParams) -> Result<ComposedLinks> {
        self.check_states(states)?;
        let refl: Vec<Vec<Complex64>> = states
            .iter()
            .map(|s| {
                s.phases
                    .iter()
                    .zip(&s.amplitudes)
                    .zip(&s.amplification)
                    .map(|((&t, &a), &p)| Complex64::from_polar(p * a, t))
                    .collect()
            })
            .collect();
        let mut gains = self.direct.clone();
        for (r, panel) in self.cascade.iter().enumerate() {
            for (m, row) in panel.iter().enumerate() {
                for (u, prod) in row.iter().enumerate() {
                    gains[m][u] += prod.iter().zip(&refl[r]).map(|(a, b)| a * b).sum::<Complex64>();
                }
            }
        }
        let n_users = self.n_users();
        let mut ris_noise = vec![0.0; n_users];
        for (r, s) in states.iter().enumerate() {
            if s.mode == RisMode::Passive {
                continue;
            }
            for (u, w) in self.noise_weight[r].iter().enumerate() {
                ris_noise[u] += noise.sigma_v2
                    * w.iter()
                        .zip(&s.amplitudes)
                        .zip(&s.amplification)
                        .map(|((w, a), p)| w * (p * a).powi(2))
                        .sum::<f64>();
            }
        }
        Ok(ComposedLinks { gains, ris_noise })
    }
}

/// Effective BS-user channels for one RIS configuration.
#[derive(Debug, Clone)]
pub struct ComposedLinks {
    pub gains: Vec<Vec<Complex64>>,
    pub ris_noise: Vec<f64>,
}

impl ComposedLinks {
    /// SINR of user `u` for the signal of BS `m`, with every BS outside
    /// `serving` counted as interference.
    pub fn sinr(&self, u: usize, m: usize, serving: &[usize], radio: &RadioConfig) -> f64 {
        let interference: f64 = (0..self.gains.len())
            .filter(|j| !serving.contains(j))
            .map(|j| radio.bs_power(j) * self.gains[j][u].norm_sqr())
            .sum();
        radio.bs_power(m) * self.gains[m][u].norm_sqr() / (interference + self.ris_noise[u] + radio.sigma2)
    }
}

/// NOMA + CoMP rates for every user of `topo`.
pub fn noma_rates(
    topo: &Topology,
    links: &ComposedLinks,
    alloc: &NomaPowerAlloc,
    radio: &RadioConfig,
    variant: EdgeRateVariant,
) -> Result<RateReport> {
    if alloc.lambdas.len() != topo.n_bs() {
        return Err(Error::Validation(format!(
            "{} power shares for {} BSs",
            alloc.lambdas.len(),
            topo.n_bs()
        )));
    }
    let lam = &alloc.lambdas;
    let mut rates = vec![0.0; topo.users.len()];
    let mut center_gamma = vec![None; topo.n_bs()];
    for (u, user) in topo.users.iter().enumerate() {
        if let UserRole::Center { bs } = user.role {
            let g = links.sinr(u, bs, &[bs], radio);
            center_gamma[bs] = Some((u, g));
            rates[u] = rate_center(lam[bs], g);
        }
    }
    let mut pairs = Vec::new();
    for (u, user) in topo.users.iter().enumerate() {
        if let UserRole::Edge { bs, partner } = user.role {
            let serving = [bs, partner];
            let g_m = links.sinr(u, bs, &serving, radio);
            let g_j = links.sinr(u, partner, &serving, radio);
            let r_e = rate_edge(lam[bs], g_m, lam[partner], g_j, variant);
            rates[u] = r_e;
            if let Some((c, g_c)) = center_gamma[bs] {
                let r_ce = rate_decode_edge_at_center(lam[bs], g_c);
                pairs.push(PairRate {
                    bs,
                    center: c,
                    edge: u,
                    r_c_to_e: r_ce,
                    sic_ok: sic_feasibility(r_ce, r_e),
                });
            }
        }
    }
    Ok(sum_rate(topo, rates, pairs))
}

/// Orthogonal baseline: every BS serves its two users in equal time shares at
/// full power, without CoMP. Each user sees all other BSs as interference.
pub fn oma_rates(topo: &Topology, links: &ComposedLinks, radio: &RadioConfig) -> RateReport {
    let rates = topo
        .users
        .iter()
        .enumerate()
        .map(|(u, user)| {
            let bs = match user.role {
                UserRole::Center { bs } | UserRole::Edge { bs, .. } => bs,
            };
            0.5 * (1.0 + links.sinr(u, bs, &[bs], radio)).log2()
        })
        .collect();
    sum_rate(topo, rates, Vec::new())
}
