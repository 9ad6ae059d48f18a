//! RIS element state, cascaded channels and active-element noise.
//!
//! Both the amplification matrix and the phase-shift matrix are diagonal, so
//! they are stored as per-element vectors. An element reflects with complex
//! coefficient `p_k * a_k * exp(j theta_k)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ComplexGain;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RisMode {
    Active,
    Passive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RisState {
    pub phases: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub amplification: Vec<f64>,
    pub mode: RisMode,
}

impl RisState {
    /// Zero phase, unit amplitude, unit amplification.
    pub fn identity(k: usize, mode: RisMode) -> Self {
        Self {
            phases: vec![0.0; k],
            amplitudes: vec![1.0; k],
            amplification: vec![1.0; k],
            mode,
        }
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    /// Checks element-wise invariants. `s_max` bounds the amplification of
    /// active elements; pass `f64::INFINITY` when only the lower bound matters.
    pub fn validate(&self, s_max: f64) -> Result<()> {
        let k = self.phases.len();
        if self.amplitudes.len() != k || self.amplification.len() != k {
            return Err(Error::Validation(format!(
                "RIS vectors disagree in length: {} phases, {} amplitudes, {} amplification",
                k,
                self.amplitudes.len(),
                self.amplification.len()
            )));
        }
        for (i, &t) in self.phases.iter().enumerate() {
            if !(-PI..PI).contains(&t) {
                return Err(Error::Validation(format!("phase {t} of element {i} outside [-pi, pi)")));
            }
        }
        for (i, &a) in self.amplitudes.iter().enumerate() {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::Validation(format!("amplitude {a} of element {i} outside (0, 1]")));
            }
        }
        match self.mode {
            RisMode::Passive => {
                if let Some((i, p)) = self.amplification.iter().enumerate().find(|(_, &p)| p != 1.0) {
                    return Err(Error::Validation(format!(
                        "passive element {i} has amplification {p}, expected 1"
                    )));
                }
            }
            RisMode::Active => {
                for (i, &p) in self.amplification.iter().enumerate() {
                    if !(p >= 1.0 && p <= s_max) {
                        return Err(Error::Validation(format!(
                            "amplification {p} of element {i} outside [1, {s_max}]"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicNoiseParams {
    /// Per-element noise power injected by the reflection amplifier, watts.
    pub sigma_v2: f64,
}

/// Incoming (BS to RIS) and outgoing (RIS to user) channel vectors of one panel.
#[derive(Debug, Clone, Copy)]
pub struct CascadeInput<'a> {
    pub h_in: &'a [Complex64],
    pub h_out: &'a [Complex64],
}

impl<'a> CascadeInput<'a> {
    pub fn new(h_in: &'a [Complex64], h_out: &'a [Complex64]) -> Self {
        Self { h_in, h_out }
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_phase(theta: f64) -> f64 {
    let w = (theta + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can round up to exactly 2*pi for tiny negative inputs
    if w >= PI {
        -PI
    } else {
        w
    }
}

/// Diagonal of `P * Theta`.
pub fn reflection_matrix(s: &RisState) -> Result<Vec<Complex64>> {
    s.validate(f64::INFINITY)?;
    Ok(reflection_unchecked(s).collect())
}

fn reflection_unchecked(s: &RisState) -> impl Iterator<Item = Complex64> + '_ {
    s.phases
        .iter()
        .zip(&s.amplitudes)
        .zip(&s.amplification)
        .map(|((&t, &a), &p)| Complex64::from_polar(p * a, t))
}

fn check_lengths(c: &CascadeInput<'_>, s: &RisState) -> Result<()> {
    if c.h_in.len() != s.len() || c.h_out.len() != s.len() {
        return Err(Error::Validation(format!(
            "cascade length mismatch: h_in {}, h_out {}, RIS {}",
            c.h_in.len(),
            c.h_out.len(),
            s.len()
        )));
    }
    Ok(())
}

/// RIS term of the effective channel: `sum_k h_out,k * p_k a_k e^{j theta_k} * h_in,k`.
pub fn cascaded_gain(c: &CascadeInput<'_>, s: &RisState) -> Result<ComplexGain> {
    check_lengths(c, s)?;
    Ok(cascade_sum(c, s))
}

pub(crate) fn cascade_sum(c: &CascadeInput<'_>, s: &RisState) -> ComplexGain {
    c.h_in
        .iter()
        .zip(c.h_out)
        .zip(reflection_unchecked(s))
        .map(|((&hi, &ho), r)| ho * r * hi)
        .sum()
}

/// Direct path plus one RIS cascade.
pub fn effective_channel(direct: ComplexGain, c: &CascadeInput<'_>, s: &RisState) -> Result<ComplexGain> {
    Ok(direct + cascaded_gain(c, s)?)
}

/// Power of the amplified element noise seen at the receiver behind `h_out`.
/// Zero for a passive panel.
pub fn dynamic_noise_power(h_out: &[Complex64], s: &RisState, n: &DynamicNoiseParams) -> f64 {
    if s.mode == RisMode::Passive {
        return 0.0;
    }
    n.sigma_v2
        * h_out
            .iter()
            .zip(&s.amplitudes)
            .zip(&s.amplification)
            .map(|((h, &a), &p)| h.norm_sqr() * (p * a).powi(2))
            .sum::<f64>()
}

/// Per-element phases that rotate every cascade term onto the phase of the
/// direct path. Elements with a vanishing product get phase 0.
pub fn phase_align(c: &CascadeInput<'_>, direct: ComplexGain) -> Vec<f64> {
    let reference = if direct.norm() > 0.0 { direct.arg() } else { 0.0 };
    c.h_in
        .iter()
        .zip(c.h_out)
        .map(|(&hi, &ho)| {
            let prod = hi * ho;
            if prod.norm() == 0.0 {
                0.0
            } else {
                wrap_phase(reference - prod.arg())
            }
        })
        .collect()
}
