//! Wireless channel sampling.
//!
//! Large-scale attenuation follows a distance power law `d^alpha` normalised by
//! a reference gain `rho0` at 1 m. Small-scale fading is either Rayleigh
//! (BS to user) or Rician with a uniform-linear-array LoS steering vector
//! (links that touch an RIS panel).
//!
//! Every sampler takes the generator explicitly so that a realization is fully
//! determined by the seed and the call order.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Complex field amplitude of a single-antenna link.
pub type ComplexGain = Complex64;

/// Per-element channel to or from an RIS panel (length `K`).
pub type ComplexVector = Vec<Complex64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossParams {
    /// Linear power gain at the 1 m reference distance.
    pub rho0: f64,
    /// Path-loss exponent.
    pub alpha: f64,
}

impl PathLossParams {
    pub fn new(rho0: f64, alpha: f64) -> Result<Self> {
        let p = Self { rho0, alpha };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho0 > 0.0 && self.rho0.is_finite()) {
            return Err(Error::Validation(format!("rho0 must be positive, got {}", self.rho0)));
        }
        if !(self.alpha >= 2.0 && self.alpha.is_finite()) {
            return Err(Error::Validation(format!("path-loss exponent must be >= 2, got {}", self.alpha)));
        }
        Ok(())
    }

    /// Amplitude scale `sqrt(rho0 / d^alpha)` applied to a unit-power fading draw.
    pub fn amplitude(&self, d: f64) -> Result<f64> {
        Ok((self.rho0 / path_loss(d, self.alpha)?).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RicianParams {
    /// Linear K-factor (LoS to scattered power ratio).
    pub kappa: f64,
    /// Angle of arrival at the array, radians.
    pub aoa: f64,
}

impl RicianParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0) {
            return Err(Error::Validation(format!("Rician factor must be >= 0, got {}", self.kappa)));
        }
        if !(-PI / 2.0..=PI / 2.0).contains(&self.aoa) {
            return Err(Error::Validation(format!("angle of arrival {} outside [-pi/2, pi/2]", self.aoa)));
        }
        Ok(())
    }
}

/// Fading model of the RIS-to-user links.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RisUserFading {
    Rician,
    Rayleigh,
}

/// Per-link-class propagation parameters.
///
/// Links touching an RIS panel use `alpha_ris`; direct BS-user links use
/// `alpha_direct`. The two remaining exponents are carried for custom
/// scenarios and are not used by the default link mapping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkModel {
    pub rho0: f64,
    pub alpha_ris: f64,
    pub alpha_direct: f64,
    pub alpha_obstructed: f64,
    pub alpha_shadowed: f64,
    pub kappa: f64,
    pub ris_user_fading: RisUserFading,
}

impl Default for LinkModel {
    fn default() -> Self {
        Self {
            rho0: 1e-3,
            alpha_ris: 2.2,
            alpha_direct: 3.3,
            alpha_obstructed: 3.0,
            alpha_shadowed: 3.7,
            kappa: 2.0,
            ris_user_fading: RisUserFading::Rician,
        }
    }
}

impl LinkModel {
    pub fn direct_params(&self) -> PathLossParams {
        PathLossParams {
            rho0: self.rho0,
            alpha: self.alpha_direct,
        }
    }

    pub fn ris_params(&self) -> PathLossParams {
        PathLossParams {
            rho0: self.rho0,
            alpha: self.alpha_ris,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.direct_params().validate()?;
        self.ris_params().validate()?;
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::Validation(format!("Rician factor must be >= 0, got {}", self.kappa)));
        }
        Ok(())
    }
}

/// Large-scale attenuation divisor `d^alpha`.
pub fn path_loss(d: f64, alpha: f64) -> Result<f64> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::Domain(format!("link distance must be positive, got {d}")));
    }
    Ok(d.powf(alpha))
}

/// Circularly-symmetric complex Gaussian draw with unit mean power.
pub fn sample_rayleigh<R: Rng + ?Sized>(rng: &mut R) -> ComplexGain {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

/// ULA steering vector with half-wavelength spacing: element `k` (0-based) is
/// `exp(j k pi sin(aoa))`.
pub fn los_steering(aoa: f64, k_elems: usize) -> Result<ComplexVector> {
    if k_elems == 0 {
        return Err(Error::Domain("steering vector needs at least one element".into()));
    }
    let step = PI * aoa.sin();
    Ok((0..k_elems)
        .map(|k| Complex64::from_polar(1.0, k as f64 * step))
        .collect())
}

/// Rician-faded RIS channel vector with the given large-scale attenuation.
pub fn sample_rician<R: Rng + ?Sized>(
    p: &RicianParams,
    k_elems: usize,
    d: f64,
    pl: &PathLossParams,
    rng: &mut R,
) -> Result<ComplexVector> {
    let scale = pl.amplitude(d)?;
    let los = los_steering(p.aoa, k_elems)?;
    let w_los = (p.kappa / (1.0 + p.kappa)).sqrt();
    let w_nlos = (1.0 / (1.0 + p.kappa)).sqrt();
    Ok(los
        .into_iter()
        .map(|g| scale * (w_los * g + w_nlos * sample_rayleigh(rng)))
        .collect())
}

/// Rayleigh-faded vector with the given large-scale attenuation, used when
/// RIS-to-user links are configured without a LoS component.
pub fn sample_rayleigh_vector<R: Rng + ?Sized>(
    k_elems: usize,
    d: f64,
    pl: &PathLossParams,
    rng: &mut R,
) -> Result<ComplexVector> {
    if k_elems == 0 {
        return Err(Error::Domain("channel vector needs at least one element".into()));
    }
    let scale = pl.amplitude(d)?;
    Ok((0..k_elems).map(|_| scale * sample_rayleigh(rng)).collect())
}

/// Direct BS-to-user link.
pub fn sample_bs_user_channel<R: Rng + ?Sized>(
    d: f64,
    pl: &PathLossParams,
    rng: &mut R,
) -> Result<ComplexGain> {
    Ok(pl.amplitude(d)? * sample_rayleigh(rng))
}

/// Angle between the incoming direction and the array broadside, for an array
/// laid out along the x axis. Always in `[-pi/2, pi/2]`.
pub fn arrival_angle(array: [f64; 3], source: [f64; 3]) -> f64 {
    let dx = source[0] - array[0];
    let dy = source[1] - array[1];
    let dz = source[2] - array[2];
    let d = (dx * dx + dy * dy + dz * dz).sqrt();
    if d == 0.0 {
        return 0.0;
    }
    (dx / d).clamp(-1.0, 1.0).asin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn path_loss_examples() {
        assert_eq!(path_loss(1.0, 2.2).unwrap(), 1.0);
        assert!((path_loss(10.0, 2.0).unwrap() - 100.0).abs() < 1e-12);
        // 10^2.2 evaluated at 30 digits
        assert!((path_loss(10.0, 2.2).unwrap() - 158.489_319_246_111_35).abs() < 1e-9);
    }

    #[test]
    fn path_loss_rejects_degenerate_geometry() {
        assert!(matches!(path_loss(0.0, 2.0), Err(Error::Domain(_))));
        assert!(matches!(path_loss(-1.0, 2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn rayleigh_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let mut mean = Complex64::new(0.0, 0.0);
        let mut power = 0.0;
        for _ in 0..n {
            let v = sample_rayleigh(&mut rng);
            mean += v;
            power += v.norm_sqr();
        }
        mean /= n as f64;
        power /= n as f64;
        assert!((power - 1.0).abs() < 0.01, "power {power}");
        assert!(mean.norm() < 0.01, "mean {mean}");
    }

    #[test]
    fn rayleigh_is_deterministic_per_seed() {
        let a = sample_rayleigh(&mut ChaCha8Rng::seed_from_u64(5));
        let b = sample_rayleigh(&mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn steering_examples() {
        let one = Complex64::new(1.0, 0.0);
        let j = Complex64::new(0.0, 1.0);
        assert!(los_steering(0.0, 4).unwrap().iter().all(|&g| close(g, one, 1e-15)));
        let v = los_steering(PI / 2.0, 2).unwrap();
        assert!(close(v[0], one, 1e-15) && close(v[1], -one, 1e-12));
        let v = los_steering(PI / 6.0, 3).unwrap();
        assert!(close(v[0], one, 1e-12) && close(v[1], j, 1e-12) && close(v[2], -one, 1e-12));
        assert!(matches!(los_steering(0.3, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn rician_los_limit_is_scaled_steering() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pl = PathLossParams::new(1e-3, 2.2).unwrap();
        let p = RicianParams { kappa: 1e9, aoa: 0.4 };
        let d = 25.0;
        let v = sample_rician(&p, 8, d, &pl, &mut rng).unwrap();
        let expect = (pl.rho0 / d.powf(pl.alpha)).sqrt();
        for (g, s) in v.iter().zip(los_steering(0.4, 8).unwrap()) {
            assert!((g.norm() - expect).abs() < 1e-4);
            assert!(close(*g, expect * s, 1e-4 * expect.max(1e-4)));
        }
    }

    #[test]
    fn rician_nlos_limit_matches_rayleigh() {
        let pl = PathLossParams::new(1.0, 2.0).unwrap();
        let p = RicianParams { kappa: 0.0, aoa: 0.9 };
        let mut a = ChaCha8Rng::seed_from_u64(8);
        let mut b = ChaCha8Rng::seed_from_u64(8);
        let v = sample_rician(&p, 4, 3.0, &pl, &mut a).unwrap();
        for g in v {
            assert!(close(g, sample_rayleigh(&mut b) / 3.0, 1e-15));
        }
    }

    #[test]
    fn rician_unit_power_and_split() {
        let pl = PathLossParams::new(1.0, 2.0).unwrap();
        let p = RicianParams { kappa: 1.0, aoa: 0.2 };
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 1_000_000;
        let mut power = 0.0;
        for _ in 0..n {
            power += sample_rician(&p, 1, 1.0, &pl, &mut rng).unwrap()[0].norm_sqr();
        }
        assert!((power / n as f64 - 1.0).abs() < 0.01);
    }

    #[test]
    fn bs_user_power_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 1_000_000;
        let unit = PathLossParams::new(1.0, 3.3).unwrap();
        let sq = PathLossParams::new(1.0, 2.0).unwrap();
        let (mut p1, mut p10) = (0.0, 0.0);
        for _ in 0..n {
            p1 += sample_bs_user_channel(1.0, &unit, &mut rng).unwrap().norm_sqr();
            p10 += sample_bs_user_channel(10.0, &sq, &mut rng).unwrap().norm_sqr();
        }
        assert!((p1 / n as f64 - 1.0).abs() < 0.01);
        assert!((p10 / n as f64 - 0.01).abs() < 1e-4);
    }

    #[test]
    fn arrival_angle_is_bounded() {
        assert_eq!(arrival_angle([0.0; 3], [0.0, 5.0, 0.0]), 0.0);
        assert!((arrival_angle([0.0; 3], [3.0, 0.0, 0.0]) - PI / 2.0).abs() < 1e-12);
        assert!((arrival_angle([0.0; 3], [-3.0, 0.0, 0.0]) + PI / 2.0).abs() < 1e-12);
    }
}
