//! Closed-form design scalings: anomalous heating, Coulomb coupling between
//! neighbouring guides and the secular frequency and depth of a rescaled guide.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DriveParams, CODATA, E_CHARGE, E_MASS};
use crate::stability::{depth_from_u, ideal_relations, q_parameter};

/// Electric-field noise density `S_E(ω, R) = S_ref (ω_ref/ω) (R_ref/R)⁴`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    /// [V² m⁻² Hz⁻¹]
    pub reference_density: f64,
    /// [rad/s]
    pub reference_omega: f64,
    /// [m]
    pub reference_distance: f64,
}

impl NoiseModel {
    /// Noise level at which a guide at `(omega, distance)` heats at `rate` quanta/s.
    pub fn anchored(rate: f64, omega: f64, distance: f64) -> Result<Self> {
        if !(rate >= 0.0 && omega > 0.0 && distance > 0.0) {
            return Err(Error::domain("anchor needs rate >= 0, omega > 0, distance > 0"));
        }
        Ok(Self {
            reference_density: rate * 4.0 * E_MASS * CODATA.reduced_planck * omega / (E_CHARGE * E_CHARGE),
            reference_omega: omega,
            reference_distance: distance,
        })
    }

    /// [V² m⁻² Hz⁻¹]
    pub fn density(&self, omega: f64, distance: f64) -> f64 {
        self.reference_density * (self.reference_omega / omega) * (self.reference_distance / distance).powi(4)
    }
}

impl Default for NoiseModel {
    /// 30 quanta/s at ω = 2π·100 MHz and 500 µm above the surface.
    fn default() -> Self {
        Self::anchored(30.0, TAU * 100e6, 500e-6).expect("valid anchor")
    }
}

/// `ṅ = e² S_E(ω, R) / (4 m ħ ω)` [quanta/s].
///
/// The noise density is taken to fall as `1/(ω R⁴)`.
pub fn heating_rate(omega: f64, distance: f64, noise: &NoiseModel) -> Result<f64> {
    if !(omega > 0.0 && distance > 0.0) {
        return Err(Error::domain("heating rate needs omega > 0 and distance > 0"));
    }
    Ok(E_CHARGE * E_CHARGE * noise.density(omega, distance) / (4.0 * E_MASS * CODATA.reduced_planck * omega))
}

/// Secular periods completed before one quantum is gained on average, `ω / (2π ṅ)`.
pub fn oscillations_before_excitation(omega: f64, rate: f64) -> f64 {
    omega / (TAU * rate)
}

/// Exchange rate `Ω_c = e² / (2π ε₀ m ω d³)` [rad/s] between electrons in
/// two guides a distance `d` apart, both oscillating at `ω`.
pub fn coupling_strength(omega: f64, distance: f64) -> Result<f64> {
    if !(omega > 0.0 && distance > 0.0) {
        return Err(Error::domain("coupling needs omega > 0 and distance > 0"));
    }
    Ok(E_CHARGE * E_CHARGE / (2.0 * PI * CODATA.vacuum_permittivity * E_MASS * omega * distance.powi(3)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint {
    pub q: f64,
    /// Secular frequency [rad/s].
    pub omega: f64,
    /// [eV]
    pub depth: f64,
}

/// Stability parameter, secular frequency and depth of a guide at height
/// `guide_height` driven with `amplitude` at `drive_omega`.
pub fn scale_design(guide_height: f64, drive_omega: f64, amplitude: f64, eta: f64, u_factor: f64) -> Result<DesignPoint> {
    if !(eta > 0.0 && u_factor > 0.0) {
        return Err(Error::domain("eta and u must be > 0"));
    }
    let drive = DriveParams::new(amplitude, drive_omega, 0.0)?;
    let q = q_parameter(&drive, guide_height, eta)?;
    let (omega, _) = ideal_relations(q, &drive);
    Ok(DesignPoint {
        q,
        omega,
        depth: depth_from_u(&drive, guide_height, u_factor)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn default_anchor_is_exact() {
        let n = NoiseModel::default();
        assert_relative_eq!(heating_rate(TAU * 100e6, 500e-6, &n).unwrap(), 30.0, max_relative = 1e-12);
        let silent = NoiseModel {
            reference_density: 0.0,
            ..n
        };
        assert_eq!(heating_rate(TAU * 100e6, 500e-6, &silent).unwrap(), 0.0);
    }

    #[test]
    fn power_laws() {
        let n = NoiseModel::default();
        let (w, r) = (TAU * 250e6, 120e-6);
        let slope = |f: &dyn Fn(f64) -> f64, x: f64| (f(2.0 * x) / f(x)).log2();
        assert_relative_eq!(slope(&|w| heating_rate(w, r, &n).unwrap(), w), -2.0, epsilon = 1e-9);
        assert_relative_eq!(slope(&|r| heating_rate(w, r, &n).unwrap(), r), -4.0, epsilon = 1e-9);
        assert_relative_eq!(slope(&|w| coupling_strength(w, r).unwrap(), w), -1.0, epsilon = 1e-9);
        assert_relative_eq!(slope(&|d| coupling_strength(w, d).unwrap(), r), -3.0, epsilon = 1e-9);
        let c = coupling_strength(w, r).unwrap();
        assert_relative_eq!(coupling_strength(w, 8.0 * r).unwrap(), c / 512.0, max_relative = 1e-14);
    }

    #[test]
    fn zero_voltage_gives_zero_design() {
        let d = scale_design(500e-6, TAU * 970e6, 0.0, 0.31, 0.0079).unwrap();
        assert_eq!((d.q, d.omega, d.depth), (0.0, 0.0, 0.0));
    }

    #[test]
    fn scale_design_matches_stability_formulas() {
        let drive = DriveParams::new(33.0, TAU * 970e6, 0.0).unwrap();
        let d = scale_design(500e-6, drive.omega, 33.0, 0.31, 0.0079).unwrap();
        let q = q_parameter(&drive, 500e-6, 0.31).unwrap();
        assert_eq!(d.q, q);
        assert_eq!(d.omega, ideal_relations(q, &drive).0);
        assert_eq!(d.depth, depth_from_u(&drive, 500e-6, 0.0079).unwrap());
    }
}
