//! Physical constants, unit conversions and the small value types shared by
//! every other module.
//!
//! Everything inside the library is SI. Conversions to the laboratory units
//! (µm, MHz, eV, meV) happen only in [`units`] and at the config boundary.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// CODATA 2018 values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Elementary charge magnitude [C]. Electrons carry `-electron_charge`.
    pub electron_charge: f64,
    /// Electron rest mass [kg].
    pub electron_mass: f64,
    /// Vacuum permittivity [F/m].
    pub vacuum_permittivity: f64,
    /// Reduced Planck constant [J s].
    pub reduced_planck: f64,
}

pub const CODATA: PhysicalConstants = PhysicalConstants {
    electron_charge: 1.602_176_634e-19,
    electron_mass: 9.109_383_701_5e-31,
    vacuum_permittivity: 8.854_187_812_8e-12,
    reduced_planck: 1.054_571_817e-34,
};

/// Elementary charge [C].
pub const E_CHARGE: f64 = CODATA.electron_charge;
/// Electron mass [kg].
pub const E_MASS: f64 = CODATA.electron_mass;
/// Charge-to-mass ratio magnitude e/m [C/kg].
pub const E_OVER_M: f64 = E_CHARGE / E_MASS;
/// Signed electron charge Q = -e [C].
pub const ELECTRON_Q: f64 = -E_CHARGE;

pub mod units {
    use super::{E_CHARGE, TAU};

    pub fn ev_to_joule(ev: f64) -> f64 {
        ev * E_CHARGE
    }

    pub fn joule_to_ev(j: f64) -> f64 {
        j / E_CHARGE
    }

    pub fn mev_to_ev(mev: f64) -> f64 {
        mev * 1e-3
    }

    pub fn ev_to_mev(ev: f64) -> f64 {
        ev * 1e3
    }

    /// Angular frequency [rad/s] of an ordinary frequency given in MHz.
    pub fn mhz_to_rad_s(mhz: f64) -> f64 {
        TAU * mhz * 1e6
    }

    pub fn rad_s_to_mhz(omega: f64) -> f64 {
        omega / (TAU * 1e6)
    }

    pub fn um_to_m(um: f64) -> f64 {
        um * 1e-6
    }

    pub fn m_to_um(m: f64) -> f64 {
        m * 1e6
    }

    pub fn deg_to_rad(deg: f64) -> f64 {
        deg.to_radians()
    }
}

/// Cosine drive `V cos(Ω t + φ₀)` applied to the rf electrodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    /// Peak voltage V [V].
    pub amplitude: f64,
    /// Angular drive frequency Ω [rad/s].
    pub omega: f64,
    /// Initial phase φ₀ [rad], kept in [0, 2π).
    pub phase0: f64,
}

impl DriveParams {
    pub fn new(amplitude: f64, omega: f64, phase0: f64) -> Result<Self> {
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(Error::domain(format!("drive amplitude must be >= 0, got {amplitude}")));
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::domain(format!("drive frequency must be > 0, got {omega}")));
        }
        if !phase0.is_finite() {
            return Err(Error::domain("drive phase must be finite"));
        }
        Ok(Self {
            amplitude,
            omega,
            phase0: phase0.rem_euclid(TAU),
        })
    }

    /// Drive with ordinary frequency given in MHz and zero phase.
    pub fn from_mhz(amplitude: f64, freq_mhz: f64) -> Result<Self> {
        Self::new(amplitude, units::mhz_to_rad_s(freq_mhz), 0.0)
    }

    pub fn with_phase(self, phase0: f64) -> Self {
        Self {
            phase0: phase0.rem_euclid(TAU),
            ..self
        }
    }

    pub fn with_amplitude(self, amplitude: f64) -> Self {
        Self { amplitude, ..self }
    }

    /// Instantaneous scale factor `V cos(Ω t + φ₀)` applied to the unit-voltage field.
    #[inline]
    pub fn voltage_at(&self, t: f64) -> f64 {
        self.amplitude * (self.omega * t + self.phase0).cos()
    }

    pub fn period(&self) -> f64 {
        TAU / self.omega
    }
}

/// Phase-space state of a single electron.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub time: f64,
}

impl ParticleState {
    pub fn new(position: Vec3, velocity: Vec3, time: f64) -> Self {
        Self {
            position,
            velocity,
            time,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|c| c.is_finite())
            && self.velocity.iter().all(|c| c.is_finite())
            && self.time.is_finite()
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * E_MASS * self.velocity.norm_squared()
    }
}

/// Kinetic energy of the injected electrons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySpec {
    /// Kinetic energy [eV].
    pub kinetic_energy: f64,
}

impl EnergySpec {
    pub fn new(kinetic_energy_ev: f64) -> Result<Self> {
        if !(kinetic_energy_ev > 0.0 && kinetic_energy_ev.is_finite()) {
            return Err(Error::domain(format!(
                "kinetic energy must be > 0 eV, got {kinetic_energy_ev}"
            )));
        }
        Ok(Self {
            kinetic_energy: kinetic_energy_ev,
        })
    }

    pub fn joules(&self) -> f64 {
        units::ev_to_joule(self.kinetic_energy)
    }
}

/// Non-relativistic speed `sqrt(2E/m)` [m/s].
///
/// The relativistic correction is below 0.5 % up to 10 eV (v/c ≈ 0.6 %).
pub fn speed_from_energy(energy: EnergySpec) -> Result<f64> {
    // re-validate: the fields are public
    let e = EnergySpec::new(energy.kinetic_energy)?;
    Ok((2.0 * e.joules() / E_MASS).sqrt())
}

/// Convenience wrapper taking the energy in eV.
pub fn speed_from_ev(kinetic_energy_ev: f64) -> Result<f64> {
    speed_from_energy(EnergySpec::new(kinetic_energy_ev)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_energy_is_rejected() {
        assert!(matches!(speed_from_ev(0.0), Err(Error::Domain(_))));
        assert!(speed_from_ev(-1.0).is_err());
        assert!(speed_from_ev(f64::NAN).is_err());
    }

    #[test]
    fn speeds_at_typical_energies() {
        // hand evaluation of sqrt(2 E / m)
        let v2 = speed_from_ev(2.0).unwrap();
        assert_relative_eq!(v2, 8.387_0e5, max_relative = 1e-3);
        let v35 = speed_from_ev(3.5).unwrap();
        assert_relative_eq!(v35, 1.109_6e6, max_relative = 1e-3);
    }

    #[test]
    fn quadrupled_energy_doubles_speed() {
        for e in [0.1, 1.0, 2.0, 7.3] {
            let ratio = speed_from_ev(4.0 * e).unwrap() / speed_from_ev(e).unwrap();
            assert_relative_eq!(ratio, 2.0, max_relative = 1e-15);
        }
    }

    #[test]
    fn relativistic_error_is_small_at_ten_ev() {
        let c = 299_792_458.0;
        let v = speed_from_ev(10.0).unwrap();
        let gamma = 1.0 + 10.0 * E_CHARGE / (E_MASS * c * c);
        let v_rel = c * (1.0 - 1.0 / (gamma * gamma)).sqrt();
        assert!((v - v_rel).abs() / v_rel < 5e-3);
    }

    #[test]
    fn unit_round_trips() {
        for x in [1e-3, 0.5, 1.0, 33.0, 970.0, 1.234e4] {
            assert_relative_eq!(units::joule_to_ev(units::ev_to_joule(x)), x, max_relative = 1e-12);
            assert_relative_eq!(units::rad_s_to_mhz(units::mhz_to_rad_s(x)), x, max_relative = 1e-12);
            assert_relative_eq!(units::m_to_um(units::um_to_m(x)), x, max_relative = 1e-12);
            assert_relative_eq!(units::ev_to_mev(units::mev_to_ev(x)), x, max_relative = 1e-12);
        }
    }

    #[test]
    fn drive_validation_and_phase_wrap() {
        assert!(DriveParams::new(-1.0, 1.0, 0.0).is_err());
        assert!(DriveParams::new(1.0, 0.0, 0.0).is_err());
        let d = DriveParams::new(1.0, 1.0, 7.0).unwrap();
        assert!(d.phase0 >= 0.0 && d.phase0 < TAU);
        assert_relative_eq!(d.phase0, 7.0 - TAU, epsilon = 1e-15);
    }
}
