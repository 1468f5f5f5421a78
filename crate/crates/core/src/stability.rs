//! Pseudopotential, trap characterization and Mathieu stability.
//!
//! Depths are reported in eV. The depth relation uses
//! `U = u e² V² / (4 m Ω² R²)`, so an ideal quadrupole has `u = 1` when the
//! depth is taken at the electrode radius (`U = q V / 8`).

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{Matrix2, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ElectrodeLayout;
use crate::model::{DriveParams, Vec3, E_CHARGE, E_MASS, E_OVER_M};

const SQRT_8: f64 = 2.0 * SQRT_2;

/// Time-averaged potential energy of an electron in the drive field.
#[derive(Debug, Clone, Copy)]
pub struct PseudoPotentialField<'a> {
    layout: &'a ElectrodeLayout,
    drive: DriveParams,
    /// `e V² / (4 m Ω²)` [eV m² / V²], multiplies the unit-voltage |E|².
    prefactor: f64,
}

impl<'a> PseudoPotentialField<'a> {
    pub fn new(layout: &'a ElectrodeLayout, drive: DriveParams) -> Result<Self> {
        if !(drive.omega > 0.0 && drive.omega.is_finite()) {
            return Err(Error::domain("pseudopotential needs a drive frequency > 0"));
        }
        let prefactor = E_CHARGE * drive.amplitude * drive.amplitude / (4.0 * E_MASS * drive.omega * drive.omega);
        Ok(Self {
            layout,
            drive,
            prefactor,
        })
    }

    pub fn drive(&self) -> &DriveParams {
        &self.drive
    }

    pub fn layout(&self) -> &ElectrodeLayout {
        self.layout
    }

    /// Φ_ps [eV]. No domain check on `p`.
    #[inline]
    pub fn value(&self, p: &Vec3) -> f64 {
        self.prefactor * self.layout.unit_field(p).norm_squared()
    }

    pub fn evaluate(&self, p: &Vec3) -> Result<f64> {
        if !(p.z > 0.0) {
            return Err(Error::domain(format!("point must lie above the electrode plane, got z = {:e}", p.z)));
        }
        Ok(self.value(p))
    }
}

/// `Q² |E|² / (4 m Ω²)` in eV at `point`.
pub fn pseudopotential(layout: &ElectrodeLayout, drive: &DriveParams, point: &Vec3) -> Result<f64> {
    PseudoPotentialField::new(layout, *drive)?.evaluate(point)
}

/// Result of [`characterize_trap`]. SI units except `depth` [eV].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapCharacterization {
    /// Height of the pseudopotential minimum above the electrode plane [m].
    pub guide_height: f64,
    pub minimum_position: Vec3,
    /// Secular frequencies from the transverse Hessian, ascending [rad/s].
    pub transverse_frequencies: [f64; 2],
    /// Barrier height above the minimum [eV].
    pub depth: f64,
    pub saddle_position: Vec3,
    pub eta: f64,
    pub u_factor: f64,
    /// `√8 ω / Ω` with ω the lower secular frequency.
    pub q: f64,
    /// Φ_ps at the minimum [eV].
    pub minimum_value: f64,
}

impl TrapCharacterization {
    pub fn secular_frequency(&self) -> f64 {
        self.transverse_frequencies[0]
    }
}

/// Pseudopotential restricted to the transverse plane through `station`.
struct Slice<'a> {
    field: PseudoPotentialField<'a>,
    station: f64,
}

impl Slice<'_> {
    fn at(&self, x: f64, z: f64) -> f64 {
        self.field.value(&Vec3::new(x, self.station, z))
    }

    fn hessian(&self, x: f64, z: f64, h: f64) -> Matrix2<f64> {
        let f0 = self.at(x, z);
        let fxx = (self.at(x + h, z) - 2.0 * f0 + self.at(x - h, z)) / (h * h);
        let fzz = (self.at(x, z + h) - 2.0 * f0 + self.at(x, z - h)) / (h * h);
        let fxz = (self.at(x + h, z + h) - self.at(x + h, z - h) - self.at(x - h, z + h) + self.at(x - h, z - h))
            / (4.0 * h * h);
        Matrix2::new(fxx, fxz, fxz, fzz)
    }

    fn gradient(&self, x: f64, z: f64, h: f64) -> [f64; 2] {
        [
            (self.at(x + h, z) - self.at(x - h, z)) / (2.0 * h),
            (self.at(x, z + h) - self.at(x, z - h)) / (2.0 * h),
        ]
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for a minimum of `f` on `[lo, hi]`.
fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while (hi - lo).abs() > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Log-spaced samples of `f` on `[lo, hi]`.
fn log_samples(f: &impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
    let ratio = (hi / lo).ln();
    (0..n)
        .map(|k| {
            let z = lo * (ratio * k as f64 / (n - 1) as f64).exp();
            (z, f(z))
        })
        .collect()
}

const AXIS_SAMPLES: usize = 2000;

/// Locate the guide minimum, secular frequencies and escape saddle.
///
/// The search runs on the symmetry axis `x = 0` of the transverse plane at
/// the layout's reference station, then refines the minimum with Newton
/// steps in `(x, z)`.
pub fn characterize_trap(layout: &ElectrodeLayout, drive: &DriveParams) -> Result<TrapCharacterization> {
    if drive.amplitude == 0.0 {
        return Err(Error::UnconfinedLayout("drive amplitude is zero".into()));
    }
    let field = PseudoPotentialField::new(layout, *drive)?;
    let slice = Slice {
        field,
        station: layout.reference_station(),
    };
    let scale = layout.length_scale();
    let axis = |z: f64| slice.at(0.0, z);

    let (z_lo, z_hi) = match layout {
        ElectrodeLayout::IdealQuadrupole(q) => (1e-3 * q.center_height, q.center_height + q.radius),
        _ => (1e-3 * scale, 10.0 * scale),
    };
    let samples = log_samples(&axis, z_lo, z_hi, AXIS_SAMPLES);
    let k_min = (1..samples.len() - 1)
        .filter(|&k| samples[k].1 <= samples[k - 1].1 && samples[k].1 <= samples[k + 1].1)
        .min_by(|&i, &j| samples[i].1.total_cmp(&samples[j].1))
        .ok_or_else(|| Error::UnconfinedLayout("no pseudopotential minimum on the symmetry axis".into()))?;
    let mut z_min = golden_min(axis, samples[k_min - 1].0, samples[k_min + 1].0, 1e-12 * scale.max(1e-9));
    let mut x_min = 0.0;

    // Newton refinement in the transverse plane
    let h_newton = 1e-4 * z_min;
    for _ in 0..4 {
        let g = slice.gradient(x_min, z_min, h_newton);
        let hess = slice.hessian(x_min, z_min, h_newton);
        let Some(inv) = hess.try_inverse() else { break };
        let step = inv * nalgebra::Vector2::new(g[0], g[1]);
        let (xn, zn) = (x_min - step[0], z_min - step[1]);
        if !(zn > 0.0) || slice.at(xn, zn) > slice.at(x_min, z_min) || step.norm() > 0.1 * z_min {
            break;
        }
        x_min = xn;
        z_min = zn;
        if step.norm() < 1e-9 {
            break;
        }
    }
    let phi_min = slice.at(x_min, z_min);

    let hess = slice.hessian(x_min, z_min, 1e-3 * z_min);
    let eig = SymmetricEigen::new(hess).eigenvalues;
    let (k1, k2) = (eig[0].min(eig[1]), eig[0].max(eig[1]));
    if !(k1 > 0.0) {
        return Err(Error::UnconfinedLayout(format!(
            "pseudopotential Hessian at z = {z_min:.4e} m is not positive definite"
        )));
    }
    // curvature in eV/m², energy in J = eV · e
    let freq = |k: f64| (k * E_CHARGE / E_MASS).sqrt();
    let transverse_frequencies = [freq(k1), freq(k2)];

    let (saddle_z, phi_saddle) = match layout {
        ElectrodeLayout::IdealQuadrupole(q) => {
            let z = z_min + q.radius;
            (z, slice.at(0.0, z))
        }
        _ => find_axis_saddle(&slice, z_min)?,
    };
    let saddle_position = Vec3::new(0.0, slice.station, saddle_z);
    let depth = phi_saddle - phi_min;

    let omega = transverse_frequencies[0];
    let q = SQRT_8 * omega / drive.omega;
    let r = z_min;
    let eta = q / q_parameter(drive, r, 1.0)?;
    let u_factor = depth / depth_scale(drive, r);

    Ok(TrapCharacterization {
        guide_height: z_min,
        minimum_position: Vec3::new(x_min, slice.station, z_min),
        transverse_frequencies,
        depth,
        saddle_position,
        eta,
        u_factor,
        q,
        minimum_value: phi_min,
    })
}

/// Ascend the axis above the minimum up to 10 guide heights and return the
/// first local maximum, checked to be a saddle of the transverse slice.
fn find_axis_saddle(slice: &Slice<'_>, z_min: f64) -> Result<(f64, f64)> {
    let limit = 10.0 * z_min;
    let n = AXIS_SAMPLES;
    let dz = (limit - z_min) / n as f64;
    let mut prev = slice.at(0.0, z_min);
    let mut cur = slice.at(0.0, z_min + dz);
    for k in 2..=n {
        let z = z_min + k as f64 * dz;
        let next = slice.at(0.0, z);
        if cur >= prev && cur > next {
            let z_s = golden_min(|z| -slice.at(0.0, z), z - 2.0 * dz, z, 1e-12 * z_min);
            let hess = slice.hessian(0.0, z_s, 1e-3 * z_min);
            let eig = SymmetricEigen::new(hess).eigenvalues;
            let negatives = eig.iter().filter(|&&e| e < 0.0).count();
            if negatives != 1 {
                return Err(Error::OpenPotential {
                    min_height: z_min,
                    limit,
                });
            }
            return Ok((z_s, slice.at(0.0, z_s)));
        }
        prev = cur;
        cur = next;
    }
    Err(Error::OpenPotential {
        min_height: z_min,
        limit,
    })
}

/// Height of the field null (minimum of |E|) above the lab point `(x, y)`.
///
/// Independent of the drive, so it also defines the guide axis when the
/// drive is off.
pub fn null_height(layout: &ElectrodeLayout, x: f64, y: f64) -> Result<f64> {
    let scale = layout.length_scale();
    let f = |z: f64| layout.unit_field(&Vec3::new(x, y, z)).norm_squared();
    let (lo, hi) = match layout {
        ElectrodeLayout::IdealQuadrupole(q) => (1e-3 * q.center_height, q.center_height + q.radius),
        _ => (1e-3 * scale, 10.0 * scale),
    };
    let samples = log_samples(&f, lo, hi, AXIS_SAMPLES);
    let k = (1..samples.len() - 1)
        .filter(|&k| samples[k].1 <= samples[k - 1].1 && samples[k].1 <= samples[k + 1].1)
        .min_by(|&i, &j| samples[i].1.total_cmp(&samples[j].1))
        .ok_or_else(|| Error::UnconfinedLayout(format!("no field null above ({x:.3e}, {y:.3e})")))?;
    Ok(golden_min(f, samples[k - 1].0, samples[k + 1].0, 1e-12 * scale.max(1e-9)))
}

/// `e V² / (4 m Ω² R²)` in eV: the depth an ideal quadrupole of radius R reaches with `u = 1`.
pub fn depth_scale(drive: &DriveParams, guide_height: f64) -> f64 {
    E_CHARGE * drive.amplitude * drive.amplitude / (4.0 * E_MASS * drive.omega * drive.omega * guide_height * guide_height)
}

/// `q = η 2 (e/m) V / (Ω² R²)`.
pub fn q_parameter(drive: &DriveParams, guide_height: f64, eta: f64) -> Result<f64> {
    if !(guide_height > 0.0) {
        return Err(Error::domain(format!("guide height must be > 0, got {guide_height}")));
    }
    if !(drive.omega > 0.0) {
        return Err(Error::domain("drive frequency must be > 0"));
    }
    Ok(eta * 2.0 * E_OVER_M * drive.amplitude / (drive.omega * drive.omega * guide_height * guide_height))
}

/// Depth `u e V² / (4 m Ω² R²)` [eV].
pub fn depth_from_u(drive: &DriveParams, guide_height: f64, u_factor: f64) -> Result<f64> {
    if !(guide_height > 0.0) {
        return Err(Error::domain(format!("guide height must be > 0, got {guide_height}")));
    }
    Ok(u_factor * depth_scale(drive, guide_height))
}

/// Ideal-quadrupole secular frequency `q Ω / √8` [rad/s] and depth `q V / 8` [eV].
pub fn ideal_relations(q: f64, drive: &DriveParams) -> (f64, f64) {
    (q * drive.omega / SQRT_8, q * drive.amplitude / 8.0)
}

/// Drive `(V, Ω)` that realizes the stability parameter `q` and depth `depth_ev`
/// for a guide with the given geometric factors.
pub fn drive_for(q: f64, depth_ev: f64, guide_height: f64, eta: f64, u_factor: f64) -> Result<DriveParams> {
    if !(q > 0.0 && depth_ev > 0.0 && eta > 0.0 && u_factor > 0.0 && guide_height > 0.0) {
        return Err(Error::domain("q, depth, eta, u and guide height must all be > 0"));
    }
    let amplitude = 8.0 * eta * depth_ev / (u_factor * q);
    let omega = (eta * 2.0 * E_OVER_M * amplitude / (q * guide_height * guide_height)).sqrt();
    DriveParams::new(amplitude, omega, 0.0)
}

/// Floquet analysis of `u'' + (a - 2q cos 2τ) u = 0` over one period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MathieuStability {
    pub stable: bool,
    /// Set when `|trace| = 2` to rounding, e.g. the free particle at `q = a = 0`.
    pub marginal: bool,
    /// Trace of the monodromy matrix.
    pub trace: f64,
    /// `β` with `cos(πβ) = trace/2` when stable, otherwise the growth rate
    /// per unit τ, `acosh(|trace|/2) / π`.
    pub exponent: f64,
}

const MATHIEU_STEPS: usize = 2000;

/// Monodromy matrix of the Mathieu equation over `τ ∈ [0, π]` by classical RK4.
pub fn mathieu_monodromy(q: f64, a: f64) -> Matrix2<f64> {
    let rhs = |tau: f64, y: [f64; 2]| [y[1], -(a - 2.0 * q * (2.0 * tau).cos()) * y[0]];
    let h = PI / MATHIEU_STEPS as f64;
    let mut cols = [[1.0, 0.0], [0.0, 1.0]];
    for y in cols.iter_mut() {
        let mut tau = 0.0;
        for _ in 0..MATHIEU_STEPS {
            let k1 = rhs(tau, *y);
            let k2 = rhs(tau + 0.5 * h, [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
            let k3 = rhs(tau + 0.5 * h, [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
            let k4 = rhs(tau + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
            for i in 0..2 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            tau += h;
        }
    }
    Matrix2::new(cols[0][0], cols[1][0], cols[0][1], cols[1][1])
}

pub fn mathieu_stable(q: f64, a: f64) -> Result<MathieuStability> {
    if !(q >= 0.0 && q.is_finite() && a.is_finite()) {
        return Err(Error::domain(format!("Mathieu parameters must be finite with q >= 0, got q = {q}")));
    }
    let trace = mathieu_monodromy(q, a).trace();
    let half = 0.5 * trace;
    let marginal = (half.abs() - 1.0).abs() < 1e-9;
    let stable = half.abs() <= 1.0 || marginal;
    let exponent = if half.abs() <= 1.0 {
        half.acos() / PI
    } else if marginal {
        0.0
    } else {
        half.abs().acosh() / PI
    };
    Ok(MathieuStability {
        stable,
        marginal,
        trace,
        exponent,
    })
}

/// First instability onset in `q` at fixed `a`, bisected within `[lo, hi]`.
pub fn mathieu_boundary(a: f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let (mut lo, mut hi) = (lo, hi);
    if !mathieu_stable(lo, a)?.stable || mathieu_stable(hi, a)?.stable {
        return Err(Error::domain(format!(
            "bracket [{lo}, {hi}] does not straddle a stability boundary at a = {a}"
        )));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mathieu_stable(mid, a)?.stable {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_five_wire, FiveWireCrossSection, IdealQuadrupole};
    use crate::model::units::mhz_to_rad_s;
    use approx::assert_relative_eq;

    fn paper_drive() -> DriveParams {
        DriveParams::from_mhz(33.0, 970.0).unwrap()
    }

    fn paper_layout() -> ElectrodeLayout {
        build_five_wire(&FiveWireCrossSection::paper()).unwrap().into()
    }

    #[test]
    fn pseudopotential_scaling() {
        let layout = paper_layout();
        let p = Vec3::new(50e-6, 0.0, 420e-6);
        let d = paper_drive();
        let base = pseudopotential(&layout, &d, &p).unwrap();
        let doubled = pseudopotential(&layout, &d.with_amplitude(66.0), &p).unwrap();
        assert_relative_eq!(doubled, 4.0 * base, max_relative = 1e-14);
        let phased = pseudopotential(&layout, &d.with_phase(1.3), &p).unwrap();
        assert_eq!(phased, base);
        let z0 = (230e-6f64 * 1090e-6).sqrt();
        assert!(pseudopotential(&layout, &d, &Vec3::new(0.0, 0.0, z0)).unwrap() < 1e-20);
        assert!(pseudopotential(&layout, &d, &Vec3::new(0.0, 0.0, -1e-3)).is_err());
    }

    #[test]
    fn zero_frequency_is_rejected() {
        let layout = paper_layout();
        let d = DriveParams {
            amplitude: 1.0,
            omega: 0.0,
            phase0: 0.0,
        };
        assert!(matches!(
            pseudopotential(&layout, &d, &Vec3::new(0.0, 0.0, 1e-4)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn formula_closure_at_demonstrated_drive() {
        let d = paper_drive();
        let q = q_parameter(&d, 500e-6, 0.31).unwrap();
        assert_relative_eq!(q, 0.387, max_relative = 5e-3);
        let (omega, _) = ideal_relations(q, &d);
        assert_relative_eq!(omega / mhz_to_rad_s(1.0), 133.0, epsilon = 0.5);
        let u = depth_from_u(&d, 500e-6, 0.0079).unwrap();
        assert_relative_eq!(u * 1e3, 41.0, epsilon = 1.0);
        let ideal = q_parameter(&d, 500e-6, 1.0).unwrap();
        assert_relative_eq!(ideal, 1.25, max_relative = 1e-2);
    }

    #[test]
    fn drive_off_gives_zeros() {
        let d = DriveParams::from_mhz(0.0, 970.0).unwrap();
        let q = q_parameter(&d, 500e-6, 0.31).unwrap();
        assert_eq!(q, 0.0);
        assert_eq!(ideal_relations(q, &d), (0.0, 0.0));
    }

    #[test]
    fn drive_for_inverts_the_relations() {
        let (r, eta, u) = (500.7e-6, 0.3147, 0.008);
        let d = drive_for(0.3, 0.027, r, eta, u).unwrap();
        assert_relative_eq!(q_parameter(&d, r, eta).unwrap(), 0.3, max_relative = 1e-12);
        assert_relative_eq!(depth_from_u(&d, r, u).unwrap(), 0.027, max_relative = 1e-12);
    }

    #[test]
    fn ideal_quadrupole_characterizes_to_unit_factors() {
        let layout = ElectrodeLayout::IdealQuadrupole(IdealQuadrupole {
            center_height: 500e-6,
            radius: 500e-6,
        });
        let d = DriveParams::new(10.0, mhz_to_rad_s(970.0), 0.0).unwrap();
        let c = characterize_trap(&layout, &d).unwrap();
        assert_relative_eq!(c.guide_height, 500e-6, max_relative = 1e-6);
        assert_relative_eq!(c.eta, 1.0, max_relative = 1e-3);
        let q = q_parameter(&d, 500e-6, 1.0).unwrap();
        assert_relative_eq!(c.depth, q * d.amplitude / 8.0, max_relative = 1e-3);
        assert_relative_eq!(c.transverse_frequencies[0], c.transverse_frequencies[1], max_relative = 1e-4);
    }

    #[test]
    fn paper_layout_characterization() {
        let c = characterize_trap(&paper_layout(), &paper_drive()).unwrap();
        assert_relative_eq!(c.guide_height, (230e-6f64 * 1090e-6).sqrt(), max_relative = 1e-6);
        assert!(c.saddle_position.z > c.guide_height);
        assert!(c.minimum_position.x.abs() < 1e-9);
        let q_def = q_parameter(&paper_drive(), c.guide_height, c.eta).unwrap();
        assert_relative_eq!(c.q, q_def, max_relative = 1e-6);
        // Hessian frequencies agree with 1D slice curvatures
        let layout = paper_layout();
        let field = PseudoPotentialField::new(&layout, paper_drive()).unwrap();
        let h = 1e-3 * c.guide_height;
        let f = |x: f64, z: f64| field.value(&Vec3::new(x, 0.0, z));
        let (x0, z0) = (0.0, c.guide_height);
        let kx = (f(x0 + h, z0) - 2.0 * f(x0, z0) + f(x0 - h, z0)) / (h * h);
        let kz = (f(x0, z0 + h) - 2.0 * f(x0, z0) + f(x0, z0 - h)) / (h * h);
        let wx = (kx * E_CHARGE / E_MASS).sqrt();
        let wz = (kz * E_CHARGE / E_MASS).sqrt();
        let mut slice = [wx, wz];
        slice.sort_by(f64::total_cmp);
        assert_relative_eq!(slice[0], c.transverse_frequencies[0], max_relative = 5e-3);
        assert_relative_eq!(slice[1], c.transverse_frequencies[1], max_relative = 5e-3);
    }

    #[test]
    fn zero_drive_is_unconfined() {
        let d = DriveParams::from_mhz(0.0, 970.0).unwrap();
        assert!(matches!(
            characterize_trap(&paper_layout(), &d),
            Err(Error::UnconfinedLayout(_))
        ));
    }

    #[test]
    fn mathieu_free_particle_is_marginal() {
        let s = mathieu_stable(0.0, 0.0).unwrap();
        assert!(s.stable && s.marginal);
        assert_relative_eq!(s.trace, 2.0, epsilon = 1e-9);
        assert!(mathieu_stable(0.5, 0.0).unwrap().stable);
        assert!(!mathieu_stable(0.95, 0.0).unwrap().stable);
        assert!(mathieu_stable(-0.1, 0.0).is_err());
    }

    #[test]
    fn mathieu_boundary_location() {
        let q = mathieu_boundary(0.0, 0.5, 1.2, 1e-7).unwrap();
        assert!(q > 0.9077 && q < 0.9085, "{q}");
    }

    #[test]
    fn small_q_exponent_matches_adiabatic_limit() {
        // β ≈ q/√2 for small q
        let s = mathieu_stable(0.05, 0.0).unwrap();
        assert_relative_eq!(s.exponent, 0.05 / SQRT_2, max_relative = 2e-3);
    }
}
