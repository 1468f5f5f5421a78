//! Closed-form electrostatics of gapless planar electrode layouts.
//!
//! A patch held at voltage `V` inside an otherwise grounded plane produces
//! `φ(P) = V Ω(P) / 2π` above the plane, where `Ω` is the solid angle the
//! patch subtends at `P`. In a translation-invariant cross-section this
//! reduces to the two-arctangent strip formula. The drive enters as a
//! global factor `V cos(Ω t + φ₀)` (quasistatic limit).

use std::f64::consts::{FRAC_1_PI, TAU};
use std::io::Write;

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::geometry::{ElectrodeLayout, IdealQuadrupole, Patch, PlanarLayout, StripLayout};
use crate::model::{DriveParams, Vec3};

/// Potential, field and (optionally) field gradient at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldProbe {
    pub potential: f64,
    pub field: Vec3,
    /// `gradient[(i, j)] = ∂E_j / ∂x_i` [V/m²].
    pub gradient: Option<Matrix3<f64>>,
    /// Richardson error estimate of a finite-difference gradient.
    pub gradient_error: Option<f64>,
}

fn check_above_plane(z: f64) -> Result<()> {
    if z > 0.0 && z.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("probe must lie above the electrode plane, got z = {z:e}")))
    }
}

/// Potential of the strip `[a, b]` at voltage `v` in a grounded plane.
pub fn strip_potential_2d(a: f64, b: f64, v: f64, x: f64, z: f64) -> Result<f64> {
    check_above_plane(z)?;
    Ok(v * strip_unit_potential(a, b, x, z))
}

#[inline]
fn strip_unit_potential(a: f64, b: f64, x: f64, z: f64) -> f64 {
    FRAC_1_PI * (((b - x) / z).atan() - ((a - x) / z).atan())
}

/// Field `(E_x, E_z)` of a unit-voltage strip edge contribution.
#[inline]
fn edge_terms(c: f64, x: f64, z: f64) -> (f64, f64) {
    if c.is_infinite() {
        return (0.0, 0.0);
    }
    let u = c - x;
    let d = z * z + u * u;
    (z / d, u / d)
}

/// Field `(E_x, E_z)` of the strip `[a, b]` at voltage `v`.
pub fn strip_field_2d(a: f64, b: f64, v: f64, x: f64, z: f64) -> Result<(f64, f64)> {
    check_above_plane(z)?;
    let (ex, ez) = strip_unit_field(a, b, x, z);
    Ok((v * ex, v * ez))
}

#[inline]
fn strip_unit_field(a: f64, b: f64, x: f64, z: f64) -> (f64, f64) {
    let (bx, bz) = edge_terms(b, x, z);
    let (ax, az) = edge_terms(a, x, z);
    (FRAC_1_PI * (bx - ax), FRAC_1_PI * (bz - az))
}

/// Analytic `[[∂xEx, ∂xEz], [∂zEx, ∂zEz]]` of a unit-voltage strip.
fn strip_unit_gradient(a: f64, b: f64, x: f64, z: f64) -> [[f64; 2]; 2] {
    let edge = |c: f64| -> [[f64; 2]; 2] {
        if c.is_infinite() {
            return [[0.0; 2]; 2];
        }
        let u = c - x;
        let d = z * z + u * u;
        let d2 = d * d;
        let xx = 2.0 * u * z / d2;
        let xz = (u * u - z * z) / d2;
        [[xx, xz], [xz, -xx]]
    };
    let (gb, ga) = (edge(b), edge(a));
    let mut g = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            g[i][j] = FRAC_1_PI * (gb[i][j] - ga[i][j]);
        }
    }
    g
}

/// Axis-aligned rectangle in the electrode plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

/// Potential of a rectangle at voltage `v`, four-corner arctangent form.
pub fn rect_potential_3d(rect: &Rect, v: f64, p: &Vec3) -> Result<f64> {
    check_above_plane(p.z)?;
    let z = p.z;
    let corner = |cx: f64, cy: f64| {
        let (dx, dy) = (cx - p.x, cy - p.y);
        let r = (dx * dx + dy * dy + z * z).sqrt();
        (dx * dy / (z * r)).atan()
    };
    let omega = corner(rect.x_max, rect.y_max) - corner(rect.x_min, rect.y_max) - corner(rect.x_max, rect.y_min)
        + corner(rect.x_min, rect.y_min);
    Ok(v * omega / TAU)
}

/// Solid angle subtended at `p` by a counter-clockwise planar polygon.
fn polygon_solid_angle(vertices: &[[f64; 2]], p: &Vec3) -> f64 {
    let r0 = Vec3::new(vertices[0][0] - p.x, vertices[0][1] - p.y, -p.z);
    let n0 = r0.norm();
    let mut omega = 0.0;
    let mut r1 = Vec3::new(vertices[1][0] - p.x, vertices[1][1] - p.y, -p.z);
    let mut n1 = r1.norm();
    for v in &vertices[2..] {
        let r2 = Vec3::new(v[0] - p.x, v[1] - p.y, -p.z);
        let n2 = r2.norm();
        // Van Oosterom-Strackee; a CCW triangle seen from above gives a
        // negative triple product, hence the sign flip.
        let num = r0.dot(&r1.cross(&r2));
        let den = n0 * n1 * n2 + r0.dot(&r1) * n2 + r0.dot(&r2) * n1 + r1.dot(&r2) * n0;
        omega -= 2.0 * num.atan2(den);
        r1 = r2;
        n1 = n2;
    }
    omega
}

/// Unit-voltage field of a polygon: `E = (1/2π) Σ_edges (a×b)(|a|+|b|) / (|a||b|(|a||b| + a·b))`
/// with `a`, `b` the vectors from `p` to the edge end points.
fn polygon_unit_field(vertices: &[[f64; 2]], p: &Vec3) -> Vec3 {
    let n = vertices.len();
    let mut g = Vec3::zeros();
    let mut a = Vec3::new(vertices[n - 1][0] - p.x, vertices[n - 1][1] - p.y, -p.z);
    let mut na = a.norm();
    for v in vertices {
        let b = Vec3::new(v[0] - p.x, v[1] - p.y, -p.z);
        let nb = b.norm();
        let denom = na * nb * (na * nb + a.dot(&b));
        if denom > 0.0 {
            g += a.cross(&b) * ((na + nb) / denom);
        }
        a = b;
        na = nb;
    }
    g / TAU
}

fn patch_unit_potential(patch: &Patch, p: &Vec3) -> f64 {
    patch.role.weight() * polygon_solid_angle(&patch.vertices, p) / TAU
}

fn patch_unit_field(patch: &Patch, p: &Vec3) -> Vec3 {
    patch.role.weight() * polygon_unit_field(&patch.vertices, p)
}

impl StripLayout {
    pub fn unit_potential(&self, x: f64, z: f64) -> f64 {
        self.strips
            .iter()
            .map(|s| s.role.weight() * strip_unit_potential(s.x_min, s.x_max, x, z))
            .sum()
    }

    /// Unit-voltage `(E_x, E_z)`.
    pub fn unit_field(&self, x: f64, z: f64) -> (f64, f64) {
        self.rf_strips().fold((0.0, 0.0), |(ex, ez), s| {
            let (sx, sz) = strip_unit_field(s.x_min, s.x_max, x, z);
            (ex + sx, ez + sz)
        })
    }

    fn unit_gradient(&self, x: f64, z: f64) -> [[f64; 2]; 2] {
        let mut g = [[0.0; 2]; 2];
        for s in self.rf_strips() {
            let gs = strip_unit_gradient(s.x_min, s.x_max, x, z);
            for i in 0..2 {
                for j in 0..2 {
                    g[i][j] += gs[i][j];
                }
            }
        }
        g
    }
}

impl PlanarLayout {
    /// Points behind the aperture plate are shielded.
    fn shielded(&self, p: &Vec3) -> bool {
        self.aperture.is_some_and(|plate| p.y < plate.y)
    }

    fn image_point(&self, p: &Vec3) -> Option<Vec3> {
        self.aperture.map(|plate| Vec3::new(p.x, 2.0 * plate.y - p.y, p.z))
    }

    pub fn unit_potential(&self, p: &Vec3) -> f64 {
        if self.shielded(p) {
            return 0.0;
        }
        let direct: f64 = self.rf_patches().map(|patch| patch_unit_potential(patch, p)).sum();
        let image: f64 = self
            .image_point(p)
            .map(|q| self.rf_patches().map(|patch| patch_unit_potential(patch, &q)).sum())
            .unwrap_or(0.0);
        direct - image
    }

    pub fn unit_field(&self, p: &Vec3) -> Vec3 {
        if self.shielded(p) {
            return Vec3::zeros();
        }
        let mut e: Vec3 = self.rf_patches().map(|patch| patch_unit_field(patch, p)).sum();
        if let Some(q) = self.image_point(p) {
            // the image layout is reflected in y and carries the opposite voltage
            let ei: Vec3 = self.rf_patches().map(|patch| patch_unit_field(patch, &q)).sum();
            e -= Vec3::new(ei.x, -ei.y, ei.z);
        }
        e
    }
}

impl IdealQuadrupole {
    pub fn unit_potential(&self, p: &Vec3) -> f64 {
        let dz = p.z - self.center_height;
        (p.x * p.x - dz * dz) / (2.0 * self.radius * self.radius)
    }

    pub fn unit_field(&self, p: &Vec3) -> Vec3 {
        let r2 = self.radius * self.radius;
        Vec3::new(-p.x / r2, 0.0, (p.z - self.center_height) / r2)
    }
}

impl ElectrodeLayout {
    /// Potential for 1 V on every rf electrode.
    pub fn unit_potential(&self, p: &Vec3) -> f64 {
        match self {
            ElectrodeLayout::CrossSection(s) => s.unit_potential(p.x, p.z),
            ElectrodeLayout::Planar(l) => l.unit_potential(p),
            ElectrodeLayout::IdealQuadrupole(q) => q.unit_potential(p),
        }
    }

    /// Field for 1 V on every rf electrode. No domain check; callers keep
    /// `p.z > 0`.
    #[inline]
    pub fn unit_field(&self, p: &Vec3) -> Vec3 {
        match self {
            ElectrodeLayout::CrossSection(s) => {
                let (ex, ez) = s.unit_field(p.x, p.z);
                Vec3::new(ex, 0.0, ez)
            }
            ElectrodeLayout::Planar(l) => l.unit_field(p),
            ElectrodeLayout::IdealQuadrupole(q) => q.unit_field(p),
        }
    }

    /// Unit-voltage field gradient and, for finite differences, an error estimate.
    pub fn unit_gradient(&self, p: &Vec3) -> (Matrix3<f64>, Option<f64>) {
        match self {
            ElectrodeLayout::CrossSection(s) => {
                let g = s.unit_gradient(p.x, p.z);
                let mut m = Matrix3::zeros();
                m[(0, 0)] = g[0][0];
                m[(0, 2)] = g[0][1];
                m[(2, 0)] = g[1][0];
                m[(2, 2)] = g[1][1];
                (m, None)
            }
            ElectrodeLayout::IdealQuadrupole(q) => {
                let r2 = q.radius * q.radius;
                (Matrix3::from_diagonal(&Vec3::new(-1.0 / r2, 0.0, 1.0 / r2)), None)
            }
            ElectrodeLayout::Planar(_) => {
                let h = 1e-4 * self.length_scale();
                let d1 = self.central_difference(p, h);
                let d2 = self.central_difference(p, 2.0 * h);
                let richardson = (4.0 * d1 - d2) / 3.0;
                let err = (d1 - d2).norm() / 3.0;
                (richardson, Some(err))
            }
        }
    }

    fn central_difference(&self, p: &Vec3, h: f64) -> Matrix3<f64> {
        let mut m = Matrix3::zeros();
        for i in 0..3 {
            let mut dp = Vec3::zeros();
            dp[i] = h;
            let d = (self.unit_field(&(p + dp)) - self.unit_field(&(p - dp))) / (2.0 * h);
            for j in 0..3 {
                m[(i, j)] = d[j];
            }
        }
        m
    }
}

/// Field of a layout at time `t` under `drive`.
pub fn layout_field(layout: &ElectrodeLayout, point: &Vec3, drive: &DriveParams, t: f64) -> Result<FieldProbe> {
    check_above_plane(point.z)?;
    let scale = drive.voltage_at(t);
    Ok(FieldProbe {
        potential: scale * layout.unit_potential(point),
        field: scale * layout.unit_field(point),
        gradient: None,
        gradient_error: None,
    })
}

/// As [`layout_field`], including the field gradient.
pub fn layout_field_with_gradient(
    layout: &ElectrodeLayout,
    point: &Vec3,
    drive: &DriveParams,
    t: f64,
) -> Result<FieldProbe> {
    let mut probe = layout_field(layout, point, drive, t)?;
    let scale = drive.voltage_at(t);
    let (g, err) = layout.unit_gradient(point);
    probe.gradient = Some(scale * g);
    probe.gradient_error = err.map(|e| e * scale.abs());
    Ok(probe)
}

/// Field amplitude (the spatial part, `cos = 1`) for a drive.
pub fn amplitude_field(layout: &ElectrodeLayout, point: &Vec3, drive: &DriveParams) -> Result<Vec3> {
    check_above_plane(point.z)?;
    Ok(drive.amplitude * layout.unit_field(point))
}

/// Write `x,y,z,phi,Ex,Ey,Ez` rows (SI) for the given points.
pub fn write_field_map<W: Write>(
    mut out: W,
    layout: &ElectrodeLayout,
    drive: &DriveParams,
    t: f64,
    points: &[Vec3],
) -> Result<()> {
    writeln!(out, "x,y,z,phi,Ex,Ey,Ez")?;
    for p in points {
        let probe = layout_field(layout, p, drive, t)?;
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            p.x, p.y, p.z, probe.potential, probe.field.x, probe.field.y, probe.field.z
        )?;
    }
    Ok(())
}

/// Regular grid in a transverse `(x, z)` plane at station `y`.
pub fn transverse_grid(x_range: (f64, f64), z_range: (f64, f64), y: f64, nx: usize, nz: usize) -> Vec<Vec3> {
    let lin = |(lo, hi): (f64, f64), n: usize, k: usize| {
        if n <= 1 {
            lo
        } else {
            lo + (hi - lo) * k as f64 / (n - 1) as f64
        }
    };
    (0..nz)
        .flat_map(|iz| (0..nx).map(move |ix| Vec3::new(lin(x_range, nx, ix), y, lin(z_range, nz, iz))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use crate::geometry::{build_five_wire, FiveWireCrossSection, Role};
    use approx::assert_relative_eq;

    fn paper_layout() -> ElectrodeLayout {
        build_five_wire(&FiveWireCrossSection::paper()).unwrap().into()
    }

    #[test]
    fn strip_far_field_matches_line_charge_limit() {
        let (a, b) = (-5e-6, 5e-6);
        let z = 100.0 * (b - a);
        let phi = strip_potential_2d(a, b, 1.0, 0.5 * (a + b), z).unwrap();
        assert_relative_eq!(phi, (b - a) / (PI * z), max_relative = 1e-2);
    }

    #[test]
    fn strip_boundary_values() {
        let phi = strip_potential_2d(0.0, 1.0, 3.0, 0.5, 1e-12).unwrap();
        assert_relative_eq!(phi, 3.0, max_relative = 1e-9);
        let far = strip_potential_2d(0.0, 1.0, 3.0, 1e9, 1.0).unwrap();
        assert!(far.abs() < 1e-8);
        assert!(strip_potential_2d(0.0, 1.0, 1.0, 0.5, 0.0).is_err());
        assert!(strip_potential_2d(0.0, 1.0, 1.0, 0.5, -1.0).is_err());
    }

    #[test]
    fn rect_limits_and_additivity() {
        let p = Vec3::new(0.1e-3, -0.2e-3, 0.3e-3);
        let big = Rect {
            x_min: -1e3,
            x_max: 1e3,
            y_min: -1e3,
            y_max: 1e3,
        };
        assert_relative_eq!(rect_potential_3d(&big, 2.0, &p).unwrap(), 2.0, max_relative = 1e-6);

        let whole = Rect {
            x_min: -0.3e-3,
            x_max: 0.7e-3,
            y_min: -0.5e-3,
            y_max: 0.9e-3,
        };
        let left = Rect { x_max: 0.2e-3, ..whole };
        let right = Rect { x_min: 0.2e-3, ..whole };
        let sum = rect_potential_3d(&left, 1.0, &p).unwrap() + rect_potential_3d(&right, 1.0, &p).unwrap();
        assert_relative_eq!(sum, rect_potential_3d(&whole, 1.0, &p).unwrap(), max_relative = 1e-12);
    }

    #[test]
    fn polygon_solid_angle_matches_rectangle_formula() {
        let rect = Rect {
            x_min: -0.3e-3,
            x_max: 0.7e-3,
            y_min: -0.5e-3,
            y_max: 0.9e-3,
        };
        let patch = Patch::new(
            vec![
                [rect.x_min, rect.y_min],
                [rect.x_max, rect.y_min],
                [rect.x_max, rect.y_max],
                [rect.x_min, rect.y_max],
            ],
            Role::Rf,
        )
        .unwrap();
        for p in [
            Vec3::new(0.0, 0.0, 1e-4),
            Vec3::new(2e-3, -1e-3, 5e-4),
            Vec3::new(0.69e-3, 0.89e-3, 1e-6),
        ] {
            let a = rect_potential_3d(&rect, 1.0, &p).unwrap();
            let b = patch_unit_potential(&patch, &p);
            assert_relative_eq!(a, b, max_relative = 1e-10, epsilon = 1e-14);
        }
    }

    #[test]
    fn polygon_field_is_minus_gradient_of_potential() {
        // non-convex L-shaped polygon
        let patch = Patch::new(
            vec![[0.0, 0.0], [2e-3, 0.0], [2e-3, 0.5e-3], [0.6e-3, 0.5e-3], [0.6e-3, 2e-3], [0.0, 2e-3]],
            Role::Rf,
        )
        .unwrap();
        for p in [
            Vec3::new(0.3e-3, 0.3e-3, 0.2e-3),
            Vec3::new(1.5e-3, 1.5e-3, 0.4e-3),
            Vec3::new(-1e-3, 0.8e-3, 1e-3),
        ] {
            let e = patch_unit_field(&patch, &p);
            let h = 1e-8;
            for i in 0..3 {
                let mut dp = Vec3::zeros();
                dp[i] = h;
                let num = -(patch_unit_potential(&patch, &(p + dp)) - patch_unit_potential(&patch, &(p - dp))) / (2.0 * h);
                assert_relative_eq!(e[i], num, max_relative = 1e-5, epsilon = 1e-3);
            }
        }
    }

    #[test]
    fn ground_only_layout_has_no_field() {
        let mut strips = build_five_wire(&FiveWireCrossSection::paper()).unwrap();
        for s in &mut strips.strips {
            s.role = Role::Ground;
        }
        let layout = ElectrodeLayout::CrossSection(strips);
        let p = Vec3::new(1e-4, 0.0, 3e-4);
        assert_eq!(layout.unit_field(&p), Vec3::zeros());
        assert_eq!(layout.unit_potential(&p), 0.0);
    }

    #[test]
    fn paper_layout_transverse_null_at_sqrt_ab() {
        let layout = paper_layout();
        let z0 = (230e-6f64 * 1090e-6).sqrt();
        let e = layout.unit_field(&Vec3::new(0.0, 0.0, z0));
        assert!(e.norm() < 1e-9, "{e}");
        let below = layout.unit_field(&Vec3::new(0.0, 0.0, 0.9 * z0)).z;
        let above = layout.unit_field(&Vec3::new(0.0, 0.0, 1.1 * z0)).z;
        assert!(below * above < 0.0);
    }

    #[test]
    fn drive_zero_crossing_kills_field() {
        let layout = paper_layout();
        let drive = DriveParams::new(33.0, 1.0, 0.0).unwrap();
        let probe = layout_field(&layout, &Vec3::new(1e-4, 0.0, 2e-4), &drive, 0.5 * PI).unwrap();
        assert!(probe.field.norm() < 1e-10);
        assert!(layout_field(&layout, &Vec3::new(0.0, 0.0, -1e-6), &drive, 0.0).is_err());
    }

    #[test]
    fn strip_gradient_matches_central_differences() {
        let layout = build_five_wire(&FiveWireCrossSection::paper()).unwrap();
        let (x, z) = (120e-6, 410e-6);
        let g = layout.unit_gradient(x, z);
        let h = 1e-9;
        let (exp, ezp) = layout.unit_field(x + h, z);
        let (exm, ezm) = layout.unit_field(x - h, z);
        let (exu, ezu) = layout.unit_field(x, z + h);
        let (exd, ezd) = layout.unit_field(x, z - h);
        assert_relative_eq!(g[0][0], (exp - exm) / (2.0 * h), max_relative = 1e-6);
        assert_relative_eq!(g[0][1], (ezp - ezm) / (2.0 * h), max_relative = 1e-6);
        assert_relative_eq!(g[1][0], (exu - exd) / (2.0 * h), max_relative = 1e-6);
        assert_relative_eq!(g[1][1], (ezu - ezd) / (2.0 * h), max_relative = 1e-6);
    }

    #[test]
    fn field_map_csv_has_header() {
        let mut buf = Vec::new();
        let drive = DriveParams::from_mhz(33.0, 970.0).unwrap();
        let pts = transverse_grid((-1e-3, 1e-3), (1e-4, 1e-3), 0.0, 3, 2);
        write_field_map(&mut buf, &paper_layout(), &drive, 0.0, &pts).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,y,z,phi,Ex,Ey,Ez"));
        assert_eq!(lines.count(), 6);
    }
}
