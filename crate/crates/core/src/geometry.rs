//! Planar electrode layouts.
//!
//! Coordinates: `x` is lateral (across the guide), `y` runs along the guide
//! and `z` is the height above the electrode plane `z = 0`. Every layout is
//! gapless: each gap is split at its midpoint between the two neighbouring
//! electrodes, and whatever is not an rf electrode is grounded. Ground patches
//! therefore never have to be stored for the field to be correct.
//!
//! Guide paths start at the origin heading along `+y` and bend towards `-x`,
//! so the outward (centrifugal) direction inside the bend is `+x` in the
//! local frame.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LAYOUT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Rf,
    Ground,
}

impl Role {
    /// Voltage weight of the role for a unit rf drive.
    pub fn weight(self) -> f64 {
        match self {
            Role::Rf => 1.0,
            Role::Ground => 0.0,
        }
    }
}

/// Symmetric five-wire cross-section: ground, rf, ground (centre), rf, ground.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveWireCrossSection {
    /// Width of the grounded centre electrode [m].
    pub center_width: f64,
    /// Width of each rf rail [m].
    pub rf_rail_width: f64,
    /// Gap between neighbouring electrodes [m].
    pub gap: f64,
}

impl FiveWireCrossSection {
    pub fn new(center_width: f64, rf_rail_width: f64, gap: f64) -> Result<Self> {
        let cs = Self {
            center_width,
            rf_rail_width,
            gap,
        };
        cs.validate()?;
        Ok(cs)
    }

    /// The demonstrated chip: 350 µm centre electrode, 750 µm rf rails, 110 µm gaps.
    pub fn paper() -> Self {
        Self {
            center_width: 350e-6,
            rf_rail_width: 750e-6,
            gap: 110e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.center_width) || !ok(self.rf_rail_width) {
            return Err(Error::domain("electrode widths must be > 0"));
        }
        if !(self.gap.is_finite() && self.gap >= 0.0) {
            return Err(Error::domain("gap must be >= 0"));
        }
        Ok(())
    }

    /// Inner and outer edge `(a, b)` of the right-hand rf rail after splitting
    /// the gaps at their midpoints.
    pub fn rail_edges(&self) -> (f64, f64) {
        let a = 0.5 * self.center_width + 0.5 * self.gap;
        let b = a + 0.5 * self.gap + self.rf_rail_width + 0.5 * self.gap;
        (a, b)
    }

    /// Height of the rf null above the plane for the gapless layout, `sqrt(a b)`.
    pub fn null_height(&self) -> f64 {
        let (a, b) = self.rail_edges();
        (a * b).sqrt()
    }
}

/// One electrode of a translation-invariant cross-section. `x_min`/`x_max`
/// may be infinite for the outermost ground planes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Strip {
    #[serde(with = "lower_edge")]
    pub x_min: f64,
    #[serde(with = "upper_edge")]
    pub x_max: f64,
    pub role: Role,
}

// JSON has no infinities; unbounded strip edges are written as `null`.
macro_rules! unbounded_edge {
    ($name:ident, $inf:expr) => {
        mod $name {
            use serde::{Deserialize, Deserializer, Serializer};

            pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
                if x.is_infinite() {
                    s.serialize_none()
                } else {
                    s.serialize_some(x)
                }
            }

            pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
                Ok(Option::<f64>::deserialize(d)?.unwrap_or($inf))
            }
        }
    };
}
unbounded_edge!(lower_edge, f64::NEG_INFINITY);
unbounded_edge!(upper_edge, f64::INFINITY);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StripLayout {
    /// Sorted by `x_min`; consecutive strips share edges.
    pub strips: Vec<Strip>,
}

impl StripLayout {
    pub fn new(mut strips: Vec<Strip>) -> Result<Self> {
        strips.sort_by(|a, b| a.x_min.total_cmp(&b.x_min));
        let layout = Self { strips };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.strips.iter().any(|s| s.role == Role::Rf) {
            return Err(Error::domain("layout needs at least one rf electrode"));
        }
        for s in &self.strips {
            if s.x_min.is_nan() || s.x_max.is_nan() || s.x_min >= s.x_max {
                return Err(Error::domain(format!(
                    "strip [{}, {}] is empty or inverted",
                    s.x_min, s.x_max
                )));
            }
        }
        for w in self.strips.windows(2) {
            if w[0].x_max > w[1].x_min {
                return Err(Error::domain("strips overlap"));
            }
        }
        Ok(())
    }

    pub fn rf_strips(&self) -> impl Iterator<Item = &Strip> + '_ {
        self.strips.iter().filter(|s| s.role == Role::Rf)
    }

    /// True when the strips cover the whole x axis without holes.
    pub fn tiles_plane(&self) -> bool {
        let first = self.strips.first().map(|s| s.x_min);
        let last = self.strips.last().map(|s| s.x_max);
        first == Some(f64::NEG_INFINITY)
            && last == Some(f64::INFINITY)
            && self.strips.windows(2).all(|w| w[0].x_max == w[1].x_min)
    }

    /// The layout mirrored through `x = 0`.
    pub fn mirrored(&self) -> Self {
        let mut strips: Vec<Strip> = self
            .strips
            .iter()
            .map(|s| Strip {
                x_min: -s.x_max,
                x_max: -s.x_min,
                role: s.role,
            })
            .collect();
        strips.sort_by(|a, b| a.x_min.total_cmp(&b.x_min));
        Self { strips }
    }

    /// Largest finite electrode edge, a natural length scale of the layout.
    pub fn length_scale(&self) -> f64 {
        self.strips
            .iter()
            .flat_map(|s| [s.x_min, s.x_max])
            .filter(|x| x.is_finite())
            .fold(0.0, |acc: f64, x| acc.max(x.abs()))
    }
}

/// Gapless five-wire layout: rf rails on `[a, b]` and `[-b, -a]`, ground elsewhere.
pub fn build_five_wire(cs: &FiveWireCrossSection) -> Result<StripLayout> {
    cs.validate()?;
    let (a, b) = cs.rail_edges();
    let strip = |x_min, x_max, role| Strip { x_min, x_max, role };
    StripLayout::new(vec![
        strip(f64::NEG_INFINITY, -b, Role::Ground),
        strip(-b, -a, Role::Rf),
        strip(-a, a, Role::Ground),
        strip(a, b, Role::Rf),
        strip(b, f64::INFINITY, Role::Ground),
    ])
}

/// Planar polygon in the `z = 0` plane, stored counter-clockwise seen from `+z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub vertices: Vec<[f64; 2]>,
    pub role: Role,
}

impl Patch {
    pub fn new(mut vertices: Vec<[f64; 2]>, role: Role) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidShape("polygon needs at least three vertices".into()));
        }
        if vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidShape("polygon vertex is not finite".into()));
        }
        let area = signed_area(&vertices);
        if area == 0.0 {
            return Err(Error::InvalidShape("degenerate polygon with zero area".into()));
        }
        if area < 0.0 {
            vertices.reverse();
        }
        Ok(Self { vertices, role })
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices).abs()
    }

    pub fn is_simple(&self) -> bool {
        polygon_is_simple(&self.vertices)
    }

    fn mirrored_x(&self) -> Self {
        let mut vertices: Vec<[f64; 2]> = self.vertices.iter().map(|&[x, y]| [-x, y]).collect();
        vertices.reverse();
        Self {
            vertices,
            role: self.role,
        }
    }
}

fn signed_area(v: &[[f64; 2]]) -> f64 {
    let n = v.len();
    0.5 * (0..n)
        .map(|i| {
            let [x0, y0] = v[i];
            let [x1, y1] = v[(i + 1) % n];
            x0 * y1 - x1 * y0
        })
        .sum::<f64>()
}

fn orientation(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> f64 {
    (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
}

fn segments_intersect(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let d1 = orientation(q1, q2, p1);
    let d2 = orientation(q1, q2, p2);
    let d3 = orientation(p1, p2, q1);
    let d4 = orientation(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on_segment = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| {
        c[0] >= a[0].min(b[0]) && c[0] <= a[0].max(b[0]) && c[1] >= a[1].min(b[1]) && c[1] <= a[1].max(b[1])
    };
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// Brute-force check that no two non-adjacent edges touch.
pub fn polygon_is_simple(v: &[[f64; 2]]) -> bool {
    let n = v.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let (a1, a2) = (v[i], v[(i + 1) % n]);
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            let (b1, b2) = (v[j], v[(j + 1) % n]);
            if segments_intersect(a1, a2, b1, b2) {
                return false;
            }
        }
    }
    true
}

/// Grounded plate perpendicular to the guide entrance, in the plane `y = y`.
///
/// The plate is treated as an unbroken grounded plane for the field (method
/// of images); the hole only matters geometrically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AperturePlate {
    /// Position of the plate plane along the guide axis [m]; negative values
    /// are in front of the substrate edge at `y = 0`.
    pub y: f64,
    /// Side length of the square hole [m].
    pub hole_side: f64,
}

impl AperturePlate {
    /// Plate `distance` in front of the substrate edge.
    pub fn in_front(distance: f64, hole_side: f64) -> Self {
        Self {
            y: -distance,
            hole_side,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarLayout {
    pub patches: Vec<Patch>,
    #[serde(default)]
    pub aperture: Option<AperturePlate>,
}

impl PlanarLayout {
    pub fn new(patches: Vec<Patch>) -> Result<Self> {
        if !patches.iter().any(|p| p.role == Role::Rf) {
            return Err(Error::domain("layout needs at least one rf electrode"));
        }
        Ok(Self {
            patches,
            aperture: None,
        })
    }

    pub fn with_aperture(mut self, plate: AperturePlate) -> Self {
        self.aperture = Some(plate);
        self
    }

    pub fn rf_patches(&self) -> impl Iterator<Item = &Patch> + '_ {
        self.patches.iter().filter(|p| p.role == Role::Rf)
    }

    /// Bounding box `[x_min, x_max, y_min, y_max]` of all patches.
    pub fn bounds(&self) -> [f64; 4] {
        let mut b = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
        for &[x, y] in self.patches.iter().flat_map(|p| p.vertices.iter()) {
            b[0] = b[0].min(x);
            b[1] = b[1].max(x);
            b[2] = b[2].min(y);
            b[3] = b[3].max(y);
        }
        b
    }

    /// Same patch set mirrored through `x = 0`, listed in the same order.
    pub fn mirrored(&self) -> Self {
        Self {
            patches: self.patches.iter().map(Patch::mirrored_x).collect(),
            aperture: self.aperture,
        }
    }
}

/// Pure quadrupole `φ = V (x² - (z - z₀)²) / (2 R²)` used to check
/// characterization and tracking against textbook Paul-trap results.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdealQuadrupole {
    pub center_height: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ElectrodeLayout {
    CrossSection(StripLayout),
    Planar(PlanarLayout),
    IdealQuadrupole(IdealQuadrupole),
}

impl ElectrodeLayout {
    /// Typical transverse length scale, used for numerical step sizes.
    pub fn length_scale(&self) -> f64 {
        match self {
            ElectrodeLayout::CrossSection(s) => s.length_scale(),
            ElectrodeLayout::Planar(p) => {
                let b = p.bounds();
                b[0].abs().max(b[1].abs())
            }
            ElectrodeLayout::IdealQuadrupole(q) => q.radius.max(q.center_height),
        }
    }

    /// Longitudinal station used when a transverse cut is needed.
    pub fn reference_station(&self) -> f64 {
        match self {
            ElectrodeLayout::Planar(p) => {
                let b = p.bounds();
                0.5 * (b[2] + b[3])
            }
            _ => 0.0,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            schema_version: u32,
            layout: &'a ElectrodeLayout,
        }
        Ok(serde_json::to_string_pretty(&Doc {
            schema_version: LAYOUT_SCHEMA_VERSION,
            layout: self,
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Doc {
            schema_version: u32,
            layout: ElectrodeLayout,
        }
        let doc: Doc = serde_json::from_str(text)
            .map_err(|e| Error::config(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
        if doc.schema_version != LAYOUT_SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("unsupported layout schema {}", doc.schema_version),
            ));
        }
        Ok(doc.layout)
    }
}

impl From<StripLayout> for ElectrodeLayout {
    fn from(s: StripLayout) -> Self {
        ElectrodeLayout::CrossSection(s)
    }
}

impl From<PlanarLayout> for ElectrodeLayout {
    fn from(p: PlanarLayout) -> Self {
        ElectrodeLayout::Planar(p)
    }
}

/// Centre line of a guide: straight lead-in, circular arc, straight lead-out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidePath {
    pub straight_lead_in: f64,
    /// Bend radius ρ [m]; ignored when `arc_angle` is zero.
    pub arc_radius: f64,
    /// Deflection angle [rad].
    pub arc_angle: f64,
    pub straight_lead_out: f64,
}

/// Local coordinates of a point relative to a guide path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathCoords {
    /// Arc length along the centre line [m]; negative before the entrance.
    pub s: f64,
    /// Signed lateral offset [m]; positive is outward in the bend.
    pub lateral: f64,
}

impl GuidePath {
    pub fn new(straight_lead_in: f64, arc_radius: f64, arc_angle: f64, straight_lead_out: f64) -> Result<Self> {
        let p = Self {
            straight_lead_in,
            arc_radius,
            arc_angle,
            straight_lead_out,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn straight(length: f64) -> Result<Self> {
        Self::new(length, 0.0, 0.0, 0.0)
    }

    /// 30° bend of radius 40 mm, with equal straight sections making up a
    /// total centre-line length of 37 mm.
    pub fn paper() -> Self {
        let radius = 40e-3;
        let angle = 30f64.to_radians();
        let lead = 0.5 * (37e-3 - radius * angle);
        Self {
            straight_lead_in: lead,
            arc_radius: radius,
            arc_angle: angle,
            straight_lead_out: lead,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.straight_lead_in >= 0.0 && self.straight_lead_out >= 0.0) {
            return Err(Error::domain("straight sections must have non-negative length"));
        }
        if !(self.arc_angle >= 0.0 && self.arc_angle.is_finite()) {
            return Err(Error::domain("arc angle must be finite and >= 0"));
        }
        if self.arc_angle > 0.0 && !(self.arc_radius > 0.0 && self.arc_radius.is_finite()) {
            return Err(Error::domain(format!("arc radius must be > 0, got {}", self.arc_radius)));
        }
        if self.total_length() <= 0.0 {
            return Err(Error::domain("guide path has zero length"));
        }
        Ok(())
    }

    pub fn arc_length(&self) -> f64 {
        if self.arc_angle == 0.0 {
            0.0
        } else {
            self.arc_radius * self.arc_angle
        }
    }

    pub fn total_length(&self) -> f64 {
        self.straight_lead_in + self.arc_length() + self.straight_lead_out
    }

    pub fn arc_start(&self) -> f64 {
        self.straight_lead_in
    }

    pub fn arc_end(&self) -> f64 {
        self.straight_lead_in + self.arc_length()
    }

    /// Curvature 1/ρ at arc length `s` (zero on the straight sections).
    pub fn curvature(&self, s: f64) -> f64 {
        if self.arc_angle > 0.0 && s >= self.arc_start() && s < self.arc_end() {
            1.0 / self.arc_radius
        } else {
            0.0
        }
    }

    fn arc_center(&self) -> [f64; 2] {
        [-self.arc_radius, self.straight_lead_in]
    }

    /// Centre-line point and unit tangent at arc length `s`. Values of `s`
    /// outside the path extend the first/last straight section.
    pub fn frame(&self, s: f64) -> ([f64; 2], [f64; 2]) {
        if s <= self.arc_start() || self.arc_angle == 0.0 {
            return ([0.0, s], [0.0, 1.0]);
        }
        let c = self.arc_center();
        let rho = self.arc_radius;
        if s <= self.arc_end() {
            let phi = (s - self.arc_start()) / rho;
            let (sp, cp) = phi.sin_cos();
            return ([c[0] + rho * cp, c[1] + rho * sp], [-sp, cp]);
        }
        let (sp, cp) = self.arc_angle.sin_cos();
        let end = [c[0] + rho * cp, c[1] + rho * sp];
        let t = [-sp, cp];
        let d = s - self.arc_end();
        ([end[0] + d * t[0], end[1] + d * t[1]], t)
    }

    /// Lab-frame `(x, y)` of the point at arc length `s` and lateral offset `lateral`.
    pub fn to_lab(&self, s: f64, lateral: f64) -> [f64; 2] {
        let (p, t) = self.frame(s);
        // outward normal: tangent rotated clockwise
        [p[0] + lateral * t[1], p[1] - lateral * t[0]]
    }

    /// Inverse of [`GuidePath::to_lab`] for points near the centre line.
    pub fn project(&self, point: [f64; 2]) -> PathCoords {
        let [x, y] = point;
        if self.arc_angle == 0.0 {
            return PathCoords { s: y, lateral: x };
        }
        let mut best: Option<(f64, PathCoords)> = None;
        let mut consider = |coords: PathCoords| {
            let lab = self.to_lab(coords.s, coords.lateral);
            let resid = (lab[0] - x).hypot(lab[1] - y);
            let better = match best {
                None => true,
                Some((r, c)) => resid < r - 1e-15 || (resid <= r + 1e-15 && coords.lateral.abs() < c.lateral.abs()),
            };
            if better {
                best = Some((resid, coords));
            }
        };
        // lead-in (extends backwards indefinitely)
        consider(PathCoords {
            s: y.min(self.arc_start()),
            lateral: x,
        });
        // arc
        let c = self.arc_center();
        let (dx, dy) = (x - c[0], y - c[1]);
        let phi = dy.atan2(dx).clamp(0.0, self.arc_angle);
        let r = dx.hypot(dy);
        let (sp, cp) = phi.sin_cos();
        let radial = dx * cp + dy * sp;
        consider(PathCoords {
            s: self.arc_start() + phi * self.arc_radius,
            lateral: if r > 0.0 { radial - self.arc_radius } else { -self.arc_radius },
        });
        // lead-out (extends forwards indefinitely)
        let (p_end, t) = self.frame(self.arc_end());
        let (ex, ey) = (x - p_end[0], y - p_end[1]);
        let along = (ex * t[0] + ey * t[1]).max(0.0);
        consider(PathCoords {
            s: self.arc_end() + along,
            lateral: ex * t[1] - ey * t[0],
        });
        best.map(|(_, c)| c).unwrap_or(PathCoords { s: y, lateral: x })
    }
}

pub const DEFAULT_SEGMENTS_PER_ARC: usize = 64;

/// Sweep the rf strips of a cross-section along `path` and tessellate them
/// into planar quadrilaterals: one per straight section and
/// `segments_per_arc` across the bend.
pub fn discretize_arc_layout(
    cs: &FiveWireCrossSection,
    path: &GuidePath,
    segments_per_arc: usize,
) -> Result<PlanarLayout> {
    path.validate()?;
    let strips = build_five_wire(cs)?;
    if path.arc_angle > 0.0 && segments_per_arc < 8 {
        return Err(Error::domain(format!(
            "segments_per_arc must be >= 8, got {segments_per_arc}"
        )));
    }
    let mut stations = Vec::new();
    stations.push(0.0);
    if path.straight_lead_in > 0.0 {
        stations.push(path.arc_start());
    }
    if path.arc_angle > 0.0 {
        let s0 = path.arc_start();
        let l = path.arc_length();
        stations.extend((1..=segments_per_arc).map(|k| s0 + l * k as f64 / segments_per_arc as f64));
    }
    if path.straight_lead_out > 0.0 {
        stations.push(path.total_length());
    }
    stations.dedup();

    let mut patches = Vec::new();
    for strip in strips.rf_strips() {
        for w in stations.windows(2) {
            let (s0, s1) = (w[0], w[1]);
            let vertices = vec![
                path.to_lab(s0, strip.x_min),
                path.to_lab(s0, strip.x_max),
                path.to_lab(s1, strip.x_max),
                path.to_lab(s1, strip.x_min),
            ];
            patches.push(Patch::new(vertices, Role::Rf)?);
        }
    }
    PlanarLayout::new(patches)
}

/// [`discretize_arc_layout`] with the straight lead-in replaced by rails
/// whose entrance end follows `shape`.
pub fn shaped_guide_layout(
    cs: &FiveWireCrossSection,
    path: &GuidePath,
    segments_per_arc: usize,
    shape: &CouplingEndShape,
) -> Result<PlanarLayout> {
    let lead_in = path.straight_lead_in;
    if !(lead_in > shape.anchor_y) {
        return Err(Error::domain("straight lead-in must extend beyond the coupling anchor"));
    }
    let guide = discretize_arc_layout(cs, path, segments_per_arc)?;
    let entrance = apply_coupling_shape(&coupling_end_layout(cs, lead_in, shape)?, shape)?;
    let tol = 1e-12 * path.total_length();
    let mut patches = entrance.patches;
    patches.extend(
        guide
            .patches
            .into_iter()
            .filter(|p| p.vertices.iter().any(|v| v[1] > lead_in + tol)),
    );
    PlanarLayout::new(patches)
}

/// Straight guide of the given length starting at the substrate edge `y = 0`.
pub fn extrude_straight(cs: &FiveWireCrossSection, length: f64) -> Result<PlanarLayout> {
    discretize_arc_layout(cs, &GuidePath::straight(length)?, DEFAULT_SEGMENTS_PER_ARC)
}

/// Lateral offsets of the signal-electrode edge points near the substrate
/// edge. Only the right-hand rail is parametrized; the left rail is its
/// mirror image, so `n` control stations give `2n` free offsets describing
/// `4n` points. Positive offsets move an edge away from the guide centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingEndShape {
    /// Longitudinal positions of the control stations [m], ascending, first at 0.
    pub control_y: Vec<f64>,
    /// Unperturbed anchor station where the edges return to the straight rail [m].
    pub anchor_y: f64,
    /// Inner-edge offsets, one per station [m].
    pub inner: Vec<f64>,
    /// Outer-edge offsets, one per station [m].
    pub outer: Vec<f64>,
    /// Largest admissible |offset| [m].
    pub max_offset: f64,
}

/// A mirrored control point of the coupling shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlPoint {
    pub x: f64,
    pub y: f64,
}

impl CouplingEndShape {
    /// Three stations per edge spread over `span`, anchored at `span`.
    pub fn with_span(span: f64, max_offset: f64) -> Self {
        let n = 3;
        Self {
            control_y: (0..n).map(|k| span * k as f64 / n as f64).collect(),
            anchor_y: span,
            inner: vec![0.0; n],
            outer: vec![0.0; n],
            max_offset,
        }
    }

    pub fn n_stations(&self) -> usize {
        self.control_y.len()
    }

    /// Free parameters: inner offsets followed by outer offsets.
    pub fn params(&self) -> Vec<f64> {
        self.inner.iter().chain(self.outer.iter()).copied().collect()
    }

    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        let n = self.n_stations();
        if params.len() != 2 * n {
            return Err(Error::InvalidShape(format!(
                "expected {} offsets, got {}",
                2 * n,
                params.len()
            )));
        }
        Ok(Self {
            inner: params[..n].to_vec(),
            outer: params[n..].to_vec(),
            ..self.clone()
        })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_stations();
        if n == 0 || self.inner.len() != n || self.outer.len() != n {
            return Err(Error::InvalidShape("offset count does not match stations".into()));
        }
        if self.control_y.windows(2).any(|w| w[0] >= w[1])
            || self.control_y.last().is_some_and(|&y| y >= self.anchor_y)
        {
            return Err(Error::InvalidShape("control stations must ascend below the anchor".into()));
        }
        for (k, &d) in self.inner.iter().chain(self.outer.iter()).enumerate() {
            if !d.is_finite() || d.abs() > self.max_offset {
                return Err(Error::InvalidShape(format!(
                    "offset #{k} = {d:.3e} m exceeds the limit {:.3e} m",
                    self.max_offset
                )));
            }
        }
        Ok(())
    }

    /// All mirrored control points for a cross-section, right rail first.
    pub fn control_points(&self, cs: &FiveWireCrossSection) -> Vec<ControlPoint> {
        let (a, b) = cs.rail_edges();
        let right: Vec<ControlPoint> = self
            .control_y
            .iter()
            .zip(&self.inner)
            .map(|(&y, &d)| ControlPoint { x: a - d, y })
            .chain(
                self.control_y
                    .iter()
                    .zip(&self.outer)
                    .map(|(&y, &d)| ControlPoint { x: b + d, y }),
            )
            .collect();
        let left = right.iter().map(|p| ControlPoint { x: -p.x, y: p.y });
        right.iter().copied().chain(left).collect()
    }
}

/// Straight rails of `length` whose polygons carry vertices at the shape's
/// control stations, ready for [`apply_coupling_shape`].
pub fn coupling_end_layout(
    cs: &FiveWireCrossSection,
    length: f64,
    shape: &CouplingEndShape,
) -> Result<PlanarLayout> {
    shape.validate()?;
    if !(length > shape.anchor_y) {
        return Err(Error::domain("guide must extend beyond the coupling anchor"));
    }
    let (a, b) = cs.rail_edges();
    let mut stations = shape.control_y.clone();
    stations.push(shape.anchor_y);
    // right rail: inner edge upwards, outer edge back down
    let mut right: Vec<[f64; 2]> = stations.iter().map(|&y| [a, y]).collect();
    right.push([a, length]);
    right.push([b, length]);
    right.extend(stations.iter().rev().map(|&y| [b, y]));
    let right = Patch::new(right, Role::Rf)?;
    let left = right.mirrored_x();
    PlanarLayout::new(vec![right, left])
}

/// Displace the control vertices of a layout built by
/// [`coupling_end_layout`]. Mirror symmetry holds by construction.
pub fn apply_coupling_shape(layout: &PlanarLayout, shape: &CouplingEndShape) -> Result<PlanarLayout> {
    shape.validate()?;
    let tol = 1e-12;
    let mut out = layout.clone();
    for patch in out.patches.iter_mut().filter(|p| p.role == Role::Rf) {
        let centroid_x: f64 = patch.vertices.iter().map(|v| v[0]).sum::<f64>() / patch.vertices.len() as f64;
        let side = if centroid_x >= 0.0 { 1.0 } else { -1.0 };
        for (k, &yk) in shape.control_y.iter().enumerate() {
            let idx: Vec<usize> = (0..patch.vertices.len())
                .filter(|&i| (patch.vertices[i][1] - yk).abs() <= tol)
                .collect();
            if idx.len() != 2 {
                return Err(Error::InvalidShape(format!(
                    "rf patch has {} vertices at control station y = {yk:.3e} m, expected 2",
                    idx.len()
                )));
            }
            let (i_in, i_out) = if patch.vertices[idx[0]][0].abs() < patch.vertices[idx[1]][0].abs() {
                (idx[0], idx[1])
            } else {
                (idx[1], idx[0])
            };
            patch.vertices[i_in][0] -= side * shape.inner[k];
            patch.vertices[i_out][0] += side * shape.outer[k];
            if patch.vertices[i_in][0] * side <= 0.0 {
                return Err(Error::InvalidShape(format!(
                    "inner edge crosses the symmetry plane at y = {yk:.3e} m"
                )));
            }
        }
        if !patch.is_simple() {
            return Err(Error::InvalidShape("shaped electrode polygon self-intersects".into()));
        }
        if signed_area(&patch.vertices) <= 0.0 {
            return Err(Error::InvalidShape("shaped electrode polygon flipped orientation".into()));
        }
    }
    Ok(out)
}
