//! Electron trajectories in the oscillating guide field.
//!
//! Trajectories are integrated with velocity Verlet at a fixed number of
//! steps per drive period. Two geometries are supported:
//!
//! * `Comoving2d`: the transverse cross-section field plus the centrifugal
//!   acceleration `v_s² / ρ` of a frame moving along the bend. Positions are
//!   `(lateral, s, z)` with `s` the arc length along the guide.
//! * `Full3d`: lab-frame tracking through a discretized 3D layout.

mod scan;
pub mod spectrum;

pub use scan::{
    cell_seed, falling_edge, rising_edge, stability_scan, GeometricFactors, GuideModel, ScanAxes, ScanCell,
    StabilityScan, CLIFF_LEVEL,
};

use std::f64::consts::TAU;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ElectrodeLayout, GuidePath};
use crate::model::{speed_from_ev, DriveParams, ParticleState, Vec3, E_MASS, E_OVER_M};
use crate::stability::null_height;

/// Acceleration of an electron as a function of position and time only.
pub trait ForceModel: Sync {
    fn acceleration(&self, r: &Vec3, t: f64) -> Vec3;
}

/// Quasistatic drive force `-e E(r) cos(Ω t + φ₀) / m`.
#[derive(Debug, Clone, Copy)]
pub struct FieldForce<'a> {
    layout: &'a ElectrodeLayout,
    drive: DriveParams,
    frozen: bool,
}

impl<'a> FieldForce<'a> {
    pub fn new(layout: &'a ElectrodeLayout, drive: DriveParams) -> Self {
        Self {
            layout,
            drive,
            frozen: false,
        }
    }

    /// Static field at the drive's peak voltage (`cos ≡ 1`).
    pub fn frozen(layout: &'a ElectrodeLayout, drive: DriveParams) -> Self {
        Self {
            layout,
            drive,
            frozen: true,
        }
    }
}

impl ForceModel for FieldForce<'_> {
    #[inline]
    fn acceleration(&self, r: &Vec3, t: f64) -> Vec3 {
        let v = if self.frozen {
            self.drive.amplitude
        } else {
            self.drive.voltage_at(t)
        };
        if v == 0.0 {
            return Vec3::zeros();
        }
        (-E_OVER_M * v) * self.layout.unit_field(r)
    }
}

/// Cross-section field plus the centrifugal term of a frame moving along
/// `path` at constant longitudinal speed.
#[derive(Debug, Clone, Copy)]
pub struct ComovingForce<'a> {
    field: FieldForce<'a>,
    path: GuidePath,
    longitudinal_speed: f64,
}

impl<'a> ComovingForce<'a> {
    pub fn new(layout: &'a ElectrodeLayout, drive: DriveParams, path: GuidePath, longitudinal_speed: f64) -> Self {
        Self {
            field: FieldForce::new(layout, drive),
            path,
            longitudinal_speed,
        }
    }
}

impl ForceModel for ComovingForce<'_> {
    #[inline]
    fn acceleration(&self, r: &Vec3, t: f64) -> Vec3 {
        let mut a = self.field.acceleration(r, t);
        let v = self.longitudinal_speed;
        a.x += v * v * self.path.curvature(r.y);
        a.y = 0.0;
        a
    }
}

/// Outward pseudo-force `m v_s² / ρ` [N] at arc length `s`, along `+x` of the comoving frame.
pub fn comoving_curved_force(s: f64, longitudinal_speed: f64, path: &GuidePath) -> Vec3 {
    Vec3::new(E_MASS * longitudinal_speed * longitudinal_speed * path.curvature(s), 0.0, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepControl {
    pub steps_per_period: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self { steps_per_period: 64 }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        if self.steps_per_period < 16 {
            return Err(Error::domain(format!(
                "at least 16 steps per drive period required, got {}",
                self.steps_per_period
            )));
        }
        Ok(())
    }

    pub fn dt(&self, drive: &DriveParams) -> f64 {
        drive.period() / self.steps_per_period as f64
    }
}

/// How positions map onto guide coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GuideFrame {
    /// `x` lateral, `y` along the guide (straight guides and the comoving frame).
    Straight,
    /// Lab coordinates of a bent guide.
    Lab(GuidePath),
}

/// Termination rules for a single trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitCriteria {
    pub frame: GuideFrame,
    /// Height of the guide axis [m].
    pub axis_height: f64,
    /// Distance from the axis beyond which the electron counts as escaped [m].
    pub escape_radius: f64,
    /// Arc length of the exit plane [m].
    pub exit_s: f64,
}

impl ExitCriteria {
    /// `(s, lateral, vertical offset)` of a position.
    #[inline]
    fn local(&self, r: &Vec3) -> (f64, f64, f64) {
        match &self.frame {
            GuideFrame::Straight => (r.y, r.x, r.z - self.axis_height),
            GuideFrame::Lab(path) => {
                let c = path.project([r.x, r.y]);
                (c.s, c.lateral, r.z - self.axis_height)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitClass {
    Exited,
    HitSubstrate,
    Escaped,
    TimedOut,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryResult {
    pub class: ExitClass,
    /// State at termination; for `Exited` it is interpolated onto the exit plane.
    pub final_state: ParticleState,
    /// Distance from the guide axis where the exit plane was crossed [m].
    pub exit_offset: Option<f64>,
    pub steps: usize,
    /// Recorded states, including the first and the last.
    pub samples: Vec<ParticleState>,
}

/// Velocity-Verlet integration of `force` from `state0` until a termination
/// rule fires or `t_end` is reached. `record_every = Some(k)` stores every
/// k-th state.
pub fn integrate<F: ForceModel + ?Sized>(
    force: &F,
    state0: ParticleState,
    dt: f64,
    t_end: f64,
    exit: &ExitCriteria,
    record_every: Option<usize>,
) -> Result<TrajectoryResult> {
    if !state0.is_finite() {
        return Err(Error::domain("initial state must be finite"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::domain(format!("time step must be > 0, got {dt}")));
    }
    let mut samples = Vec::new();
    if record_every.is_some() {
        samples.push(state0);
    }
    let mut r = state0.position;
    let mut v = state0.velocity;
    let mut t = state0.time;
    let mut a = force.acceleration(&r, t);
    let mut steps = 0usize;
    let (mut s_prev, ..) = exit.local(&r);

    let finish = |class, state: ParticleState, offset, steps, mut samples: Vec<ParticleState>| {
        if record_every.is_some() && samples.last() != Some(&state) {
            samples.push(state);
        }
        Ok(TrajectoryResult {
            class,
            final_state: state,
            exit_offset: offset,
            steps,
            samples,
        })
    };

    while t < t_end {
        let last_valid = ParticleState::new(r, v, t);
        let r_new = r + v * dt + a * (0.5 * dt * dt);
        let t_new = t + dt;
        steps += 1;
        if !r_new.iter().all(|c| c.is_finite()) {
            return Err(Error::IntegrationBlowUp { last_valid });
        }
        if r_new.z <= 0.0 {
            return finish(
                ExitClass::HitSubstrate,
                ParticleState::new(r_new, v + a * dt, t_new),
                None,
                steps,
                samples,
            );
        }
        let a_new = force.acceleration(&r_new, t_new);
        let v_new = v + (a + a_new) * (0.5 * dt);
        let state = ParticleState::new(r_new, v_new, t_new);
        if !state.is_finite() || !a_new.iter().all(|c| c.is_finite()) {
            return Err(Error::IntegrationBlowUp { last_valid });
        }
        let (s, lateral, dz) = exit.local(&r_new);
        if s >= exit.exit_s {
            let (_, lat_prev, dz_prev) = exit.local(&r);
            let f = if s > s_prev { (exit.exit_s - s_prev) / (s - s_prev) } else { 1.0 };
            let lat = lat_prev + f * (lateral - lat_prev);
            let vert = dz_prev + f * (dz - dz_prev);
            let crossing = ParticleState::new(r + f * (r_new - r), v + f * (v_new - v), t + f * dt);
            return finish(ExitClass::Exited, crossing, Some(lat.hypot(vert)), steps, samples);
        }
        if lateral.hypot(dz) > exit.escape_radius {
            return finish(ExitClass::Escaped, state, None, steps, samples);
        }
        if let Some(k) = record_every {
            if k > 0 && steps % k == 0 {
                samples.push(state);
            }
        }
        r = r_new;
        v = v_new;
        a = a_new;
        t = t_new;
        s_prev = s;
    }
    finish(ExitClass::TimedOut, ParticleState::new(r, v, t), None, steps, samples)
}

/// Launch of a single electron at the guide entrance `s = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Launch {
    /// [eV]
    pub kinetic_energy: f64,
    /// `(lateral, vertical)` offset from the guide axis [m].
    pub offset: [f64; 2],
    /// `(lateral, vertical)` tilt of the initial velocity against the axis [rad].
    #[serde(default)]
    pub angle: [f64; 2],
}

/// Track one electron from the guide entrance to the exit plane, in the
/// comoving frame or in the lab frame depending on `mode`.
pub fn track_electron(
    launch: &Launch,
    layout: &ElectrodeLayout,
    drive: &DriveParams,
    path: &GuidePath,
    mode: TrackingMode,
    step: StepControl,
    record_every: Option<usize>,
) -> Result<TrajectoryResult> {
    step.validate()?;
    path.validate()?;
    let z0 = axis_height(layout, path, mode)?;
    let speed = speed_from_ev(launch.kinetic_energy)?;
    let dir = Vec3::new(launch.angle[0].tan(), 1.0, launch.angle[1].tan()).normalize();
    // at s = 0 the lab and guide frames coincide
    let state0 = ParticleState::new(Vec3::new(launch.offset[0], 0.0, z0 + launch.offset[1]), speed * dir, 0.0);
    if !(state0.position.z > 0.0) {
        return Err(Error::domain("launch point must lie above the electrode plane"));
    }
    let length = path.total_length();
    let exit = ExitCriteria {
        frame: match mode {
            TrackingMode::Comoving2d => GuideFrame::Straight,
            TrackingMode::Full3d => GuideFrame::Lab(*path),
        },
        axis_height: z0,
        escape_radius: 5.0 * z0,
        exit_s: length,
    };
    let t_end = 3.0 * length / state0.velocity.y + 10.0 * drive.period();
    let dt = step.dt(drive);
    match mode {
        TrackingMode::Comoving2d => {
            let force = ComovingForce::new(layout, *drive, *path, state0.velocity.y);
            integrate(&force, state0, dt, t_end, &exit, record_every)
        }
        TrackingMode::Full3d => integrate(&FieldForce::new(layout, *drive), state0, dt, t_end, &exit, record_every),
    }
}

/// Track one electron through `layout` under `drive`.
pub fn integrate_trajectory(
    state0: ParticleState,
    layout: &ElectrodeLayout,
    drive: &DriveParams,
    t_end: f64,
    step: StepControl,
    exit: &ExitCriteria,
    record_every: Option<usize>,
) -> Result<TrajectoryResult> {
    step.validate()?;
    if !(state0.position.z > 0.0) {
        return Err(Error::domain("initial position must lie above the electrode plane"));
    }
    let force = FieldForce::new(layout, *drive);
    integrate(&force, state0, step.dt(drive), t_end, exit, record_every)
}

/// Write a trajectory as CSV `t,x,y,z,vx,vy,vz` (SI).
pub fn write_trajectory_csv<W: Write>(mut out: W, samples: &[ParticleState]) -> Result<()> {
    writeln!(out, "t,x,y,z,vx,vy,vz")?;
    for s in samples {
        let (p, v) = (s.position, s.velocity);
        writeln!(out, "{},{},{},{},{},{},{}", s.time, p.x, p.y, p.z, v.x, v.y, v.z)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RaySampling {
    /// Uniform over the source disk area and the solid angle of the cone.
    Uniform,
    /// Rays on the disk rim combined with directions on the cone rim.
    Envelope,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackingMode {
    #[serde(rename = "comoving_2d")]
    Comoving2d,
    #[serde(rename = "full_3d")]
    Full3d,
}

/// Injected electron ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamSpec {
    pub source_disk_diameter: f64,
    /// Full opening angle of the divergence cone [rad].
    pub full_divergence_angle: f64,
    /// [eV]
    pub kinetic_energy: f64,
    pub n_rays: usize,
    pub n_phases: usize,
    /// Distance of the source behind the aperture [m].
    pub launch_offset: f64,
    /// Distance of the aperture in front of the guide entrance [m].
    pub aperture_distance: f64,
    pub sampling: RaySampling,
}

impl BeamSpec {
    /// 20 µm source 1.5 mm behind an aperture 0.5 mm in front of the guide,
    /// 1° full divergence, 100 rays, 16 drive phases.
    pub fn paper(kinetic_energy: f64) -> Self {
        Self {
            source_disk_diameter: 20e-6,
            full_divergence_angle: 1f64.to_radians(),
            kinetic_energy,
            n_rays: 100,
            n_phases: 16,
            launch_offset: 1.5e-3,
            aperture_distance: 0.5e-3,
            sampling: RaySampling::Uniform,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.source_disk_diameter > 0.0) {
            return Err(Error::domain("source disk diameter must be > 0"));
        }
        if !(self.full_divergence_angle >= 0.0 && self.full_divergence_angle < std::f64::consts::PI) {
            return Err(Error::domain("divergence angle must lie in [0, π)"));
        }
        if self.n_rays == 0 || self.n_phases == 0 {
            return Err(Error::domain("beam needs at least one ray and one phase"));
        }
        if !(self.launch_offset >= 0.0 && self.aperture_distance >= 0.0) {
            return Err(Error::domain("launch distances must be >= 0"));
        }
        speed_from_ev(self.kinetic_energy)?;
        Ok(())
    }

    /// Arc length of the source plane (negative, in front of the guide).
    pub fn source_s(&self) -> f64 {
        -(self.launch_offset + self.aperture_distance)
    }
}

/// Initial condition of one ray in guide coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    /// `(lateral, vertical)` offset from the axis on the source disk [m].
    pub offset: [f64; 2],
    /// Unit direction in `(lateral, s, z)`.
    pub direction: Vec3,
}

fn cone_direction(polar: f64, azimuth: f64) -> Vec3 {
    let (sp, cp) = polar.sin_cos();
    let (sa, ca) = azimuth.sin_cos();
    Vec3::new(sp * ca, cp, sp * sa)
}

pub fn sample_rays(beam: &BeamSpec, seed: u64) -> Vec<Ray> {
    let radius = 0.5 * beam.source_disk_diameter;
    let half = 0.5 * beam.full_divergence_angle;
    match beam.sampling {
        RaySampling::Uniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cos_half = half.cos();
            (0..beam.n_rays)
                .map(|_| {
                    let r = radius * rng.gen::<f64>().sqrt();
                    let th = TAU * rng.gen::<f64>();
                    let cos_polar = 1.0 - rng.gen::<f64>() * (1.0 - cos_half);
                    let az = TAU * rng.gen::<f64>();
                    Ray {
                        offset: [r * th.cos(), r * th.sin()],
                        direction: cone_direction(cos_polar.acos(), az),
                    }
                })
                .collect()
        }
        RaySampling::Envelope => {
            let k = (beam.n_rays as f64).sqrt().ceil() as usize;
            (0..k)
                .flat_map(|i| (0..k).map(move |j| (i, j)))
                .take(beam.n_rays)
                .map(|(i, j)| {
                    let th = TAU * i as f64 / k as f64;
                    let az = TAU * j as f64 / k as f64;
                    Ray {
                        offset: [radius * th.cos(), radius * th.sin()],
                        direction: cone_direction(half, az),
                    }
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmitOptions {
    pub step: StepControl,
    /// Escape radius in units of the guide height.
    pub escape_factor: f64,
    /// Radius of the detection disc around the axis at the exit [m].
    pub exit_radius: f64,
}

impl Default for TransmitOptions {
    fn default() -> Self {
        Self {
            step: StepControl::default(),
            escape_factor: 5.0,
            exit_radius: 100e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionResult {
    pub n_rays: usize,
    pub n_phases: usize,
    pub transmitted: usize,
    pub transmitted_fraction: f64,
    /// Transmitted fraction of the rays launched at each drive phase.
    pub per_phase: Vec<f64>,
    pub hit_substrate: usize,
    pub escaped: usize,
    /// Reached the exit plane outside the detection disc.
    pub missed_exit: usize,
    pub timed_out: usize,
    /// Trajectories aborted by a non-finite state.
    pub blow_ups: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RayOutcome {
    Transmitted,
    Missed,
    Hit,
    Escaped,
    TimedOut,
    BlowUp,
}

/// Transmit `beam` through the guide with the default step and detector settings.
pub fn transmit_beam(
    beam: &BeamSpec,
    layout: &ElectrodeLayout,
    drive: &DriveParams,
    path: &GuidePath,
    mode: TrackingMode,
    seed: u64,
) -> Result<TransmissionResult> {
    transmit_beam_with(beam, layout, drive, path, mode, seed, &TransmitOptions::default())
}

/// Height of the guide axis used for launch and loss classification.
pub fn axis_height(layout: &ElectrodeLayout, path: &GuidePath, mode: TrackingMode) -> Result<f64> {
    match mode {
        TrackingMode::Comoving2d => null_height(layout, 0.0, 0.0),
        TrackingMode::Full3d => {
            let p = path.to_lab(0.5 * path.total_length(), 0.0);
            null_height(layout, p[0], p[1])
        }
    }
}

pub fn transmit_beam_with(
    beam: &BeamSpec,
    layout: &ElectrodeLayout,
    drive: &DriveParams,
    path: &GuidePath,
    mode: TrackingMode,
    seed: u64,
    options: &TransmitOptions,
) -> Result<TransmissionResult> {
    beam.validate()?;
    path.validate()?;
    options.step.validate()?;
    match (mode, layout) {
        (TrackingMode::Full3d, ElectrodeLayout::Planar(_)) => {}
        (TrackingMode::Comoving2d, ElectrodeLayout::CrossSection(_) | ElectrodeLayout::IdealQuadrupole(_)) => {}
        _ => {
            return Err(Error::domain(format!(
                "{mode:?} tracking does not accept this layout kind"
            )))
        }
    }
    let z0 = axis_height(layout, path, mode)?;
    let speed = speed_from_ev(beam.kinetic_energy)?;
    let rays = sample_rays(beam, seed);
    let s_src = beam.source_s();
    let length = path.total_length();
    let dt = options.step.dt(drive);
    let t_end = 3.0 * (length - s_src) / (speed * (0.5 * beam.full_divergence_angle).cos()) + 10.0 * drive.period();
    let exit = ExitCriteria {
        frame: match mode {
            TrackingMode::Comoving2d => GuideFrame::Straight,
            TrackingMode::Full3d => GuideFrame::Lab(*path),
        },
        axis_height: z0,
        escape_radius: options.escape_factor * z0,
        exit_s: length,
    };

    let n_phases = beam.n_phases;
    let outcomes: Vec<RayOutcome> = (0..rays.len() * n_phases)
        .into_par_iter()
        .map(|k| {
            let ray = &rays[k / n_phases];
            let phase = k % n_phases;
            let d = drive.with_phase(drive.phase0 + TAU * phase as f64 / n_phases as f64);
            let mut state = ParticleState::new(
                Vec3::new(ray.offset[0], s_src, z0 + ray.offset[1]),
                speed * ray.direction,
                0.0,
            );
            let result = match mode {
                TrackingMode::Comoving2d => {
                    // field-free drift up to the guide entrance
                    let vs = state.velocity.y;
                    let t_drift = -s_src / vs;
                    state.position += state.velocity * t_drift;
                    state.time = t_drift;
                    let force = ComovingForce::new(layout, d, *path, vs);
                    integrate(&force, state, dt, t_end, &exit, None)
                }
                TrackingMode::Full3d => integrate(&FieldForce::new(layout, d), state, dt, t_end, &exit, None),
            };
            match result {
                Ok(r) => match r.class {
                    ExitClass::Exited if r.exit_offset.is_some_and(|o| o <= options.exit_radius) => {
                        RayOutcome::Transmitted
                    }
                    ExitClass::Exited => RayOutcome::Missed,
                    ExitClass::HitSubstrate => RayOutcome::Hit,
                    ExitClass::Escaped => RayOutcome::Escaped,
                    ExitClass::TimedOut => RayOutcome::TimedOut,
                },
                Err(_) => RayOutcome::BlowUp,
            }
        })
        .collect();

    let count = |o: RayOutcome| outcomes.iter().filter(|&&x| x == o).count();
    let transmitted = count(RayOutcome::Transmitted);
    let per_phase = (0..n_phases)
        .map(|p| {
            let n = outcomes
                .iter()
                .skip(p)
                .step_by(n_phases)
                .filter(|&&o| o == RayOutcome::Transmitted)
                .count();
            n as f64 / rays.len() as f64
        })
        .collect();
    Ok(TransmissionResult {
        n_rays: rays.len(),
        n_phases,
        transmitted,
        transmitted_fraction: transmitted as f64 / outcomes.len() as f64,
        per_phase,
        hit_substrate: count(RayOutcome::Hit),
        escaped: count(RayOutcome::Escaped),
        missed_exit: count(RayOutcome::Missed),
        timed_out: count(RayOutcome::TimedOut),
        blow_ups: count(RayOutcome::BlowUp),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_five_wire, FiveWireCrossSection, IdealQuadrupole};
    use crate::model::E_CHARGE;
    use approx::assert_relative_eq;

    fn straight_exit(z0: f64) -> ExitCriteria {
        ExitCriteria {
            frame: GuideFrame::Straight,
            axis_height: z0,
            escape_radius: 1e9,
            exit_s: 1e9,
        }
    }

    #[test]
    fn free_flight_is_a_straight_line() {
        let layout: ElectrodeLayout = build_five_wire(&FiveWireCrossSection::paper()).unwrap().into();
        let drive = DriveParams::from_mhz(0.0, 970.0).unwrap();
        let r0 = Vec3::new(1e-5, 0.0, 5e-4);
        let v0 = Vec3::new(1e3, 8e5, -2e2);
        let step = StepControl::default();
        let dt = step.dt(&drive);
        let t_end = 1000.0 * dt;
        let res = integrate_trajectory(
            ParticleState::new(r0, v0, 0.0),
            &layout,
            &drive,
            t_end * (1.0 - 1e-9),
            step,
            &straight_exit(5e-4),
            None,
        )
        .unwrap();
        assert_eq!(res.class, ExitClass::TimedOut);
        assert_eq!(res.steps, 1000);
        let expected = r0 + v0 * res.final_state.time;
        assert_relative_eq!((res.final_state.position - expected).norm() / expected.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn coarse_steps_are_rejected() {
        let layout: ElectrodeLayout = build_five_wire(&FiveWireCrossSection::paper()).unwrap().into();
        let drive = DriveParams::from_mhz(10.0, 970.0).unwrap();
        let state = ParticleState::new(Vec3::new(0.0, 0.0, 5e-4), Vec3::zeros(), 0.0);
        let err = integrate_trajectory(
            state,
            &layout,
            &drive,
            1e-9,
            StepControl { steps_per_period: 8 },
            &straight_exit(5e-4),
            None,
        );
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    struct Explosive;
    impl ForceModel for Explosive {
        fn acceleration(&self, r: &Vec3, _t: f64) -> Vec3 {
            if r.x > 1.0 {
                Vec3::new(f64::NAN, 0.0, 0.0)
            } else {
                Vec3::new(1e30, 0.0, 0.0)
            }
        }
    }

    #[test]
    fn blow_up_carries_last_valid_state() {
        let state = ParticleState::new(Vec3::new(0.0, 0.0, 1.0), Vec3::zeros(), 0.0);
        let err = integrate(&Explosive, state, 1e-9, 1.0, &straight_exit(1.0), None).unwrap_err();
        match err {
            Error::IntegrationBlowUp { last_valid } => assert!(last_valid.is_finite()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn centrifugal_force_values() {
        let path = GuidePath::paper();
        let s_mid = 0.5 * (path.arc_start() + path.arc_end());
        let v = speed_from_ev(3.5).unwrap();
        let f = comoving_curved_force(s_mid, v, &path);
        assert_relative_eq!(f.x, 2.0 * 3.5 * E_CHARGE / 40e-3, max_relative = 1e-12);
        assert_relative_eq!(f.x, 2.80e-17, max_relative = 2e-3);
        // tilt in eV/m
        assert_relative_eq!(f.x / E_CHARGE, 175.0, max_relative = 1e-12);
        let v2 = speed_from_ev(7.0).unwrap();
        assert_relative_eq!(comoving_curved_force(s_mid, v2, &path).x, 2.0 * f.x, max_relative = 1e-12);
        assert_eq!(comoving_curved_force(0.0, v, &path).x, 0.0);
        let flat = GuidePath::new(1e-3, 1e30, 1e-27, 1e-3).unwrap();
        assert!(comoving_curved_force(1e-3 + 1e-4 * flat.arc_length(), v, &flat).x < 1e-40);
    }

    #[test]
    fn rays_stay_inside_disk_and_cone() {
        let beam = BeamSpec::paper(2.0);
        let rays = sample_rays(&beam, 7);
        assert_eq!(rays.len(), 100);
        for r in &rays {
            assert!(r.offset[0].hypot(r.offset[1]) <= 10e-6 + 1e-18);
            assert!(r.direction.y.acos() <= 0.5f64.to_radians() + 1e-12);
            assert_relative_eq!(r.direction.norm(), 1.0, epsilon = 1e-12);
        }
        assert_eq!(rays, sample_rays(&beam, 7));
        let env = sample_rays(
            &BeamSpec {
                n_rays: 25,
                sampling: RaySampling::Envelope,
                ..beam
            },
            0,
        );
        assert_eq!(env.len(), 25);
        for r in &env {
            assert_relative_eq!(r.offset[0].hypot(r.offset[1]), 10e-6, max_relative = 1e-12);
        }
    }

    #[test]
    fn undriven_bend_transmits_nothing() {
        let layout: ElectrodeLayout = build_five_wire(&FiveWireCrossSection::paper()).unwrap().into();
        let drive = DriveParams::from_mhz(0.0, 970.0).unwrap();
        let beam = BeamSpec {
            n_rays: 10,
            n_phases: 2,
            ..BeamSpec::paper(2.0)
        };
        let res = transmit_beam(&beam, &layout, &drive, &GuidePath::paper(), TrackingMode::Comoving2d, 1).unwrap();
        assert_eq!(res.transmitted, 0);
        assert_eq!(res.transmitted_fraction, 0.0);
    }

    #[test]
    fn transmission_is_deterministic() {
        let layout: ElectrodeLayout = build_five_wire(&FiveWireCrossSection::paper()).unwrap().into();
        let drive = DriveParams::from_mhz(33.0, 970.0).unwrap();
        let beam = BeamSpec {
            n_rays: 6,
            n_phases: 3,
            ..BeamSpec::paper(2.0)
        };
        let a = transmit_beam(&beam, &layout, &drive, &GuidePath::paper(), TrackingMode::Comoving2d, 11).unwrap();
        let b = transmit_beam(&beam, &layout, &drive, &GuidePath::paper(), TrackingMode::Comoving2d, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.transmitted_fraction, a.transmitted as f64 / 18.0);
        let total = a.transmitted + a.missed_exit + a.hit_substrate + a.escaped + a.timed_out + a.blow_ups;
        assert_eq!(total, 18);
    }

    #[test]
    fn layout_kind_must_match_mode() {
        let layout = ElectrodeLayout::IdealQuadrupole(IdealQuadrupole {
            center_height: 5e-4,
            radius: 5e-4,
        });
        let drive = DriveParams::from_mhz(1.0, 970.0).unwrap();
        let beam = BeamSpec::paper(2.0);
        assert!(transmit_beam(&beam, &layout, &drive, &GuidePath::paper(), TrackingMode::Full3d, 0).is_err());
    }

    #[test]
    fn trajectory_csv_header() {
        let mut buf = Vec::new();
        let s = ParticleState::new(Vec3::new(1.0, 2.0, 3.0), Vec3::new(4.0, 5.0, 6.0), 0.5);
        write_trajectory_csv(&mut buf, &[s]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "t,x,y,z,vx,vy,vz\n0.5,1,2,3,4,5,6\n");
    }
}
