//! Scenario configuration, built-in presets and the command runners behind
//! the `eguide` binary.
//!
//! Every command resolves and validates the whole configuration before it
//! computes anything, and computes everything before it writes any file, so
//! a failed run leaves the output directory untouched.

pub mod presets;
pub mod units;

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::designcalc::{coupling_strength, heating_rate, oscillations_before_excitation, scale_design, NoiseModel};
use crate::error::{Error, Result};
use crate::field::{transverse_grid, write_field_map};
use crate::geometry::{
    build_five_wire, AperturePlate, CouplingEndShape, ElectrodeLayout, FiveWireCrossSection, GuidePath,
    DEFAULT_SEGMENTS_PER_ARC,
};
use crate::model::DriveParams;
use crate::optimize::{NelderMeadConfig, OptimizationProblem};
use crate::stability::{characterize_trap, ideal_relations, mathieu_stable};
use crate::tracking::spectrum::{dominant_frequency, moving_average, oscillation_count};
use crate::tracking::{
    stability_scan, track_electron, write_trajectory_csv, BeamSpec, GuideModel, Launch, RaySampling, ScanAxes,
    StepControl, TrackingMode, TransmitOptions,
};

pub use presets::{preset, preset_names};

pub const SCHEMA_VERSION: u32 = 1;

/// A complete run description. Quantities accept unit suffixes; bare
/// numbers are read in m, Hz, V, eV and rad.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub geometry: GeometryConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drive: Option<DriveConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beam: Option<BeamConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub track: Option<TrackConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimize: Option<OptimizeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calc: Option<CalcConfig>,
    #[serde(default = "default_mode")]
    pub mode: TrackingMode,
    #[serde(default)]
    pub seed: u64,
}

fn default_mode() -> TrackingMode {
    TrackingMode::Comoving2d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub layout: LayoutConfig,
    #[serde(default = "PathConfig::paper")]
    pub path: PathConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aperture: Option<ApertureConfig>,
    /// Entrance shape of the rails for 3D tracking (SI), e.g. the `best_shape`
    /// written by `optimize`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<CouplingEndShape>,
    #[serde(default = "default_segments")]
    pub segments_per_arc: usize,
}

fn default_segments() -> usize {
    DEFAULT_SEGMENTS_PER_ARC
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayoutConfig {
    FiveWire {
        #[serde(with = "units::length")]
        center_width: f64,
        #[serde(with = "units::length")]
        rf_rail_width: f64,
        #[serde(with = "units::length")]
        gap: f64,
    },
    /// Any layout in its own JSON form (SI).
    Explicit { layout: ElectrodeLayout },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathConfig {
    #[serde(with = "units::length")]
    pub straight_lead_in: f64,
    #[serde(with = "units::length")]
    pub arc_radius: f64,
    #[serde(with = "units::angle")]
    pub arc_angle: f64,
    #[serde(with = "units::length")]
    pub straight_lead_out: f64,
}

impl PathConfig {
    pub fn paper() -> Self {
        let p = GuidePath::paper();
        Self {
            straight_lead_in: p.straight_lead_in,
            arc_radius: p.arc_radius,
            arc_angle: p.arc_angle,
            straight_lead_out: p.straight_lead_out,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApertureConfig {
    /// Distance of the plate in front of the substrate edge.
    #[serde(with = "units::length")]
    pub distance: f64,
    #[serde(with = "units::length")]
    pub hole_side: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    #[serde(with = "units::voltage")]
    pub amplitude: f64,
    /// Ordinary drive frequency Ω/2π.
    #[serde(with = "units::frequency")]
    pub frequency: f64,
    #[serde(default, with = "units::angle")]
    pub phase: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamConfig {
    #[serde(with = "units::energy")]
    pub kinetic_energy: f64,
    #[serde(with = "units::length")]
    pub source_disk_diameter: f64,
    #[serde(with = "units::angle")]
    pub full_divergence_angle: f64,
    pub n_rays: usize,
    pub n_phases: usize,
    #[serde(with = "units::length")]
    pub launch_offset: f64,
    #[serde(with = "units::length")]
    pub aperture_distance: f64,
    pub sampling: RaySampling,
}

impl From<BeamSpec> for BeamConfig {
    fn from(b: BeamSpec) -> Self {
        Self {
            kinetic_energy: b.kinetic_energy,
            source_disk_diameter: b.source_disk_diameter,
            full_divergence_angle: b.full_divergence_angle,
            n_rays: b.n_rays,
            n_phases: b.n_phases,
            launch_offset: b.launch_offset,
            aperture_distance: b.aperture_distance,
            sampling: b.sampling,
        }
    }
}

impl BeamConfig {
    pub fn spec(&self) -> BeamSpec {
        BeamSpec {
            source_disk_diameter: self.source_disk_diameter,
            full_divergence_angle: self.full_divergence_angle,
            kinetic_energy: self.kinetic_energy,
            n_rays: self.n_rays,
            n_phases: self.n_phases,
            launch_offset: self.launch_offset,
            aperture_distance: self.aperture_distance,
            sampling: self.sampling,
        }
    }
}

/// Transverse field map at a fixed station.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    #[serde(with = "units::length")]
    pub x_min: f64,
    #[serde(with = "units::length")]
    pub x_max: f64,
    #[serde(with = "units::length")]
    pub z_min: f64,
    #[serde(with = "units::length")]
    pub z_max: f64,
    pub nx: usize,
    pub nz: usize,
    /// Longitudinal station of the cut.
    #[serde(default, with = "units::length")]
    pub y: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            x_min: -1.5e-3,
            x_max: 1.5e-3,
            z_min: 50e-6,
            z_max: 1.5e-3,
            nx: 61,
            nz: 30,
            y: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackConfig {
    #[serde(with = "units::energy")]
    pub kinetic_energy: f64,
    #[serde(default, with = "units::length")]
    pub lateral_offset: f64,
    #[serde(default, with = "units::length")]
    pub vertical_offset: f64,
    #[serde(default, with = "units::angle")]
    pub lateral_angle: f64,
    #[serde(default, with = "units::angle")]
    pub vertical_angle: f64,
    #[serde(default = "default_steps")]
    pub steps_per_period: usize,
    #[serde(default = "default_record")]
    pub record_every: usize,
}

fn default_steps() -> usize {
    StepControl::default().steps_per_period
}

fn default_record() -> usize {
    1
}

/// Scan grid. `depths` and `q_values` give the derived axes, `voltages`
/// and `frequencies` (Ω/2π) the raw drive axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridConfig {
    Drive {
        #[serde(with = "units::voltage::vec")]
        voltages: Vec<f64>,
        #[serde(with = "units::frequency::vec")]
        frequencies: Vec<f64>,
    },
    Stability {
        #[serde(with = "units::energy::vec")]
        depths: Vec<f64>,
        q_values: Vec<f64>,
    },
}

impl GridConfig {
    pub fn axes(&self) -> ScanAxes {
        match self {
            GridConfig::Drive { voltages, frequencies } => ScanAxes::Drive {
                voltages: voltages.clone(),
                omegas: frequencies.iter().map(|f| TAU * f).collect(),
            },
            GridConfig::Stability { depths, q_values } => ScanAxes::Stability {
                depths: depths.clone(),
                q_values: q_values.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub grid: GridConfig,
    #[serde(default = "default_steps")]
    pub steps_per_period: usize,
    /// Escape radius in units of the guide height.
    #[serde(default = "default_escape")]
    pub escape_factor: f64,
    #[serde(default = "default_exit_radius", with = "units::length")]
    pub exit_radius: f64,
}

fn default_escape() -> f64 {
    TransmitOptions::default().escape_factor
}

fn default_exit_radius() -> f64 {
    TransmitOptions::default().exit_radius
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    /// Length of the shaped end; the edges return to straight rails here.
    #[serde(with = "units::length")]
    pub span: f64,
    /// Control stations per edge, equally spaced from the substrate edge.
    pub stations: usize,
    #[serde(with = "units::length")]
    pub max_offset: f64,
    #[serde(with = "units::length")]
    pub plate_distance: f64,
    #[serde(with = "units::length")]
    pub hole_side: f64,
    #[serde(with = "units::length")]
    pub guide_length: f64,
    #[serde(with = "units::voltage")]
    pub amplitude: f64,
    pub axis_samples: usize,
    /// How far the sampled axis reaches into the guide.
    #[serde(with = "units::length")]
    pub axis_inside: f64,
    /// How far the sampled axis reaches beyond the plate.
    #[serde(with = "units::length")]
    pub axis_beyond_plate: f64,
    /// Starting offsets (inner edge stations, then outer); zeros when empty.
    #[serde(default, with = "units::length::vec", skip_serializing_if = "Vec::is_empty")]
    pub initial: Vec<f64>,
    pub nelder_mead: NelderMeadConfig,
}

impl OptimizeConfig {
    pub fn paper() -> Self {
        let p = OptimizationProblem::paper();
        Self {
            span: p.shape.anchor_y,
            stations: p.shape.n_stations(),
            max_offset: p.shape.max_offset,
            plate_distance: -p.aperture.y,
            hole_side: p.aperture.hole_side,
            guide_length: p.guide_length,
            amplitude: p.amplitude,
            axis_samples: p.axis_samples,
            axis_inside: p.axis_start,
            axis_beyond_plate: p.aperture.y - p.axis_end,
            initial: Vec::new(),
            nelder_mead: NelderMeadConfig {
                initial_scale: 30e-6,
                tolerance: 1e-6,
                max_iterations: 3000,
                ..NelderMeadConfig::default()
            },
        }
    }

    pub fn problem(&self, cs: FiveWireCrossSection) -> Result<OptimizationProblem> {
        if self.stations == 0 {
            return Err(Error::config("optimize.stations", "need at least one station"));
        }
        let n = self.stations;
        let mut shape = CouplingEndShape {
            control_y: (0..n).map(|k| self.span * k as f64 / n as f64).collect(),
            anchor_y: self.span,
            inner: vec![0.0; n],
            outer: vec![0.0; n],
            max_offset: self.max_offset,
        };
        if !self.initial.is_empty() {
            shape = shape
                .with_params(&self.initial)
                .map_err(|e| Error::config("optimize.initial", e.to_string()))?;
        }
        shape.validate().map_err(|e| Error::config("optimize", e.to_string()))?;
        let aperture = AperturePlate::in_front(self.plate_distance, self.hole_side);
        let problem = OptimizationProblem {
            cross_section: cs,
            guide_length: self.guide_length,
            aperture,
            shape,
            amplitude: self.amplitude,
            axis_samples: self.axis_samples,
            axis_start: self.axis_inside,
            axis_end: aperture.y - self.axis_beyond_plate,
        };
        problem.validate().map_err(as_config("optimize"))?;
        if !(self.guide_length > self.span) {
            return Err(Error::config("optimize.guide_length", "must exceed the span"));
        }
        self.nelder_mead.validate()?;
        Ok(problem)
    }
}

/// A `(secular frequency, distance)` evaluation point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalcPoint {
    /// Ordinary secular frequency ω/2π.
    #[serde(with = "units::frequency")]
    pub frequency: f64,
    #[serde(with = "units::length")]
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    #[serde(with = "units::length")]
    pub guide_height: f64,
    /// Ordinary drive frequency Ω/2π.
    #[serde(with = "units::frequency")]
    pub drive_frequency: f64,
    #[serde(with = "units::voltage")]
    pub amplitude: f64,
    pub eta: f64,
    pub u_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalcConfig {
    /// Heating rate [quanta/s] that fixes the noise level at `anchor`.
    pub anchor_rate: f64,
    pub anchor: CalcPoint,
    #[serde(default)]
    pub heating: Vec<CalcPoint>,
    #[serde(default)]
    pub coupling: Vec<CalcPoint>,
    #[serde(default)]
    pub designs: Vec<DesignConfig>,
}

fn as_config(location: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        e if e.is_config_error() => e,
        e => Error::config(location, e.to_string()),
    }
}

fn missing(section: &str) -> Error {
    Error::config(section, "section is required by this command")
}

impl ScenarioConfig {
    /// Parse and check the schema version. Errors carry the JSON path and line.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::config(
                if path == "." { "<root>".to_string() } else { path },
                format!("{inner} (line {}, column {})", inner.line(), inner.column()),
            )
        })?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", cfg.schema_version),
            ));
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn cross_section(&self) -> Result<FiveWireCrossSection> {
        match self.geometry.layout {
            LayoutConfig::FiveWire {
                center_width,
                rf_rail_width,
                gap,
            } => FiveWireCrossSection::new(center_width, rf_rail_width, gap).map_err(as_config("geometry.layout")),
            LayoutConfig::Explicit { .. } => Err(Error::config(
                "geometry.layout",
                "this command needs a five_wire layout",
            )),
        }
    }

    /// Cross-section layout for field maps and characterization.
    pub fn layout(&self) -> Result<ElectrodeLayout> {
        match &self.geometry.layout {
            LayoutConfig::Explicit { layout } => Ok(layout.clone()),
            LayoutConfig::FiveWire { .. } => Ok(build_five_wire(&self.cross_section()?)
                .map_err(as_config("geometry.layout"))?
                .into()),
        }
    }

    pub fn path(&self) -> Result<GuidePath> {
        let p = self.geometry.path;
        GuidePath::new(p.straight_lead_in, p.arc_radius, p.arc_angle, p.straight_lead_out)
            .map_err(as_config("geometry.path"))
    }

    pub fn guide(&self) -> Result<GuideModel> {
        if self.geometry.segments_per_arc < 8 {
            return Err(Error::config("geometry.segments_per_arc", "must be >= 8"));
        }
        Ok(GuideModel {
            cross_section: self.cross_section()?,
            path: self.path()?,
            aperture: self
                .geometry
                .aperture
                .map(|a| AperturePlate::in_front(a.distance, a.hole_side)),
            coupling: self.geometry.coupling.clone(),
            segments_per_arc: self.geometry.segments_per_arc,
        })
    }

    pub fn drive(&self) -> Result<DriveParams> {
        let d = self.drive.ok_or_else(|| missing("drive"))?;
        DriveParams::new(d.amplitude, TAU * d.frequency, d.phase).map_err(as_config("drive"))
    }

    pub fn beam(&self) -> Result<BeamSpec> {
        let b = self.beam.ok_or_else(|| missing("beam"))?.spec();
        b.validate().map_err(as_config("beam"))?;
        Ok(b)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(mode) = o.mode {
            self.mode = mode;
        }
        if let Some(e) = o.kinetic_energy {
            if let Some(b) = self.beam.as_mut() {
                b.kinetic_energy = e;
            }
            if let Some(t) = self.track.as_mut() {
                t.kinetic_energy = e;
            }
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<TrackingMode>,
    /// [eV]
    pub kinetic_energy: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Field,
    Characterize,
    Track,
    Scan,
    Optimize,
    Calc,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Field => "field",
            Command::Characterize => "characterize",
            Command::Track => "track",
            Command::Scan => "scan",
            Command::Optimize => "optimize",
            Command::Calc => "calc",
        }
    }
}

/// What was run and where the results went.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    /// The main scalar results, also written to `<command>.json` where applicable.
    pub result: serde_json::Value,
}

struct Output {
    name: String,
    bytes: Vec<u8>,
}

fn json_output(name: &str, value: &serde_json::Value) -> Output {
    Output {
        name: name.into(),
        bytes: serde_json::to_vec_pretty(value).expect("json serializes"),
    }
}

fn csv_output(name: &str, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Output> {
    let mut bytes = Vec::new();
    write(&mut bytes)?;
    Ok(Output {
        name: name.into(),
        bytes,
    })
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Resolve, compute and write. `preset` only annotates the manifest.
pub fn run(command: Command, cfg: &ScenarioConfig, out_dir: &Path, preset: Option<&str>) -> Result<RunSummary> {
    let plan = prepare(command, cfg)?;
    let (outputs, result) = plan.execute()?;
    let config_json = cfg.to_json();
    let mut files = Vec::new();
    fs::create_dir_all(out_dir)?;
    let mut listed = Vec::new();
    for o in &outputs {
        let path = out_dir.join(&o.name);
        fs::write(&path, &o.bytes)?;
        listed.push(json!({ "file": o.name, "sha256": sha256_hex(&o.bytes) }));
        files.push(path);
    }
    let config_path = out_dir.join("config.json");
    fs::write(&config_path, &config_json)?;
    files.push(config_path);
    let manifest = json!({
        "command": command.name(),
        "preset": preset,
        "schema_version": SCHEMA_VERSION,
        "config_sha256": sha256_hex(config_json.as_bytes()),
        "seed": cfg.seed,
        "versions": {
            "eguide": env!("CARGO_PKG_VERSION"),
            "rayon_threads": rayon::current_num_threads(),
        },
        "outputs": listed,
    });
    let manifest_path = out_dir.join("manifest.json");
    fs::write(&manifest_path, serde_json::to_vec_pretty(&manifest)?)?;
    files.push(manifest_path);
    Ok(RunSummary { files, result })
}

/// A validated command, ready to run.
enum Plan {
    Field {
        layout: ElectrodeLayout,
        drive: DriveParams,
        grid: FieldConfig,
    },
    Characterize {
        layout: ElectrodeLayout,
        drive: DriveParams,
    },
    Track {
        layout: ElectrodeLayout,
        drive: DriveParams,
        path: GuidePath,
        mode: TrackingMode,
        launch: Launch,
        step: StepControl,
        record_every: usize,
    },
    Scan {
        guide: GuideModel,
        beam: BeamSpec,
        axes: ScanAxes,
        mode: TrackingMode,
        seed: u64,
        options: TransmitOptions,
    },
    Optimize {
        problem: OptimizationProblem,
        config: NelderMeadConfig,
    },
    Calc(CalcConfig),
}

fn prepare(command: Command, cfg: &ScenarioConfig) -> Result<Plan> {
    Ok(match command {
        Command::Field => {
            let grid = cfg.field.unwrap_or_default();
            if grid.nx == 0 || grid.nz == 0 {
                return Err(Error::config("field", "grid must not be empty"));
            }
            if !(grid.z_min > 0.0 && grid.z_max >= grid.z_min && grid.x_max >= grid.x_min) {
                return Err(Error::config("field", "need 0 < z_min <= z_max and x_min <= x_max"));
            }
            Plan::Field {
                layout: cfg.layout()?,
                drive: cfg.drive()?,
                grid,
            }
        }
        Command::Characterize => Plan::Characterize {
            layout: cfg.layout()?,
            drive: cfg.drive()?,
        },
        Command::Track => {
            let t = cfg.track.ok_or_else(|| missing("track"))?;
            let step = StepControl {
                steps_per_period: t.steps_per_period,
            };
            step.validate().map_err(as_config("track.steps_per_period"))?;
            if t.record_every == 0 {
                return Err(Error::config("track.record_every", "must be >= 1"));
            }
            if !(t.kinetic_energy > 0.0) {
                return Err(Error::config("track.kinetic_energy", "must be > 0"));
            }
            let layout = match cfg.mode {
                TrackingMode::Comoving2d => cfg.layout()?,
                TrackingMode::Full3d => cfg.guide()?.layout_3d().map_err(as_config("geometry"))?,
            };
            Plan::Track {
                layout,
                drive: cfg.drive()?,
                path: cfg.path()?,
                mode: cfg.mode,
                launch: Launch {
                    kinetic_energy: t.kinetic_energy,
                    offset: [t.lateral_offset, t.vertical_offset],
                    angle: [t.lateral_angle, t.vertical_angle],
                },
                step,
                record_every: t.record_every,
            }
        }
        Command::Scan => {
            let s = cfg.scan.as_ref().ok_or_else(|| missing("scan"))?;
            let axes = s.grid.axes();
            axes.validate().map_err(|e| match e {
                Error::Config { location, message } => Error::config(format!("scan.grid.{location}"), message),
                e => e,
            })?;
            let options = TransmitOptions {
                step: StepControl {
                    steps_per_period: s.steps_per_period,
                },
                escape_factor: s.escape_factor,
                exit_radius: s.exit_radius,
            };
            options.step.validate().map_err(as_config("scan.steps_per_period"))?;
            if !(options.escape_factor > 1.0 && options.exit_radius > 0.0) {
                return Err(Error::config("scan", "escape_factor must exceed 1 and exit_radius be > 0"));
            }
            Plan::Scan {
                guide: cfg.guide()?,
                beam: cfg.beam()?,
                axes,
                mode: cfg.mode,
                seed: cfg.seed,
                options,
            }
        }
        Command::Optimize => {
            let o = cfg.optimize.as_ref().ok_or_else(|| missing("optimize"))?;
            Plan::Optimize {
                problem: o.problem(cfg.cross_section()?)?,
                config: o.nelder_mead,
            }
        }
        Command::Calc => {
            let c = cfg.calc.clone().ok_or_else(|| missing("calc"))?;
            NoiseModel::anchored(c.anchor_rate, TAU * c.anchor.frequency, c.anchor.distance)
                .map_err(as_config("calc.anchor"))?;
            let positive = |v: f64| v.is_finite() && v > 0.0;
            if c.heating.iter().chain(&c.coupling).any(|p| !(positive(p.frequency) && positive(p.distance))) {
                return Err(Error::config("calc", "frequencies and distances must be > 0"));
            }
            if c.designs.iter().any(|d| {
                !(positive(d.guide_height) && positive(d.drive_frequency) && d.amplitude >= 0.0)
                    || !(positive(d.eta) && positive(d.u_factor))
            }) {
                return Err(Error::config("calc.designs", "all design inputs must be > 0 (amplitude >= 0)"));
            }
            Plan::Calc(c)
        }
    })
}

impl Plan {
    fn execute(self) -> Result<(Vec<Output>, serde_json::Value)> {
        match self {
            Plan::Field { layout, drive, grid } => {
                let points = transverse_grid((grid.x_min, grid.x_max), (grid.z_min, grid.z_max), grid.y, grid.nx, grid.nz);
                let csv = csv_output("field.csv", |w| write_field_map(w, &layout, &drive, 0.0, &points))?;
                let result = json!({ "points": points.len(), "amplitude_V": drive.amplitude });
                Ok((vec![csv], result))
            }
            Plan::Characterize { layout, drive } => {
                let c = characterize_trap(&layout, &drive)?;
                let mathieu = mathieu_stable(c.q, 0.0)?;
                let (ideal_omega, ideal_depth) = ideal_relations(c.q, &drive);
                let result = json!({
                    "drive": { "amplitude_V": drive.amplitude, "frequency_MHz": drive.omega / TAU / 1e6 },
                    "guide_height_um": c.guide_height * 1e6,
                    "secular_frequency_MHz": c.secular_frequency() / TAU / 1e6,
                    "transverse_frequencies_MHz": c.transverse_frequencies.map(|w| w / TAU / 1e6),
                    "depth_meV": c.depth * 1e3,
                    "eta": c.eta,
                    "u": c.u_factor,
                    "q": c.q,
                    "mathieu_stable": mathieu.stable,
                    "ideal_quadrupole": {
                        "secular_frequency_MHz": ideal_omega / TAU / 1e6,
                        "depth_meV": ideal_depth * 1e3,
                    },
                    "characterization": c,
                });
                Ok((vec![json_output("characterize.json", &result)], result))
            }
            Plan::Track {
                layout,
                drive,
                path,
                mode,
                launch,
                step,
                record_every,
            } => {
                let r = track_electron(&launch, &layout, &drive, &path, mode, step, Some(1))?;
                let mut uniform = r.samples.clone();
                uniform.pop();
                let dt = step.dt(&drive);
                let lateral: Vec<f64> = uniform.iter().map(|s| s.position.x).collect();
                let vertical: Vec<f64> = uniform.iter().map(|s| s.position.z).collect();
                let band = (0.0, 0.5 * drive.omega);
                let per_period = step.steps_per_period;
                let transit = r.final_state.time;
                let result = json!({
                    "class": r.class,
                    "exit_offset_um": r.exit_offset.map(|o| o * 1e6),
                    "steps": r.steps,
                    "transit_time_ns": transit * 1e9,
                    "drive_oscillations": drive.omega * transit / TAU,
                    "secular_oscillations": [
                        oscillation_count(&moving_average(&lateral, per_period)),
                        oscillation_count(&moving_average(&vertical, per_period)),
                    ],
                    "spectral_peak_MHz": [
                        dominant_frequency(&lateral, dt, band).map(|w| w / TAU / 1e6),
                        dominant_frequency(&vertical, dt, band).map(|w| w / TAU / 1e6),
                    ],
                });
                let samples: Vec<_> = r
                    .samples
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| k % record_every == 0 || *k + 1 == r.samples.len())
                    .map(|(_, s)| *s)
                    .collect();
                let csv = csv_output("trajectory.csv", |w| write_trajectory_csv(w, &samples))?;
                Ok((vec![csv, json_output("track.json", &result)], result))
            }
            Plan::Scan {
                guide,
                beam,
                axes,
                mode,
                seed,
                options,
            } => {
                let scan = stability_scan(&beam, &guide, &axes, mode, seed, &options)?;
                let csv = csv_output("scan.csv", |w| scan.write_csv(w))?;
                let mut meta = scan.metadata();
                meta["plateau"] = json!(scan.plateau());
                meta["depth_cliff_eV"] = json!(scan.depth_cliff(0.5));
                meta["q_cliff"] = json!(scan.depth_cliff(0.5).and_then(|u| scan.q_cliff(1.5 * u)));
                Ok((vec![csv, json_output("scan.json", &meta)], meta))
            }
            Plan::Optimize { problem, config } => {
                let r = problem.optimize(&config)?;
                let csv = csv_output("trace.csv", |w| r.run.write_trace_csv(w))?;
                let result = json!({
                    "straight_emax_V_per_m": r.straight_emax,
                    "best_emax_V_per_m": r.run.best_value,
                    "improvement": r.improvement,
                    "iterations": r.run.iterations,
                    "evaluations": r.run.evaluations,
                    "converged": r.run.converged,
                    "best_params_m": r.run.best_params,
                    "best_shape": r.best_shape,
                });
                Ok((vec![json_output("best.json", &result), csv], result))
            }
            Plan::Calc(c) => {
                let noise = NoiseModel::anchored(c.anchor_rate, TAU * c.anchor.frequency, c.anchor.distance)?;
                let heating = c
                    .heating
                    .iter()
                    .map(|p| {
                        let w = TAU * p.frequency;
                        let rate = heating_rate(w, p.distance, &noise)?;
                        Ok(json!({
                            "frequency_Hz": p.frequency,
                            "distance_m": p.distance,
                            "noise_density_V2_per_m2_Hz": noise.density(w, p.distance),
                            "heating_rate_per_s": rate,
                            "oscillations_before_excitation": oscillations_before_excitation(w, rate),
                        }))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let coupling = c
                    .coupling
                    .iter()
                    .map(|p| {
                        let oc = coupling_strength(TAU * p.frequency, p.distance)?;
                        Ok(json!({
                            "frequency_Hz": p.frequency,
                            "distance_m": p.distance,
                            "coupling_rad_per_s": oc,
                            "coupling_Hz": oc / TAU,
                        }))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let designs = c
                    .designs
                    .iter()
                    .map(|d| {
                        let p = scale_design(d.guide_height, TAU * d.drive_frequency, d.amplitude, d.eta, d.u_factor)?;
                        Ok(json!({
                            "input": d,
                            "q": p.q,
                            "secular_frequency_Hz": p.omega / TAU,
                            "depth_eV": p.depth,
                        }))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let result = json!({
                    "noise_model": noise,
                    "heating": heating,
                    "coupling": coupling,
                    "designs": designs,
                });
                Ok((vec![json_output("calc.json", &result)], result))
            }
        }
    }
}
