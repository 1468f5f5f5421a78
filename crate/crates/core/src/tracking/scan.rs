use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{transmit_beam_with, BeamSpec, TrackingMode, TransmissionResult, TransmitOptions};
use crate::error::{Error, Result};
use crate::geometry::{
    build_five_wire, discretize_arc_layout, shaped_guide_layout, AperturePlate, CouplingEndShape, ElectrodeLayout,
    FiveWireCrossSection, GuidePath, DEFAULT_SEGMENTS_PER_ARC,
};
use crate::model::DriveParams;
use crate::stability::{characterize_trap, depth_from_u, drive_for, q_parameter};

/// Fraction of the plateau transmission below which guiding counts as lost.
pub const CLIFF_LEVEL: f64 = 0.1;

/// Geometry shared by every cell of a scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuideModel {
    pub cross_section: FiveWireCrossSection,
    pub path: GuidePath,
    /// Only used by 3D tracking.
    #[serde(default)]
    pub aperture: Option<AperturePlate>,
    /// Shape of the entrance end of the rails in 3D tracking; straight when `None`.
    #[serde(default)]
    pub coupling: Option<CouplingEndShape>,
    pub segments_per_arc: usize,
}

impl GuideModel {
    /// Demonstrated chip on the 30° bend with the grounded aperture 0.5 mm in front.
    pub fn paper() -> Self {
        Self {
            cross_section: FiveWireCrossSection::paper(),
            path: GuidePath::paper(),
            aperture: Some(AperturePlate::in_front(500e-6, 20e-6)),
            coupling: None,
            segments_per_arc: DEFAULT_SEGMENTS_PER_ARC,
        }
    }

    pub fn layout_2d(&self) -> Result<ElectrodeLayout> {
        Ok(build_five_wire(&self.cross_section)?.into())
    }

    pub fn layout_3d(&self) -> Result<ElectrodeLayout> {
        let mut layout = match &self.coupling {
            Some(shape) => shaped_guide_layout(&self.cross_section, &self.path, self.segments_per_arc, shape)?,
            None => discretize_arc_layout(&self.cross_section, &self.path, self.segments_per_arc)?,
        };
        layout.aperture = self.aperture;
        Ok(layout.into())
    }

    pub fn layout(&self, mode: TrackingMode) -> Result<ElectrodeLayout> {
        match mode {
            TrackingMode::Comoving2d => self.layout_2d(),
            TrackingMode::Full3d => self.layout_3d(),
        }
    }

    /// Guide height and the drive-independent factors η and u of the cross-section.
    pub fn factors(&self) -> Result<GeometricFactors> {
        let reference = DriveParams::from_mhz(33.0, 970.0)?;
        let c = characterize_trap(&self.layout_2d()?, &reference)?;
        Ok(GeometricFactors {
            guide_height: c.guide_height,
            eta: c.eta,
            u_factor: c.u_factor,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricFactors {
    pub guide_height: f64,
    pub eta: f64,
    pub u_factor: f64,
}

impl GeometricFactors {
    pub fn q(&self, drive: &DriveParams) -> Result<f64> {
        q_parameter(drive, self.guide_height, self.eta)
    }

    /// [eV]
    pub fn depth(&self, drive: &DriveParams) -> Result<f64> {
        depth_from_u(drive, self.guide_height, self.u_factor)
    }
}

/// Scan grid. Rows run over the first axis, columns over the second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScanAxes {
    /// Raw drive parameters: amplitudes [V] by angular frequencies [rad/s].
    Drive { voltages: Vec<f64>, omegas: Vec<f64> },
    /// Derived coordinates: depths [eV] by stability parameters.
    Stability { depths: Vec<f64>, q_values: Vec<f64> },
}

impl ScanAxes {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            ScanAxes::Drive { voltages, omegas } => (voltages.len(), omegas.len()),
            ScanAxes::Stability { depths, q_values } => (depths.len(), q_values.len()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: &[f64]| -> Result<()> {
            if v.is_empty() {
                return Err(Error::config(name, "grid must not be empty"));
            }
            if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::config(name, "grid values must be finite and > 0"));
            }
            if v.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::config(name, "grid must be strictly ascending"));
            }
            Ok(())
        };
        match self {
            ScanAxes::Drive { voltages, omegas } => {
                check("voltages", voltages)?;
                check("omegas", omegas)
            }
            ScanAxes::Stability { depths, q_values } => {
                check("depths", depths)?;
                check("q_values", q_values)
            }
        }
    }

    fn drive(&self, row: usize, col: usize, factors: &GeometricFactors) -> Result<DriveParams> {
        match self {
            ScanAxes::Drive { voltages, omegas } => DriveParams::new(voltages[row], omegas[col], 0.0),
            ScanAxes::Stability { depths, q_values } => drive_for(
                q_values[col],
                depths[row],
                factors.guide_height,
                factors.eta,
                factors.u_factor,
            ),
        }
    }
}

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of scan cell `index` derived from the scan seed.
pub fn cell_seed(seed: u64, index: usize) -> u64 {
    mix(seed ^ mix(index as u64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanCell {
    pub row: usize,
    pub col: usize,
    pub voltage: f64,
    pub omega: f64,
    pub q: f64,
    /// [eV]
    pub depth: f64,
    pub seed: u64,
    pub result: TransmissionResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityScan {
    pub axes: ScanAxes,
    pub mode: TrackingMode,
    pub seed: u64,
    pub beam: BeamSpec,
    pub factors: GeometricFactors,
    /// Row-major.
    pub cells: Vec<ScanCell>,
}

/// Transmission over a grid of drive settings. Each cell runs
/// [`transmit_beam_with`](super::transmit_beam_with) with its own seed, so
/// results do not depend on scheduling.
pub fn stability_scan(
    beam: &BeamSpec,
    guide: &GuideModel,
    axes: &ScanAxes,
    mode: TrackingMode,
    seed: u64,
    options: &TransmitOptions,
) -> Result<StabilityScan> {
    axes.validate()?;
    beam.validate()?;
    let factors = guide.factors()?;
    let layout = guide.layout(mode)?;
    let (rows, cols) = axes.dims();
    let cells = (0..rows * cols)
        .into_par_iter()
        .map(|index| {
            let (row, col) = (index / cols, index % cols);
            let drive = axes.drive(row, col, &factors)?;
            let cell_seed = cell_seed(seed, index);
            let result = transmit_beam_with(beam, &layout, &drive, &guide.path, mode, cell_seed, options)?;
            Ok(ScanCell {
                row,
                col,
                voltage: drive.amplitude,
                omega: drive.omega,
                q: factors.q(&drive)?,
                depth: factors.depth(&drive)?,
                seed: cell_seed,
                result,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StabilityScan {
        axes: axes.clone(),
        mode,
        seed,
        beam: *beam,
        factors,
        cells,
    })
}

/// First crossing of `level` on the way up, linearly interpolated in `xs`.
pub fn rising_edge(xs: &[f64], values: &[f64], level: f64) -> Option<f64> {
    let k = values.iter().position(|&v| v >= level)?;
    if k == 0 {
        return Some(xs[0]);
    }
    let f = (level - values[k - 1]) / (values[k] - values[k - 1]);
    Some(xs[k - 1] + f * (xs[k] - xs[k - 1]))
}

/// Last crossing of `level` on the way down, linearly interpolated in `xs`.
pub fn falling_edge(xs: &[f64], values: &[f64], level: f64) -> Option<f64> {
    let k = values.iter().rposition(|&v| v >= level)?;
    if k + 1 == values.len() {
        return Some(xs[k]);
    }
    let f = (values[k] - level) / (values[k] - values[k + 1]);
    Some(xs[k] + f * (xs[k + 1] - xs[k]))
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

impl StabilityScan {
    pub fn dims(&self) -> (usize, usize) {
        self.axes.dims()
    }

    pub fn cell(&self, row: usize, col: usize) -> &ScanCell {
        &self.cells[row * self.dims().1 + col]
    }

    pub fn fraction(&self, row: usize, col: usize) -> f64 {
        self.cell(row, col).result.transmitted_fraction
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.dims().0).map(|r| self.fraction(r, col)).collect()
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        (0..self.dims().1).map(|c| self.fraction(row, c)).collect()
    }

    /// Highest transmitted fraction in the scan.
    pub fn plateau(&self) -> f64 {
        self.cells
            .iter()
            .map(|c| c.result.transmitted_fraction)
            .fold(0.0, f64::max)
    }

    /// Minimum depth for guiding [eV]: median over the columns with
    /// `q <= q_max` of the depth where transmission first rises through
    /// [`CLIFF_LEVEL`] times the plateau.
    pub fn depth_cliff(&self, q_max: f64) -> Option<f64> {
        let ScanAxes::Stability { depths, q_values } = &self.axes else {
            return None;
        };
        let level = CLIFF_LEVEL * self.plateau();
        let edges = q_values
            .iter()
            .enumerate()
            .filter(|(_, &q)| q <= q_max)
            .filter_map(|(c, _)| rising_edge(depths, &self.column(c), level))
            .collect();
        median(edges)
    }

    /// Highest `q` with guiding: median over rows with depth `>= min_depth`
    /// of the last crossing of [`CLIFF_LEVEL`] times the plateau.
    pub fn q_cliff(&self, min_depth: f64) -> Option<f64> {
        let ScanAxes::Stability { depths, q_values } = &self.axes else {
            return None;
        };
        let level = CLIFF_LEVEL * self.plateau();
        let edges = depths
            .iter()
            .enumerate()
            .filter(|(_, &d)| d >= min_depth)
            .filter_map(|(r, _)| falling_edge(q_values, &self.row(r), level))
            .collect();
        median(edges)
    }

    /// CSV with one line per cell: `V,Omega,q,U,transmitted_fraction,n_hit_substrate,n_escaped`
    /// in V, rad/s, 1, eV.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "V,Omega,q,U,transmitted_fraction,n_hit_substrate,n_escaped")?;
        for c in &self.cells {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                c.voltage,
                c.omega,
                c.q,
                c.depth,
                c.result.transmitted_fraction,
                c.result.hit_substrate,
                c.result.escaped
            )?;
        }
        Ok(())
    }

    /// Sidecar metadata: beam, seed, mode, grid and geometric factors.
    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "beam": self.beam,
            "seed": self.seed,
            "mode": self.mode,
            "grid": self.axes,
            "factors": self.factors,
            "rows": self.dims().0,
            "cols": self.dims().1,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn edges_interpolate_linearly() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(rising_edge(&xs, &[0.0, 0.0, 1.0, 1.0], 0.5), Some(2.5));
        assert_eq!(falling_edge(&xs, &[1.0, 1.0, 0.0, 0.0], 0.25), Some(2.75));
        assert_eq!(rising_edge(&xs, &[0.0; 4], 0.5), None);
        assert_eq!(falling_edge(&xs, &[1.0; 4], 0.5), Some(4.0));
    }

    #[test]
    fn cell_seeds_differ() {
        let seeds: Vec<u64> = (0..100).map(|k| cell_seed(42, k)).collect();
        let mut sorted = seeds.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), seeds.len());
        assert_eq!(cell_seed(42, 3), cell_seed(42, 3));
    }

    #[test]
    fn empty_or_unsorted_grid_is_a_config_error() {
        let empty = ScanAxes::Drive {
            voltages: vec![],
            omegas: vec![1.0],
        };
        assert!(empty.validate().unwrap_err().is_config_error());
        let unsorted = ScanAxes::Stability {
            depths: vec![0.02, 0.01],
            q_values: vec![0.3],
        };
        assert!(unsorted.validate().is_err());
    }

    #[test]
    fn single_cell_scan_matches_transmit_beam() {
        let guide = GuideModel::paper();
        let beam = BeamSpec {
            n_rays: 4,
            n_phases: 2,
            ..BeamSpec::paper(2.0)
        };
        let axes = ScanAxes::Stability {
            depths: vec![0.03],
            q_values: vec![0.3],
        };
        let opts = TransmitOptions::default();
        let scan = stability_scan(&beam, &guide, &axes, TrackingMode::Comoving2d, 5, &opts).unwrap();
        assert_eq!(scan.cells.len(), 1);
        let cell = &scan.cells[0];
        assert_relative_eq!(cell.q, 0.3, max_relative = 1e-9);
        assert_relative_eq!(cell.depth, 0.03, max_relative = 1e-9);
        let drive = DriveParams::new(cell.voltage, cell.omega, 0.0).unwrap();
        let direct = transmit_beam_with(
            &beam,
            &guide.layout_2d().unwrap(),
            &drive,
            &guide.path,
            TrackingMode::Comoving2d,
            cell_seed(5, 0),
            &opts,
        )
        .unwrap();
        assert_eq!(cell.result, direct);
    }
}
