//! Built-in scenarios for the demonstrated guide.

use super::{
    ApertureConfig, BeamConfig, CalcConfig, CalcPoint, DesignConfig, DriveConfig, FieldConfig, GeometryConfig,
    GridConfig, LayoutConfig, OptimizeConfig, PathConfig, ScanConfig, ScenarioConfig, TrackConfig, SCHEMA_VERSION,
};
use crate::error::{Error, Result};
use crate::geometry::{FiveWireCrossSection, DEFAULT_SEGMENTS_PER_ARC};
use crate::tracking::{BeamSpec, RaySampling, StepControl, TrackingMode, TransmitOptions};

const NAMES: [&str; 7] = ["paper-guide", "fig3a", "fig3b", "fig3c", "fig3d", "supp-sim", "coupling-opt"];

pub fn preset_names() -> &'static [&'static str] {
    &NAMES
}

fn grid(start: f64, step: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|k| start + step * (k - 1) as f64).collect()
}

fn base(description: &str) -> ScenarioConfig {
    let cs = FiveWireCrossSection::paper();
    ScenarioConfig {
        schema_version: SCHEMA_VERSION,
        description: description.into(),
        geometry: GeometryConfig {
            layout: LayoutConfig::FiveWire {
                center_width: cs.center_width,
                rf_rail_width: cs.rf_rail_width,
                gap: cs.gap,
            },
            path: PathConfig::paper(),
            aperture: Some(ApertureConfig {
                distance: 500e-6,
                hole_side: 20e-6,
            }),
            coupling: None,
            segments_per_arc: DEFAULT_SEGMENTS_PER_ARC,
        },
        drive: None,
        beam: None,
        field: None,
        track: None,
        scan: None,
        optimize: None,
        calc: None,
        mode: TrackingMode::Comoving2d,
        seed: 20110401,
    }
}

fn stability_scan(kinetic_energy: f64, description: &str) -> ScenarioConfig {
    ScenarioConfig {
        beam: Some(BeamSpec::paper(kinetic_energy).into()),
        scan: Some(ScanConfig {
            grid: GridConfig::Stability {
                depths: grid(3e-3, 3e-3, 20),
                q_values: grid(0.05, 0.05, 20),
            },
            steps_per_period: StepControl::default().steps_per_period,
            escape_factor: TransmitOptions::default().escape_factor,
            exit_radius: TransmitOptions::default().exit_radius,
        }),
        ..base(description)
    }
}

fn paper_calc() -> CalcConfig {
    CalcConfig {
        anchor_rate: 30.0,
        anchor: CalcPoint {
            frequency: 100e6,
            distance: 500e-6,
        },
        heating: vec![
            CalcPoint {
                frequency: 100e6,
                distance: 500e-6,
            },
            CalcPoint {
                frequency: 133e6,
                distance: 500e-6,
            },
        ],
        coupling: vec![
            CalcPoint {
                frequency: 100e6,
                distance: 500e-6,
            },
            CalcPoint {
                frequency: 1e9,
                distance: 50e-6,
            },
        ],
        designs: vec![
            DesignConfig {
                guide_height: 500e-6,
                drive_frequency: 970e6,
                amplitude: 33.0,
                eta: 0.31,
                u_factor: 0.0079,
            },
            DesignConfig {
                guide_height: 50e-6,
                drive_frequency: 10e9,
                amplitude: 33.0,
                eta: 0.31,
                u_factor: 0.0079,
            },
        ],
    }
}

/// Look up a built-in scenario by name.
pub fn preset(name: &str) -> Result<ScenarioConfig> {
    Ok(match name {
        "paper-guide" => ScenarioConfig {
            drive: Some(DriveConfig {
                amplitude: 33.0,
                frequency: 970e6,
                phase: 0.0,
            }),
            field: Some(FieldConfig::default()),
            track: Some(TrackConfig {
                kinetic_energy: 2.0,
                lateral_offset: 20e-6,
                vertical_offset: 20e-6,
                lateral_angle: 0.0,
                vertical_angle: 0.0,
                steps_per_period: StepControl::default().steps_per_period,
                record_every: 1,
            }),
            calc: Some(paper_calc()),
            ..base("Demonstrated guide at 33 V and 970 MHz")
        },
        "fig3a" => stability_scan(1.0, "Stability diagram at 1 eV"),
        "fig3b" => stability_scan(2.0, "Stability diagram at 2 eV"),
        "fig3c" => stability_scan(5.0, "Stability diagram at 5 eV"),
        "fig3d" => stability_scan(3.5, "Simulated stability diagram at 3.5 eV"),
        "supp-sim" => ScenarioConfig {
            beam: Some(BeamConfig {
                n_rays: 25,
                sampling: RaySampling::Envelope,
                ..BeamSpec::paper(3.5).into()
            }),
            scan: Some(ScanConfig {
                grid: GridConfig::Drive {
                    voltages: grid(5.0, 5.0, 7),
                    frequencies: grid(600e6, 100e6, 9),
                },
                steps_per_period: StepControl::default().steps_per_period,
                escape_factor: TransmitOptions::default().escape_factor,
                exit_radius: TransmitOptions::default().exit_radius,
            }),
            ..base("Envelope-beam transmission over drive voltage and frequency at 3.5 eV")
        },
        "coupling-opt" => ScenarioConfig {
            optimize: Some(OptimizeConfig::paper()),
            ..base("Coupling-end shape optimization")
        },
        _ => {
            return Err(Error::UnknownPreset {
                name: name.into(),
                available: NAMES.join(", "),
            })
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::TAU;

    #[test]
    fn documented_parameters() {
        let g = preset("paper-guide").unwrap();
        let d = g.drive().unwrap();
        assert_eq!(d.amplitude, 33.0);
        assert_relative_eq!(d.omega, TAU * 970e6, max_relative = 1e-15);
        let f = preset("fig3d").unwrap();
        let b = f.beam().unwrap();
        assert_eq!(b.kinetic_energy, 3.5);
        assert_eq!((b.n_phases, b.source_disk_diameter, b.launch_offset), (16, 20e-6, 1.5e-3));
        assert_relative_eq!(b.full_divergence_angle, 1f64.to_radians());
        let s = preset("supp-sim").unwrap().beam().unwrap();
        assert_eq!((s.n_rays, s.sampling), (25, RaySampling::Envelope));
    }

    #[test]
    fn unknown_preset_lists_alternatives() {
        let e = preset("fig9").unwrap_err();
        assert!(e.is_config_error());
        assert!(e.to_string().contains("fig3d"));
    }
}
