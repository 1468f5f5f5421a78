//! The same beam through the comoving cross-section model and through the
//! discretized 3D chip with the aperture plate, and the kinetic energy an
//! on-axis electron carries into the guide as a function of drive phase.

use std::f64::consts::TAU;

use eguide::model::{speed_from_ev, E_CHARGE};
use eguide::stability::drive_for;
use eguide::tracking::{
    axis_height, integrate, stability_scan, BeamSpec, ExitCriteria, FieldForce, GuideFrame, GuideModel, ScanAxes,
    TrackingMode, TransmitOptions,
};
use eguide::{ParticleState, Vec3};

fn main() -> eguide::Result<()> {
    let guide = GuideModel::paper();
    let beam = BeamSpec {
        n_rays: 12,
        n_phases: 8,
        ..BeamSpec::paper(3.5)
    };
    let (depth, q) = (0.045, 0.3);
    let axes = ScanAxes::Stability {
        depths: vec![depth],
        q_values: vec![q],
    };
    for mode in [TrackingMode::Comoving2d, TrackingMode::Full3d] {
        let scan = stability_scan(&beam, &guide, &axes, mode, 5, &TransmitOptions::default())?;
        let r = &scan.cell(0, 0).result;
        println!(
            "{mode:?}: transmitted {:.2} (escaped {}, missed exit {})",
            r.transmitted_fraction, r.escaped, r.missed_exit
        );
    }

    let f = guide.factors()?;
    let drive = drive_for(q, depth, f.guide_height, f.eta, f.u_factor)?;
    let layout = guide.layout_3d()?;
    let path = guide.path;
    let z0 = axis_height(&layout, &path, TrackingMode::Full3d)?;
    let speed = speed_from_ev(3.5)?;
    // stop 1 mm inside the guide
    let exit = ExitCriteria {
        frame: GuideFrame::Lab(path),
        axis_height: z0,
        escape_radius: 5.0 * z0,
        exit_s: 1e-3,
    };
    println!("\nkinetic energy 1 mm inside the guide, launched on axis at 3.5 eV ({:.1} V drive):", drive.amplitude);
    for k in 0..8 {
        let d = drive.with_phase(TAU * k as f64 / 8.0);
        let start = ParticleState::new(Vec3::new(0.0, beam.source_s(), z0), Vec3::new(0.0, speed, 0.0), 0.0);
        let r = integrate(&FieldForce::new(&layout, d), start, drive.period() / 64.0, 1e-7, &exit, None)?;
        println!("  phase {:>3.0} deg: {:.2} eV", 45.0 * k as f64, r.final_state.kinetic_energy() / E_CHARGE);
    }
    Ok(())
}
