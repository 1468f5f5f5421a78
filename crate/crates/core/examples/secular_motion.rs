//! A single electron in a straight guide: trajectory spectrum against the
//! characterized secular frequency, and the number of secular and drive
//! oscillations over the 37 mm chip.

use std::f64::consts::TAU;

use eguide::geometry::GuidePath;
use eguide::stability::characterize_trap;
use eguide::tracking::spectrum::{dominant_frequency, moving_average, oscillation_count};
use eguide::tracking::{track_electron, GuideModel, Launch, StepControl, TrackingMode};
use eguide::DriveParams;

fn main() -> eguide::Result<()> {
    let guide = GuideModel::paper();
    let factors = guide.factors()?;
    let layout = guide.layout_2d()?;

    // q = 0.3 with a 100 MHz secular frequency
    let q = 0.3;
    let drive_omega = TAU * 100e6 * 8f64.sqrt() / q;
    let amplitude =
        q * drive_omega.powi(2) * factors.guide_height.powi(2) / (2.0 * factors.eta * eguide::model::E_OVER_M);
    let drive = DriveParams::new(amplitude, drive_omega, 0.0)?;
    let trap = characterize_trap(&layout, &drive)?;
    println!(
        "drive {:.2} V at {:.1} MHz, q = {:.3}, characterized f_sec = {:.2} MHz",
        amplitude,
        drive_omega / TAU / 1e6,
        trap.q,
        trap.secular_frequency() / TAU / 1e6
    );

    let step = StepControl::default();
    let launch = Launch {
        kinetic_energy: 2.0,
        offset: [20e-6, 20e-6],
        angle: [0.0, 0.0],
    };
    for length in [37e-3, 0.5] {
        let path = GuidePath::straight(length)?;
        let r = track_electron(&launch, &layout, &drive, &path, TrackingMode::Comoving2d, step, Some(1))?;
        let samples = &r.samples[..r.samples.len() - 1];
        let xs: Vec<f64> = samples.iter().map(|s| s.position.x).collect();
        let zs: Vec<f64> = samples.iter().map(|s| s.position.z).collect();
        let band = (TAU * 10e6, 0.5 * drive_omega);
        let peak = |v: &[f64]| dominant_frequency(v, step.dt(&drive), band).map_or(f64::NAN, |w| w / TAU / 1e6);
        println!(
            "{:>5.0} mm: {:?}, spectral peaks {:.2} / {:.2} MHz, {:.2} secular and {:.1} drive oscillations",
            length * 1e3,
            r.class,
            peak(&xs),
            peak(&zs),
            oscillation_count(&moving_average(&xs, step.steps_per_period)),
            drive.omega * r.final_state.time / TAU
        );
    }
    Ok(())
}
