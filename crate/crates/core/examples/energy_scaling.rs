//! Minimum guiding depth at q = 0.3 as a function of the electron energy.

use eguide::tracking::{stability_scan, BeamSpec, GuideModel, ScanAxes, TrackingMode, TransmitOptions};

fn main() -> eguide::Result<()> {
    let guide = GuideModel::paper();
    let axes = ScanAxes::Stability {
        depths: (2..=60).map(|k| k as f64 * 1e-3).collect(),
        q_values: vec![0.3],
    };
    println!("{:>6} {:>12}", "E/eV", "U_min/meV");
    for energy in [1.0, 2.0, 3.5, 5.0] {
        let beam = BeamSpec {
            n_rays: 25,
            n_phases: 8,
            ..BeamSpec::paper(energy)
        };
        let scan = stability_scan(&beam, &guide, &axes, TrackingMode::Comoving2d, 11, &TransmitOptions::default())?;
        match scan.depth_cliff(0.3) {
            Some(u) => println!("{energy:>6.1} {:>12.2}", u * 1e3),
            None => println!("{energy:>6.1} {:>12}", "none"),
        }
    }
    Ok(())
}
