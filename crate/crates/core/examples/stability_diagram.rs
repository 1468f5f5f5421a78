//! Transmission over the (q, U) plane at 3.5 eV with a thinned beam, drawn
//! as a character map, with the cliff estimates.
//!
//! ```text
//! cargo run --release --example stability_diagram [n_rays]
//! ```

use eguide::tracking::{stability_scan, BeamSpec, GuideModel, ScanAxes, TrackingMode, TransmitOptions};

fn main() -> eguide::Result<()> {
    let n_rays = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(16);
    let beam = BeamSpec {
        n_rays,
        n_phases: 8,
        ..BeamSpec::paper(3.5)
    };
    let depths: Vec<f64> = (1..=15).map(|k| 4e-3 * k as f64).collect();
    let q_values: Vec<f64> = (1..=20).map(|k| 0.05 * k as f64).collect();
    let axes = ScanAxes::Stability {
        depths: depths.clone(),
        q_values: q_values.clone(),
    };
    let scan = stability_scan(&beam, &GuideModel::paper(), &axes, TrackingMode::Comoving2d, 7, &TransmitOptions::default())?;

    let shades = [' ', '.', ':', '-', '=', '+', '*', '#', '%', '@'];
    for (row, depth) in depths.iter().enumerate().rev() {
        let line: String = scan
            .row(row)
            .iter()
            .map(|&f| shades[((f * 9.0).round() as usize).min(9)])
            .collect();
        println!("{:>5.0} meV |{line}|", depth * 1e3);
    }
    println!("          q: {:.2} .. {:.2}", q_values[0], q_values[q_values.len() - 1]);

    let u_min = scan.depth_cliff(0.5);
    println!("plateau {:.2}", scan.plateau());
    if let Some(u) = u_min {
        println!("minimum depth {:.1} meV", u * 1e3);
        if let Some(q) = scan.q_cliff(1.5 * u) {
            println!("q cliff {q:.2}");
        }
    }
    Ok(())
}
