//! Back-of-the-envelope numbers for miniaturized guides: secular frequency
//! and depth under rescaling, anomalous heating and the Coulomb exchange
//! rate between neighbouring guides.

use std::f64::consts::TAU;

use eguide::designcalc::{coupling_strength, heating_rate, oscillations_before_excitation, scale_design, NoiseModel};

fn main() -> eguide::Result<()> {
    let (eta, u) = (0.31, 0.0079);
    println!("{:>8} {:>10} {:>6} {:>8} {:>12} {:>10}", "R/um", "f_rf/GHz", "V", "q", "f_sec/MHz", "U/meV");
    for (radius, f_rf, amplitude) in [(500e-6, 0.97e9, 33.0), (200e-6, 2.4e9, 33.0), (50e-6, 10e9, 33.0), (50e-6, 10e9, 10.0)] {
        let d = scale_design(radius, TAU * f_rf, amplitude, eta, u)?;
        println!(
            "{:>8.0} {:>10.2} {:>6.1} {:>8.3} {:>12.1} {:>10.2}",
            radius * 1e6,
            f_rf / 1e9,
            amplitude,
            d.q,
            d.omega / TAU / 1e6,
            d.depth * 1e3
        );
    }

    let noise = NoiseModel::default();
    println!("\n{:>12} {:>8} {:>12} {:>16}", "f_sec/MHz", "R/um", "rate [1/s]", "periods/quantum");
    for (f, r) in [(100e6, 500e-6), (133e6, 500e-6), (1.3e9, 50e-6)] {
        let rate = heating_rate(TAU * f, r, &noise)?;
        println!(
            "{:>12.0} {:>8.0} {:>12.3e} {:>16.3e}",
            f / 1e6,
            r * 1e6,
            rate,
            oscillations_before_excitation(TAU * f, rate)
        );
    }

    println!("\n{:>12} {:>8} {:>14}", "f_sec/MHz", "d/um", "Omega_c/2pi");
    for (f, d) in [(100e6, 500e-6), (1e9, 50e-6), (1e9, 20e-6)] {
        let c = coupling_strength(TAU * f, d)? / TAU;
        println!("{:>12.0} {:>8.0} {:>11.1} kHz", f / 1e6, d * 1e6, c / 1e3);
    }
    Ok(())
}
