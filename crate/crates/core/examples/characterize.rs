//! Pseudopotential characterization of the demonstrated guide over a few
//! drive amplitudes, next to the depth `qV/8` of an ideal quadrupole at the
//! same stability parameter.

use std::f64::consts::TAU;

use eguide::geometry::{build_five_wire, FiveWireCrossSection};
use eguide::stability::{characterize_trap, ideal_relations};
use eguide::{DriveParams, ElectrodeLayout};

fn main() -> eguide::Result<()> {
    let cs = FiveWireCrossSection::paper();
    let layout: ElectrodeLayout = build_five_wire(&cs)?.into();

    println!(
        "{:>6} {:>10} {:>10} {:>8} {:>8} {:>8} {:>12}",
        "V", "f_sec/MHz", "U/meV", "q", "eta", "u", "qV/8 meV"
    );
    for amplitude in [10.0, 20.0, 33.0, 45.0] {
        let drive = DriveParams::new(amplitude, TAU * 970e6, 0.0)?;
        let c = characterize_trap(&layout, &drive)?;
        let (_, ideal_depth) = ideal_relations(c.q, &drive);
        println!(
            "{:>6.1} {:>10.2} {:>10.2} {:>8.3} {:>8.4} {:>8.5} {:>12.1}",
            amplitude,
            c.secular_frequency() / TAU / 1e6,
            c.depth * 1e3,
            c.q,
            c.eta,
            c.u_factor,
            ideal_depth * 1e3
        );
    }

    let drive = DriveParams::new(33.0, TAU * 970e6, 0.0)?;
    let c = characterize_trap(&layout, &drive)?;
    println!("\nminimum at z = {:.1} um, escape saddle at z = {:.1} um", c.guide_height * 1e6, c.saddle_position.z * 1e6);
    println!("{}", serde_json::to_string_pretty(&c)?);
    Ok(())
}
