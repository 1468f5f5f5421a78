//! Potential and field of the five-wire cross-section on a transverse grid,
//! written as CSV to stdout, plus a comparison against the 3D solid-angle
//! field of a long straight section.
//!
//! ```text
//! cargo run --release --example field_map > field.csv
//! ```

use eguide::field::{transverse_grid, write_field_map};
use eguide::geometry::{build_five_wire, extrude_straight, FiveWireCrossSection};
use eguide::{DriveParams, ElectrodeLayout, Vec3};

fn main() -> eguide::Result<()> {
    let cs = FiveWireCrossSection::paper();
    let flat: ElectrodeLayout = build_five_wire(&cs)?.into();
    let drive = DriveParams::from_mhz(33.0, 970.0)?;

    let points = transverse_grid((-1.5e-3, 1.5e-3), (50e-6, 1.5e-3), 0.0, 61, 30);
    write_field_map(std::io::stdout().lock(), &flat, &drive, 0.0, &points)?;

    let long: ElectrodeLayout = extrude_straight(&cs, 40e-3)?.into();
    eprintln!("null height {:.1} um", cs.null_height() * 1e6);
    eprintln!("{:>8} {:>8} {:>12} {:>12}", "x [um]", "z [um]", "Ez 2D [V/m]", "Ez 3D [V/m]");
    for (x, z) in [(0.0, 300e-6), (0.0, 800e-6), (200e-6, 500e-6), (-400e-6, 100e-6)] {
        let e2 = flat.unit_field(&Vec3::new(x, 0.0, z)) * drive.amplitude;
        let e3 = long.unit_field(&Vec3::new(x, 20e-3, z)) * drive.amplitude;
        eprintln!("{:>8.0} {:>8.0} {:>12.1} {:>12.1}", x * 1e6, z * 1e6, e2.z, e3.z);
    }
    Ok(())
}
