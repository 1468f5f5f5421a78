//! Drive the command layer from code: start from a built-in preset, edit it
//! as JSON with unit strings, and run a scan into an output directory.
//!
//! ```text
//! cargo run --release --example scenario -- out/scenario
//! ```

use std::path::PathBuf;

use eguide::cli::{self, Command, ScenarioConfig};

fn main() -> eguide::Result<()> {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "out/scenario".into()).into();

    let mut value: serde_json::Value = serde_json::from_str(&cli::preset("fig3d")?.to_json())?;
    value["description"] = "Coarse stability diagram at 2.5 eV".into();
    value["beam"]["kinetic_energy"] = "2.5 eV".into();
    value["beam"]["n_rays"] = 10.into();
    value["beam"]["n_phases"] = 4.into();
    value["scan"]["grid"]["depths"] = serde_json::json!(["10 meV", "20 meV", "30 meV", "40 meV"]);
    value["scan"]["grid"]["q_values"] = serde_json::json!([0.2, 0.4, 0.6, 0.8]);
    let cfg = ScenarioConfig::from_json(&value.to_string())?;

    let summary = cli::run(Command::Scan, &cfg, &out, None)?;
    println!("{}", serde_json::to_string_pretty(&summary.result)?);
    for f in &summary.files {
        println!("wrote {}", f.display());
    }

    value["scan"]["grid"]["depths"] = serde_json::json!([]);
    let err = ScenarioConfig::from_json(&value.to_string())
        .and_then(|bad| cli::run(Command::Scan, &bad, &out.join("rejected"), None))
        .unwrap_err();
    println!("empty grid rejected (config error: {}): {err}", err.is_config_error());
    Ok(())
}
