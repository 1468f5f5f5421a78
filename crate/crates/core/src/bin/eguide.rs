use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use eguide::cli::{self, Command, Overrides, ScenarioConfig};
use eguide::tracking::TrackingMode;
use eguide::Error;

#[derive(Parser)]
#[command(name = "eguide", version, about = "Planar electron guide simulation")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a transverse field map (field.csv).
    Field(RunArgs),
    /// Characterize the pseudopotential trap (characterize.json).
    Characterize(RunArgs),
    /// Track a single electron (trajectory.csv, track.json).
    Track(RunArgs),
    /// Transmission scan over a drive grid (scan.csv, scan.json).
    Scan(RunArgs),
    /// Optimize the coupling-end shape (best.json, trace.csv).
    Optimize(RunArgs),
    /// Heating, coupling and scaling estimates (calc.json).
    Calc(RunArgs),
    /// List the built-in presets, or print one as JSON.
    Presets { name: Option<String> },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    #[value(name = "comoving_2d")]
    Comoving2d,
    #[value(name = "full_3d")]
    Full3d,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario config file (JSON).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Beam and track kinetic energy, e.g. `3.5 eV`.
    #[arg(long)]
    energy: Option<String>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

fn load(args: &RunArgs) -> eguide::Result<ScenarioConfig> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
                location: path.display().to_string(),
                message: e.to_string(),
            })?;
            ScenarioConfig::from_json(&text)?
        }
        (None, Some(name)) => cli::preset(name)?,
        (None, None) => unreachable!("clap requires one of --config and --preset"),
    };
    let kinetic_energy = args
        .energy
        .as_deref()
        .map(|e| cli::units::parse_quantity(e, cli::units::Dimension::Energy))
        .transpose()
        .map_err(|m| Error::Config {
            location: "--energy".into(),
            message: m,
        })?;
    cfg.apply(&Overrides {
        seed: args.seed,
        mode: args.mode.map(|m| match m {
            Mode::Comoving2d => TrackingMode::Comoving2d,
            Mode::Full3d => TrackingMode::Full3d,
        }),
        kinetic_energy,
    });
    Ok(cfg)
}

fn execute(command: Command, args: &RunArgs) -> eguide::Result<()> {
    let cfg = load(args)?;
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config {
                location: "--threads".into(),
                message: e.to_string(),
            })?;
    }
    let summary = cli::run(command, &cfg, &args.out, args.preset.as_deref())?;
    let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&summary.result)?);
    for f in &summary.files {
        eprintln!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Field(a) => (Command::Field, a),
        Cmd::Characterize(a) => (Command::Characterize, a),
        Cmd::Track(a) => (Command::Track, a),
        Cmd::Scan(a) => (Command::Scan, a),
        Cmd::Optimize(a) => (Command::Optimize, a),
        Cmd::Calc(a) => (Command::Calc, a),
        Cmd::Presets { name: None } => {
            let mut out = std::io::stdout().lock();
            for n in cli::preset_names() {
                let _ = writeln!(out, "{n}");
            }
            return ExitCode::SUCCESS;
        }
        Cmd::Presets { name: Some(n) } => {
            return match cli::preset(&n) {
                Ok(cfg) => {
                    let _ = writeln!(std::io::stdout(), "{}", cfg.to_json());
                    ExitCode::SUCCESS
                }
                Err(e) => report(&e),
            };
        }
    };
    match execute(command, &args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}

fn report(e: &Error) -> ExitCode {
    let config = e.is_config_error();
    let diag = serde_json::json!({
        "error": if config { "config" } else { "runtime" },
        "message": e.to_string(),
    });
    eprintln!("{diag}");
    ExitCode::from(if config { 2 } else { 1 })
}
