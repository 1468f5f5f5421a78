//! Acceptance checks for the demonstrated guide. Prints one PASS/FAIL line
//! per criterion. The process fails if any criterion outside
//! `KNOWN_FAILURES` fails.

use std::f64::consts::TAU;
use std::time::{Duration, Instant};

use eguide::designcalc::{coupling_strength, heating_rate, oscillations_before_excitation, scale_design, NoiseModel};
use eguide::geometry::GuidePath;
use eguide::optimize::{NelderMeadConfig, OptimizationProblem};
use eguide::stability::{characterize_trap, mathieu_boundary, mathieu_stable};
use eguide::tracking::spectrum::{dominant_frequency, moving_average, oscillation_count};
use eguide::tracking::{
    stability_scan, track_electron, BeamSpec, GuideModel, Launch, ScanAxes, StabilityScan, StepControl,
    TrackingMode, TransmitOptions,
};
use eguide::{DriveParams, Result};

/// Criteria this model does not meet; they still print their measured values.
const KNOWN_FAILURES: [u32; 3] = [8, 9, 10];

const SEED: u64 = 20110401;

struct Outcome {
    pass: bool,
    detail: String,
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target.abs()
}

fn grid(start: f64, step: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| start + step * k as f64).collect()
}

fn criterion_1() -> Result<Outcome> {
    let q = mathieu_boundary(0.0, 0.5, 1.0, 1e-7)?;
    let pass = q > 0.9077 && q < 0.9085 && mathieu_stable(0.3, 0.0)?.stable && !mathieu_stable(0.95, 0.0)?.stable;
    Ok(Outcome {
        pass,
        detail: format!("a = 0 onset at q = {q:.5}"),
    })
}

fn criterion_2() -> Result<Outcome> {
    let guide = GuideModel::paper();
    let drive = DriveParams::new(33.0, TAU * 970e6, 0.0)?;
    let c = characterize_trap(&guide.layout_2d()?, &drive)?;
    let analytic = (230e-6f64 * 1090e-6).sqrt();
    let h = c.guide_height;
    Ok(Outcome {
        pass: within(h, analytic, 0.005) && within(h, 500e-6, 0.10),
        detail: format!("minimum at {:.2} um, sqrt(ab) = {:.2} um", h * 1e6, analytic * 1e6),
    })
}

fn criterion_3() -> Result<Outcome> {
    let guide = GuideModel::paper();
    let drive = DriveParams::new(33.0, TAU * 970e6, 0.0)?;
    let c = characterize_trap(&guide.layout_2d()?, &drive)?;
    let f = c.secular_frequency() / TAU;
    let saddle_above = c.saddle_position.z > c.minimum_position.z;
    let pass = within(f, 133e6, 0.20)
        && within(c.depth, 0.041, 0.30)
        && within(c.eta, 0.31, 0.20)
        && within(c.u_factor, 0.0079, 0.30)
        && saddle_above;
    Ok(Outcome {
        pass,
        detail: format!(
            "omega/2pi = {:.1} MHz, U = {:.2} meV, eta = {:.4}, u = {:.5}, saddle at {:.0} um",
            f / 1e6,
            c.depth * 1e3,
            c.eta,
            c.u_factor,
            c.saddle_position.z * 1e6
        ),
    })
}

fn criterion_4() -> Result<Outcome> {
    let a = scale_design(500e-6, TAU * 970e6, 33.0, 0.31, 0.0079)?;
    let b = scale_design(50e-6, TAU * 10e9, 33.0, 0.31, 0.0079)?;
    let (fa, fb) = (a.omega / TAU, b.omega / TAU);
    let pass = (fa - 133.0e6).abs() <= 0.5e6 && (a.depth - 0.041).abs() <= 1e-3 && within(fb, 1.2e9, 0.15);
    Ok(Outcome {
        pass,
        detail: format!(
            "{:.2} MHz and {:.2} meV at the demonstrated drive; {:.3} GHz at 50 um / 10 GHz",
            fa / 1e6,
            a.depth * 1e3,
            fb / 1e9
        ),
    })
}

fn criterion_5() -> Result<Outcome> {
    let guide = GuideModel::paper();
    let factors = guide.factors()?;
    let layout = guide.layout_2d()?;
    let q = 0.3;
    let omega = TAU * 100e6;
    let big = omega * 8f64.sqrt() / q;
    let amplitude = q * big * big * factors.guide_height.powi(2) / (2.0 * factors.eta * eguide::model::E_OVER_M);
    let drive = DriveParams::new(amplitude, big, 0.0)?;
    let characterized = characterize_trap(&layout, &drive)?.secular_frequency();
    let step = StepControl::default();
    let dt = step.dt(&drive);
    let launch = Launch {
        kinetic_energy: 2.0,
        offset: [20e-6, 20e-6],
        angle: [0.0, 0.0],
    };

    let long = GuidePath::straight(0.5)?;
    let r = track_electron(&launch, &layout, &drive, &long, TrackingMode::Comoving2d, step, Some(1))?;
    let samples = &r.samples[..r.samples.len() - 1];
    let xs: Vec<f64> = samples.iter().map(|s| s.position.x).collect();
    let zs: Vec<f64> = samples.iter().map(|s| s.position.z).collect();
    let band = (TAU * 10e6, 0.5 * big);
    let fx = dominant_frequency(&xs, dt, band).unwrap_or(f64::NAN);
    let fz = dominant_frequency(&zs, dt, band).unwrap_or(f64::NAN);

    let short = GuidePath::straight(37e-3)?;
    let r = track_electron(&launch, &layout, &drive, &short, TrackingMode::Comoving2d, step, Some(1))?;
    let samples = &r.samples[..r.samples.len() - 1];
    let xs: Vec<f64> = samples.iter().map(|s| s.position.x).collect();
    let secular = oscillation_count(&moving_average(&xs, step.steps_per_period));
    let drive_osc = big * r.final_state.time / TAU;

    let pass = within(fx, characterized, 0.02)
        && within(fz, characterized, 0.02)
        && (secular - 4.0).abs() <= 1.0
        && (drive_osc - 44.0).abs() <= 4.0;
    Ok(Outcome {
        pass,
        detail: format!(
            "peaks {:.1}/{:.1} MHz vs {:.1} MHz; {:.2} secular and {:.1} drive oscillations over 37 mm at 2 eV",
            fx / TAU / 1e6,
            fz / TAU / 1e6,
            characterized / TAU / 1e6,
            secular,
            drive_osc
        ),
    })
}

fn paper_axes() -> ScanAxes {
    ScanAxes::Stability {
        depths: grid(3e-3, 3e-3, 20),
        q_values: grid(0.05, 0.05, 20),
    }
}

fn criterion_6() -> Result<Outcome> {
    let guide = GuideModel::paper();
    let scan = stability_scan(
        &BeamSpec::paper(3.5),
        &guide,
        &paper_axes(),
        TrackingMode::Comoving2d,
        SEED,
        &TransmitOptions::default(),
    )?;
    let u_min = scan.depth_cliff(0.5).unwrap_or(f64::NAN);
    let q_cliff = scan.q_cliff(1.5 * u_min).unwrap_or(f64::NAN);
    let plateau = scan.plateau();
    let low_q = scan.column(0);
    let ScanAxes::Stability { depths, .. } = &scan.axes else {
        unreachable!()
    };
    let persists = depths
        .iter()
        .zip(&low_q)
        .filter(|(&u, _)| u >= 1.5 * u_min)
        .all(|(_, &t)| t >= 0.5 * plateau);
    Ok(Outcome {
        pass: within(u_min, 0.022, 0.30) && (q_cliff - 0.8).abs() <= 0.1 && persists,
        detail: format!(
            "plateau {plateau:.3}, U_min = {:.2} meV, q cliff = {q_cliff:.3}, guiding at q = 0.05: {persists}",
            u_min * 1e3
        ),
    })
}

fn criterion_7() -> Result<Outcome> {
    let guide = GuideModel::paper();
    let axes = ScanAxes::Stability {
        depths: grid(2e-3, 1e-3, 59),
        q_values: vec![0.3],
    };
    let mut u_min = Vec::new();
    for energy in [1.0, 2.0, 3.5, 5.0] {
        let scan = stability_scan(
            &BeamSpec::paper(energy),
            &guide,
            &axes,
            TrackingMode::Comoving2d,
            SEED,
            &TransmitOptions::default(),
        )?;
        u_min.push(scan.depth_cliff(0.3).unwrap_or(f64::NAN));
    }
    let monotone = u_min.windows(2).all(|w| w[1] > w[0]);
    let pass = monotone && within(u_min[0], 0.008, 0.5) && within(u_min[3], 0.033, 0.3);
    let listed: Vec<String> = u_min.iter().map(|u| format!("{:.2}", u * 1e3)).collect();
    Ok(Outcome {
        pass,
        detail: format!("U_min at 1/2/3.5/5 eV = {} meV", listed.join(" / ")),
    })
}

fn criterion_8() -> Result<Outcome> {
    let guide = GuideModel::paper();
    let beam = BeamSpec {
        n_rays: 20,
        n_phases: 8,
        ..BeamSpec::paper(3.5)
    };
    let cells = [(0.045, 0.3), (0.030, 0.5), (0.015, 0.3), (0.021, 0.3), (0.060, 0.15), (0.045, 0.95)];
    let mut worst: f64 = 0.0;
    let mut listed = Vec::new();
    for (u, q) in cells {
        let axes = ScanAxes::Stability {
            depths: vec![u],
            q_values: vec![q],
        };
        let run = |mode| -> Result<StabilityScan> {
            stability_scan(&beam, &guide, &axes, mode, SEED, &TransmitOptions::default())
        };
        let flat = run(TrackingMode::Comoving2d)?.fraction(0, 0);
        let full = run(TrackingMode::Full3d)?.fraction(0, 0);
        worst = worst.max((flat - full).abs());
        listed.push(format!("({:.0} meV, {q}): {flat:.2}/{full:.2}", u * 1e3));
    }
    Ok(Outcome {
        pass: worst <= 0.15,
        detail: format!("2D/3D {}; largest difference {worst:.2}", listed.join(", ")),
    })
}

fn criterion_9() -> Result<Outcome> {
    let config = NelderMeadConfig {
        initial_scale: 30e-6,
        tolerance: 1e-6,
        max_iterations: 3000,
        ..NelderMeadConfig::default()
    };
    let start = Instant::now();
    let opt = OptimizationProblem::paper().optimize(&config)?;
    let elapsed = start.elapsed();
    let monotone = opt.run.trace.windows(2).all(|w| w[1].best <= w[0].best);
    Ok(Outcome {
        pass: opt.improvement >= 10.0 && monotone && elapsed < Duration::from_secs(15 * 60),
        detail: format!(
            "E_max {:.1} -> {:.2} V/m per volt ({:.1}x) in {} iterations, trace monotone: {monotone}",
            opt.straight_emax, opt.run.best_value, opt.improvement, opt.run.iterations
        ),
    })
}

fn criterion_10() -> Result<Outcome> {
    let noise = NoiseModel::default();
    let anchor = heating_rate(TAU * 100e6, 500e-6, &noise)?;
    let secular = TAU * 133e6;
    let oscillations = oscillations_before_excitation(secular, heating_rate(secular, 500e-6, &noise)?);
    let c1 = coupling_strength(TAU * 100e6, 500e-6)? / TAU;
    let c2 = coupling_strength(TAU * 1e9, 50e-6)? / TAU;
    let checks = [
        ("rate", (anchor - 30.0).abs() < 1e-9),
        ("oscillations", within(oscillations, 60e6, 0.5)),
        ("coupling at 500 um", within(c1, 1.0e3, 0.2)),
        ("coupling at 50 um", within(c2, 100e3, 0.2)),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    Ok(Outcome {
        pass: failed.is_empty(),
        detail: format!(
            "rate {anchor:.3}/s, {:.3e} oscillations at 133 MHz, Omega_c/2pi = {c1:.0} Hz and {:.1} kHz{}",
            oscillations,
            c2 / 1e3,
            if failed.is_empty() {
                String::new()
            } else {
                format!("; failed: {}", failed.join(", "))
            }
        ),
    })
}

fn criterion_11() -> Result<Outcome> {
    let guide = GuideModel::paper();
    let beam = BeamSpec {
        n_rays: 12,
        n_phases: 4,
        ..BeamSpec::paper(3.5)
    };
    let axes = ScanAxes::Stability {
        depths: grid(10e-3, 10e-3, 4),
        q_values: grid(0.2, 0.2, 4),
    };
    let run = |threads: usize| -> Result<String> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool");
        let scan = pool.install(|| {
            stability_scan(&beam, &guide, &axes, TrackingMode::Comoving2d, SEED, &TransmitOptions::default())
        })?;
        let mut csv = Vec::new();
        scan.write_csv(&mut csv)?;
        Ok(String::from_utf8(csv).expect("utf-8"))
    };
    let one = run(1)?;
    let four = run(4)?;
    let again = run(1)?;
    Ok(Outcome {
        pass: one == four && one == again,
        detail: format!("{} cells identical across 1, 4 and 1 threads: {}", one.lines().count() - 1, one == four && one == again),
    })
}

fn main() {
    let criteria: [(u32, fn() -> Result<Outcome>); 11] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
        (11, criterion_11),
    ];
    let mut unexpected = Vec::new();
    for (n, check) in criteria {
        let start = Instant::now();
        let outcome = check().unwrap_or_else(|e| Outcome {
            pass: false,
            detail: format!("error: {e}"),
        });
        let known = KNOWN_FAILURES.contains(&n);
        let tag = match (outcome.pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!(
            "criterion {n:>2}: {tag} [{:.1} s] {}",
            start.elapsed().as_secs_f64(),
            outcome.detail
        );
        if !outcome.pass && !known {
            unexpected.push(n);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
