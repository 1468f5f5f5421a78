//! Shape the entrance end of the rails to flatten the transverse field on
//! the axis between the aperture plate and the guide.
//!
//! Writes the optimizer trace to `coupling_trace.csv` in the working directory.

use std::fs::File;
use std::io::BufWriter;

use eguide::optimize::{NelderMeadConfig, OptimizationProblem};

fn main() -> eguide::Result<()> {
    let problem = OptimizationProblem::paper();
    let config = NelderMeadConfig {
        initial_scale: 30e-6,
        tolerance: 1e-6,
        max_iterations: 3000,
        ..NelderMeadConfig::default()
    };
    let opt = problem.optimize(&config)?;

    println!("straight ends: max |E_perp| = {:.2} V/m per volt", opt.straight_emax);
    println!(
        "optimized:     max |E_perp| = {:.2} V/m per volt ({:.1}x lower, {} iterations, {} evaluations)",
        opt.run.best_value, opt.improvement, opt.run.iterations, opt.run.evaluations
    );
    let params = opt.best_shape.params();
    let (inner, outer) = params.split_at(params.len() / 2);
    let um = |v: &[f64]| v.iter().map(|x| format!("{:+.1}", x * 1e6)).collect::<Vec<_>>().join(" ");
    println!("inner edge offsets [um]: {}", um(inner));
    println!("outer edge offsets [um]: {}", um(outer));

    let before = problem.transverse_profile(&vec![0.0; problem.dim()])?;
    let after = problem.transverse_profile(&params)?;
    println!("\n{:>8} {:>10} {:>10}", "y/mm", "straight", "shaped");
    for (k, p) in problem.axis_points().iter().enumerate().step_by(5) {
        println!("{:>8.2} {:>10.2} {:>10.2}", p.y * 1e3, before[k], after[k]);
    }

    opt.run.write_trace_csv(BufWriter::new(File::create("coupling_trace.csv")?))?;
    Ok(())
}
