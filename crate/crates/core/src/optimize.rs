//! Coupling-end shape optimization.
//!
//! [`nelder_mead`] is a plain bounded Nelder–Mead simplex minimizer;
//! [`OptimizationProblem`] wraps the on-axis transverse field of a shaped
//! guide end as its objective.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    apply_coupling_shape, coupling_end_layout, AperturePlate, CouplingEndShape, FiveWireCrossSection, PlanarLayout,
};
use crate::model::Vec3;

/// Objective value reported for shapes that cannot be built.
pub const INVALID_SHAPE_PENALTY: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NelderMeadConfig {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Edge length of the initial simplex, in parameter units.
    pub initial_scale: f64,
    /// Stop once the spread of objective values over the simplex falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            initial_scale: 0.1,
            tolerance: 1e-10,
            max_iterations: 2000,
        }
    }
}

impl NelderMeadConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !(pos(self.reflection) && pos(self.expansion) && pos(self.contraction) && pos(self.shrink)) {
            return Err(Error::config("nelder_mead", "coefficients must be > 0"));
        }
        if self.expansion <= self.reflection {
            return Err(Error::config("nelder_mead.expansion", "must exceed the reflection coefficient"));
        }
        if self.contraction >= 1.0 || self.shrink >= 1.0 {
            return Err(Error::config("nelder_mead", "contraction and shrink must be < 1"));
        }
        if !pos(self.initial_scale) {
            return Err(Error::config("nelder_mead.initial_scale", "must be > 0"));
        }
        if !(self.tolerance >= 0.0) || self.max_iterations == 0 {
            return Err(Error::config("nelder_mead", "tolerance must be >= 0 and max_iterations > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimplexStep {
    Initial,
    Reflect,
    Expand,
    ContractOutside,
    ContractInside,
    Shrink,
}

/// State of the simplex after one accepted iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub step: SimplexStep,
    /// Best objective value in the simplex.
    pub best: f64,
    /// Spread of objective values over the simplex.
    pub spread: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadResult {
    pub best_params: Vec<f64>,
    pub best_value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
}

impl NelderMeadResult {
    /// CSV `iteration,E_max,spread`.
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iteration,E_max,spread")?;
        for t in &self.trace {
            writeln!(out, "{},{},{}", t.iteration, t.best, t.spread)?;
        }
        Ok(())
    }
}

fn project(x: &mut [f64], bounds: Option<&[(f64, f64)]>) {
    if let Some(bounds) = bounds {
        for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
            *v = v.clamp(lo, hi);
        }
    }
}

/// Minimize `f` from `initial`. Trial points are clamped into `bounds`.
/// The initial simplex steps each coordinate by `initial_scale`, away from
/// the nearer bound.
pub fn nelder_mead<F>(
    f: F,
    initial: &[f64],
    bounds: Option<&[(f64, f64)]>,
    config: &NelderMeadConfig,
) -> Result<NelderMeadResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    config.validate()?;
    let n = initial.len();
    if n == 0 {
        return Err(Error::domain("nothing to optimize"));
    }
    if let Some(b) = bounds {
        if b.len() != n || b.iter().any(|&(lo, hi)| !(lo <= hi)) {
            return Err(Error::domain("bounds must match the parameter count with lo <= hi"));
        }
        if initial.iter().zip(b).any(|(&x, &(lo, hi))| x < lo || x > hi) {
            return Err(Error::domain("initial point lies outside the bounds"));
        }
    }

    let mut simplex: Vec<Vec<f64>> = vec![initial.to_vec()];
    for k in 0..n {
        let mut v = initial.to_vec();
        let step = match bounds {
            Some(b) if v[k] + config.initial_scale > b[k].1 => -config.initial_scale,
            _ => config.initial_scale,
        };
        v[k] += step;
        project(&mut v, bounds);
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.par_iter().map(|v| f(v)).collect();
    let mut evaluations = n + 1;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut step = SimplexStep::Initial;

    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        let spread = values[n] - values[0];
        trace.push(TraceEntry {
            iteration: iterations,
            step,
            best: values[0],
            spread,
            evaluations,
        });
        if spread <= config.tolerance {
            converged = true;
            break;
        }
        if iterations >= config.max_iterations {
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|d| simplex[..n].iter().map(|v| v[d]).sum::<f64>() / n as f64)
            .collect();
        let towards = |coef: f64| -> Vec<f64> {
            let mut p: Vec<f64> = (0..n).map(|d| centroid[d] + coef * (centroid[d] - simplex[n][d])).collect();
            project(&mut p, bounds);
            p
        };

        let xr = towards(config.reflection);
        let fr = f(&xr);
        evaluations += 1;
        if fr < values[0] {
            let xe = towards(config.reflection * config.expansion);
            let fe = f(&xe);
            evaluations += 1;
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
                step = SimplexStep::Expand;
            } else {
                simplex[n] = xr;
                values[n] = fr;
                step = SimplexStep::Reflect;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            step = SimplexStep::Reflect;
            continue;
        }
        let (xc, fc, kind, threshold) = if fr < values[n] {
            let xc = towards(config.reflection * config.contraction);
            (xc.clone(), f(&xc), SimplexStep::ContractOutside, fr)
        } else {
            let xc = towards(-config.contraction);
            (xc.clone(), f(&xc), SimplexStep::ContractInside, values[n])
        };
        evaluations += 1;
        if fc < threshold {
            simplex[n] = xc;
            values[n] = fc;
            step = kind;
            continue;
        }
        let best = simplex[0].clone();
        for v in simplex.iter_mut().skip(1) {
            for d in 0..n {
                v[d] = best[d] + config.shrink * (v[d] - best[d]);
            }
        }
        let shrunk: Vec<f64> = simplex[1..].par_iter().map(|v| f(v)).collect();
        values[1..].copy_from_slice(&shrunk);
        evaluations += n;
        step = SimplexStep::Shrink;
    }

    Ok(NelderMeadResult {
        best_params: simplex[0].clone(),
        best_value: values[0],
        iterations,
        evaluations,
        converged,
        trace,
    })
}

/// Transverse on-axis field of a shaped coupling end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizationProblem {
    pub cross_section: FiveWireCrossSection,
    /// Length of the straight guide behind the coupling end [m].
    pub guide_length: f64,
    pub aperture: AperturePlate,
    /// Control stations, offset limit and the starting offsets.
    pub shape: CouplingEndShape,
    /// Rf amplitude used to scale the objective [V].
    pub amplitude: f64,
    pub axis_samples: usize,
    /// Axis span, from `axis_start` (inside the guide) down to `axis_end`
    /// (in front of the aperture) [m].
    pub axis_start: f64,
    pub axis_end: f64,
}

impl OptimizationProblem {
    /// The demonstrated chip with three control stations per edge over the
    /// final 2 mm, offsets limited to 0.8 gap, the plate 500 µm in front and
    /// 50 axis samples from 2 mm inside to 1 mm beyond the plate, at 1 V.
    pub fn paper() -> Self {
        let cs = FiveWireCrossSection::paper();
        let aperture = AperturePlate::in_front(500e-6, 20e-6);
        Self {
            cross_section: cs,
            guide_length: 37e-3,
            aperture,
            shape: CouplingEndShape::with_span(2e-3, 0.8 * cs.gap),
            amplitude: 1.0,
            axis_samples: 50,
            axis_start: 2e-3,
            axis_end: aperture.y - 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cross_section.validate()?;
        self.shape.validate()?;
        if self.axis_samples < 2 {
            return Err(Error::config("axis_samples", "need at least 2 samples"));
        }
        if !(self.axis_start > self.axis_end) {
            return Err(Error::config("axis_start", "must lie beyond axis_end"));
        }
        if !(self.amplitude.is_finite() && self.amplitude > 0.0) {
            return Err(Error::config("amplitude", "must be > 0"));
        }
        if !(self.aperture.y < 0.0) {
            return Err(Error::config("aperture.y", "plate must sit in front of the substrate edge"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        2 * self.shape.n_stations()
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        vec![(-self.shape.max_offset, self.shape.max_offset); self.dim()]
    }

    /// Height of the unperturbed guide axis [m].
    pub fn axis_height(&self) -> f64 {
        self.cross_section.null_height()
    }

    pub fn axis_points(&self) -> Vec<Vec3> {
        let z = self.axis_height();
        let n = self.axis_samples;
        (0..n)
            .map(|k| {
                let y = self.axis_start + (self.axis_end - self.axis_start) * k as f64 / (n - 1) as f64;
                Vec3::new(0.0, y, z)
            })
            .collect()
    }

    fn base_layout(&self) -> Result<PlanarLayout> {
        let mut layout = coupling_end_layout(&self.cross_section, self.guide_length, &self.shape)?;
        layout.aperture = Some(self.aperture);
        Ok(layout)
    }

    /// Layout for a parameter vector (inner offsets, then outer offsets).
    pub fn layout(&self, params: &[f64]) -> Result<PlanarLayout> {
        let shape = self.shape.with_params(params)?;
        apply_coupling_shape(&self.base_layout()?, &shape)
    }

    /// Transverse field magnitude at every axis sample [V/m].
    pub fn transverse_profile(&self, params: &[f64]) -> Result<Vec<f64>> {
        let layout = self.layout(params)?;
        Ok(self
            .axis_points()
            .iter()
            .map(|p| {
                let e = layout.unit_field(p) * self.amplitude;
                e.x.hypot(e.z)
            })
            .collect())
    }

    /// Largest transverse field on the axis [V/m], or
    /// [`INVALID_SHAPE_PENALTY`] for shapes that cannot be built.
    pub fn objective_emax(&self, params: &[f64]) -> f64 {
        match self.transverse_profile(params) {
            Ok(profile) => profile.into_iter().fold(0.0, f64::max),
            Err(_) => INVALID_SHAPE_PENALTY,
        }
    }

    pub fn optimize(&self, config: &NelderMeadConfig) -> Result<CouplingOptimization> {
        self.validate()?;
        let initial = self.shape.params();
        let straight = self.objective_emax(&vec![0.0; self.dim()]);
        let run = nelder_mead(|p| self.objective_emax(p), &initial, Some(&self.bounds()), config)?;
        Ok(CouplingOptimization {
            straight_emax: straight,
            improvement: straight / run.best_value,
            best_shape: self.shape.with_params(&run.best_params)?,
            run,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingOptimization {
    /// Objective of the unshaped, straight-ended rails [V/m].
    pub straight_emax: f64,
    /// `straight_emax / best_value`.
    pub improvement: f64,
    pub best_shape: CouplingEndShape,
    pub run: NelderMeadResult,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quadratic_bowl_in_six_dimensions() {
        let target = [1.0, -2.0, 0.5, 3.0, -1.5, 0.25];
        let f = |x: &[f64]| -> f64 {
            x.iter()
                .zip(&target)
                .enumerate()
                .map(|(k, (a, b))| (k + 1) as f64 * (a - b).powi(2))
                .sum()
        };
        let config = NelderMeadConfig {
            initial_scale: 1.0,
            tolerance: 1e-24,
            max_iterations: 20_000,
            ..Default::default()
        };
        let r = nelder_mead(f, &[0.0; 6], None, &config).unwrap();
        for (x, t) in r.best_params.iter().zip(&target) {
            assert!((x - t).abs() < 1e-8, "{x} vs {t}");
        }
    }

    #[test]
    fn rosenbrock_from_the_standard_start() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let config = NelderMeadConfig {
            max_iterations: 200,
            tolerance: 0.0,
            ..Default::default()
        };
        let r = nelder_mead(f, &[-1.2, 1.0], None, &config).unwrap();
        assert!(r.best_value < 1e-6, "f = {}", r.best_value);
    }

    #[test]
    fn best_so_far_never_increases() {
        let f = |x: &[f64]| (x[0] - 0.3).abs() + (x[1] + 0.1).powi(2) + (3.0 * x[0] * x[1]).sin();
        let bounds = [(-1.0, 1.0), (-1.0, 1.0)];
        let r = nelder_mead(f, &[0.9, 0.9], Some(&bounds), &NelderMeadConfig::default()).unwrap();
        assert!(r.trace.windows(2).all(|w| w[1].best <= w[0].best));
        assert!(r.best_params.iter().all(|x| x.abs() <= 1.0));
    }

    #[test]
    fn invalid_config_is_a_config_error() {
        let config = NelderMeadConfig {
            expansion: 0.5,
            ..Default::default()
        };
        assert!(nelder_mead(|x| x[0], &[0.0], None, &config).unwrap_err().is_config_error());
    }

    #[test]
    fn straight_end_field_and_linearity() {
        let p = OptimizationProblem::paper();
        let zero = vec![0.0; p.dim()];
        let e = p.objective_emax(&zero);
        assert!(e > 10.0 && e < 1000.0, "E_max = {e}");
        let scaled = OptimizationProblem { amplitude: 33.0, ..p.clone() };
        assert_relative_eq!(scaled.objective_emax(&zero), 33.0 * e, max_relative = 1e-12);
    }

    #[test]
    fn lateral_field_vanishes_on_the_symmetry_plane() {
        let p = OptimizationProblem::paper();
        let layout = p.layout(&[20e-6, -10e-6, 5e-6, 30e-6, 0.0, -40e-6]).unwrap();
        for pt in p.axis_points() {
            let e = layout.unit_field(&pt);
            assert!(e.x.abs() <= 1e-10 * e.norm().max(1e-300), "{e:?}");
        }
    }

    #[test]
    fn unbuildable_shape_is_penalized() {
        let p = OptimizationProblem::paper();
        let mut params = vec![0.0; p.dim()];
        params[0] = 2.0 * p.shape.max_offset;
        assert_eq!(p.objective_emax(&params), INVALID_SHAPE_PENALTY);
    }
}
