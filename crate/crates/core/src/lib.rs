//! Simulation of planar alternating-quadrupole guides for low-energy electrons.
//!
//! The crate computes closed-form fields above gapless planar electrode
//! layouts, characterizes the resulting pseudopotential, tracks electron
//! ensembles through straight and curved guides in the oscillating field,
//! scans transmission over drive parameters, optimizes the coupling end of
//! the electrodes and evaluates a few design scalings.
//!
//! All quantities inside the library are SI, with energies that are
//! naturally quoted per electron (depths, kinetic energies) in eV.

pub mod cli;
pub mod designcalc;
pub mod error;
pub mod field;
pub mod geometry;
pub mod model;
pub mod optimize;
pub mod stability;
pub mod tracking;

pub use error::{Error, Result};
pub use geometry::{ElectrodeLayout, FiveWireCrossSection, GuidePath};
pub use model::{DriveParams, EnergySpec, ParticleState, Vec3};
