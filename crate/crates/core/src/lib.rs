//! Strong-to-weak symmetry breaking in decohered U(1)-symmetric systems.
//!
//! Exact sector evolution and Monte Carlo sampling of the symmetric simple
//! exclusion process, Rényi correlators, conditional mutual information,
//! charge decoders, Gaussian hydrodynamics, rotor-model closed forms with the
//! replica BKT flow, and a Model F Langevin integrator.

pub mod collapse;
pub mod config_space;
pub mod decoders;
pub mod diagnostics;
pub mod error;
pub mod exact_evolver;
pub mod hydro_gaussian;
pub mod krylov;
pub mod modelf_langevin;
pub mod rotor_analytic;
pub mod ssep_sampler;
pub mod trajectory_io;

pub use error::{Error, Result};
