//! Numerical laboratory for the fractional stochastic heat equation
//! ∂_t u = Δu + ρ²u² + Ḃ with fractional space-time noise.
//!
//! Special functions and quadrature feed the heat-kernel integrals, which
//! feed the spectral noise synthesis and the renormalisation constants,
//! which feed the Picard solver.

// negated comparisons are how NaN gets rejected; the Kronrod tables are
// quoted at full published precision
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod error;
pub mod heatkernel;
pub mod quad;
pub mod renorm;
pub mod seeding;
pub mod sobolev_grid;
pub mod solver;
pub mod specfun;
pub mod spectral_noise;
pub mod stats;

pub use error::{Error, Result};
pub use quad::{QuadratureResult, Tolerance};
pub use renorm::{KernelKH, RenormTable};
pub use sobolev_grid::{CutoffFn, Grid, SobolevParams};
pub use solver::{Regime, SolverConfig, SolverState};
pub use specfun::RenormConstants;
pub use spectral_noise::{FieldKind, FieldTrajectory, HurstVector, NoiseDraw, SpectralMesh};
pub use stats::{Estimate, LinearFit};
