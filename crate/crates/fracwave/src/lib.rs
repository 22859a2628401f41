//! Simulation laboratory for the 2D quadratic stochastic wave equation
//! driven by a space-time fractional noise with Hurst triple (H0, H1, H2).
//!
//! The crate builds the renormalized enhanced path (the first-order wave
//! field, its Wick square, the Duhamel integral of the square, and the
//! third-order product), solves the remainder fixed-point equation behind
//! the decomposition u = psi + I[psi^2] + w, and runs the Monte-Carlo
//! convergence, divergence and renormalization-constant studies at desk
//! scale.
//!
//! Module map:
//! - [`config`]: Hurst triples, grids, Sobolev parameters, run configs.
//! - [`quad`]: adaptive Gauss-Kronrod quadrature and composite rules.
//! - [`kernels`]: the oscillatory kernel gamma, the spectral density
//!   kernel K^H, the wave multiplier and derived integrals.
//! - [`rng`]: counter-based Gaussian mode coefficients.
//! - [`spectral`]: torus FFT helpers, multipliers, dealiased products.
//! - [`noise`]: seeded spectral mode sets with Hermitian symmetry and
//!   level nesting.
//! - [`objects`]: lattice fields and the enhanced-path constructions.
//! - [`analysis`]: windowed Sobolev norms and Monte-Carlo estimators.
//! - [`renorm`]: the renormalization constant, its scaling law, and the
//!   divergence study.
//! - [`oracles`]: truncation-convergence certification of the integral
//!   bounds used by the moment estimates.
//! - [`solver`]: Picard fixed point for the remainder equation and the
//!   direct pseudo-spectral integrator of the renormalized equation.
//! - [`cli`]: batch experiment orchestration and persistence.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod kernels;
pub mod noise;
pub mod objects;
pub mod oracles;
pub mod quad;
pub mod renorm;
pub mod rng;
pub mod solver;
pub mod spectral;
