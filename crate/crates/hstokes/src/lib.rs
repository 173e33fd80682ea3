//! Numerical laboratory for quantitative periodic homogenization of 2D
//! Stokes systems.
//!
//! The crate solves the variable-coefficient Stokes system
//! `-div(A(x/eps) grad u) + grad p = F`, `div u = g` on the unit square,
//! computes cell correctors and the effective (homogenized) tensor on the
//! unit torus, builds smoothed two-scale expansions, and measures how fast
//! the fine-scale solution converges to the homogenized one as `eps` is
//! swept. Everything is second-order staggered-grid finite differences
//! with FFT-preconditioned Krylov solves, deterministic by construction.
//!
//! Module map:
//!
//! * [`coeff`]: coefficient tensor families and ellipticity checks
//! * [`cell`]: periodic cell problems, correctors, effective tensor,
//!   flux-difference tensor and its dual potentials
//! * [`domain`]: Dirichlet Stokes solves and manufactured problems
//! * [`twoscale`]: extension, box-average smoothing, expansions, boundary
//!   correctors and cutoff ramps
//! * [`norms`] / [`study`]: discrete norms, rate fits, sweep orchestration
//! * [`config`] / [`cache`]: run configuration and binary field caches

pub mod cache;
pub mod cell;
pub mod coeff;
pub mod config;
pub mod domain;
pub mod error;
pub mod fft;
pub mod field;
pub mod grid;
pub mod norms;
pub mod oper;
pub mod solver;
pub mod study;
pub mod twoscale;

pub use error::{Error, Result};
