//! Simulation and verification toolkit for the repeated-interaction maser:
//! a cavity mode driven by a stream of two-level atoms, each measured before
//! and after its interaction.
//!
//! The crate builds the four measurement-conditioned Kraus operators on a
//! truncated Fock space, runs the outcome-conditioned quantum trajectory and
//! its classical birth-death reduction, tracks the diagonal martingale that
//! identifies the limiting Fock state, iterates the averaged channel to its
//! thermal fixed point, and measures convergence in total variation and
//! Wasserstein-1 distance (exact discrete optimal transport).
//!
//! ```
//! use maser::fock_ops::{build_kraus, DensityMatrix, Model};
//! use maser::params::{ratio, DimensionlessParams};
//! use maser::trajectory::run_trajectory;
//!
//! // exact rationals so resonance decisions are certified, not approximated
//! let params = DimensionlessParams::from_rationals(
//!     ratio(1, 2),        // coupling xi
//!     ratio(1, 3),        // detuning eta
//!     2.0_f64.ln(),       // theta = beta * epsilon
//!     0.4,                // phi = tau * epsilon mod 2pi
//! )?;
//! let d = 32;
//! let kraus = build_kraus(Model::new(&params, d as u64 + 2)?, d);
//!
//! let rho0 = DensityMatrix::fock(3, d);
//! let (diagnostics, state) = run_trajectory(&rho0, &kraus, 500, 7, 0, 100, 1e-9)?;
//! let last = diagnostics.last().unwrap();
//! assert!(last.gap < 1e-6, "a Fock start stays a Fock state");
//! assert_eq!(state.t, 500);
//! # Ok::<(), maser::MaserError>(())
//! ```

pub mod birth_death;
pub mod channel;
pub mod cli;
pub mod error;
pub mod fock_ops;
pub mod measures;
pub mod params;
pub mod resonance;
pub mod trajectory;
pub mod verify;

pub use error::{MaserError, Result};
