//! Simulation library for a collapse-driven model of universe growth.
//!
//! The model lives in a truncated Fock space: the number operator counts
//! Planck-volume units, a displaced-oscillator hamiltonian drives growth,
//! and an anti-hermitian collapse term coupled to a classical white-noise
//! record steers each trajectory toward number eigenstates.  The crate
//! provides
//!
//! * elementary Fock-space operators and the exact split-step propagator
//!   ([`fock`]),
//! * noise-record generation under the raw Gaussian measure and the
//!   norm-weighted physical measure ([`noise`]),
//! * closed-form collapse analytics for the hamiltonian-free case and the
//!   discrete instant construction ([`exact`]),
//! * Monte Carlo trajectory ensembles for the growth model with their
//!   analytic companions ([`cosmo`]),
//! * an independent clock sector evolved jointly with space ([`clock`]),
//! * ensemble orchestration, statistics, CLI plumbing and the validation
//!   suite ([`harness`]).

pub mod clock;
pub mod constants;
pub mod cosmo;
mod error;
pub mod exact;
pub mod fock;
pub mod harness;
pub mod noise;
pub mod quad;
pub mod stats;

pub use error::{Error, Result};
