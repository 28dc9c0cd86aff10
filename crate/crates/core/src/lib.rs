//! Samplers and statistical diagnostics for discrete Gibbsian line ensembles.
//!
//! The crate is organized around the pipeline it supports:
//!
//! * [`hamiltonian`] — jump-weight laws on an integer support interval,
//!   validation, and exponential tilting.
//! * [`bridge`] — exact sampling of single random-walk bridges with pinned
//!   endpoints via log-space partition tables.
//! * [`avoid`] — avoiding (non-crossing) ensembles of bridges: rejection and
//!   Metropolis samplers, monotone coupled chains, and acceptance-probability
//!   estimation with a brute-force enumeration oracle.
//! * [`brownian`] — Brownian bridge reference samplers and the closed-form
//!   tail/separation bounds used as oracles.
//! * [`scaling`] — the diffusive embedding of discrete ensembles and the
//!   derived diagnostics (parabola violations, extreme tails, minimum gaps,
//!   modulus of continuity).
//! * [`stattest`] — KS tests, binomial intervals, chi-square goodness of fit,
//!   and the two composite checks (Gibbs resampling consistency and scaled
//!   weak convergence).
//! * [`rng`] — the seed schedule and Gaussian source shared by all samplers.

pub mod avoid;
pub mod bridge;
pub mod brownian;
pub mod error;
pub mod hamiltonian;
pub mod rng;
pub mod scaling;
pub mod stattest;

pub use avoid::{AvoidanceSpec, DiscreteEnsemble};
pub use bridge::{BridgeSpec, DiscretePath};
pub use brownian::ContinuousEnsemble;
pub use error::{Error, Result};
pub use hamiltonian::{Hamiltonian, TiltedLaw};
pub use scaling::{ScaledEnsemble, ScalingParams};
pub use stattest::TestReport;
