//! Simulation and exact analysis of Fleming-Viot particle systems driven by
//! continuous-time Markov chains on a finite state space.
//!
//! The driving chain lives on `E = {0, 1, …, n}` with state 0 an absorbing
//! cemetery. An N-particle Fleming-Viot system runs N copies of the chain;
//! a particle that jumps to the cemetery instantly adopts the state of a
//! uniformly chosen other particle. The crate provides:
//!
//! * [`ctmc`] — the driving chain: exact path simulation, matrix
//!   exponentials, survival-conditioned laws, the quasi-stationary
//!   distribution, the Doob-transformed Q-process, and the killing-rate
//!   functional `lambda_t`.
//! * [`fv`] — the event-driven N-particle simulator with a full resampling
//!   event log.
//! * [`genealogy`] — label algebra, dynamical historical paths, MRCA and
//!   spine extraction, spine branch counting.
//! * [`sidebranch`] — the limiting side-branch branching process and
//!   extraction of empirical side-branch trees from a run.
//! * [`pairchain`] — exact (non-Monte-Carlo) analysis of the two-particle
//!   system: product generator, stationary law, race-harmonic function,
//!   exact spine marginal.
//! * [`stats`] — confidence intervals, dispersion and goodness-of-fit tests
//!   used by the validation campaigns.
//!
//! Particle indices are 0-based throughout; resampling events are numbered
//! from 1 in the order they occur.

// Index loops read better than iterator chains in the matrix code.
#![allow(clippy::needless_range_loop)]

pub mod ctmc;
pub mod fv;
pub mod genealogy;
pub mod io;
pub mod linalg;
pub mod model;
pub mod pairchain;
pub mod policy;
pub mod seeds;
pub mod sidebranch;
pub mod stats;

pub use model::{Distribution, FiniteChainModel, Path, StateId};
pub use policy::NumericPolicy;
