//! Design toolkit for adaptive classifier cascades under hardware constraints.
//!
//! An adaptive cascade chains classifiers of increasing cost: each input exits
//! at the first stage whose score margin clears that stage's threshold. This
//! crate jointly searches the per-stage architecture hyper-parameters and the
//! exit thresholds so that expected per-image energy is minimized under an
//! accuracy-degradation bound (or error minimized under an energy budget).
//!
//! The crate is organized around precomputed network profiles (per-image class
//! scores plus power/runtime/energy measurements) that stand in for trained
//! networks, so the optimizer is testable at desk scale:
//!
//! * [`space`] — hyper-parameter design spaces over a discrete lattice.
//! * [`profile`] — profile datasets: load/save/validate, val/test splits.
//! * [`synthetic`] — seeded synthetic profile generation.
//! * [`cascade`] — cascade simulation, deployment energy models, and the
//!   objective/constraint functionals.
//! * [`gp`] — Gaussian-process surrogates for objective and constraint.
//! * [`bo`] — the constrained Bayesian-optimization loop with threshold
//!   fine-tuning.
//! * [`baselines`] — exhaustive grid search, random search, and the
//!   threshold-only "static" design.
//! * [`pareto`] — non-dominated front extraction for (energy, error) clouds.
//!
//! With the default `parallel` feature, per-image evaluation, threshold
//! sweeps, and grid search fan out over rayon; disabling the feature yields a
//! sequential build with identical results.

pub mod baselines;
pub mod bo;
pub mod cascade;
pub mod error;
pub mod gp;
pub mod lattice;
pub mod numeric;
mod parallel;
pub mod pareto;
pub mod profile;
pub mod space;
pub mod synthetic;

pub use error::{Error, Result};
