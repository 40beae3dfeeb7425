//! Identification and learning of outcome classifiers from selectively
//! labeled data with a multi-valued decision-maker instrument.
//!
//! In a selective-labels setting, an outcome `Y` is observed only for units
//! a historical decision-maker chose to accept (`D = 1`), while the analyst
//! wants a classifier for the latent outcome `Y*` over the full population.
//! When units are quasi-randomly routed to decision-makers of varying
//! leniency, the decision-maker identity `Z` acts as an instrument. This
//! crate implements:
//!
//! * exact finite-world enumeration oracles for testing identification
//!   formulas ([`synthetic::DiscreteWorld`]);
//! * cross-fitted nuisance regression ([`nuisance`]) feeding two
//!   identification strategies ([`identify`]): a covariance-ratio point
//!   estimate of `E[Y*|X]`, and sharp per-row interval bounds on it;
//! * weight constructions turning either strategy into a cost-sensitive
//!   classification problem, solved by weighted surrogate-loss empirical
//!   risk minimization over linear score models ([`learner`]);
//! * a semi-synthetic experiment harness comparing the identification-aware
//!   learners against selected-sample and oracle baselines
//!   ([`evaluate`]).
//!
//! Interchangeable algorithm families — nuisance regressors, surrogate
//! losses, and learning methods — are each registered by name behind a
//! common trait and selected at runtime via configuration.

pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod identify;
pub mod learner;
pub mod nuisance;
pub mod regress;
pub mod seed;
pub mod synthetic;

pub use error::{Error, Result};
