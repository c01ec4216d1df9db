//! Stabilisation of redundant quantum state storage by repeated projection
//! onto the symmetric subspace of R copies.
//!
//! The crate provides, at desk scale:
//!
//! - [`tensor`]: dense state vectors and density operators over labelled
//!   multi-qudit spaces, with tensor products, partial traces, operator
//!   application and seeded measurement sampling.
//! - [`symspace`]: the symmetric subspace of R d-level systems — dimension,
//!   orthonormal basis, the permutation-average projector, and projection of
//!   pure states.
//! - [`circuit`]: the ancilla-controlled projection algorithm in operator
//!   form and its realization as a cascaded network of Fredkin gates with
//!   per-stage control preparation, verified against the exact projector.
//! - [`stabilize`]: random drift and decoherence models, periodic-projection
//!   experiments, watchdog curves, mixed-state symmetrisation and the
//!   large-R purification limit.
//! - [`experiment`]: declarative experiment configs, seeded runs and
//!   JSON/CSV reports, used by the `symstab` command line tool.

pub mod circuit;
pub mod error;
pub mod experiment;
pub mod numeric;
pub mod stabilize;
pub mod symspace;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
pub use numeric::{rng_from_seed, trial_rng, NumericPolicy, SimRng};
