//! Numeric tolerance policy and the seeded random number generator used by
//! every stochastic operation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Tolerances for the algebraic identities enforced across the crate.
///
/// One record with one knob per class of check, so that every module agrees
/// on what "equal" means for floating point data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericPolicy {
    /// Tolerance for exact algebraic identities: norms, traces, Hermiticity,
    /// unitarity.
    pub algebraic_tol: f64,
    /// Tolerance for positive semidefiniteness (smallest admissible
    /// eigenvalue is `-psd_tol`). Also used for projector idempotence.
    pub psd_tol: f64,
    /// Norm below which a projected state is treated as zero.
    pub zero_norm_tol: f64,
}

impl Default for NumericPolicy {
    fn default() -> Self {
        Self {
            algebraic_tol: 1e-12,
            psd_tol: 1e-10,
            zero_norm_tol: 1e-12,
        }
    }
}

impl NumericPolicy {
    pub const fn strict() -> Self {
        Self {
            algebraic_tol: 1e-12,
            psd_tol: 1e-10,
            zero_norm_tol: 1e-12,
        }
    }
}

/// The crate-wide random number generator. ChaCha8 is seedable, portable
/// across platforms, and supports independent streams.
pub type SimRng = ChaCha8Rng;

/// Build the master generator for a run.
pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Seed-splitting rule for Monte Carlo trials: the trial index selects an
/// independent ChaCha stream of the master seed. Trials may therefore run in
/// any order (or in parallel) without changing their draws.
pub fn trial_rng(seed: u64, trial: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}
