//! Error models and stabilisation dynamics: random unitary drift with
//! periodic symmetric projection, watchdog curves, mixed-state
//! symmetrisation, the purification limit, and first-order decoherence laws.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::circuit::{build_symmetrisation_network, run_projection_via_network};
use crate::error::{Error, Result};
use crate::numeric::{trial_rng, NumericPolicy, SimRng};
use crate::symspace::SymProjector;
use crate::tensor::{C64, DensityOperator, HilbertLayout, StateVector};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Independent random drift of R stored qubits: each copy evolves under its
/// own static Hamiltonian with eigenvalues bounded by `epsilon`, and the
/// joint state is projected every `delta_t`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriftModel {
    pub copies: usize,
    /// Bound on the Hamiltonian eigenvalues (inverse time units).
    pub epsilon: f64,
    /// Interval between projections.
    pub delta_t: f64,
    pub seed: u64,
}

impl DriftModel {
    pub fn validate(&self) -> Result<()> {
        if self.copies == 0 {
            return Err(Error::InvalidParameter {
                field: "copies",
                reason: "need at least one copy".into(),
            });
        }
        if self.epsilon < 0.0 {
            return Err(Error::InvalidParameter {
                field: "epsilon",
                reason: "must be nonnegative".into(),
            });
        }
        if self.delta_t <= 0.0 {
            return Err(Error::InvalidParameter {
                field: "delta_t",
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }
}

/// How per-copy perturbations are drawn in the decoherence model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// Random direction on the traceless Hermitian ball; draws violating
    /// positivity are rejected and resampled.
    RandomTraceless,
    /// Diagonal population leak s * diag(-1, 1); never rejected for
    /// strength <= 1.
    Dephasing,
    /// Population leak with a coherence component s * [[-1, 1/2], [1/2, 1]];
    /// never rejected for strength <= 0.8.
    AmplitudeBias,
}

/// Independent environmental perturbation of R copies at first order:
/// rho_i = rho_0 + sigma_i with Hermitian traceless sigma_i.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecoherenceModel {
    pub copies: usize,
    pub strength: f64,
    pub seed: u64,
    pub generator_kind: GeneratorKind,
}

impl DecoherenceModel {
    /// Largest strength for which every generator kind keeps rho_0 + sigma
    /// positive without clipping.
    pub const MAX_STRENGTH: f64 = 0.8;

    pub fn validate(&self) -> Result<()> {
        if self.copies == 0 {
            return Err(Error::InvalidParameter {
                field: "copies",
                reason: "need at least one copy".into(),
            });
        }
        if !(0.0..=Self::MAX_STRENGTH).contains(&self.strength) {
            return Err(Error::InvalidParameter {
                field: "strength",
                reason: format!("must be in [0, {}]", Self::MAX_STRENGTH),
            });
        }
        Ok(())
    }
}

/// One recorded projection step.
///
/// `pre_*` quantities are taken after the drift and before the projection;
/// `post_*` after the projection. Fidelity is the joint overlap with the
/// reference |0...0>; purity is the mean single-qubit reduced purity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub step: usize,
    pub pre_error: f64,
    pub post_error: f64,
    pub accept_probability: f64,
    pub accepted: bool,
    pub purity_pre: f64,
    pub purity_post: f64,
    pub fidelity_pre: f64,
    pub fidelity_post: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub trial: usize,
    pub steps: Vec<TrajectoryStep>,
}

impl TrajectoryRecord {
    pub const CSV_HEADER: &'static str =
        "step,pre_err,post_err,accept_prob,accepted,purity_pre,purity_post,fidelity_pre,fidelity_post";

    /// CSV rows in the documented column order ('.' decimal, LF endings).
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for s in &self.steps {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                s.step,
                s.pre_error,
                s.post_error,
                s.accept_probability,
                u8::from(s.accepted),
                s.purity_pre,
                s.purity_post,
                s.fidelity_pre,
                s.fidelity_post,
            ));
        }
        out
    }
}

/// Draw a 2x2 Hermitian matrix with eigenvalues independently uniform on
/// [-epsilon, epsilon] and a Haar-random eigenbasis. The off-diagonal
/// element then obeys |c| <= |lambda_1| + |lambda_2| <= 2 epsilon.
pub fn sample_bounded_hamiltonian(epsilon: f64, rng: &mut SimRng) -> DMatrix<C64> {
    let l1 = epsilon * (2.0 * rng.random::<f64>() - 1.0);
    let l2 = epsilon * (2.0 * rng.random::<f64>() - 1.0);
    let u = haar_unitary_2(rng);
    let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![c(l1, 0.0), c(l2, 0.0)]));
    let h = &u * diag * u.adjoint();
    // symmetrize away rounding in the conjugation
    let adj = h.adjoint();
    (h + adj) * c(0.5, 0.0)
}

/// Haar-random 2x2 unitary: QR of a complex Ginibre matrix with the phase
/// convention fixed by the R diagonal.
fn haar_unitary_2(rng: &mut SimRng) -> DMatrix<C64> {
    let mut entries = Vec::with_capacity(4);
    for _ in 0..4 {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        entries.push(c(re / 2.0_f64.sqrt(), im / 2.0_f64.sqrt()));
    }
    let g = DMatrix::from_vec(2, 2, entries);
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    let mut phase = DMatrix::from_element(2, 2, c(0.0, 0.0));
    for i in 0..2 {
        let rii = r[(i, i)];
        phase[(i, i)] = if rii.norm() > 0.0 {
            rii / rii.norm()
        } else {
            c(1.0, 0.0)
        };
    }
    q * phase
}

/// Exact exp(i H t) for a 2x2 Hermitian H, via the closed form for
/// H = mu I + nu (unit traceless part).
pub fn exp_i_hermitian_2x2(h: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
    let a = h[(0, 0)].re;
    let b = h[(1, 1)].re;
    let off = h[(1, 0)];
    let mu = 0.5 * (a + b);
    let delta = 0.5 * (a - b);
    let nu = (delta * delta + off.norm_sqr()).sqrt();

    let phase = C64::from_polar(1.0, mu * t);
    let cos = (nu * t).cos();
    // sin(nu t)/nu, continuous at nu = 0
    let sinc = if nu.abs() < 1e-300 { t } else { (nu * t).sin() / nu };

    let i = c(0.0, 1.0);
    let mut m = DMatrix::from_element(2, 2, c(0.0, 0.0));
    m[(0, 0)] = phase * (c(cos, 0.0) + i * c(sinc * delta, 0.0));
    m[(1, 1)] = phase * (c(cos, 0.0) - i * c(sinc * delta, 0.0));
    m[(0, 1)] = phase * i * off.conj() * c(sinc, 0.0);
    m[(1, 0)] = phase * i * off * c(sinc, 0.0);
    m
}

/// Evolve copy j of the joint state under exp(i H_j delta_t), exactly.
pub fn drift_step(
    state: &StateVector,
    hamiltonians: &[DMatrix<C64>],
    delta_t: f64,
) -> Result<StateVector> {
    let labels: Vec<String> = state.layout().labels().map(str::to_string).collect();
    if hamiltonians.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: hamiltonians.len(),
        });
    }
    let mut current = state.clone();
    for (label, h) in labels.iter().zip(hamiltonians) {
        let u = exp_i_hermitian_2x2(h, delta_t);
        current = current.apply_unitary(&u, &[label])?;
    }
    Ok(current)
}

/// Mean over qubits of the Born probability of |1>, i.e. the per-qubit error
/// probability against the reference |0...0>.
pub fn unprotected_error_probability(state: &StateVector) -> Result<f64> {
    let labels: Vec<String> = state.layout().labels().map(str::to_string).collect();
    let mut total = 0.0;
    for label in &labels {
        let marginal = state.marginal_probabilities(label)?;
        if marginal.len() != 2 {
            return Err(Error::InvalidState(
                "error probability is defined for qubit registers".into(),
            ));
        }
        total += marginal[1];
    }
    Ok(total / labels.len() as f64)
}

/// |<0...0|psi>|^2.
fn reference_fidelity(state: &StateVector) -> f64 {
    state.amplitudes()[0].norm_sqr()
}

/// Mean single-qubit reduced purity of a pure joint state.
fn mean_reduced_purity(state: &StateVector) -> Result<f64> {
    let rho = DensityOperator::from_pure(state);
    let labels: Vec<String> = state.layout().labels().map(str::to_string).collect();
    let mut total = 0.0;
    for label in &labels {
        total += rho.partial_trace(&[label])?.purity();
    }
    Ok(total / labels.len() as f64)
}

/// Options for the pure-drift experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PureStabilisationOptions {
    /// Keep evolving the orthogonal branch after a failed projection instead
    /// of aborting the trial (exploratory; default aborts).
    pub continue_on_failure: bool,
    /// How many trials record a full trajectory.
    pub recorded_trials: usize,
    /// Project through the Fredkin network instead of the exact projector.
    pub use_network_path: bool,
}

impl Default for PureStabilisationOptions {
    fn default() -> Self {
        Self {
            continue_on_failure: false,
            recorded_trials: 1,
            use_network_path: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PureStabilisationReport {
    pub copies: usize,
    pub epsilon: f64,
    pub delta_t: f64,
    pub steps: usize,
    pub trials: usize,
    pub surviving_trials: usize,
    pub aborted_trials: usize,
    /// Every trial hit a failed projection; reported, not raised.
    pub all_trials_aborted: bool,
    pub mean_accept_probability: f64,
    /// Mean final per-qubit error with periodic projection, conditioned on
    /// every projection accepting.
    pub mean_protected_error: f64,
    /// Mean final per-qubit error after the same elapsed time with the same
    /// Hamiltonians and no projection.
    pub mean_unprotected_error: f64,
    /// unprotected / protected; absent when the protected error vanishes.
    pub suppression_ratio: Option<f64>,
    pub trajectories: Vec<TrajectoryRecord>,
}

/// Alternate drift and symmetric projection for `steps` steps on each of
/// `trials` seeded trials, and compare against free drift over the same
/// elapsed time.
pub fn run_pure_stabilisation_experiment(
    model: &DriftModel,
    steps: usize,
    trials: usize,
    options: &PureStabilisationOptions,
) -> Result<PureStabilisationReport> {
    model.validate()?;
    if steps == 0 || trials == 0 {
        return Err(Error::InvalidParameter {
            field: "steps/trials",
            reason: "must be positive".into(),
        });
    }
    let copies = model.copies;
    let projector = SymProjector::build(copies, 2)?;
    let network = if options.use_network_path {
        Some(build_symmetrisation_network(copies)?)
    } else {
        None
    };
    let layout = HilbertLayout::qubits("q", copies);

    let mut surviving = 0usize;
    let mut aborted = 0usize;
    let mut accept_sum = 0.0;
    let mut accept_count = 0usize;
    let mut protected_sum = 0.0;
    let mut unprotected_sum = 0.0;
    let mut trajectories = Vec::new();

    for trial in 0..trials {
        let mut rng = trial_rng(model.seed, trial as u64);
        let hamiltonians: Vec<DMatrix<C64>> = (0..copies)
            .map(|_| sample_bounded_hamiltonian(model.epsilon, &mut rng))
            .collect();

        let record = options.recorded_trials > trial;
        let mut trajectory = TrajectoryRecord {
            trial,
            steps: Vec::new(),
        };
        let mut state = StateVector::zero_state(layout.clone());
        let mut trial_survived = true;

        for step in 0..steps {
            state = drift_step(&state, &hamiltonians, model.delta_t)?;
            let pre_error = unprotected_error_probability(&state)?;
            let (pre_fid, pre_pur) = if record {
                (reference_fidelity(&state), mean_reduced_purity(&state)?)
            } else {
                (0.0, 0.0)
            };

            let (accept_probability, accepted, next_state) = match &network {
                Some(net) => {
                    let outcome = run_projection_via_network(net, &state, &mut rng, true)?;
                    (
                        outcome.exact_accept_probability,
                        outcome.accepted,
                        outcome.post_state,
                    )
                }
                None => {
                    let projection = projector.project_pure(&state)?;
                    let p = projection.success_probability;
                    let accepted = rng.random::<f64>() < p;
                    let next = if accepted {
                        projection.projected
                    } else {
                        // orthogonal branch (1 - S) psi, renormalized
                        let failed = state.amplitudes()
                            - projection
                                .projected
                                .as_ref()
                                .map(|proj| proj.amplitudes() * c(p.sqrt(), 0.0))
                                .unwrap_or_else(|| state.amplitudes() * c(0.0, 0.0));
                        StateVector::unnormalized(layout.clone(), failed)
                            .and_then(|s| s.normalize())
                            .ok()
                    };
                    (p, accepted, next)
                }
            };

            accept_sum += accept_probability;
            accept_count += 1;

            if !accepted && !options.continue_on_failure {
                trial_survived = false;
                if record {
                    trajectory.steps.push(TrajectoryStep {
                        step,
                        pre_error,
                        post_error: f64::NAN,
                        accept_probability,
                        accepted,
                        purity_pre: pre_pur,
                        purity_post: f64::NAN,
                        fidelity_pre: pre_fid,
                        fidelity_post: f64::NAN,
                    });
                }
                break;
            }

            state = next_state.ok_or_else(|| {
                Error::InvalidState("projection produced no usable branch".into())
            })?;
            let post_error = unprotected_error_probability(&state)?;
            if record {
                trajectory.steps.push(TrajectoryStep {
                    step,
                    pre_error,
                    post_error,
                    accept_probability,
                    accepted,
                    purity_pre: pre_pur,
                    purity_post: mean_reduced_purity(&state)?,
                    fidelity_pre: pre_fid,
                    fidelity_post: reference_fidelity(&state),
                });
            }
        }

        if trial_survived {
            surviving += 1;
            protected_sum += unprotected_error_probability(&state)?;
            // Free drift over the same elapsed time with the same draws.
            let free = drift_step(
                &StateVector::zero_state(layout.clone()),
                &hamiltonians,
                model.delta_t * steps as f64,
            )?;
            unprotected_sum += unprotected_error_probability(&free)?;
        } else {
            aborted += 1;
        }
        if record {
            trajectories.push(trajectory);
        }
    }

    let mean_protected = if surviving > 0 {
        protected_sum / surviving as f64
    } else {
        0.0
    };
    let mean_unprotected = if surviving > 0 {
        unprotected_sum / surviving as f64
    } else {
        0.0
    };
    let suppression_ratio = if mean_protected > 0.0 {
        Some(mean_unprotected / mean_protected)
    } else {
        None
    };

    Ok(PureStabilisationReport {
        copies,
        epsilon: model.epsilon,
        delta_t: model.delta_t,
        steps,
        trials,
        surviving_trials: surviving,
        aborted_trials: aborted,
        all_trials_aborted: surviving == 0,
        mean_accept_probability: if accept_count > 0 {
            accept_sum / accept_count as f64
        } else {
            1.0
        },
        mean_protected_error: mean_protected,
        mean_unprotected_error: mean_unprotected,
        suppression_ratio,
        trajectories,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WatchdogReport {
    pub copies: usize,
    pub epsilon: f64,
    pub trials: usize,
    /// Projection counts per unit time interval.
    pub rates: Vec<usize>,
    /// Mean probability that all n projections in the unit interval accept.
    pub mean_cumulative_accept: Vec<f64>,
    /// Standard error of each mean.
    pub std_err_cumulative: Vec<f64>,
    /// delta_t at which the single-step failure coefficient was fitted.
    pub reference_delta_t: f64,
    /// k in (failure probability per step) = k * delta_t^2.
    pub fitted_k: f64,
}

/// For each projection rate n, estimate the probability that all n
/// projections in one unit time interval accept, and fit the single-step
/// failure coefficient k from failure = k * delta_t^2 at a small reference
/// delta_t.
pub fn watchdog_success_curve(
    model: &DriftModel,
    rates: &[usize],
    trials: usize,
) -> Result<WatchdogReport> {
    model.validate()?;
    if rates.is_empty() || rates.contains(&0) || trials == 0 {
        return Err(Error::InvalidParameter {
            field: "rates/trials",
            reason: "need positive rates and trials".into(),
        });
    }
    let copies = model.copies;
    let projector = SymProjector::build(copies, 2)?;
    let layout = HilbertLayout::qubits("q", copies);
    let reference_delta_t = 0.05;

    let mut cumulative_samples: Vec<Vec<f64>> = vec![Vec::with_capacity(trials); rates.len()];
    let mut k_sum = 0.0;

    for trial in 0..trials {
        let mut rng = trial_rng(model.seed, trial as u64);
        let hamiltonians: Vec<DMatrix<C64>> = (0..copies)
            .map(|_| sample_bounded_hamiltonian(model.epsilon, &mut rng))
            .collect();

        // The same Hamiltonian draw serves every rate (common random
        // numbers), so the curve across n is directly comparable.
        for (slot, &n) in rates.iter().enumerate() {
            let delta_t = 1.0 / n as f64;
            let mut state = StateVector::zero_state(layout.clone());
            let mut cumulative = 1.0;
            for _ in 0..n {
                state = drift_step(&state, &hamiltonians, delta_t)?;
                let projection = projector.project_pure(&state)?;
                cumulative *= projection.success_probability;
                state = match projection.projected {
                    Some(s) => s,
                    None => break,
                };
            }
            cumulative_samples[slot].push(cumulative);
        }

        // single-step failure at the reference interval
        let drifted = drift_step(
            &StateVector::zero_state(layout.clone()),
            &hamiltonians,
            reference_delta_t,
        )?;
        let failure = 1.0 - projector.accept_probability(&drifted)?;
        k_sum += failure / (reference_delta_t * reference_delta_t);
    }

    let mut means = Vec::with_capacity(rates.len());
    let mut std_errs = Vec::with_capacity(rates.len());
    for samples in &cumulative_samples {
        let n = samples.len() as f64;
        let mean: f64 = samples.iter().sum::<f64>() / n;
        let var: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        means.push(mean);
        std_errs.push((var / n).sqrt());
    }

    Ok(WatchdogReport {
        copies,
        epsilon: model.epsilon,
        trials,
        rates: rates.to_vec(),
        mean_cumulative_accept: means,
        std_err_cumulative: std_errs,
        reference_delta_t,
        fitted_k: k_sum / trials as f64,
    })
}

/// Result of projecting a product of mixed copies onto the symmetric
/// subspace and reducing to a single copy.
#[derive(Debug, Clone)]
pub struct MixedSymmetrisation {
    /// Reduced single-copy state; absent when the accept probability is
    /// numerically zero.
    pub reduced: Option<DensityOperator>,
    /// Tr(S rho^(R) S).
    pub accept_probability: f64,
}

/// Form the product of the given single-copy states, apply S ... S, reduce
/// to one copy and renormalize. The reduced state is independent of which
/// copy is kept; this is asserted to 1e-10.
pub fn symmetrize_mixed(rhos: &[DensityOperator]) -> Result<MixedSymmetrisation> {
    if rhos.is_empty() {
        return Err(Error::InvalidParameter {
            field: "rhos",
            reason: "need at least one copy".into(),
        });
    }
    let local_dimension = rhos[0].layout().total_dimension();
    for rho in rhos {
        if rho.layout().len() != 1 || rho.layout().total_dimension() != local_dimension {
            return Err(Error::InvalidParameter {
                field: "rhos",
                reason: "every copy must be a single subsystem of equal dimension".into(),
            });
        }
    }
    let copies = rhos.len();
    let projector = SymProjector::build(copies, local_dimension)?;

    let mut joint = rhos[0].matrix().clone();
    for rho in &rhos[1..] {
        joint = joint.kronecker(rho.matrix());
    }
    let s = projector.matrix();
    let projected = s * joint * s;
    let accept_probability = projected.trace().re;
    if accept_probability < NumericPolicy::default().zero_norm_tol {
        return Ok(MixedSymmetrisation {
            reduced: None,
            accept_probability: 0.0,
        });
    }
    let normalized = projected.map(|x| x / accept_probability);
    let layout = HilbertLayout::new((1..=copies).map(|i| (format!("q{i}"), local_dimension)))?;
    let joint_state = DensityOperator::unnormalized(layout, normalized)?;

    let mut reduced: Option<DensityOperator> = None;
    for i in 1..=copies {
        let this = joint_state.partial_trace(&[&format!("q{i}")])?;
        if let Some(first) = &reduced {
            let diff = crate::tensor::max_abs_diff(first.matrix(), this.matrix());
            if diff > 1e-10 {
                return Err(Error::InvalidState(format!(
                    "reduced state depends on the kept copy (diff {diff:.3e})"
                )));
            }
        } else {
            reduced = Some(this);
        }
    }

    Ok(MixedSymmetrisation {
        reduced,
        accept_probability,
    })
}

/// The two-copy closed form: rho -> (rho + rho^2) / Tr(rho + rho^2).
/// Dual route to [`symmetrize_mixed`] at R = 2; the two must agree.
pub fn two_copy_closed_form(rho: &DensityOperator) -> Result<DensityOperator> {
    let m = rho.matrix();
    let numerator = m + m * m;
    let trace = numerator.trace().re;
    if trace.abs() < NumericPolicy::default().zero_norm_tol {
        return Err(Error::InvalidState("zero trace in closed form".into()));
    }
    DensityOperator::unnormalized(rho.layout().clone(), numerator.map(|x| x / trace))
}

/// One point of the purification curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PurificationPoint {
    pub copies: usize,
    pub purity: f64,
    /// Overlap with the dominant eigenstate of the input (or with the
    /// dominant eigenspace projector when the spectrum is degenerate).
    pub dominant_overlap: f64,
    pub accept_probability: f64,
    pub degenerate: bool,
}

/// Symmetrize R identical copies of `rho` for each listed R and track the
/// reduced purity and the overlap with the dominant eigenstate.
pub fn purification_limit(
    rho: &DensityOperator,
    r_values: &[usize],
) -> Result<Vec<PurificationPoint>> {
    if rho.layout().len() != 1 {
        return Err(Error::InvalidParameter {
            field: "rho",
            reason: "purification curve expects a single-subsystem state".into(),
        });
    }
    let (eigenvalues, eigenvectors) = rho.eigen();
    let dim = eigenvalues.len();
    let lambda_max = eigenvalues[dim - 1];
    // All eigenvectors within tolerance of the top eigenvalue span the
    // dominant eigenspace.
    let degeneracy_tol = 1e-10;
    let dominant: Vec<usize> = (0..dim)
        .filter(|&i| lambda_max - eigenvalues[i] < degeneracy_tol)
        .collect();
    let degenerate = dominant.len() > 1;
    let mut dominant_projector = DMatrix::from_element(dim, dim, c(0.0, 0.0));
    for &i in &dominant {
        let v = eigenvectors.column(i);
        dominant_projector += v * v.adjoint();
    }

    let mut points = Vec::with_capacity(r_values.len());
    for &copies in r_values {
        let copies_vec: Vec<DensityOperator> = (0..copies)
            .map(|i| {
                DensityOperator::unnormalized(
                    HilbertLayout::single(format!("q{}", i + 1), dim)
                        .expect("single label is unique"),
                    rho.matrix().clone(),
                )
                .expect("same shape as input")
            })
            .collect();
        let result = symmetrize_mixed(&copies_vec)?;
        let reduced = result.reduced.ok_or_else(|| {
            Error::InvalidState("symmetrisation of identical copies cannot fail".into())
        })?;
        let overlap = (&dominant_projector * reduced.matrix()).trace().re;
        points.push(PurificationPoint {
            copies,
            purity: reduced.purity(),
            dominant_overlap: overlap,
            accept_probability: result.accept_probability,
            degenerate,
        });
    }
    Ok(points)
}

/// The four quantities compared against their first-order laws.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FidelityPurityQuad {
    pub pre_fidelity: f64,
    pub post_fidelity: f64,
    pub pre_purity: f64,
    pub post_purity: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecoherenceReport {
    pub copies: usize,
    pub strength: f64,
    pub generator_kind: GeneratorKind,
    pub seed: u64,
    /// Tr(rho_0 sigma_tilde), the first-order control parameter (negative).
    pub trace_rho0_sigma: f64,
    pub accept_probability: f64,
    pub measured: FidelityPurityQuad,
    pub first_order: FidelityPurityQuad,
    pub absolute_deviation: FidelityPurityQuad,
    /// Perturbation draws rejected for breaking positivity.
    pub resampled_perturbations: usize,
}

/// Draw one perturbation; the returned matrix is sigma = strength * D with
/// the direction D drawn independently of `strength`, so halving the
/// strength with the same seed halves sigma exactly (for kinds that never
/// reject).
fn sample_perturbation(kind: GeneratorKind, strength: f64, rng: &mut SimRng) -> DMatrix<C64> {
    match kind {
        GeneratorKind::Dephasing => {
            let s = strength * rng.random::<f64>();
            DMatrix::from_row_slice(2, 2, &[c(-s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(s, 0.0)])
        }
        GeneratorKind::AmplitudeBias => {
            let s = strength * rng.random::<f64>();
            DMatrix::from_row_slice(
                2,
                2,
                &[c(-s, 0.0), c(0.5 * s, 0.0), c(0.5 * s, 0.0), c(s, 0.0)],
            )
        }
        GeneratorKind::RandomTraceless => {
            let a = 2.0 * rng.random::<f64>() - 1.0;
            let re = 2.0 * rng.random::<f64>() - 1.0;
            let im = 2.0 * rng.random::<f64>() - 1.0;
            DMatrix::from_row_slice(
                2,
                2,
                &[
                    c(strength * a, 0.0),
                    c(strength * re, -strength * im),
                    c(strength * re, strength * im),
                    c(-strength * a, 0.0),
                ],
            )
        }
    }
}

/// Sample perturbed copies, symmetrize exactly, and compare the measured
/// fidelity and purity against the four first-order laws.
pub fn run_decoherence_experiment(model: &DecoherenceModel) -> Result<DecoherenceReport> {
    model.validate()?;
    let copies = model.copies;
    let layout = HilbertLayout::single("q1", 2)?;
    let rho0 = DensityOperator::new(
        layout.clone(),
        DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]),
    )?;

    let mut rng = trial_rng(model.seed, 0);
    let mut resampled = 0usize;
    let mut perturbed = Vec::with_capacity(copies);
    let mut sigma_sum = DMatrix::from_element(2, 2, c(0.0, 0.0));
    const MAX_RESAMPLES: usize = 10_000;

    for i in 0..copies {
        let sigma = loop {
            let candidate = sample_perturbation(model.generator_kind, model.strength, &mut rng);
            let trial_matrix = rho0.matrix() + &candidate;
            let min_eig = DensityOperator::unnormalized(
                HilbertLayout::single(format!("q{}", i + 1), 2)?,
                trial_matrix.clone(),
            )?
            .min_eigenvalue();
            if min_eig >= -1e-12 {
                break candidate;
            }
            resampled += 1;
            if resampled > MAX_RESAMPLES {
                return Err(Error::InvalidParameter {
                    field: "strength",
                    reason: "perturbation sampling keeps violating positivity".into(),
                });
            }
        };
        sigma_sum += &sigma;
        let rho_i = DensityOperator::unnormalized(
            HilbertLayout::single(format!("q{}", i + 1), 2)?,
            rho0.matrix() + &sigma,
        )?;
        perturbed.push(rho_i);
    }

    let sigma_tilde = sigma_sum.map(|x| x / copies as f64);
    let t = sigma_tilde[(0, 0)].re; // Tr(rho_0 sigma_tilde)

    let result = symmetrize_mixed(&perturbed)?;
    let reduced = result
        .reduced
        .ok_or_else(|| Error::InvalidState("symmetrisation rejected everything".into()))?;

    let measured = FidelityPurityQuad {
        pre_fidelity: perturbed
            .iter()
            .map(|r| r.matrix()[(0, 0)].re)
            .sum::<f64>()
            / copies as f64,
        post_fidelity: reduced.matrix()[(0, 0)].re,
        pre_purity: perturbed.iter().map(DensityOperator::purity).sum::<f64>() / copies as f64,
        post_purity: reduced.purity(),
    };
    let r = copies as f64;
    let first_order = FidelityPurityQuad {
        pre_fidelity: 1.0 + t,
        post_fidelity: 1.0 + t / r,
        pre_purity: 1.0 + 2.0 * t,
        post_purity: 1.0 + 2.0 * t / r,
    };
    let absolute_deviation = FidelityPurityQuad {
        pre_fidelity: (measured.pre_fidelity - first_order.pre_fidelity).abs(),
        post_fidelity: (measured.post_fidelity - first_order.post_fidelity).abs(),
        pre_purity: (measured.pre_purity - first_order.pre_purity).abs(),
        post_purity: (measured.post_purity - first_order.post_purity).abs(),
    };

    Ok(DecoherenceReport {
        copies,
        strength: model.strength,
        generator_kind: model.generator_kind,
        seed: model.seed,
        trace_rho0_sigma: t,
        accept_probability: result.accept_probability,
        measured,
        first_order,
        absolute_deviation,
        resampled_perturbations: resampled,
    })
}

/// Least-squares line fit returning (slope, intercept, R^2).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mean_x: f64 = xs.iter().sum::<f64>() / n;
    let mean_y: f64 = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, intercept, r_squared)
}
