//! Dense complex linear algebra over small labelled multi-qudit Hilbert
//! spaces: state vectors, density operators, tensor products, partial
//! traces, operator application and seeded measurement sampling.
//!
//! Index convention (fixed globally): the first listed subsystem is the most
//! significant digit of the composite basis index, i.e. big-endian mixed
//! radix. For two qubits `|01>` has index 1 and `|10>` has index 2.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::{NumericPolicy, SimRng};

pub type C64 = Complex64;

/// One labelled subsystem of a composite Hilbert space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subsystem {
    pub label: String,
    pub dimension: usize,
}

/// An ordered list of labelled subsystems. Owns the mixed-radix index
/// arithmetic for the composite space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HilbertLayout {
    subsystems: Vec<Subsystem>,
}

impl HilbertLayout {
    pub fn new<I, S>(subsystems: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, usize)>,
        S: Into<String>,
    {
        let subsystems: Vec<Subsystem> = subsystems
            .into_iter()
            .map(|(label, dimension)| Subsystem {
                label: label.into(),
                dimension,
            })
            .collect();
        for sub in &subsystems {
            if sub.dimension == 0 {
                return Err(Error::InvalidParameter {
                    field: "dimension",
                    reason: format!("subsystem `{}` has dimension 0", sub.label),
                });
            }
        }
        for (i, a) in subsystems.iter().enumerate() {
            if subsystems[..i].iter().any(|b| b.label == a.label) {
                return Err(Error::LabelCollision(a.label.clone()));
            }
        }
        Ok(Self { subsystems })
    }

    /// A single subsystem of the given dimension.
    pub fn single(label: impl Into<String>, dimension: usize) -> Result<Self> {
        Self::new([(label.into(), dimension)])
    }

    /// `n` qubits labelled `{prefix}1 .. {prefix}n`.
    pub fn qubits(prefix: &str, n: usize) -> Self {
        Self::new((1..=n).map(|i| (format!("{prefix}{i}"), 2)))
            .expect("generated labels are unique")
    }

    pub fn subsystems(&self) -> &[Subsystem] {
        &self.subsystems
    }

    pub fn len(&self) -> usize {
        self.subsystems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsystems.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.subsystems.iter().map(|s| s.label.as_str())
    }

    pub fn total_dimension(&self) -> usize {
        self.subsystems.iter().map(|s| s.dimension).product()
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.subsystems
            .iter()
            .position(|s| s.label == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn dimension_of(&self, label: &str) -> Result<usize> {
        Ok(self.subsystems[self.position(label)?].dimension)
    }

    /// Stride of each subsystem in the big-endian composite index.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1usize; self.subsystems.len()];
        for i in (0..self.subsystems.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.subsystems[i + 1].dimension;
        }
        strides
    }

    /// Digits of a composite index, most significant subsystem first.
    pub fn decompose(&self, mut index: usize) -> Vec<usize> {
        let strides = self.strides();
        let mut digits = Vec::with_capacity(self.subsystems.len());
        for stride in strides {
            digits.push(index / stride);
            index %= stride;
        }
        digits
    }

    /// Composite index from per-subsystem digits.
    pub fn compose(&self, digits: &[usize]) -> usize {
        self.strides()
            .iter()
            .zip(digits)
            .map(|(s, d)| s * d)
            .sum()
    }

    /// Concatenation of two layouts; fails on a label collision.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        for label in other.labels() {
            if self.subsystems.iter().any(|s| s.label == label) {
                return Err(Error::LabelCollision(label.to_string()));
            }
        }
        let mut subsystems = self.subsystems.clone();
        subsystems.extend(other.subsystems.iter().cloned());
        Ok(Self { subsystems })
    }
}

/// Precomputed offsets for addressing a subset of subsystems inside the flat
/// composite vector: `target_offsets[a] + rest_offsets[b]` enumerates every
/// composite index, with `a` the big-endian target combination.
struct SubsetIndexer {
    target_offsets: Vec<usize>,
    rest_offsets: Vec<usize>,
}

impl SubsetIndexer {
    fn new(layout: &HilbertLayout, positions: &[usize]) -> Self {
        let strides = layout.strides();
        let dims: Vec<usize> = layout.subsystems().iter().map(|s| s.dimension).collect();

        let target_offsets = enumerate_offsets(
            &positions.iter().map(|&p| dims[p]).collect::<Vec<_>>(),
            &positions.iter().map(|&p| strides[p]).collect::<Vec<_>>(),
        );
        let rest_positions: Vec<usize> =
            (0..dims.len()).filter(|p| !positions.contains(p)).collect();
        let rest_offsets = enumerate_offsets(
            &rest_positions.iter().map(|&p| dims[p]).collect::<Vec<_>>(),
            &rest_positions.iter().map(|&p| strides[p]).collect::<Vec<_>>(),
        );
        Self {
            target_offsets,
            rest_offsets,
        }
    }
}

/// All Σ digit_i · stride_i offsets, digits running big-endian over `dims`.
fn enumerate_offsets(dims: &[usize], strides: &[usize]) -> Vec<usize> {
    let mut offsets = vec![0usize];
    for (&dim, &stride) in dims.iter().zip(strides) {
        let mut next = Vec::with_capacity(offsets.len() * dim);
        for &base in &offsets {
            for digit in 0..dim {
                next.push(base + digit * stride);
            }
        }
        offsets = next;
    }
    offsets
}

/// Resolve target labels to positions, rejecting duplicates.
fn resolve_positions(layout: &HilbertLayout, targets: &[&str]) -> Result<Vec<usize>> {
    let mut positions = Vec::with_capacity(targets.len());
    for t in targets {
        let p = layout.position(t)?;
        if positions.contains(&p) {
            return Err(Error::LabelCollision((*t).to_string()));
        }
        positions.push(p);
    }
    Ok(positions)
}

/// Apply `op` (acting on the listed positions, identity elsewhere) to a flat
/// amplitude vector. O(N·E) for an E-dimensional operator.
fn apply_on_subset(
    op: &DMatrix<C64>,
    indexer: &SubsetIndexer,
    amps: &DVector<C64>,
) -> DVector<C64> {
    let e = indexer.target_offsets.len();
    let mut out = DVector::from_element(amps.len(), C64::new(0.0, 0.0));
    let mut scratch = vec![C64::new(0.0, 0.0); e];
    for &roff in &indexer.rest_offsets {
        for (a, &toff) in indexer.target_offsets.iter().enumerate() {
            scratch[a] = amps[roff + toff];
        }
        for (a_out, &toff) in indexer.target_offsets.iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for (a_in, value) in scratch.iter().enumerate() {
                acc += op[(a_out, a_in)] * value;
            }
            out[roff + toff] = acc;
        }
    }
    out
}

fn check_operator_shape(op: &DMatrix<C64>, layout: &HilbertLayout, positions: &[usize]) -> Result<()> {
    let expected: usize = positions
        .iter()
        .map(|&p| layout.subsystems()[p].dimension)
        .product();
    if op.nrows() != expected || op.ncols() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: op.nrows(),
        });
    }
    Ok(())
}

/// Max |U†U − I| entry, used for the unitarity pre-check.
pub fn unitarity_deviation(op: &DMatrix<C64>) -> f64 {
    let gram = op.adjoint() * op;
    let n = gram.nrows();
    let mut max_dev: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let expected = if i == j { 1.0 } else { 0.0 };
            max_dev = max_dev.max((gram[(i, j)] - C64::new(expected, 0.0)).norm());
        }
    }
    max_dev
}

fn ensure_unitary(op: &DMatrix<C64>, policy: &NumericPolicy) -> Result<()> {
    let dev = unitarity_deviation(op);
    let tol = policy.algebraic_tol * op.nrows() as f64;
    if dev > tol {
        return Err(Error::NonUnitary { max_deviation: dev });
    }
    Ok(())
}

/// A complex amplitude vector over a labelled composite space.
///
/// Normalized to unit Euclidean norm unless produced by an operation that is
/// documented to return an unnormalized vector.
#[derive(Debug, Clone)]
pub struct StateVector {
    layout: HilbertLayout,
    amplitudes: DVector<C64>,
}

impl StateVector {
    /// A normalized state; fails if the amplitude count or the norm is off.
    pub fn new(layout: HilbertLayout, amplitudes: DVector<C64>) -> Result<Self> {
        Self::with_policy(layout, amplitudes, &NumericPolicy::default())
    }

    pub fn with_policy(
        layout: HilbertLayout,
        amplitudes: DVector<C64>,
        policy: &NumericPolicy,
    ) -> Result<Self> {
        let state = Self::unnormalized(layout, amplitudes)?;
        let norm = state.norm();
        if (norm - 1.0).abs() > policy.algebraic_tol {
            return Err(Error::InvalidState(format!(
                "state norm is {norm}, expected 1"
            )));
        }
        Ok(state)
    }

    /// Skips the norm check; used by operations that explicitly produce
    /// unnormalized intermediates.
    pub fn unnormalized(layout: HilbertLayout, amplitudes: DVector<C64>) -> Result<Self> {
        if amplitudes.len() != layout.total_dimension() {
            return Err(Error::DimensionMismatch {
                expected: layout.total_dimension(),
                got: amplitudes.len(),
            });
        }
        Ok(Self { layout, amplitudes })
    }

    /// The computational basis state with the given composite index.
    pub fn basis_state(layout: HilbertLayout, index: usize) -> Result<Self> {
        let dim = layout.total_dimension();
        if index >= dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: index,
            });
        }
        let mut amps = DVector::from_element(dim, C64::new(0.0, 0.0));
        amps[index] = C64::new(1.0, 0.0);
        Ok(Self {
            layout,
            amplitudes: amps,
        })
    }

    /// `|0...0>` on the given layout.
    pub fn zero_state(layout: HilbertLayout) -> Self {
        Self::basis_state(layout, 0).expect("index 0 always valid")
    }

    /// Basis state from per-subsystem digits.
    pub fn from_digits(layout: HilbertLayout, digits: &[usize]) -> Result<Self> {
        if digits.len() != layout.len() {
            return Err(Error::DimensionMismatch {
                expected: layout.len(),
                got: digits.len(),
            });
        }
        for (d, s) in digits.iter().zip(layout.subsystems()) {
            if *d >= s.dimension {
                return Err(Error::InvalidParameter {
                    field: "digits",
                    reason: format!("digit {} out of range for `{}`", d, s.label),
                });
            }
        }
        let index = layout.compose(digits);
        Self::basis_state(layout, index)
    }

    pub fn layout(&self) -> &HilbertLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    pub fn normalize(&self) -> Result<Self> {
        let norm = self.norm();
        if norm < NumericPolicy::default().zero_norm_tol {
            return Err(Error::InvalidState("cannot normalize zero vector".into()));
        }
        Ok(Self {
            layout: self.layout.clone(),
            amplitudes: self.amplitudes.map(|a| a / norm),
        })
    }

    /// Kronecker product, keeping the big-endian convention: `self` supplies
    /// the most significant digits of the combined index.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        let layout = self.layout.concat(&other.layout)?;
        Ok(Self {
            layout,
            amplitudes: self.amplitudes.kronecker(&other.amplitudes),
        })
    }

    /// Apply a unitary acting on the listed subsystems (in listed order, the
    /// matrix's own big-endian layout) and the identity elsewhere.
    pub fn apply_unitary(&self, op: &DMatrix<C64>, targets: &[&str]) -> Result<Self> {
        self.apply_unitary_with_policy(op, targets, &NumericPolicy::default())
    }

    pub fn apply_unitary_with_policy(
        &self,
        op: &DMatrix<C64>,
        targets: &[&str],
        policy: &NumericPolicy,
    ) -> Result<Self> {
        ensure_unitary(op, policy)?;
        self.apply_general(op, targets)
    }

    /// Apply an arbitrary operator; the result may be unnormalized.
    pub fn apply_general(&self, op: &DMatrix<C64>, targets: &[&str]) -> Result<Self> {
        let positions = resolve_positions(&self.layout, targets)?;
        check_operator_shape(op, &self.layout, &positions)?;
        let indexer = SubsetIndexer::new(&self.layout, &positions);
        Ok(Self {
            layout: self.layout.clone(),
            amplitudes: apply_on_subset(op, &indexer, &self.amplitudes),
        })
    }

    /// Born probabilities of the joint outcomes of the listed subsystems,
    /// indexed big-endian in listed order.
    pub fn outcome_probabilities(&self, targets: &[&str]) -> Result<Vec<f64>> {
        let positions = resolve_positions(&self.layout, targets)?;
        let indexer = SubsetIndexer::new(&self.layout, &positions);
        let mut probs = vec![0.0; indexer.target_offsets.len()];
        for (a, &toff) in indexer.target_offsets.iter().enumerate() {
            for &roff in &indexer.rest_offsets {
                probs[a] += self.amplitudes[roff + toff].norm_sqr();
            }
        }
        Ok(probs)
    }

    /// Born probability of one specific joint outcome of the listed
    /// subsystems.
    pub fn outcome_probability(&self, targets: &[&str], digits: &[usize]) -> Result<f64> {
        let positions = resolve_positions(&self.layout, targets)?;
        if digits.len() != positions.len() {
            return Err(Error::DimensionMismatch {
                expected: positions.len(),
                got: digits.len(),
            });
        }
        let strides = self.layout.strides();
        let mut toff = 0usize;
        for (&p, &d) in positions.iter().zip(digits) {
            let dim = self.layout.subsystems()[p].dimension;
            if d >= dim {
                return Err(Error::InvalidParameter {
                    field: "digits",
                    reason: format!("digit {d} out of range for dimension {dim}"),
                });
            }
            toff += strides[p] * d;
        }
        let indexer = SubsetIndexer::new(&self.layout, &positions);
        Ok(indexer
            .rest_offsets
            .iter()
            .map(|&roff| self.amplitudes[roff + toff].norm_sqr())
            .sum())
    }

    /// Measure the listed subsystems in their natural basis. Sampling is
    /// deterministic given the generator state; the collapsed state is
    /// renormalized and the exact Born probability of the sampled outcome is
    /// returned. A zero-probability branch is never returned.
    pub fn measure_subsystems(
        &self,
        targets: &[&str],
        rng: &mut SimRng,
    ) -> Result<MeasurementRecord> {
        let positions = resolve_positions(&self.layout, targets)?;
        let indexer = SubsetIndexer::new(&self.layout, &positions);
        let e = indexer.target_offsets.len();
        let mut probs = vec![0.0; e];
        for (a, &toff) in indexer.target_offsets.iter().enumerate() {
            for &roff in &indexer.rest_offsets {
                probs[a] += self.amplitudes[roff + toff].norm_sqr();
            }
        }

        let u: f64 = rng.random();
        let mut cumulative = 0.0;
        let mut picked = None;
        for (a, &p) in probs.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            cumulative += p;
            if u < cumulative {
                picked = Some(a);
                break;
            }
        }
        // Guard against cumulative < 1 from rounding: fall back to the last
        // outcome with nonzero probability.
        let picked = match picked {
            Some(a) => a,
            None => probs
                .iter()
                .rposition(|&p| p > 0.0)
                .ok_or_else(|| Error::InvalidState("all outcomes have zero probability".into()))?,
        };

        let probability = probs[picked];
        let toff = indexer.target_offsets[picked];
        let mut collapsed = DVector::from_element(self.amplitudes.len(), C64::new(0.0, 0.0));
        let scale = probability.sqrt();
        for &roff in &indexer.rest_offsets {
            collapsed[roff + toff] = self.amplitudes[roff + toff] / scale;
        }

        // Digits of the sampled outcome, big-endian over the listed targets.
        let target_dims: Vec<usize> = positions
            .iter()
            .map(|&p| self.layout.subsystems()[p].dimension)
            .collect();
        let mut digits = vec![0usize; target_dims.len()];
        let mut rem = picked;
        for (slot, &dim) in target_dims.iter().enumerate().rev() {
            digits[slot] = rem % dim;
            rem /= dim;
        }
        let outcome = digits
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join("");

        Ok(MeasurementRecord {
            outcome,
            digits,
            probability,
            collapsed: StateVector {
                layout: self.layout.clone(),
                amplitudes: collapsed,
            },
        })
    }

    /// Marginal outcome distribution of a single subsystem.
    pub fn marginal_probabilities(&self, label: &str) -> Result<Vec<f64>> {
        self.outcome_probabilities(&[label])
    }

    /// Extract the factor on `keep` assuming the complement is in the basis
    /// state `rest_digits` (in layout order of the remaining subsystems).
    /// Used to peel a measured ancilla register off a joint state.
    pub fn factor_on(&self, keep: &[&str], rest_digits: &[usize]) -> Result<Self> {
        let keep_positions = resolve_positions(&self.layout, keep)?;
        let strides = self.layout.strides();
        let rest_positions: Vec<usize> = (0..self.layout.len())
            .filter(|p| !keep_positions.contains(p))
            .collect();
        if rest_digits.len() != rest_positions.len() {
            return Err(Error::DimensionMismatch {
                expected: rest_positions.len(),
                got: rest_digits.len(),
            });
        }
        let rest_offset: usize = rest_positions
            .iter()
            .zip(rest_digits)
            .map(|(&p, &d)| strides[p] * d)
            .sum();
        let keep_layout = HilbertLayout::new(
            keep_positions
                .iter()
                .map(|&p| {
                    let s = &self.layout.subsystems()[p];
                    (s.label.clone(), s.dimension)
                })
                .collect::<Vec<_>>(),
        )?;
        let keep_offsets = enumerate_offsets(
            &keep_positions
                .iter()
                .map(|&p| self.layout.subsystems()[p].dimension)
                .collect::<Vec<_>>(),
            &keep_positions
                .iter()
                .map(|&p| strides[p])
                .collect::<Vec<_>>(),
        );
        let amps =
            DVector::from_iterator(keep_offsets.len(), keep_offsets.iter().map(|&k| {
                self.amplitudes[rest_offset + k]
            }));
        StateVector::unnormalized(keep_layout, amps)
    }
}

/// Result of sampling a projective measurement.
#[derive(Debug, Clone)]
pub struct MeasurementRecord {
    /// Outcome digits concatenated in listed-target order.
    pub outcome: String,
    pub digits: Vec<usize>,
    /// Exact Born probability of the sampled outcome.
    pub probability: f64,
    pub collapsed: StateVector,
}

/// A Hermitian, unit-trace, positive semidefinite operator on a labelled
/// composite space.
#[derive(Debug, Clone)]
pub struct DensityOperator {
    layout: HilbertLayout,
    matrix: DMatrix<C64>,
}

impl DensityOperator {
    /// A validated density operator: Hermitian, trace one, eigenvalues above
    /// `-psd_tol`.
    pub fn new(layout: HilbertLayout, matrix: DMatrix<C64>) -> Result<Self> {
        Self::with_policy(layout, matrix, &NumericPolicy::default())
    }

    pub fn with_policy(
        layout: HilbertLayout,
        matrix: DMatrix<C64>,
        policy: &NumericPolicy,
    ) -> Result<Self> {
        let op = Self::unnormalized(layout, matrix)?;
        let herm = op.hermiticity_deviation();
        if herm > policy.algebraic_tol {
            return Err(Error::InvalidState(format!(
                "density operator not Hermitian (max deviation {herm:.3e})"
            )));
        }
        let trace = op.trace();
        if (trace.re - 1.0).abs() > policy.algebraic_tol || trace.im.abs() > policy.algebraic_tol {
            return Err(Error::InvalidState(format!(
                "density operator trace is {trace}, expected 1"
            )));
        }
        let min_eig = op.min_eigenvalue();
        if min_eig < -policy.psd_tol {
            return Err(Error::InvalidState(format!(
                "density operator has negative eigenvalue {min_eig:.3e}"
            )));
        }
        Ok(op)
    }

    /// Shape check only; used for unnormalized intermediates such as
    /// `S rho S` before renormalization.
    pub fn unnormalized(layout: HilbertLayout, matrix: DMatrix<C64>) -> Result<Self> {
        let dim = layout.total_dimension();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: matrix.nrows(),
            });
        }
        Ok(Self { layout, matrix })
    }

    pub fn from_pure(state: &StateVector) -> Self {
        let amps = state.amplitudes();
        Self {
            layout: state.layout().clone(),
            matrix: amps * amps.adjoint(),
        }
    }

    pub fn layout(&self) -> &HilbertLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        let adj = self.matrix.adjoint();
        (&self.matrix - adj).iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let eig = self.matrix.clone().symmetric_eigenvalues();
        eig.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Eigenvalues ascending with eigenvectors as matrix columns.
    pub fn eigen(&self) -> (Vec<f64>, DMatrix<C64>) {
        let se = nalgebra::SymmetricEigen::new(self.matrix.clone());
        let mut order: Vec<usize> = (0..se.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
        let values: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
        let vectors = DMatrix::from_columns(
            &order
                .iter()
                .map(|&i| se.eigenvectors.column(i).into_owned())
                .collect::<Vec<_>>(),
        );
        (values, vectors)
    }

    /// Tr(rho^2).
    pub fn purity(&self) -> f64 {
        let n = self.matrix.nrows();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                acc += self.matrix[(i, j)] * self.matrix[(j, i)];
            }
        }
        acc.re
    }

    /// Tr(rho0 rho) for a pure reference rho0 = |ref><ref|.
    pub fn fidelity_to_pure(&self, reference: &StateVector) -> f64 {
        let amps = reference.amplitudes();
        (amps.adjoint() * &self.matrix * amps)[(0, 0)].re
    }

    pub fn tensor(&self, other: &Self) -> Result<Self> {
        let layout = self.layout.concat(&other.layout)?;
        Ok(Self {
            layout,
            matrix: self.matrix.kronecker(&other.matrix),
        })
    }

    /// Reduced operator on the `keep` subsystems (original relative order),
    /// tracing out the rest. Preserves the trace.
    pub fn partial_trace(&self, keep: &[&str]) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::InvalidParameter {
                field: "keep",
                reason: "must name at least one subsystem".into(),
            });
        }
        let mut keep_positions = resolve_positions(&self.layout, keep)?;
        keep_positions.sort_unstable();
        let strides = self.layout.strides();
        let dims: Vec<usize> = self.layout.subsystems().iter().map(|s| s.dimension).collect();

        let traced_positions: Vec<usize> = (0..dims.len())
            .filter(|p| !keep_positions.contains(p))
            .collect();
        let keep_offsets = enumerate_offsets(
            &keep_positions.iter().map(|&p| dims[p]).collect::<Vec<_>>(),
            &keep_positions.iter().map(|&p| strides[p]).collect::<Vec<_>>(),
        );
        let traced_offsets = enumerate_offsets(
            &traced_positions.iter().map(|&p| dims[p]).collect::<Vec<_>>(),
            &traced_positions.iter().map(|&p| strides[p]).collect::<Vec<_>>(),
        );

        let k = keep_offsets.len();
        let mut reduced = DMatrix::from_element(k, k, C64::new(0.0, 0.0));
        for (i, &ki) in keep_offsets.iter().enumerate() {
            for (j, &kj) in keep_offsets.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for &t in &traced_offsets {
                    acc += self.matrix[(ki + t, kj + t)];
                }
                reduced[(i, j)] = acc;
            }
        }
        let keep_layout = HilbertLayout::new(
            keep_positions
                .iter()
                .map(|&p| {
                    let s = &self.layout.subsystems()[p];
                    (s.label.clone(), s.dimension)
                })
                .collect::<Vec<_>>(),
        )?;
        Ok(Self {
            layout: keep_layout,
            matrix: reduced,
        })
    }

    /// Conjugate by a unitary acting on the listed subsystems: rho -> U rho U†.
    pub fn apply_unitary(&self, op: &DMatrix<C64>, targets: &[&str]) -> Result<Self> {
        self.apply_unitary_with_policy(op, targets, &NumericPolicy::default())
    }

    pub fn apply_unitary_with_policy(
        &self,
        op: &DMatrix<C64>,
        targets: &[&str],
        policy: &NumericPolicy,
    ) -> Result<Self> {
        ensure_unitary(op, policy)?;
        self.apply_sandwich(op, targets)
    }

    /// rho -> M rho M† for an arbitrary M; the result is unnormalized when M
    /// is not unitary.
    pub fn apply_sandwich(&self, op: &DMatrix<C64>, targets: &[&str]) -> Result<Self> {
        let positions = resolve_positions(&self.layout, targets)?;
        check_operator_shape(op, &self.layout, &positions)?;
        let indexer = SubsetIndexer::new(&self.layout, &positions);
        let n = self.matrix.nrows();

        // B = M rho, column by column.
        let mut b = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
        for col in 0..n {
            let v = self.matrix.column(col).into_owned();
            b.set_column(col, &apply_on_subset(op, &indexer, &v));
        }
        // rho' = B M† = (M B†)†.
        let b_adj = b.adjoint();
        let mut out = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
        for col in 0..n {
            let v = b_adj.column(col).into_owned();
            out.set_column(col, &apply_on_subset(op, &indexer, &v));
        }
        Ok(Self {
            layout: self.layout.clone(),
            matrix: out.adjoint(),
        })
    }

    /// One-sided application rho -> M rho, for non-unitary operators. The
    /// result is an unnormalized (and generally non-Hermitian) intermediate.
    pub fn apply_one_sided(&self, op: &DMatrix<C64>, targets: &[&str]) -> Result<Self> {
        let positions = resolve_positions(&self.layout, targets)?;
        check_operator_shape(op, &self.layout, &positions)?;
        let indexer = SubsetIndexer::new(&self.layout, &positions);
        let n = self.matrix.nrows();
        let mut out = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
        for col in 0..n {
            let v = self.matrix.column(col).into_owned();
            out.set_column(col, &apply_on_subset(op, &indexer, &v));
        }
        Ok(Self {
            layout: self.layout.clone(),
            matrix: out,
        })
    }

    /// Rescale so the trace is one. Errors when the trace is (numerically)
    /// zero.
    pub fn renormalized(&self) -> Result<Self> {
        let trace = self.trace().re;
        if trace.abs() < NumericPolicy::default().zero_norm_tol {
            return Err(Error::InvalidState(
                "cannot renormalize an operator with zero trace".into(),
            ));
        }
        Ok(Self {
            layout: self.layout.clone(),
            matrix: self.matrix.map(|c| c / trace),
        })
    }
}

/// A Hermitian traceless perturbation of a single subsystem.
#[derive(Debug, Clone)]
pub struct HermitianPerturbation {
    layout: HilbertLayout,
    matrix: DMatrix<C64>,
}

impl HermitianPerturbation {
    pub fn new(layout: HilbertLayout, matrix: DMatrix<C64>) -> Result<Self> {
        Self::with_policy(layout, matrix, &NumericPolicy::default())
    }

    pub fn with_policy(
        layout: HilbertLayout,
        matrix: DMatrix<C64>,
        policy: &NumericPolicy,
    ) -> Result<Self> {
        if layout.len() != 1 {
            return Err(Error::InvalidParameter {
                field: "layout",
                reason: "perturbations act on a single subsystem".into(),
            });
        }
        let dim = layout.total_dimension();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: matrix.nrows(),
            });
        }
        let herm = (&matrix - matrix.adjoint())
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        if herm > policy.algebraic_tol {
            return Err(Error::InvalidState(format!(
                "perturbation not Hermitian (max deviation {herm:.3e})"
            )));
        }
        let trace = matrix.trace();
        if trace.norm() > policy.algebraic_tol {
            return Err(Error::InvalidState(format!(
                "perturbation trace is {trace}, expected 0"
            )));
        }
        Ok(Self { layout, matrix })
    }

    pub fn layout(&self) -> &HilbertLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }
}

/// Identity matrix of the given dimension.
pub fn identity(dim: usize) -> DMatrix<C64> {
    DMatrix::from_diagonal_element(dim, dim, C64::new(1.0, 0.0))
}

/// Max entrywise absolute difference between two matrices.
pub fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    (a - b).iter().map(|c| c.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::rng_from_seed;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn qubit_state(label: &str, a0: C64, a1: C64) -> StateVector {
        let layout = HilbertLayout::single(label, 2).unwrap();
        StateVector::new(layout, DVector::from_vec(vec![a0, a1])).unwrap()
    }

    #[test]
    fn layout_index_arithmetic_is_big_endian() {
        let layout = HilbertLayout::new([("a", 2), ("b", 3), ("c", 2)]).unwrap();
        assert_eq!(layout.total_dimension(), 12);
        assert_eq!(layout.strides(), vec![6, 2, 1]);
        assert_eq!(layout.decompose(7), vec![1, 0, 1]);
        assert_eq!(layout.compose(&[1, 0, 1]), 7);
    }

    #[test]
    fn duplicate_labels_rejected() {
        assert!(matches!(
            HilbertLayout::new([("a", 2), ("a", 2)]),
            Err(Error::LabelCollision(_))
        ));
        let a = HilbertLayout::single("x", 2).unwrap();
        let b = HilbertLayout::single("x", 3).unwrap();
        assert!(a.concat(&b).is_err());
    }

    #[test]
    fn tensor_product_of_basis_states() {
        // |0> ⊗ |0> = |00> = (1,0,0,0)
        let zero1 = qubit_state("q1", c(1.0, 0.0), c(0.0, 0.0));
        let zero2 = qubit_state("q2", c(1.0, 0.0), c(0.0, 0.0));
        let joint = zero1.tensor(&zero2).unwrap();
        assert_eq!(joint.amplitudes().len(), 4);
        assert_relative_eq!(joint.amplitudes()[0].re, 1.0, max_relative = 1e-15);
        for i in 1..4 {
            assert_eq!(joint.amplitudes()[i], c(0.0, 0.0));
        }
    }

    #[test]
    fn tensor_product_reproduces_two_copy_coefficient_pattern() {
        // |psi> = (a,1)/sqrt(1+a^2): |psi>⊗|psi> has amplitudes
        // (a^2, a, a, 1)/(1+a^2).
        let a = 0.7_f64;
        let norm = (1.0 + a * a).sqrt();
        let psi = qubit_state("q1", c(a / norm, 0.0), c(1.0 / norm, 0.0));
        let psi2 = qubit_state("q2", c(a / norm, 0.0), c(1.0 / norm, 0.0));
        let joint = psi.tensor(&psi2).unwrap();
        let scale = 1.0 / (1.0 + a * a);
        let expected = [a * a, a, a, 1.0];
        for (amp, want) in joint.amplitudes().iter().zip(expected) {
            assert_relative_eq!(amp.re, want * scale, max_relative = 1e-12);
        }
    }

    #[test]
    fn tensor_product_of_diagonal_densities() {
        // diag(1,0) ⊗ diag(1/2,1/2) = diag(1/2,1/2,0,0)
        let a = DensityOperator::new(
            HilbertLayout::single("a", 2).unwrap(),
            DMatrix::from_diagonal(&DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)])),
        )
        .unwrap();
        let b = DensityOperator::new(
            HilbertLayout::single("b", 2).unwrap(),
            DMatrix::from_diagonal(&DVector::from_vec(vec![c(0.5, 0.0), c(0.5, 0.0)])),
        )
        .unwrap();
        let joint = a.tensor(&b).unwrap();
        let diag: Vec<f64> = (0..4).map(|i| joint.matrix()[(i, i)].re).collect();
        assert_eq!(diag, vec![0.5, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn partial_trace_of_product_state_recovers_factor() {
        let zero = StateVector::zero_state(HilbertLayout::qubits("q", 2));
        let rho = DensityOperator::from_pure(&zero);
        let reduced = rho.partial_trace(&["q1"]).unwrap();
        assert_eq!(reduced.matrix().nrows(), 2);
        assert_relative_eq!(reduced.matrix()[(0, 0)].re, 1.0, epsilon = 1e-14);
        assert_relative_eq!(reduced.matrix()[(1, 1)].re, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn partial_trace_of_bell_like_state_is_maximally_mixed() {
        // (|01> + |10>)/sqrt(2), trace out the second qubit -> I/2.
        let layout = HilbertLayout::qubits("q", 2);
        let inv = 1.0 / 2.0_f64.sqrt();
        let amps = DVector::from_vec(vec![c(0.0, 0.0), c(inv, 0.0), c(inv, 0.0), c(0.0, 0.0)]);
        let state = StateVector::new(layout, amps).unwrap();
        let rho = DensityOperator::from_pure(&state);
        let reduced = rho.partial_trace(&["q1"]).unwrap();
        assert!(max_abs_diff(reduced.matrix(), &(identity(2) * c(0.5, 0.0))) < 1e-14);
    }

    #[test]
    fn partial_trace_of_tensor_factor() {
        let ma = DMatrix::from_row_slice(2, 2, &[c(0.7, 0.0), c(0.1, 0.2), c(0.1, -0.2), c(0.3, 0.0)]);
        let a = DensityOperator::new(HilbertLayout::single("a", 2).unwrap(), ma.clone()).unwrap();
        let b = DensityOperator::new(
            HilbertLayout::single("b", 2).unwrap(),
            DMatrix::from_diagonal(&DVector::from_vec(vec![c(0.25, 0.0), c(0.75, 0.0)])),
        )
        .unwrap();
        let joint = a.tensor(&b).unwrap();
        let reduced = joint.partial_trace(&["a"]).unwrap();
        assert!(max_abs_diff(reduced.matrix(), &ma) < 1e-14);
        // trace preserved
        assert_relative_eq!(reduced.trace().re, 1.0, epsilon = 1e-13);
    }

    #[test]
    fn partial_trace_unknown_label_errors() {
        let rho = DensityOperator::from_pure(&StateVector::zero_state(HilbertLayout::qubits("q", 2)));
        assert!(matches!(
            rho.partial_trace(&["nope"]),
            Err(Error::UnknownLabel(_))
        ));
    }

    #[test]
    fn apply_identity_leaves_state_unchanged() {
        let layout = HilbertLayout::qubits("q", 3);
        let psi = StateVector::basis_state(layout, 5).unwrap();
        let out = psi.apply_unitary(&identity(2), &["q2"]).unwrap();
        assert!((psi.amplitudes() - out.amplitudes()).norm() < 1e-15);
    }

    #[test]
    fn apply_not_on_second_qubit() {
        // NOT on qubit 2 of |00> -> |01>
        let layout = HilbertLayout::qubits("q", 2);
        let psi = StateVector::zero_state(layout);
        let not = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let out = psi.apply_unitary(&not, &["q2"]).unwrap();
        assert_relative_eq!(out.amplitudes()[1].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn apply_swap_matrix() {
        // swap on |01> -> |10>
        let layout = HilbertLayout::qubits("q", 2);
        let psi = StateVector::basis_state(layout, 1).unwrap();
        let swap = DMatrix::from_row_slice(
            4,
            4,
            &[
                c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0),
                c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0),
                c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0),
                c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0),
            ],
        );
        let out = psi.apply_unitary(&swap, &["q1", "q2"]).unwrap();
        assert_relative_eq!(out.amplitudes()[2].re, 1.0, epsilon = 1e-15);
        // Same swap addressed in reversed target order is the identity here:
        // swap is symmetric under relabelling both targets.
        let out2 = psi.apply_unitary(&swap, &["q2", "q1"]).unwrap();
        assert_relative_eq!(out2.amplitudes()[2].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn apply_rejects_non_unitary_and_wrong_shape() {
        let layout = HilbertLayout::qubits("q", 2);
        let psi = StateVector::zero_state(layout);
        let bad = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(
            psi.apply_unitary(&bad, &["q1"]),
            Err(Error::NonUnitary { .. })
        ));
        assert!(matches!(
            psi.apply_unitary(&identity(4), &["q1"]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn measure_deterministic_outcome() {
        let mut rng = rng_from_seed(11);
        let psi = qubit_state("q1", c(1.0, 0.0), c(0.0, 0.0));
        let m = psi.measure_subsystems(&["q1"], &mut rng).unwrap();
        assert_eq!(m.outcome, "0");
        assert_relative_eq!(m.probability, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn measure_ancilla_factor_in_zero() {
        // ancilla exactly |0>: outcome "0" with probability 1
        let data = qubit_state("d", c(0.6, 0.0), c(0.8, 0.0));
        let anc = qubit_state("a", c(1.0, 0.0), c(0.0, 0.0));
        let joint = data.tensor(&anc).unwrap();
        let mut rng = rng_from_seed(3);
        let m = joint.measure_subsystems(&["a"], &mut rng).unwrap();
        assert_eq!(m.outcome, "0");
        assert_relative_eq!(m.probability, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn measure_bell_statistics() {
        // first qubit of (|00>+|11>)/sqrt(2): each outcome probability 1/2;
        // empirical frequency over n seeded trials within 3 sigma.
        let layout = HilbertLayout::qubits("q", 2);
        let inv = 1.0 / 2.0_f64.sqrt();
        let amps = DVector::from_vec(vec![c(inv, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(inv, 0.0)]);
        let bell = StateVector::new(layout, amps).unwrap();
        let n = 100_000;
        let mut rng = rng_from_seed(42);
        let mut ones = 0usize;
        for _ in 0..n {
            let m = bell.measure_subsystems(&["q1"], &mut rng).unwrap();
            assert_relative_eq!(m.probability, 0.5, epsilon = 1e-12);
            if m.outcome == "1" {
                ones += 1;
            }
        }
        let p_hat = ones as f64 / n as f64;
        let sigma = (0.25_f64 / n as f64).sqrt();
        assert!((p_hat - 0.5).abs() < 3.0 * sigma, "p_hat = {p_hat}");
    }

    #[test]
    fn measurement_outcome_probabilities_sum_to_one() {
        let mut rng = rng_from_seed(5);
        let layout = HilbertLayout::qubits("q", 3);
        let amps = DVector::from_iterator(
            8,
            (0..8).map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)),
        );
        let norm = amps.norm();
        let state = StateVector::new(layout, amps.map(|a| a / norm)).unwrap();
        let probs = state.outcome_probabilities(&["q1", "q3"]).unwrap();
        let total: f64 = probs.iter().sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn purity_examples() {
        let pure = DensityOperator::from_pure(&qubit_state("q", c(1.0, 0.0), c(0.0, 0.0)));
        assert_relative_eq!(pure.purity(), 1.0, epsilon = 1e-14);

        let mixed = DensityOperator::new(
            HilbertLayout::single("q", 2).unwrap(),
            DMatrix::from_diagonal(&DVector::from_vec(vec![c(0.5, 0.0), c(0.5, 0.0)])),
        )
        .unwrap();
        assert_relative_eq!(mixed.purity(), 0.5, epsilon = 1e-14);

        let biased = DensityOperator::new(
            HilbertLayout::single("q", 2).unwrap(),
            DMatrix::from_diagonal(&DVector::from_vec(vec![c(0.75, 0.0), c(0.25, 0.0)])),
        )
        .unwrap();
        assert_relative_eq!(biased.purity(), 0.625, epsilon = 1e-14);
    }

    #[test]
    fn density_validation_catches_bad_inputs() {
        let layout = HilbertLayout::single("q", 2).unwrap();
        // non-hermitian
        let m = DMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.5, 0.0), c(0.0, 0.0), c(0.5, 0.0)]);
        assert!(DensityOperator::new(layout.clone(), m).is_err());
        // wrong trace
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![c(0.9, 0.0), c(0.3, 0.0)]));
        assert!(DensityOperator::new(layout.clone(), m).is_err());
        // negative eigenvalue
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![c(1.5, 0.0), c(-0.5, 0.0)]));
        assert!(DensityOperator::new(layout, m).is_err());
    }

    #[test]
    fn perturbation_must_be_traceless() {
        let layout = HilbertLayout::single("q", 2).unwrap();
        let sigma = DMatrix::from_diagonal(&DVector::from_vec(vec![c(-0.1, 0.0), c(0.1, 0.0)]));
        assert!(HermitianPerturbation::new(layout.clone(), sigma).is_ok());
        let bad = DMatrix::from_diagonal(&DVector::from_vec(vec![c(0.1, 0.0), c(0.1, 0.0)]));
        assert!(HermitianPerturbation::new(layout, bad).is_err());
    }

    #[test]
    fn factor_on_extracts_data_register() {
        let data = qubit_state("d", c(0.6, 0.0), c(0.8, 0.0));
        let anc = qubit_state("a", c(1.0, 0.0), c(0.0, 0.0));
        let joint = data.tensor(&anc).unwrap();
        let back = joint.factor_on(&["d"], &[0]).unwrap();
        assert!((back.amplitudes() - data.amplitudes()).norm() < 1e-15);
    }
}
