//! The symmetric subspace of R copies of a d-level system: dimension,
//! orthonormal basis indexed by multisets, the permutation-average projector,
//! and projection of pure states.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::NumericPolicy;
use crate::tensor::{C64, HilbertLayout, StateVector};

/// Largest composite dimension d^R for which dense basis/projector matrices
/// are built.
pub const MAX_DENSE_DIM: usize = 2048;

/// Largest R for which the R!-term permutation sum is enumerated.
pub const MAX_PERMUTATION_COPIES: usize = 8;

/// Number of symmetric basis states: C(R+d-1, d-1), computed exactly.
pub fn symmetric_dimension(copies: usize, local_dimension: usize) -> Result<u64> {
    if copies == 0 {
        return Err(Error::InvalidParameter {
            field: "copies",
            reason: "must be at least 1".into(),
        });
    }
    if local_dimension == 0 {
        return Err(Error::InvalidParameter {
            field: "local_dimension",
            reason: "must be at least 1".into(),
        });
    }
    let n = (copies + local_dimension - 1) as u128;
    let k = (local_dimension - 1) as u128;
    let k = k.min(n - k);
    let mut value: u128 = 1;
    for i in 1..=k {
        value = value
            .checked_mul(n - k + i)
            .ok_or(Error::Overflow("symmetric dimension"))?;
        value /= i; // exact: product of i consecutive integers is divisible by i!
    }
    u64::try_from(value).map_err(|_| Error::Overflow("symmetric dimension"))
}

/// All multisets of size `copies` over {0..d-1}, as non-decreasing digit
/// vectors in lexicographic order. For d = 2 this is exactly the ordering by
/// number of ones.
fn multiset_list(copies: usize, local_dimension: usize) -> Vec<Vec<usize>> {
    (0..local_dimension)
        .combinations_with_replacement(copies)
        .collect()
}

fn check_dense_budget(copies: usize, local_dimension: usize) -> Result<usize> {
    let mut dim: usize = 1;
    for _ in 0..copies {
        dim = dim
            .checked_mul(local_dimension)
            .ok_or(Error::Overflow("composite dimension"))?;
        if dim > MAX_DENSE_DIM {
            return Err(Error::SizeBudget {
                what: "dense symmetric-subspace construction",
                requested: dim as u128,
                limit: MAX_DENSE_DIM as u128,
            });
        }
    }
    Ok(dim)
}

/// Orthonormal basis of the symmetric subspace, one vector per multiset.
///
/// Each basis vector is the equal-amplitude superposition of all distinct
/// arrangements of its multiset, normalized by the square root of the
/// arrangement count (square roots of binomial coefficients for qubits).
#[derive(Debug, Clone)]
pub struct SymBasis {
    copies: usize,
    local_dimension: usize,
    multisets: Vec<Vec<usize>>,
    /// d^R x C(R+d-1, d-1); column k is the basis vector of multiset k.
    vectors: DMatrix<C64>,
}

impl SymBasis {
    pub fn build(copies: usize, local_dimension: usize) -> Result<Self> {
        let dim = check_dense_budget(copies, local_dimension)?;
        let sym_dim = symmetric_dimension(copies, local_dimension)? as usize;
        let multisets = multiset_list(copies, local_dimension);
        debug_assert_eq!(multisets.len(), sym_dim);

        let layout = qudit_layout(copies, local_dimension);
        let mut vectors = DMatrix::from_element(dim, sym_dim, C64::new(0.0, 0.0));
        // One pass over the computational basis: each index contributes one
        // unit of amplitude to the multiset of its sorted digits.
        for index in 0..dim {
            let mut digits = layout.decompose(index);
            digits.sort_unstable();
            let k = multisets
                .binary_search(&digits)
                .expect("sorted digits always form a listed multiset");
            vectors[(index, k)] += C64::new(1.0, 0.0);
        }
        for mut col in vectors.column_iter_mut() {
            let norm = col.norm();
            col /= C64::new(norm, 0.0);
        }
        Ok(Self {
            copies,
            local_dimension,
            multisets,
            vectors,
        })
    }

    pub fn copies(&self) -> usize {
        self.copies
    }

    pub fn local_dimension(&self) -> usize {
        self.local_dimension
    }

    /// Number of basis vectors, C(R+d-1, d-1).
    pub fn dimension(&self) -> usize {
        self.multisets.len()
    }

    pub fn multisets(&self) -> &[Vec<usize>] {
        &self.multisets
    }

    /// The d^R x dim matrix whose columns are the basis vectors.
    pub fn vectors(&self) -> &DMatrix<C64> {
        &self.vectors
    }

    /// Basis vector `k` as a state on qudits labelled q1..qR.
    pub fn vector(&self, k: usize) -> StateVector {
        let layout = qudit_layout(self.copies, self.local_dimension);
        StateVector::unnormalized(layout, self.vectors.column(k).into_owned())
            .expect("basis column has layout dimension")
    }

    /// Assemble sum_k coeffs[k] |e_k> as a state on q1..qR.
    pub fn state_from_coefficients(&self, coeffs: &[C64]) -> Result<StateVector> {
        if coeffs.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got: coeffs.len(),
            });
        }
        let coeff_vec = DVector::from_column_slice(coeffs);
        let amps = &self.vectors * coeff_vec;
        StateVector::unnormalized(qudit_layout(self.copies, self.local_dimension), amps)
    }
}

fn qudit_layout(copies: usize, local_dimension: usize) -> HilbertLayout {
    HilbertLayout::new((1..=copies).map(|i| (format!("q{i}"), local_dimension)))
        .expect("generated labels are unique")
}

/// The orthogonal projector onto the symmetric subspace,
/// S = (1/R!) * sum over all R! subsystem permutations.
#[derive(Debug, Clone)]
pub struct SymProjector {
    copies: usize,
    local_dimension: usize,
    matrix: DMatrix<C64>,
}

impl SymProjector {
    /// Build the projector. Uses the permutation average when both the R!
    /// budget and the dense budget allow it and the composite dimension is
    /// at most 256; otherwise falls back to the basis outer-product form,
    /// which avoids enumerating R! terms.
    pub fn build(copies: usize, local_dimension: usize) -> Result<Self> {
        let dim = check_dense_budget(copies, local_dimension)?;
        if copies <= MAX_PERMUTATION_COPIES && dim <= 256 {
            Self::from_permutation_sum(copies, local_dimension)
        } else {
            Ok(Self::from_basis(&SymBasis::build(copies, local_dimension)?))
        }
    }

    /// S = (1/R!) sum_alpha P_alpha, permuting subsystem contents (internal
    /// degrees of freedom only).
    pub fn from_permutation_sum(copies: usize, local_dimension: usize) -> Result<Self> {
        let dim = check_dense_budget(copies, local_dimension)?;
        if copies > MAX_PERMUTATION_COPIES {
            return Err(Error::SizeBudget {
                what: "permutation-sum projector",
                requested: copies as u128,
                limit: MAX_PERMUTATION_COPIES as u128,
            });
        }
        let layout = qudit_layout(copies, local_dimension);
        let mut matrix = DMatrix::from_element(dim, dim, C64::new(0.0, 0.0));
        let mut count = 0usize;
        // Lexicographic enumeration of one-line permutation notation.
        for perm in (0..copies).permutations(copies) {
            count += 1;
            for source in 0..dim {
                let digits = layout.decompose(source);
                let mut permuted = vec![0usize; copies];
                for (i, &target_slot) in perm.iter().enumerate() {
                    permuted[target_slot] = digits[i];
                }
                let dest = layout.compose(&permuted);
                matrix[(dest, source)] += C64::new(1.0, 0.0);
            }
        }
        matrix /= C64::new(count as f64, 0.0);
        let projector = Self {
            copies,
            local_dimension,
            matrix,
        };
        projector.check_trace()?;
        Ok(projector)
    }

    /// S = sum_k |e_k><e_k| over the symmetric basis.
    pub fn from_basis(basis: &SymBasis) -> Self {
        let matrix = basis.vectors() * basis.vectors().adjoint();
        Self {
            copies: basis.copies(),
            local_dimension: basis.local_dimension(),
            matrix,
        }
    }

    /// Rank check: Tr S must be the symmetric dimension (an integer).
    fn check_trace(&self) -> Result<()> {
        let expected = symmetric_dimension(self.copies, self.local_dimension)? as f64;
        let trace = self.matrix.trace();
        if (trace.re - expected).abs() > 1e-8 || trace.im.abs() > 1e-8 {
            return Err(Error::InvalidState(format!(
                "projector trace {} differs from symmetric dimension {}",
                trace, expected
            )));
        }
        Ok(())
    }

    pub fn copies(&self) -> usize {
        self.copies
    }

    pub fn local_dimension(&self) -> usize {
        self.local_dimension
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    /// Rank of the projector, computed as its trace.
    pub fn rank(&self) -> usize {
        self.matrix.trace().re.round() as usize
    }

    fn check_state(&self, state: &StateVector) -> Result<()> {
        let layout = state.layout();
        if layout.len() != self.copies
            || layout
                .subsystems()
                .iter()
                .any(|s| s.dimension != self.local_dimension)
        {
            return Err(Error::DimensionMismatch {
                expected: self.copies * self.local_dimension,
                got: layout.total_dimension(),
            });
        }
        Ok(())
    }

    /// Project a normalized state onto the symmetric subspace.
    ///
    /// Returns the renormalized projection together with the success
    /// probability |S psi|^2. When the projection norm falls below the
    /// zero-norm threshold the projected state is absent and the probability
    /// is reported as exactly zero.
    pub fn project_pure(&self, state: &StateVector) -> Result<PureProjection> {
        self.check_state(state)?;
        let projected = &self.matrix * state.amplitudes();
        let norm = projected.norm();
        if norm < NumericPolicy::default().zero_norm_tol {
            return Ok(PureProjection {
                projected: None,
                success_probability: 0.0,
            });
        }
        let renormalized = projected.map(|a| a / norm);
        Ok(PureProjection {
            projected: Some(StateVector::unnormalized(
                state.layout().clone(),
                renormalized,
            )?),
            success_probability: norm * norm,
        })
    }

    /// |S psi|^2 without forming the renormalized state.
    pub fn accept_probability(&self, state: &StateVector) -> Result<f64> {
        self.check_state(state)?;
        let projected = &self.matrix * state.amplitudes();
        Ok(projected.norm().powi(2))
    }
}

/// Outcome of projecting a pure state onto the symmetric subspace.
#[derive(Debug, Clone)]
pub struct PureProjection {
    /// Renormalized projection; absent when the input is (numerically)
    /// orthogonal to the subspace.
    pub projected: Option<StateVector>,
    /// |S psi|^2.
    pub success_probability: f64,
}

/// Convenience wrapper that infers (R, d) from the state layout and builds
/// the projector on the fly.
pub fn project_pure(state: &StateVector) -> Result<PureProjection> {
    let layout = state.layout();
    let copies = layout.len();
    let local_dimension = layout
        .subsystems()
        .first()
        .map(|s| s.dimension)
        .ok_or_else(|| Error::InvalidState("empty layout".into()))?;
    if layout
        .subsystems()
        .iter()
        .any(|s| s.dimension != local_dimension)
    {
        return Err(Error::InvalidState(
            "projection requires identical subsystem dimensions".into(),
        ));
    }
    SymProjector::build(copies, local_dimension)?.project_pure(state)
}

/// Probability of measuring |1> on any single qubit of the symmetric state
/// sum_k coeffs[k] |e_k>: (1/R) sum_k |coeffs[k]|^2 k.
pub fn single_qubit_one_probability(coeffs: &[C64], copies: usize) -> Result<f64> {
    if coeffs.len() != copies + 1 {
        return Err(Error::DimensionMismatch {
            expected: copies + 1,
            got: coeffs.len(),
        });
    }
    let total: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
    if (total - 1.0).abs() > NumericPolicy::default().algebraic_tol {
        return Err(Error::InvalidState(format!(
            "coefficient norm is {total}, expected 1"
        )));
    }
    Ok(coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| c.norm_sqr() * k as f64)
        .sum::<f64>()
        / copies as f64)
}

// --- JSON serialization (explicit [re, im] pairs, row-major) ---

#[derive(Serialize, Deserialize)]
struct SymBasisDoc {
    copies: usize,
    local_dimension: usize,
    multisets: Vec<Vec<usize>>,
    /// vectors[k] holds basis vector k as d^R [re, im] pairs.
    vectors: Vec<Vec<[f64; 2]>>,
}

#[derive(Serialize, Deserialize)]
struct SymProjectorDoc {
    copies: usize,
    local_dimension: usize,
    /// Row-major d^R x d^R matrix of [re, im] pairs.
    matrix: Vec<Vec<[f64; 2]>>,
}

impl Serialize for SymBasis {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let vectors = (0..self.dimension())
            .map(|k| {
                self.vectors
                    .column(k)
                    .iter()
                    .map(|c| [c.re, c.im])
                    .collect()
            })
            .collect();
        SymBasisDoc {
            copies: self.copies,
            local_dimension: self.local_dimension,
            multisets: self.multisets.clone(),
            vectors,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SymBasis {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let doc = SymBasisDoc::deserialize(deserializer)?;
        let dim: usize = doc
            .vectors
            .first()
            .map(|v| v.len())
            .unwrap_or_default();
        let mut vectors = DMatrix::from_element(dim, doc.vectors.len(), C64::new(0.0, 0.0));
        for (k, col) in doc.vectors.iter().enumerate() {
            if col.len() != dim {
                return Err(serde::de::Error::custom("ragged basis vector list"));
            }
            for (i, pair) in col.iter().enumerate() {
                vectors[(i, k)] = C64::new(pair[0], pair[1]);
            }
        }
        Ok(SymBasis {
            copies: doc.copies,
            local_dimension: doc.local_dimension,
            multisets: doc.multisets,
            vectors,
        })
    }
}

impl Serialize for SymProjector {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let matrix = (0..self.matrix.nrows())
            .map(|i| {
                (0..self.matrix.ncols())
                    .map(|j| {
                        let c = self.matrix[(i, j)];
                        [c.re, c.im]
                    })
                    .collect()
            })
            .collect();
        SymProjectorDoc {
            copies: self.copies,
            local_dimension: self.local_dimension,
            matrix,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SymProjector {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let doc = SymProjectorDoc::deserialize(deserializer)?;
        let n = doc.matrix.len();
        let mut matrix = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
        for (i, row) in doc.matrix.iter().enumerate() {
            if row.len() != n {
                return Err(serde::de::Error::custom("projector matrix not square"));
            }
            for (j, pair) in row.iter().enumerate() {
                matrix[(i, j)] = C64::new(pair[0], pair[1]);
            }
        }
        Ok(SymProjector {
            copies: doc.copies,
            local_dimension: doc.local_dimension,
            matrix,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::max_abs_diff;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    /// Brute-force multiset count for the dimension oracle.
    fn count_multisets(copies: usize, d: usize) -> u64 {
        multiset_list(copies, d).len() as u64
    }

    #[test]
    fn dimension_matches_enumeration() {
        for copies in 1..=8 {
            for d in 1..=4 {
                assert_eq!(
                    symmetric_dimension(copies, d).unwrap(),
                    count_multisets(copies, d),
                    "R={copies} d={d}"
                );
            }
        }
        // three qubits span a four dimensional symmetric subspace
        assert_eq!(symmetric_dimension(3, 2).unwrap(), 4);
        // single copy: the whole local space
        assert_eq!(symmetric_dimension(1, 7).unwrap(), 7);
        // (R=4, d=3)
        assert_eq!(symmetric_dimension(4, 3).unwrap(), 15);
    }

    #[test]
    fn dimension_overflow_is_reported() {
        assert!(matches!(
            symmetric_dimension(usize::MAX / 2, 5),
            Err(Error::Overflow(_))
        ));
    }

    #[test]
    fn basis_three_qubits_matches_hand_construction() {
        let basis = SymBasis::build(3, 2).unwrap();
        assert_eq!(basis.dimension(), 4);
        // ordered by number of ones; normalizers 1, sqrt3, sqrt3, 1
        let s3 = 1.0 / 3.0_f64.sqrt();
        let e0 = basis.vector(0);
        assert_relative_eq!(e0.amplitudes()[0].re, 1.0, epsilon = 1e-14);
        let e1 = basis.vector(1);
        for idx in [1usize, 2, 4] {
            assert_relative_eq!(e1.amplitudes()[idx].re, s3, epsilon = 1e-14);
        }
        let e2 = basis.vector(2);
        for idx in [3usize, 5, 6] {
            assert_relative_eq!(e2.amplitudes()[idx].re, s3, epsilon = 1e-14);
        }
        let e3 = basis.vector(3);
        assert_relative_eq!(e3.amplitudes()[7].re, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn basis_single_qubit_is_computational() {
        let basis = SymBasis::build(1, 2).unwrap();
        assert_eq!(basis.dimension(), 2);
        assert_relative_eq!(basis.vector(0).amplitudes()[0].re, 1.0, epsilon = 1e-15);
        assert_relative_eq!(basis.vector(1).amplitudes()[1].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn basis_two_qubits() {
        let basis = SymBasis::build(2, 2).unwrap();
        assert_eq!(basis.dimension(), 3);
        let inv = 1.0 / 2.0_f64.sqrt();
        let e1 = basis.vector(1);
        assert_relative_eq!(e1.amplitudes()[1].re, inv, epsilon = 1e-14);
        assert_relative_eq!(e1.amplitudes()[2].re, inv, epsilon = 1e-14);
    }

    #[test]
    fn basis_is_orthonormal() {
        for (copies, d) in [(2, 2), (3, 2), (4, 2), (2, 3), (3, 3)] {
            let basis = SymBasis::build(copies, d).unwrap();
            let gram = basis.vectors().adjoint() * basis.vectors();
            let dim = basis.dimension();
            for i in 0..dim {
                for j in 0..dim {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!(
                        (gram[(i, j)] - c(expected, 0.0)).norm() < 1e-12,
                        "R={copies} d={d} entry ({i},{j})"
                    );
                }
            }
        }
    }

    #[test]
    fn projector_two_qubits_is_half_identity_plus_swap() {
        let proj = SymProjector::from_permutation_sum(2, 2).unwrap();
        // S|01> = (|01>+|10>)/2
        let layout = HilbertLayout::qubits("q", 2);
        let psi = StateVector::basis_state(layout, 1).unwrap();
        let out = proj.matrix() * psi.amplitudes();
        assert_relative_eq!(out[1].re, 0.5, epsilon = 1e-14);
        assert_relative_eq!(out[2].re, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn projector_trace_equals_dimension() {
        let proj = SymProjector::from_permutation_sum(3, 2).unwrap();
        assert_relative_eq!(proj.matrix().trace().re, 4.0, epsilon = 1e-10);
        assert_eq!(proj.rank(), 4);
    }

    #[test]
    fn projector_forms_agree_and_are_idempotent() {
        for (copies, d) in [(2, 2), (3, 2), (4, 2), (2, 3), (3, 3)] {
            let from_perms = SymProjector::from_permutation_sum(copies, d).unwrap();
            let from_basis = SymProjector::from_basis(&SymBasis::build(copies, d).unwrap());
            assert!(
                max_abs_diff(from_perms.matrix(), from_basis.matrix()) < 1e-10,
                "R={copies} d={d}"
            );
            let squared = from_perms.matrix() * from_perms.matrix();
            assert!(max_abs_diff(&squared, from_perms.matrix()) < 1e-10);
            let adj = from_perms.matrix().adjoint();
            assert!(max_abs_diff(&adj, from_perms.matrix()) < 1e-12);
        }
    }

    #[test]
    fn projector_fixes_product_powers() {
        let layout = HilbertLayout::qubits("q", 3);
        let a = c(0.6, 0.2);
        let b = c(0.4, -0.1);
        let norm = (a.norm_sqr() + b.norm_sqr()).sqrt();
        let single = DVector::from_vec(vec![a / norm, b / norm]);
        let mut amps = single.clone();
        for _ in 1..3 {
            amps = amps.kronecker(&single);
        }
        let state = StateVector::new(layout, amps).unwrap();
        let proj = SymProjector::build(3, 2).unwrap();
        let result = proj.project_pure(&state).unwrap();
        assert_relative_eq!(result.success_probability, 1.0, epsilon = 1e-12);
        let projected = result.projected.unwrap();
        assert!((projected.amplitudes() - state.amplitudes()).norm() < 1e-10);
    }

    #[test]
    fn projection_of_lopsided_basis_state() {
        let layout = HilbertLayout::qubits("q", 2);
        let psi = StateVector::basis_state(layout, 1).unwrap(); // |01>
        let proj = SymProjector::build(2, 2).unwrap();
        let result = proj.project_pure(&psi).unwrap();
        assert_relative_eq!(result.success_probability, 0.5, epsilon = 1e-12);
        let projected = result.projected.unwrap();
        let inv = 1.0 / 2.0_f64.sqrt();
        assert_relative_eq!(projected.amplitudes()[1].re, inv, epsilon = 1e-12);
        assert_relative_eq!(projected.amplitudes()[2].re, inv, epsilon = 1e-12);
    }

    #[test]
    fn singlet_projects_to_nothing() {
        let layout = HilbertLayout::qubits("q", 2);
        let inv = 1.0 / 2.0_f64.sqrt();
        let amps = DVector::from_vec(vec![c(0.0, 0.0), c(inv, 0.0), c(-inv, 0.0), c(0.0, 0.0)]);
        let singlet = StateVector::new(layout, amps).unwrap();
        let result = project_pure(&singlet).unwrap();
        assert!(result.projected.is_none());
        assert_eq!(result.success_probability, 0.0);
    }

    #[test]
    fn one_probability_examples() {
        // alpha = e_1 indicator, R=3 -> 1/3
        let coeffs = [c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        assert_relative_eq!(
            single_qubit_one_probability(&coeffs, 3).unwrap(),
            1.0 / 3.0,
            epsilon = 1e-15
        );
        // no-error state
        let coeffs = [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        assert_relative_eq!(single_qubit_one_probability(&coeffs, 3).unwrap(), 0.0);
        // alpha = (0, 1/sqrt2, 1/sqrt2, 0), R=3 -> 1/2
        let inv = 1.0 / 2.0_f64.sqrt();
        let coeffs = [c(0.0, 0.0), c(inv, 0.0), c(inv, 0.0), c(0.0, 0.0)];
        assert_relative_eq!(
            single_qubit_one_probability(&coeffs, 3).unwrap(),
            0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn one_probability_matches_born_marginal() {
        use crate::numeric::rng_from_seed;
        use rand::Rng;
        let mut rng = rng_from_seed(314);
        for copies in 2..=5 {
            let basis = SymBasis::build(copies, 2).unwrap();
            for _ in 0..20 {
                let mut coeffs: Vec<C64> = (0..=copies)
                    .map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                    .collect();
                let norm: f64 = coeffs.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
                for x in &mut coeffs {
                    *x /= norm;
                }
                let state = basis.state_from_coefficients(&coeffs).unwrap();
                let predicted = single_qubit_one_probability(&coeffs, copies).unwrap();
                for qubit in 1..=copies {
                    let marginal = state
                        .marginal_probabilities(&format!("q{qubit}"))
                        .unwrap();
                    assert!(
                        (marginal[1] - predicted).abs() < 1e-10,
                        "R={copies} qubit={qubit}"
                    );
                }
            }
        }
    }

    #[test]
    fn projector_commutes_with_subsystem_permutations() {
        let proj = SymProjector::build(3, 2).unwrap();
        let layout = qudit_layout(3, 2);
        for perm in (0..3).permutations(3) {
            let dim = layout.total_dimension();
            let mut p = DMatrix::from_element(dim, dim, c(0.0, 0.0));
            for source in 0..dim {
                let digits = layout.decompose(source);
                let mut permuted = vec![0usize; 3];
                for (i, &slot) in perm.iter().enumerate() {
                    permuted[slot] = digits[i];
                }
                p[(layout.compose(&permuted), source)] = c(1.0, 0.0);
            }
            let left = &p * proj.matrix();
            let right = proj.matrix() * &p;
            assert!(max_abs_diff(&left, &right) < 1e-10);
        }
    }

    #[test]
    fn serialization_round_trips() {
        let basis = SymBasis::build(3, 2).unwrap();
        let json = serde_json::to_string(&basis).unwrap();
        let back: SymBasis = serde_json::from_str(&json).unwrap();
        assert_eq!(back.dimension(), 4);
        assert!(max_abs_diff(back.vectors(), basis.vectors()) < 1e-15);

        let proj = SymProjector::build(2, 2).unwrap();
        let json = serde_json::to_string(&proj).unwrap();
        let back: SymProjector = serde_json::from_str(&json).unwrap();
        assert!(max_abs_diff(back.matrix(), proj.matrix()) < 1e-15);
    }

    #[test]
    fn budget_guards_fire() {
        assert!(matches!(
            SymBasis::build(20, 2),
            Err(Error::SizeBudget { .. })
        ));
        assert!(matches!(
            SymProjector::from_permutation_sum(9, 2),
            Err(Error::SizeBudget { .. })
        ));
    }
}
