//! Python bindings for the symstab simulator. Complex amplitudes cross the
//! boundary as Python `complex`, matrices as nested lists (row-major).

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use symstab::circuit::{
    build_symmetrisation_network, gate_count_report, run_projection_via_network,
};
use symstab::experiment::{run_experiment, ExperimentConfig};
use symstab::numeric::rng_from_seed;
use symstab::stabilize::{purification_limit, symmetrize_mixed, two_copy_closed_form};
use symstab::symspace::{SymBasis, SymProjector};
use symstab::tensor::{DensityOperator, HilbertLayout, StateVector};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix_to_rows(m: &nalgebra::DMatrix<Complex64>) -> Vec<Vec<Complex64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn rows_to_matrix(rows: Vec<Vec<Complex64>>) -> PyResult<nalgebra::DMatrix<Complex64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(err("matrix must be square"));
    }
    let mut m = nalgebra::DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    Ok(m)
}

/// A normalized state of `copies` qubits labelled q1..qR.
#[pyclass(name = "StateVector", from_py_object)]
#[derive(Clone)]
struct PyStateVector {
    inner: StateVector,
}

#[pymethods]
impl PyStateVector {
    /// |0...0> on `copies` qubits.
    #[staticmethod]
    fn zero(copies: usize) -> Self {
        Self {
            inner: StateVector::zero_state(HilbertLayout::qubits("q", copies)),
        }
    }

    /// Build from 2^copies amplitudes (big-endian, q1 most significant).
    #[staticmethod]
    fn from_amplitudes(copies: usize, amplitudes: Vec<Complex64>) -> PyResult<Self> {
        let layout = HilbertLayout::qubits("q", copies);
        let amps = nalgebra::DVector::from_vec(amplitudes);
        Ok(Self {
            inner: StateVector::new(layout, amps).map_err(err)?,
        })
    }

    fn amplitudes(&self) -> Vec<Complex64> {
        self.inner.amplitudes().iter().copied().collect()
    }

    fn copies(&self) -> usize {
        self.inner.layout().len()
    }

    fn norm(&self) -> f64 {
        self.inner.norm()
    }

    /// Apply a unitary to the named qubits (e.g. ["q1", "q3"]).
    fn apply_unitary(
        &self,
        matrix: Vec<Vec<Complex64>>,
        targets: Vec<String>,
    ) -> PyResult<Self> {
        let m = rows_to_matrix(matrix)?;
        let refs: Vec<&str> = targets.iter().map(String::as_str).collect();
        Ok(Self {
            inner: self.inner.apply_unitary(&m, &refs).map_err(err)?,
        })
    }

    /// Measure the named qubits: (outcome digits, exact probability,
    /// collapsed state). Deterministic given the seed.
    fn measure(&self, targets: Vec<String>, seed: u64) -> PyResult<(String, f64, Self)> {
        let refs: Vec<&str> = targets.iter().map(String::as_str).collect();
        let mut rng = rng_from_seed(seed);
        let record = self.inner.measure_subsystems(&refs, &mut rng).map_err(err)?;
        Ok((
            record.outcome,
            record.probability,
            Self {
                inner: record.collapsed,
            },
        ))
    }

    fn __repr__(&self) -> String {
        format!("StateVector(copies={}, dim={})", self.copies(), self.inner.amplitudes().len())
    }
}

/// A single-qubit density operator.
#[pyclass(name = "DensityOperator", from_py_object)]
#[derive(Clone)]
struct PyDensityOperator {
    inner: DensityOperator,
}

#[pymethods]
impl PyDensityOperator {
    /// Validating constructor from a 2x2 (or dxd) matrix.
    #[staticmethod]
    fn from_matrix(matrix: Vec<Vec<Complex64>>) -> PyResult<Self> {
        let m = rows_to_matrix(matrix)?;
        let layout = HilbertLayout::single("q1", m.nrows()).map_err(err)?;
        Ok(Self {
            inner: DensityOperator::new(layout, m).map_err(err)?,
        })
    }

    fn matrix(&self) -> Vec<Vec<Complex64>> {
        matrix_to_rows(self.inner.matrix())
    }

    fn purity(&self) -> f64 {
        self.inner.purity()
    }

    fn __repr__(&self) -> String {
        format!("DensityOperator(dim={})", self.inner.matrix().nrows())
    }
}

/// C(R+d-1, d-1), the symmetric subspace dimension.
#[pyfunction]
fn symmetric_dimension(copies: usize, local_dimension: usize) -> PyResult<u64> {
    symstab::symspace::symmetric_dimension(copies, local_dimension).map_err(err)
}

/// Orthonormal symmetric basis vectors as rows (multiset order).
#[pyfunction]
fn symmetric_basis(copies: usize, local_dimension: usize) -> PyResult<Vec<Vec<Complex64>>> {
    let basis = SymBasis::build(copies, local_dimension).map_err(err)?;
    Ok((0..basis.dimension())
        .map(|k| basis.vectors().column(k).iter().copied().collect())
        .collect())
}

/// The projector S = (1/R!) sum of subsystem permutations, row-major.
#[pyfunction]
fn symmetric_projector(copies: usize, local_dimension: usize) -> PyResult<Vec<Vec<Complex64>>> {
    let projector = SymProjector::build(copies, local_dimension).map_err(err)?;
    Ok(matrix_to_rows(projector.matrix()))
}

/// Project a qubit-register state onto the symmetric subspace:
/// (projected state or None, success probability).
#[pyfunction]
fn project_pure(state: &PyStateVector) -> PyResult<(Option<PyStateVector>, f64)> {
    let result = symstab::symspace::project_pure(&state.inner).map_err(err)?;
    Ok((
        result.projected.map(|inner| PyStateVector { inner }),
        result.success_probability,
    ))
}

/// Probability of reading |1> on one qubit of sum_k coeffs[k] |e_k>.
#[pyfunction]
fn single_qubit_one_probability(coeffs: Vec<Complex64>, copies: usize) -> PyResult<f64> {
    symstab::symspace::single_qubit_one_probability(&coeffs, copies).map_err(err)
}

/// The R-qubit symmetrisation network as circuit JSON.
#[pyfunction]
fn network_json(copies: usize) -> PyResult<String> {
    let circuit = build_symmetrisation_network(copies).map_err(err)?;
    serde_json::to_string_pretty(&circuit).map_err(err)
}

/// Gate and wire counts of the R-qubit network.
#[pyfunction]
fn network_counts(copies: usize) -> PyResult<std::collections::HashMap<String, usize>> {
    let report = gate_count_report(&build_symmetrisation_network(copies).map_err(err)?);
    Ok(std::collections::HashMap::from([
        ("total_wires".to_string(), report.total_wires),
        ("data_wires".to_string(), report.data_wires),
        ("control_wires".to_string(), report.control_wires),
        ("fredkin_gates".to_string(), report.fredkin_gates),
        ("preparation_gates".to_string(), report.preparation_gates),
        ("total_gates".to_string(), report.total_gates),
        ("depth".to_string(), report.depth),
    ]))
}

/// Run one sampled projection through the Fredkin network:
/// (accepted, post state or None, exact accept probability).
#[pyfunction]
fn project_via_network(
    state: &PyStateVector,
    seed: u64,
) -> PyResult<(bool, Option<PyStateVector>, f64)> {
    let circuit = build_symmetrisation_network(state.copies()).map_err(err)?;
    let mut rng = rng_from_seed(seed);
    let outcome = run_projection_via_network(&circuit, &state.inner, &mut rng, false).map_err(err)?;
    Ok((
        outcome.accepted,
        outcome.post_state.map(|inner| PyStateVector { inner }),
        outcome.exact_accept_probability,
    ))
}

/// Symmetrize a list of single-qubit mixed states: (reduced single-qubit
/// state or None, accept probability).
#[pyfunction]
fn symmetrize_mixed_states(
    rhos: Vec<PyDensityOperator>,
) -> PyResult<(Option<PyDensityOperator>, f64)> {
    let relabelled: Vec<DensityOperator> = rhos
        .iter()
        .enumerate()
        .map(|(i, rho)| {
            DensityOperator::unnormalized(
                HilbertLayout::single(format!("q{}", i + 1), rho.inner.matrix().nrows())
                    .expect("generated labels are unique"),
                rho.inner.matrix().clone(),
            )
            .expect("same shape")
        })
        .collect();
    let result = symmetrize_mixed(&relabelled).map_err(err)?;
    Ok((
        result.reduced.map(|inner| PyDensityOperator { inner }),
        result.accept_probability,
    ))
}

/// The two-copy closed form (rho + rho^2)/Tr(rho + rho^2).
#[pyfunction]
fn closed_form_two_copies(rho: &PyDensityOperator) -> PyResult<PyDensityOperator> {
    Ok(PyDensityOperator {
        inner: two_copy_closed_form(&rho.inner).map_err(err)?,
    })
}

/// Purification curve entries (copies, purity, dominant overlap,
/// accept probability) for each requested R.
#[pyfunction]
fn purification_curve(
    rho: &PyDensityOperator,
    r_values: Vec<usize>,
) -> PyResult<Vec<(usize, f64, f64, f64)>> {
    let points = purification_limit(&rho.inner, &r_values).map_err(err)?;
    Ok(points
        .into_iter()
        .map(|p| (p.copies, p.purity, p.dominant_overlap, p.accept_probability))
        .collect())
}

/// Run a full experiment from a JSON config string and return the run
/// record as JSON (same schema as the `symstab run` command line).
#[pyfunction]
fn run_experiment_json(config_json: &str) -> PyResult<String> {
    let config = ExperimentConfig::from_json(config_json).map_err(err)?;
    let record = run_experiment(&config).map_err(err)?;
    record.to_json().map_err(err)
}

#[pymodule]
fn symstab_rs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyStateVector>()?;
    m.add_class::<PyDensityOperator>()?;
    m.add_function(wrap_pyfunction!(symmetric_dimension, m)?)?;
    m.add_function(wrap_pyfunction!(symmetric_basis, m)?)?;
    m.add_function(wrap_pyfunction!(symmetric_projector, m)?)?;
    m.add_function(wrap_pyfunction!(project_pure, m)?)?;
    m.add_function(wrap_pyfunction!(single_qubit_one_probability, m)?)?;
    m.add_function(wrap_pyfunction!(network_json, m)?)?;
    m.add_function(wrap_pyfunction!(network_counts, m)?)?;
    m.add_function(wrap_pyfunction!(project_via_network, m)?)?;
    m.add_function(wrap_pyfunction!(symmetrize_mixed_states, m)?)?;
    m.add_function(wrap_pyfunction!(closed_form_two_copies, m)?)?;
    m.add_function(wrap_pyfunction!(purification_curve, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment_json, m)?)?;
    Ok(())
}
