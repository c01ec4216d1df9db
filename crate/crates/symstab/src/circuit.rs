//! Gate-level realization of the symmetric-subspace projection: the
//! ancilla-controlled permutation algorithm in operator form, and the
//! cascaded Fredkin network with per-stage control preparation.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::SimRng;
use crate::tensor::{C64, HilbertLayout, StateVector};

/// Largest R for which the full Fredkin network (R + R(R-1)/2 wires) is
/// built and simulated.
pub const MAX_NETWORK_COPIES: usize = 6;

/// Largest R for which the R!-dimensional ancilla realization is simulated.
pub const MAX_PERM_ANCILLA_COPIES: usize = 7;

const CIRCUIT_FORMAT_VERSION: u32 = 1;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// One gate application. `targets` index into the circuit's wire list; the
/// first target is the most significant qubit of the gate's own matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub kind: GateKind,
    pub targets: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GateKind {
    /// Seed rotation of the stage-k control preparation (2x2).
    UkSeed { k: usize, adjoint: bool },
    /// Stage-k preparation gate T acting on control wires j and j+1 (4x4).
    TPair { k: usize, j: usize, adjoint: bool },
    /// Controlled swap: first target is the control.
    Fredkin,
    /// Controlled NOT: first target is the control.
    Cnot,
    /// An explicit unitary matrix over the listed targets.
    CustomUnitary { matrix: DMatrix<C64> },
}

/// The one-qubit rotation seeding the stage-k control preparation:
/// (1/sqrt(k+1)) [[1, -sqrt(k)], [sqrt(k), 1]].
pub fn uk_seed_rotation(k: usize) -> DMatrix<C64> {
    let norm = 1.0 / ((k + 1) as f64).sqrt();
    let root_k = (k as f64).sqrt();
    DMatrix::from_row_slice(
        2,
        2,
        &[
            c(norm, 0.0),
            c(-norm * root_k, 0.0),
            c(norm * root_k, 0.0),
            c(norm, 0.0),
        ],
    )
}

/// The two-qubit preparation gate T_{j,j+1} of stage k, in the big-endian
/// basis {|00>, |01>, |10>, |11>} with wire j listed first. Requires
/// 1 <= j <= k-1.
pub fn t_gate(k: usize, j: usize) -> Result<DMatrix<C64>> {
    if j < 1 || j + 1 > k {
        return Err(Error::InvalidParameter {
            field: "j",
            reason: format!("need 1 <= j <= k-1, got j={j}, k={k}"),
        });
    }
    let m = (k - j) as f64;
    let norm = 1.0 / (m + 1.0).sqrt();
    let root_m = m.sqrt();
    Ok(DMatrix::from_row_slice(
        4,
        4,
        &[
            c(1.0, 0.0),
            c(0.0, 0.0),
            c(0.0, 0.0),
            c(0.0, 0.0),
            c(0.0, 0.0),
            c(norm, 0.0),
            c(norm * root_m, 0.0),
            c(0.0, 0.0),
            c(0.0, 0.0),
            c(-norm * root_m, 0.0),
            c(norm, 0.0),
            c(0.0, 0.0),
            c(0.0, 0.0),
            c(0.0, 0.0),
            c(0.0, 0.0),
            c(1.0, 0.0),
        ],
    ))
}

/// Controlled swap on (control, a, b): exchanges a and b iff control is |1>.
pub fn fredkin_matrix() -> DMatrix<C64> {
    let mut m = DMatrix::from_element(8, 8, c(0.0, 0.0));
    for (input, output) in [(0, 0), (1, 1), (2, 2), (3, 3), (4, 4), (5, 6), (6, 5), (7, 7)] {
        m[(output, input)] = c(1.0, 0.0);
    }
    m
}

/// Controlled NOT on (control, target).
pub fn cnot_matrix() -> DMatrix<C64> {
    let mut m = DMatrix::from_element(4, 4, c(0.0, 0.0));
    for (input, output) in [(0, 0), (1, 1), (2, 3), (3, 2)] {
        m[(output, input)] = c(1.0, 0.0);
    }
    m
}

fn toffoli_matrix() -> DMatrix<C64> {
    let mut m = DMatrix::from_element(8, 8, c(0.0, 0.0));
    for input in 0..8usize {
        let output = if input == 6 {
            7
        } else if input == 7 {
            6
        } else {
            input
        };
        m[(output, input)] = c(1.0, 0.0);
    }
    m
}

impl Gate {
    pub fn name(&self) -> &'static str {
        match self.kind {
            GateKind::UkSeed { .. } => "single_qubit_rotation_Uk_seed",
            GateKind::TPair { .. } => "two_qubit_T",
            GateKind::Fredkin => "fredkin",
            GateKind::Cnot => "cnot",
            GateKind::CustomUnitary { .. } => "custom_unitary",
        }
    }

    /// The unitary realized by this gate.
    pub fn matrix(&self) -> Result<DMatrix<C64>> {
        Ok(match &self.kind {
            GateKind::UkSeed { k, adjoint } => {
                let m = uk_seed_rotation(*k);
                if *adjoint {
                    m.adjoint()
                } else {
                    m
                }
            }
            GateKind::TPair { k, j, adjoint } => {
                let m = t_gate(*k, *j)?;
                if *adjoint {
                    m.adjoint()
                } else {
                    m
                }
            }
            GateKind::Fredkin => fredkin_matrix(),
            GateKind::Cnot => cnot_matrix(),
            GateKind::CustomUnitary { matrix } => matrix.clone(),
        })
    }

    fn arity(&self) -> usize {
        match &self.kind {
            GateKind::UkSeed { .. } => 1,
            GateKind::TPair { .. } => 2,
            GateKind::Fredkin => 3,
            GateKind::Cnot => 2,
            GateKind::CustomUnitary { matrix } => {
                debug_assert!(matrix.nrows().is_power_of_two());
                matrix.nrows().trailing_zeros() as usize
            }
        }
    }

    fn describe(&self) -> String {
        match &self.kind {
            GateKind::UkSeed { k, adjoint } => {
                format!("Uk_seed(k={k}){}", if *adjoint { "^-1" } else { "" })
            }
            GateKind::TPair { k, j, adjoint } => {
                format!("T(k={k}, j={j}){}", if *adjoint { "^-1" } else { "" })
            }
            GateKind::Fredkin => "fredkin".to_string(),
            GateKind::Cnot => "cnot".to_string(),
            GateKind::CustomUnitary { matrix } => {
                format!("custom_unitary({0}x{0})", matrix.nrows())
            }
        }
    }
}

/// An ordered list of gate applications over a qubit wire layout, together
/// with the ancilla wires whose all-zeros measurement outcome signals a
/// successful projection.
#[derive(Debug, Clone)]
pub struct Circuit {
    wires: HilbertLayout,
    gates: Vec<Gate>,
    data_wires: Vec<usize>,
    measured_wires: Vec<usize>,
}

impl Circuit {
    pub fn new(
        wires: HilbertLayout,
        gates: Vec<Gate>,
        data_wires: Vec<usize>,
        measured_wires: Vec<usize>,
    ) -> Result<Self> {
        let n = wires.len();
        for gate in &gates {
            if gate.targets.len() != gate.arity() {
                return Err(Error::DimensionMismatch {
                    expected: gate.arity(),
                    got: gate.targets.len(),
                });
            }
            for &t in &gate.targets {
                if t >= n {
                    return Err(Error::InvalidParameter {
                        field: "targets",
                        reason: format!("wire index {t} out of range ({n} wires)"),
                    });
                }
            }
        }
        for w in data_wires.iter().chain(&measured_wires) {
            if *w >= n {
                return Err(Error::InvalidParameter {
                    field: "wires",
                    reason: format!("wire index {w} out of range ({n} wires)"),
                });
            }
        }
        if measured_wires.iter().any(|w| data_wires.contains(w)) {
            return Err(Error::InvalidParameter {
                field: "measured_wires",
                reason: "measured wires must be disjoint from data wires".into(),
            });
        }
        Ok(Self {
            wires,
            gates,
            data_wires,
            measured_wires,
        })
    }

    pub fn wires(&self) -> &HilbertLayout {
        &self.wires
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn data_wires(&self) -> &[usize] {
        &self.data_wires
    }

    pub fn measured_wires(&self) -> &[usize] {
        &self.measured_wires
    }

    fn wire_label(&self, index: usize) -> &str {
        &self.wires.subsystems()[index].label
    }

    /// Apply every gate in order to a joint state over the circuit's wires.
    pub fn apply_all(&self, state: &StateVector) -> Result<StateVector> {
        if state.layout() != &self.wires {
            return Err(Error::InvalidState(
                "state layout does not match circuit wires".into(),
            ));
        }
        let mut current = state.clone();
        for gate in &self.gates {
            let labels: Vec<&str> = gate.targets.iter().map(|&t| self.wire_label(t)).collect();
            current = current.apply_unitary(&gate.matrix()?, &labels)?;
        }
        Ok(current)
    }

    /// The data state tensored with all ancilla wires in |0>.
    pub fn initial_joint_state(&self, data_state: &StateVector) -> Result<StateVector> {
        let data_layout = data_state.layout();
        if data_layout.len() != self.data_wires.len()
            || data_layout.subsystems().iter().any(|s| s.dimension != 2)
        {
            return Err(Error::DimensionMismatch {
                expected: self.data_wires.len(),
                got: data_layout.len(),
            });
        }
        // Data wires must form the layout prefix so the joint amplitudes
        // are a plain Kronecker product (all generated networks do this).
        if !self.data_wires.iter().enumerate().all(|(i, &w)| i == w) {
            return Err(Error::InvalidState(
                "data wires must precede ancilla wires in the layout".into(),
            ));
        }
        let ancilla_count = self.wires.len() - self.data_wires.len();
        let mut amps = data_state.amplitudes().clone();
        let zero = DVector::from_fn(1 << ancilla_count, |i, _| {
            if i == 0 {
                c(1.0, 0.0)
            } else {
                c(0.0, 0.0)
            }
        });
        amps = amps.kronecker(&zero);
        StateVector::unnormalized(self.wires.clone(), amps)
    }

    /// The full operator realized by the gate list (before measurement).
    /// Only for small circuits; intended for verification.
    pub fn total_unitary(&self) -> Result<DMatrix<C64>> {
        let dim = self.wires.total_dimension();
        if dim > 4096 {
            return Err(Error::SizeBudget {
                what: "total circuit unitary",
                requested: dim as u128,
                limit: 4096,
            });
        }
        let mut total = DMatrix::from_element(dim, dim, c(0.0, 0.0));
        for col in 0..dim {
            let basis = StateVector::basis_state(self.wires.clone(), col)?;
            let out = self.apply_all(&basis)?;
            total.set_column(col, out.amplitudes());
        }
        Ok(total)
    }

    /// Human-readable gate listing.
    pub fn listing(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "wires: {} total ({} data, {} control)\n",
            self.wires.len(),
            self.data_wires.len(),
            self.measured_wires.len()
        ));
        for (i, sub) in self.wires.subsystems().iter().enumerate() {
            let role = if self.data_wires.contains(&i) {
                "data"
            } else if self.measured_wires.contains(&i) {
                "control (measured, accept |0>)"
            } else {
                "aux"
            };
            out.push_str(&format!("  {i:3}: {:8} {role}\n", sub.label));
        }
        out.push_str(&format!("gates: {}\n", self.gates.len()));
        for (i, gate) in self.gates.iter().enumerate() {
            let labels: Vec<&str> = gate.targets.iter().map(|&t| self.wire_label(t)).collect();
            out.push_str(&format!(
                "  {:4}. {:20} on {:?} (wires {:?})\n",
                i + 1,
                gate.describe(),
                labels,
                gate.targets
            ));
        }
        out
    }

    /// Rewrite each Fredkin as two CNOTs around an explicit Toffoli, so gate
    /// counts can be read at CNOT granularity. The realized operator is
    /// unchanged. Off by default; the simulator treats Fredkin natively.
    pub fn lower_fredkins(&self) -> Self {
        let mut gates = Vec::with_capacity(self.gates.len());
        for gate in &self.gates {
            match gate.kind {
                GateKind::Fredkin => {
                    let (ctrl, a, b) = (gate.targets[0], gate.targets[1], gate.targets[2]);
                    gates.push(Gate {
                        kind: GateKind::Cnot,
                        targets: vec![b, a],
                    });
                    gates.push(Gate {
                        kind: GateKind::CustomUnitary {
                            matrix: toffoli_matrix(),
                        },
                        targets: vec![ctrl, a, b],
                    });
                    gates.push(Gate {
                        kind: GateKind::Cnot,
                        targets: vec![b, a],
                    });
                }
                _ => gates.push(gate.clone()),
            }
        }
        Self {
            wires: self.wires.clone(),
            gates,
            data_wires: self.data_wires.clone(),
            measured_wires: self.measured_wires.clone(),
        }
    }
}

/// The control preparation U_k as a standalone circuit on k wires c1..ck:
/// the seed rotation on c1 followed by T gates on (cj, cj+1). Applied to
/// |0...0> it yields the equal superposition of the all-zeros string and the
/// k one-hot strings, each with amplitude 1/sqrt(k+1).
pub fn build_uk_circuit(k: usize) -> Result<Circuit> {
    if k == 0 {
        return Err(Error::InvalidParameter {
            field: "k",
            reason: "need k >= 1".into(),
        });
    }
    let wires = HilbertLayout::qubits("c", k);
    let gates = uk_preparation_gates(k, 0, false)?;
    Circuit::new(wires, gates, (0..k).collect(), Vec::new())
}

/// Stage-k preparation gates with wire indices shifted by `offset`;
/// `adjoint` emits the inverse sequence (reversed order, daggered gates).
fn uk_preparation_gates(k: usize, offset: usize, adjoint: bool) -> Result<Vec<Gate>> {
    let mut gates = vec![Gate {
        kind: GateKind::UkSeed { k, adjoint },
        targets: vec![offset],
    }];
    for j in 1..k {
        gates.push(Gate {
            kind: GateKind::TPair { k, j, adjoint },
            targets: vec![offset + j - 1, offset + j],
        });
    }
    if adjoint {
        gates.reverse();
    }
    Ok(gates)
}

/// The cascaded symmetrisation network for R data qubits.
///
/// Stage k (k = 1..R-1) prepares its k fresh control wires with U_k, applies
/// k Fredkin gates (the j-th swaps data wires j and k+1 under control wire
/// j), and undoes the preparation. All R(R-1)/2 control wires are measured
/// with accept outcome all-zeros.
pub fn build_symmetrisation_network(copies: usize) -> Result<Circuit> {
    if copies < 2 {
        return Err(Error::InvalidParameter {
            field: "copies",
            reason: "need R >= 2".into(),
        });
    }
    if copies > MAX_NETWORK_COPIES {
        return Err(Error::SizeBudget {
            what: "symmetrisation network",
            requested: copies as u128,
            limit: MAX_NETWORK_COPIES as u128,
        });
    }
    let control_count = copies * (copies - 1) / 2;
    let mut subsystems: Vec<(String, usize)> =
        (1..=copies).map(|i| (format!("q{i}"), 2)).collect();
    for k in 1..copies {
        for j in 1..=k {
            subsystems.push((format!("c{k}_{j}"), 2));
        }
    }
    let wires = HilbertLayout::new(subsystems)?;

    // Wire index of control j of stage k (both 1-based).
    let control_wire = |k: usize, j: usize| copies + (k - 1) * k / 2 + (j - 1);

    let mut gates = Vec::new();
    for k in 1..copies {
        gates.extend(uk_preparation_gates(k, control_wire(k, 1), false)?);
        for j in 1..=k {
            gates.push(Gate {
                kind: GateKind::Fredkin,
                targets: vec![control_wire(k, j), j - 1, k],
            });
        }
        gates.extend(uk_preparation_gates(k, control_wire(k, 1), true)?);
    }

    Circuit::new(
        wires,
        gates,
        (0..copies).collect(),
        (copies..copies + control_count).collect(),
    )
}

/// Outcome of one sampled projection attempt.
#[derive(Debug, Clone)]
pub struct ProjectionOutcome {
    /// Whether the sampled ancilla outcome was the all-zeros accept pattern.
    pub accepted: bool,
    /// The collapsed data register. Present on acceptance; also present for
    /// the failed branch when `keep_failed` was requested.
    pub post_state: Option<StateVector>,
    /// The exact Born probability of the accept outcome, |S psi|^2.
    pub exact_accept_probability: f64,
}

/// Run the network on `data_state` tensored with |0...0> controls, sample
/// the control measurement, and collapse. On acceptance the data register
/// equals the exact symmetric projection of the input.
pub fn run_projection_via_network(
    circuit: &Circuit,
    data_state: &StateVector,
    rng: &mut SimRng,
    keep_failed: bool,
) -> Result<ProjectionOutcome> {
    let joint = circuit.initial_joint_state(data_state)?;
    let evolved = circuit.apply_all(&joint)?;

    let ancilla_labels: Vec<&str> = circuit
        .measured_wires
        .iter()
        .map(|&w| circuit.wire_label(w))
        .collect();
    let data_labels: Vec<&str> = circuit
        .data_wires
        .iter()
        .map(|&w| circuit.wire_label(w))
        .collect();

    let accept_digits = vec![0usize; ancilla_labels.len()];
    let exact_accept_probability = evolved
        .outcome_probability(&ancilla_labels, &accept_digits)?
        .clamp(0.0, 1.0);

    let measurement = evolved.measure_subsystems(&ancilla_labels, rng)?;
    let accepted = measurement.digits.iter().all(|&d| d == 0);

    let post_state = if accepted || keep_failed {
        let factor = measurement
            .collapsed
            .factor_on(&data_labels, &measurement.digits)?;
        Some(factor.normalize()?)
    } else {
        None
    };

    Ok(ProjectionOutcome {
        accepted,
        post_state,
        exact_accept_probability,
    })
}

/// Equal-superposition preparation over n ancilla indices, completed to a
/// full unitary by Gram-Schmidt over the standard basis.
fn superposition_unitary(n: usize) -> DMatrix<C64> {
    let amp = 1.0 / (n as f64).sqrt();
    let mut columns: Vec<DVector<C64>> = vec![DVector::from_element(n, c(amp, 0.0))];
    for cand in 0..n {
        if columns.len() == n {
            break;
        }
        let mut v = DVector::from_element(n, c(0.0, 0.0));
        v[cand] = c(1.0, 0.0);
        for prev in &columns {
            let overlap = prev.dotc(&v);
            v -= prev * overlap;
        }
        let norm = v.norm();
        if norm > 1e-8 {
            columns.push(v.map(|x| x / norm));
        }
    }
    DMatrix::from_columns(&columns)
}

/// Operator-level realization of the projection algorithm with a single
/// R!-dimensional ancilla: prepare the equal superposition over permutation
/// indices, apply the index-controlled permutation of the data qubits, undo
/// the preparation, and measure the ancilla with accept outcome 0.
pub fn run_projection_via_permutation_ancilla(
    data_state: &StateVector,
    rng: &mut SimRng,
    keep_failed: bool,
) -> Result<ProjectionOutcome> {
    let data_layout = data_state.layout();
    let copies = data_layout.len();
    if data_layout.subsystems().iter().any(|s| s.dimension != 2) {
        return Err(Error::InvalidState(
            "permutation-ancilla projection expects qubit registers".into(),
        ));
    }
    if copies > MAX_PERM_ANCILLA_COPIES {
        return Err(Error::SizeBudget {
            what: "permutation ancilla",
            requested: copies as u128,
            limit: MAX_PERM_ANCILLA_COPIES as u128,
        });
    }
    let ancilla_dim: usize = (1..=copies).product();
    let ancilla = StateVector::basis_state(HilbertLayout::single("anc", ancilla_dim)?, 0)?;
    let joint = data_state.tensor(&ancilla)?;

    // Step 2: ancilla |0> -> equal superposition over R! indices.
    let prep = superposition_unitary(ancilla_dim);
    let joint = joint.apply_general(&prep, &["anc"])?;

    // Step 3: controlled permutation. The ancilla is the last subsystem, so
    // index = data_index * R! + ancilla_index; remap data indices per block.
    let data_dim = data_layout.total_dimension();
    let mut permuted_index: Vec<Vec<usize>> = Vec::with_capacity(ancilla_dim);
    for perm in (0..copies).permutations(copies) {
        let mut map = vec![0usize; data_dim];
        for (source, slot_map) in map.iter_mut().enumerate() {
            let digits = data_layout.decompose(source);
            let mut permuted = vec![0usize; copies];
            for (slot, &dest_slot) in perm.iter().enumerate() {
                permuted[dest_slot] = digits[slot];
            }
            *slot_map = data_layout.compose(&permuted);
        }
        permuted_index.push(map);
    }
    let amps = joint.amplitudes();
    let mut new_amps = DVector::from_element(amps.len(), c(0.0, 0.0));
    for data_index in 0..data_dim {
        for (anc_index, map) in permuted_index.iter().enumerate() {
            new_amps[map[data_index] * ancilla_dim + anc_index] =
                amps[data_index * ancilla_dim + anc_index];
        }
    }
    let joint = StateVector::unnormalized(joint.layout().clone(), new_amps)?;

    // Step 4: undo the preparation.
    let joint = joint.apply_general(&prep.adjoint(), &["anc"])?;

    // Step 5: measure the ancilla; outcome 0 accepts.
    let exact_accept_probability = joint.outcome_probability(&["anc"], &[0])?.clamp(0.0, 1.0);
    let measurement = joint.measure_subsystems(&["anc"], rng)?;
    let accepted = measurement.digits[0] == 0;

    let data_labels: Vec<&str> = data_layout.labels().collect();
    let post_state = if accepted || keep_failed {
        let factor = measurement
            .collapsed
            .factor_on(&data_labels, &measurement.digits)?;
        Some(factor.normalize()?)
    } else {
        None
    };

    Ok(ProjectionOutcome {
        accepted,
        post_state,
        exact_accept_probability,
    })
}

/// Per-kind gate counts, wire totals and greedy-layering depth.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CostReport {
    pub total_wires: usize,
    pub data_wires: usize,
    pub control_wires: usize,
    pub fredkin_gates: usize,
    pub preparation_gates: usize,
    pub cnot_gates: usize,
    pub custom_gates: usize,
    pub total_gates: usize,
    pub depth: usize,
}

/// Count gates per kind and compute circuit depth under greedy layering
/// (each gate starts as soon as all its wires are free).
pub fn gate_count_report(circuit: &Circuit) -> CostReport {
    let mut fredkin_gates = 0;
    let mut preparation_gates = 0;
    let mut cnot_gates = 0;
    let mut custom_gates = 0;

    let mut wire_times = vec![0usize; circuit.wires().len()];
    let mut depth = 0;
    for gate in circuit.gates() {
        match gate.kind {
            GateKind::Fredkin => fredkin_gates += 1,
            GateKind::UkSeed { .. } | GateKind::TPair { .. } => preparation_gates += 1,
            GateKind::Cnot => cnot_gates += 1,
            GateKind::CustomUnitary { .. } => custom_gates += 1,
        }
        let start = gate
            .targets
            .iter()
            .map(|&t| wire_times[t])
            .max()
            .unwrap_or(0);
        for &t in &gate.targets {
            wire_times[t] = start + 1;
        }
        depth = depth.max(start + 1);
    }

    CostReport {
        total_wires: circuit.wires().len(),
        data_wires: circuit.data_wires().len(),
        control_wires: circuit.measured_wires().len(),
        fredkin_gates,
        preparation_gates,
        cnot_gates,
        custom_gates,
        total_gates: circuit.gates().len(),
        depth,
    }
}

// --- JSON serialization: {name, params, targets} gate records plus the
// --- wire layout. Documented field-by-field in docs/circuit_format.md.

#[derive(Serialize, Deserialize)]
struct WireDoc {
    label: String,
    dimension: usize,
}

#[derive(Serialize, Deserialize)]
struct GateDoc {
    name: String,
    params: Vec<f64>,
    targets: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct CircuitDoc {
    format_version: u32,
    wires: Vec<WireDoc>,
    data_wires: Vec<usize>,
    measured_wires: Vec<usize>,
    accept_outcome: String,
    gates: Vec<GateDoc>,
}

fn direction(adjoint: bool) -> f64 {
    if adjoint {
        -1.0
    } else {
        1.0
    }
}

impl Serialize for Circuit {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let gates = self
            .gates
            .iter()
            .map(|gate| {
                let params = match &gate.kind {
                    GateKind::UkSeed { k, adjoint } => vec![*k as f64, direction(*adjoint)],
                    GateKind::TPair { k, j, adjoint } => {
                        vec![*k as f64, *j as f64, direction(*adjoint)]
                    }
                    GateKind::Fredkin | GateKind::Cnot => Vec::new(),
                    GateKind::CustomUnitary { matrix } => {
                        let mut flat = Vec::with_capacity(2 * matrix.len());
                        for i in 0..matrix.nrows() {
                            for j in 0..matrix.ncols() {
                                flat.push(matrix[(i, j)].re);
                                flat.push(matrix[(i, j)].im);
                            }
                        }
                        flat
                    }
                };
                GateDoc {
                    name: gate.name().to_string(),
                    params,
                    targets: gate.targets.clone(),
                }
            })
            .collect();
        CircuitDoc {
            format_version: CIRCUIT_FORMAT_VERSION,
            wires: self
                .wires
                .subsystems()
                .iter()
                .map(|s| WireDoc {
                    label: s.label.clone(),
                    dimension: s.dimension,
                })
                .collect(),
            data_wires: self.data_wires.clone(),
            measured_wires: self.measured_wires.clone(),
            accept_outcome: "all_zeros".to_string(),
            gates,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Circuit {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as DeError;
        let doc = CircuitDoc::deserialize(deserializer)?;
        if doc.format_version != CIRCUIT_FORMAT_VERSION {
            return Err(D::Error::custom(format!(
                "unsupported circuit format version {}",
                doc.format_version
            )));
        }
        let wires = HilbertLayout::new(
            doc.wires
                .into_iter()
                .map(|w| (w.label, w.dimension))
                .collect::<Vec<_>>(),
        )
        .map_err(D::Error::custom)?;
        let gates = doc
            .gates
            .into_iter()
            .map(|g| {
                let kind = match g.name.as_str() {
                    "single_qubit_rotation_Uk_seed" => {
                        if g.params.len() != 2 {
                            return Err(D::Error::custom("Uk_seed expects params [k, dir]"));
                        }
                        GateKind::UkSeed {
                            k: g.params[0] as usize,
                            adjoint: g.params[1] < 0.0,
                        }
                    }
                    "two_qubit_T" => {
                        if g.params.len() != 3 {
                            return Err(D::Error::custom("T expects params [k, j, dir]"));
                        }
                        GateKind::TPair {
                            k: g.params[0] as usize,
                            j: g.params[1] as usize,
                            adjoint: g.params[2] < 0.0,
                        }
                    }
                    "fredkin" => GateKind::Fredkin,
                    "cnot" => GateKind::Cnot,
                    "custom_unitary" => {
                        let entries = g.params.len() / 2;
                        let side = (entries as f64).sqrt().round() as usize;
                        if side * side * 2 != g.params.len() {
                            return Err(D::Error::custom("custom_unitary params not square"));
                        }
                        let mut matrix = DMatrix::from_element(side, side, c(0.0, 0.0));
                        for i in 0..side {
                            for j in 0..side {
                                let base = 2 * (i * side + j);
                                matrix[(i, j)] = c(g.params[base], g.params[base + 1]);
                            }
                        }
                        GateKind::CustomUnitary { matrix }
                    }
                    other => return Err(D::Error::custom(format!("unknown gate name `{other}`"))),
                };
                Ok(Gate {
                    kind,
                    targets: g.targets,
                })
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Circuit::new(wires, gates, doc.data_wires, doc.measured_wires).map_err(D::Error::custom)
    }
}
