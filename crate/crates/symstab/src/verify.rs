//! Named invariant suites behind the `verify` subcommand: `fast` runs the
//! deterministic oracle checks, `full` adds the Monte Carlo reproductions.

use nalgebra::DVector;
use rand::Rng;

use crate::circuit::{
    build_symmetrisation_network, build_uk_circuit, gate_count_report,
    run_projection_via_network, run_projection_via_permutation_ancilla,
};
use crate::error::Result;
use crate::numeric::trial_rng;
use crate::stabilize::{
    linear_fit, run_decoherence_experiment, run_pure_stabilisation_experiment,
    symmetrize_mixed, two_copy_closed_form, watchdog_success_curve, DecoherenceModel,
    DriftModel, GeneratorKind, PureStabilisationOptions,
};
use crate::symspace::{single_qubit_one_probability, SymBasis, SymProjector};
use crate::tensor::{max_abs_diff, C64, DensityOperator, HilbertLayout, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyLevel {
    Fast,
    Full,
}

/// Test-only fault injection used as a negative control: a corrupted
/// projector must make the projector-basis-agreement invariant fail by
/// name.
#[derive(Debug, Clone, Copy, Default)]
pub struct FaultInjection {
    pub corrupt_projector: bool,
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, result: Result<std::result::Result<String, String>>) -> CheckResult {
    match result {
        Ok(Ok(detail)) => CheckResult {
            name,
            passed: true,
            detail,
        },
        Ok(Err(detail)) => CheckResult {
            name,
            passed: false,
            detail,
        },
        Err(err) => CheckResult {
            name,
            passed: false,
            detail: format!("error: {err}"),
        },
    }
}

fn random_qubit_register(copies: usize, seed: u64, trial: u64) -> StateVector {
    let mut rng = trial_rng(seed, trial);
    let layout = HilbertLayout::qubits("q", copies);
    let dim = layout.total_dimension();
    let amps = DVector::from_iterator(
        dim,
        (0..dim).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)),
    );
    let norm = amps.norm();
    StateVector::new(layout, amps.map(|a| a / norm)).expect("normalized by construction")
}

fn random_mixed_qubit(seed: u64, trial: u64, label: &str) -> DensityOperator {
    let mut rng = trial_rng(seed, trial);
    let (x, y, z): (f64, f64, f64) = (
        rng.random::<f64>() - 0.5,
        rng.random::<f64>() - 0.5,
        rng.random::<f64>() - 0.5,
    );
    let norm = (x * x + y * y + z * z).sqrt().max(1e-9);
    let radius = 0.95 * rng.random::<f64>().cbrt();
    let (bx, by, bz) = (radius * x / norm, radius * y / norm, radius * z / norm);
    DensityOperator::new(
        HilbertLayout::single(label, 2).expect("fresh label"),
        nalgebra::DMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(0.5 * (1.0 + bz), 0.0),
                C64::new(0.5 * bx, -0.5 * by),
                C64::new(0.5 * bx, 0.5 * by),
                C64::new(0.5 * (1.0 - bz), 0.0),
            ],
        ),
    )
    .expect("inside the Bloch ball")
}

fn dimension_law() -> Result<std::result::Result<String, String>> {
    use itertools::Itertools;
    for copies in 1..=8usize {
        for d in 1..=4usize {
            let predicted = crate::symspace::symmetric_dimension(copies, d)?;
            let enumerated = (0..d).combinations_with_replacement(copies).count() as u64;
            if predicted != enumerated {
                return Ok(Err(format!(
                    "R={copies} d={d}: formula {predicted}, enumeration {enumerated}"
                )));
            }
        }
    }
    Ok(Ok("R <= 8, d <= 4 all match enumeration".into()))
}

fn basis_orthonormality() -> Result<std::result::Result<String, String>> {
    for (copies, d) in [(2usize, 2usize), (3, 2), (4, 2), (2, 3), (3, 3)] {
        let basis = SymBasis::build(copies, d)?;
        let gram = basis.vectors().adjoint() * basis.vectors();
        for i in 0..basis.dimension() {
            for j in 0..basis.dimension() {
                let expected = if i == j { 1.0 } else { 0.0 };
                let dev = (gram[(i, j)] - C64::new(expected, 0.0)).norm();
                if dev > 1e-12 {
                    return Ok(Err(format!("R={copies} d={d}: gram deviation {dev:.3e}")));
                }
            }
        }
    }
    Ok(Ok("pairwise orthonormal to 1e-12".into()))
}

fn projector_basis_agreement(faults: FaultInjection) -> Result<std::result::Result<String, String>> {
    let mut worst: f64 = 0.0;
    for (copies, d) in [(2usize, 2usize), (3, 2), (4, 2), (2, 3)] {
        let mut from_perms = SymProjector::from_permutation_sum(copies, d)?;
        if faults.corrupt_projector {
            from_perms = corrupt(from_perms);
        }
        let from_basis = SymProjector::from_basis(&SymBasis::build(copies, d)?);
        let dev = max_abs_diff(from_perms.matrix(), from_basis.matrix());
        worst = worst.max(dev);
        if dev > 1e-10 {
            return Ok(Err(format!(
                "R={copies} d={d}: permutation and basis forms differ by {dev:.3e}"
            )));
        }
    }
    Ok(Ok(format!("forms agree, worst deviation {worst:.3e}")))
}

fn corrupt(projector: SymProjector) -> SymProjector {
    // round-trip through JSON to reach the matrix, then bump one entry
    let mut doc: serde_json::Value = serde_json::to_value(&projector).expect("serializable");
    doc["matrix"][0][1][0] = serde_json::json!(1.0e-3);
    serde_json::from_value(doc).expect("still well-formed")
}

fn projector_idempotence() -> Result<std::result::Result<String, String>> {
    for (copies, d) in [(2usize, 2usize), (3, 2), (4, 2)] {
        let s = SymProjector::build(copies, d)?;
        let squared = s.matrix() * s.matrix();
        let dev = max_abs_diff(&squared, s.matrix());
        if dev > 1e-10 {
            return Ok(Err(format!("R={copies} d={d}: S^2 deviates by {dev:.3e}")));
        }
    }
    Ok(Ok("S^2 = S to 1e-10".into()))
}

fn network_structure() -> Result<std::result::Result<String, String>> {
    for copies in 2..=6usize {
        let report = gate_count_report(&build_symmetrisation_network(copies)?);
        let expected = copies * (copies - 1) / 2;
        if report.control_wires != expected || report.fredkin_gates != expected {
            return Ok(Err(format!(
                "R={copies}: {} control wires, {} fredkins, expected {expected}",
                report.control_wires, report.fredkin_gates
            )));
        }
    }
    Ok(Ok("R(R-1)/2 control wires and Fredkin gates for R in 2..=6".into()))
}

fn uk_superposition() -> Result<std::result::Result<String, String>> {
    for k in 1..=4usize {
        let circuit = build_uk_circuit(k)?;
        let out = circuit.apply_all(&StateVector::zero_state(circuit.wires().clone()))?;
        let amp = 1.0 / ((k + 1) as f64).sqrt();
        let mut expected = vec![0usize];
        expected.extend((0..k).map(|j| 1usize << (k - 1 - j)));
        for idx in 0..(1usize << k) {
            let want = if expected.contains(&idx) { amp } else { 0.0 };
            if (out.amplitudes()[idx] - C64::new(want, 0.0)).norm() > 1e-12 {
                return Ok(Err(format!("k={k}: wrong amplitude at index {idx}")));
            }
        }
    }
    Ok(Ok("U_k yields the equal one-hot superposition for k <= 4".into()))
}

fn network_projector_equivalence(
    copies_list: &[usize],
    states_per_r: usize,
) -> Result<std::result::Result<String, String>> {
    let mut worst: f64 = 0.0;
    for &copies in copies_list {
        let network = build_symmetrisation_network(copies)?;
        let projector = SymProjector::build(copies, 2)?;
        for trial in 0..states_per_r {
            let state = random_qubit_register(copies, 0xABCD, trial as u64);
            let mut rng = trial_rng(0xF00D, trial as u64);
            let outcome = run_projection_via_network(&network, &state, &mut rng, false)?;
            let exact = projector.project_pure(&state)?;
            let prob_dev =
                (outcome.exact_accept_probability - exact.success_probability).abs();
            worst = worst.max(prob_dev);
            if prob_dev > 1e-9 {
                return Ok(Err(format!(
                    "R={copies}: accept probability deviates by {prob_dev:.3e}"
                )));
            }
            if outcome.accepted {
                let overlap = outcome
                    .post_state
                    .expect("accepted")
                    .inner(&exact.projected.expect("nonzero"))
                    .norm();
                worst = worst.max((1.0 - overlap).abs());
                if (1.0 - overlap).abs() > 1e-9 {
                    return Ok(Err(format!(
                        "R={copies}: post state overlap {overlap} below 1"
                    )));
                }
            }
        }
    }
    Ok(Ok(format!(
        "network matches exact projector, worst deviation {worst:.3e}"
    )))
}

fn permutation_ancilla_equivalence() -> Result<std::result::Result<String, String>> {
    for copies in 2..=3usize {
        let projector = SymProjector::build(copies, 2)?;
        for trial in 0..5usize {
            let state = random_qubit_register(copies, 0xBEEF, trial as u64);
            let mut rng = trial_rng(0xCAFE, trial as u64);
            let outcome = run_projection_via_permutation_ancilla(&state, &mut rng, false)?;
            let exact = projector.accept_probability(&state)?;
            if (outcome.exact_accept_probability - exact).abs() > 1e-9 {
                return Ok(Err(format!(
                    "R={copies}: ancilla route accept probability off by {:.3e}",
                    (outcome.exact_accept_probability - exact).abs()
                )));
            }
        }
    }
    Ok(Ok("R!-ancilla route matches the exact projector".into()))
}

fn symmetric_marginal_formula() -> Result<std::result::Result<String, String>> {
    for copies in 2..=4usize {
        let basis = SymBasis::build(copies, 2)?;
        for trial in 0..10usize {
            let mut rng = trial_rng(0x5151, trial as u64);
            let mut coeffs: Vec<C64> = (0..=copies)
                .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect();
            let norm: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            for c in &mut coeffs {
                *c /= norm;
            }
            let predicted = single_qubit_one_probability(&coeffs, copies)?;
            let state = basis.state_from_coefficients(&coeffs)?;
            for qubit in 1..=copies {
                let marginal = state.marginal_probabilities(&format!("q{qubit}"))?[1];
                if (marginal - predicted).abs() > 1e-10 {
                    return Ok(Err(format!(
                        "R={copies} qubit {qubit}: marginal {marginal}, formula {predicted}"
                    )));
                }
            }
        }
    }
    Ok(Ok("formula matches Born marginals on every qubit".into()))
}

fn mixed_closed_form() -> Result<std::result::Result<String, String>> {
    for trial in 0..10u64 {
        let rho = random_mixed_qubit(0x1234, trial, "q1");
        let closed = two_copy_closed_form(&rho)?;
        let pair = [
            rho.clone(),
            DensityOperator::new(HilbertLayout::single("q2", 2)?, rho.matrix().clone())?,
        ];
        let reduced = symmetrize_mixed(&pair)?
            .reduced
            .expect("identical copies never vanish");
        let dev = max_abs_diff(reduced.matrix(), closed.matrix());
        if dev > 1e-12 {
            return Ok(Err(format!("closed form deviates by {dev:.3e}")));
        }
    }
    Ok(Ok("permutation route equals (rho + rho^2)/Tr to 1e-12".into()))
}

fn purity_monotonicity(states: usize, copies_max: usize) -> Result<std::result::Result<String, String>> {
    for copies in 2..=copies_max {
        for trial in 0..states as u64 {
            let rho = random_mixed_qubit(0x9876, trial, "q1");
            let list: Vec<DensityOperator> = (0..copies)
                .map(|i| {
                    DensityOperator::new(
                        HilbertLayout::single(format!("q{}", i + 1), 2).expect("unique"),
                        rho.matrix().clone(),
                    )
                    .expect("valid copy")
                })
                .collect();
            let reduced = symmetrize_mixed(&list)?
                .reduced
                .expect("identical copies never vanish");
            if reduced.purity() < rho.purity() - 1e-12 {
                return Ok(Err(format!(
                    "R={copies}: purity fell from {} to {}",
                    rho.purity(),
                    reduced.purity()
                )));
            }
        }
    }
    Ok(Ok("Tr(rho~^2) >= Tr(rho^2) - 1e-12 throughout".into()))
}

fn suppression_ratio() -> Result<std::result::Result<String, String>> {
    let mut ratios = Vec::new();
    for copies in 2..=5usize {
        let model = DriftModel {
            copies,
            epsilon: 0.02,
            delta_t: 0.1,
            seed: 2_024,
        };
        let report = run_pure_stabilisation_experiment(
            &model,
            2,
            2_000,
            &PureStabilisationOptions {
                recorded_trials: 0,
                ..Default::default()
            },
        )?;
        let ratio = match report.suppression_ratio {
            Some(r) => r,
            None => return Ok(Err(format!("R={copies}: protected error vanished"))),
        };
        if (ratio - copies as f64).abs() > 0.25 * copies as f64 {
            return Ok(Err(format!(
                "R={copies}: suppression ratio {ratio:.3} outside 25% of R"
            )));
        }
        ratios.push(ratio);
    }
    let xs: Vec<f64> = (2..=5).map(|r| r as f64).collect();
    let (slope, _, r2) = linear_fit(&xs, &ratios);
    if slope <= 0.0 || r2 < 0.9 {
        return Ok(Err(format!(
            "ratio trend slope {slope:.3}, R^2 {r2:.3}: {ratios:?}"
        )));
    }
    Ok(Ok(format!("ratios {ratios:?} track R (R^2 = {r2:.3})")))
}

fn watchdog_checks() -> Result<std::result::Result<String, String>> {
    // cumulative acceptance grows with the projection rate for R = 3
    let model = DriftModel {
        copies: 3,
        epsilon: 0.5,
        delta_t: 1.0,
        seed: 4_242,
    };
    let report = watchdog_success_curve(&model, &[1, 2, 4, 8, 16, 32], 300)?;
    for (w, e) in report
        .mean_cumulative_accept
        .windows(2)
        .zip(report.std_err_cumulative.windows(2))
    {
        let allowed = 3.0 * (e[0] * e[0] + e[1] * e[1]).sqrt();
        if w[1] < w[0] - allowed {
            return Ok(Err(format!("curve not monotone within 3 sigma: {w:?}")));
        }
    }
    let last = *report.mean_cumulative_accept.last().unwrap();
    if last < 0.99 {
        return Ok(Err(format!("cumulative accept at n=32 is only {last}")));
    }

    // fitted failure coefficient grows linearly with R
    let mut ks = Vec::new();
    let copies_range: Vec<usize> = (2..=6).collect();
    for &copies in &copies_range {
        let model = DriftModel {
            copies,
            epsilon: 0.4,
            delta_t: 1.0,
            seed: 7_777,
        };
        ks.push(watchdog_success_curve(&model, &[1], 300)?.fitted_k);
    }
    let xs: Vec<f64> = copies_range.iter().map(|&r| r as f64).collect();
    let (slope, _, r2) = linear_fit(&xs, &ks);
    if slope <= 0.0 || r2 < 0.9 {
        return Ok(Err(format!("k fit slope {slope:.3e}, R^2 {r2:.3}: {ks:?}")));
    }
    Ok(Ok(format!(
        "curve monotone, accept(n=32) = {last:.5}, k linear in R (R^2 = {r2:.3})"
    )))
}

fn first_order_scaling() -> Result<std::result::Result<String, String>> {
    for copies in 2..=4usize {
        let coarse = run_decoherence_experiment(&DecoherenceModel {
            copies,
            strength: 0.04,
            seed: 90,
            generator_kind: GeneratorKind::Dephasing,
        })?;
        let fine = run_decoherence_experiment(&DecoherenceModel {
            copies,
            strength: 0.02,
            seed: 90,
            generator_kind: GeneratorKind::Dephasing,
        })?;
        let ratio =
            coarse.absolute_deviation.post_fidelity / fine.absolute_deviation.post_fidelity;
        if !(3.0..=5.0).contains(&ratio) {
            return Ok(Err(format!(
                "R={copies}: residual ratio {ratio:.3} outside [3, 5]"
            )));
        }
    }
    Ok(Ok("halving the strength shrinks residuals ~4x".into()))
}

fn purification_monotone() -> Result<std::result::Result<String, String>> {
    let rho = DensityOperator::new(
        HilbertLayout::single("q1", 2)?,
        nalgebra::DMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(0.75, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.25, 0.0),
            ],
        ),
    )?;
    let points = crate::stabilize::purification_limit(&rho, &[1, 2, 3, 4, 5, 6])?;
    if (points[1].dominant_overlap - 21.0 / 26.0).abs() > 1e-12 {
        return Ok(Err(format!(
            "R=2 overlap {}, expected 21/26",
            points[1].dominant_overlap
        )));
    }
    for w in points.windows(2) {
        if w[1].dominant_overlap < w[0].dominant_overlap - 1e-10
            || w[1].purity < w[0].purity - 1e-10
        {
            return Ok(Err("curve not monotone".into()));
        }
    }
    Ok(Ok("fidelity and purity curves nondecreasing, R=2 = 21/26".into()))
}

/// Run the invariant checks at the requested level. `faults` is a test-only
/// hook for negative controls and should be default in production use.
pub fn run_verification(level: VerifyLevel, faults: FaultInjection) -> Vec<CheckResult> {
    let mut results = vec![
        check("dimension-law", dimension_law()),
        check("basis-orthonormality", basis_orthonormality()),
        check(
            "projector-basis-agreement",
            projector_basis_agreement(faults),
        ),
        check("projector-idempotence", projector_idempotence()),
        check("network-structure", network_structure()),
        check("uk-superposition", uk_superposition()),
        check(
            "network-projector-equivalence",
            network_projector_equivalence(&[2, 3], 5),
        ),
        check("symmetric-marginal-formula", symmetric_marginal_formula()),
        check("mixed-closed-form", mixed_closed_form()),
        check("purity-monotonicity", purity_monotonicity(10, 3)),
        check("purification-monotone", purification_monotone()),
    ];
    if level == VerifyLevel::Full {
        results.push(check(
            "network-projector-equivalence-r4",
            network_projector_equivalence(&[4], 20),
        ));
        results.push(check(
            "permutation-ancilla-equivalence",
            permutation_ancilla_equivalence(),
        ));
        results.push(check("purity-monotonicity-full", purity_monotonicity(50, 5)));
        results.push(check("suppression-ratio", suppression_ratio()));
        results.push(check("watchdog", watchdog_checks()));
        results.push(check("first-order-scaling", first_order_scaling()));
    }
    results
}
