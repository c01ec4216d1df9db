//! Acceptance suite: one test per headline requirement, each printing a
//! PASS/FAIL line (run with `cargo test --test acceptance -- --nocapture`
//! to see them). Expected values come from independent oracles computed in
//! this file, never from the code under test.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use symstab::circuit::{
    build_symmetrisation_network, gate_count_report, run_projection_via_network,
};
use symstab::experiment::{run_experiment, ExperimentConfig, ExperimentKind, OutputFormat};
use symstab::numeric::trial_rng;
use symstab::stabilize::{
    linear_fit, purification_limit, run_decoherence_experiment,
    run_pure_stabilisation_experiment, symmetrize_mixed, two_copy_closed_form,
    DecoherenceModel, DriftModel, GeneratorKind, PureStabilisationOptions,
};
use symstab::symspace::{single_qubit_one_probability, symmetric_dimension, SymBasis, SymProjector};
use symstab::tensor::{max_abs_diff, C64, DensityOperator, HilbertLayout, StateVector};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn conclude(criterion: &str, violations: Vec<String>) {
    if violations.is_empty() {
        println!("ACCEPTANCE {criterion}: PASS");
    } else {
        println!("ACCEPTANCE {criterion}: FAIL");
        for v in &violations {
            println!("  - {v}");
        }
    }
    assert!(violations.is_empty(), "{criterion} failed: {violations:?}");
}

fn random_state(copies: usize, seed: u64, trial: u64) -> StateVector {
    let mut rng = trial_rng(seed, trial);
    let layout = HilbertLayout::qubits("q", copies);
    let dim = layout.total_dimension();
    let amps = DVector::from_iterator(
        dim,
        (0..dim).map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)),
    );
    let norm = amps.norm();
    StateVector::new(layout, amps.map(|a| a / norm)).unwrap()
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
        HilbertLayout::single(label, 2).unwrap(),
        DMatrix::from_row_slice(
            2,
            2,
            &[
                c(0.5 * (1.0 + bz), 0.0),
                c(0.5 * bx, -0.5 * by),
                c(0.5 * bx, 0.5 * by),
                c(0.5 * (1.0 - bz), 0.0),
            ],
        ),
    )
    .unwrap()
}

/// Independent multiset counter: recursive enumeration of non-decreasing
/// digit strings, deliberately avoiding the library's own combinatorics.
fn count_multisets(copies: usize, d: usize) -> u64 {
    fn go(remaining: usize, min_digit: usize, d: usize) -> u64 {
        if remaining == 0 {
            return 1;
        }
        (min_digit..d).map(|next| go(remaining - 1, next, d)).sum()
    }
    go(copies, 0, d)
}

#[test]
fn c01_dimension_law() {
    let mut violations = Vec::new();
    for copies in 1..=8usize {
        for d in 1..=4usize {
            let formula = symmetric_dimension(copies, d).unwrap();
            let oracle = count_multisets(copies, d);
            if formula != oracle {
                violations.push(format!("R={copies} d={d}: formula {formula}, oracle {oracle}"));
            }
        }
    }
    if symmetric_dimension(3, 2).unwrap() != 4 {
        violations.push("R=3 qubits must give dimension 4".into());
    }
    conclude("c01 dimension-law", violations);
}

#[test]
fn c02_network_projector_equivalence() {
    let mut violations = Vec::new();
    for copies in 2..=4usize {
        let network = build_symmetrisation_network(copies).unwrap();
        let projector = SymProjector::build(copies, 2).unwrap();
        let mut rng = trial_rng(0xC2, copies as u64);
        for trial in 0..100u64 {
            let data = random_state(copies, 0xC2C2, trial + 1000 * copies as u64);
            let outcome = run_projection_via_network(&network, &data, &mut rng, false).unwrap();
            let exact = projector.project_pure(&data).unwrap();
            let prob_dev = (outcome.exact_accept_probability - exact.success_probability).abs();
            if prob_dev > 1e-9 {
                violations.push(format!(
                    "R={copies} trial {trial}: accept probability deviates by {prob_dev:.3e}"
                ));
            }
            if outcome.accepted {
                let post = outcome.post_state.unwrap();
                let expected = exact.projected.unwrap();
                let overlap = post.inner(&expected).norm();
                if (1.0 - overlap).abs() > 1e-9 {
                    violations.push(format!(
                        "R={copies} trial {trial}: post state overlap {overlap}"
                    ));
                }
            }
            if violations.len() > 5 {
                break;
            }
        }
    }
    conclude("c02 network-projector-equivalence", violations);
}

#[test]
fn c03_network_structure() {
    let mut violations = Vec::new();
    let report4 = gate_count_report(&build_symmetrisation_network(4).unwrap());
    if report4.control_wires != 6 {
        violations.push(format!("R=4 has {} auxiliary wires, want 6", report4.control_wires));
    }
    if report4.fredkin_gates != 6 {
        violations.push(format!("R=4 has {} Fredkin gates, want 6", report4.fredkin_gates));
    }
    for copies in 2..=6usize {
        let report = gate_count_report(&build_symmetrisation_network(copies).unwrap());
        let expected = copies * (copies - 1) / 2;
        if report.control_wires != expected {
            violations.push(format!(
                "R={copies}: {} auxiliary wires, want {expected}",
                report.control_wires
            ));
        }
    }
    conclude("c03 network-structure", violations);
}

#[test]
fn c04_symmetric_measurement_formula() {
    let mut violations = Vec::new();
    for copies in 2..=5usize {
        let basis = SymBasis::build(copies, 2).unwrap();
        for trial in 0..25u64 {
            let mut rng = trial_rng(0xC4, trial + 100 * copies as u64);
            let mut coeffs: Vec<C64> = (0..=copies)
                .map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect();
            let norm: f64 = coeffs.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            for x in &mut coeffs {
                *x /= norm;
            }
            let formula = single_qubit_one_probability(&coeffs, copies).unwrap();
            let state = basis.state_from_coefficients(&coeffs).unwrap();
            for qubit in 1..=copies {
                let marginal = state
                    .marginal_probabilities(&format!("q{qubit}"))
                    .unwrap()[1];
                if (marginal - formula).abs() > 1e-10 {
                    violations.push(format!(
                        "R={copies} qubit {qubit}: marginal {marginal} vs formula {formula}"
                    ));
                }
            }
            if violations.len() > 5 {
                break;
            }
        }
    }
    conclude("c04 symmetric-measurement-formula", violations);
}

#[test]
fn c05_error_suppression_ratio() {
    let mut violations = Vec::new();
    let mut ratios = Vec::new();
    for copies in 2..=5usize {
        let model = DriftModel {
            copies,
            epsilon: 0.02,
            delta_t: 0.1,
            seed: 20_240_205,
        };
        let report = run_pure_stabilisation_experiment(
            &model,
            2,
            10_000,
            &PureStabilisationOptions {
                recorded_trials: 0,
                ..Default::default()
            },
        )
        .unwrap();
        match report.suppression_ratio {
            Some(ratio) => {
                if (ratio - copies as f64).abs() > 0.25 * copies as f64 {
                    violations.push(format!(
                        "R={copies}: ratio {ratio:.4} outside 25% of {copies}"
                    ));
                }
                ratios.push(ratio);
            }
            None => violations.push(format!("R={copies}: protected error vanished")),
        }
    }
    if ratios.len() == 4 {
        let xs: Vec<f64> = (2..=5).map(|r| r as f64).collect();
        let (slope, _, r2) = linear_fit(&xs, &ratios);
        if slope <= 0.0 {
            violations.push(format!("ratio trend slope {slope:.3} not positive"));
        }
        if r2 < 0.9 {
            violations.push(format!("ratio trend fit R^2 {r2:.3} below 0.9"));
        }
        println!("  suppression ratios vs R in 2..=5: {ratios:?} (fit R^2 = {r2:.4})");
    }
    conclude("c05 one-over-r-suppression", violations);
}

#[test]
fn c06_watchdog_limit() {
    let mut violations = Vec::new();

    // cumulative all-accept probability over a unit interval, R = 3
    let model = DriftModel {
        copies: 3,
        epsilon: 0.5,
        delta_t: 1.0,
        seed: 606,
    };
    let rates = [1usize, 2, 4, 8, 16, 32];
    let curve = symstab::stabilize::watchdog_success_curve(&model, &rates, 400).unwrap();
    for (w, e) in curve
        .mean_cumulative_accept
        .windows(2)
        .zip(curve.std_err_cumulative.windows(2))
    {
        let allowed = 3.0 * (e[0] * e[0] + e[1] * e[1]).sqrt();
        if w[1] < w[0] - allowed {
            violations.push(format!("curve not monotone within 3 sigma: {w:?}"));
        }
    }
    let last = *curve.mean_cumulative_accept.last().unwrap();
    if last < 0.99 {
        violations.push(format!("cumulative accept at n=32 is {last}, want > 0.99"));
    }
    println!(
        "  watchdog curve (R=3): {:?}",
        curve
            .mean_cumulative_accept
            .iter()
            .map(|p| (p * 1e4).round() / 1e4)
            .collect::<Vec<_>>()
    );

    // single-step failure coefficient k grows linearly with R
    let copies_range: Vec<usize> = (2..=6).collect();
    let mut ks = Vec::new();
    for &copies in &copies_range {
        let model = DriftModel {
            copies,
            epsilon: 0.4,
            delta_t: 1.0,
            seed: 616,
        };
        ks.push(
            symstab::stabilize::watchdog_success_curve(&model, &[1], 400)
                .unwrap()
                .fitted_k,
        );
    }
    let xs: Vec<f64> = copies_range.iter().map(|&r| r as f64).collect();
    let (slope, _, r2) = linear_fit(&xs, &ks);
    if slope <= 0.0 {
        violations.push(format!("k slope {slope:.3e} not positive: {ks:?}"));
    }
    if r2 < 0.9 {
        violations.push(format!("k fit R^2 {r2:.3} below 0.9: {ks:?}"));
    }
    println!("  fitted k vs R in 2..=6: {ks:?} (fit R^2 = {r2:.4})");
    conclude("c06 watchdog-limit", violations);
}

#[test]
fn c07_mixed_state_closed_form() {
    let mut violations = Vec::new();

    // the worked diagonal example, exactly
    let rho = DensityOperator::new(
        HilbertLayout::single("q1", 2).unwrap(),
        DMatrix::from_diagonal(&DVector::from_vec(vec![c(0.75, 0.0), c(0.25, 0.0)])),
    )
    .unwrap();
    let closed = two_copy_closed_form(&rho).unwrap();
    if (closed.matrix()[(0, 0)].re - 21.0 / 26.0).abs() > 1e-12
        || (closed.matrix()[(1, 1)].re - 5.0 / 26.0).abs() > 1e-12
    {
        violations.push(format!(
            "diag(3/4,1/4) gave diag({}, {}), want diag(21/26, 5/26)",
            closed.matrix()[(0, 0)].re,
            closed.matrix()[(1, 1)].re
        ));
    }

    for trial in 0..50u64 {
        let rho = random_mixed_qubit(0xC7, trial, "q1");
        let closed = two_copy_closed_form(&rho).unwrap();
        let pair = [
            rho.clone(),
            DensityOperator::new(HilbertLayout::single("q2", 2).unwrap(), rho.matrix().clone())
                .unwrap(),
        ];
        let reduced = symmetrize_mixed(&pair).unwrap().reduced.unwrap();
        let dev = max_abs_diff(reduced.matrix(), closed.matrix());
        if dev > 1e-12 {
            violations.push(format!("trial {trial}: routes deviate by {dev:.3e}"));
        }
    }
    conclude("c07 mixed-state-closed-form", violations);
}

#[test]
fn c08_purity_monotonicity() {
    let mut violations = Vec::new();
    let mut checked = 0usize;
    'outer: for copies in 2..=5usize {
        for trial in 0..50u64 {
            let rho = random_mixed_qubit(0xC8, trial + 1000 * copies as u64, "q1");
            let list: Vec<DensityOperator> = (0..copies)
                .map(|i| {
                    DensityOperator::new(
                        HilbertLayout::single(format!("q{}", i + 1), 2).unwrap(),
                        rho.matrix().clone(),
                    )
                    .unwrap()
                })
                .collect();
            let reduced = symmetrize_mixed(&list).unwrap().reduced.unwrap();
            checked += 1;
            if reduced.purity() < rho.purity() - 1e-12 {
                violations.push(format!(
                    "R={copies} trial {trial}: purity {} fell below {}",
                    reduced.purity(),
                    rho.purity()
                ));
                if violations.len() > 5 {
                    break 'outer;
                }
            }
        }
    }
    assert_eq!(checked, 200);

    // purification fidelity nondecreasing in R for diagonal states
    for p in [0.6, 0.75, 0.9] {
        let rho = DensityOperator::new(
            HilbertLayout::single("q1", 2).unwrap(),
            DMatrix::from_diagonal(&DVector::from_vec(vec![c(p, 0.0), c(1.0 - p, 0.0)])),
        )
        .unwrap();
        let points = purification_limit(&rho, &[1, 2, 3, 4, 5, 6]).unwrap();
        for w in points.windows(2) {
            if w[1].dominant_overlap < w[0].dominant_overlap - 1e-10 {
                violations.push(format!(
                    "p={p}: fidelity fell from {} (R={}) to {} (R={})",
                    w[0].dominant_overlap, w[0].copies, w[1].dominant_overlap, w[1].copies
                ));
            }
        }
    }
    conclude("c08 purity-monotonicity", violations);
}

#[test]
fn c09_first_order_laws() {
    let mut violations = Vec::new();
    for copies in 2..=4usize {
        let coarse = run_decoherence_experiment(&DecoherenceModel {
            copies,
            strength: 0.04,
            seed: 909,
            generator_kind: GeneratorKind::Dephasing,
        })
        .unwrap();
        let fine = run_decoherence_experiment(&DecoherenceModel {
            copies,
            strength: 0.02,
            seed: 909,
            generator_kind: GeneratorKind::Dephasing,
        })
        .unwrap();
        for (name, coarse_dev, fine_dev) in [
            (
                "post_fidelity",
                coarse.absolute_deviation.post_fidelity,
                fine.absolute_deviation.post_fidelity,
            ),
            (
                "post_purity",
                coarse.absolute_deviation.post_purity,
                fine.absolute_deviation.post_purity,
            ),
        ] {
            let ratio = coarse_dev / fine_dev;
            if !(3.0..=5.0).contains(&ratio) {
                violations.push(format!(
                    "R={copies} {name}: residual ratio {ratio:.3} outside [3, 5]"
                ));
            }
        }
    }
    conclude("c09 first-order-laws", violations);
}

#[test]
fn c10_determinism() {
    let mut violations = Vec::new();

    let configs = [
        ExperimentConfig {
            kind: ExperimentKind::PureDrift,
            copies: 3,
            seed: 1010,
            output_path: "unused".into(),
            format: OutputFormat::Json,
            epsilon: Some(0.02),
            strength: None,
            delta_t: Some(0.1),
            steps: Some(3),
            trials: Some(50),
            rates: None,
            r_values: None,
            generator_kind: None,
            bloch_vector: None,
            continue_on_failure: None,
            use_network_path: None,
            recorded_trials: None,
        },
        ExperimentConfig {
            kind: ExperimentKind::Watchdog,
            copies: 2,
            seed: 42,
            output_path: "unused".into(),
            format: OutputFormat::Json,
            epsilon: Some(0.3),
            strength: None,
            delta_t: None,
            steps: None,
            trials: Some(40),
            rates: Some(vec![1, 2, 4]),
            r_values: None,
            generator_kind: None,
            bloch_vector: None,
            continue_on_failure: None,
            use_network_path: None,
            recorded_trials: None,
        },
    ];
    for config in &configs {
        let a = run_experiment(config).unwrap();
        let b = run_experiment(config).unwrap();
        let ja = serde_json::to_value(&a.results).unwrap();
        let jb = serde_json::to_value(&b.results).unwrap();
        if ja != jb {
            violations.push(format!("{:?}: repeated run differs", config.kind));
        }
        let bytes_a = serde_json::to_string(&ja).unwrap();
        let bytes_b = serde_json::to_string(&jb).unwrap();
        if bytes_a != bytes_b {
            violations.push(format!("{:?}: serialized bytes differ", config.kind));
        }
    }
    conclude("c10 determinism", violations);
}
