//! Declarative experiment configuration, seeded runs, and JSON/CSV report
//! writing for the command line front end.

use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::circuit::{build_symmetrisation_network, run_projection_via_network};
use crate::error::{Error, Result};
use crate::numeric::trial_rng;
use crate::stabilize::{
    purification_limit, run_decoherence_experiment, run_pure_stabilisation_experiment,
    watchdog_success_curve, DecoherenceModel, DecoherenceReport, DriftModel, GeneratorKind,
    PurificationPoint, PureStabilisationOptions, PureStabilisationReport, WatchdogReport,
};
use crate::symspace::SymProjector;
use crate::tensor::{C64, DensityOperator, HilbertLayout, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    PureDrift,
    Watchdog,
    MixedDecoherence,
    PurificationCurve,
    NetworkVerify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Json,
    Csv,
}

/// One self-contained experiment description. A config plus its seed fully
/// determines the statistical output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Redundancy degree R.
    pub copies: usize,
    pub seed: u64,
    pub output_path: String,
    pub format: OutputFormat,
    /// Drift eigenvalue bound (pure_drift, watchdog).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Perturbation strength (mixed_decoherence).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strength: Option<f64>,
    /// Projection interval (pure_drift).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    /// Projections per unit time (watchdog).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<Vec<usize>>,
    /// Redundancy degrees of the purification curve.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_values: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_kind: Option<GeneratorKind>,
    /// Bloch vector of the purification input state rho = (I + r.sigma)/2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bloch_vector: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continue_on_failure: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub use_network_path: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recorded_trials: Option<usize>,
}

fn require<T: Copy>(value: Option<T>, field: &str) -> Result<T> {
    value.ok_or_else(|| Error::InvalidConfig {
        field: field.to_string(),
        reason: "required for this experiment kind".into(),
    })
}

fn require_positive(value: Option<f64>, field: &str) -> Result<f64> {
    let v = require(value, field)?;
    if !v.is_finite() || v <= 0.0 {
        return Err(Error::InvalidConfig {
            field: field.to_string(),
            reason: format!("must be positive, got {v}"),
        });
    }
    Ok(v)
}

fn require_positive_int(value: Option<usize>, field: &str) -> Result<usize> {
    let v = require(value, field)?;
    if v == 0 {
        return Err(Error::InvalidConfig {
            field: field.to_string(),
            reason: "must be positive".into(),
        });
    }
    Ok(v)
}

fn require_nonnegative(value: Option<f64>, field: &str) -> Result<f64> {
    let v = require(value, field)?;
    if !v.is_finite() || v < 0.0 {
        return Err(Error::InvalidConfig {
            field: field.to_string(),
            reason: format!("must be nonnegative, got {v}"),
        });
    }
    Ok(v)
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.copies == 0 {
            return Err(Error::InvalidConfig {
                field: "copies".into(),
                reason: "must be at least 1".into(),
            });
        }
        match self.kind {
            ExperimentKind::PureDrift => {
                require_nonnegative(self.epsilon, "epsilon")?;
                require_positive(self.delta_t, "delta_t")?;
                require_positive_int(self.steps, "steps")?;
                require_positive_int(self.trials, "trials")?;
            }
            ExperimentKind::Watchdog => {
                require_nonnegative(self.epsilon, "epsilon")?;
                require_positive_int(self.trials, "trials")?;
                let rates = self.rates.as_ref().ok_or_else(|| Error::InvalidConfig {
                    field: "rates".into(),
                    reason: "required for this experiment kind".into(),
                })?;
                if rates.is_empty() || rates.contains(&0) {
                    return Err(Error::InvalidConfig {
                        field: "rates".into(),
                        reason: "need at least one positive rate".into(),
                    });
                }
            }
            ExperimentKind::MixedDecoherence => {
                let strength = require_nonnegative(self.strength, "strength")?;
                if strength > DecoherenceModel::MAX_STRENGTH {
                    return Err(Error::InvalidConfig {
                        field: "strength".into(),
                        reason: format!("must be at most {}", DecoherenceModel::MAX_STRENGTH),
                    });
                }
            }
            ExperimentKind::PurificationCurve => {
                let values = self.r_values.as_ref().ok_or_else(|| Error::InvalidConfig {
                    field: "r_values".into(),
                    reason: "required for this experiment kind".into(),
                })?;
                if values.is_empty() || values.contains(&0) {
                    return Err(Error::InvalidConfig {
                        field: "r_values".into(),
                        reason: "need at least one positive R".into(),
                    });
                }
                if let Some(b) = self.bloch_vector {
                    let len = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
                    if len > 1.0 {
                        return Err(Error::InvalidConfig {
                            field: "bloch_vector".into(),
                            reason: format!("length {len} exceeds the Bloch ball"),
                        });
                    }
                }
            }
            ExperimentKind::NetworkVerify => {
                if self.copies < 2 {
                    return Err(Error::InvalidConfig {
                        field: "copies".into(),
                        reason: "network verification needs R >= 2".into(),
                    });
                }
                require_positive_int(self.trials, "trials")?;
            }
        }
        Ok(())
    }
}

/// Network-vs-projector comparison over seeded random states.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkVerifyReport {
    pub copies: usize,
    pub trials: usize,
    pub max_probability_deviation: f64,
    pub max_state_deviation: f64,
    pub accepted_trials: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PurificationCurveReport {
    pub bloch_vector: [f64; 3],
    pub points: Vec<PurificationPoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "result_kind", rename_all = "snake_case")]
pub enum ExperimentResults {
    PureDrift(PureStabilisationReport),
    Watchdog(WatchdogReport),
    MixedDecoherence(DecoherenceReport),
    PurificationCurve(PurificationCurveReport),
    NetworkVerify(NetworkVerifyReport),
}

/// A finished run: the config echo, library version, wall time and results.
/// Identical (config, seed) pairs reproduce everything except wall_time_ms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub library_version: String,
    pub wall_time_ms: f64,
    pub warnings: Vec<String>,
    pub results: ExperimentResults,
}

fn bloch_state(b: [f64; 3]) -> Result<DensityOperator> {
    let m = DMatrix::from_row_slice(
        2,
        2,
        &[
            C64::new(0.5 * (1.0 + b[2]), 0.0),
            C64::new(0.5 * b[0], -0.5 * b[1]),
            C64::new(0.5 * b[0], 0.5 * b[1]),
            C64::new(0.5 * (1.0 - b[2]), 0.0),
        ],
    );
    DensityOperator::new(HilbertLayout::single("q1", 2)?, m)
}

fn run_network_verify(config: &ExperimentConfig) -> Result<NetworkVerifyReport> {
    use rand::Rng;
    let copies = config.copies;
    let trials = config.trials.unwrap_or(20);
    let network = build_symmetrisation_network(copies)?;
    let projector = SymProjector::build(copies, 2)?;
    let layout = HilbertLayout::qubits("q", copies);
    let dim = layout.total_dimension();

    let mut max_prob_dev: f64 = 0.0;
    let mut max_state_dev: f64 = 0.0;
    let mut accepted = 0usize;
    for trial in 0..trials {
        let mut rng = trial_rng(config.seed, trial as u64);
        let amps = nalgebra::DVector::from_iterator(
            dim,
            (0..dim).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)),
        );
        let norm = amps.norm();
        let state = StateVector::new(layout.clone(), amps.map(|a| a / norm))?;

        let outcome = run_projection_via_network(&network, &state, &mut rng, false)?;
        let exact = projector.project_pure(&state)?;
        max_prob_dev = max_prob_dev
            .max((outcome.exact_accept_probability - exact.success_probability).abs());
        if outcome.accepted {
            accepted += 1;
            let post = outcome.post_state.expect("accepted outcome has a state");
            let expected = exact.projected.expect("accepting implies nonzero projection");
            let overlap = post.inner(&expected).norm();
            max_state_dev = max_state_dev.max((1.0 - overlap).abs());
        }
    }
    Ok(NetworkVerifyReport {
        copies,
        trials,
        max_probability_deviation: max_prob_dev,
        max_state_deviation: max_state_dev,
        accepted_trials: accepted,
        passed: max_prob_dev < 1e-9 && max_state_dev < 1e-9,
    })
}

/// Execute the configured experiment. Deterministic given (config, seed).
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunRecord> {
    config.validate()?;
    let started = Instant::now();
    let mut warnings = Vec::new();

    let results = match config.kind {
        ExperimentKind::PureDrift => {
            let model = DriftModel {
                copies: config.copies,
                epsilon: config.epsilon.expect("validated"),
                delta_t: config.delta_t.expect("validated"),
                seed: config.seed,
            };
            let options = PureStabilisationOptions {
                continue_on_failure: config.continue_on_failure.unwrap_or(false),
                recorded_trials: config.recorded_trials.unwrap_or(1),
                use_network_path: config.use_network_path.unwrap_or(false),
            };
            let report = run_pure_stabilisation_experiment(
                &model,
                config.steps.expect("validated"),
                config.trials.expect("validated"),
                &options,
            )?;
            if report.all_trials_aborted {
                warnings.push("all trials aborted on a failed projection".to_string());
            }
            ExperimentResults::PureDrift(report)
        }
        ExperimentKind::Watchdog => {
            let model = DriftModel {
                copies: config.copies,
                epsilon: config.epsilon.expect("validated"),
                delta_t: 1.0,
                seed: config.seed,
            };
            let report = watchdog_success_curve(
                &model,
                config.rates.as_ref().expect("validated"),
                config.trials.expect("validated"),
            )?;
            ExperimentResults::Watchdog(report)
        }
        ExperimentKind::MixedDecoherence => {
            let model = DecoherenceModel {
                copies: config.copies,
                strength: config.strength.expect("validated"),
                seed: config.seed,
                generator_kind: config
                    .generator_kind
                    .unwrap_or(GeneratorKind::RandomTraceless),
            };
            ExperimentResults::MixedDecoherence(run_decoherence_experiment(&model)?)
        }
        ExperimentKind::PurificationCurve => {
            let bloch = config.bloch_vector.unwrap_or([0.0, 0.0, 0.5]);
            let rho = bloch_state(bloch)?;
            let points =
                purification_limit(&rho, config.r_values.as_ref().expect("validated"))?;
            ExperimentResults::PurificationCurve(PurificationCurveReport {
                bloch_vector: bloch,
                points,
            })
        }
        ExperimentKind::NetworkVerify => {
            let report = run_network_verify(config)?;
            if !report.passed {
                warnings.push("network deviates from the exact projector".to_string());
            }
            ExperimentResults::NetworkVerify(report)
        }
    };

    Ok(RunRecord {
        config: config.clone(),
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
        warnings,
        results,
    })
}

impl RunRecord {
    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    /// CSV view of the results ('.' decimal, LF endings, header row).
    /// Column layouts are documented in docs/file_formats.md.
    pub fn to_csv(&self) -> String {
        match &self.results {
            ExperimentResults::PureDrift(report) => report
                .trajectories
                .first()
                .map(|t| t.to_csv())
                .unwrap_or_else(|| {
                    crate::stabilize::TrajectoryRecord::CSV_HEADER.to_string() + "\n"
                }),
            ExperimentResults::Watchdog(report) => {
                let mut out = String::from("rate,mean_cumulative_accept,std_err\n");
                for ((rate, mean), err) in report
                    .rates
                    .iter()
                    .zip(&report.mean_cumulative_accept)
                    .zip(&report.std_err_cumulative)
                {
                    out.push_str(&format!("{rate},{mean},{err}\n"));
                }
                out
            }
            ExperimentResults::MixedDecoherence(report) => {
                let mut out = String::from(
                    "quantity,measured,first_order,absolute_deviation\n",
                );
                let rows = [
                    (
                        "pre_fidelity",
                        report.measured.pre_fidelity,
                        report.first_order.pre_fidelity,
                        report.absolute_deviation.pre_fidelity,
                    ),
                    (
                        "post_fidelity",
                        report.measured.post_fidelity,
                        report.first_order.post_fidelity,
                        report.absolute_deviation.post_fidelity,
                    ),
                    (
                        "pre_purity",
                        report.measured.pre_purity,
                        report.first_order.pre_purity,
                        report.absolute_deviation.pre_purity,
                    ),
                    (
                        "post_purity",
                        report.measured.post_purity,
                        report.first_order.post_purity,
                        report.absolute_deviation.post_purity,
                    ),
                ];
                for (name, measured, first, dev) in rows {
                    out.push_str(&format!("{name},{measured},{first},{dev}\n"));
                }
                out
            }
            ExperimentResults::PurificationCurve(report) => {
                let mut out =
                    String::from("copies,purity,dominant_overlap,accept_probability\n");
                for p in &report.points {
                    out.push_str(&format!(
                        "{},{},{},{}\n",
                        p.copies, p.purity, p.dominant_overlap, p.accept_probability
                    ));
                }
                out
            }
            ExperimentResults::NetworkVerify(report) => {
                format!(
                    "copies,trials,max_probability_deviation,max_state_deviation,accepted_trials,passed\n{},{},{},{},{},{}\n",
                    report.copies,
                    report.trials,
                    report.max_probability_deviation,
                    report.max_state_deviation,
                    report.accepted_trials,
                    report.passed
                )
            }
        }
    }

    /// Write to `path` in the configured format.
    pub fn write_to(&self, path: &Path, format: OutputFormat) -> Result<()> {
        let payload = match format {
            OutputFormat::Json => self.to_json()?,
            OutputFormat::Csv => self.to_csv(),
        };
        fs::write(path, payload).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config(kind: ExperimentKind) -> ExperimentConfig {
        ExperimentConfig {
            kind,
            copies: 2,
            seed: 11,
            output_path: "out.json".into(),
            format: OutputFormat::Json,
            epsilon: Some(0.05),
            strength: Some(0.02),
            delta_t: Some(0.1),
            steps: Some(2),
            trials: Some(5),
            rates: Some(vec![1, 2, 4]),
            r_values: Some(vec![1, 2, 3]),
            generator_kind: Some(GeneratorKind::Dephasing),
            bloch_vector: Some([0.0, 0.0, 0.5]),
            continue_on_failure: None,
            use_network_path: None,
            recorded_trials: None,
        }
    }

    #[test]
    fn config_round_trips_through_json() {
        let config = base_config(ExperimentKind::PureDrift);
        let json = serde_json::to_string_pretty(&config).unwrap();
        let back = ExperimentConfig::from_json(&json).unwrap();
        assert_eq!(back, config);
        let json2 = serde_json::to_string_pretty(&back).unwrap();
        assert_eq!(json, json2);
    }

    #[test]
    fn missing_required_field_is_named() {
        let mut config = base_config(ExperimentKind::PureDrift);
        config.delta_t = None;
        match config.validate() {
            Err(Error::InvalidConfig { field, .. }) => assert_eq!(field, "delta_t"),
            other => panic!("expected invalid config, got {other:?}"),
        }
        let mut config = base_config(ExperimentKind::Watchdog);
        config.rates = Some(vec![]);
        assert!(config.validate().is_err());
        let mut config = base_config(ExperimentKind::MixedDecoherence);
        config.strength = Some(2.0);
        assert!(config.validate().is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let json = r#"{"kind":"pure_drift","copies":2,"seed":1,"output_path":"x","format":"json","bogus":3}"#;
        assert!(ExperimentConfig::from_json(json).is_err());
    }

    #[test]
    fn identical_seeds_give_identical_records() {
        let config = base_config(ExperimentKind::PureDrift);
        let a = run_experiment(&config).unwrap();
        let b = run_experiment(&config).unwrap();
        let mut ja: serde_json::Value = serde_json::from_str(&a.to_json().unwrap()).unwrap();
        let mut jb: serde_json::Value = serde_json::from_str(&b.to_json().unwrap()).unwrap();
        ja["wall_time_ms"] = 0.0.into();
        jb["wall_time_ms"] = 0.0.into();
        assert_eq!(ja, jb);
    }

    #[test]
    fn all_kinds_run_and_serialize() {
        for kind in [
            ExperimentKind::PureDrift,
            ExperimentKind::Watchdog,
            ExperimentKind::MixedDecoherence,
            ExperimentKind::PurificationCurve,
            ExperimentKind::NetworkVerify,
        ] {
            let record = run_experiment(&base_config(kind)).unwrap();
            let json = record.to_json().unwrap();
            assert!(json.contains("library_version"), "{kind:?}");
            let csv = record.to_csv();
            assert!(csv.lines().count() >= 2, "{kind:?}: {csv}");
            assert!(csv.ends_with('\n'));
        }
    }

    #[test]
    fn network_verify_passes_for_small_r() {
        let mut config = base_config(ExperimentKind::NetworkVerify);
        config.copies = 3;
        config.trials = Some(8);
        let record = run_experiment(&config).unwrap();
        match record.results {
            ExperimentResults::NetworkVerify(report) => {
                assert!(report.passed);
                assert!(report.max_probability_deviation < 1e-9);
            }
            _ => unreachable!(),
        }
    }
}
