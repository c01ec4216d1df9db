use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use symstab::circuit::{build_symmetrisation_network, gate_count_report};
use symstab::experiment::{run_experiment, ExperimentConfig, OutputFormat};
use symstab::verify::{run_verification, FaultInjection, VerifyLevel};

/// Simulator and experiment harness for stabilising redundant quantum state
/// storage by repeated projection onto the symmetric subspace.
#[derive(Parser)]
#[command(name = "symstab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Fast,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Emit the R-qubit symmetrisation network as circuit JSON plus a
    /// human-readable gate listing.
    EmitNetwork {
        /// Number of data qubits (2..=6).
        #[arg(long, short = 'r')]
        copies: usize,
        /// Output path for the circuit JSON; the gate listing goes to the
        /// same path with a .txt extension.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the experiment described by a JSON config file.
    Run {
        /// Path to the experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config output path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config output format.
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
    },
    /// Run the invariant suites and report pass/fail per check.
    Verify {
        #[arg(long, value_enum, default_value = "fast")]
        level: LevelArg,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap help/version requests are not errors
            use clap::error::ErrorKind;
            let _ = err.print();
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match cli.command {
        Command::EmitNetwork { copies, out } => emit_network(copies, &out),
        Command::Run {
            config,
            seed,
            out,
            format,
        } => run(&config, seed, out, format),
        Command::Verify { level } => verify(level),
    }
}

fn emit_network(copies: usize, out: &Path) -> ExitCode {
    if !(2..=6).contains(&copies) {
        eprintln!("error: --copies must be between 2 and 6, got {copies}");
        return ExitCode::from(1);
    }
    let circuit = match build_symmetrisation_network(copies) {
        Ok(c) => c,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(1);
        }
    };
    let json = match serde_json::to_string_pretty(&circuit) {
        Ok(mut s) => {
            s.push('\n');
            s
        }
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(1);
        }
    };
    if let Err(err) = std::fs::write(out, json) {
        eprintln!("error: cannot write `{}`: {err}", out.display());
        return ExitCode::from(1);
    }
    let listing_path = out.with_extension("txt");
    if let Err(err) = std::fs::write(&listing_path, circuit.listing()) {
        eprintln!("error: cannot write `{}`: {err}", listing_path.display());
        return ExitCode::from(1);
    }

    let report = gate_count_report(&circuit);
    println!(
        "symmetrisation network for R={copies}: {} wires ({} data + {} auxiliary)",
        report.total_wires, report.data_wires, report.control_wires
    );
    println!(
        "gates: {} total ({} fredkin, {} preparation), depth {}",
        report.total_gates, report.fredkin_gates, report.preparation_gates, report.depth
    );
    println!("wrote {} and {}", out.display(), listing_path.display());
    ExitCode::SUCCESS
}

fn run(
    config_path: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    format: Option<FormatArg>,
) -> ExitCode {
    let mut config = match ExperimentConfig::from_file(config_path) {
        Ok(c) => c,
        Err(err) => {
            eprintln!("error: invalid config: {err}");
            return ExitCode::from(1);
        }
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(out) = &out {
        config.output_path = out.display().to_string();
    }
    if let Some(format) = format {
        config.format = match format {
            FormatArg::Json => OutputFormat::Json,
            FormatArg::Csv => OutputFormat::Csv,
        };
    }
    if let Err(err) = config.validate() {
        eprintln!("error: invalid config: {err}");
        return ExitCode::from(1);
    }

    let record = match run_experiment(&config) {
        Ok(r) => r,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(1);
        }
    };
    // The only environment override: SYMSTAB_OUT_DIR re-roots the output
    // file (by file name) into the given directory.
    let out_path = match std::env::var_os("SYMSTAB_OUT_DIR") {
        Some(dir) => {
            let name = Path::new(&config.output_path)
                .file_name()
                .map(|n| n.to_os_string())
                .unwrap_or_else(|| "run_record.json".into());
            PathBuf::from(dir).join(name)
        }
        None => PathBuf::from(&config.output_path),
    };
    if let Err(err) = record.write_to(&out_path, config.format) {
        eprintln!("error: {err}");
        return ExitCode::from(1);
    }
    for warning in &record.warnings {
        eprintln!("warning: {warning}");
    }
    println!(
        "wrote {} ({:?}, seed {}, {:.1} ms)",
        out_path.display(),
        config.kind,
        config.seed,
        record.wall_time_ms
    );
    ExitCode::SUCCESS
}

fn verify(level: LevelArg) -> ExitCode {
    let level = match level {
        LevelArg::Fast => VerifyLevel::Fast,
        LevelArg::Full => VerifyLevel::Full,
    };
    let results = run_verification(level, FaultInjection::default());
    let mut failures = 0usize;
    for result in &results {
        let status = if result.passed { "PASS" } else { "FAIL" };
        println!("{status} {:35} {}", result.name, result.detail);
        if !result.passed {
            failures += 1;
        }
    }
    if failures > 0 {
        eprintln!("{failures} of {} checks failed", results.len());
        ExitCode::from(2)
    } else {
        println!("all {} checks passed", results.len());
        ExitCode::SUCCESS
    }
}
