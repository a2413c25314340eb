//! Command-line front end. Exit codes: 0 success, 1 output write failure,
//! 2 configuration or usage error, 3 internal invariant violation.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use super::config::{CircuitConfig, DEFAULT_COHERENCE_FS, DEFAULT_PUMP_FS};
use super::{
    build_canonical_circuit, run_entangler, run_feed_forward, run_hom_scan, run_noise_study,
    run_truth_table, ExperimentReport,
};
use crate::elements::DistinguishabilityModel;
use crate::error::{Error, Result};
use crate::sources::{InputSpec, SourceModel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "fockgate", version, about = "Exact simulation of a heralded linear-optical CNOT")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Conditional output probabilities for the four computational inputs.
    TruthTable(Common),
    /// Entangling run with populations, ± correlations and fidelities.
    Entangle(Common),
    /// Delay scan of the ± coincidences.
    HomScan {
        #[command(flatten)]
        common: Common,
        /// Number of delay points.
        #[arg(long, default_value_t = 21)]
        points: usize,
        /// Half-width of the scan in coherence times.
        #[arg(long, default_value_t = 5.0)]
        span: f64,
    },
    /// Double-pair noise study.
    Noise(Common),
    /// Pauli corrections for every herald outcome.
    FeedForward(Common),
    /// Element list of the configured circuit.
    DumpCircuit(Common),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Deterministic single photons and a single ancilla pair.
    #[arg(long, conflicts_with = "epsilon")]
    ideal: bool,
    /// SPDC pair amplitude ε in [0, 0.3].
    #[arg(long)]
    epsilon: Option<f64>,
    /// Input qubits, e.g. `HV`, `+H`, or `re,im; re,im; re,im; re,im`.
    #[arg(long)]
    input: Option<String>,
    /// Delay of the ancilla pair in fs; enables the distinguishability model.
    #[arg(long)]
    delay: Option<f64>,
    /// Pump pulse duration in fs.
    #[arg(long)]
    pump: Option<f64>,
    /// Filtered coherence time in fs.
    #[arg(long)]
    coherence: Option<f64>,
    /// Lab-style four-fold conditioning instead of exact projection.
    #[arg(long)]
    threshold_inference: bool,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format; truth-table and hom-scan default to CSV.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

impl Common {
    fn resolve(&self) -> Result<CircuitConfig> {
        let mut c = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                CircuitConfig::from_toml(&text)?
            }
            None => CircuitConfig::ideal(),
        };
        if self.ideal {
            c.sources = SourceModel::Ideal;
        }
        if let Some(e) = self.epsilon {
            c = c.with_epsilon(e)?;
        }
        if let Some(i) = &self.input {
            c.input = InputSpec::parse(i)?;
        }
        if self.delay.is_some() || self.pump.is_some() || self.coherence.is_some() {
            let base = c.distinguishability.unwrap_or(DistinguishabilityModel {
                pump_duration_fs: DEFAULT_PUMP_FS,
                coherence_time_fs: DEFAULT_COHERENCE_FS,
                delay_fs: 0.0,
            });
            c = c.with_distinguishability(DistinguishabilityModel {
                pump_duration_fs: self.pump.unwrap_or(base.pump_duration_fs),
                coherence_time_fs: self.coherence.unwrap_or(base.coherence_time_fs),
                delay_fs: self.delay.unwrap_or(base.delay_fs),
            })?;
        }
        if self.threshold_inference {
            c = c.with_threshold_inference(true);
        }
        Ok(c)
    }
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Invariant(_)
        | Error::NoFeedForward(_)
        | Error::NotQubitState(_)
        | Error::NonNormalizedState(_)
        | Error::RegistryMismatch
        | Error::InvalidElement { .. }
        | Error::CutoffExceeded { .. } => EXIT_INVARIANT,
        _ => EXIT_CONFIG,
    }
}

fn render(report: &ExperimentReport, format: Format) -> String {
    match format {
        Format::Text => report.to_text(),
        Format::Csv => report.to_csv(),
    }
}

fn execute(command: &Command) -> Result<(String, Option<PathBuf>)> {
    let (common, default_format) = match command {
        Command::TruthTable(c) => (c, Format::Csv),
        Command::HomScan { common, .. } => (common, Format::Csv),
        Command::Entangle(c) | Command::Noise(c) | Command::FeedForward(c) | Command::DumpCircuit(c) => {
            (c, Format::Text)
        }
    };
    let config = common.resolve()?;
    let format = common.format.unwrap_or(default_format);
    let body = match command {
        Command::TruthTable(_) => render(&run_truth_table(&config)?, format),
        Command::Entangle(_) => render(&run_entangler(&config)?, format),
        Command::HomScan { points, span, .. } => {
            if *points == 0 || !span.is_finite() || *span < 0.0 {
                return Err(Error::Config("need points ≥ 1 and a finite span ≥ 0".into()));
            }
            render(&run_hom_scan(&config, *points, *span)?, format)
        }
        Command::Noise(_) => render(&run_noise_study(&config)?, format),
        Command::FeedForward(_) => render(&run_feed_forward(&config)?, format),
        Command::DumpCircuit(_) => build_canonical_circuit(&config)?.dump(),
    };
    Ok((body, common.out.clone()))
}

/// Runs the CLI on `args` (including the program name) and returns the
/// process exit code.
pub fn cli_main<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return if code == 0 { EXIT_OK } else { EXIT_CONFIG };
        }
    };
    match execute(&cli.command) {
        Ok((body, None)) => match stdout.write_all(body.as_bytes()) {
            Ok(()) => EXIT_OK,
            Err(_) => EXIT_IO,
        },
        Ok((body, Some(path))) => match std::fs::write(&path, body) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                let _ = writeln!(stderr, "error: cannot write {}: {e}", path.display());
                EXIT_IO
            }
        },
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}
