//! `cancelkit` command-line interface.
//!
//! Exit codes: 0 on a completed run, 2 when a classification stayed
//! inconclusive, 1 on any error. Errors are a single stderr line of the form
//! `error: <code>: <message>`.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use cancelkit::classifier::Verdict;
use cancelkit::compatibility::{build_compatibility, verify_compatibility, VERIFY_POINTS};
use cancelkit::lab::{run_experiment, write_csv, ExperimentConfig, ExperimentKind};
use cancelkit::operator::{catalog, io::write_operator, resolve, CATALOG_PREFIX};
use cancelkit::report::{
    classification_report, ClassifySettings, CompatibilitySummary, ExperimentSection, Report,
};
use cancelkit::{Error, Operator, TolerancePolicy};
use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

const THREADS_ENV: &str = "CANCELKIT_THREADS";

#[derive(Parser)]
#[command(
    name = "cancelkit",
    version,
    about = "Cancellation analysis of constant-coefficient differential operators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide ellipticity, cancellation, cocancellation and weak cancellation.
    Classify {
        /// `catalog:NAME[:key=value,...]` or an operator file.
        #[arg(long)]
        operator: String,
        /// Sphere directions per sampling round.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        rounds: Option<usize>,
        /// Relative rank tolerance.
        #[arg(long)]
        tol: Option<f64>,
        /// Eigenvalue tolerance of subspace intersections.
        #[arg(long)]
        intersect_tol: Option<f64>,
        /// Gauss-Legendre nodes per angle for weak cancellation.
        #[arg(long)]
        quad_points: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Record wall-clock time in the report (breaks byte-identity).
        #[arg(long)]
        timing: bool,
    },
    /// Build and verify the compatibility operator of an elliptic operator.
    Compat {
        #[arg(long)]
        operator: String,
        /// Destination of the compatibility operator file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = VERIFY_POINTS)]
        verify_trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        timing: bool,
    },
    /// Run an inequality experiment and emit CSV rows.
    Experiment {
        /// sobolev, hardy, fractional, p2, blowup, duality, divfree-growth or circulation.
        kind: String,
        #[arg(long)]
        config: PathBuf,
        /// CSV destination; overrides the config, defaults to stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        timing: bool,
    },
    /// List catalog operators.
    Catalog,
}

/// Error tagged with its machine-readable code.
struct Failure {
    code: String,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: e.code().to_string(),
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::Io(e).into()
    }
}

fn failure(code: &str, message: impl Into<String>) -> Failure {
    Failure {
        code: code.to_string(),
        message: message.into(),
    }
}

fn single_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Operator plus its report descriptor: the canonical catalog descriptor,
/// or the SHA-256 of the file bytes.
fn load_operator(reference: &str) -> Result<(Operator, String), Failure> {
    let op = resolve(reference)?;
    let descriptor = if reference.starts_with(CATALOG_PREFIX) {
        op.name()
            .map(str::to_string)
            .unwrap_or_else(|| reference[CATALOG_PREFIX.len()..].to_string())
    } else {
        format!(
            "sha256:{}",
            hex::encode(Sha256::digest(fs::read(reference)?))
        )
    };
    Ok((op, descriptor))
}

fn write_report(report: &Report, path: Option<&Path>) -> Result<(), Failure> {
    if let Some(path) = path {
        fs::write(path, report.to_json())?;
    }
    Ok(())
}

fn describe(v: &Verdict) -> String {
    let property = serde_json::to_value(v.property).expect("enum serialises");
    let value = serde_json::to_value(v.value).expect("enum serialises");
    let mut line = format!(
        "{}: {} (margin {:e}, samples {})",
        property.as_str().unwrap_or_default(),
        value.as_str().unwrap_or_default(),
        v.margin,
        v.samples_used
    );
    if let Some(w) = &v.witness {
        line.push_str(&format!(", witness {w:?}"));
    }
    line
}

fn elapsed_ms(start: Instant, timing: bool) -> Option<u128> {
    timing.then(|| start.elapsed().as_millis())
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|&t| t > 0).ok_or_else(|| {
        failure(
            "invalid_env",
            format!("{THREADS_ENV} must be a positive integer, got `{raw}`"),
        )
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| failure("invalid_env", e.to_string()))
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    configure_threads()?;
    let start = Instant::now();
    let mut out = io::stdout().lock();
    match cli.command {
        Command::Classify {
            operator,
            samples,
            rounds,
            tol,
            intersect_tol,
            quad_points,
            seed,
            report,
            timing,
        } => {
            let (op, descriptor) = load_operator(&operator)?;
            let defaults = ClassifySettings::default();
            let tolerance = TolerancePolicy::new(
                tol.unwrap_or(defaults.tolerance.rank_rel_tol),
                intersect_tol.unwrap_or(defaults.tolerance.intersect_eig_tol),
            )?;
            let settings = ClassifySettings {
                tolerance,
                samples_per_round: samples.unwrap_or(defaults.samples_per_round),
                max_rounds: rounds.unwrap_or(defaults.max_rounds),
                quad_points: quad_points.unwrap_or(defaults.quad_points),
                seed,
            };
            let mut rep = classification_report(&op, descriptor.clone(), &settings)?;
            rep.timing_ms = elapsed_ms(start, timing);
            writeln!(out, "operator: {descriptor}")?;
            for v in &rep.verdicts {
                writeln!(out, "{}", describe(v))?;
            }
            for note in &rep.notes {
                writeln!(out, "note: {note}")?;
            }
            write_report(&rep, report.as_deref())?;
            Ok(if rep.inconclusive() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Compat {
            operator,
            out: destination,
            verify_trials,
            seed,
            report,
            timing,
        } => {
            let (op, descriptor) = load_operator(&operator)?;
            let compat = build_compatibility(&op)?;
            let verification = verify_compatibility(&op, &compat.operator, verify_trials, seed)?;
            write_operator(&compat.operator, &destination)?;
            writeln!(out, "operator: {descriptor}")?;
            writeln!(out, "degree: {}", compat.degree)?;
            if compat.pointwise_surjective {
                writeln!(out, "zero operator: the symbol is onto at every frequency")?;
            }
            writeln!(
                out,
                "interpolation residual: {:e}",
                compat.interpolation_residual
            )?;
            writeln!(out, "product residual: {:e}", verification.product_residual)?;
            writeln!(
                out,
                "projector distance: {:e}",
                verification.projector_distance
            )?;
            writeln!(out, "verified: {}", verification.passed)?;
            let mut rep = Report::new(Some(descriptor));
            rep.seed = Some(seed);
            if compat.pointwise_surjective {
                rep.notes
                    .push("zero operator: the symbol is onto at every frequency".to_string());
            }
            rep.compatibility = Some(CompatibilitySummary::new(&compat, Some(verification)));
            rep.timing_ms = elapsed_ms(start, timing);
            write_report(&rep, report.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Experiment {
            kind,
            config,
            csv,
            report,
            timing,
        } => {
            let kind: ExperimentKind = kind.parse()?;
            let cfg = ExperimentConfig::from_json(&fs::read_to_string(&config)?)?;
            let rows = run_experiment(kind, &cfg)?;
            match csv.or_else(|| cfg.output.as_ref().map(PathBuf::from)) {
                Some(path) => write_csv(&rows, fs::File::create(path)?)?,
                None => write_csv(&rows, &mut out)?,
            }
            let mut rep = Report::new(cfg.operator.clone());
            rep.seed = Some(cfg.seed);
            rep.experiment = Some(ExperimentSection {
                kind: kind.name().to_string(),
                rows,
            });
            rep.timing_ms = elapsed_ms(start, timing);
            write_report(&rep, report.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Catalog => {
            writeln!(
                out,
                "{:<14} {:<4} {:<4} {:<6} {:<6} {:<32} summary",
                "name", "n", "k", "dim_v", "dim_e", "params"
            )?;
            for entry in catalog::ENTRIES {
                let op = catalog::get(entry.name, entry.default_n, &Default::default())?;
                writeln!(
                    out,
                    "{:<14} {:<4} {:<4} {:<6} {:<6} {:<32} {}",
                    entry.name,
                    op.n(),
                    op.order(),
                    op.dim_v(),
                    op.dim_e(),
                    entry.params,
                    entry.summary
                )?;
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            let message = first.strip_prefix("error: ").unwrap_or(first);
            eprintln!("error: usage: {}", single_line(message));
            return ExitCode::FAILURE;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}: {}", f.code, single_line(&f.message));
            ExitCode::FAILURE
        }
    }
}
