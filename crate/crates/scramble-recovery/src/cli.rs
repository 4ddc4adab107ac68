//! The `scramble` command line.
//!
//! Every command writes one table (CSV or JSON) to `--out` or stdout. Options may also come
//! from a `--config` file of `key = value` lines; explicit flags take precedence. Exit codes:
//! 0 ok, 1 usage, 2 validation failure, 3 verification failure.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::calibration::{load_calibration, predict, synthesize_calibration, CalibrationRecord};
use crate::channels::{
    amplitude_damping_channel, computational_measurement_channel, projective_measurement_channel,
    KrausChannel, MeasurementDirection,
};
use crate::ensembles::{
    ensemble_moment, random_channel, verify_2design, UnitaryEnsemble,
};
use crate::error::Error;
use crate::iterative::{iterate, simulate_iteration_matrix, RecursionSpec, RecursionVariant};
use crate::linalg::{DensityMatrix, SystemLayout};
use crate::output::{rate_from_fidelity, write_atomic, Cell, Format, Metadata, SweepRow, Table};
use crate::rng::RngStream;
use crate::schemes::{run_scheme, Evaluation, OutputNoise, SchemeKind, SchemeSetup};
use crate::shots::{run_emulated_experiment, theta_grid, ReadoutError, ShotPlan};
use crate::twirl::{asymptotic_residual, clifford_exact_equals_analytic, twirl_output, TwirlBackend};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_VERIFICATION: i32 = 3;

/// Haar ensembles smaller than this make the statistical checks of `verify` inconclusive.
pub const MIN_CONCLUSIVE_SAMPLES: usize = 1000;
/// Samples of the Weingarten cross-check when the ensemble is not Haar.
pub const DEFAULT_MC_SAMPLES: usize = 100_000;
/// Standard deviation of |U₀₀|⁴ under Haar U(2): √(1/5 − 1/9).
const U00_FOURTH_STD: f64 = 0.298_142_396_999_971_9;

#[derive(Debug)]
enum CliError {
    Usage(String),
    Validation(String),
    Verification(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Verification(_) => EXIT_VERIFICATION,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Validation(m) | CliError::Verification(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "scramble",
    version,
    about = "Recovery of scrambled quantum information: sweeps, recursions, predictions and emulation",
    args_override_self = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sweep the measurement angle θ for one scheme.
    SchemeSweep(SweepArgs),
    /// Twirl a projective measurement and compare backends.
    Twirl(TwirlArgs),
    /// Run a recovery-rate recursion, optionally against a density-matrix simulation.
    Iterate(IterateArgs),
    /// Check the 2-design, Weingarten, Clifford-exactness and residual-bound properties.
    Verify(VerifyArgs),
    /// Predict noisy observables from a calibration.
    PredictNoisy(PredictArgs),
    /// Emulate finite-shot experiments over the θ grid.
    Emulate(EmulateArgs),
}

#[derive(Args, Debug, Serialize)]
struct OutputArgs {
    /// Output file; stdout when absent.
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
    /// csv or json; inferred from the --out extension when absent.
    #[arg(long, value_parser = parse_format)]
    #[serde(skip)]
    format: Option<Format>,
}

#[derive(Args, Debug, Default, Serialize)]
struct NoiseArgs {
    /// Depolarizing rate on the control register after the circuit.
    #[arg(long, default_value_t = 0.0)]
    noise_control: f64,
    /// Depolarizing rate on the auxiliary register after the circuit.
    #[arg(long, default_value_t = 0.0)]
    noise_aux: f64,
    /// Depolarizing rate on the target after the circuit.
    #[arg(long, default_value_t = 0.0)]
    noise_target: f64,
}

impl NoiseArgs {
    fn model(&self) -> OutputNoise {
        OutputNoise { control: self.noise_control, aux: self.noise_aux, target: self.noise_target }
    }
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    #[arg(long, default_value = "ico", value_parser = parse_scheme)]
    #[serde(serialize_with = "display")]
    scheme: SchemeKind,
    /// analytic, clifford, haar:N or asymptotic.
    #[arg(long, default_value = "clifford")]
    backend: String,
    #[arg(long, default_value_t = 50)]
    theta_points: usize,
    /// Required for haar:N.
    #[arg(long)]
    seed: Option<u64>,
    /// Target dimension; the sweep measures a qubit target.
    #[arg(long, default_value_t = 2)]
    dt: usize,
    /// Scrambled dimension D_tb; the bath of size D_tb/D_t starts in |0⟩.
    #[arg(long, default_value_t = 2)]
    dtb: usize,
    #[command(flatten)]
    #[serde(flatten)]
    noise: NoiseArgs,
    #[command(flatten)]
    #[serde(skip)]
    output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
struct TwirlArgs {
    /// analytic, clifford or haar:N.
    #[arg(long, default_value = "analytic")]
    backend: String,
    #[arg(long, default_value_t = 5)]
    theta_points: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Scrambled dimension; the measured qubit is the first factor.
    #[arg(long, default_value_t = 2)]
    dtb: usize,
    #[command(flatten)]
    #[serde(skip)]
    output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
struct IterateArgs {
    /// plain, plain-noisy, ico, eico or eico-noisy.
    #[arg(long, default_value = "plain", value_parser = parse_variant)]
    #[serde(serialize_with = "display")]
    variant: RecursionVariant,
    /// Starting rate; defaults to the rate of a computational measurement of the target.
    #[arg(long)]
    p0: Option<f64>,
    #[arg(long, default_value_t = 2)]
    dt: usize,
    #[arg(long, default_value_t = 4)]
    dtb: usize,
    /// Keep-rate of the depolarizing noise (noisy variants).
    #[arg(long, default_value_t = 1.0)]
    x: f64,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    /// Also simulate the layers as density matrices.
    #[arg(long)]
    simulate: bool,
    /// Twirl backend of the simulation: analytic, clifford or haar:N.
    #[arg(long, default_value = "analytic")]
    backend: String,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    #[serde(skip)]
    output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
struct VerifyArgs {
    /// clifford, pauli or haar:N.
    #[arg(long, default_value = "clifford")]
    ensemble: String,
    /// Seeds the Monte-Carlo checks.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    #[serde(skip)]
    output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
struct PredictArgs {
    #[arg(long, default_value = "ico", value_parser = parse_scheme)]
    #[serde(serialize_with = "display")]
    scheme: SchemeKind,
    /// Calibration file; without it a record is synthesized from the --noise-* rates.
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    theta_points: usize,
    #[command(flatten)]
    #[serde(flatten)]
    noise: NoiseArgs,
    #[command(flatten)]
    #[serde(skip)]
    output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
struct EmulateArgs {
    #[arg(long, default_value = "ico", value_parser = parse_scheme)]
    #[serde(serialize_with = "display")]
    scheme: SchemeKind,
    /// Shots per ensemble member and angle.
    #[arg(long, default_value_t = 1000)]
    shots: u64,
    #[arg(long, default_value_t = 50)]
    theta_points: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// clifford or haar:N (qubit ensembles).
    #[arg(long, default_value = "clifford")]
    backend: String,
    /// Readout flips `p10,p01`; `;` separates per-qubit pairs (control, aux, target order).
    #[arg(long)]
    readout: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    noise: NoiseArgs,
    #[command(flatten)]
    #[serde(skip)]
    output: OutputArgs,
}

fn display<T: std::fmt::Display, S: serde::Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn parse_scheme(s: &str) -> Result<SchemeKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<RecursionVariant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_format(s: &str) -> Result<Format, String> {
    match s {
        "csv" => Ok(Format::Csv),
        "json" => Ok(Format::Json),
        other => Err(format!("unknown format '{other}' (csv or json)")),
    }
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    match run_inner(args) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn run_inner(args: Vec<OsString>) -> CliResult<()> {
    let args = expand_config(args)?;
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return Ok(());
            }
            return Err(CliError::Usage(e.render().to_string().trim_end().to_string()));
        }
    };
    match cli.command {
        Command::SchemeSweep(a) => cmd_scheme_sweep(&a),
        Command::Twirl(a) => cmd_twirl(&a),
        Command::Iterate(a) => cmd_iterate(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::PredictNoisy(a) => cmd_predict_noisy(&a),
        Command::Emulate(a) => cmd_emulate(&a),
    }
}

/// Replaces `--config FILE` by the file's options, placed right after the subcommand so
/// later explicit flags override them.
fn expand_config(args: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let mut rest = Vec::with_capacity(args.len());
    let mut config: Option<PathBuf> = None;
    let mut it = args.into_iter();
    let program = it.next();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            let v = it
                .next()
                .ok_or_else(|| CliError::Usage("--config needs a file path".into()))?;
            config = Some(PathBuf::from(v));
        } else if let Some(v) = s.strip_prefix("--config=") {
            config = Some(PathBuf::from(v));
        } else {
            rest.push(a);
        }
    }
    let mut out: Vec<OsString> = program.into_iter().collect();
    let Some(path) = config else {
        out.extend(rest);
        return Ok(out);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let injected = config_flags(&text)?;
    let sub = rest
        .iter()
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .ok_or_else(|| CliError::Usage("missing subcommand".into()))?;
    out.extend(rest[..=sub].iter().cloned());
    out.extend(injected);
    out.extend(rest[sub + 1..].iter().cloned());
    Ok(out)
}

/// `key = value` lines to flags; `_` in keys reads as `-`; `#` starts a comment.
fn config_flags(text: &str) -> CliResult<Vec<OsString>> {
    let mut flags = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", n + 1)))?;
        let key = k.trim().replace('_', "-");
        let value = v.trim();
        if key == "config" {
            return Err(CliError::Usage("config files cannot include other config files".into()));
        }
        if key == "simulate" {
            match value {
                "true" => flags.push(OsString::from("--simulate")),
                "false" => {}
                other => {
                    return Err(CliError::Usage(format!("config key simulate: '{other}' is not a boolean")))
                }
            }
            continue;
        }
        flags.push(OsString::from(format!("--{key}")));
        flags.push(OsString::from(value));
    }
    Ok(flags)
}

fn require_seed(seed: Option<u64>, why: &str) -> CliResult<u64> {
    seed.ok_or_else(|| CliError::Usage(format!("--seed is required {why}")))
}

/// Parses a backend descriptor; `haar:N` needs a seed.
fn parse_backend(s: &str, seed: Option<u64>) -> CliResult<TwirlBackend> {
    match s {
        "analytic" => Ok(TwirlBackend::Analytic),
        "clifford" => Ok(TwirlBackend::CliffordExact),
        other => {
            let n = other
                .strip_prefix("haar:")
                .and_then(|n| n.parse::<usize>().ok())
                .filter(|n| *n > 0)
                .ok_or_else(|| {
                    CliError::Usage(format!("unknown backend '{other}' (analytic, clifford or haar:N)"))
                })?;
            let seed = require_seed(seed, "for a haar backend")?;
            Ok(TwirlBackend::HaarMc { samples: n, rng: RngStream::new(seed) })
        }
    }
}

fn parse_readout(s: &str) -> CliResult<Vec<ReadoutError>> {
    s.split(';')
        .map(|pair| {
            let nums: Vec<f64> = pair
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| CliError::Usage(format!("readout '{pair}' is not two numbers")))?;
            match nums[..] {
                [a, b] => Ok(ReadoutError::new(a, b)?),
                _ => Err(CliError::Usage(format!("readout '{pair}' needs exactly p10,p01"))),
            }
        })
        .collect()
}

fn emit(table: &Table, output: &OutputArgs, command: &str, config: serde_json::Value) -> CliResult<()> {
    let format = output.format.unwrap_or_else(|| match &output.out {
        Some(p) if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) => Format::Json,
        _ => Format::Csv,
    });
    let text = table.render(format, &Metadata::new(command, config))?;
    match &output.out {
        Some(path) => write_atomic(Path::new(path), text.as_bytes())?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Validation(format!("cannot write to stdout: {e}")))?;
        }
    }
    Ok(())
}

fn echo<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).expect("argument structs serialize")
}

/// Qubit target in |0⟩ with a |0⟩ bath making the scrambled dimension `dtb`.
fn sweep_setup(scheme: SchemeKind, theta: f64, dt: usize, dtb: usize, noise: OutputNoise) -> CliResult<SchemeSetup> {
    if dt != 2 {
        return Err(CliError::Validation(format!("the θ sweep measures a qubit target; --dt must be 2, got {dt}")));
    }
    if dtb < dt || !dtb.is_multiple_of(dt) {
        return Err(CliError::Validation(format!("--dtb = {dtb} must be a multiple of --dt = {dt}")));
    }
    Ok(SchemeSetup::sweep_point(scheme, theta)
        .with_bath(DensityMatrix::basis(dtb / dt, 0)?)
        .with_noise(noise))
}

fn cmd_scheme_sweep(a: &SweepArgs) -> CliResult<()> {
    let evaluation = match a.backend.as_str() {
        "asymptotic" => Evaluation::Asymptotic,
        b => Evaluation::Exact(parse_backend(b, a.seed)?),
    };
    if matches!(evaluation, Evaluation::Exact(TwirlBackend::CliffordExact)) && a.dtb != 2 {
        return Err(CliError::Validation(format!("clifford backend requires --dtb 2, got {}", a.dtb)));
    }
    let sampled = matches!(evaluation, Evaluation::Exact(TwirlBackend::HaarMc { .. }));
    let mut rows = Vec::new();
    for theta in theta_grid(a.theta_points)? {
        let setup = sweep_setup(a.scheme, theta, a.dt, a.dtb, a.noise.model())?;
        let r = run_scheme(&setup, &evaluation)?;
        rows.push(SweepRow {
            scheme: a.scheme.to_string(),
            backend: evaluation.label(),
            theta_rad: theta,
            rx2: theta.sin().powi(2),
            p_est: rate_from_fidelity(r.fidelity, a.dt),
            sigma_c_x: r.sigma_c_x,
            sigma_a_x: r.sigma_a_x,
            p_succ: r.success_probability,
            fidelity: r.fidelity,
            fidelity_analytic: r.analytic_fidelity,
            ci_low: None,
            ci_high: None,
            shots: None,
            seed: if sampled { a.seed } else { None },
        });
    }
    emit(&SweepRow::table(&rows), &a.output, "scheme-sweep", echo(a))
}

fn cmd_twirl(a: &TwirlArgs) -> CliResult<()> {
    let backend = parse_backend(&a.backend, a.seed)?;
    if a.dtb < 2 || !a.dtb.is_multiple_of(2) {
        return Err(CliError::Validation(format!("--dtb must be an even dimension ≥ 2, got {}", a.dtb)));
    }
    let layout = if a.dtb == 2 {
        SystemLayout::new([("target", 2)])?
    } else {
        SystemLayout::new([("target", 2), ("bath", a.dtb / 2)])?
    };
    let input = DensityMatrix::basis(a.dtb, 0)?;
    let mut table = Table::new(&[
        "backend", "dim", "theta_rad", "recovery_rate", "fidelity", "fidelity_analytic", "max_deviation", "samples",
    ]);
    for theta in theta_grid(a.theta_points)? {
        let ch = projective_measurement_channel(&MeasurementDirection::from_theta(theta), &layout, "target")?;
        let got = twirl_output(&ch, &input, &backend)?;
        let exact = twirl_output(&ch, &input, &TwirlBackend::Analytic)?;
        let dev = crate::linalg::max_abs_diff(got.output.matrix(), exact.output.matrix());
        table.push(vec![
            Cell::Text(backend.label()),
            Cell::Int(Some(a.dtb as u64)),
            Cell::Float(Some(theta)),
            Cell::Float(Some(got.recovery_rate)),
            Cell::Float(Some(got.output.matrix()[(0, 0)].re)),
            Cell::Float(Some(exact.output.matrix()[(0, 0)].re)),
            Cell::Float(Some(dev)),
            Cell::Int(Some(got.samples as u64)),
        ]);
    }
    emit(&table, &a.output, "twirl", echo(a))
}

fn cmd_iterate(a: &IterateArgs) -> CliResult<()> {
    let layout = if a.dtb == a.dt {
        SystemLayout::new([("target", a.dt)])?
    } else {
        if a.dt == 0 || !a.dtb.is_multiple_of(a.dt) {
            return Err(CliError::Validation(format!("--dt = {} does not divide --dtb = {}", a.dt, a.dtb)));
        }
        SystemLayout::new([("target", a.dt), ("bath", a.dtb / a.dt)])?
    };
    let perturbation = computational_measurement_channel(&layout, "target")?;
    let p0 = match a.p0 {
        Some(p) => p,
        None => crate::channels::recovery_rate(&perturbation)?,
    };
    let spec = RecursionSpec::new(a.variant, p0, a.dt, a.dtb, a.steps).with_noise(a.x);
    let trace = iterate(&spec)?;
    let simulated = if a.simulate {
        let backend = parse_backend(&a.backend, a.seed)?;
        // Plain layers take the perturbation on the target alone and add their own bath.
        let ch: KrausChannel = match a.variant {
            RecursionVariant::Plain | RecursionVariant::PlainNoisy => {
                computational_measurement_channel(&SystemLayout::new([("target", a.dt)])?, "target")?
            }
            _ => perturbation,
        };
        Some(simulate_iteration_matrix(&spec, &ch, &backend)?)
    } else {
        None
    };
    let mut table = Table::new(&["variant", "n", "p", "p_closed_form", "success", "p_simulated", "span_residual"]);
    for (k, n) in trace.indices().enumerate() {
        let sim = simulated.as_ref().and_then(|s| s.value_at(n));
        let residual = simulated
            .as_ref()
            .and_then(|s| s.value_at(n).and(s.span_residuals.get(n - s.first_index).copied()));
        table.push(vec![
            Cell::Text(a.variant.to_string()),
            Cell::Int(Some(n as u64)),
            Cell::Float(Some(trace.values[k])),
            Cell::Float(spec.closed_form(k)),
            Cell::Float(k.checked_sub(1).and_then(|j| trace.success.get(j).copied())),
            Cell::Float(sim),
            Cell::Float(residual),
        ]);
    }
    for fp in &trace.fixed_points {
        eprintln!(
            "fixed point {:.12} (derivative {:.6}, {:?})",
            fp.value, fp.derivative, fp.stability
        );
    }
    emit(&table, &a.output, "iterate", echo(a))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Status {
    Pass,
    Fail,
    Inconclusive,
}

impl Status {
    fn from_pass(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }

    fn label(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Inconclusive => "inconclusive",
        }
    }
}

struct Check {
    name: &'static str,
    value: f64,
    tolerance: f64,
    status: Status,
    detail: String,
}

fn cmd_verify(a: &VerifyArgs) -> CliResult<()> {
    let seed = require_seed(a.seed, "for verify (the Weingarten cross-check samples Haar unitaries)")?;
    let root = RngStream::new(seed);
    let (ensemble, haar_samples) = match a.ensemble.as_str() {
        "clifford" => (UnitaryEnsemble::clifford_1q(), None),
        "pauli" => (UnitaryEnsemble::pauli_1q(), None),
        other => {
            let n = other
                .strip_prefix("haar:")
                .and_then(|n| n.parse::<usize>().ok())
                .filter(|n| *n > 0)
                .ok_or_else(|| CliError::Usage(format!("unknown ensemble '{other}' (clifford, pauli or haar:N)")))?;
            (UnitaryEnsemble::haar(2, n, root.child(0))?, Some(n))
        }
    };
    let mut checks = Vec::new();

    // Degree-(2,2) moments against the Weingarten values.
    let design_tol = haar_samples.map_or(1e-12, |n| 5.0 / (n as f64).sqrt());
    let report = verify_2design(&ensemble, 0, design_tol)?;
    checks.push(Check {
        name: "two_design",
        value: report.max_deviation,
        tolerance: design_tol,
        status: match haar_samples {
            Some(n) if n < MIN_CONCLUSIVE_SAMPLES => Status::Inconclusive,
            _ => Status::from_pass(report.passed),
        },
        detail: format!("{} monomials, worst index {:?}", report.monomials_checked, report.worst_index),
    });

    // Monte-Carlo E|U₀₀|⁴ = 1/3.
    let (mc, n) = match haar_samples {
        Some(n) => (ensemble.clone(), n),
        None => (UnitaryEnsemble::haar(2, DEFAULT_MC_SAMPLES, root.child(1))?, DEFAULT_MC_SAMPLES),
    };
    let est = ensemble_moment(&mc, [0; 8]).re;
    let mc_tol = 0.01 * (DEFAULT_MC_SAMPLES as f64 / n as f64).sqrt();
    checks.push(Check {
        name: "weingarten_monte_carlo",
        value: (est - 1.0 / 3.0).abs(),
        tolerance: mc_tol,
        status: if n < MIN_CONCLUSIVE_SAMPLES {
            Status::Inconclusive
        } else {
            Status::from_pass((est - 1.0 / 3.0).abs() < mc_tol)
        },
        detail: format!("estimate {est:.6} from {n} samples (standard error {:.2e})", U00_FOURTH_STD / (n as f64).sqrt()),
    });

    // Clifford average against the analytic twirl for a spread of qubit channels.
    let qubit = SystemLayout::new([("target", 2)])?;
    let mut channels = vec![amplitude_damping_channel(0.3)?];
    for theta in theta_grid(7)? {
        channels.push(projective_measurement_channel(&MeasurementDirection::from_theta(theta), &qubit, "target")?);
    }
    let mut g = root.child(2).generator();
    for _ in 0..20 {
        channels.push(random_channel(2, 3, &mut g)?);
    }
    let worst = channels
        .iter()
        .map(clifford_exact_equals_analytic)
        .collect::<crate::error::Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    checks.push(Check {
        name: "clifford_exact_equals_analytic",
        value: worst,
        tolerance: 1e-12,
        status: Status::from_pass(worst < 1e-12),
        detail: format!("{} channels", channels.len()),
    });

    // ICO residual within its bound and shrinking with D.
    let mut residuals = Vec::new();
    let mut ratio: f64 = 0.0;
    for d in [2usize, 4, 8] {
        let layout = if d == 2 {
            SystemLayout::new([("target", 2)])?
        } else {
            SystemLayout::new([("target", 2), ("bath", d / 2)])?
        };
        let ch = computational_measurement_channel(&layout, "target")?;
        let r = asymptotic_residual(&ch, &DensityMatrix::basis(d, 0)?)?;
        ratio = ratio.max(r.residual / r.bound);
        residuals.push(r.residual);
    }
    let monotone = residuals.windows(2).all(|w| w[1] < w[0]);
    checks.push(Check {
        name: "asymptotic_residual_bound",
        value: ratio,
        tolerance: 1.0,
        status: Status::from_pass(ratio <= 1.0 && monotone),
        detail: format!(
            "residuals at D = 2 4 8: {}; decreasing: {monotone}",
            residuals.iter().map(|r| format!("{r:.6e}")).collect::<Vec<_>>().join(" ")
        ),
    });

    let mut table = Table::new(&["check", "value", "tolerance", "status", "detail"]);
    for c in &checks {
        table.push(vec![
            Cell::Text(c.name.into()),
            Cell::Float(Some(c.value)),
            Cell::Float(Some(c.tolerance)),
            Cell::Text(c.status.label().into()),
            Cell::Text(c.detail.clone()),
        ]);
    }
    emit(&table, &a.output, "verify", echo(a))?;
    let failed: Vec<&str> = checks.iter().filter(|c| c.status == Status::Fail).map(|c| c.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(format!("failed checks: {}", failed.join(", "))))
    }
}

fn cmd_predict_noisy(a: &PredictArgs) -> CliResult<()> {
    let record: CalibrationRecord = match &a.calibration {
        Some(path) => {
            let r = load_calibration(path)?;
            if r.scheme() != a.scheme {
                return Err(CliError::Validation(format!(
                    "calibration is for {}, --scheme is {}",
                    r.scheme(),
                    a.scheme
                )));
            }
            r
        }
        None => synthesize_calibration(a.scheme, &a.noise.model())?,
    };
    let mut table = Table::new(&[
        "scheme", "theta_rad", "rx2", "sigma_c_x", "sigma_a_x", "p_succ", "fidelity", "fidelity_analytic", "in_range",
    ]);
    for theta in theta_grid(a.theta_points)? {
        let p = predict(theta, &record)?;
        let analytic = crate::schemes::analytic_curves(a.scheme, theta);
        table.push(vec![
            Cell::Text(a.scheme.to_string()),
            Cell::Float(Some(theta)),
            Cell::Float(Some(p.rx2)),
            Cell::Float(p.sigma_c_x),
            Cell::Float(p.sigma_a_x),
            Cell::Float(Some(p.success_probability)),
            Cell::Float(Some(p.fidelity)),
            Cell::Float(Some(analytic.fidelity)),
            Cell::Text(p.in_range.to_string()),
        ]);
    }
    let mut config = echo(a);
    config["calibration"] = json!(record);
    emit(&table, &a.output, "predict-noisy", config)
}

fn cmd_emulate(a: &EmulateArgs) -> CliResult<()> {
    let seed = require_seed(a.seed, "for emulate")?;
    let mut plan = ShotPlan::clifford(a.shots, a.theta_points, RngStream::new(seed))?;
    match parse_backend(&a.backend, Some(seed))? {
        TwirlBackend::CliffordExact => {}
        TwirlBackend::HaarMc { samples, .. } => {
            plan.ensemble = UnitaryEnsemble::haar(2, samples, RngStream::new(seed).child(u64::MAX))?;
        }
        TwirlBackend::Analytic => {
            return Err(CliError::Usage("emulate samples circuits; use --backend clifford or haar:N".into()))
        }
    }
    if let Some(r) = &a.readout {
        plan = plan.with_readout(parse_readout(r)?);
    }
    plan = plan.with_noise(a.noise.model());
    let points = run_emulated_experiment(a.scheme, &plan)?;
    let mut rows = Vec::with_capacity(points.len());
    for pt in &points {
        let setup = SchemeSetup::sweep_point(a.scheme, pt.theta).with_noise(plan.noise);
        let exact = run_scheme(&setup, &Evaluation::Exact(TwirlBackend::Analytic))?;
        rows.push(SweepRow {
            scheme: a.scheme.to_string(),
            backend: a.backend.clone(),
            theta_rad: pt.theta,
            rx2: pt.rx2,
            p_est: rate_from_fidelity(pt.fidelity.value, 2),
            sigma_c_x: pt.sigma_c_x.map(|e| e.value),
            sigma_a_x: pt.sigma_a_x.map(|e| e.value),
            p_succ: pt.success.value,
            fidelity: pt.fidelity.value,
            fidelity_analytic: exact.fidelity,
            ci_low: Some(pt.fidelity.ci_low),
            ci_high: Some(pt.fidelity.ci_high),
            shots: Some(a.shots),
            seed: Some(seed),
        });
    }
    emit(&SweepRow::table(&rows), &a.output, "emulate", echo(a))
}
