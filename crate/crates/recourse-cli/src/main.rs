//! Command-line front end for the recourse toolkit.
//!
//! Five subcommands bind the library end to end: `bounds` brackets the joint
//! validity of a plan over a Gelbrich ambiguity ball, `correct` repairs an
//! existing plan, `plan` builds one from scratch, `evaluate` measures
//! empirical validity against a parameter ensemble, and `experiment` runs the
//! scripted radius/shift sweeps and writes their reports.
//!
//! File formats are chosen for human-diffable review: plans are JSON of the
//! form `{"origin": [...], "points": [[...], ...]}`, moment files are JSON of
//! the form `{"mean": [...], "cov": [[...], ...], "rho": r}`, datasets and
//! ensembles are CSV. Floats are serialized in the shortest decimal form
//! that parses back to the identical bit pattern, so every artifact
//! round-trips exactly and reruns with the same seed are byte-identical
//! (manifests carry a wall-clock timestamp, which is the documented
//! exception).
//!
//! Exit codes: 0 on success, 1 when a solver or numeric routine fails, 2 for
//! malformed inputs or misuse (clap reports its own parse failures as 2 as
//! well).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use recourse::bounds::{compute_bounds, lower_bound, BoundsError};
use recourse::classify::{
    bootstrap_ensemble, empirical_validity, append_bias, ClassifyError, Dataset,
    ParameterEnsemble,
};
use recourse::copa::{generate_plan, CopaError, DEFAULT_LAMBDA1, DEFAULT_LAMBDA2};
use recourse::corrections::{
    mahalanobis_correction, requirement_correction, CorrectionsError, DEFAULT_DELTA, DEFAULT_K,
    DEFAULT_MARGIN,
};
use recourse::experiments::{
    run_radius_sweep, run_shift_sweep, ExperimentsError, Method, ShiftSpec, DEFAULT_FUTURES,
    DEFAULT_INPUTS, DEFAULT_PLAN_SIZE, DEFAULT_RHO, DEFAULT_SAMPLES_PER_FUTURE,
};
use recourse::linalg::SymMatrix;
use recourse::moments::{estimate_moments, MomentsError};
use recourse::{
    seeded_rng, AmbiguitySet64, CopaConfig64, CounterfactualPlan64, ErrorClass, MomentPair64,
};

/// Ensemble size when `--estimate-moments` has to bootstrap classifiers from
/// a raw dataset (the reference protocol trains one thousand of them).
const BOOTSTRAP_COUNT: usize = 1000;

/// Fraction of the dataset drawn (without replacement) for each bootstrap
/// member under the same protocol.
const BOOTSTRAP_FRACTION: f64 = 0.5;

/// Relative slack allowed between `cov[i][j]` and `cov[j][i]` in a moment
/// file before the matrix is rejected as asymmetric.
const SYMMETRY_SLACK: f64 = 1e-12;

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Numeric(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}

/// Failures split by who has to act: fix the invocation (exit 2) or accept
/// that the computation broke down (exit 1).
#[derive(Debug)]
enum CliError {
    Usage(String),
    Numeric(String),
}

/// Routes a library error to the exit code its [`ErrorClass`] prescribes.
macro_rules! classified_errors {
    ($($ty:ty),+ $(,)?) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                match e.class() {
                    ErrorClass::Input => CliError::Usage(e.to_string()),
                    ErrorClass::Numerical => CliError::Numeric(e.to_string()),
                }
            }
        }
    )+};
}

classified_errors!(
    BoundsError,
    ClassifyError,
    CopaError,
    CorrectionsError,
    ExperimentsError,
    MomentsError,
);

#[derive(Parser)]
#[command(
    name = "recourse",
    version,
    about = "Quantify, repair, and construct counterfactual explanation plans \
             for linear classifiers with uncertain parameters"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute worst- and best-case joint validity bounds for a plan.
    Bounds(BoundsCmd),
    /// Repair a plan so its validity guarantees improve.
    Correct(CorrectCmd),
    /// Build a plan for an input by projected gradient descent.
    Plan(PlanCmd),
    /// Measure a plan's empirical validity against a parameter ensemble.
    Evaluate(EvaluateCmd),
    /// Run a scripted sweep and write its report CSV plus manifest.
    #[command(subcommand)]
    Experiment(ExperimentCmd),
}

/// Where the nominal moments `(μ̂, Σ̂)` and radius `ρ` come from: a moment
/// file, or estimation from classifier parameters.
#[derive(Args)]
struct MomentSource {
    /// Moment file: {"mean": [...], "cov": [[...], ...], "rho": r}.
    #[arg(long, value_name = "FILE")]
    ambiguity: Option<PathBuf>,

    /// Estimate the nominal moments from --ensemble, or from a bootstrap
    /// ensemble trained on --dataset.
    #[arg(long)]
    estimate_moments: bool,

    /// Parameter ensemble CSV, one classifier per row, no header.
    #[arg(long, value_name = "FILE")]
    ensemble: Option<PathBuf>,

    /// Labeled dataset CSV with header f0,..,label and 0/1 labels.
    #[arg(long, value_name = "FILE")]
    dataset: Option<PathBuf>,

    /// Gelbrich radius; overrides the moment file's value (default 0.01).
    #[arg(long, value_name = "RHO")]
    rho: Option<f64>,
}

impl MomentSource {
    /// Builds the ambiguity set, reporting conflicting or missing sources as
    /// usage errors. `add_bias` extends dataset rows before any training;
    /// moment files and ensembles already live in parameter space and pass
    /// through unchanged.
    fn resolve(&self, seed: u64, add_bias: bool) -> Result<AmbiguitySet64, CliError> {
        if self.ambiguity.is_some() && self.estimate_moments {
            return Err(CliError::Usage(
                "--ambiguity and --estimate-moments both given; pick one moment source".into(),
            ));
        }
        let (pair, file_rho) = if let Some(path) = &self.ambiguity {
            let file: AmbiguityFile = read_json(path)?;
            (file.into_pair(path)?, file.rho)
        } else if self.estimate_moments {
            let ensemble = match (&self.ensemble, &self.dataset) {
                (Some(path), _) => ParameterEnsemble::from_csv(&read_text(path)?)?,
                (None, Some(path)) => {
                    let data = load_dataset(path, add_bias)?;
                    bootstrap_ensemble(
                        &data,
                        BOOTSTRAP_COUNT,
                        BOOTSTRAP_FRACTION,
                        &mut seeded_rng(seed),
                    )?
                }
                (None, None) => {
                    return Err(CliError::Usage(
                        "--estimate-moments needs --ensemble or --dataset".into(),
                    ))
                }
            };
            (estimate_moments(ensemble.samples())?, None)
        } else {
            return Err(CliError::Usage(
                "no moment source; give --ambiguity or --estimate-moments".into(),
            ));
        };
        let rho = self.rho.or(file_rho).unwrap_or(DEFAULT_RHO);
        Ok(AmbiguitySet64::new(pair, rho)?)
    }
}

#[derive(Args)]
struct BoundsCmd {
    /// Plan file: {"origin": [...], "points": [[...], ...]}.
    #[arg(long, value_name = "FILE")]
    plan: PathBuf,

    #[command(flatten)]
    moments: MomentSource,

    /// Append a constant-1 coordinate to the plan (and to dataset rows).
    #[arg(long)]
    add_bias: bool,

    /// Seed for any bootstrap training behind --estimate-moments.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Output path for the bounds JSON (stdout when omitted).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

/// Which repair to apply in `correct`.
#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CorrectionMethod {
    /// Half-space projection: make the nominal mean ε-valid for every point.
    Requirement,
    /// Per-point Mahalanobis margin maximization within a Δ-ball.
    Mahalanobis,
}

#[derive(Args)]
struct CorrectCmd {
    /// Plan file: {"origin": [...], "points": [[...], ...]}.
    #[arg(long, value_name = "FILE")]
    plan: PathBuf,

    #[command(flatten)]
    moments: MomentSource,

    /// Correction to apply.
    #[arg(long, value_enum, default_value_t = CorrectionMethod::Requirement)]
    method: CorrectionMethod,

    /// Margin ε for the requirement correction.
    #[arg(long, default_value_t = DEFAULT_MARGIN)]
    eps: f64,

    /// Displacement budget Δ for the Mahalanobis correction.
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,

    /// Number of lowest-multiplier points the Mahalanobis correction moves.
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,

    /// Append a constant-1 coordinate to the plan (and to dataset rows).
    #[arg(long)]
    add_bias: bool,

    /// Seed for any bootstrap training behind --estimate-moments.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Output path for the correction report JSON (stdout when omitted).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlanCmd {
    /// Input to explain: {"origin": [...]} (a full plan file also works;
    /// its points are ignored).
    #[arg(long, value_name = "FILE")]
    plan: PathBuf,

    #[command(flatten)]
    moments: MomentSource,

    /// Validity weight λ₁.
    #[arg(long, default_value_t = DEFAULT_LAMBDA1)]
    lambda1: f64,

    /// Diversity weight λ₂.
    #[arg(long, default_value_t = DEFAULT_LAMBDA2)]
    lambda2: f64,

    /// Margin ε kept between each point and the nominal decision boundary.
    #[arg(long, default_value_t = DEFAULT_MARGIN)]
    eps: f64,

    /// Number of counterfactual points to generate.
    #[arg(long, default_value_t = DEFAULT_PLAN_SIZE)]
    j: usize,

    /// Seed for the optimizer's initialization noise.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Append a constant-1 coordinate to the origin (and to dataset rows).
    #[arg(long)]
    add_bias: bool,

    /// Output path for the plan JSON; the optimizer trace lands next to it
    /// with extension .trace.csv.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateCmd {
    /// Plan file: {"origin": [...], "points": [[...], ...]}.
    #[arg(long, value_name = "FILE")]
    plan: PathBuf,

    /// Parameter ensemble CSV, one classifier per row, no header.
    #[arg(long, value_name = "FILE")]
    ensemble: Option<PathBuf>,

    /// Dataset CSV to bootstrap an ensemble from when no --ensemble is given.
    #[arg(long, value_name = "FILE")]
    dataset: Option<PathBuf>,

    /// Append a constant-1 coordinate to the plan (and to dataset rows).
    #[arg(long)]
    add_bias: bool,

    /// Seed for any bootstrap training behind --dataset.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Output path for the validity JSON (stdout when omitted).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ExperimentCmd {
    /// Sample futures across the Gelbrich ball and bracket their validity.
    Radius(RadiusCmd),
    /// Shift the ground-truth moments and compare construction methods.
    Shift(ShiftCmd),
}

#[derive(Args)]
struct RadiusCmd {
    /// Seed controlling every random draw in the sweep.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Number of futures sampled per scenario.
    #[arg(long, default_value_t = DEFAULT_FUTURES)]
    futures: usize,

    /// Monte Carlo samples per future.
    #[arg(long, default_value_t = DEFAULT_SAMPLES_PER_FUTURE)]
    samples: usize,

    /// Output path for the report CSV; the manifest lands next to it with
    /// extension .manifest.json.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

/// Which ground-truth moments the shift sweep moves.
#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ShiftKindArg {
    Mean,
    Covariance,
    Both,
}

/// Plan-construction method labels accepted by `experiment shift`.
#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Baseline,
    Mahalanobis,
    Copa,
}

impl From<MethodArg> for Method {
    fn from(value: MethodArg) -> Self {
        match value {
            MethodArg::Baseline => Method::Baseline,
            MethodArg::Mahalanobis => Method::Mahalanobis,
            MethodArg::Copa => Method::Copa,
        }
    }
}

#[derive(Args)]
struct ShiftCmd {
    /// Seed controlling every random draw in the sweep.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Which moments move across the grid.
    #[arg(long, value_enum, default_value_t = ShiftKindArg::Mean)]
    kind: ShiftKindArg,

    /// Grid points along the mean-shift axis (sweep default when omitted).
    #[arg(long, value_name = "N")]
    alpha_steps: Option<usize>,

    /// Grid points along the covariance axis (sweep default when omitted).
    #[arg(long, value_name = "N")]
    beta_steps: Option<usize>,

    /// Unfavorably classified inputs planned for per grid cell.
    #[arg(long, default_value_t = DEFAULT_INPUTS)]
    inputs: usize,

    /// Ground-truth parameter samples drawn per grid cell.
    #[arg(long, default_value_t = DEFAULT_SAMPLES_PER_FUTURE)]
    samples: usize,

    /// Comma-separated methods to compare.
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "baseline,mahalanobis,copa"
    )]
    methods: Vec<MethodArg>,

    /// Output path for the report CSV; the manifest lands next to it with
    /// extension .manifest.json.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Bounds(args) => cmd_bounds(args),
        Command::Correct(args) => cmd_correct(args),
        Command::Plan(args) => cmd_plan(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Experiment(ExperimentCmd::Radius(args)) => cmd_experiment_radius(args),
        Command::Experiment(ExperimentCmd::Shift(args)) => cmd_experiment_shift(args),
    }
}

fn cmd_bounds(args: BoundsCmd) -> Result<(), CliError> {
    let plan = load_plan(&args.plan, args.add_bias)?;
    let ambiguity = args.moments.resolve(args.seed, args.add_bias)?;
    let result = compute_bounds(&plan, &ambiguity)?;
    write_json_artifact(args.out.as_deref(), &result)
}

fn cmd_correct(args: CorrectCmd) -> Result<(), CliError> {
    let plan = load_plan(&args.plan, args.add_bias)?;
    let ambiguity = args.moments.resolve(args.seed, args.add_bias)?;
    let report = match args.method {
        CorrectionMethod::Requirement => {
            requirement_correction(&plan, ambiguity.nominal().mean(), args.eps)?
        }
        CorrectionMethod::Mahalanobis => {
            let certificate = lower_bound(&plan, &ambiguity)?;
            mahalanobis_correction(
                &plan,
                &ambiguity,
                args.k,
                args.delta,
                &certificate.lambda_star,
            )?
        }
    };
    write_json_artifact(args.out.as_deref(), &report)
}

fn cmd_plan(args: PlanCmd) -> Result<(), CliError> {
    let origin = load_origin(&args.plan, args.add_bias)?;
    let ambiguity = args.moments.resolve(args.seed, args.add_bias)?;
    let config = CopaConfig64 {
        lambda1: args.lambda1,
        lambda2: args.lambda2,
        margin: args.eps,
        seed: args.seed,
        ..CopaConfig64::default()
    };
    let (plan, trace) = generate_plan(&origin, &ambiguity, &config, args.j)?;
    write_json_artifact(Some(&args.out), &plan)?;
    write_text_file(&args.out.with_extension("trace.csv"), &trace.to_csv())
}

fn cmd_evaluate(args: EvaluateCmd) -> Result<(), CliError> {
    let plan = load_plan(&args.plan, args.add_bias)?;
    let ensemble = match (&args.ensemble, &args.dataset) {
        (Some(path), _) => ParameterEnsemble::from_csv(&read_text(path)?)?,
        (None, Some(path)) => {
            let data = load_dataset(path, args.add_bias)?;
            bootstrap_ensemble(
                &data,
                BOOTSTRAP_COUNT,
                BOOTSTRAP_FRACTION,
                &mut seeded_rng(args.seed),
            )?
        }
        (None, None) => {
            return Err(CliError::Usage(
                "no parameter source; give --ensemble or --dataset".into(),
            ))
        }
    };
    let report = ValidityReport {
        validity: empirical_validity(&plan, &ensemble)?,
        ensemble_size: ensemble.len(),
        plan_size: plan.len(),
    };
    write_json_artifact(args.out.as_deref(), &report)
}

fn cmd_experiment_radius(args: RadiusCmd) -> Result<(), CliError> {
    let report = run_radius_sweep::<f64>(args.seed, args.futures, args.samples)?;
    write_text_file(&args.out, &report.to_csv())?;
    write_text_file(&args.out.with_extension("manifest.json"), &report.manifest_json())
}

fn cmd_experiment_shift(args: ShiftCmd) -> Result<(), CliError> {
    let mut spec: ShiftSpec<f64> = match args.kind {
        ShiftKindArg::Mean => ShiftSpec::mean(),
        ShiftKindArg::Covariance => ShiftSpec::covariance(),
        ShiftKindArg::Both => ShiftSpec::both(),
    };
    if let Some(steps) = args.alpha_steps {
        spec.alpha_steps = steps;
    }
    if let Some(steps) = args.beta_steps {
        spec.beta_steps = steps;
    }
    let methods: Vec<Method> = args.methods.iter().map(|&m| m.into()).collect();
    let report = run_shift_sweep(&spec, &methods, args.inputs, args.samples, args.seed)?;
    write_text_file(&args.out, &report.to_csv())?;
    write_text_file(&args.out.with_extension("manifest.json"), &report.manifest_json())
}

/// Moment file wire form.
#[derive(Serialize, Deserialize)]
struct AmbiguityFile {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
    rho: Option<f64>,
}

impl AmbiguityFile {
    /// Validates shape and symmetry, then builds the moment pair (which
    /// checks finiteness and positive semidefiniteness on its own).
    fn into_pair(&self, path: &Path) -> Result<MomentPair64, CliError> {
        let d = self.mean.len();
        for (i, row) in self.cov.iter().enumerate() {
            if row.len() != d {
                return Err(CliError::Usage(format!(
                    "{}: cov row {i} has {} entries, expected {d}",
                    path.display(),
                    row.len(),
                )));
            }
        }
        if self.cov.len() != d {
            return Err(CliError::Usage(format!(
                "{}: cov has {} rows, expected {d}",
                path.display(),
                self.cov.len(),
            )));
        }
        let scale = self
            .cov
            .iter()
            .flatten()
            .fold(1.0f64, |acc, v| acc.max(v.abs()));
        for i in 0..d {
            for j in (i + 1)..d {
                if (self.cov[i][j] - self.cov[j][i]).abs() > SYMMETRY_SLACK * scale {
                    return Err(CliError::Usage(format!(
                        "{}: cov is not symmetric at ({i}, {j})",
                        path.display(),
                    )));
                }
            }
        }
        let covariance = SymMatrix::from_fn(d, |i, j| self.cov[i][j]);
        Ok(MomentPair64::new(self.mean.clone(), covariance)?)
    }
}

/// Origin wire form for `plan`; extra fields (a full plan file) are ignored.
#[derive(Deserialize)]
struct OriginFile {
    origin: Vec<f64>,
}

/// Output of `evaluate`.
#[derive(Serialize)]
struct ValidityReport {
    validity: f64,
    ensemble_size: usize,
    plan_size: usize,
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

/// Parses a JSON file, pointing at the offending field or position on
/// failure.
fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn load_plan(path: &Path, add_bias: bool) -> Result<CounterfactualPlan64, CliError> {
    let plan: CounterfactualPlan64 = read_json(path)?;
    if !add_bias {
        return Ok(plan);
    }
    let origin = append_bias(plan.origin());
    let points = plan.points().iter().map(|p| append_bias(p)).collect();
    Ok(CounterfactualPlan64::new(origin, points)?)
}

fn load_origin(path: &Path, add_bias: bool) -> Result<Vec<f64>, CliError> {
    let file: OriginFile = read_json(path)?;
    Ok(if add_bias {
        append_bias(&file.origin)
    } else {
        file.origin
    })
}

fn load_dataset(path: &Path, add_bias: bool) -> Result<Dataset<f64>, CliError> {
    let data = Dataset::from_csv(&read_text(path)?)?;
    Ok(if add_bias { data.with_bias() } else { data })
}

/// Pretty-prints `value` to `path`, or to stdout when no path was given.
fn write_json_artifact<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), CliError> {
    let json =
        serde_json::to_string_pretty(value).expect("report types serialize infallibly");
    match path {
        Some(path) => write_text_file(path, &(json + "\n")),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn write_text_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}
