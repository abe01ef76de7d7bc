//! Desk-scale experiment runners over the synthetic two-Gaussian task: a
//! Gelbrich-radius sweep that brackets Monte Carlo validity between the
//! worst- and best-case bounds, and distribution-shift sweeps comparing
//! plain, Mahalanobis-corrected, and validity-aware plans.
//!
//! Both runners build the same substrate: a two-feature Gaussian mixture
//! dataset, bias-extended to three dimensions, and a logistic classifier
//! `θ₀` trained on it. The nominal moments are `μ̂ = θ₀` (or `−θ₀` for the
//! deliberately invalid scenario) with `Σ̂ = 0.5·I`.
//!
//! The radius sweep fixes one plan and simulates futures `θ̃ ~ 𝒩(μ_g, Σ_g)`
//! whose moments sit at controlled Gelbrich distances from the nominal pair:
//! distances are stratified over `[0, 1]` for even coverage while the
//! mean-versus-covariance split and the shift direction stay random. Each
//! future's empirical validity is reported next to the bounds evaluated at
//! the distance rounded up to a fixed radius grid.
//!
//! The shift sweep moves the ground truth along `μ_g = μ̂ + α·[0, −1, 0]ᵀ`
//! and `Σ_g = (1+β)·Σ̂`, so the `α = β = 0` cell reproduces the nominal
//! distribution exactly, and scores each method's plans under every cell.
//! The `baseline` method is plan generation with the validity weight zeroed
//! (proximity and diversity only), a stand-in for generic counterfactual
//! search; `mahalanobis` applies the dual-weighted correction to the
//! baseline plan; `copa` runs the full objective.
//!
//! Counts are parameters so the full-size protocol remains reachable; the
//! defaults keep a run in the seconds-to-minutes range. Grid cells are
//! mutually independent, so a runner could evaluate them concurrently; the
//! implementation keeps a single deterministic pass in grid order, and all
//! randomness is derived from the caller's seed. Solver failures never
//! abort a sweep: affected rows carry empty bound columns and a note.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bounds::{compute_bounds_with, CounterfactualPlan};
use crate::conic::SolverSettings;
use crate::classify::{
    empirical_validity, gaussian_parameter_sampler, synth_gaussian_dataset, train_logistic,
    ClassifyError, TrainSettings, SYNTH_MEAN_UNFAVORABLE, SYNTH_VARIANCE,
};
use crate::copa::{self, CopaConfig, CopaError, CostFunction};
use crate::corrections::{mahalanobis_correction, DEFAULT_DELTA, DEFAULT_K};
use crate::linalg::SymMatrix;
use crate::moments::{gelbrich_distance, AmbiguitySet, MomentPair, MomentsError};
use crate::{seeded_rng, ErrorClass, Real};

/// Futures simulated by the radius sweep unless overridden.
pub const DEFAULT_FUTURES: usize = 200;

/// Parameter samples per future or grid cell unless overridden.
pub const DEFAULT_SAMPLES_PER_FUTURE: usize = 10_000;

/// Original inputs per shift sweep unless overridden.
pub const DEFAULT_INPUTS: usize = 20;

/// Gelbrich radius used when generating and scoring plans.
pub const DEFAULT_RHO: f64 = 0.01;

/// Points per generated plan.
pub const DEFAULT_PLAN_SIZE: usize = 5;

/// Rows per synthetic class; the mixture dataset has twice this many.
const SYNTH_PER_CLASS: usize = 500;

/// Isotropic variance of the nominal parameter covariance `Σ̂`.
const NOMINAL_VARIANCE: f64 = 0.5;

/// Fixed mean-shift direction in the bias-extended parameter space.
const SHIFT_DIRECTION: [f64; 3] = [0.0, -1.0, 0.0];

/// Number of evenly spaced radii in `[0, 1]` at which bounds are cached.
const RADIUS_GRID_POINTS: usize = 11;

/// Default α grid size for mean sweeps.
const DEFAULT_ALPHA_STEPS: usize = 6;

/// Default β grid size for covariance sweeps.
const DEFAULT_BETA_STEPS: usize = 7;

/// Column order of [`ExperimentReport::to_csv`].
const REPORT_HEADER: &str =
    "method,alpha,beta,gelbrich_distance,validity_mean,validity_std,lower,upper,proximity,diversity,note";

/// Optimality tolerance of the sweep bound solves. Report bounds feed
/// comparisons with 0.02 of slack, so the certified default tolerance buys
/// nothing but iterations here; the looser exit also clears rare instances
/// whose feasibility residual plateaus just above it.
const SWEEP_TOLERANCE: f64 = 2e-5;

/// Iteration budget of the sweep bound solves.
const SWEEP_MAX_ITERATIONS: usize = 400_000;

/// Plotting-grade solver settings used for every sweep bound solve.
fn sweep_settings<T: Real>() -> SolverSettings<T> {
    SolverSettings {
        tolerance: T::of(SWEEP_TOLERANCE),
        max_iterations: SWEEP_MAX_ITERATIONS,
    }
}

/// Errors from the experiment runners.
#[derive(Debug, thiserror::Error)]
pub enum ExperimentsError {
    /// A count argument must be at least 1.
    #[error("{what} must be ≥ 1")]
    InvalidCount {
        /// Which count was zero.
        what: &'static str,
    },
    /// A sweep range parameter left its allowed interval.
    #[error("{what} out of range: {value}")]
    InvalidRange {
        /// Which parameter.
        what: &'static str,
        /// Offending value.
        value: f64,
    },
    /// The method list was empty.
    #[error("at least one method is required")]
    NoMethods,
    /// Dataset generation, training, sampling, or validity failed.
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    /// Plan generation failed.
    #[error(transparent)]
    Copa(#[from] CopaError),
    /// Moment construction or the Gelbrich distance failed.
    #[error(transparent)]
    Moments(#[from] MomentsError),
}

impl ExperimentsError {
    /// Coarse classification for process exit codes.
    pub fn class(&self) -> ErrorClass {
        match self {
            ExperimentsError::InvalidCount { .. }
            | ExperimentsError::InvalidRange { .. }
            | ExperimentsError::NoMethods => ErrorClass::Input,
            ExperimentsError::Classify(e) => e.class(),
            ExperimentsError::Copa(e) => e.class(),
            ExperimentsError::Moments(e) => e.class(),
        }
    }
}

/// Which ground-truth moments a shift sweep moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftKind {
    /// Mean shift only (`β = 0`).
    Mean,
    /// Covariance inflation only (`α = 0`).
    Covariance,
    /// Full grid over both parameters.
    Both,
}

impl ShiftKind {
    /// Stable tag for manifests.
    pub fn label(self) -> &'static str {
        match self {
            ShiftKind::Mean => "mean",
            ShiftKind::Covariance => "covariance",
            ShiftKind::Both => "both",
        }
    }
}

/// Grid description for [`run_shift_sweep`]: the ground truth moves along
/// `μ_g = μ̂ + α·[0, −1, 0]ᵀ` and `Σ_g = (1+β)·Σ̂` over an evenly spaced
/// grid from zero up to the configured maxima.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSpec<T> {
    /// Which moments move.
    pub kind: ShiftKind,
    /// Largest mean-shift magnitude, in `[0, 1]`.
    pub alpha_max: T,
    /// Largest covariance inflation, in `[0, 3]`.
    pub beta_max: T,
    /// Number of α grid points (ignored for pure covariance sweeps).
    pub alpha_steps: usize,
    /// Number of β grid points (ignored for pure mean sweeps).
    pub beta_steps: usize,
}

impl<T: Real> ShiftSpec<T> {
    /// Mean sweep over `α ∈ [0, 1]`.
    pub fn mean() -> Self {
        Self {
            kind: ShiftKind::Mean,
            alpha_max: T::one(),
            beta_max: T::zero(),
            alpha_steps: DEFAULT_ALPHA_STEPS,
            beta_steps: 1,
        }
    }

    /// Covariance sweep over `β ∈ [0, 3]`.
    pub fn covariance() -> Self {
        Self {
            kind: ShiftKind::Covariance,
            alpha_max: T::zero(),
            beta_max: T::of(3.0),
            alpha_steps: 1,
            beta_steps: DEFAULT_BETA_STEPS,
        }
    }

    /// Joint sweep over `[0, 1] × [0, 3]`.
    pub fn both() -> Self {
        Self {
            kind: ShiftKind::Both,
            alpha_max: T::one(),
            beta_max: T::of(3.0),
            alpha_steps: DEFAULT_ALPHA_STEPS,
            beta_steps: DEFAULT_BETA_STEPS,
        }
    }

    fn validate(&self) -> Result<(), ExperimentsError> {
        let alpha = self.alpha_max.as_f64();
        if !(0.0..=1.0).contains(&alpha) {
            return Err(ExperimentsError::InvalidRange {
                what: "alpha_max",
                value: alpha,
            });
        }
        let beta = self.beta_max.as_f64();
        if !(0.0..=3.0).contains(&beta) {
            return Err(ExperimentsError::InvalidRange {
                what: "beta_max",
                value: beta,
            });
        }
        let sweeps_alpha = matches!(self.kind, ShiftKind::Mean | ShiftKind::Both);
        let sweeps_beta = matches!(self.kind, ShiftKind::Covariance | ShiftKind::Both);
        if sweeps_alpha && self.alpha_steps == 0 {
            return Err(ExperimentsError::InvalidCount {
                what: "alpha_steps",
            });
        }
        if sweeps_beta && self.beta_steps == 0 {
            return Err(ExperimentsError::InvalidCount { what: "beta_steps" });
        }
        Ok(())
    }

    /// The grid cells in report order: α outer, β inner.
    pub fn grid(&self) -> Vec<(T, T)> {
        let alphas = match self.kind {
            ShiftKind::Mean | ShiftKind::Both => linspace(self.alpha_max, self.alpha_steps),
            ShiftKind::Covariance => vec![T::zero()],
        };
        let betas = match self.kind {
            ShiftKind::Covariance | ShiftKind::Both => linspace(self.beta_max, self.beta_steps),
            ShiftKind::Mean => vec![T::zero()],
        };
        let mut cells = Vec::with_capacity(alphas.len() * betas.len());
        for &alpha in &alphas {
            for &beta in &betas {
                cells.push((alpha, beta));
            }
        }
        cells
    }
}

/// Plan-construction methods compared by the shift sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Plan generation with the validity weight zeroed; stands in for
    /// validity-agnostic counterfactual search.
    Baseline,
    /// The dual-weighted Mahalanobis correction applied to the baseline
    /// plan.
    Mahalanobis,
    /// The full validity-aware objective.
    Copa,
}

/// Every method, in canonical report order.
pub const ALL_METHODS: [Method; 3] = [Method::Baseline, Method::Mahalanobis, Method::Copa];

impl Method {
    /// Stable tag used in report rows.
    pub fn label(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Mahalanobis => "mahalanobis",
            Method::Copa => "copa",
        }
    }
}

/// One report row: a method (or scenario) scored against one
/// ground-truth configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow<T> {
    /// Method tag, or the nominal-mean scenario for radius sweeps.
    pub method: String,
    /// Mean-shift magnitude of the ground truth (0 for radius sweeps).
    pub alpha: T,
    /// Covariance inflation of the ground truth (0 for radius sweeps).
    pub beta: T,
    /// Gelbrich distance from the nominal moments to the ground truth.
    pub gelbrich_distance: T,
    /// Mean empirical validity over the scored plans.
    pub validity_mean: T,
    /// Sample standard deviation of the validity over the scored plans
    /// (zero when a single plan is scored).
    pub validity_std: T,
    /// Mean worst-case bound over the plans; empty when a solve failed.
    pub lower: Option<T>,
    /// Mean best-case bound over the plans; empty when a solve failed.
    pub upper: Option<T>,
    /// Mean plan proximity under the Euclidean cost.
    pub proximity: T,
    /// Mean plan diversity under the Euclidean cost.
    pub diversity: T,
    /// `ok`, or a description of any per-row solver failure.
    pub note: String,
}

/// Reproducibility sidecar written next to every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Which runner produced the report.
    pub command: String,
    /// Master seed of the run.
    pub seed: u64,
    /// Crate version that produced the report.
    pub version: String,
    /// Wall-clock seconds since the Unix epoch; excluded from
    /// reproducibility comparisons.
    pub timestamp_unix_seconds: u64,
    /// Every knob of the run, stringified, in sorted key order.
    pub parameters: BTreeMap<String, String>,
}

impl Manifest {
    fn new(command: &str, seed: u64, parameters: BTreeMap<String, String>) -> Self {
        let timestamp_unix_seconds = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            command: command.to_string(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp_unix_seconds,
            parameters,
        }
    }
}

/// A completed sweep: one row per scored configuration plus the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport<T> {
    /// Rows in deterministic grid order.
    pub rows: Vec<ReportRow<T>>,
    /// Reproducibility sidecar.
    pub manifest: Manifest,
}

impl<T: Real> ExperimentReport<T> {
    /// Renders the rows as plotting-ready CSV. Floats use the shortest
    /// representation that parses back to the same value; absent bounds
    /// render as empty cells.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for row in &self.rows {
            let _ = write!(
                out,
                "{},{},{},{},{},{}",
                row.method,
                row.alpha,
                row.beta,
                row.gelbrich_distance,
                row.validity_mean,
                row.validity_std
            );
            match row.lower {
                Some(v) => {
                    let _ = write!(out, ",{v}");
                }
                None => out.push(','),
            }
            match row.upper {
                Some(v) => {
                    let _ = write!(out, ",{v}");
                }
                None => out.push(','),
            }
            let _ = writeln!(
                out,
                ",{},{},{}",
                row.proximity,
                row.diversity,
                csv_safe(&row.note)
            );
        }
        out
    }

    /// The manifest as pretty-printed JSON.
    pub fn manifest_json(&self) -> String {
        serde_json::to_string_pretty(&self.manifest).expect("manifest serialization cannot fail")
    }
}

/// Notes land in a comma-separated file; keep them single-cell.
fn csv_safe(note: &str) -> String {
    note.replace(',', ";").replace('\n', " ")
}

/// `steps` evenly spaced values from 0 to `max` inclusive.
fn linspace<T: Real>(max: T, steps: usize) -> Vec<T> {
    if steps <= 1 {
        return vec![T::zero()];
    }
    let denom = T::of((steps - 1) as f64);
    (0..steps)
        .map(|i| max * T::of(i as f64) / denom)
        .collect()
}

/// Mean and sample standard deviation.
fn mean_std<T: Real>(values: &[T]) -> (T, T) {
    let n = T::of(values.len() as f64);
    let mean = values.iter().copied().sum::<T>() / n;
    if values.len() < 2 {
        return (mean, T::zero());
    }
    let variance = values
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .sum::<T>()
        / (n - T::one());
    (mean, variance.sqrt())
}

/// Trains the experiment classifier: a bias-extended logistic model on the
/// synthetic mixture.
fn synthetic_classifier<T: Real, R: Rng>(rng: &mut R) -> Result<Vec<T>, ExperimentsError> {
    let data = synth_gaussian_dataset::<T, _>(SYNTH_PER_CLASS, rng)?.with_bias();
    let model = train_logistic(&data, &TrainSettings::default())?;
    Ok(model.theta().to_vec())
}

/// Draws a fresh unfavorable-class input, bias-extended.
fn unfavorable_input<T: Real, R: Rng>(rng: &mut R) -> Vec<T> {
    let spread = SYNTH_VARIANCE.sqrt();
    let mut x: Vec<T> = SYNTH_MEAN_UNFAVORABLE
        .iter()
        .map(|&m| {
            let g: f64 = StandardNormal.sample(rng);
            T::of(m + spread * g)
        })
        .collect();
    x.push(T::one());
    x
}

/// The full validity-aware configuration with a run-specific seed.
fn copa_config<T: Real>(seed: u64) -> CopaConfig<T> {
    CopaConfig {
        seed,
        ..CopaConfig::default()
    }
}

/// The baseline configuration: validity weight zeroed, otherwise identical.
fn baseline_config<T: Real>(seed: u64) -> CopaConfig<T> {
    CopaConfig {
        lambda1: T::zero(),
        seed,
        ..CopaConfig::default()
    }
}

/// Ground-truth moments at a controlled Gelbrich distance from `nominal`.
///
/// The distance splits randomly between a mean offset along a random
/// direction and a rescaling of the nominal covariance; for `Σ_g = c·Σ̂`
/// the covariance term of the squared distance is exactly
/// `(√c − 1)²·Tr Σ̂`, so both parts are solvable in closed form and the
/// constructed pair sits at the requested distance up to rounding.
fn future_moments<T: Real, R: Rng>(
    nominal: &MomentPair<T>,
    distance: f64,
    rng: &mut R,
) -> Result<MomentPair<T>, ExperimentsError> {
    let dim = nominal.dim();
    let mut direction: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let norm: f64 = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in &mut direction {
            *v /= norm;
        }
    } else {
        direction[0] = 1.0;
    }
    let angle = rng.random::<f64>() * std::f64::consts::FRAC_PI_2;
    let mean_part = distance * angle.cos();
    let cov_part = distance * angle.sin();
    let trace: f64 = (0..dim)
        .map(|i| nominal.covariance().get(i, i).as_f64())
        .sum();
    let relative = cov_part / trace.sqrt();
    // Deflating below zero is impossible here (distance ≤ 1 < √trace), but
    // flip to inflation defensively rather than clamp.
    let factor = if rng.random::<bool>() || relative >= 1.0 {
        1.0 + relative
    } else {
        1.0 - relative
    };
    let scale = T::of(factor * factor);
    let mean: Vec<T> = nominal
        .mean()
        .iter()
        .zip(&direction)
        .map(|(&m, &u)| m + T::of(mean_part * u))
        .collect();
    let covariance = SymMatrix::from_fn(dim, |i, j| nominal.covariance().get(i, j) * scale);
    Ok(MomentPair::new(mean, covariance)?)
}

/// Ground-truth moments of one shift-sweep cell.
fn shifted_moments<T: Real>(
    nominal: &MomentPair<T>,
    alpha: T,
    beta: T,
) -> Result<MomentPair<T>, ExperimentsError> {
    debug_assert_eq!(nominal.dim(), SHIFT_DIRECTION.len());
    let mean: Vec<T> = nominal
        .mean()
        .iter()
        .zip(SHIFT_DIRECTION)
        .map(|(&m, u)| m + alpha * T::of(u))
        .collect();
    let scale = T::one() + beta;
    let covariance =
        SymMatrix::from_fn(nominal.dim(), |i, j| nominal.covariance().get(i, j) * scale);
    Ok(MomentPair::new(mean, covariance)?)
}

/// One plan plus its cached per-plan metrics.
struct PlanBundle<T> {
    plan: CounterfactualPlan<T>,
    lower: Option<T>,
    upper: Option<T>,
    proximity: T,
    diversity: T,
    note: Option<String>,
}

impl<T: Real> PlanBundle<T> {
    /// Scores a plan against the generating ambiguity set, recording solver
    /// failures instead of propagating them.
    fn build(
        plan: CounterfactualPlan<T>,
        ambiguity: &AmbiguitySet<T>,
        note: Option<String>,
    ) -> Result<(Self, Vec<T>), ExperimentsError> {
        let proximity = copa::proximity(&plan, &CostFunction::Euclidean)?;
        let diversity = copa::diversity(&plan, &CostFunction::Euclidean)?;
        let (lower, upper, lambda, solve_note) = match compute_bounds_with(
            &plan,
            ambiguity,
            sweep_settings(),
        ) {
            Ok(bounds) => (
                Some(bounds.lower),
                Some(bounds.upper),
                bounds.lambda_star,
                None,
            ),
            Err(e) => (None, None, Vec::new(), Some(format!("bounds: {e}"))),
        };
        let note = note.or(solve_note);
        Ok((
            Self {
                plan,
                lower,
                upper,
                proximity,
                diversity,
                note,
            },
            lambda,
        ))
    }
}

/// Sweeps the Gelbrich radius: fixes one baseline plan, evaluates its
/// validity bounds on a radius grid over `[0, 1]` for both the valid
/// (`μ̂ = θ₀`) and invalid (`μ̂ = −θ₀`) nominal-mean scenarios, then
/// simulates `n_futures` ground truths at stratified distances and reports
/// each future's Monte Carlo validity next to the bounds at its distance
/// rounded up to the grid.
///
/// # Errors
///
/// Zero counts, or failures of the shared substrate (dataset, training,
/// plan generation, sampling). Per-radius solver failures are recorded in
/// the affected rows, not raised.
pub fn run_radius_sweep<T: Real>(
    seed: u64,
    n_futures: usize,
    samples_per_future: usize,
) -> Result<ExperimentReport<T>, ExperimentsError> {
    if n_futures == 0 {
        return Err(ExperimentsError::InvalidCount {
            what: "future count",
        });
    }
    if samples_per_future == 0 {
        return Err(ExperimentsError::InvalidCount {
            what: "samples per future",
        });
    }
    let mut rng = seeded_rng(seed);
    let theta0 = synthetic_classifier::<T, _>(&mut rng)?;
    let dim = theta0.len();
    let sigma_hat = SymMatrix::scaled_identity(dim, T::of(NOMINAL_VARIANCE));
    let nominal_in = MomentPair::new(theta0.clone(), sigma_hat.clone())?;
    let nominal_out = MomentPair::new(theta0.iter().map(|&t| -t).collect(), sigma_hat)?;

    let origin = unfavorable_input::<T, _>(&mut rng);
    let plan_seed: u64 = rng.random();
    let generation = AmbiguitySet::new(nominal_in.clone(), T::of(DEFAULT_RHO))?;
    let (plan, _) = copa::generate_plan(
        &origin,
        &generation,
        &baseline_config(plan_seed),
        DEFAULT_PLAN_SIZE,
    )?;
    let proximity = copa::proximity(&plan, &CostFunction::Euclidean)?;
    let diversity = copa::diversity(&plan, &CostFunction::Euclidean)?;

    let grid: Vec<T> = linspace(T::one(), RADIUS_GRID_POINTS);
    let mut rows = Vec::with_capacity(2 * n_futures);
    for (tag, nominal) in [("mu-in-theta", &nominal_in), ("mu-out-theta", &nominal_out)] {
        let cached: Vec<Result<(T, T), String>> = grid
            .iter()
            .map(|&rho| {
                AmbiguitySet::new(nominal.clone(), rho)
                    .map_err(|e| e.to_string())
                    .and_then(|ambiguity| {
                        compute_bounds_with(&plan, &ambiguity, sweep_settings())
                            .map(|b| (b.lower, b.upper))
                            .map_err(|e| e.to_string())
                    })
            })
            .collect();
        for i in 0..n_futures {
            let distance = if n_futures == 1 {
                0.0
            } else {
                i as f64 / (n_futures - 1) as f64
            };
            let future = future_moments(nominal, distance, &mut rng)?;
            let ensemble = gaussian_parameter_sampler(&future, samples_per_future, &mut rng)?;
            let validity = empirical_validity(&plan, &ensemble)?;
            let slot = grid
                .iter()
                .position(|&rho| rho.as_f64() + 1e-9 >= distance)
                .unwrap_or(grid.len() - 1);
            let (lower, upper, note) = match &cached[slot] {
                Ok((l, u)) => (Some(*l), Some(*u), "ok".to_string()),
                Err(e) => (None, None, format!("bounds at rho {}: {e}", grid[slot])),
            };
            rows.push(ReportRow {
                method: tag.to_string(),
                alpha: T::zero(),
                beta: T::zero(),
                gelbrich_distance: gelbrich_distance(nominal, &future)?,
                validity_mean: validity,
                validity_std: T::zero(),
                lower,
                upper,
                proximity,
                diversity,
                note,
            });
        }
    }

    let mut parameters = BTreeMap::new();
    parameters.insert("n_futures".into(), n_futures.to_string());
    parameters.insert(
        "samples_per_future".into(),
        samples_per_future.to_string(),
    );
    parameters.insert("plan_size".into(), DEFAULT_PLAN_SIZE.to_string());
    parameters.insert("generation_rho".into(), DEFAULT_RHO.to_string());
    parameters.insert(
        "radius_grid".into(),
        format!("0..1 in {RADIUS_GRID_POINTS} steps"),
    );
    parameters.insert("synth_per_class".into(), SYNTH_PER_CLASS.to_string());
    parameters.insert(
        "plan_method".into(),
        "baseline (validity weight zeroed)".into(),
    );
    Ok(ExperimentReport {
        rows,
        manifest: Manifest::new("experiment-radius", seed, parameters),
    })
}

/// Sweeps ground-truth shifts: generates `n_inputs` plans per method under
/// the nominal ambiguity set, then scores every plan's Monte Carlo validity
/// under each grid cell's shifted parameter distribution. One parameter
/// ensemble per cell is shared across methods and plans, so method columns
/// are directly comparable.
///
/// # Errors
///
/// Invalid spec ranges, zero counts, an empty method list, or failures of
/// the shared substrate. Per-plan solver failures are recorded in the
/// affected rows (a failed correction falls back to the uncorrected plan),
/// not raised.
pub fn run_shift_sweep<T: Real>(
    spec: &ShiftSpec<T>,
    methods: &[Method],
    n_inputs: usize,
    samples_per_cell: usize,
    seed: u64,
) -> Result<ExperimentReport<T>, ExperimentsError> {
    spec.validate()?;
    if n_inputs == 0 {
        return Err(ExperimentsError::InvalidCount { what: "input count" });
    }
    if samples_per_cell == 0 {
        return Err(ExperimentsError::InvalidCount {
            what: "samples per cell",
        });
    }
    let mut ordered: Vec<Method> = Vec::new();
    for &method in methods {
        if !ordered.contains(&method) {
            ordered.push(method);
        }
    }
    if ordered.is_empty() {
        return Err(ExperimentsError::NoMethods);
    }

    let mut rng = seeded_rng(seed);
    let theta0 = synthetic_classifier::<T, _>(&mut rng)?;
    let dim = theta0.len();
    let nominal = MomentPair::new(
        theta0,
        SymMatrix::scaled_identity(dim, T::of(NOMINAL_VARIANCE)),
    )?;
    let ambiguity = AmbiguitySet::new(nominal.clone(), T::of(DEFAULT_RHO))?;

    // Inputs and per-plan seeds are drawn up front so the row contents for
    // any one method do not depend on which other methods were requested.
    let origins: Vec<Vec<T>> = (0..n_inputs).map(|_| unfavorable_input(&mut rng)).collect();
    let plan_seeds: Vec<(u64, u64)> = (0..n_inputs)
        .map(|_| (rng.random(), rng.random()))
        .collect();

    let needs_baseline = ordered
        .iter()
        .any(|m| matches!(m, Method::Baseline | Method::Mahalanobis));
    let mut bundles: Vec<(Method, Vec<PlanBundle<T>>)> =
        ordered.iter().map(|&m| (m, Vec::new())).collect();
    for (origin, &(baseline_seed, copa_seed)) in origins.iter().zip(&plan_seeds) {
        let baseline = if needs_baseline {
            let (plan, _) = copa::generate_plan(
                origin,
                &ambiguity,
                &baseline_config(baseline_seed),
                DEFAULT_PLAN_SIZE,
            )?;
            Some(PlanBundle::build(plan, &ambiguity, None)?)
        } else {
            None
        };
        for (method, list) in &mut bundles {
            match method {
                Method::Baseline => {
                    let (bundle, _) = baseline
                        .as_ref()
                        .map(|(b, lambda)| {
                            (
                                PlanBundle {
                                    plan: b.plan.clone(),
                                    lower: b.lower,
                                    upper: b.upper,
                                    proximity: b.proximity,
                                    diversity: b.diversity,
                                    note: b.note.clone(),
                                },
                                lambda.clone(),
                            )
                        })
                        .expect("baseline bundle exists whenever baseline was requested");
                    list.push(bundle);
                }
                Method::Mahalanobis => {
                    let (base, lambda) = baseline
                        .as_ref()
                        .expect("baseline bundle exists whenever mahalanobis was requested");
                    let (corrected, note) = if lambda.is_empty() {
                        (
                            base.plan.clone(),
                            Some("correction skipped: no dual weights".to_string()),
                        )
                    } else {
                        match mahalanobis_correction(
                            &base.plan,
                            &ambiguity,
                            DEFAULT_K,
                            T::of(DEFAULT_DELTA),
                            lambda,
                        ) {
                            Ok(report) => (report.corrected, None),
                            Err(e) => (base.plan.clone(), Some(format!("correction: {e}"))),
                        }
                    };
                    let (bundle, _) = PlanBundle::build(corrected, &ambiguity, note)?;
                    list.push(bundle);
                }
                Method::Copa => {
                    let (plan, _) = copa::generate_plan(
                        origin,
                        &ambiguity,
                        &copa_config(copa_seed),
                        DEFAULT_PLAN_SIZE,
                    )?;
                    let (bundle, _) = PlanBundle::build(plan, &ambiguity, None)?;
                    list.push(bundle);
                }
            }
        }
    }

    let grid = spec.grid();
    let mut rows = Vec::with_capacity(grid.len() * ordered.len());
    for &(alpha, beta) in &grid {
        let cell = shifted_moments(&nominal, alpha, beta)?;
        let distance = gelbrich_distance(&nominal, &cell)?;
        let ensemble = gaussian_parameter_sampler(&cell, samples_per_cell, &mut rng)?;
        for (method, list) in &bundles {
            let mut validities = Vec::with_capacity(list.len());
            for bundle in list {
                validities.push(empirical_validity(&bundle.plan, &ensemble)?);
            }
            let (validity_mean, validity_std) = mean_std(&validities);
            let all_bounds: Option<Vec<(T, T)>> = list
                .iter()
                .map(|b| b.lower.zip(b.upper))
                .collect();
            let (lower, upper) = match all_bounds {
                Some(pairs) => {
                    let lowers: Vec<T> = pairs.iter().map(|&(l, _)| l).collect();
                    let uppers: Vec<T> = pairs.iter().map(|&(_, u)| u).collect();
                    (Some(mean_std(&lowers).0), Some(mean_std(&uppers).0))
                }
                None => (None, None),
            };
            let proximities: Vec<T> = list.iter().map(|b| b.proximity).collect();
            let diversities: Vec<T> = list.iter().map(|b| b.diversity).collect();
            let failures: Vec<&String> = list.iter().filter_map(|b| b.note.as_ref()).collect();
            let note = if failures.is_empty() {
                "ok".to_string()
            } else {
                format!("{} of {} plans: {}", failures.len(), list.len(), failures[0])
            };
            rows.push(ReportRow {
                method: method.label().to_string(),
                alpha,
                beta,
                gelbrich_distance: distance,
                validity_mean,
                validity_std,
                lower,
                upper,
                proximity: mean_std(&proximities).0,
                diversity: mean_std(&diversities).0,
                note,
            });
        }
    }

    let mut parameters = BTreeMap::new();
    parameters.insert("kind".into(), spec.kind.label().to_string());
    parameters.insert("alpha_max".into(), spec.alpha_max.to_string());
    parameters.insert("beta_max".into(), spec.beta_max.to_string());
    parameters.insert("alpha_steps".into(), spec.alpha_steps.to_string());
    parameters.insert("beta_steps".into(), spec.beta_steps.to_string());
    parameters.insert("n_inputs".into(), n_inputs.to_string());
    parameters.insert("samples_per_cell".into(), samples_per_cell.to_string());
    parameters.insert("plan_size".into(), DEFAULT_PLAN_SIZE.to_string());
    parameters.insert("rho".into(), DEFAULT_RHO.to_string());
    parameters.insert("k".into(), DEFAULT_K.to_string());
    parameters.insert("delta".into(), DEFAULT_DELTA.to_string());
    parameters.insert(
        "methods".into(),
        ordered
            .iter()
            .map(|m| m.label())
            .collect::<Vec<_>>()
            .join("+"),
    );
    parameters.insert(
        "baseline_definition".into(),
        "plan generation with the validity weight set to zero".into(),
    );
    parameters.insert("synth_per_class".into(), SYNTH_PER_CLASS.to_string());
    Ok(ExperimentReport {
        rows,
        manifest: Manifest::new("experiment-shift", seed, parameters),
    })
}
