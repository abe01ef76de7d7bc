//! Construction of counterfactual plans by projected gradient descent.
//!
//! Given a factual input `x₀` and nominal classifier moments `(μ̂, Σ̂)`, the
//! generator searches for a plan `x_1..x_J` balancing three pulls:
//!
//! * **proximity**, the average adoption cost `(1/J) Σ_j c(x_j, x₀)`
//!   (minimized),
//! * **validity radius**, the smallest Mahalanobis margin
//!   `min_j μ̂ᵀx_j / ‖Σ̂^½ x_j‖₂`, which measures how far the mean may
//!   drift before some point can lose its favorable label (maximized),
//! * **diversity**, the determinant of the similarity kernel
//!   `K_ij = (1 + c(x_i, x_j))⁻¹`, which rewards well-spread points
//!   (maximized).
//!
//! The scalarized objective `Proximity − λ₁·Validity − λ₂·Diversity` is
//! minimized subject to `μ̂ᵀx_j ≥ ε` per point. Optimization runs Adam with
//! the closed-form Euclidean projection onto the half-space,
//! `x ← x − min{0, μ̂ᵀx − ε}·μ̂/‖μ̂‖₂²`, applied to every point after every
//! step, so each recorded iterate is feasible. [`PlanTrace`] keeps the
//! per-iteration breakdown together with the configuration that produced it.

use serde::{Deserialize, Serialize};

use crate::bounds::{BoundsError, CounterfactualPlan};
use crate::linalg::{det, dot, norm2, sym_eig, LinalgError, SymMatrix};
use crate::moments::AmbiguitySet;
use crate::{seeded_rng, ErrorClass, Real};

/// Mean vectors with norm at or below this cannot define the half-space
/// constraint or its projection.
const MIN_MEAN_NORM: f64 = 1e-10;

/// Adam's denominator fudge term.
const ADAM_EPS: f64 = 1e-8;

/// Margins within this absolute distance of the minimum count as tied; the
/// validity gradient is split evenly over the tied points, a standard
/// subgradient of a pointwise minimum.
const VALIDITY_TIE: f64 = 1e-9;

/// Similarity matrices whose eigenvalue condition number exceeds this are
/// treated as singular. The diversity gradient is dropped for that step (the
/// determinant itself is still reported; it is just very close to zero) and
/// the trace records the event.
const SINGULAR_COND: f64 = 1e12;

/// Mahalanobis denominators at or below this come from a numerically zero
/// point; the margin is taken as zero with no gradient instead of dividing.
const DEGENERATE_DENOMINATOR: f64 = 1e-30;

/// Absolute slack (scaled by the constraint's magnitude) allowed when
/// asserting iterate feasibility; the closed-form projection lands within a
/// few ulps of the margin hyperplane.
const FEASIBILITY_SLACK: f64 = 1e-10;

/// Default validity weight `λ₁`.
pub const DEFAULT_LAMBDA1: f64 = 2.0;

/// Default diversity weight `λ₂`.
pub const DEFAULT_LAMBDA2: f64 = 200.0;

/// Default Adam step size.
const DEFAULT_STEP_SIZE: f64 = 0.01;

/// Default Adam first-moment decay.
const DEFAULT_BETA1: f64 = 0.9;

/// Default Adam second-moment decay.
const DEFAULT_BETA2: f64 = 0.999;

/// Default optimizer iteration cap.
const DEFAULT_ITERATION_CAP: usize = 1000;

/// Default threshold on the objective change per iteration under which an
/// iteration counts toward convergence.
const DEFAULT_CONVERGENCE_TOLERANCE: f64 = 1e-8;

/// Default number of consecutive small objective changes that declares
/// convergence.
const DEFAULT_CONVERGENCE_WINDOW: usize = 20;

/// Default scale of the isotropic initialization noise around the origin.
const DEFAULT_INIT_SCALE: f64 = 0.1;

/// Errors from plan construction and objective evaluation.
#[derive(Debug, thiserror::Error)]
pub enum CopaError {
    /// Plan, ambiguity set, or weight-vector dimensions disagree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch {
        /// Dimension implied by the first object.
        expected: usize,
        /// Dimension actually supplied.
        got: usize,
    },
    /// The nominal mean is numerically zero, so no half-space constraint is
    /// defined.
    #[error("nominal mean is numerically zero (norm ≤ {MIN_MEAN_NORM:.0e})")]
    ZeroMean,
    /// A trade-off weight is negative or non-finite.
    #[error("{name} must be finite and ≥ 0, got {value}")]
    InvalidWeight {
        /// Which weight (`λ₁` or `λ₂`).
        name: &'static str,
        /// Offending value.
        value: f64,
    },
    /// The half-space margin must be finite and nonnegative.
    #[error("margin must be finite and ≥ 0, got {value}")]
    InvalidMargin {
        /// Offending margin.
        value: f64,
    },
    /// A per-feature cost weight is nonpositive or non-finite.
    #[error("cost weight {index} must be finite and > 0, got {value}")]
    InvalidCostWeight {
        /// Position of the offending weight.
        index: usize,
        /// Offending value.
        value: f64,
    },
    /// An optimizer setting is out of range.
    #[error("optimizer setting {name} must be {requirement}, got {value}")]
    InvalidOptimizer {
        /// Which setting.
        name: &'static str,
        /// What the setting must satisfy.
        requirement: &'static str,
        /// Offending value.
        value: f64,
    },
    /// A plan of zero points was requested.
    #[error("plan size must be ≥ 1")]
    EmptyPlan,
    /// Plan assembly rejected the optimizer's points.
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    /// Spectral analysis of the similarity matrix failed.
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

impl CopaError {
    /// Coarse classification for process exit codes.
    pub fn class(&self) -> ErrorClass {
        match self {
            CopaError::DimensionMismatch { .. }
            | CopaError::ZeroMean
            | CopaError::InvalidWeight { .. }
            | CopaError::InvalidMargin { .. }
            | CopaError::InvalidCostWeight { .. }
            | CopaError::InvalidOptimizer { .. }
            | CopaError::EmptyPlan => ErrorClass::Input,
            CopaError::Bounds(e) => e.class(),
            CopaError::Linalg(e) => e.class(),
        }
    }
}

/// Distance function used for both proximity and the similarity kernel.
///
/// The projection step is Euclidean regardless of this choice; the cost only
/// shapes what counts as close.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CostFunction<T> {
    /// Plain `ℓ₂` distance `c(x, y) = ‖x − y‖₂`.
    Euclidean,
    /// Per-feature weighted distance `c(x, y) = √(Σ_i w_i (x_i − y_i)²)`
    /// with strictly positive weights; larger weights mark features that are
    /// harder to change.
    Weighted(Vec<T>),
}

impl<T: Real> CostFunction<T> {
    fn validate(&self, dim: usize) -> Result<(), CopaError> {
        if let CostFunction::Weighted(weights) = self {
            if weights.len() != dim {
                return Err(CopaError::DimensionMismatch {
                    expected: dim,
                    got: weights.len(),
                });
            }
            for (index, &weight) in weights.iter().enumerate() {
                if !weight.is_finite() || weight <= T::zero() {
                    return Err(CopaError::InvalidCostWeight {
                        index,
                        value: weight.as_f64(),
                    });
                }
            }
        }
        Ok(())
    }

    fn distance(&self, x: &[T], y: &[T]) -> T {
        debug_assert_eq!(x.len(), y.len());
        let squared = match self {
            CostFunction::Euclidean => x
                .iter()
                .zip(y)
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum::<T>(),
            CostFunction::Weighted(weights) => weights
                .iter()
                .zip(x.iter().zip(y))
                .map(|(&w, (&a, &b))| w * (a - b) * (a - b))
                .sum::<T>(),
        };
        squared.sqrt()
    }

    /// Distance and its gradient in the first argument. The distance is not
    /// differentiable at coinciding points; the zero vector, a valid
    /// subgradient, keeps the optimizer stationary there.
    fn distance_and_gradient(&self, x: &[T], y: &[T]) -> (T, Vec<T>) {
        let value = self.distance(x, y);
        if value <= T::zero() {
            return (value, vec![T::zero(); x.len()]);
        }
        let gradient = match self {
            CostFunction::Euclidean => x.iter().zip(y).map(|(&a, &b)| (a - b) / value).collect(),
            CostFunction::Weighted(weights) => weights
                .iter()
                .zip(x.iter().zip(y))
                .map(|(&w, (&a, &b))| w * (a - b) / value)
                .collect(),
        };
        (value, gradient)
    }
}

/// Weights, margin, cost, optimizer settings, and initialization of a plan
/// generation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopaConfig<T> {
    /// Validity weight `λ₁ ≥ 0`.
    pub lambda1: T,
    /// Diversity weight `λ₂ ≥ 0`.
    pub lambda2: T,
    /// Half-space margin `ε ≥ 0` enforced on every iterate.
    pub margin: T,
    /// Distance function for proximity and the similarity kernel.
    pub cost: CostFunction<T>,
    /// Adam step size, finite and positive.
    pub step_size: T,
    /// Adam first-moment decay `β₁ ∈ [0, 1)`.
    pub beta1: T,
    /// Adam second-moment decay `β₂ ∈ [0, 1)`.
    pub beta2: T,
    /// Hard cap on optimizer iterations, at least 1.
    pub max_iterations: usize,
    /// Objective-change threshold under which an iteration counts toward
    /// convergence.
    pub convergence_tolerance: T,
    /// Consecutive small objective changes required to stop early.
    pub convergence_window: usize,
    /// Scale of the isotropic noise around the origin used to initialize
    /// the points (zero starts every point exactly at the origin).
    pub init_scale: T,
    /// Seed for the initialization noise.
    pub seed: u64,
}

impl<T: Real> Default for CopaConfig<T> {
    fn default() -> Self {
        Self {
            lambda1: T::of(DEFAULT_LAMBDA1),
            lambda2: T::of(DEFAULT_LAMBDA2),
            margin: T::of(crate::corrections::DEFAULT_MARGIN),
            cost: CostFunction::Euclidean,
            step_size: T::of(DEFAULT_STEP_SIZE),
            beta1: T::of(DEFAULT_BETA1),
            beta2: T::of(DEFAULT_BETA2),
            max_iterations: DEFAULT_ITERATION_CAP,
            convergence_tolerance: T::of(DEFAULT_CONVERGENCE_TOLERANCE),
            convergence_window: DEFAULT_CONVERGENCE_WINDOW,
            init_scale: T::of(DEFAULT_INIT_SCALE),
            seed: 0,
        }
    }
}

impl<T: Real> CopaConfig<T> {
    fn validate(&self, dim: usize) -> Result<(), CopaError> {
        for (name, value) in [("λ₁", self.lambda1), ("λ₂", self.lambda2)] {
            if !value.is_finite() || value < T::zero() {
                return Err(CopaError::InvalidWeight {
                    name,
                    value: value.as_f64(),
                });
            }
        }
        if !self.margin.is_finite() || self.margin < T::zero() {
            return Err(CopaError::InvalidMargin {
                value: self.margin.as_f64(),
            });
        }
        self.cost.validate(dim)?;
        if !self.step_size.is_finite() || self.step_size <= T::zero() {
            return Err(CopaError::InvalidOptimizer {
                name: "step size",
                requirement: "finite and > 0",
                value: self.step_size.as_f64(),
            });
        }
        for (name, value) in [("β₁", self.beta1), ("β₂", self.beta2)] {
            if !value.is_finite() || value < T::zero() || value >= T::one() {
                return Err(CopaError::InvalidOptimizer {
                    name,
                    requirement: "in [0, 1)",
                    value: value.as_f64(),
                });
            }
        }
        if self.max_iterations == 0 {
            return Err(CopaError::InvalidOptimizer {
                name: "iteration cap",
                requirement: "≥ 1",
                value: 0.0,
            });
        }
        if !self.convergence_tolerance.is_finite() || self.convergence_tolerance < T::zero() {
            return Err(CopaError::InvalidOptimizer {
                name: "convergence tolerance",
                requirement: "finite and ≥ 0",
                value: self.convergence_tolerance.as_f64(),
            });
        }
        if self.convergence_window == 0 {
            return Err(CopaError::InvalidOptimizer {
                name: "convergence window",
                requirement: "≥ 1",
                value: 0.0,
            });
        }
        if !self.init_scale.is_finite() || self.init_scale < T::zero() {
            return Err(CopaError::InvalidOptimizer {
                name: "initialization scale",
                requirement: "finite and ≥ 0",
                value: self.init_scale.as_f64(),
            });
        }
        Ok(())
    }
}

/// Signed validity radius of a plan.
///
/// For a mean inside the favorable set this is the distance, measured in the
/// `Σ̂^{-½}` metric, from `μ̂` to the nearest decision hyperplane, i.e. how
/// far the mean may drift before the plan can lose a favorable label. The
/// closed form `min_j μ̂ᵀx_j / ‖Σ̂^½ x_j‖₂` stays meaningful with a negative
/// sign when `μ̂` violates some half-space; the flag makes that case
/// explicit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityRadius<T> {
    /// The minimum Mahalanobis margin over plan points.
    pub value: T,
    /// Whether `μ̂` lies in the favorable set of the plan (every margin
    /// nonnegative).
    pub mean_inside: bool,
}

/// One optimizer iteration as recorded in a [`PlanTrace`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow<T> {
    /// Iteration index, starting at 0 for the initial points.
    pub iteration: usize,
    /// Objective value of the points entering this iteration.
    pub objective: T,
    /// Average adoption cost of those points.
    pub proximity: T,
    /// Determinantal diversity of those points.
    pub diversity: T,
    /// Signed validity radius of those points.
    pub validity_radius: T,
    /// Whether the diversity gradient was dropped at this iteration because
    /// the similarity matrix was numerically singular.
    pub singular_diversity: bool,
}

/// Why [`generate_plan`] stopped iterating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminationReason {
    /// The objective change stayed below the tolerance for a full window of
    /// consecutive iterations.
    Converged {
        /// Iteration at which the window filled up.
        at_iteration: usize,
    },
    /// The iteration cap elapsed first.
    IterationCap,
}

/// Full record of a plan generation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + serde::de::DeserializeOwned"
))]
pub struct PlanTrace<T> {
    /// Per-iteration objective breakdown, oldest first. Each row describes
    /// the points entering the iteration, so the step taken at the iteration
    /// cap is never evaluated or recorded.
    pub rows: Vec<TraceRow<T>>,
    /// The plan handed back to the caller: the best-objective iterate seen,
    /// which need not be the last one.
    pub final_plan: CounterfactualPlan<T>,
    /// Why the optimizer stopped.
    pub termination: TerminationReason,
    /// The configuration that produced this trace, kept so a run can be
    /// reproduced from its artifact alone.
    pub config: CopaConfig<T>,
}

impl<T: Real> PlanTrace<T> {
    /// Renders the per-iteration numbers as CSV under the fixed header
    /// `iteration,objective,proximity,diversity,validity_radius`.
    ///
    /// Values print in the shortest round-trip form, so equal runs produce
    /// byte-identical exports.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write;
        let mut out = String::from("iteration,objective,proximity,diversity,validity_radius\n");
        for row in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                row.iteration, row.objective, row.proximity, row.diversity, row.validity_radius
            )
            .expect("writing to a String cannot fail");
        }
        out
    }
}

/// Average adoption cost of a plan: `(1/J) Σ_j c(x_j, x₀)`.
///
/// Nonnegative, and zero exactly when every point coincides with the origin.
///
/// # Errors
///
/// Weighted costs of the wrong length or with nonpositive entries.
pub fn proximity<T: Real>(
    plan: &CounterfactualPlan<T>,
    cost: &CostFunction<T>,
) -> Result<T, CopaError> {
    cost.validate(plan.dim())?;
    let total: T = plan
        .points()
        .iter()
        .map(|point| cost.distance(point, plan.origin()))
        .sum();
    Ok(total / T::of(plan.len() as f64))
}

/// Determinantal diversity of a plan: `det K` with
/// `K_ij = (1 + c(x_i, x_j))⁻¹`.
///
/// `K` has a unit diagonal, so the value is 1 for a single-point plan, at
/// most 1 in general, and collapses to 0 when two points coincide.
///
/// # Errors
///
/// Weighted costs of the wrong length or with nonpositive entries, or a
/// similarity matrix the factorization cannot process (non-finite entries).
pub fn diversity<T: Real>(
    plan: &CounterfactualPlan<T>,
    cost: &CostFunction<T>,
) -> Result<T, CopaError> {
    cost.validate(plan.dim())?;
    let points = plan.points();
    let one = T::one();
    let similarity = SymMatrix::from_fn(points.len(), |a, b| {
        if a == b {
            one
        } else {
            one / (one + cost.distance(&points[a], &points[b]))
        }
    });
    Ok(det(&similarity)?)
}

/// Smallest Mahalanobis margin of the plan under the nominal moments,
/// together with a flag telling whether the mean sits in the favorable set.
///
/// The plan type rejects numerically zero points and the ambiguity set
/// guarantees a strictly PD nominal covariance, so the closed form's
/// denominators are always positive here.
///
/// # Errors
///
/// Dimension mismatch between the plan and the ambiguity set.
pub fn validity_radius<T: Real>(
    plan: &CounterfactualPlan<T>,
    ambiguity: &AmbiguitySet<T>,
) -> Result<ValidityRadius<T>, CopaError> {
    if plan.dim() != ambiguity.dim() {
        return Err(CopaError::DimensionMismatch {
            expected: ambiguity.dim(),
            got: plan.dim(),
        });
    }
    let mean = ambiguity.nominal().mean();
    let covariance = ambiguity.nominal().covariance();
    let mut value = T::infinity();
    for point in plan.points() {
        let denominator = covariance.quad_form(point).max(T::zero()).sqrt();
        debug_assert!(denominator > T::zero());
        value = value.min(dot(mean, point) / denominator);
    }
    Ok(ValidityRadius {
        value,
        mean_inside: value >= T::zero(),
    })
}

/// Scalarized objective `Proximity − λ₁·Validity − λ₂·Diversity` and its
/// gradient with respect to every plan point.
///
/// The validity term is a pointwise minimum; margins within `1e-9` of the
/// minimum share its gradient evenly. The diversity gradient uses
/// `∂ det K = det K · K⁻¹ ∘ ∂K` and is dropped when `K` is numerically
/// singular (condition number above `1e12`), which is exactly the regime
/// where `det K ≈ 0` pins the term itself.
///
/// # Errors
///
/// Plan/ambiguity dimension mismatch, invalid configuration, or a similarity
/// matrix the eigensolver cannot process.
pub fn objective_and_gradient<T: Real>(
    plan: &CounterfactualPlan<T>,
    ambiguity: &AmbiguitySet<T>,
    config: &CopaConfig<T>,
) -> Result<(T, Vec<Vec<T>>), CopaError> {
    if plan.dim() != ambiguity.dim() {
        return Err(CopaError::DimensionMismatch {
            expected: ambiguity.dim(),
            got: plan.dim(),
        });
    }
    config.validate(plan.dim())?;
    let evaluation = evaluate(
        plan.points(),
        plan.origin(),
        ambiguity.nominal().mean(),
        ambiguity.nominal().covariance(),
        config,
    )?;
    Ok((evaluation.value, evaluation.gradient))
}

/// Builds a plan of `plan_size` points for `origin` by projected Adam
/// descent on the scalarized objective.
///
/// Points start at the origin plus isotropic noise of scale
/// [`CopaConfig::init_scale`] (drawn deterministically from the seed) and
/// are projected onto `{x : μ̂ᵀx ≥ ε}` at initialization and after every
/// step. The returned plan is the best-objective iterate encountered, so the
/// final objective never exceeds the initial one.
///
/// # Errors
///
/// Zero plan size, origin/ambiguity dimension mismatch, invalid
/// configuration, a numerically zero nominal mean, or an optimizer outcome
/// the plan type rejects (a best iterate containing a numerically zero
/// point).
pub fn generate_plan<T: Real>(
    origin: &[T],
    ambiguity: &AmbiguitySet<T>,
    config: &CopaConfig<T>,
    plan_size: usize,
) -> Result<(CounterfactualPlan<T>, PlanTrace<T>), CopaError> {
    use rand_distr::Distribution;

    if plan_size == 0 {
        return Err(CopaError::EmptyPlan);
    }
    let dim = ambiguity.dim();
    if origin.len() != dim {
        return Err(CopaError::DimensionMismatch {
            expected: dim,
            got: origin.len(),
        });
    }
    config.validate(dim)?;
    let mean = ambiguity.nominal().mean();
    let covariance = ambiguity.nominal().covariance();
    if norm2(mean) <= T::of(MIN_MEAN_NORM) {
        return Err(CopaError::ZeroMean);
    }
    let mean_sq = dot(mean, mean);

    let mut rng = seeded_rng(config.seed);
    let mut points: Vec<Vec<T>> = (0..plan_size)
        .map(|_| {
            origin
                .iter()
                .map(|&x| {
                    let noise: f64 = rand_distr::StandardNormal.sample(&mut rng);
                    x + config.init_scale * T::of(noise)
                })
                .collect()
        })
        .collect();
    for point in &mut points {
        project_half_space(point, mean, mean_sq, config.margin);
    }

    let mut first_moment = vec![vec![T::zero(); dim]; plan_size];
    let mut second_moment = vec![vec![T::zero(); dim]; plan_size];
    let mut beta1_power = T::one();
    let mut beta2_power = T::one();
    let fudge = T::of(ADAM_EPS);

    let mut rows = Vec::new();
    let mut best: Option<(T, Vec<Vec<T>>)> = None;
    let mut previous: Option<T> = None;
    let mut quiet = 0usize;
    let mut termination = TerminationReason::IterationCap;

    for iteration in 0..config.max_iterations {
        let evaluation = evaluate(&points, origin, mean, covariance, config)?;
        rows.push(TraceRow {
            iteration,
            objective: evaluation.value,
            proximity: evaluation.proximity,
            diversity: evaluation.diversity,
            validity_radius: evaluation.validity_radius,
            singular_diversity: evaluation.singular_diversity,
        });
        let improved = match &best {
            None => true,
            Some((incumbent, _)) => evaluation.value < *incumbent,
        };
        if improved {
            best = Some((evaluation.value, points.clone()));
        }
        if let Some(last) = previous {
            if (evaluation.value - last).abs() < config.convergence_tolerance {
                quiet += 1;
            } else {
                quiet = 0;
            }
            if quiet >= config.convergence_window {
                termination = TerminationReason::Converged {
                    at_iteration: iteration,
                };
                break;
            }
        }
        previous = Some(evaluation.value);

        beta1_power *= config.beta1;
        beta2_power *= config.beta2;
        let correct1 = T::one() - beta1_power;
        let correct2 = T::one() - beta2_power;
        for (j, point) in points.iter_mut().enumerate() {
            for (i, coordinate) in point.iter_mut().enumerate() {
                let g = evaluation.gradient[j][i];
                let m = &mut first_moment[j][i];
                let v = &mut second_moment[j][i];
                *m = config.beta1 * *m + (T::one() - config.beta1) * g;
                *v = config.beta2 * *v + (T::one() - config.beta2) * g * g;
                *coordinate -= config.step_size * (*m / correct1) / ((*v / correct2).sqrt() + fudge);
            }
            project_half_space(point, mean, mean_sq, config.margin);
            debug_assert!(
                dot(mean, point)
                    >= config.margin
                        - T::of(FEASIBILITY_SLACK)
                            * (T::one() + config.margin.abs() + norm2(mean) * norm2(point)),
                "optimizer iterate left the feasible half-space"
            );
        }
    }

    let (_, chosen) = best.expect("the iteration cap is at least 1, so one evaluation always runs");
    let plan = CounterfactualPlan::new(origin.to_vec(), chosen)?;
    let trace = PlanTrace {
        rows,
        final_plan: plan.clone(),
        termination,
        config: config.clone(),
    };
    Ok((plan, trace))
}

/// Euclidean projection onto `{x : meanᵀx ≥ margin}` in closed form:
/// `x ← x − min{0, meanᵀx − margin}·mean/‖mean‖₂²`.
fn project_half_space<T: Real>(point: &mut [T], mean: &[T], mean_sq: T, margin: T) {
    let deficit = dot(mean, point) - margin;
    if deficit < T::zero() {
        let step = deficit / mean_sq;
        for (coordinate, &m) in point.iter_mut().zip(mean) {
            *coordinate -= step * m;
        }
    }
}

/// Objective breakdown and gradient at one iterate.
struct Evaluation<T> {
    value: T,
    proximity: T,
    diversity: T,
    validity_radius: T,
    singular_diversity: bool,
    gradient: Vec<Vec<T>>,
}

/// Evaluates the scalarized objective and its gradient on raw points. All
/// inputs are assumed validated by the public callers.
fn evaluate<T: Real>(
    points: &[Vec<T>],
    origin: &[T],
    mean: &[T],
    covariance: &SymMatrix<T>,
    config: &CopaConfig<T>,
) -> Result<Evaluation<T>, CopaError> {
    let count = points.len();
    let dim = origin.len();
    let one = T::one();
    let inv_count = one / T::of(count as f64);
    let mut gradient = vec![vec![T::zero(); dim]; count];

    let mut proximity = T::zero();
    for (point, grad) in points.iter().zip(&mut gradient) {
        let (cost, direction) = config.cost.distance_and_gradient(point, origin);
        proximity += cost;
        for (g, d) in grad.iter_mut().zip(direction) {
            *g += inv_count * d;
        }
    }
    proximity *= inv_count;

    // Margin, denominator, and squared denominator per point; a degenerate
    // denominator (a zero point mid-flight) contributes a zero margin with
    // no gradient rather than a division.
    let margins: Vec<Option<(T, T, T)>> = points
        .iter()
        .map(|point| {
            let quad = covariance.quad_form(point).max(T::zero());
            let denominator = quad.sqrt();
            (denominator > T::of(DEGENERATE_DENOMINATOR))
                .then(|| (dot(mean, point) / denominator, denominator, quad))
        })
        .collect();
    let validity_radius = margins
        .iter()
        .map(|entry| entry.map_or(T::zero(), |(margin, _, _)| margin))
        .fold(T::infinity(), T::min);
    if config.lambda1 > T::zero() {
        let tie = T::of(VALIDITY_TIE);
        let tied: Vec<usize> = margins
            .iter()
            .enumerate()
            .filter_map(|(j, entry)| {
                entry.and_then(|(margin, _, _)| (margin <= validity_radius + tie).then_some(j))
            })
            .collect();
        if !tied.is_empty() {
            let share = config.lambda1 / T::of(tied.len() as f64);
            for &j in &tied {
                let (margin, denominator, quad) =
                    margins[j].expect("tied indices carry margins");
                let scaled = covariance.mul_vec(&points[j]);
                for ((g, &m), s) in gradient[j].iter_mut().zip(mean).zip(scaled) {
                    *g -= share * (m / denominator - margin * s / quad);
                }
            }
        }
    }

    let mut diversity = one;
    let mut singular_diversity = false;
    if count > 1 {
        let mut pair_cost = vec![vec![T::zero(); count]; count];
        for a in 0..count {
            for b in (a + 1)..count {
                let cost = config.cost.distance(&points[a], &points[b]);
                pair_cost[a][b] = cost;
                pair_cost[b][a] = cost;
            }
        }
        let similarity = SymMatrix::from_fn(count, |a, b| {
            if a == b {
                one
            } else {
                one / (one + pair_cost[a][b])
            }
        });
        diversity = det(&similarity)?;
        if config.lambda2 > T::zero() {
            let eigen = sym_eig(&similarity)?;
            let largest = eigen.values.iter().fold(T::zero(), |acc, &w| acc.max(w.abs()));
            let smallest = eigen
                .values
                .iter()
                .fold(T::infinity(), |acc, &w| acc.min(w.abs()));
            if smallest * T::of(SINGULAR_COND) <= largest {
                singular_diversity = true;
            } else {
                let inverse = eigen.reassemble(|w| one / w);
                let two = T::of(2.0);
                for a in 0..count {
                    for b in 0..count {
                        if b == a {
                            continue;
                        }
                        // Coinciding points duplicate rows of K and land in
                        // the singular fallback, so here every pair distance
                        // is positive and the cost gradient is defined.
                        let (cost, direction) =
                            config.cost.distance_and_gradient(&points[a], &points[b]);
                        let kernel = one / (one + cost);
                        let coefficient = two
                            * config.lambda2
                            * diversity
                            * inverse.get(a, b)
                            * kernel
                            * kernel;
                        for (g, d) in gradient[a].iter_mut().zip(direction) {
                            *g += coefficient * d;
                        }
                    }
                }
            }
        }
    }

    let value = proximity - config.lambda1 * validity_radius - config.lambda2 * diversity;
    Ok(Evaluation {
        value,
        proximity,
        diversity,
        validity_radius,
        singular_diversity,
        gradient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::MomentPair;
    use rand::Rng;
    use rand_distr::Distribution;

    /// Central finite-difference step for gradient checks.
    const H: f64 = 1e-5;

    fn plan_of(origin: &[f64], points: &[&[f64]]) -> CounterfactualPlan<f64> {
        CounterfactualPlan::new(
            origin.to_vec(),
            points.iter().map(|p| p.to_vec()).collect(),
        )
        .expect("test plans are well formed")
    }

    fn ambiguity_with(mean: &[f64], covariance: SymMatrix<f64>, radius: f64) -> AmbiguitySet<f64> {
        AmbiguitySet::new(
            MomentPair::new(mean.to_vec(), covariance).expect("test moments are well formed"),
            radius,
        )
        .expect("test sets are well formed")
    }

    fn isotropic_ambiguity(mean: &[f64], scale: f64) -> AmbiguitySet<f64> {
        ambiguity_with(mean, SymMatrix::scaled_identity(mean.len(), scale), 0.1)
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn average_distance_matches_hand_computations() {
        let origin = [1.0, 2.0];
        let same = plan_of(&origin, &[&[1.0, 2.0], &[1.0, 2.0]]);
        assert_eq!(proximity(&same, &CostFunction::Euclidean).unwrap(), 0.0);

        let single = plan_of(&[1.0, 1.0], &[&[4.0, 5.0]]);
        assert_eq!(proximity(&single, &CostFunction::Euclidean).unwrap(), 5.0);

        let pair = plan_of(&[2.0, 0.0], &[&[3.0, 0.0], &[5.0, 0.0]]);
        assert_eq!(proximity(&pair, &CostFunction::Euclidean).unwrap(), 2.0);

        let weighted = plan_of(&[0.0, 0.0], &[&[1.0, 1.0]]);
        let cost = CostFunction::Weighted(vec![4.0, 1.0]);
        assert!(close(
            proximity(&weighted, &cost).unwrap(),
            5.0_f64.sqrt(),
            1e-15
        ));
    }

    #[test]
    fn determinant_diversity_matches_hand_computations() {
        let single = plan_of(&[0.0, 0.0], &[&[1.0, 1.0]]);
        assert_eq!(diversity(&single, &CostFunction::Euclidean).unwrap(), 1.0);

        let duplicated = plan_of(&[0.0, 0.0], &[&[1.0, 0.0], &[1.0, 0.0]]);
        assert!(close(
            diversity(&duplicated, &CostFunction::Euclidean).unwrap(),
            0.0,
            1e-14
        ));

        let unit_apart = plan_of(&[0.0, 0.0], &[&[0.0, 1.0], &[0.0, 2.0]]);
        assert!(close(
            diversity(&unit_apart, &CostFunction::Euclidean).unwrap(),
            0.75,
            1e-14
        ));
    }

    #[test]
    fn validity_radius_matches_hand_computations_and_ball_growth() {
        let plan = plan_of(&[0.5, 0.5], &[&[1.0, 0.0], &[0.0, 1.0]]);
        let set = isotropic_ambiguity(&[1.0, 1.0], 1.0);
        let radius = validity_radius(&plan, &set).unwrap();
        assert!(close(radius.value, 1.0, 1e-14));
        assert!(radius.mean_inside);

        // Cross-check by growing a Euclidean ball around the mean: every
        // parameter within distance r < 1 keeps both constraints, and a
        // violating direction exists just past r = 1.
        let mut rng = seeded_rng(31);
        let r_inside = radius.value - 1e-3;
        for _ in 0..500 {
            let direction: Vec<f64> = (0..2)
                .map(|_| {
                    let g: f64 = rand_distr::StandardNormal.sample(&mut rng);
                    g
                })
                .collect();
            let norm = norm2(&direction);
            if norm < 1e-6 {
                continue;
            }
            let theta: Vec<f64> = [1.0, 1.0]
                .iter()
                .zip(&direction)
                .map(|(&m, &u)| m + r_inside * u / norm)
                .collect();
            for point in plan.points() {
                assert!(dot(&theta, point) >= 0.0, "ball point broke a constraint");
            }
        }
        let theta_out = [1.0 - (radius.value + 1e-3), 1.0];
        assert!(dot(&theta_out, plan.point(0)) < 0.0);

        // A point on the boundary pins the radius at zero.
        let boundary = plan_of(&[0.5, 0.5], &[&[1.0, 0.0], &[1.0, -1.0]]);
        let on_edge = validity_radius(&boundary, &set).unwrap();
        assert_eq!(on_edge.value, 0.0);
        assert!(on_edge.mean_inside);

        // Scaling the covariance by 4 halves the radius.
        let wide = isotropic_ambiguity(&[1.0, 1.0], 4.0);
        let halved = validity_radius(&plan, &wide).unwrap();
        assert!(close(halved.value, 0.5, 1e-14));

        // A point in the unfavorable half-space makes the radius negative
        // and flips the flag.
        let outside = plan_of(&[0.5, 0.5], &[&[-1.0, 0.0]]);
        let negative = validity_radius(&outside, &set).unwrap();
        assert!(close(negative.value, -1.0 / 1.0, 1e-14));
        assert!(!negative.mean_inside);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = seeded_rng(2024);
        let mut checked = 0usize;
        let mut attempts = 0usize;
        while checked < 50 {
            attempts += 1;
            assert!(
                attempts < 4000,
                "instance generator kept producing degenerate cases"
            );
            let dim = 1 + rng.random_range(0..5usize);
            let count = 1 + rng.random_range(0..5usize);
            let origin: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 3.0 - 1.5).collect();
            let points: Vec<Vec<f64>> = (0..count)
                .map(|_| (0..dim).map(|_| rng.random::<f64>() * 3.0 - 1.5).collect())
                .collect();
            let mean: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let bump = SymMatrix::from_fn(dim, |_, _| rng.random::<f64>() - 0.5);
            let squared = bump.mul_sym_symmetrized(&bump);
            let covariance =
                SymMatrix::from_fn(dim, |i, j| squared.get(i, j) + if i == j { 0.6 } else { 0.0 });
            let cost = if checked % 3 == 2 {
                CostFunction::Weighted((0..dim).map(|_| 0.5 + 2.0 * rng.random::<f64>()).collect())
            } else {
                CostFunction::Euclidean
            };
            let config = CopaConfig {
                lambda1: 3.0 * rng.random::<f64>(),
                lambda2: 300.0 * rng.random::<f64>(),
                cost,
                ..CopaConfig::default()
            };

            // Genericity screens: the objective must be smooth in an H-sized
            // neighborhood, so stay away from coinciding points, validity
            // ties, and near-singular similarity matrices.
            if norm2(&mean) < 0.5 {
                continue;
            }
            let mut generic = points.iter().all(|p| norm2(p) > 0.3);
            for (a, pa) in points.iter().enumerate() {
                if norm2(&pa.iter().zip(&origin).map(|(&x, &o)| x - o).collect::<Vec<_>>()) < 0.05
                {
                    generic = false;
                }
                for pb in points.iter().skip(a + 1) {
                    if norm2(&pa.iter().zip(pb).map(|(&x, &y)| x - y).collect::<Vec<_>>()) < 0.05 {
                        generic = false;
                    }
                }
            }
            let mut margins: Vec<f64> = points
                .iter()
                .map(|p| dot(&mean, p) / covariance.quad_form(p).sqrt())
                .collect();
            margins.sort_by(|a, b| a.partial_cmp(b).expect("finite margins"));
            if margins.len() > 1 && margins[1] - margins[0] < 5e-3 {
                generic = false;
            }
            if count > 1 {
                let one = 1.0;
                let similarity = SymMatrix::from_fn(count, |a, b| {
                    if a == b {
                        one
                    } else {
                        one / (one + config.cost.distance(&points[a], &points[b]))
                    }
                });
                let eigen = sym_eig(&similarity).unwrap();
                let largest = eigen.values.iter().fold(0.0_f64, |m, w| m.max(w.abs()));
                let smallest = eigen
                    .values
                    .iter()
                    .fold(f64::INFINITY, |m, w| m.min(w.abs()));
                if smallest * 1e9 <= largest {
                    generic = false;
                }
            }
            if !generic {
                continue;
            }

            let set = ambiguity_with(&mean, covariance, 0.1);
            let plan = plan_of(&origin, &points.iter().map(Vec::as_slice).collect::<Vec<_>>());
            let (_, gradient) = objective_and_gradient(&plan, &set, &config).unwrap();
            let objective_of = |pts: &[Vec<f64>]| -> f64 {
                let perturbed = CounterfactualPlan::new(origin.clone(), pts.to_vec())
                    .expect("perturbed points stay nonzero");
                objective_and_gradient(&perturbed, &set, &config).unwrap().0
            };
            for j in 0..count {
                for i in 0..dim {
                    let mut up = points.clone();
                    up[j][i] += H;
                    let mut down = points.clone();
                    down[j][i] -= H;
                    let estimate = (objective_of(&up) - objective_of(&down)) / (2.0 * H);
                    let got = gradient[j][i];
                    assert!(
                        (estimate - got).abs() <= 1e-4 * got.abs().max(1.0),
                        "case {checked}: coordinate ({j},{i}) analytic {got} vs central {estimate}"
                    );
                }
            }
            checked += 1;
        }
    }

    #[test]
    fn proximity_only_gradient_is_the_normalized_offset() {
        let origin = [0.5, -0.25, 1.0];
        let points = [
            [1.5, 0.75, 2.0_f64],
            [0.0, -1.0, 0.5],
        ];
        let plan = plan_of(&origin, &[&points[0], &points[1]]);
        let set = isotropic_ambiguity(&[1.0, 0.0, 0.5], 1.0);
        let config = CopaConfig {
            lambda1: 0.0,
            lambda2: 0.0,
            ..CopaConfig::default()
        };
        let (_, gradient) = objective_and_gradient(&plan, &set, &config).unwrap();
        for (point, grad) in points.iter().zip(&gradient) {
            let offset: Vec<f64> = point.iter().zip(&origin).map(|(&x, &o)| x - o).collect();
            let norm = norm2(&offset);
            for (g, &d) in grad.iter().zip(&offset) {
                assert!(close(*g, 0.5 * d / norm, 1e-12));
            }
        }
    }

    #[test]
    fn tied_validity_minimum_splits_its_gradient() {
        // Margins tie exactly at 1 for both points under the identity
        // covariance, so each receives half of the λ₁ pull.
        let origin = [1.0, 1.0];
        let plan = plan_of(&origin, &[&[1.0, 0.0], &[0.0, 1.0]]);
        let set = isotropic_ambiguity(&[1.0, 1.0], 1.0);
        let config = CopaConfig {
            lambda1: 2.0,
            lambda2: 0.0,
            ..CopaConfig::default()
        };
        let (_, gradient) = objective_and_gradient(&plan, &set, &config).unwrap();
        // Point 0: proximity (1/2)·(0,−1)/1; validity −(λ₁/2)·(∇m) with
        // ∇m = μ − m·x = (1,1) − (1,0) = (0,1). Point 1 mirrors it.
        assert!(close(gradient[0][0], 0.0, 1e-12));
        assert!(close(gradient[0][1], -0.5 - 1.0, 1e-12));
        assert!(close(gradient[1][0], -0.5 - 1.0, 1e-12));
        assert!(close(gradient[1][1], 0.0, 1e-12));
    }

    #[test]
    fn unique_validity_minimum_touches_only_the_argmin() {
        let origin = [1.0, 1.0];
        let plan = plan_of(&origin, &[&[1.0, 0.0], &[1.0, 2.0]]);
        let set = isotropic_ambiguity(&[1.0, 1.0], 1.0);
        let with_validity = CopaConfig {
            lambda1: 2.0,
            lambda2: 0.0,
            ..CopaConfig::default()
        };
        let without = CopaConfig {
            lambda1: 0.0,
            ..with_validity.clone()
        };
        let (_, on) = objective_and_gradient(&plan, &set, &with_validity).unwrap();
        let (_, off) = objective_and_gradient(&plan, &set, &without).unwrap();
        // The non-argmin point's gradient is untouched by the validity term.
        assert_eq!(on[1], off[1]);
        // The argmin point's is not.
        assert_ne!(on[0], off[0]);
    }

    #[test]
    fn duplicated_points_zero_the_diversity_term_and_its_gradient() {
        let origin = vec![0.2, -0.4];
        let points = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let set = isotropic_ambiguity(&[1.0, 0.5], 1.0);
        let mean = set.nominal().mean().to_vec();
        let covariance = set.nominal().covariance().clone();
        let with_diversity = CopaConfig {
            lambda1: 0.7,
            lambda2: 200.0,
            ..CopaConfig::default()
        };
        let without = CopaConfig {
            lambda2: 0.0,
            ..with_diversity.clone()
        };
        let on = evaluate(&points, &origin, &mean, &covariance, &with_diversity).unwrap();
        let off = evaluate(&points, &origin, &mean, &covariance, &without).unwrap();
        assert!(on.singular_diversity);
        assert!(!off.singular_diversity);
        assert!(close(on.diversity, 0.0, 1e-14));
        assert_eq!(on.value.to_bits(), off.value.to_bits());
        for (a, b) in on.gradient.iter().zip(&off.gradient) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn projection_is_the_nearest_feasible_point() {
        let mut rng = seeded_rng(5);
        let mut tested = 0usize;
        while tested < 200 {
            let dim = 1 + rng.random_range(0..4usize);
            let mean: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            if norm2(&mean) < 0.3 {
                continue;
            }
            let margin = 0.5 * rng.random::<f64>();
            let x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let mut projected = x.clone();
            project_half_space(&mut projected, &mean, dot(&mean, &mean), margin);

            let slack = dot(&mean, &projected) - margin;
            assert!(
                slack >= -1e-10 * (1.0 + margin + norm2(&mean) * norm2(&projected)),
                "projected point infeasible by {slack}"
            );
            // The distance moved must equal the analytic distance from x to
            // the half-space.
            let moved = norm2(
                &x.iter()
                    .zip(&projected)
                    .map(|(&a, &b)| a - b)
                    .collect::<Vec<_>>(),
            );
            let expected = (margin - dot(&mean, &x)).max(0.0) / norm2(&mean);
            assert!(
                close(moved, expected, 1e-10 * (1.0 + expected)),
                "moved {moved}, analytic distance {expected}"
            );
            // No sampled feasible point may be closer (QP optimality).
            for _ in 0..40 {
                let z: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
                if dot(&mean, &z) < margin {
                    continue;
                }
                let to_z = norm2(&x.iter().zip(&z).map(|(&a, &b)| a - b).collect::<Vec<_>>());
                assert!(moved <= to_z + 1e-10);
            }
            tested += 1;
        }
    }

    #[test]
    fn proximity_only_descent_returns_to_the_origin() {
        let set = isotropic_ambiguity(&[1.2, 0.8], 0.5);
        let origin = [0.5, 0.1];
        let config = CopaConfig {
            lambda1: 0.0,
            lambda2: 0.0,
            margin: 0.0,
            seed: 7,
            ..CopaConfig::default()
        };
        let (plan, trace) = generate_plan(&origin, &set, &config, 3).unwrap();
        let final_proximity = proximity(&plan, &config.cost).unwrap();
        assert!(final_proximity < 0.05, "proximity stayed at {final_proximity}");
        assert!(final_proximity < trace.rows[0].objective);
        for point in plan.points() {
            let away = norm2(
                &point
                    .iter()
                    .zip(&origin)
                    .map(|(&x, &o)| x - o)
                    .collect::<Vec<_>>(),
            );
            assert!(away < 0.1, "a point stayed {away} away from the origin");
        }
    }

    #[test]
    fn proximity_only_descent_finds_the_projected_origin() {
        // The origin violates the margin, so the unique proximity minimizer
        // subject to the half-space is its projection p. Adam's
        // per-coordinate normalization leaves a residual tangential drift
        // wherever the constraint is active, so noisy iterates settle in a
        // step-size-scale neighborhood of p rather than on it; the
        // best-objective return still makes p an exact fixed point of a run
        // that starts there.
        let set = isotropic_ambiguity(&[1.2, 0.8], 0.5);
        let origin = [-0.5, 0.2];
        let mean = set.nominal().mean().to_vec();
        let config = CopaConfig {
            lambda1: 0.0,
            lambda2: 0.0,
            seed: 13,
            ..CopaConfig::default()
        };
        let mut expected = origin.to_vec();
        project_half_space(&mut expected, &mean, dot(&mean, &mean), config.margin);

        // Zero-noise initialization starts every point exactly at p; no
        // later iterate can beat that objective, so the run returns p bit
        // for bit.
        let pinned = CopaConfig {
            init_scale: 0.0,
            ..config.clone()
        };
        let (fixed, _) = generate_plan(&origin, &set, &pinned, 2).unwrap();
        for point in fixed.points() {
            for (x, e) in point.iter().zip(&expected) {
                assert_eq!(x.to_bits(), e.to_bits());
            }
        }

        // From a noisy start the returned plan is feasible and nearly
        // optimal: proximity cannot beat the constrained optimum and must
        // land close above it.
        let optimal = norm2(
            &origin
                .iter()
                .zip(&expected)
                .map(|(&a, &b)| a - b)
                .collect::<Vec<_>>(),
        );
        let (plan, trace) = generate_plan(&origin, &set, &config, 2).unwrap();
        let achieved = proximity(&plan, &config.cost).unwrap();
        assert!(achieved >= optimal - 1e-12);
        assert!(
            achieved <= 1.3 * optimal,
            "proximity {achieved} too far above the optimum {optimal}"
        );
        assert!(achieved <= trace.rows[0].objective + 1e-12);
        for point in plan.points() {
            let margin = dot(&mean, point);
            assert!(margin >= config.margin - 1e-10 * (1.0 + config.margin));
        }
    }

    #[test]
    fn validity_weight_raises_the_final_radius() {
        let set = isotropic_ambiguity(&[1.2, 0.8], 0.5);
        let origin = [0.5, 0.1];
        let base = CopaConfig {
            lambda1: 0.0,
            lambda2: 0.0,
            seed: 11,
            ..CopaConfig::default()
        };
        let weighted = CopaConfig {
            lambda1: 2.0,
            ..base.clone()
        };
        let (plain_plan, _) = generate_plan(&origin, &set, &base, 3).unwrap();
        let (pushed_plan, _) = generate_plan(&origin, &set, &weighted, 3).unwrap();
        let plain = validity_radius(&plain_plan, &set).unwrap().value;
        let pushed = validity_radius(&pushed_plan, &set).unwrap().value;
        assert!(
            pushed > plain,
            "λ₁ = 2 gave radius {pushed}, no better than {plain}"
        );
    }

    #[test]
    fn diversity_weight_spreads_the_final_plan() {
        let set = isotropic_ambiguity(&[1.2, 0.8], 0.5);
        let origin = [0.5, 0.1];
        let base = CopaConfig {
            lambda2: 0.0,
            seed: 11,
            ..CopaConfig::default()
        };
        let weighted = CopaConfig {
            lambda2: 200.0,
            ..base.clone()
        };
        let (tight_plan, _) = generate_plan(&origin, &set, &base, 3).unwrap();
        let (spread_plan, _) = generate_plan(&origin, &set, &weighted, 3).unwrap();
        let tight = diversity(&tight_plan, &base.cost).unwrap();
        let spread = diversity(&spread_plan, &weighted.cost).unwrap();
        assert!(
            spread > tight,
            "λ₂ = 200 gave diversity {spread}, no better than {tight}"
        );
    }

    #[test]
    fn trace_records_the_run_and_stays_feasible() {
        let set = isotropic_ambiguity(&[1.0, -0.4, 0.6], 0.8);
        let origin = [0.3, 0.2, -0.1];
        let config = CopaConfig {
            seed: 21,
            cost: CostFunction::Weighted(vec![2.0, 0.5, 1.0]),
            ..CopaConfig::default()
        };
        let (plan, trace) = generate_plan(&origin, &set, &config, 4).unwrap();
        assert!(trace.rows.len() <= config.max_iterations);
        for (index, row) in trace.rows.iter().enumerate() {
            assert_eq!(row.iteration, index);
            assert!(row.objective.is_finite());
            assert!(row.proximity >= 0.0);
            assert!(row.diversity.is_finite());
            assert!(row.validity_radius.is_finite());
        }
        match trace.termination {
            TerminationReason::Converged { at_iteration } => {
                assert_eq!(at_iteration, trace.rows.last().unwrap().iteration);
            }
            TerminationReason::IterationCap => {
                assert_eq!(trace.rows.len(), config.max_iterations);
            }
        }
        assert_eq!(trace.config, config);
        assert_eq!(&trace.final_plan, &plan);
        // Non-divergence: the returned plan cannot lose to the first iterate.
        let (final_objective, _) = objective_and_gradient(&plan, &set, &config).unwrap();
        assert!(final_objective <= trace.rows[0].objective + 1e-6);
        // Feasibility of the returned plan within the stated slack.
        let mean = set.nominal().mean();
        for point in plan.points() {
            let slack = dot(mean, point) - config.margin;
            assert!(slack >= -1e-10 * (1.0 + config.margin + norm2(mean) * norm2(point)));
        }
    }

    #[test]
    fn equal_seeds_reproduce_the_run_bit_for_bit() {
        let set = isotropic_ambiguity(&[0.9, 1.1], 0.5);
        let origin = [0.4, 0.3];
        let config = CopaConfig {
            seed: 42,
            ..CopaConfig::default()
        };
        let (plan_a, trace_a) = generate_plan(&origin, &set, &config, 3).unwrap();
        let (plan_b, trace_b) = generate_plan(&origin, &set, &config, 3).unwrap();
        for (a, b) in plan_a.points().iter().zip(plan_b.points()) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(trace_a.to_csv(), trace_b.to_csv());

        let other = CopaConfig { seed: 43, ..config };
        let (plan_c, _) = generate_plan(&origin, &set, &other, 3).unwrap();
        let identical = plan_a
            .points()
            .iter()
            .zip(plan_c.points())
            .all(|(a, b)| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(!identical, "different seeds reproduced the same plan");
    }

    #[test]
    fn csv_export_uses_the_pinned_header() {
        let set = isotropic_ambiguity(&[1.0, 0.5], 1.0);
        let config = CopaConfig {
            max_iterations: 5,
            seed: 3,
            ..CopaConfig::default()
        };
        let (_, trace) = generate_plan(&[0.5, 0.2], &set, &config, 2).unwrap();
        let csv = trace.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines[0],
            "iteration,objective,proximity,diversity,validity_radius"
        );
        assert_eq!(lines.len(), trace.rows.len() + 1);
        for (index, line) in lines.iter().enumerate().skip(1) {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), 5);
            assert_eq!(fields[0], (index - 1).to_string());
            // The shortest round-trip form parses back to the exact value.
            let objective: f64 = fields[1].parse().unwrap();
            assert_eq!(
                objective.to_bits(),
                trace.rows[index - 1].objective.to_bits()
            );
        }
    }

    #[test]
    fn input_validation_rejects_malformed_requests() {
        let set = isotropic_ambiguity(&[1.0, 0.5], 1.0);
        let origin = [0.4, 0.2];
        let ok = CopaConfig::<f64>::default();

        let err = generate_plan(&origin, &set, &ok, 0).unwrap_err();
        assert!(matches!(err, CopaError::EmptyPlan));
        assert_eq!(err.class(), ErrorClass::Input);

        let err = generate_plan(&[0.4, 0.2, 0.0], &set, &ok, 2).unwrap_err();
        assert!(matches!(
            err,
            CopaError::DimensionMismatch {
                expected: 2,
                got: 3
            }
        ));

        let negative_weight = CopaConfig {
            lambda1: -0.5,
            ..ok.clone()
        };
        assert!(matches!(
            generate_plan(&origin, &set, &negative_weight, 2).unwrap_err(),
            CopaError::InvalidWeight { name: "λ₁", .. }
        ));

        let negative_margin = CopaConfig {
            margin: -0.1,
            ..ok.clone()
        };
        assert!(matches!(
            generate_plan(&origin, &set, &negative_margin, 2).unwrap_err(),
            CopaError::InvalidMargin { .. }
        ));

        let bad_beta = CopaConfig {
            beta1: 1.0,
            ..ok.clone()
        };
        assert!(matches!(
            generate_plan(&origin, &set, &bad_beta, 2).unwrap_err(),
            CopaError::InvalidOptimizer { name: "β₁", .. }
        ));

        let no_iterations = CopaConfig {
            max_iterations: 0,
            ..ok.clone()
        };
        assert!(matches!(
            generate_plan(&origin, &set, &no_iterations, 2).unwrap_err(),
            CopaError::InvalidOptimizer {
                name: "iteration cap",
                ..
            }
        ));

        let no_window = CopaConfig {
            convergence_window: 0,
            ..ok.clone()
        };
        assert!(matches!(
            generate_plan(&origin, &set, &no_window, 2).unwrap_err(),
            CopaError::InvalidOptimizer {
                name: "convergence window",
                ..
            }
        ));

        let zero_step = CopaConfig {
            step_size: 0.0,
            ..ok.clone()
        };
        assert!(matches!(
            generate_plan(&origin, &set, &zero_step, 2).unwrap_err(),
            CopaError::InvalidOptimizer {
                name: "step size",
                ..
            }
        ));

        let short_weights = CopaConfig {
            cost: CostFunction::Weighted(vec![1.0]),
            ..ok.clone()
        };
        assert!(matches!(
            generate_plan(&origin, &set, &short_weights, 2).unwrap_err(),
            CopaError::DimensionMismatch { .. }
        ));

        let bad_weights = CopaConfig {
            cost: CostFunction::Weighted(vec![1.0, 0.0]),
            ..ok.clone()
        };
        assert!(matches!(
            generate_plan(&origin, &set, &bad_weights, 2).unwrap_err(),
            CopaError::InvalidCostWeight { index: 1, .. }
        ));

        let zero_mean = ambiguity_with(&[0.0, 0.0], SymMatrix::scaled_identity(2, 1.0), 0.1);
        let err = generate_plan(&origin, &zero_mean, &ok, 2).unwrap_err();
        assert!(matches!(err, CopaError::ZeroMean));
        assert_eq!(err.class(), ErrorClass::Input);
    }

    #[test]
    fn lu_determinant_agrees_with_the_eigenvalue_product() {
        let mut rng = seeded_rng(17);
        for _ in 0..20 {
            let dim = 3;
            let count = 5;
            let origin: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
            let points: Vec<Vec<f64>> = (0..count)
                .map(|_| (0..dim).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect())
                .collect();
            let plan = CounterfactualPlan::new(origin, points).unwrap();
            let value = diversity(&plan, &CostFunction::Euclidean).unwrap();
            assert!((-1e-9..=1.0 + 1e-9).contains(&value), "diversity {value}");

            let pts = plan.points();
            let similarity = SymMatrix::from_fn(count, |a, b| {
                if a == b {
                    1.0
                } else {
                    1.0 / (1.0 + CostFunction::Euclidean.distance(&pts[a], &pts[b]))
                }
            });
            let product: f64 = sym_eig(&similarity).unwrap().values.iter().product();
            assert!(close(value, product, 1e-8), "LU {value} vs spectrum {product}");
        }
    }

    #[test]
    fn trace_round_trips_through_json() {
        let set = isotropic_ambiguity(&[1.0, 0.5], 1.0);
        let config = CopaConfig {
            max_iterations: 30,
            seed: 9,
            cost: CostFunction::Weighted(vec![1.5, 0.75]),
            ..CopaConfig::default()
        };
        let (_, trace) = generate_plan(&[0.5, 0.2], &set, &config, 2).unwrap();
        let serialized = serde_json::to_string(&trace).unwrap();
        let recovered: PlanTrace<f64> = serde_json::from_str(&serialized).unwrap();
        assert_eq!(recovered, trace);
    }
}
