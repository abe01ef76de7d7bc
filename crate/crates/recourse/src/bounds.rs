//! Worst-case and best-case validity bounds for counterfactual plans.
//!
//! A plan is valid for a parameter vector `θ` when every explanation point
//! stays on the favorable side of the decision boundary, `x_jᵀθ ≥ 0`. With
//! the classifier known only through an ambiguity ball of moment pairs, the
//! validity of a plan becomes an interval:
//!
//! * [`lower_bound`]: the smallest probability of `{θ : x_jᵀθ ≥ 0 ∀j}` over
//!   every distribution whose moments lie in the ball, as the optimal value
//!   of a semidefinite program. Its solution also yields the per-point
//!   multipliers `λ_j*`, the supporting points `z_j*`, and the worst-case
//!   moment pair `(μ*, Σ*)`, which downstream correction steps consume.
//! * [`upper_bound`]: a semidefinite upper bound on the largest such
//!   probability, tight for single-point plans.
//! * [`chebyshev_sup`]: the multivariate one-sided Chebyshev value
//!   `1/(1+κ)` with `κ` the squared Mahalanobis distance from the mean to
//!   the favorable cone, used as an independent oracle for the upper bound.
//!
//! Both programs are transcribed directly into [`ProblemBuilder`] form. The
//! variable layout is fixed and documented on each builder (`μ, Σ, C, M`,
//! then per-point blocks for the lower bound; `γ, z₀, z, Z, q, Q, λ` for the
//! upper bound) so certificate extraction by index stays honest.

use serde::{Deserialize, Serialize};

use crate::conic::{
    solve, ConicError, ConicSolution, LinExpr, ProblemBuilder, SolveStatus, SolverSettings,
};
use crate::linalg::{dot, norm2, psd_project, sqrtm_psd, sym_eig, LinalgError, SymMatrix};
use crate::moments::{AmbiguitySet, MomentPair, MomentsError};
use crate::{ErrorClass, Real};

/// Points whose norm falls at or below this are rejected at plan
/// construction: a zero direction makes the favorable set degenerate (its
/// half-space constraint is vacuous or empty depending on sign conventions).
const ZERO_POINT_TOL: f64 = 1e-12;

/// Strictest eigenvalue admitted when inverting a covariance for the
/// Chebyshev oracle.
const CHEBYSHEV_PD_FLOOR: f64 = 1e-12;

/// Iteration budget for the two bound programs. Generic instances converge
/// in a few thousand iterations; the budget is sized for degenerate ones
/// (zero ambiguity radius), which need snapshots out to a few hundred
/// thousand iterations before the solver's extrapolated value settles.
const BOUND_MAX_ITERATIONS: usize = 400_000;

/// Residual score (max of primal, dual, gap) up to which an iteration-cap
/// exit still counts as a usable solve of a degenerate instance, provided
/// the solver's extrapolated value estimate passed its stability check. The
/// bar is far below any tolerance promised on bound values but far above
/// the solver's own optimality tolerance.
const DEGENERATE_RESIDUAL_SLACK: f64 = 1e-4;

/// Solver settings used by the plain (non-`_with`) bound entry points.
fn bound_settings<T: Real>() -> SolverSettings<T> {
    SolverSettings {
        tolerance: T::of(1e-7),
        max_iterations: BOUND_MAX_ITERATIONS,
    }
}

fn suboptimal_error<T: Real>(solution: &ConicSolution<T>) -> BoundsError {
    BoundsError::Conic(ConicError::Suboptimal {
        status: solution.status,
        iterations: solution.iterations,
        primal_residual: solution.primal_residual.as_f64(),
        dual_residual: solution.dual_residual.as_f64(),
        gap: solution.gap.as_f64(),
    })
}

/// Accepts a terminal solver state as a usable bound value.
///
/// An `Optimal` exit is used as-is. At radius zero the ball constraint pins
/// the moments and one side of each bound program loses attainment; the
/// splitting solver then approaches the optimal value on an `O(1/k)` tail
/// and exits at the iteration cap with small but not tolerance-level
/// residuals. Such an exit is accepted when the candidate is near-feasible
/// and near-complementary (score within [`DEGENERATE_RESIDUAL_SLACK`]) and
/// the extrapolated value estimate passed the solver's stability safeguard;
/// the estimate then stands in for the candidate's raw objective. Anything
/// else is a failure carrying the terminal residuals.
fn accept_bound_value<T: Real>(solution: &ConicSolution<T>) -> Result<T, BoundsError> {
    match solution.status {
        SolveStatus::Optimal => Ok(solution.objective),
        SolveStatus::IterationCap => {
            let score = solution
                .primal_residual
                .max(solution.dual_residual)
                .max(solution.gap);
            match solution.refined_objective {
                Some(refined) if score <= T::of(DEGENERATE_RESIDUAL_SLACK) => Ok(refined),
                _ => Err(suboptimal_error(solution)),
            }
        }
        _ => Err(suboptimal_error(solution)),
    }
}

/// Errors from bound computation.
#[derive(Debug, thiserror::Error)]
pub enum BoundsError {
    /// Plan and ambiguity set (or mean vector) dimensions disagree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch {
        /// Dimension implied by the first object.
        expected: usize,
        /// Dimension actually supplied.
        got: usize,
    },
    /// A plan must carry at least one explanation point.
    #[error("a plan needs at least one point")]
    EmptyPlan,
    /// A plan point was (numerically) the zero vector.
    #[error("plan point {index} is numerically zero (norm ≤ {ZERO_POINT_TOL:.0e})")]
    ZeroPoint {
        /// Zero-based index of the offending point.
        index: usize,
    },
    /// The conic solver failed or stopped short of optimality.
    #[error(transparent)]
    Conic(#[from] ConicError),
    /// A dense linear-algebra kernel failed.
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    /// Moment-pair construction failed while extracting the worst case.
    #[error(transparent)]
    Moments(#[from] MomentsError),
}

impl BoundsError {
    /// Coarse classification for exit-code mapping.
    pub fn class(&self) -> ErrorClass {
        match self {
            BoundsError::DimensionMismatch { .. }
            | BoundsError::EmptyPlan
            | BoundsError::ZeroPoint { .. } => ErrorClass::Input,
            BoundsError::Conic(e) => e.class(),
            BoundsError::Linalg(e) => e.class(),
            BoundsError::Moments(e) => e.class(),
        }
    }
}

/// An ordered collection of counterfactual explanation points together with
/// the factual input they explain.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualPlan<T> {
    origin: Vec<T>,
    points: Vec<Vec<T>>,
}

// Wire form: {"origin": [...], "points": [[...], ...]}; construction reruns
// on the way in so dimension and zero-point invariants hold for loaded plans.
#[derive(Serialize, Deserialize)]
struct PlanRepr<T> {
    origin: Vec<T>,
    points: Vec<Vec<T>>,
}

impl<T: Real + Serialize> Serialize for CounterfactualPlan<T> {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        PlanRepr {
            origin: self.origin.clone(),
            points: self.points.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de, T: Real + Deserialize<'de>> Deserialize<'de> for CounterfactualPlan<T> {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = PlanRepr::<T>::deserialize(deserializer)?;
        CounterfactualPlan::new(repr.origin, repr.points).map_err(serde::de::Error::custom)
    }
}

impl<T: Real> CounterfactualPlan<T> {
    /// Builds a plan, requiring at least one point, a shared dimension for
    /// the origin and every point, and no numerically zero point.
    pub fn new(origin: Vec<T>, points: Vec<Vec<T>>) -> Result<Self, BoundsError> {
        if points.is_empty() {
            return Err(BoundsError::EmptyPlan);
        }
        let d = origin.len();
        for (index, p) in points.iter().enumerate() {
            if p.len() != d {
                return Err(BoundsError::DimensionMismatch {
                    expected: d,
                    got: p.len(),
                });
            }
            if norm2(p) <= T::of(ZERO_POINT_TOL) {
                return Err(BoundsError::ZeroPoint { index });
            }
        }
        Ok(Self { origin, points })
    }

    /// Parameter-space dimension `d`.
    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    /// Number of explanation points `J`.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// A plan always has at least one point; kept for idiom completeness.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The factual input `x₀`.
    pub fn origin(&self) -> &[T] {
        &self.origin
    }

    /// All explanation points in order.
    pub fn points(&self) -> &[Vec<T>] {
        &self.points
    }

    /// One explanation point.
    pub fn point(&self, j: usize) -> &[T] {
        &self.points[j]
    }

    /// Replaces point `j`, revalidating the zero-point invariant.
    pub fn with_point(&self, j: usize, point: Vec<T>) -> Result<Self, BoundsError> {
        let mut points = self.points.clone();
        points[j] = point;
        Self::new(self.origin.clone(), points)
    }
}

/// Terminal solver state for one semidefinite program, kept for reporting.
///
/// Values are stored as `f64` regardless of the working scalar: diagnostics
/// feed logs and JSON reports, not further computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    /// Outcome classification of the solve.
    pub status: SolveStatus,
    /// Iterations consumed.
    pub iterations: usize,
    /// Relative primal residual at the returned candidate.
    pub primal_residual: f64,
    /// Relative dual residual at the returned candidate.
    pub dual_residual: f64,
    /// Relative duality gap at the returned candidate.
    pub gap: f64,
    /// Bound value before clamping to `[0, 1]`.
    pub raw_value: f64,
}

impl SolveDiagnostics {
    fn of<T: Real>(solution: &ConicSolution<T>, raw_value: T) -> Self {
        Self {
            status: solution.status,
            iterations: solution.iterations,
            primal_residual: solution.primal_residual.as_f64(),
            dual_residual: solution.dual_residual.as_f64(),
            gap: solution.gap.as_f64(),
            raw_value: raw_value.as_f64(),
        }
    }
}

/// Solver diagnostics for the pair of programs behind a [`BoundsResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsDiagnostics {
    /// Diagnostics of the worst-case (lower bound) program.
    pub lower: SolveDiagnostics,
    /// Diagnostics of the best-case (upper bound) program.
    pub upper: SolveDiagnostics,
}

/// Lower bound with its certificates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct LowerBoundOutcome<T> {
    /// Worst-case validity `L*`, clamped to `[0, 1]`.
    pub value: T,
    /// Per-point multipliers `λ_j*`; their magnitudes rank how much each
    /// point constrains the worst case.
    pub lambda_star: Vec<T>,
    /// Per-point supporting vectors `z_j*`; `z_j*/λ_j*` lies on the
    /// hyperplane `x_jᵀθ = 0` when `λ_j*` is meaningfully positive.
    pub z_star: Vec<Vec<T>>,
    /// Moment pair `(μ*, Σ*)` attaining the worst case.
    pub worst_case: MomentPair<T>,
    /// Terminal solver state.
    pub diagnostics: SolveDiagnostics,
}

/// Upper bound outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct UpperBoundOutcome<T> {
    /// Best-case validity bound `U*`, clamped to `[0, 1]`.
    pub value: T,
    /// Terminal solver state.
    pub diagnostics: SolveDiagnostics,
}

/// Both validity bounds for one plan and ambiguity set, with certificates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct BoundsResult<T> {
    /// Worst-case validity `L*` in `[0, 1]`.
    pub lower: T,
    /// Best-case validity bound `U*` in `[0, 1]`.
    pub upper: T,
    /// Per-point multipliers from the worst-case program.
    pub lambda_star: Vec<T>,
    /// Per-point supporting vectors from the worst-case program.
    pub z_star: Vec<Vec<T>>,
    /// Worst-case moment pair `(μ*, Σ*)`.
    pub worst_case: MomentPair<T>,
    /// Solver diagnostics for both programs.
    pub diagnostics: BoundsDiagnostics,
}

fn check_dims<T: Real>(
    plan: &CounterfactualPlan<T>,
    ambiguity: &AmbiguitySet<T>,
) -> Result<(), BoundsError> {
    if plan.dim() != ambiguity.dim() {
        return Err(BoundsError::DimensionMismatch {
            expected: plan.dim(),
            got: ambiguity.dim(),
        });
    }
    Ok(())
}

/// Worst-case validity of `plan` over the ambiguity ball, by semidefinite
/// programming, with default solver settings.
///
/// See [`lower_bound_with`] for the program and the returned certificates.
pub fn lower_bound<T: Real>(
    plan: &CounterfactualPlan<T>,
    ambiguity: &AmbiguitySet<T>,
) -> Result<LowerBoundOutcome<T>, BoundsError> {
    lower_bound_with(plan, ambiguity, bound_settings())
}

/// Worst-case validity with explicit solver settings.
///
/// Solves
///
/// ```text
/// L* = inf  1 − Σ_j λ_j
/// over      μ ∈ ℝᵈ, Σ ⪰ 0, C ∈ ℝ^{d×d}, M ⪰ 0, (λ_j ∈ ℝ, z_j ∈ ℝᵈ, Z_j ∈ 𝕊ᵈ)
/// s.t.      −x_jᵀz_j ≥ 0                                  ∀j
///           [[Z_j, z_j], [z_jᵀ, λ_j]] ⪰ 0                 ∀j
///           Σ_j [[Z_j, z_j], [z_jᵀ, λ_j]] ⪯ [[M, μ], [μᵀ, 1]]
///           [[Σ, C], [Cᵀ, Σ̂]] ⪰ 0
///           [[M − Σ, μ], [μᵀ, 1]] ⪰ 0
///           ‖μ̂‖² − 2·μ̂ᵀμ + Tr(M + Σ̂ − 2C) ≤ ρ²
/// ```
///
/// The final row is the Gelbrich ball written through the coupling block
/// `C`; at `ρ = 0` it pins `(μ, Σ)` to the nominal pair, so no separate
/// code path exists for the degenerate radius.
///
/// The value is clamped to `[0, 1]` (the raw optimum is kept in the
/// diagnostics). `λ_j*`, `z_j*`, and `(μ*, Σ*)` are read off the primal
/// solution; `Σ*` is PSD-projected to absorb solver tolerance before it is
/// rebuilt into a [`MomentPair`].
///
/// # Errors
///
/// Dimension mismatch up front; a solve that ends anywhere short of
/// optimality surfaces as [`ConicError::Suboptimal`] carrying the terminal
/// residuals.
pub fn lower_bound_with<T: Real>(
    plan: &CounterfactualPlan<T>,
    ambiguity: &AmbiguitySet<T>,
    settings: SolverSettings<T>,
) -> Result<LowerBoundOutcome<T>, BoundsError> {
    check_dims(plan, ambiguity)?;
    let d = plan.dim();
    let big_j = plan.len();
    let nominal = ambiguity.nominal();
    let rho = ambiguity.radius();

    // Variable layout (fixed; extraction below indexes into it):
    // μ, Σ, C (d² scalars, row-major, not symmetric), M, then per point j
    // the block (λ_j, z_j, Z_j).
    let mut pb = ProblemBuilder::<T>::new();
    let mu = pb.vars(d);
    let sigma = pb.sym(d);
    let c_vars = pb.vars(d * d);
    let m = pb.sym(d);
    let mut lambdas = Vec::with_capacity(big_j);
    let mut zs = Vec::with_capacity(big_j);
    let mut zmats = Vec::with_capacity(big_j);
    for _ in 0..big_j {
        lambdas.push(pb.var());
        zs.push(pb.vars(d));
        zmats.push(pb.sym(d));
    }

    for j in 0..big_j {
        let x = plan.point(j);
        // Support point on the unfavorable side: −x_jᵀz_j ≥ 0.
        pb.nonneg(LinExpr::sum(
            (0..d).map(|i| LinExpr::scaled(-x[i], zs[j][i])),
        ));
        // Moment block of the point mass: [[Z_j, z_j], [z_jᵀ, λ_j]] ⪰ 0.
        let entries: Vec<Vec<LinExpr<T>>> = (0..=d)
            .map(|r| {
                (0..=d)
                    .map(|c| match (r < d, c < d) {
                        (true, true) => zmats[j].expr(r, c),
                        (true, false) => LinExpr::var(zs[j][r]),
                        (false, true) => LinExpr::var(zs[j][c]),
                        (false, false) => LinExpr::var(lambdas[j]),
                    })
                    .collect()
            })
            .collect();
        pb.psd(entries);
    }

    // Σ_j [[Z_j, z_j], [z_jᵀ, λ_j]] ⪯ [[M, μ], [μᵀ, 1]].
    let dominance: Vec<Vec<LinExpr<T>>> = (0..=d)
        .map(|r| {
            (0..=d)
                .map(|c| match (r < d, c < d) {
                    (true, true) => {
                        m.expr(r, c) - LinExpr::sum((0..big_j).map(|j| zmats[j].expr(r, c)))
                    }
                    (true, false) => {
                        LinExpr::var(mu[r])
                            - LinExpr::sum((0..big_j).map(|j| LinExpr::var(zs[j][r])))
                    }
                    (false, true) => {
                        LinExpr::var(mu[c])
                            - LinExpr::sum((0..big_j).map(|j| LinExpr::var(zs[j][c])))
                    }
                    (false, false) => {
                        LinExpr::constant(T::one())
                            - LinExpr::sum((0..big_j).map(|j| LinExpr::var(lambdas[j])))
                    }
                })
                .collect()
        })
        .collect();
    pb.psd(dominance);

    // Coupling block of the Gelbrich constraint: [[Σ, C], [Cᵀ, Σ̂]] ⪰ 0.
    let coupling: Vec<Vec<LinExpr<T>>> = (0..2 * d)
        .map(|r| {
            (0..2 * d)
                .map(|c| match (r < d, c < d) {
                    (true, true) => sigma.expr(r, c),
                    (true, false) => LinExpr::var(c_vars[r * d + (c - d)]),
                    (false, true) => LinExpr::var(c_vars[c * d + (r - d)]),
                    (false, false) => {
                        LinExpr::constant(nominal.covariance().get(r - d, c - d))
                    }
                })
                .collect()
        })
        .collect();
    pb.psd(coupling);

    // Second-moment consistency: [[M − Σ, μ], [μᵀ, 1]] ⪰ 0.
    let consistency: Vec<Vec<LinExpr<T>>> = (0..=d)
        .map(|r| {
            (0..=d)
                .map(|c| match (r < d, c < d) {
                    (true, true) => m.expr(r, c) - sigma.expr(r, c),
                    (true, false) => LinExpr::var(mu[r]),
                    (false, true) => LinExpr::var(mu[c]),
                    (false, false) => LinExpr::constant(T::one()),
                })
                .collect()
        })
        .collect();
    pb.psd(consistency);

    // Ball radius: ρ² − ‖μ̂‖² + 2·μ̂ᵀμ − Tr M − Tr Σ̂ + 2·Tr C ≥ 0.
    let mu_hat = nominal.mean();
    let mu_hat_sq: T = mu_hat.iter().map(|&v| v * v).sum();
    let two = T::of(2.0);
    let radius_row = LinExpr::constant(rho * rho - mu_hat_sq - nominal.covariance().trace())
        + LinExpr::sum((0..d).map(|i| LinExpr::scaled(two * mu_hat[i], mu[i])))
        - m.trace()
        + LinExpr::sum((0..d).map(|i| LinExpr::scaled(two, c_vars[i * d + i])));
    pb.nonneg(radius_row);

    pb.minimize(
        LinExpr::constant(T::one()) - LinExpr::sum((0..big_j).map(|j| LinExpr::var(lambdas[j]))),
    );

    let (problem, offset) = pb.build();
    let solution = solve(&problem, settings)?;
    let raw = accept_bound_value(&solution)? + offset;

    let lambda_star: Vec<T> = lambdas.iter().map(|&v| solution.x[v.index()]).collect();
    let z_star: Vec<Vec<T>> = zs
        .iter()
        .map(|z| z.iter().map(|&v| solution.x[v.index()]).collect())
        .collect();
    let mu_star: Vec<T> = mu.iter().map(|&v| solution.x[v.index()]).collect();
    let sigma_star = SymMatrix::from_fn(d, |i, j| solution.x[sigma.id(i, j).index()]);
    let worst_case = MomentPair::new(mu_star, psd_project(&sigma_star)?)?;

    Ok(LowerBoundOutcome {
        value: raw.max(T::zero()).min(T::one()),
        lambda_star,
        z_star,
        worst_case,
        diagnostics: SolveDiagnostics::of(&solution, raw),
    })
}

/// Best-case validity bound with default solver settings.
///
/// See [`upper_bound_with`] for the program.
pub fn upper_bound<T: Real>(
    plan: &CounterfactualPlan<T>,
    ambiguity: &AmbiguitySet<T>,
) -> Result<UpperBoundOutcome<T>, BoundsError> {
    upper_bound_with(plan, ambiguity, bound_settings())
}

/// Best-case validity bound with explicit solver settings.
///
/// Solves
///
/// ```text
/// U* = inf  z₀ + γ·(ρ² − ‖μ̂‖² − Tr Σ̂) + q + Tr Q
/// over      γ ≥ 0, z₀ ∈ ℝ, z ∈ ℝᵈ, Z ⪰ 0, q ≥ 0, Q ⪰ 0, λ ∈ ℝ₊^J
/// s.t.      [[γI − Z, γ·Σ̂^½], [γ·Σ̂^½, Q]] ⪰ 0
///           [[γI − Z, γμ̂ + z], [(γμ̂ + z)ᵀ, q]] ⪰ 0
///           [[Z, z], [zᵀ, z₀]] ⪰ 0
///           [[Z, z], [zᵀ, z₀ − 1]] ⪰ Σ_j λ_j·[[0, x_j/2], [x_jᵀ/2, 0]]
/// ```
///
/// The optimal value dominates the supremum of plan validity over the ball;
/// for a single-point plan the relaxation step behind the final constraint
/// is exact and the bound is the supremum itself.
///
/// # Errors
///
/// As for [`lower_bound_with`].
pub fn upper_bound_with<T: Real>(
    plan: &CounterfactualPlan<T>,
    ambiguity: &AmbiguitySet<T>,
    settings: SolverSettings<T>,
) -> Result<UpperBoundOutcome<T>, BoundsError> {
    check_dims(plan, ambiguity)?;
    let d = plan.dim();
    let big_j = plan.len();
    let nominal = ambiguity.nominal();
    let rho = ambiguity.radius();
    let root_cov = sqrtm_psd(nominal.covariance())?;

    // Variable layout: γ, z₀, z, Z, q, Q, λ.
    let mut pb = ProblemBuilder::<T>::new();
    let gamma = pb.var();
    let z0 = pb.var();
    let z = pb.vars(d);
    let zmat = pb.sym(d);
    let q = pb.var();
    let qmat = pb.sym(d);
    let lambdas = pb.vars(big_j);

    let gamma_i_minus_z = |r: usize, c: usize| -> LinExpr<T> {
        if r == c {
            LinExpr::var(gamma) - zmat.expr(r, c)
        } else {
            -zmat.expr(r, c)
        }
    };

    // [[γI − Z, γ·Σ̂^½], [γ·Σ̂^½, Q]] ⪰ 0.
    let first: Vec<Vec<LinExpr<T>>> = (0..2 * d)
        .map(|r| {
            (0..2 * d)
                .map(|c| match (r < d, c < d) {
                    (true, true) => gamma_i_minus_z(r, c),
                    (true, false) => LinExpr::scaled(root_cov.get(r, c - d), gamma),
                    (false, true) => LinExpr::scaled(root_cov.get(r - d, c), gamma),
                    (false, false) => qmat.expr(r - d, c - d),
                })
                .collect()
        })
        .collect();
    pb.psd(first);

    // [[γI − Z, γμ̂ + z], [(γμ̂ + z)ᵀ, q]] ⪰ 0.
    let mu_hat = nominal.mean();
    let second: Vec<Vec<LinExpr<T>>> = (0..=d)
        .map(|r| {
            (0..=d)
                .map(|c| match (r < d, c < d) {
                    (true, true) => gamma_i_minus_z(r, c),
                    (true, false) => LinExpr::scaled(mu_hat[r], gamma) + LinExpr::var(z[r]),
                    (false, true) => LinExpr::scaled(mu_hat[c], gamma) + LinExpr::var(z[c]),
                    (false, false) => LinExpr::var(q),
                })
                .collect()
        })
        .collect();
    pb.psd(second);

    // [[Z, z], [zᵀ, z₀]] ⪰ 0: the quadratic certificate is nonnegative.
    let third: Vec<Vec<LinExpr<T>>> = (0..=d)
        .map(|r| {
            (0..=d)
                .map(|c| match (r < d, c < d) {
                    (true, true) => zmat.expr(r, c),
                    (true, false) => LinExpr::var(z[r]),
                    (false, true) => LinExpr::var(z[c]),
                    (false, false) => LinExpr::var(z0),
                })
                .collect()
        })
        .collect();
    pb.psd(third);

    // [[Z, z − Σ_j λ_j·x_j/2], [(…)ᵀ, z₀ − 1]] ⪰ 0: the certificate
    // dominates 1 on the favorable cone.
    let half = T::of(0.5);
    let shifted = |i: usize| -> LinExpr<T> {
        LinExpr::var(z[i])
            - LinExpr::sum(
                (0..big_j).map(|j| LinExpr::scaled(half * plan.point(j)[i], lambdas[j])),
            )
    };
    let fourth: Vec<Vec<LinExpr<T>>> = (0..=d)
        .map(|r| {
            (0..=d)
                .map(|c| match (r < d, c < d) {
                    (true, true) => zmat.expr(r, c),
                    (true, false) => shifted(r),
                    (false, true) => shifted(c),
                    (false, false) => LinExpr::var(z0) - LinExpr::constant(T::one()),
                })
                .collect()
        })
        .collect();
    pb.psd(fourth);

    pb.nonneg(LinExpr::var(gamma));
    pb.nonneg(LinExpr::var(q));
    for j in 0..big_j {
        pb.nonneg(LinExpr::var(lambdas[j]));
    }

    let mu_hat_sq: T = mu_hat.iter().map(|&v| v * v).sum();
    let gamma_weight = rho * rho - mu_hat_sq - nominal.covariance().trace();
    pb.minimize(
        LinExpr::var(z0) + LinExpr::scaled(gamma_weight, gamma) + LinExpr::var(q) + qmat.trace(),
    );

    let (problem, offset) = pb.build();
    let solution = solve(&problem, settings)?;
    let raw = accept_bound_value(&solution)? + offset;

    Ok(UpperBoundOutcome {
        value: raw.max(T::zero()).min(T::one()),
        diagnostics: SolveDiagnostics::of(&solution, raw),
    })
}

/// Both bounds plus certificates, with default solver settings.
pub fn compute_bounds<T: Real>(
    plan: &CounterfactualPlan<T>,
    ambiguity: &AmbiguitySet<T>,
) -> Result<BoundsResult<T>, BoundsError> {
    compute_bounds_with(plan, ambiguity, bound_settings())
}

/// Both bounds plus certificates, with explicit solver settings.
pub fn compute_bounds_with<T: Real>(
    plan: &CounterfactualPlan<T>,
    ambiguity: &AmbiguitySet<T>,
    settings: SolverSettings<T>,
) -> Result<BoundsResult<T>, BoundsError> {
    let lower = lower_bound_with(plan, ambiguity, settings)?;
    let upper = upper_bound_with(plan, ambiguity, settings)?;
    debug_assert!(
        lower.value <= upper.value + T::of(1e-5),
        "bound inversion: lower {} > upper {}",
        lower.value,
        upper.value
    );
    Ok(BoundsResult {
        lower: lower.value,
        upper: upper.value,
        lambda_star: lower.lambda_star,
        z_star: lower.z_star,
        worst_case: lower.worst_case,
        diagnostics: BoundsDiagnostics {
            lower: lower.diagnostics,
            upper: upper.diagnostics,
        },
    })
}

/// One-sided multivariate Chebyshev bound: the largest probability any
/// distribution with the given moments can place on the favorable cone of
/// `plan`, namely `1/(1+κ)` with
/// `κ = inf {(θ−μ)ᵀΣ⁻¹(θ−μ) : x_jᵀθ ≥ 0 ∀j}`.
///
/// `κ` is computed by minimizing the Mahalanobis norm over the cone in
/// second-order-cone form. A mean inside the cone gives `κ = 0` and a bound
/// of one.
///
/// # Errors
///
/// Requires a strictly PD covariance; solver failures propagate.
pub fn chebyshev_sup<T: Real>(
    moment: &MomentPair<T>,
    plan: &CounterfactualPlan<T>,
) -> Result<T, BoundsError> {
    if moment.dim() != plan.dim() {
        return Err(BoundsError::DimensionMismatch {
            expected: moment.dim(),
            got: plan.dim(),
        });
    }
    let d = plan.dim();
    let eig = sym_eig(moment.covariance())?;
    if eig.values.last().is_some_and(|&w| w.as_f64() <= CHEBYSHEV_PD_FLOOR) {
        return Err(BoundsError::Moments(MomentsError::CovarianceNotPd {
            min_eigenvalue: eig.values.last().map_or(0.0, |w| w.as_f64()),
        }));
    }
    let whitener = eig.reassemble(|w| T::one() / w.sqrt());

    let mut pb = ProblemBuilder::<T>::new();
    let theta = pb.vars(d);
    let t = pb.var();
    // (t, Σ^{-1/2}(θ − μ)) in the second-order cone makes t the Mahalanobis
    // distance at the optimum.
    let mut cone_rows = Vec::with_capacity(d + 1);
    cone_rows.push(LinExpr::var(t));
    for i in 0..d {
        let row_coeffs: Vec<T> = (0..d).map(|k| whitener.get(i, k)).collect();
        let centered = LinExpr::dot(&row_coeffs, &theta)
            - LinExpr::constant(dot(&row_coeffs, moment.mean()));
        cone_rows.push(centered);
    }
    pb.soc(cone_rows);
    for j in 0..plan.len() {
        pb.nonneg(LinExpr::dot(plan.point(j), &theta));
    }
    pb.minimize(LinExpr::var(t));

    let (problem, offset) = pb.build();
    let solution = solve(&problem, SolverSettings::default())?.ensure_optimal()?;
    let distance = (solution.objective + offset).max(T::zero());
    Ok(T::one() / (T::one() + distance * distance))
}

/// Whether `mean` lies in the favorable cone of `plan` with at least
/// `margin` slack on every point: `x_jᵀmean ≥ margin ∀j` (boundary
/// inclusive).
///
/// Dimensions must agree; this is a caller obligation, checked only in
/// debug builds.
pub fn check_membership<T: Real>(mean: &[T], plan: &CounterfactualPlan<T>, margin: T) -> bool {
    debug_assert_eq!(mean.len(), plan.dim(), "membership dimension mismatch");
    plan.points().iter().all(|x| dot(x, mean) >= margin)
}
