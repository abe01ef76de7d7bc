//! Post-hoc repair of counterfactual plans.
//!
//! Two corrections with different preconditions and budgets:
//!
//! * [`requirement_correction`]: when the nominal mean `μ̂` falls outside the
//!   favorable set of the plan, each offending point is replaced by its
//!   Euclidean projection onto the half-space `{x : μ̂ᵀx ≥ ε}`, in closed
//!   form. This restores the necessary condition for a nonzero validity
//!   lower bound (a mean outside the favorable set forces the bound to
//!   zero).
//! * [`mahalanobis_correction`]: when `μ̂` already lies inside the favorable
//!   set, the points carrying the largest dual weights `λ_j*` from the
//!   lower-bound certificate are each moved within a Euclidean
//!   `Δ`-neighborhood to maximize the Mahalanobis distance from `μ̂` to
//!   their decision hyperplane. Each move solves the small cone program
//!
//!   ```text
//!   min  vᵀΣ̂v   s.t.  ‖v − t·x_j‖₂ ≤ Δ·t,  vᵀμ̂ = 1,  t ≥ 0,
//!   ```
//!
//!   whose optimizer recovers the corrected point as `x_j' = v*/t*`.
//!
//! Both corrections touch as few points as possible and report exactly what
//! moved; untouched points are carried over bit for bit.

use serde::{Deserialize, Serialize};

use crate::bounds::{lower_bound, BoundsError, CounterfactualPlan};
use crate::conic::{solve, ConicError, LinExpr, ProblemBuilder, SolverSettings};
use crate::linalg::{dot, norm2, sqrtm_psd, LinalgError, SymMatrix};
use crate::moments::{AmbiguitySet, MomentPair};
use crate::{ErrorClass, Real};

/// Mean vectors with norm at or below this cannot define a projection
/// half-space or a margin constraint.
const MIN_MEAN_NORM: f64 = 1e-10;

/// Vectors with norm at or below this are treated as zero when a margin is
/// requested for them.
const ZERO_VECTOR_TOL: f64 = 1e-12;

/// Dual weights at or below this are considered inactive: moving their
/// point cannot change the lower bound to first order, so such points are
/// skipped and the skip is reported as a shortfall.
const LAMBDA_ACTIVITY: f64 = 1e-8;

/// Scale variables `t*` at or below this make `v*/t*` meaningless.
const MIN_SCALE: f64 = 1e-10;

/// Upper limit on half-space projection passes per point. One pass lands on
/// the margin hyperplane up to a rounding error of a few ulps; the extra
/// passes absorb that error so that a corrected plan passes a strict margin
/// check and a second correction call returns it unchanged, bit for bit.
const PROJECTION_PASSES: usize = 4;

/// Relative overshoot applied on repair passes after the exact projection.
/// A bare re-projection step of a few ulps is absorbed by rounding, so the
/// repair aims slightly past the margin instead; the overshoot is orders of
/// magnitude below the correction's own stated tolerance.
const PROJECTION_PAD: f64 = 1e-14;

/// Residual score (max of primal, dual, gap) up to which an iteration-cap
/// exit of a correction subproblem is still accepted. Small perturbation
/// limits make the neighborhood cone nearly a ray and the splitting solver
/// stalls just short of its optimality tolerance; the certificate checks on
/// `(v*, t*)` hold comfortably at this level.
const CORRECTION_RESIDUAL_SLACK: f64 = 1e-6;

/// Iteration budget for correction subproblems, sized like the bound
/// programs' budget so nearly degenerate cones get a long tail.
const CORRECTION_MAX_ITERATIONS: usize = 400_000;

/// Default margin `ε` for the requirement correction.
pub const DEFAULT_MARGIN: f64 = 0.1;

/// Default perturbation limit `Δ` for the Mahalanobis correction.
pub const DEFAULT_DELTA: f64 = 0.1;

/// Default number of points the Mahalanobis correction may move.
pub const DEFAULT_K: usize = 3;

/// Errors from plan correction.
#[derive(Debug, thiserror::Error)]
pub enum CorrectionsError {
    /// Plan, mean, covariance, or weight dimensions disagree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch {
        /// Dimension implied by the first object.
        expected: usize,
        /// Dimension actually supplied.
        got: usize,
    },
    /// The mean vector is numerically zero, so no half-space or margin is
    /// defined.
    #[error("mean vector is numerically zero (norm ≤ {MIN_MEAN_NORM:.0e})")]
    ZeroMean,
    /// A margin was requested for a numerically zero vector.
    #[error("margin of a numerically zero vector is undefined")]
    ZeroVector,
    /// The requirement margin must be finite and nonnegative.
    #[error("margin must be finite and ≥ 0, got {value}")]
    InvalidMargin {
        /// Offending margin.
        value: f64,
    },
    /// The perturbation limit must be finite and strictly positive.
    #[error("perturbation limit must be finite and > 0, got {value}")]
    InvalidDelta {
        /// Offending limit.
        value: f64,
    },
    /// The correction count must satisfy `1 ≤ k ≤ J`.
    #[error("correction count k={k} outside 1..={points}")]
    InvalidK {
        /// Requested count.
        k: usize,
        /// Number of points in the plan.
        points: usize,
    },
    /// One dual weight per plan point is required.
    #[error("expected {expected} dual weights, got {got}")]
    LambdaCount {
        /// Number of plan points.
        expected: usize,
        /// Number of weights supplied.
        got: usize,
    },
    /// Dual weights must be finite to admit a largest-k selection.
    #[error("dual weight {index} is not finite")]
    NonFiniteLambda {
        /// Zero-based weight index.
        index: usize,
    },
    /// The cone program returned a scale too small to divide by; the
    /// corrected point `v*/t*` is unreliable at this magnitude.
    #[error("correction subproblem scale t* = {t_star:.3e} is degenerate (≤ {MIN_SCALE:.0e})")]
    DegenerateScaling {
        /// Optimal scale variable.
        t_star: f64,
    },
    /// The covariance vanished along the queried direction, so the
    /// Mahalanobis margin denominator is zero.
    #[error("covariance is singular along the queried direction")]
    SingularCovariance,
    /// The conic solver failed or stopped short of optimality.
    #[error(transparent)]
    Conic(#[from] ConicError),
    /// Plan reconstruction or bound evaluation failed.
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    /// A dense linear-algebra kernel failed.
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

impl CorrectionsError {
    /// Coarse classification for exit-code mapping.
    pub fn class(&self) -> ErrorClass {
        match self {
            CorrectionsError::DimensionMismatch { .. }
            | CorrectionsError::ZeroMean
            | CorrectionsError::ZeroVector
            | CorrectionsError::InvalidMargin { .. }
            | CorrectionsError::InvalidDelta { .. }
            | CorrectionsError::InvalidK { .. }
            | CorrectionsError::LambdaCount { .. }
            | CorrectionsError::NonFiniteLambda { .. } => ErrorClass::Input,
            CorrectionsError::DegenerateScaling { .. }
            | CorrectionsError::SingularCovariance => ErrorClass::Numerical,
            CorrectionsError::Conic(e) => e.class(),
            CorrectionsError::Bounds(e) => e.class(),
            CorrectionsError::Linalg(e) => e.class(),
        }
    }
}

/// Which moment pair weights the Mahalanobis subproblems.
#[derive(Debug, Clone, Copy)]
pub enum CorrectionWeighting<'a, T> {
    /// Weight by the nominal moments of the ambiguity set (the default).
    Nominal,
    /// Weight by a worst-case moment pair, typically the `(μ*, Σ*)`
    /// certificate of a lower-bound solve.
    WorstCase(&'a MomentPair<T>),
}

/// Outcome of a correction: the repaired plan plus a ledger of what moved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + serde::de::DeserializeOwned"
))]
pub struct CorrectionReport<T: Real> {
    /// The corrected plan. Points that were not selected for correction are
    /// bitwise-identical to their inputs.
    pub corrected: CounterfactualPlan<T>,
    /// Zero-based indices of the points that were actually moved, ascending.
    pub modified_indices: Vec<usize>,
    /// Euclidean displacement of every point, in plan order; untouched
    /// points report zero.
    pub displacements: Vec<T>,
    /// Number of requested corrections that were skipped because their dual
    /// weight was inactive (at or below the activity threshold). Always zero
    /// for the requirement correction.
    pub shortfall: usize,
    /// Validity lower bound of the original plan, when evaluation was
    /// requested via [`CorrectionReport::with_lower_bounds`].
    pub lower_before: Option<T>,
    /// Validity lower bound of the corrected plan, when evaluation was
    /// requested.
    pub lower_after: Option<T>,
}

impl<T: Real> CorrectionReport<T> {
    /// Evaluates the validity lower bound before and after the correction
    /// and records both on the report.
    pub fn with_lower_bounds(
        mut self,
        original: &CounterfactualPlan<T>,
        ambiguity: &AmbiguitySet<T>,
    ) -> Result<Self, CorrectionsError> {
        self.lower_before = Some(lower_bound(original, ambiguity)?.value);
        self.lower_after = Some(lower_bound(&self.corrected, ambiguity)?.value);
        Ok(self)
    }
}

/// Projects every invalid point of the plan onto the half-space
/// `{x : μ̂ᵀx ≥ ε}`.
///
/// A point with `μ̂ᵀx_j ≥ ε` is carried over untouched; any other point is
/// replaced by
///
/// ```text
/// x_j' = x_j − (min{0, μ̂ᵀx_j − ε} / ‖μ̂‖₂²) · μ̂,
/// ```
///
/// its closest point (in Euclidean distance) satisfying the margin. After
/// the correction the mean is ε-valid for every point, so the corrected
/// plan no longer forces the validity lower bound to zero. The operation is
/// idempotent: feeding the corrected plan back returns it unchanged.
pub fn requirement_correction<T: Real>(
    plan: &CounterfactualPlan<T>,
    mean: &[T],
    margin: T,
) -> Result<CorrectionReport<T>, CorrectionsError> {
    let d = plan.dim();
    if mean.len() != d {
        return Err(CorrectionsError::DimensionMismatch {
            expected: d,
            got: mean.len(),
        });
    }
    if !(margin.is_finite() && margin >= T::zero()) {
        return Err(CorrectionsError::InvalidMargin {
            value: margin.as_f64(),
        });
    }
    if norm2(mean) <= T::of(MIN_MEAN_NORM) {
        return Err(CorrectionsError::ZeroMean);
    }
    let mean_sq = dot(mean, mean);

    let mut points = plan.points().to_vec();
    let mut modified_indices = Vec::new();
    let mut displacements = vec![T::zero(); plan.len()];
    for (j, point) in points.iter_mut().enumerate() {
        let mut moved = false;
        for pass in 0..PROJECTION_PASSES {
            let deficit = dot(mean, point) - margin;
            if deficit >= T::zero() {
                break;
            }
            let pad = if pass == 0 {
                T::zero()
            } else {
                // Scaled like the rounding noise of the deficit itself.
                T::of(PROJECTION_PAD) * (T::one() + margin.abs() + mean_sq.sqrt() * norm2(point))
            };
            let step = (deficit - pad) / mean_sq;
            for (coord, &m) in point.iter_mut().zip(mean) {
                *coord -= step * m;
            }
            moved = true;
        }
        if moved {
            modified_indices.push(j);
            let delta: Vec<T> = point
                .iter()
                .zip(plan.point(j))
                .map(|(&a, &b)| a - b)
                .collect();
            displacements[j] = norm2(&delta);
        }
    }

    Ok(CorrectionReport {
        corrected: CounterfactualPlan::new(plan.origin().to_vec(), points)?,
        modified_indices,
        displacements,
        shortfall: 0,
        lower_before: None,
        lower_after: None,
    })
}

/// Signed Mahalanobis margin of a point: `xᵀμ̂ / √(xᵀΣ̂x)`.
///
/// For `xᵀμ̂ ≥ 0` this equals the Mahalanobis distance (with respect to
/// `Σ̂`) from `μ̂` to the hyperplane `{θ : xᵀθ = 0}`, the quantity the
/// Mahalanobis correction maximizes.
pub fn mahalanobis_margin<T: Real>(
    x: &[T],
    mean: &[T],
    cov: &SymMatrix<T>,
) -> Result<T, CorrectionsError> {
    if mean.len() != x.len() {
        return Err(CorrectionsError::DimensionMismatch {
            expected: x.len(),
            got: mean.len(),
        });
    }
    if cov.dim() != x.len() {
        return Err(CorrectionsError::DimensionMismatch {
            expected: x.len(),
            got: cov.dim(),
        });
    }
    if norm2(x) <= T::of(ZERO_VECTOR_TOL) {
        return Err(CorrectionsError::ZeroVector);
    }
    let denom = cov.quad_form(x);
    if denom <= T::zero() {
        return Err(CorrectionsError::SingularCovariance);
    }
    Ok(dot(x, mean) / denom.sqrt())
}

/// Mahalanobis correction weighted by the nominal moments.
///
/// See [`mahalanobis_correction_with`].
pub fn mahalanobis_correction<T: Real>(
    plan: &CounterfactualPlan<T>,
    ambiguity: &AmbiguitySet<T>,
    k: usize,
    delta: T,
    lambda_star: &[T],
) -> Result<CorrectionReport<T>, CorrectionsError> {
    mahalanobis_correction_with(
        plan,
        ambiguity,
        k,
        delta,
        lambda_star,
        CorrectionWeighting::Nominal,
    )
}

/// Moves up to `k` points to maximize their Mahalanobis margins.
///
/// The `k` points with the largest dual weights `lambda_star` are selected
/// (ties broken toward the lowest index); weights at or below the activity
/// threshold are skipped, since moving a point with zero dual weight cannot
/// change the lower bound to first order, and the skips are reported as
/// `shortfall`. Each selected point is replaced by `x_j' = v*/t*` from the
/// cone program of the module documentation, which keeps `x_j'` within
/// Euclidean distance `Δ` of `x_j` while maximizing the margin of the mean
/// against the point's decision hyperplane.
///
/// The weighting pair is the nominal `(μ̂, Σ̂)` by default; pass
/// [`CorrectionWeighting::WorstCase`] to weight by a lower-bound
/// certificate's `(μ*, Σ*)` instead.
///
/// The stated guarantees assume the mean is valid for the plan. A point
/// with `μ̂ᵀx_j < 0` is still accepted and its margin still maximized, but
/// if even the full `Δ`-neighborhood stays infeasible (no rescaled point
/// can satisfy `vᵀμ̂ = 1`), the subproblem is reported as failed.
pub fn mahalanobis_correction_with<T: Real>(
    plan: &CounterfactualPlan<T>,
    ambiguity: &AmbiguitySet<T>,
    k: usize,
    delta: T,
    lambda_star: &[T],
    weighting: CorrectionWeighting<'_, T>,
) -> Result<CorrectionReport<T>, CorrectionsError> {
    let d = plan.dim();
    let j_count = plan.len();
    if ambiguity.dim() != d {
        return Err(CorrectionsError::DimensionMismatch {
            expected: d,
            got: ambiguity.dim(),
        });
    }
    if k == 0 || k > j_count {
        return Err(CorrectionsError::InvalidK { k, points: j_count });
    }
    if !(delta.is_finite() && delta > T::zero()) {
        return Err(CorrectionsError::InvalidDelta {
            value: delta.as_f64(),
        });
    }
    if lambda_star.len() != j_count {
        return Err(CorrectionsError::LambdaCount {
            expected: j_count,
            got: lambda_star.len(),
        });
    }
    if let Some(index) = lambda_star.iter().position(|l| !l.is_finite()) {
        return Err(CorrectionsError::NonFiniteLambda { index });
    }
    let pair = match weighting {
        CorrectionWeighting::Nominal => ambiguity.nominal(),
        CorrectionWeighting::WorstCase(pair) => pair,
    };
    if pair.dim() != d {
        return Err(CorrectionsError::DimensionMismatch {
            expected: d,
            got: pair.dim(),
        });
    }
    let mean = pair.mean();
    if norm2(mean) <= T::of(MIN_MEAN_NORM) {
        return Err(CorrectionsError::ZeroMean);
    }
    let sqrt_cov = sqrtm_psd(pair.covariance())?;

    // Largest weights first, ties toward the lowest index; the sort key is
    // total because non-finite weights were rejected above.
    let mut order: Vec<usize> = (0..j_count).collect();
    order.sort_by(|&a, &b| {
        lambda_star[b]
            .partial_cmp(&lambda_star[a])
            .expect("finite weights compare")
            .then(a.cmp(&b))
    });
    let mut selected: Vec<usize> = order
        .into_iter()
        .take(k)
        .filter(|&j| lambda_star[j] > T::of(LAMBDA_ACTIVITY))
        .collect();
    selected.sort_unstable();
    let shortfall = k - selected.len();

    let mut points = plan.points().to_vec();
    let mut displacements = vec![T::zero(); j_count];
    for &j in &selected {
        let (v, t) = correction_point(plan.point(j), mean, &sqrt_cov, delta)?;
        let mut corrected: Vec<T> = v.iter().map(|&vi| vi / t).collect();
        let delta_vec: Vec<T> = corrected
            .iter()
            .zip(plan.point(j))
            .map(|(&a, &b)| a - b)
            .collect();
        let mut moved = norm2(&delta_vec);
        // Solver noise can overshoot the hard Δ-neighborhood by a few parts
        // in 1e7; pull such a point back onto the ball along its own ray.
        // The margin changes by the same few parts in 1e7, far inside the
        // non-decrease slack.
        if moved > delta {
            let shrink = delta / moved;
            for (c, (&x, &step)) in corrected.iter_mut().zip(plan.point(j).iter().zip(&delta_vec))
            {
                *c = x + shrink * step;
            }
            moved = delta;
        }
        displacements[j] = moved;
        points[j] = corrected;
    }

    Ok(CorrectionReport {
        corrected: CounterfactualPlan::new(plan.origin().to_vec(), points)?,
        modified_indices: selected,
        displacements,
        shortfall,
        lower_before: None,
        lower_after: None,
    })
}

/// Solves one Mahalanobis subproblem and returns its optimizer `(v*, t*)`.
///
/// The quadratic objective `vᵀΣ̂v` is minimized through its square root: a
/// cone variable `w` bounds `‖Σ̂^{1/2} v‖₂` and is itself minimized, which
/// shares the argmin. Variables are laid out as `v, t, w`.
fn correction_point<T: Real>(
    x_j: &[T],
    mean: &[T],
    sqrt_cov: &SymMatrix<T>,
    delta: T,
) -> Result<(Vec<T>, T), CorrectionsError> {
    let d = x_j.len();
    let mut pb = ProblemBuilder::new();
    let v = pb.vars(d);
    let t = pb.var();
    let w = pb.var();

    // ‖Σ̂^{1/2} v‖ ≤ w, the objective epigraph.
    let mut objective_cone = Vec::with_capacity(d + 1);
    objective_cone.push(LinExpr::var(w));
    for i in 0..d {
        objective_cone.push(LinExpr::sum(
            (0..d).map(|l| LinExpr::scaled(sqrt_cov.get(i, l), v[l])),
        ));
    }
    pb.soc(objective_cone);

    // ‖v − t·x_j‖ ≤ Δ·t, the perturbation neighborhood in rescaled form.
    let mut neighborhood = Vec::with_capacity(d + 1);
    neighborhood.push(LinExpr::scaled(delta, t));
    for i in 0..d {
        neighborhood.push(LinExpr::var(v[i]) - LinExpr::scaled(x_j[i], t));
    }
    pb.soc(neighborhood);

    // vᵀμ̂ = 1 normalizes the hyperplane so the margin is linear in v.
    pb.zero(
        LinExpr::sum((0..d).map(|i| LinExpr::scaled(mean[i], v[i]))) - LinExpr::constant(T::one()),
    );
    pb.nonneg(LinExpr::var(t));
    pb.minimize(LinExpr::var(w));

    let (problem, _offset) = pb.build();
    let settings = SolverSettings {
        tolerance: T::of(1e-7),
        max_iterations: CORRECTION_MAX_ITERATIONS,
    };
    let solution = solve(&problem, settings)?;
    // Tiny perturbation limits flatten the neighborhood cone into nearly a
    // ray and the solver can stall a hair short of its tolerance; the point
    // is still usable when the residual score is far below the guarantees
    // made on it.
    let score = solution
        .primal_residual
        .max(solution.dual_residual)
        .max(solution.gap);
    let solution = if score <= T::of(CORRECTION_RESIDUAL_SLACK) {
        solution
    } else {
        solution.ensure_optimal()?
    };
    let t_star = solution.x[t.index()];
    if t_star <= T::of(MIN_SCALE) {
        return Err(CorrectionsError::DegenerateScaling {
            t_star: t_star.as_f64(),
        });
    }
    let v_star: Vec<T> = v.iter().map(|&id| solution.x[id.index()]).collect();
    Ok((v_star, t_star))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{check_membership, upper_bound};
    use crate::moments::MomentPair;
    use crate::seeded_rng;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn plan_of(points: Vec<Vec<f64>>) -> CounterfactualPlan<f64> {
        let d = points[0].len();
        CounterfactualPlan::new(vec![0.0; d], points).unwrap()
    }

    fn unit_ambiguity(mean: Vec<f64>, rho: f64) -> AmbiguitySet<f64> {
        let d = mean.len();
        AmbiguitySet::new(MomentPair::new(mean, SymMatrix::identity(d)).unwrap(), rho).unwrap()
    }

    fn bits(points: &[Vec<f64>]) -> Vec<Vec<u64>> {
        points
            .iter()
            .map(|p| p.iter().map(|v| v.to_bits()).collect())
            .collect()
    }

    /// Instance whose mean is valid for every point with a clear margin, so
    /// the Mahalanobis guarantees apply.
    fn valid_instance(
        rng: &mut impl Rng,
        max_dim: usize,
        max_points: usize,
    ) -> (CounterfactualPlan<f64>, Vec<f64>) {
        let d = 1 + rng.random_range(0..max_dim);
        let j = 1 + rng.random_range(0..max_points);
        let mean: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let mean = if norm2(&mean) < 0.3 {
            mean.iter().map(|v| v + 0.5).collect()
        } else {
            mean
        };
        let points: Vec<Vec<f64>> = (0..j)
            .map(|_| loop {
                let p: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                if dot(&p, &mean) > 0.2 && norm2(&p) > 0.2 {
                    break p;
                }
            })
            .collect();
        (plan_of(points), mean)
    }

    #[test]
    fn valid_points_are_untouched() {
        let plan = plan_of(vec![vec![2.0, 5.0]]);
        let report = requirement_correction(&plan, &[1.0, 0.0], 0.0).unwrap();
        assert_eq!(bits(report.corrected.points()), bits(plan.points()));
        assert!(report.modified_indices.is_empty());
        assert_eq!(report.displacements, vec![0.0]);
    }

    #[test]
    fn projection_examples_match_closed_form() {
        let plan = plan_of(vec![vec![-1.0, 2.0]]);
        let zero_margin = requirement_correction(&plan, &[1.0, 0.0], 0.0).unwrap();
        assert_abs_diff_eq!(zero_margin.corrected.point(0)[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(zero_margin.corrected.point(0)[1], 2.0, epsilon = 1e-12);

        let with_margin = requirement_correction(&plan, &[1.0, 0.0], 0.5).unwrap();
        assert_abs_diff_eq!(with_margin.corrected.point(0)[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(with_margin.corrected.point(0)[1], 2.0, epsilon = 1e-12);
        assert_eq!(with_margin.modified_indices, vec![0]);
        assert_abs_diff_eq!(with_margin.displacements[0], 1.5, epsilon = 1e-12);
    }

    #[test]
    fn projection_beats_every_feasible_grid_point() {
        // Independent oracle: no grid point satisfying the margin may be
        // closer to the original than the projection, and the grid optimum
        // must come within one grid step of it.
        let x = [-1.0, 2.0];
        let mean = [3.0, 1.0];
        let margin = 0.4;
        let plan = plan_of(vec![x.to_vec()]);
        let report = requirement_correction(&plan, &mean, margin).unwrap();
        let ours = norm2(
            &report
                .corrected
                .point(0)
                .iter()
                .zip(x.iter())
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        assert!(dot(report.corrected.point(0), &mean) >= margin - 1e-10);

        let step = 5e-3;
        let mut best = f64::INFINITY;
        let mut gx = x[0] - 1.5;
        while gx <= x[0] + 1.5 {
            let mut gy = x[1] - 1.5;
            while gy <= x[1] + 1.5 {
                if mean[0] * gx + mean[1] * gy >= margin {
                    let dist = ((gx - x[0]).powi(2) + (gy - x[1]).powi(2)).sqrt();
                    best = best.min(dist);
                }
                gy += step;
            }
            gx += step;
        }
        assert!(ours <= best + 1e-12, "grid beat the projection: {best} < {ours}");
        assert!(best <= ours + 2.0 * step, "projection too far from grid optimum");
    }

    #[test]
    fn corrected_plan_admits_the_mean_and_unlocks_the_upper_bound() {
        let plan = plan_of(vec![vec![-1.0, 0.4], vec![0.3, -0.8], vec![0.5, 0.5]]);
        let mean = vec![0.8, 0.6];
        let margin = 0.3;
        let report = requirement_correction(&plan, &mean, margin).unwrap();
        assert!(check_membership(&mean, &report.corrected, margin));

        // With the mean inside the favorable set, the best-case validity
        // reaches one.
        let set = unit_ambiguity(mean, 0.15);
        let upper = upper_bound(&report.corrected, &set).unwrap().value;
        assert!(upper >= 1.0 - 1e-4, "U* = {upper} after correction");
    }

    #[test]
    fn margin_closed_form_examples() {
        let id = SymMatrix::identity(2);
        assert_abs_diff_eq!(
            mahalanobis_margin(&[0.0, 1.0], &[1.0, 0.0], &id).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            mahalanobis_margin(&[1.0, 0.0], &[1.0, 0.0], &id).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        let stretched = SymMatrix::diag(&[4.0, 1.0]);
        assert_abs_diff_eq!(
            mahalanobis_margin(&[1.0, 0.0], &[1.0, 0.0], &stretched).unwrap(),
            0.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn correction_matches_angular_grid_oracle() {
        // d=2, identity covariance: maximize xᵀμ̂/‖x‖ over ‖x − x_j‖ ≤ Δ by
        // brute force and compare margins.
        let root_half = 0.5_f64.sqrt();
        let mean = vec![root_half, root_half];
        let x = vec![1.0, 0.0];
        let delta = 0.1;
        let set = unit_ambiguity(mean.clone(), 0.05);
        let plan = plan_of(vec![x.clone()]);
        let report = mahalanobis_correction(&plan, &set, 1, delta, &[1.0]).unwrap();
        let corrected = report.corrected.point(0);

        let id = SymMatrix::identity(2);
        let before = mahalanobis_margin(&x, &mean, &id).unwrap();
        let after = mahalanobis_margin(corrected, &mean, &id).unwrap();
        assert!(after > before, "margin did not increase: {before} -> {after}");
        let moved = norm2(&[corrected[0] - x[0], corrected[1] - x[1]]);
        assert!(moved <= delta * (1.0 + 1e-6), "moved {moved} > Δ");

        let mut best = f64::NEG_INFINITY;
        for ri in 0..=60 {
            let r = delta * ri as f64 / 60.0;
            for ai in 0..1500 {
                let phi = std::f64::consts::TAU * ai as f64 / 1500.0;
                let cand = [x[0] + r * phi.cos(), x[1] + r * phi.sin()];
                if norm2(&cand) > 1e-9 {
                    best = best.max(mahalanobis_margin(&cand, &mean, &id).unwrap());
                }
            }
        }
        assert_abs_diff_eq!(after, best, epsilon = 1e-3);
    }

    #[test]
    fn isotropic_weighting_scale_does_not_move_the_optimizer() {
        let mean = vec![3.0_f64.sqrt() / 2.0, 0.5];
        let x = vec![0.9, 0.1];
        let plan = plan_of(vec![x]);
        let mut corrected = Vec::new();
        for c in [0.5, 1.0, 2.0] {
            let pair = MomentPair::new(mean.clone(), SymMatrix::scaled_identity(2, c)).unwrap();
            let set = AmbiguitySet::new(pair, 0.05).unwrap();
            let report = mahalanobis_correction(&plan, &set, 1, 0.1, &[1.0]).unwrap();
            corrected.push(report.corrected.point(0).to_vec());
        }
        for other in &corrected[1..] {
            assert_abs_diff_eq!(corrected[0][0], other[0], epsilon = 1e-5);
            assert_abs_diff_eq!(corrected[0][1], other[1], epsilon = 1e-5);
        }
    }

    #[test]
    fn subproblem_optimizer_satisfies_its_constraints() {
        let mut rng = seeded_rng(41);
        for _ in 0..10 {
            let (plan, mean) = valid_instance(&mut rng, 3, 1);
            let delta = 0.05 + 0.2 * rng.random::<f64>();
            let cov = SymMatrix::identity(plan.dim());
            let sqrt_cov = sqrtm_psd(&cov).unwrap();
            let (v, t) = correction_point(plan.point(0), &mean, &sqrt_cov, delta).unwrap();
            assert!(t > MIN_SCALE);
            assert_abs_diff_eq!(dot(&v, &mean), 1.0, epsilon = 1e-6);
            let drift: Vec<f64> = v
                .iter()
                .zip(plan.point(0))
                .map(|(&vi, &xi)| vi - t * xi)
                .collect();
            assert!(norm2(&drift) <= delta * t + 1e-6);
        }
    }

    #[test]
    fn tiny_neighborhood_pins_the_point() {
        let set = unit_ambiguity(vec![0.6, 0.8], 0.05);
        let plan = plan_of(vec![vec![1.0, 0.2]]);
        let report = mahalanobis_correction(&plan, &set, 1, 1e-6, &[1.0]).unwrap();
        let corrected = report.corrected.point(0);
        assert!(norm2(&[corrected[0] - 1.0, corrected[1] - 0.2]) <= 2e-6);
    }

    #[test]
    fn selection_takes_largest_weights_with_low_index_ties() {
        let mean = vec![1.0, 1.0];
        let set = unit_ambiguity(mean, 0.05);
        let plan = plan_of(vec![
            vec![1.0, 0.1],
            vec![0.1, 1.0],
            vec![0.7, 0.7],
            vec![1.0, 1.0],
        ]);
        let lambda = [0.5, 0.2, 0.5, 0.5];
        let report = mahalanobis_correction(&plan, &set, 2, 0.05, &lambda).unwrap();
        assert_eq!(report.modified_indices, vec![0, 2]);
        assert_eq!(report.shortfall, 0);
        // Untouched points come through bit for bit.
        assert_eq!(bits(&plan.points()[1..2]), bits(&report.corrected.points()[1..2]));
        assert_eq!(bits(&plan.points()[3..]), bits(&report.corrected.points()[3..]));
    }

    #[test]
    fn inactive_weights_are_skipped_and_reported() {
        let set = unit_ambiguity(vec![1.0, 0.5], 0.05);
        let plan = plan_of(vec![vec![1.0, 0.1], vec![0.4, 0.9], vec![0.9, 0.4]]);
        let lambda = [0.4, 0.0, 1e-12];
        let report = mahalanobis_correction(&plan, &set, 3, 0.05, &lambda).unwrap();
        assert_eq!(report.modified_indices, vec![0]);
        assert_eq!(report.shortfall, 2);
        assert_eq!(report.displacements[1], 0.0);
        assert_eq!(report.displacements[2], 0.0);
    }

    #[test]
    fn correction_never_degrades_the_lower_bound() {
        let mut rng = seeded_rng(4242);
        for trial in 0..20 {
            let (plan, mean) = valid_instance(&mut rng, 3, 4);
            let set = unit_ambiguity(mean, 0.05);
            let outcome = lower_bound(&plan, &set).unwrap();
            let k = plan.len().min(2);
            let report =
                mahalanobis_correction(&plan, &set, k, 0.1, &outcome.lambda_star).unwrap();
            for (j, disp) in report.displacements.iter().enumerate() {
                assert!(
                    *disp <= 0.1 * (1.0 + 1e-6),
                    "trial {trial}: point {j} moved {disp}"
                );
            }
            let nominal = set.nominal();
            for &j in &report.modified_indices {
                let before =
                    mahalanobis_margin(plan.point(j), nominal.mean(), nominal.covariance())
                        .unwrap();
                let after = mahalanobis_margin(
                    report.corrected.point(j),
                    nominal.mean(),
                    nominal.covariance(),
                )
                .unwrap();
                assert!(
                    after >= before - 1e-6,
                    "trial {trial}: margin fell {before} -> {after}"
                );
            }
            let after = lower_bound(&report.corrected, &set).unwrap();
            assert!(
                after.value >= outcome.value - 1e-4,
                "trial {trial}: L* fell {} -> {}",
                outcome.value,
                after.value
            );
        }
    }

    #[test]
    fn worst_case_weighting_is_accepted() {
        let set = unit_ambiguity(vec![0.9, 0.5], 0.1);
        let plan = plan_of(vec![vec![1.0, 0.1], vec![0.3, 0.9]]);
        let outcome = lower_bound(&plan, &set).unwrap();
        let report = mahalanobis_correction_with(
            &plan,
            &set,
            1,
            0.1,
            &outcome.lambda_star,
            CorrectionWeighting::WorstCase(&outcome.worst_case),
        )
        .unwrap();
        assert_eq!(report.modified_indices.len(), 1);
        assert!(report.displacements.iter().any(|d| *d > 0.0));
    }

    #[test]
    fn before_after_bounds_are_recorded() {
        let set = unit_ambiguity(vec![0.8, 0.7], 0.1);
        let plan = plan_of(vec![vec![0.9, 0.3], vec![0.2, 1.0]]);
        let outcome = lower_bound(&plan, &set).unwrap();
        let report = mahalanobis_correction(&plan, &set, 1, 0.1, &outcome.lambda_star)
            .unwrap()
            .with_lower_bounds(&plan, &set)
            .unwrap();
        let before = report.lower_before.unwrap();
        let after = report.lower_after.unwrap();
        assert_abs_diff_eq!(before, outcome.value, epsilon = 1e-6);
        assert!(after >= before - 1e-4);
    }

    #[test]
    fn input_validation_rejects_malformed_requests() {
        let set = unit_ambiguity(vec![1.0, 0.0], 0.05);
        let plan = plan_of(vec![vec![1.0, 0.2]]);
        assert!(matches!(
            requirement_correction(&plan, &[0.0, 0.0], 0.1),
            Err(CorrectionsError::ZeroMean)
        ));
        assert!(matches!(
            requirement_correction(&plan, &[1.0], 0.1),
            Err(CorrectionsError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            requirement_correction(&plan, &[1.0, 0.0], -0.1),
            Err(CorrectionsError::InvalidMargin { .. })
        ));
        assert!(matches!(
            mahalanobis_correction(&plan, &set, 0, 0.1, &[1.0]),
            Err(CorrectionsError::InvalidK { .. })
        ));
        assert!(matches!(
            mahalanobis_correction(&plan, &set, 2, 0.1, &[1.0]),
            Err(CorrectionsError::InvalidK { .. })
        ));
        assert!(matches!(
            mahalanobis_correction(&plan, &set, 1, 0.0, &[1.0]),
            Err(CorrectionsError::InvalidDelta { .. })
        ));
        assert!(matches!(
            mahalanobis_correction(&plan, &set, 1, f64::NAN, &[1.0]),
            Err(CorrectionsError::InvalidDelta { .. })
        ));
        assert!(matches!(
            mahalanobis_correction(&plan, &set, 1, 0.1, &[1.0, 2.0]),
            Err(CorrectionsError::LambdaCount { .. })
        ));
        assert!(matches!(
            mahalanobis_correction(&plan, &set, 1, 0.1, &[f64::NAN]),
            Err(CorrectionsError::NonFiniteLambda { index: 0 })
        ));
        assert!(matches!(
            mahalanobis_margin(&[0.0, 0.0], &[1.0, 0.0], &SymMatrix::identity(2)),
            Err(CorrectionsError::ZeroVector)
        ));
    }

    #[test]
    fn oversized_points_trip_the_scale_guard() {
        // A point with a huge positive margin pushes the hyperplane
        // normalization t* below the divisibility floor.
        let set = unit_ambiguity(vec![1.0, 0.0], 0.05);
        let plan = plan_of(vec![vec![1e11, 0.0]]);
        assert!(matches!(
            mahalanobis_correction(&plan, &set, 1, 0.1, &[1.0]),
            Err(CorrectionsError::DegenerateScaling { .. })
        ));
    }

    #[test]
    fn report_round_trips_through_json() {
        let plan = plan_of(vec![vec![-1.0, 2.0], vec![1.0, 1.0]]);
        let report = requirement_correction(&plan, &[1.0, 0.0], 0.5).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        let back: CorrectionReport<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(report, back);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn requirement_correction_is_idempotent(
            seed in 0u64..1_000,
            margin in 0.0f64..1.0,
        ) {
            let mut rng = seeded_rng(seed);
            let d = 1 + rng.random_range(0..4usize);
            let j = 1 + rng.random_range(0..4usize);
            let mean: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            prop_assume!(norm2(&mean) > 1e-3);
            let points: Vec<Vec<f64>> = (0..j)
                .map(|_| (0..d).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect())
                .collect();
            prop_assume!(points.iter().all(|p| norm2(p) > 1e-3));
            let plan = plan_of(points);

            let once = requirement_correction(&plan, &mean, margin).unwrap();
            prop_assert!(check_membership(&mean, &once.corrected, margin));
            let twice = requirement_correction(&once.corrected, &mean, margin).unwrap();
            prop_assert_eq!(
                bits(once.corrected.points()),
                bits(twice.corrected.points())
            );
            prop_assert!(twice.modified_indices.is_empty());
        }
    }
}
