//! Projection-splitting solver on the homogeneous self-dual embedding.
//!
//! The primal/dual pair
//!
//! ```text
//!     min cᵀx  s.t.  A·x + s = b, s ∈ K
//!     max −bᵀy s.t.  Aᵀ·y + c = 0, y ∈ K*
//! ```
//!
//! is folded into one feasibility problem over `u = (x, y, τ)` and
//! `v = (r, s, κ)` with the skew-symmetric pencil
//!
//! ```text
//!     Q = [  0   Aᵀ  c ]
//!         [ −A   0   b ]           Q·u = v,  u ∈ C,  v ∈ C*,
//!         [ −cᵀ −bᵀ  0 ]
//! ```
//!
//! where `C = ℝⁿ × K* × ℝ₊`. A solution with `τ > 0` recovers the optimal
//! pair as `x/τ, y/τ, s/τ`; a solution with `τ = 0, κ > 0` encodes an
//! infeasibility or unboundedness certificate. The embedding is solved by
//! alternating a linear solve against the fixed matrix `(I + Q)` with a
//! Euclidean projection onto `C`, over-relaxed by `α = 1.5`:
//!
//! ```text
//!     ũ ← (I + Q)⁻¹ (u + v)
//!     t ← α·ũ + (1 − α)·u
//!     u ← Π_C(t − v)
//!     v ← v − t + u
//! ```
//!
//! After every update `u ∈ C` and `v ∈ C*` hold exactly (Moreau), so dual
//! iterates need no separate bookkeeping. `(I + Q)` is LU-factored once.
//!
//! The problem data is Ruiz-equilibrated first (iterated row/column
//! rescaling toward unit infinity norms). Rows belonging to one second-order
//! or PSD cone must share a scale factor or the scaled slack would leave the
//! cone, so those blocks are equilibrated uniformly. Residuals and the
//! returned solution are always reported against the original, unscaled
//! data.
//!
//! Infeasibility and unboundedness detection is best-effort by design: the
//! programs built in this crate are feasible by construction, so
//! certificates are only examined after 5000 iterations without residual
//! progress, and failing that the solver keeps iterating toward the cap.
//!
//! On degenerate instances (no strict complementarity, for example a ball
//! constraint of radius zero) the splitting iteration slows to an `O(1/k)`
//! tail. The candidate sequence then follows `x(k) ≈ x* + e/k` very closely,
//! so the solver keeps candidate snapshots at doubling iteration counts and
//! forms the Richardson extrapolation of the current candidate against the
//! snapshot from half as many iterations, which cancels the `1/k` term. The
//! extrapolated point is projected back onto the cones, re-scored against
//! the original data, and used only when it scores better, so the step is
//! safe on well-conditioned problems (where it degenerates to a no-op) and
//! deterministic everywhere.

use crate::linalg::{self, LuFactors};
use crate::Real;

use super::{
    svec, unsvec, Cone, ConicError, ConicProblem, ConicSolution, SolveStatus, SolverSettings,
};

/// Over-relaxation factor of the splitting iteration.
const ALPHA: f64 = 1.5;

/// Residuals are evaluated every this many iterations.
const CHECK_INTERVAL: usize = 25;

/// Iterations without residual progress before certificates are examined.
const STAGNATION_WINDOW: usize = 5000;

/// Ruiz equilibration sweeps.
const RUIZ_SWEEPS: usize = 10;

/// Two successive objective extrapolations must agree this closely
/// (relative to the value) before the estimate is reported. The remaining
/// error of a first-order extrapolation shrinks four-fold per snapshot
/// doubling, so agreement at this level certifies the newer estimate to
/// roughly a third of it.
const REFINEMENT_STABILITY: f64 = 5e-5;

/// Solves a cone program to the requested tolerance.
///
/// Deterministic: identical inputs produce identical outputs, bit for bit.
/// The returned solution carries the last (on success) or best (on cap)
/// candidate together with its unscaled residuals.
///
/// # Errors
///
/// [`ConicError::Malformed`] if the problem fails validation and
/// [`ConicError::NumericalBreakdown`] if iterates stop being finite.
pub fn solve<T: Real>(
    problem: &ConicProblem<T>,
    settings: SolverSettings<T>,
) -> Result<ConicSolution<T>, ConicError> {
    problem.validate()?;
    let n = problem.n;
    let m = problem.rows();

    let scaling = equilibrate(problem);
    let lu = factor_embedding(n, m, &scaling)?;

    let nn = n + m + 1;
    let mut u = vec![T::zero(); nn];
    let mut v = vec![T::zero(); nn];
    u[nn - 1] = T::one();
    v[nn - 1] = T::one();

    let mut t = vec![T::zero(); nn];
    let alpha = T::of(ALPHA);
    let one_minus_alpha = T::one() - alpha;

    let mut best: Option<Candidate<T>> = None;
    let mut best_score = T::infinity();
    let mut since_progress = 0usize;
    let mut iterations = 0usize;
    // Plain-iterate snapshots at doubling iteration counts, the reference
    // points for Richardson extrapolation of the candidate sequence.
    let mut snapshots: Vec<(usize, Candidate<T>)> = Vec::new();
    let mut next_snapshot = CHECK_INTERVAL;

    for iter in 1..=settings.max_iterations {
        iterations = iter;

        // ũ = (I+Q)⁻¹(u + v), reusing t as the right-hand side.
        for i in 0..nn {
            t[i] = u[i] + v[i];
        }
        let ut = lu.solve(&t)?;

        // Over-relax, project onto C, update the dual sequence.
        for i in 0..nn {
            t[i] = alpha * ut[i] + one_minus_alpha * u[i];
            u[i] = t[i] - v[i];
        }
        project_onto_c(&mut u, n, &problem.cones)?;
        for i in 0..nn {
            v[i] = v[i] - t[i] + u[i];
        }

        if iter % CHECK_INTERVAL != 0 && iter != settings.max_iterations {
            continue;
        }

        if !u.iter().chain(v.iter()).all(|w| w.is_finite()) {
            return Err(ConicError::NumericalBreakdown { iteration: iter });
        }

        if let Some(plain) = extract_candidate(problem, &scaling, &u, &v) {
            // Candidate under test: the extrapolated point when it scores
            // better, otherwise the plain one.
            let reference = snapshots.iter().rev().find(|(h, _)| *h * 2 <= iter);
            let cand = reference
                .and_then(|half| extrapolate_candidate(problem, half, iter, &plain))
                .filter(|e| e.score() < plain.score())
                .unwrap_or_else(|| plain.clone());

            if iter >= next_snapshot {
                snapshots.push((iter, plain));
                next_snapshot = iter * 2;
            }

            let score = cand.score();
            if score < best_score * T::of(0.99) {
                best_score = score;
                since_progress = 0;
            } else {
                since_progress += CHECK_INTERVAL;
            }
            let converged = cand.primal_residual <= settings.tolerance
                && cand.dual_residual <= settings.tolerance
                && cand.gap <= settings.tolerance;
            if best
                .as_ref()
                .map_or(true, |b| cand.score() < b.score())
            {
                best = Some(cand.clone());
            }
            if converged {
                return Ok(cand.into_solution(SolveStatus::Optimal, iter, None));
            }
        } else {
            since_progress += CHECK_INTERVAL;
        }

        if since_progress >= STAGNATION_WINDOW {
            if let Some(status) = detect_certificates(problem, &scaling, &u, settings.tolerance)? {
                let sol = best
                    .clone()
                    .map(|c| c.into_solution(status, iter, None))
                    .unwrap_or_else(|| empty_solution(problem, status, iter));
                return Ok(sol);
            }
            // No certificate; give the iteration another half window before
            // looking again.
            since_progress = STAGNATION_WINDOW / 2;
        }
    }

    let refined = refine_objective(&snapshots);
    Ok(best
        .map(|c| c.into_solution(SolveStatus::IterationCap, iterations, refined))
        .unwrap_or_else(|| empty_solution(problem, SolveStatus::IterationCap, iterations)))
}

/// Diagonal equilibration of the problem data.
struct Scaling<T> {
    /// Scaled constraint matrix, row-major `m × n`.
    a: Vec<T>,
    /// Scaled offset.
    b: Vec<T>,
    /// Scaled objective.
    c: Vec<T>,
    /// Row scales `D`; `Â = D·A·E`, `b̂ = D·b`.
    d: Vec<T>,
    /// Column scales `E`; `ĉ = E·c`.
    e: Vec<T>,
}

/// Ruiz equilibration with cone-block-uniform row scaling.
fn equilibrate<T: Real>(problem: &ConicProblem<T>) -> Scaling<T> {
    let n = problem.n;
    let m = problem.rows();
    let mut a = problem.a.clone();
    let mut d = vec![T::one(); m];
    let mut e = vec![T::one(); n];

    // Row ranges that must share one scale factor (second-order and PSD
    // cones are not invariant under per-coordinate scaling).
    let mut blocks: Vec<(usize, usize, bool)> = Vec::new();
    let mut offset = 0;
    for cone in &problem.cones {
        let rows = cone.rows();
        let uniform = matches!(cone, Cone::SecondOrder(_) | Cone::Psd(_));
        blocks.push((offset, rows, uniform));
        offset += rows;
    }

    for _ in 0..RUIZ_SWEEPS {
        let mut row_norm = vec![T::zero(); m];
        for i in 0..m {
            for j in 0..n {
                row_norm[i] = row_norm[i].max(a[i * n + j].abs());
            }
        }
        let mut dr = vec![T::one(); m];
        for &(start, rows, uniform) in &blocks {
            if uniform {
                let block_max = row_norm[start..start + rows]
                    .iter()
                    .fold(T::zero(), |acc, &x| acc.max(x));
                let s = inv_sqrt_scale(block_max);
                for r in dr.iter_mut().skip(start).take(rows) {
                    *r = s;
                }
            } else {
                for i in start..start + rows {
                    dr[i] = inv_sqrt_scale(row_norm[i]);
                }
            }
        }

        let mut col_norm = vec![T::zero(); n];
        for i in 0..m {
            for j in 0..n {
                col_norm[j] = col_norm[j].max(a[i * n + j].abs());
            }
        }
        let de: Vec<T> = col_norm.into_iter().map(inv_sqrt_scale).collect();

        for i in 0..m {
            for j in 0..n {
                a[i * n + j] = a[i * n + j] * dr[i] * de[j];
            }
        }
        for i in 0..m {
            d[i] = d[i] * dr[i];
        }
        for j in 0..n {
            e[j] = e[j] * de[j];
        }
    }

    let b = problem
        .b
        .iter()
        .zip(&d)
        .map(|(&bi, &di)| bi * di)
        .collect();
    let c = problem
        .c
        .iter()
        .zip(&e)
        .map(|(&cj, &ej)| cj * ej)
        .collect();
    Scaling { a, b, c, d, e }
}

/// `1/√x` guarded against empty rows and extreme scales.
fn inv_sqrt_scale<T: Real>(x: T) -> T {
    if x <= T::of(1e-12) {
        T::one()
    } else {
        T::one() / x.sqrt()
    }
}

/// Assembles and factors `I + Q` for the scaled data.
fn factor_embedding<T: Real>(
    n: usize,
    m: usize,
    s: &Scaling<T>,
) -> Result<LuFactors<T>, ConicError> {
    let nn = n + m + 1;
    let mut q = vec![T::zero(); nn * nn];
    for i in 0..nn {
        q[i * nn + i] = T::one();
    }
    for i in 0..m {
        for j in 0..n {
            let aij = s.a[i * n + j];
            // +Aᵀ block (x rows, y columns).
            q[j * nn + (n + i)] += aij;
            // −A block (y rows, x columns).
            q[(n + i) * nn + j] -= aij;
        }
    }
    for j in 0..n {
        q[j * nn + (nn - 1)] += s.c[j];
        q[(nn - 1) * nn + j] -= s.c[j];
    }
    for i in 0..m {
        q[(n + i) * nn + (nn - 1)] += s.b[i];
        q[(nn - 1) * nn + (n + i)] -= s.b[i];
    }
    Ok(LuFactors::factor(nn, &q)?)
}

/// Projects `u = (x, y, τ)` onto `C = ℝⁿ × K* × ℝ₊` in place.
fn project_onto_c<T: Real>(u: &mut [T], n: usize, cones: &[Cone]) -> Result<(), ConicError> {
    let nn = u.len();
    let mut offset = n;
    for cone in cones {
        let rows = cone.rows();
        project_cone(&mut u[offset..offset + rows], cone, true)?;
        offset += rows;
    }
    u[nn - 1] = u[nn - 1].max(T::zero());
    Ok(())
}

/// Euclidean projection of one slack block onto a cone or its dual.
fn project_cone<T: Real>(block: &mut [T], cone: &Cone, dual: bool) -> Result<(), ConicError> {
    match cone {
        Cone::Zero(_) => {
            // Dual of {0} is the free cone: leave the block alone. The
            // primal projection zeroes it.
            if !dual {
                for v in block.iter_mut() {
                    *v = T::zero();
                }
            }
        }
        Cone::Nonneg(_) => {
            for v in block.iter_mut() {
                *v = (*v).max(T::zero());
            }
        }
        Cone::SecondOrder(_) => {
            let t = block[0];
            let z_norm = linalg::norm2(&block[1..]);
            if z_norm <= t {
                // Inside: unchanged.
            } else if z_norm <= -t {
                // Polar interior: projects to the origin.
                for v in block.iter_mut() {
                    *v = T::zero();
                }
            } else {
                let bound = (t + z_norm) * T::of(0.5);
                let ratio = bound / z_norm;
                block[0] = bound;
                for v in block[1..].iter_mut() {
                    *v = *v * ratio;
                }
            }
        }
        Cone::Psd(side) => {
            let mat = unsvec(*side, block);
            let clamped = linalg::psd_project(&mat)?;
            block.copy_from_slice(&svec(&clamped));
        }
    }
    Ok(())
}

/// A primal/dual candidate with residuals measured on the original data.
#[derive(Clone)]
struct Candidate<T> {
    x: Vec<T>,
    y: Vec<T>,
    s: Vec<T>,
    objective: T,
    primal_residual: T,
    dual_residual: T,
    gap: T,
}

impl<T: Real> Candidate<T> {
    fn score(&self) -> T {
        self.primal_residual.max(self.dual_residual).max(self.gap)
    }

    fn into_solution(
        self,
        status: SolveStatus,
        iterations: usize,
        refined_objective: Option<T>,
    ) -> ConicSolution<T> {
        ConicSolution {
            status,
            x: self.x,
            y: self.y,
            objective: self.objective,
            primal_residual: self.primal_residual,
            dual_residual: self.dual_residual,
            gap: self.gap,
            iterations,
            refined_objective,
        }
    }
}

/// Extrapolated optimal-value estimate from the last three snapshots, under
/// the `v(k) = v* + c/k` tail model; `None` until three snapshots exist or
/// when two successive extrapolations disagree (the model does not fit).
fn refine_objective<T: Real>(snapshots: &[(usize, Candidate<T>)]) -> Option<T> {
    let len = snapshots.len();
    if len < 3 {
        return None;
    }
    let extrapolate = |a: &(usize, Candidate<T>), b: &(usize, Candidate<T>)| -> T {
        let f = T::of(a.0 as f64 / (b.0 - a.0) as f64);
        b.1.objective + (b.1.objective - a.1.objective) * f
    };
    let older = extrapolate(&snapshots[len - 3], &snapshots[len - 2]);
    let newer = extrapolate(&snapshots[len - 2], &snapshots[len - 1]);
    let stable =
        (newer - older).abs() <= T::of(REFINEMENT_STABILITY) * (T::one() + newer.abs());
    (stable && newer.is_finite()).then_some(newer)
}

/// Recovers `(x, y, s)` from the embedding iterate and scores it against the
/// unscaled problem. Returns `None` while `τ` is too small to divide by.
fn extract_candidate<T: Real>(
    problem: &ConicProblem<T>,
    scaling: &Scaling<T>,
    u: &[T],
    v: &[T],
) -> Option<Candidate<T>> {
    let n = problem.n;
    let m = problem.rows();
    let nn = n + m + 1;
    let tau = u[nn - 1];
    let magnitude = u.iter().fold(T::zero(), |acc, &w| acc.max(w.abs()));
    if tau <= T::of(1e-12) * magnitude.max(T::one()) {
        return None;
    }

    let x: Vec<T> = (0..n).map(|j| scaling.e[j] * u[j] / tau).collect();
    let y: Vec<T> = (0..m).map(|i| scaling.d[i] * u[n + i] / tau).collect();
    let s: Vec<T> = (0..m).map(|i| v[n + i] / (scaling.d[i] * tau)).collect();
    Some(assemble_candidate(problem, x, y, s))
}

/// Scores a primal/dual/slack triple against the unscaled problem data.
fn assemble_candidate<T: Real>(
    problem: &ConicProblem<T>,
    x: Vec<T>,
    y: Vec<T>,
    s: Vec<T>,
) -> Candidate<T> {
    let n = problem.n;
    let m = problem.rows();
    let b_norm = linalg::norm2(&problem.b);
    let c_norm = linalg::norm2(&problem.c);

    let mut primal = T::zero();
    for i in 0..m {
        let ax = linalg::dot(&problem.a[i * n..(i + 1) * n], &x);
        let r = ax + s[i] - problem.b[i];
        primal += r * r;
    }
    let primal_residual = primal.sqrt() / (T::one() + b_norm);

    let mut dual = T::zero();
    for j in 0..n {
        let mut aty = T::zero();
        for i in 0..m {
            aty += problem.a[i * n + j] * y[i];
        }
        let r = aty + problem.c[j];
        dual += r * r;
    }
    let dual_residual = dual.sqrt() / (T::one() + c_norm);

    let objective = linalg::dot(&problem.c, &x);
    let dual_objective = linalg::dot(&problem.b, &y);
    let gap = (objective + dual_objective).abs() / (T::one() + objective.abs());

    Candidate {
        x,
        y,
        s,
        objective,
        primal_residual,
        dual_residual,
        gap,
    }
}

/// Richardson extrapolation of the candidate sequence: under the `O(1/k)`
/// tail model `x(k) = x* + e/k`, the combination
/// `x(k) + (x(k) − x(h))·h/(k−h)` cancels the leading error term. Slacks
/// and duals are projected back onto their cones afterwards so membership
/// stays exact, and the result is re-scored from scratch; the caller keeps
/// it only when it beats the plain candidate.
fn extrapolate_candidate<T: Real>(
    problem: &ConicProblem<T>,
    half: &(usize, Candidate<T>),
    current_iter: usize,
    current: &Candidate<T>,
) -> Option<Candidate<T>> {
    let (h_iter, h) = half;
    if *h_iter >= current_iter {
        return None;
    }
    let f = T::of(*h_iter as f64 / (current_iter - h_iter) as f64);
    let shoot = |now: &[T], then: &[T]| -> Vec<T> {
        now.iter()
            .zip(then)
            .map(|(&a, &b)| a + (a - b) * f)
            .collect()
    };
    let x = shoot(&current.x, &h.x);
    let mut y = shoot(&current.y, &h.y);
    let mut s = shoot(&current.s, &h.s);
    let mut offset = 0;
    for cone in &problem.cones {
        let rows = cone.rows();
        project_cone(&mut s[offset..offset + rows], cone, false).ok()?;
        project_cone(&mut y[offset..offset + rows], cone, true).ok()?;
        offset += rows;
    }
    if !x.iter().chain(&y).chain(&s).all(|w| w.is_finite()) {
        return None;
    }
    Some(assemble_candidate(problem, x, y, s))
}

/// Tests the stalled iterate for infeasibility/unboundedness certificates.
fn detect_certificates<T: Real>(
    problem: &ConicProblem<T>,
    scaling: &Scaling<T>,
    u: &[T],
    tolerance: T,
) -> Result<Option<SolveStatus>, ConicError> {
    let n = problem.n;
    let m = problem.rows();

    // Primal infeasibility: y ∈ K* with Aᵀy = 0 and bᵀy < 0.
    let y: Vec<T> = (0..m).map(|i| scaling.d[i] * u[n + i]).collect();
    let by = linalg::dot(&problem.b, &y);
    if by < T::zero() {
        let mut aty = T::zero();
        for j in 0..n {
            let mut acc = T::zero();
            for i in 0..m {
                acc += problem.a[i * n + j] * y[i];
            }
            aty += acc * acc;
        }
        let b_norm = linalg::norm2(&problem.b).max(T::one());
        if aty.sqrt() * b_norm <= -tolerance * by {
            return Ok(Some(SolveStatus::InfeasibleDetected));
        }
    }

    // Unboundedness: x with cᵀx < 0 and A·x + s = 0 for some s ∈ K.
    let x: Vec<T> = (0..n).map(|j| scaling.e[j] * u[j]).collect();
    let cx = linalg::dot(&problem.c, &x);
    if cx < T::zero() {
        let mut s: Vec<T> = (0..m)
            .map(|i| -linalg::dot(&problem.a[i * n..(i + 1) * n], &x))
            .collect();
        let mut offset = 0;
        for cone in &problem.cones {
            let rows = cone.rows();
            project_cone(&mut s[offset..offset + rows], cone, false)?;
            offset += rows;
        }
        let mut res = T::zero();
        for i in 0..m {
            let ax = linalg::dot(&problem.a[i * n..(i + 1) * n], &x);
            let r = ax + s[i];
            res += r * r;
        }
        let c_norm = linalg::norm2(&problem.c).max(T::one());
        if res.sqrt() * c_norm <= -tolerance * cx {
            return Ok(Some(SolveStatus::UnboundedDetected));
        }
    }

    Ok(None)
}

/// Placeholder solution for runs that never produced a usable candidate.
fn empty_solution<T: Real>(
    problem: &ConicProblem<T>,
    status: SolveStatus,
    iterations: usize,
) -> ConicSolution<T> {
    ConicSolution {
        status,
        x: vec![T::zero(); problem.n],
        y: vec![T::zero(); problem.rows()],
        objective: T::zero(),
        primal_residual: T::infinity(),
        dual_residual: T::infinity(),
        gap: T::infinity(),
        iterations,
        refined_objective: None,
    }
}

#[cfg(test)]
mod tests {
    use super::super::{LinExpr, ProblemBuilder};
    use super::*;
    use crate::linalg::SymMatrix;
    use rand::Rng;

    fn default_solve(problem: &ConicProblem<f64>) -> ConicSolution<f64> {
        solve(problem, SolverSettings::default()).unwrap()
    }

    /// minimize x subject to x ≥ 1: optimum x = 1.
    fn lp_problem() -> ConicProblem<f64> {
        let mut pb = ProblemBuilder::<f64>::new();
        let x = pb.var();
        pb.nonneg(LinExpr::var(x) - LinExpr::constant(1.0));
        pb.minimize(LinExpr::var(x));
        pb.build().0
    }

    #[test]
    fn linear_example_reaches_analytic_optimum() {
        let sol = default_solve(&lp_problem());
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-6);
        assert!((sol.objective - 1.0).abs() < 1e-6);
    }

    #[test]
    fn soc_example_recovers_norm() {
        // minimize t subject to (t, 3, 4) in the second-order cone: t = 5.
        let mut pb = ProblemBuilder::<f64>::new();
        let t = pb.var();
        pb.soc(vec![
            LinExpr::var(t),
            LinExpr::constant(3.0),
            LinExpr::constant(4.0),
        ]);
        pb.minimize(LinExpr::var(t));
        let (p, _) = pb.build();
        let sol = default_solve(&p);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective - 5.0).abs() < 1e-6);
    }

    #[test]
    fn sdp_example_pins_trace() {
        // minimize Tr X over X ⪰ 0 with X₁₁ = 1: any feasible X has
        // Tr X ≥ X₁₁ = 1, attained by diag(1, 0).
        let mut pb = ProblemBuilder::<f64>::new();
        let x = pb.sym(2);
        pb.psd(vec![
            vec![x.expr(0, 0), x.expr(0, 1)],
            vec![x.expr(1, 0), x.expr(1, 1)],
        ]);
        pb.zero(x.expr::<f64>(0, 0) - LinExpr::constant(1.0));
        pb.minimize(x.trace());
        let (p, _) = pb.build();
        let sol = default_solve(&p);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-6);
    }

    #[test]
    fn solutions_are_deterministic() {
        let p = lp_problem();
        let a = default_solve(&p);
        let b = default_solve(&p);
        assert_eq!(a.x, b.x);
        assert_eq!(a.iterations, b.iterations);
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }

    #[test]
    fn objective_scaling_leaves_argmin_unchanged() {
        let p = lp_problem();
        let mut scaled = p.clone();
        for c in &mut scaled.c {
            *c *= 2.5;
        }
        let a = default_solve(&p);
        let b = default_solve(&scaled);
        assert!((a.x[0] - b.x[0]).abs() < 1e-6);
    }

    #[test]
    fn detects_primal_infeasibility() {
        // x ≥ 1 and −x ≥ 0 cannot hold together.
        let mut pb = ProblemBuilder::<f64>::new();
        let x = pb.var();
        pb.nonneg(LinExpr::var(x) - LinExpr::constant(1.0));
        pb.nonneg(-LinExpr::var(x));
        pb.minimize(LinExpr::var(x));
        let (p, _) = pb.build();
        let sol = default_solve(&p);
        assert_eq!(sol.status, SolveStatus::InfeasibleDetected);
    }

    #[test]
    fn detects_unboundedness() {
        // minimize x subject to x ≤ 1 has no lower bound.
        let mut pb = ProblemBuilder::<f64>::new();
        let x = pb.var();
        pb.nonneg(LinExpr::constant(1.0) - LinExpr::var(x));
        pb.minimize(LinExpr::var(x));
        let (p, _) = pb.build();
        let sol = default_solve(&p);
        assert_eq!(sol.status, SolveStatus::UnboundedDetected);
    }

    /// Generates a random problem that is feasible and bounded by
    /// construction: b = A·x₀ + s₀ with s₀ ∈ K, and c = −Aᵀ·y₀ with y₀ ∈ K*.
    fn random_feasible_problem(seed: u64) -> ConicProblem<f64> {
        let mut rng = crate::seeded_rng(seed);
        let n = rng.random_range(2..=5);
        let cones = vec![
            Cone::Zero(1),
            Cone::Nonneg(rng.random_range(1..=3)),
            Cone::SecondOrder(rng.random_range(2..=4)),
            Cone::Psd(rng.random_range(1..=3)),
        ];
        let m: usize = cones.iter().map(|c| c.rows()).sum();
        let a: Vec<f64> = (0..m * n).map(|_| rng.random_range(-1.0..1.0)).collect();

        // Random feasible slack, block by block.
        let mut s0 = Vec::with_capacity(m);
        for cone in &cones {
            match cone {
                Cone::Zero(k) => s0.extend(std::iter::repeat(0.0).take(*k)),
                Cone::Nonneg(k) => {
                    s0.extend((0..*k).map(|_| rng.random_range(0.0..1.0)));
                }
                Cone::SecondOrder(k) => {
                    let body: Vec<f64> =
                        (0..k - 1).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let slack: f64 = rng.random_range(0.1..1.0);
                    s0.push(linalg::norm2(&body) + slack);
                    s0.extend(body);
                }
                Cone::Psd(side) => {
                    let g: Vec<Vec<f64>> = (0..*side)
                        .map(|_| (0..*side).map(|_| rng.random_range(-1.0..1.0)).collect())
                        .collect();
                    let psd = SymMatrix::from_fn(*side, |i, j| {
                        (0..*side).map(|k| g[k][i] * g[k][j]).sum::<f64>()
                    });
                    s0.extend(svec(&psd));
                }
            }
        }

        // Random dual point, block by block (same cones: all self-dual here
        // except Zero, whose dual is free).
        let mut y0 = Vec::with_capacity(m);
        for cone in &cones {
            match cone {
                Cone::Zero(k) => y0.extend((0..*k).map(|_| rng.random_range(-1.0..1.0))),
                Cone::Nonneg(k) => y0.extend((0..*k).map(|_| rng.random_range(0.0..1.0))),
                Cone::SecondOrder(k) => {
                    let body: Vec<f64> =
                        (0..k - 1).map(|_| rng.random_range(-1.0..1.0)).collect();
                    y0.push(linalg::norm2(&body) + rng.random_range(0.0..1.0));
                    y0.extend(body);
                }
                Cone::Psd(side) => {
                    let g: Vec<Vec<f64>> = (0..*side)
                        .map(|_| (0..*side).map(|_| rng.random_range(-1.0..1.0)).collect())
                        .collect();
                    let psd = SymMatrix::from_fn(*side, |i, j| {
                        (0..*side).map(|k| g[k][i] * g[k][j]).sum::<f64>()
                    });
                    y0.extend(svec(&psd));
                }
            }
        }

        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut b = vec![0.0; m];
        for i in 0..m {
            b[i] = linalg::dot(&a[i * n..(i + 1) * n], &x0) + s0[i];
        }
        let mut c = vec![0.0; n];
        for j in 0..n {
            let mut acc = 0.0;
            for i in 0..m {
                acc += a[i * n + j] * y0[i];
            }
            c[j] = -acc;
        }
        ConicProblem { n, c, a, b, cones }
    }

    #[test]
    fn random_feasible_problems_satisfy_duality_and_cone_feasibility() {
        for seed in 0..50 {
            let p = random_feasible_problem(seed);
            let sol = solve(&p, SolverSettings::default()).unwrap();
            assert_eq!(
                sol.status,
                SolveStatus::Optimal,
                "seed {seed} failed to converge: pr={} dr={} gap={}",
                sol.primal_residual,
                sol.dual_residual,
                sol.gap
            );
            // Weak duality under the sign convention cᵀx + bᵀy → 0.
            let by = linalg::dot(&p.b, &sol.y);
            assert!(
                (sol.objective + by).abs() <= 1e-5 * (1.0 + sol.objective.abs()),
                "seed {seed}: duality gap too large"
            );
            // Slack must lie in K up to tolerance.
            let violation = p.slack_violation(&sol.x).unwrap();
            assert!(
                violation <= 1e-5,
                "seed {seed}: cone violation {violation}"
            );
        }
    }
}
