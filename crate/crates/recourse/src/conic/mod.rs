//! Small dense cone programs in a single standard form.
//!
//! Every optimization problem in this crate, from the validity-bound
//! semidefinite programs to the per-point Mahalanobis subproblems and the
//! Chebyshev oracle, is expressed as
//!
//! ```text
//!     minimize    cᵀx
//!     subject to  b − A·x ∈ K
//! ```
//!
//! where `K` is a Cartesian product of zero, nonnegative, second-order, and
//! positive-semidefinite cones, in the declared row order. The matching dual
//! is `maximize −bᵀy` over `y ∈ K*` with `Aᵀy + c = 0`, so at optimality the
//! reported duality gap `cᵀx + bᵀy` vanishes.
//!
//! PSD slices are stored in scaled symmetric vectorization (`svec`): the
//! upper triangle read row by row, off-diagonal entries multiplied by `√2`.
//! Under this packing the Euclidean inner product of two packed vectors
//! equals the Frobenius inner product of the matrices, which is exactly what
//! makes the projection-based solver's dual iterates meaningful. Do not
//! change the packing without revisiting the solver.
//!
//! Problems here are tiny (tens to a few hundred rows), so everything is
//! dense and the solver ([`solve`]) is a projection splitting method rather
//! than an interior-point method.

mod builder;
mod solver;

pub use builder::{LinExpr, ProblemBuilder, SymVars, VarId};
pub use solver::solve;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, SymMatrix};
use crate::{ErrorClass, Real};

/// Errors from cone-program assembly and solving.
#[derive(Debug, Error)]
pub enum ConicError {
    /// The problem description is internally inconsistent (cone rows vs.
    /// offset length, non-finite entries, empty cones).
    #[error("malformed cone program: {0}")]
    Malformed(String),
    /// Iterates became non-finite; the problem data is likely pathological.
    #[error("numerical breakdown at iteration {iteration} (non-finite iterate)")]
    NumericalBreakdown {
        /// Iteration at which the first non-finite value appeared.
        iteration: usize,
    },
    /// The solver stopped without reaching the optimality tolerance; the
    /// residuals describe the best candidate it found.
    #[error(
        "solver stopped with status {status:?} after {iterations} iterations \
         (primal {primal_residual:.3e}, dual {dual_residual:.3e}, gap {gap:.3e})"
    )]
    Suboptimal {
        /// Terminal status (never `Optimal`).
        status: SolveStatus,
        /// Iterations consumed.
        iterations: usize,
        /// Relative primal residual of the best candidate.
        primal_residual: f64,
        /// Relative dual residual of the best candidate.
        dual_residual: f64,
        /// Relative duality gap of the best candidate.
        gap: f64,
    },
    /// A dense kernel failed inside the solver.
    #[error("linear algebra failure inside the conic solver: {0}")]
    Internal(#[from] linalg::LinalgError),
}

impl ConicError {
    /// Coarse classification used for exit-code mapping.
    pub fn class(&self) -> ErrorClass {
        match self {
            ConicError::Malformed(_) => ErrorClass::Input,
            _ => ErrorClass::Numerical,
        }
    }
}

/// One factor of the slack cone product `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "size", rename_all = "kebab-case")]
pub enum Cone {
    /// `{0}ⁿ`: equality rows. Dual: all of `ℝⁿ`.
    Zero(usize),
    /// `ℝ₊ⁿ`: inequality rows. Self-dual.
    Nonneg(usize),
    /// Second-order cone `{(t, z) : ‖z‖₂ ≤ t}`; the size is the full vector
    /// length including the leading bound coordinate. Self-dual.
    SecondOrder(usize),
    /// Positive-semidefinite cone of matrices with the given side length,
    /// packed in `√2`-scaled upper-triangle vectorization. Self-dual.
    Psd(usize),
}

impl Cone {
    /// Number of slack rows this cone occupies.
    pub fn rows(self) -> usize {
        match self {
            Cone::Zero(n) | Cone::Nonneg(n) | Cone::SecondOrder(n) => n,
            Cone::Psd(side) => svec_len(side),
        }
    }

    /// Validates the declared size.
    fn validate(self) -> Result<(), ConicError> {
        let ok = match self {
            Cone::Zero(n) | Cone::Nonneg(n) => n >= 1,
            // A 1-long second-order cone would just be ℝ₊; require the
            // caller to say what they mean.
            Cone::SecondOrder(n) => n >= 2,
            Cone::Psd(side) => side >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(ConicError::Malformed(format!(
                "cone {self:?} has an invalid size"
            )))
        }
    }
}

/// Packed length of the `svec` of a `side × side` symmetric matrix.
pub fn svec_len(side: usize) -> usize {
    side * (side + 1) / 2
}

/// Scaled symmetric vectorization: upper triangle row by row, off-diagonal
/// entries multiplied by `√2` so that `⟨svec A, svec B⟩ = ⟨A, B⟩_F`.
pub fn svec<T: Real>(m: &SymMatrix<T>) -> Vec<T> {
    let side = m.dim();
    let root2 = T::of(std::f64::consts::SQRT_2);
    let mut out = Vec::with_capacity(svec_len(side));
    for i in 0..side {
        for j in i..side {
            let v = m.get(i, j);
            out.push(if i == j { v } else { root2 * v });
        }
    }
    out
}

/// Inverse of [`svec`].
pub fn unsvec<T: Real>(side: usize, packed: &[T]) -> SymMatrix<T> {
    debug_assert_eq!(packed.len(), svec_len(side));
    let inv_root2 = T::one() / T::of(std::f64::consts::SQRT_2);
    let mut m = SymMatrix::zeros(side);
    let mut k = 0;
    for i in 0..side {
        for j in i..side {
            let v = packed[k];
            m.set(i, j, if i == j { v } else { v * inv_root2 });
            k += 1;
        }
    }
    m
}

/// A cone program in the crate's standard form.
#[derive(Debug, Clone)]
pub struct ConicProblem<T> {
    /// Number of decision variables.
    pub n: usize,
    /// Objective vector; the problem is `minimize cᵀx`.
    pub c: Vec<T>,
    /// Constraint matrix, `m × n` row-major dense.
    pub a: Vec<T>,
    /// Constraint offset; feasibility is `b − A·x ∈ K`.
    pub b: Vec<T>,
    /// Ordered cone factors partitioning the `m` slack rows.
    pub cones: Vec<Cone>,
}

impl<T: Real> ConicProblem<T> {
    /// Total slack rows.
    pub fn rows(&self) -> usize {
        self.b.len()
    }

    /// Checks the structural invariants: cone rows partition `b`, the dense
    /// matrix has matching shape, and all entries are finite.
    pub fn validate(&self) -> Result<(), ConicError> {
        let m: usize = self.cones.iter().map(|c| c.rows()).sum();
        for cone in &self.cones {
            cone.validate()?;
        }
        if m != self.b.len() {
            return Err(ConicError::Malformed(format!(
                "cones cover {m} rows but b has {}",
                self.b.len()
            )));
        }
        if self.c.len() != self.n {
            return Err(ConicError::Malformed(format!(
                "objective has {} entries for {} variables",
                self.c.len(),
                self.n
            )));
        }
        if self.a.len() != m * self.n {
            return Err(ConicError::Malformed(format!(
                "constraint matrix has {} entries, expected {}",
                self.a.len(),
                m * self.n
            )));
        }
        let finite = self.c.iter().chain(&self.a).chain(&self.b).all(|v| v.is_finite());
        if !finite {
            return Err(ConicError::Malformed(
                "problem data contains non-finite entries".to_string(),
            ));
        }
        Ok(())
    }

    /// Slack vector `b − A·x`.
    pub fn slack(&self, x: &[T]) -> Vec<T> {
        let n = self.n;
        self.b
            .iter()
            .enumerate()
            .map(|(i, &bi)| bi - linalg::dot(&self.a[i * n..(i + 1) * n], x))
            .collect()
    }

    /// Worst cone-membership violation of `b − A·x` across all cone factors
    /// (each factor measured by its own natural test; PSD by the most
    /// negative eigenvalue of the unpacked slice).
    pub fn slack_violation(&self, x: &[T]) -> Result<T, ConicError> {
        let s = self.slack(x);
        let mut worst = T::zero();
        let mut offset = 0;
        for cone in &self.cones {
            let rows = cone.rows();
            let block = &s[offset..offset + rows];
            let v = match cone {
                Cone::Zero(_) => block.iter().fold(T::zero(), |acc, &e| acc.max(e.abs())),
                Cone::Nonneg(_) => block.iter().fold(T::zero(), |acc, &e| acc.max(-e)),
                Cone::SecondOrder(_) => {
                    let z = linalg::norm2(&block[1..]);
                    (z - block[0]).max(T::zero())
                }
                Cone::Psd(side) => {
                    let m = unsvec(*side, block);
                    (-m.min_eigenvalue()?).max(T::zero())
                }
            };
            worst = worst.max(v);
            offset += rows;
        }
        Ok(worst)
    }

    /// Serializes the full problem data to a JSON document for offline
    /// reproduction of solver behavior. `A` is emitted as dense rows.
    pub fn to_debug_json(&self) -> String
    where
        T: Serialize,
    {
        #[derive(Serialize)]
        struct Dump<'a, T> {
            n: usize,
            c: &'a [T],
            a: Vec<&'a [T]>,
            b: &'a [T],
            cones: &'a [Cone],
        }
        let rows = self.rows();
        let dump = Dump {
            n: self.n,
            c: &self.c,
            a: (0..rows)
                .map(|i| &self.a[i * self.n..(i + 1) * self.n])
                .collect(),
            b: &self.b,
            cones: &self.cones,
        };
        serde_json::to_string_pretty(&dump).expect("cone program dump serializes")
    }
}

/// Solver verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    /// Residuals and duality gap met the tolerance.
    Optimal,
    /// A certificate of primal infeasibility emerged (best-effort).
    InfeasibleDetected,
    /// A certificate of dual infeasibility, i.e. unboundedness, emerged
    /// (best-effort).
    UnboundedDetected,
    /// The iteration cap was reached; the best candidate seen is returned.
    IterationCap,
}

/// Result of a [`solve`] call.
///
/// When `status` is [`SolveStatus::Optimal`], the residual norms are at most
/// the configured tolerance and `|cᵀx + bᵀy| ≤ tol·(1 + |cᵀx|)`.
#[derive(Debug, Clone)]
pub struct ConicSolution<T> {
    /// Outcome classification.
    pub status: SolveStatus,
    /// Primal point (best candidate if not optimal).
    pub x: Vec<T>,
    /// Dual point in `K*`.
    pub y: Vec<T>,
    /// Objective value `cᵀx`.
    pub objective: T,
    /// Relative primal residual `‖A·x + s − b‖ / (1 + ‖b‖)`.
    pub primal_residual: T,
    /// Relative dual residual `‖Aᵀ·y + c‖ / (1 + ‖c‖)`.
    pub dual_residual: T,
    /// Duality gap `|cᵀx + bᵀy| / (1 + |cᵀx|)`.
    pub gap: T,
    /// Iterations consumed.
    pub iterations: usize,
    /// Richardson-extrapolated estimate of the optimal value, present only
    /// on an iteration-cap exit whose candidate series followed the `O(1/k)`
    /// tail closely enough for two independent extrapolations to agree.
    ///
    /// Degenerate programs (typically a ball constraint with zero radius)
    /// have an optimal value their iterates approach only as `value + c/k`;
    /// the extrapolation cancels that term. Callers that need the value more
    /// than the point may prefer this estimate over `objective`; `x`, `y`,
    /// and the residuals always describe the returned point, never this
    /// estimate.
    pub refined_objective: Option<T>,
}

impl<T: Real> ConicSolution<T> {
    /// Returns `self` when the status is [`SolveStatus::Optimal`], otherwise
    /// converts the terminal state into a [`ConicError::Suboptimal`] so
    /// callers that need a certified optimum can bail with one `?`.
    pub fn ensure_optimal(self) -> Result<Self, ConicError> {
        if self.status == SolveStatus::Optimal {
            Ok(self)
        } else {
            Err(ConicError::Suboptimal {
                status: self.status,
                iterations: self.iterations,
                primal_residual: self.primal_residual.as_f64(),
                dual_residual: self.dual_residual.as_f64(),
                gap: self.gap.as_f64(),
            })
        }
    }
}

/// Settings for [`solve`].
#[derive(Debug, Clone, Copy)]
pub struct SolverSettings<T> {
    /// Residual and gap tolerance. Default `1e-7`.
    pub tolerance: T,
    /// Iteration cap. Default `100_000`.
    pub max_iterations: usize,
}

impl<T: Real> Default for SolverSettings<T> {
    fn default() -> Self {
        Self {
            tolerance: T::of(1e-7),
            max_iterations: 100_000,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svec_round_trips_and_preserves_inner_products() {
        let a = SymMatrix::from_rows(&[vec![2.0, -1.0], vec![-1.0, 3.0]]).unwrap();
        let b = SymMatrix::from_rows(&[vec![1.0, 0.5], vec![0.5, -2.0]]).unwrap();
        let sa = svec(&a);
        let sb = svec(&b);
        assert_eq!(sa.len(), 3);
        // Frobenius inner product: 2·1 + 2·(−1·0.5) + 3·(−2) = −5.
        let frob: f64 = (0..2)
            .flat_map(|i| (0..2).map(move |j| (i, j)))
            .map(|(i, j)| a.get(i, j) * b.get(i, j))
            .sum();
        assert!((linalg::dot(&sa, &sb) - frob).abs() < 1e-12);
        let back = unsvec(2, &sa);
        assert!(back.sub(&a).frobenius_norm() < 1e-12);
    }

    #[test]
    fn validate_catches_row_mismatch() {
        let p = ConicProblem {
            n: 1,
            c: vec![1.0],
            a: vec![-1.0],
            b: vec![-1.0, 0.0],
            cones: vec![Cone::Nonneg(1)],
        };
        assert!(matches!(p.validate(), Err(ConicError::Malformed(_))));
    }

    #[test]
    fn debug_dump_contains_all_fields() {
        let p = ConicProblem {
            n: 1,
            c: vec![1.0],
            a: vec![-1.0],
            b: vec![-1.0],
            cones: vec![Cone::Nonneg(1)],
        };
        let json = p.to_debug_json();
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed["n"], 1);
        assert_eq!(parsed["cones"][0]["kind"], "nonneg");
    }
}
