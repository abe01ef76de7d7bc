//! Affine-expression layer for assembling cone programs.
//!
//! The semidefinite programs downstream are easiest to state (and audit
//! against their source formulas) as matrices of affine expressions in named
//! variables. [`ProblemBuilder`] provides exactly that: allocate scalars,
//! vectors, or symmetric blocks; combine them into [`LinExpr`] values with
//! ordinary `+`, `-`, `*` syntax; and declare each expression's cone
//! membership. `build` then lowers everything into the dense standard form,
//! handling the `b − A·x` sign flip and the `√2` svec packing so no caller
//! ever writes a raw constraint row.
//!
//! Builder misuse (mismatched dimensions, unset objective) is a programming
//! error in the calling module, not a data error, so it panics rather than
//! returning `Result`.

use std::ops::{Add, Mul, Neg, Sub};

use crate::Real;

use super::{svec_len, Cone, ConicProblem};

/// Opaque handle to one scalar decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

impl VarId {
    /// Position of this variable in the solved `x` vector.
    pub fn index(self) -> usize {
        self.0
    }
}

/// Affine expression `constant + Σ coeffᵢ·varᵢ`.
///
/// Repeated variables are allowed and are accumulated when the expression is
/// lowered into a constraint row.
#[derive(Debug, Clone)]
pub struct LinExpr<T> {
    constant: T,
    terms: Vec<(usize, T)>,
}

impl<T: Real> LinExpr<T> {
    /// The zero expression.
    pub fn zero() -> Self {
        Self {
            constant: T::zero(),
            terms: Vec::new(),
        }
    }

    /// A constant expression.
    pub fn constant(v: T) -> Self {
        Self {
            constant: v,
            terms: Vec::new(),
        }
    }

    /// A bare variable.
    pub fn var(v: VarId) -> Self {
        Self {
            constant: T::zero(),
            terms: vec![(v.0, T::one())],
        }
    }

    /// `coeff·var`, the workhorse for matrix assembly.
    pub fn scaled(coeff: T, v: VarId) -> Self {
        Self {
            constant: T::zero(),
            terms: vec![(v.0, coeff)],
        }
    }

    /// Inner product `Σ coeffᵢ·varᵢ` of parallel slices.
    pub fn dot(coeffs: &[T], vars: &[VarId]) -> Self {
        debug_assert_eq!(coeffs.len(), vars.len());
        Self {
            constant: T::zero(),
            terms: coeffs.iter().zip(vars).map(|(&c, v)| (v.0, c)).collect(),
        }
    }

    /// Sum of expressions.
    pub fn sum(exprs: impl IntoIterator<Item = LinExpr<T>>) -> Self {
        exprs.into_iter().fold(Self::zero(), |acc, e| acc + e)
    }
}

impl<T: Real> From<VarId> for LinExpr<T> {
    fn from(v: VarId) -> Self {
        LinExpr::var(v)
    }
}

impl<T: Real> Add for LinExpr<T> {
    type Output = LinExpr<T>;
    fn add(mut self, rhs: LinExpr<T>) -> LinExpr<T> {
        self.constant += rhs.constant;
        self.terms.extend(rhs.terms);
        self
    }
}

impl<T: Real> Sub for LinExpr<T> {
    type Output = LinExpr<T>;
    fn sub(self, rhs: LinExpr<T>) -> LinExpr<T> {
        self + (-rhs)
    }
}

impl<T: Real> Neg for LinExpr<T> {
    type Output = LinExpr<T>;
    fn neg(mut self) -> LinExpr<T> {
        self.constant = -self.constant;
        for t in &mut self.terms {
            t.1 = -t.1;
        }
        self
    }
}

impl<T: Real> Mul<T> for LinExpr<T> {
    type Output = LinExpr<T>;
    fn mul(mut self, s: T) -> LinExpr<T> {
        self.constant = self.constant * s;
        for t in &mut self.terms {
            t.1 = t.1 * s;
        }
        self
    }
}

/// Handle to a symmetric block of variables: `side·(side+1)/2` independent
/// scalars addressed by unordered index pairs.
#[derive(Debug, Clone, Copy)]
pub struct SymVars {
    base: usize,
    side: usize,
}

impl SymVars {
    /// Side length of the block.
    pub fn side(&self) -> usize {
        self.side
    }

    /// Variable holding entry `(i, j)`; order of the indices is irrelevant.
    pub fn id(&self, i: usize, j: usize) -> VarId {
        assert!(i < self.side && j < self.side, "sym index out of range");
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        // Upper-triangle row-major offset of (r, c).
        let offset = r * self.side - r * (r + 1) / 2 + c;
        VarId(self.base + offset)
    }

    /// Entry `(i, j)` as an expression.
    pub fn expr<T: Real>(&self, i: usize, j: usize) -> LinExpr<T> {
        LinExpr::var(self.id(i, j))
    }

    /// Trace of the block as an expression.
    pub fn trace<T: Real>(&self) -> LinExpr<T> {
        LinExpr::sum((0..self.side).map(|i| self.expr(i, i)))
    }
}

/// Incremental cone-program assembler; see the module docs for the idiom.
#[derive(Debug)]
pub struct ProblemBuilder<T> {
    n: usize,
    objective: Option<LinExpr<T>>,
    groups: Vec<(Cone, Vec<LinExpr<T>>)>,
}

impl<T: Real> ProblemBuilder<T> {
    /// Empty program.
    pub fn new() -> Self {
        Self {
            n: 0,
            objective: None,
            groups: Vec::new(),
        }
    }

    /// Allocates one scalar variable.
    pub fn var(&mut self) -> VarId {
        let id = VarId(self.n);
        self.n += 1;
        id
    }

    /// Allocates a vector of scalar variables.
    pub fn vars(&mut self, count: usize) -> Vec<VarId> {
        (0..count).map(|_| self.var()).collect()
    }

    /// Allocates a symmetric matrix block of the given side length.
    pub fn sym(&mut self, side: usize) -> SymVars {
        let block = SymVars { base: self.n, side };
        self.n += svec_len(side);
        block
    }

    /// Declares `expr = 0`.
    pub fn zero(&mut self, expr: LinExpr<T>) {
        self.groups.push((Cone::Zero(1), vec![expr]));
    }

    /// Declares `expr ≥ 0`.
    pub fn nonneg(&mut self, expr: LinExpr<T>) {
        self.groups.push((Cone::Nonneg(1), vec![expr]));
    }

    /// Declares `‖(e₁..e_k)‖₂ ≤ e₀` for the expression list `(e₀, e₁..e_k)`.
    pub fn soc(&mut self, exprs: Vec<LinExpr<T>>) {
        assert!(exprs.len() >= 2, "second-order cone needs a bound and body");
        self.groups.push((Cone::SecondOrder(exprs.len()), exprs));
    }

    /// Declares that the symmetric matrix of expressions is PSD.
    ///
    /// Only the upper triangle of `entries` is read; callers are expected to
    /// pass a symmetric matrix of expressions.
    pub fn psd(&mut self, entries: Vec<Vec<LinExpr<T>>>) {
        let side = entries.len();
        assert!(side >= 1, "PSD block must be nonempty");
        for row in &entries {
            assert_eq!(row.len(), side, "PSD block must be square");
        }
        let root2 = T::of(std::f64::consts::SQRT_2);
        let mut rows = Vec::with_capacity(svec_len(side));
        for (i, row) in entries.into_iter().enumerate() {
            for (j, e) in row.into_iter().enumerate() {
                if j < i {
                    continue;
                }
                rows.push(if i == j { e } else { e * root2 });
            }
        }
        self.groups.push((Cone::Psd(side), rows));
    }

    /// Sets the expression to minimize. A constant part is allowed and is
    /// returned as the offset from [`ProblemBuilder::build`].
    pub fn minimize(&mut self, expr: LinExpr<T>) {
        self.objective = Some(expr);
    }

    /// Lowers the program to standard form.
    ///
    /// Returns the problem together with the constant objective offset, so
    /// the caller reports `solution.objective + offset`.
    pub fn build(self) -> (ConicProblem<T>, T) {
        let objective = self.objective.expect("objective must be set before build");
        let n = self.n;
        let m: usize = self.groups.iter().map(|(_, rows)| rows.len()).sum();

        let mut c = vec![T::zero(); n];
        for &(var, coeff) in &objective.terms {
            c[var] += coeff;
        }

        let mut a = vec![T::zero(); m * n];
        let mut b = vec![T::zero(); m];
        let mut cones = Vec::with_capacity(self.groups.len());
        let mut row = 0;
        for (cone, rows) in self.groups {
            debug_assert_eq!(cone.rows(), rows.len());
            cones.push(cone);
            for expr in rows {
                // expr ∈ cone is encoded as b − A·x = expr, i.e. the
                // constant lands in b and coefficients enter A negated.
                b[row] = expr.constant;
                for (var, coeff) in expr.terms {
                    a[row * n + var] -= coeff;
                }
                row += 1;
            }
        }

        (
            ConicProblem { n, c, a, b, cones },
            objective.constant,
        )
    }
}

impl<T: Real> Default for ProblemBuilder<T> {
    fn default() -> Self {
        Self::new()
    }
}
