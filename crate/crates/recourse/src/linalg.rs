//! Dense symmetric linear algebra kernels.
//!
//! Everything downstream (cone projections, Gelbrich distances, Mahalanobis
//! margins, determinant gradients) runs on small dense symmetric matrices,
//! rarely larger than a few tens of rows. This module therefore favors
//! robustness and determinism over speed: eigendecomposition is cyclic
//! Jacobi rotation (quadratically convergent, unconditionally stable on
//! symmetric input), determinants and inverses go through LU with partial
//! pivoting, and all tolerances are hybrids scaled by the Frobenius norm of
//! the operand so they stay meaningful across units.
//!
//! Matrices are stored fully populated in row-major order even though they
//! are symmetric; at these sizes the wasted half is cheaper than index
//! gymnastics in every kernel.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{ErrorClass, Real};

/// Hard cap on Jacobi sweeps. The method converges quadratically once the
/// off-diagonal mass is small; 100 sweeps is far beyond what any matrix of
/// the sizes used here requires, so hitting the cap signals broken input
/// (NaN/Inf) rather than a hard eigenproblem.
const JACOBI_MAX_SWEEPS: usize = 100;

/// Relative off-diagonal threshold declaring Jacobi convergence.
const JACOBI_OFF_TOL: f64 = 1e-12;

/// Relative asymmetry accepted (and silently symmetrized) on construction.
const SYMMETRY_TOL: f64 = 1e-10;

/// Relative eigenvalue floor below which a matrix is reported as not PSD.
const PSD_TOL: f64 = 1e-10;

/// Relative determinant magnitude under which inversion is refused.
const SINGULAR_TOL: f64 = 1e-12;

/// Errors from the dense kernels.
///
/// Payloads are widened to `f64` so the error type stays scalar-independent.
#[derive(Debug, Error)]
pub enum LinalgError {
    /// Construction got a matrix whose asymmetry exceeds the tolerated
    /// rounding budget, so symmetrizing it would silently change the data.
    #[error("matrix is materially asymmetric (relative deviation {deviation:.3e})")]
    Asymmetric {
        /// Largest `|a_ij − a_ji|` relative to the Frobenius norm.
        deviation: f64,
    },
    /// Row lengths disagree with the declared dimension.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch {
        /// Dimension implied by the call.
        expected: usize,
        /// Dimension actually supplied.
        got: usize,
    },
    /// A PSD-only operation received a matrix with a materially negative
    /// eigenvalue.
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPsd {
        /// Smallest eigenvalue found.
        min_eigenvalue: f64,
    },
    /// Cholesky factorization hit a non-positive pivot.
    #[error("matrix is not positive definite (pivot {pivot:.3e} at index {index})")]
    NotPd {
        /// Offending pivot value.
        pivot: f64,
        /// Row index of the pivot.
        index: usize,
    },
    /// Inversion or solve was refused because the determinant is negligible
    /// at the matrix scale.
    #[error("matrix is numerically singular (det {det:.3e})")]
    Singular {
        /// Determinant from the LU factorization.
        det: f64,
    },
    /// Jacobi iteration failed to drive the off-diagonal mass below the
    /// threshold within the sweep cap.
    #[error("eigendecomposition did not converge within {sweeps} sweeps (off-diagonal {off:.3e})")]
    NoConvergence {
        /// Sweeps performed.
        sweeps: usize,
        /// Remaining off-diagonal Frobenius mass.
        off: f64,
    },
}

impl LinalgError {
    /// Coarse classification used for exit-code mapping.
    pub fn class(&self) -> ErrorClass {
        match self {
            LinalgError::Asymmetric { .. } | LinalgError::DimensionMismatch { .. } => {
                ErrorClass::Input
            }
            _ => ErrorClass::Numerical,
        }
    }
}

/// Euclidean inner product.
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Euclidean norm.
pub fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Dense symmetric matrix, stored fully populated in row-major order.
///
/// Symmetry is an invariant, not a convention: constructors symmetrize
/// `(A + Aᵀ)/2` after checking that the asymmetry is mere rounding, and
/// every mutator writes both triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> SymMatrix<T> {
    /// Builds a matrix from a flat row-major slice of length `dim²`.
    ///
    /// Asymmetry up to `1e-10` relative to the Frobenius norm is absorbed by
    /// symmetrizing; anything larger is rejected as a data error.
    pub fn from_flat(dim: usize, data: &[T]) -> Result<Self, LinalgError> {
        if dim == 0 || data.len() != dim * dim {
            return Err(LinalgError::DimensionMismatch {
                expected: dim * dim,
                got: data.len(),
            });
        }
        let scale = {
            let fro = data.iter().map(|&v| v * v).sum::<T>().sqrt();
            fro.max(T::one())
        };
        let mut worst = T::zero();
        for i in 0..dim {
            for j in (i + 1)..dim {
                let dev = (data[i * dim + j] - data[j * dim + i]).abs();
                worst = worst.max(dev);
            }
        }
        if worst > T::of(SYMMETRY_TOL) * scale {
            return Err(LinalgError::Asymmetric {
                deviation: (worst / scale).as_f64(),
            });
        }
        let mut m = Self {
            dim,
            data: data.to_vec(),
        };
        let half = T::of(0.5);
        for i in 0..dim {
            for j in (i + 1)..dim {
                let avg = (m.data[i * dim + j] + m.data[j * dim + i]) * half;
                m.data[i * dim + j] = avg;
                m.data[j * dim + i] = avg;
            }
        }
        Ok(m)
    }

    /// Builds a matrix from nested rows.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, LinalgError> {
        let dim = rows.len();
        for row in rows {
            if row.len() != dim {
                return Err(LinalgError::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
        }
        let flat: Vec<T> = rows.iter().flatten().copied().collect();
        Self::from_flat(dim, &flat)
    }

    /// Builds a matrix by evaluating `f(i, j)`; only `j ≥ i` is queried and
    /// the result is symmetric by construction.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = vec![T::zero(); dim * dim];
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                data[i * dim + j] = v;
                data[j * dim + i] = v;
            }
        }
        Self { dim, data }
    }

    /// Identity matrix.
    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, |i, j| if i == j { T::one() } else { T::zero() })
    }

    /// Zero matrix.
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![T::zero(); dim * dim],
        }
    }

    /// Diagonal matrix from the given entries.
    pub fn diag(entries: &[T]) -> Self {
        let dim = entries.len();
        Self::from_fn(dim, |i, j| if i == j { entries[i] } else { T::zero() })
    }

    /// Scaled identity `s·I`.
    pub fn scaled_identity(dim: usize, s: T) -> Self {
        Self::from_fn(dim, |i, j| if i == j { s } else { T::zero() })
    }

    /// Side length.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Entry accessor.
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.dim + j]
    }

    /// Writes both `(i,j)` and `(j,i)`.
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.dim + j] = v;
        self.data[j * self.dim + i] = v;
    }

    /// Flat row-major view of the entries.
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Matrix-vector product `A·x`.
    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.dim);
        (0..self.dim)
            .map(|i| dot(&self.data[i * self.dim..(i + 1) * self.dim], x))
            .collect()
    }

    /// Quadratic form `xᵀA x`.
    pub fn quad_form(&self, x: &[T]) -> T {
        dot(x, &self.mul_vec(x))
    }

    /// Symmetrized product `A·B` (the raw product of two symmetric matrices
    /// need not be symmetric; callers that need `A·B·A`-style sandwiches use
    /// [`SymMatrix::sandwich`], which is exact).
    pub fn mul_sym_symmetrized(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut raw = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = T::zero();
                for k in 0..n {
                    acc += self.get(i, k) * other.get(k, j);
                }
                raw[i * n + j] = acc;
            }
        }
        let half = T::of(0.5);
        Self::from_fn(n, |i, j| (raw[i * n + j] + raw[j * n + i]) * half)
    }

    /// Sandwich product `B·A·B` for symmetric `A`, `B`; symmetric exactly.
    pub fn sandwich(&self, inner: &Self) -> Self {
        debug_assert_eq!(self.dim, inner.dim);
        let n = self.dim;
        // t = A·B (general), result = B·t symmetrized entry-wise to kill
        // rounding asymmetry.
        let mut t = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = T::zero();
                for k in 0..n {
                    acc += inner.get(i, k) * self.get(k, j);
                }
                t[i * n + j] = acc;
            }
        }
        let half = T::of(0.5);
        Self::from_fn(n, |i, j| {
            let mut ij = T::zero();
            let mut ji = T::zero();
            for k in 0..n {
                ij += self.get(i, k) * t[k * n + j];
                ji += self.get(j, k) * t[k * n + i];
            }
            (ij + ji) * half
        })
    }

    /// Entry-wise sum.
    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        }
    }

    /// Entry-wise difference.
    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a - b)
                .collect(),
        }
    }

    /// Scalar multiple.
    pub fn scale(&self, s: T) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&a| a * s).collect(),
        }
    }

    /// Trace.
    pub fn trace(&self) -> T {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Frobenius norm.
    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    /// Smallest eigenvalue; convenience wrapper over [`sym_eig`].
    pub fn min_eigenvalue(&self) -> Result<T, LinalgError> {
        let eig = sym_eig(self)?;
        Ok(*eig
            .values
            .last()
            .expect("eigendecomposition of a nonempty matrix yields values"))
    }
}

/// Eigendecomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct Eigen<T> {
    /// Eigenvalues in descending order.
    pub values: Vec<T>,
    /// `vectors[k]` is the unit eigenvector paired with `values[k]`.
    pub vectors: Vec<Vec<T>>,
}

impl<T: Real> Eigen<T> {
    /// Reassembles `V·diag(f(w))·Vᵀ`, the standard way to apply a spectral
    /// function such as clamping or square root.
    pub fn reassemble(&self, mut f: impl FnMut(T) -> T) -> SymMatrix<T> {
        let dim = self.vectors.first().map_or(0, Vec::len);
        let mapped: Vec<T> = self.values.iter().map(|&w| f(w)).collect();
        SymMatrix::from_fn(dim, |i, j| {
            let mut acc = T::zero();
            for (k, v) in self.vectors.iter().enumerate() {
                acc += mapped[k] * v[i] * v[j];
            }
            acc
        })
    }
}

/// Eigendecomposition by cyclic Jacobi rotation.
///
/// Small symmetric matrices only. Rotations zero one off-diagonal pair at a
/// time; a sweep visits all pairs, and the off-diagonal Frobenius mass
/// shrinks quadratically once it is below the diagonal scale. Convergence is
/// declared when that mass drops under `1e-12·max(1, ‖a‖_F)`.
///
/// # Errors
///
/// [`LinalgError::NoConvergence`] after 100 sweeps, which for these sizes
/// only happens on non-finite input.
pub fn sym_eig<T: Real>(a: &SymMatrix<T>) -> Result<Eigen<T>, LinalgError> {
    let n = a.dim;
    let scale = a.frobenius_norm().max(T::one());
    let tol = T::of(JACOBI_OFF_TOL) * scale;
    let mut m = a.clone();
    // v holds accumulated rotations; column k (v[i][k] over i) is the k-th
    // eigenvector.
    let mut v = SymMatrix::<T>::identity(n).data;

    let off_mass = |m: &SymMatrix<T>| -> T {
        let mut acc = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                let e = m.get(i, j);
                acc += e * e;
            }
        }
        (acc + acc).sqrt()
    };

    let mut sweeps = 0;
    while off_mass(&m) > tol {
        if sweeps >= JACOBI_MAX_SWEEPS {
            return Err(LinalgError::NoConvergence {
                sweeps,
                off: off_mass(&m).as_f64(),
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq.abs() <= tol * T::of(1e-3) {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                // Rotation angle from the standard two-sided Jacobi formula:
                // tan(2φ) = 2a_pq / (a_qq − a_pp), solved for t = tan φ with
                // the smaller-magnitude root for stability.
                let theta = (aqq - app) / (T::of(2.0) * apq);
                let t = {
                    let sign = if theta >= T::zero() {
                        T::one()
                    } else {
                        -T::one()
                    };
                    sign / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                let tau = s / (T::one() + c);

                m.data[p * n + p] = app - t * apq;
                m.data[q * n + q] = aqq + t * apq;
                m.data[p * n + q] = T::zero();
                m.data[q * n + p] = T::zero();
                for k in 0..n {
                    if k != p && k != q {
                        let akp = m.get(k, p);
                        let akq = m.get(k, q);
                        let new_kp = akp - s * (akq + tau * akp);
                        let new_kq = akq + s * (akp - tau * akq);
                        m.set(k, p, new_kp);
                        m.set(k, q, new_kq);
                    }
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = vkp - s * (vkq + tau * vkp);
                    v[k * n + q] = vkq + s * (vkp - tau * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m.get(j, j)
            .partial_cmp(&m.get(i, i))
            .expect("eigenvalues of a finite matrix are comparable")
    });
    let values: Vec<T> = order.iter().map(|&k| m.get(k, k)).collect();
    let vectors: Vec<Vec<T>> = order
        .iter()
        .map(|&k| (0..n).map(|i| v[i * n + k]).collect())
        .collect();
    Ok(Eigen { values, vectors })
}

/// Symmetric PSD square root `A^{1/2}`.
///
/// Eigenvalues within `−1e-10·max(1, ‖a‖_F)` of zero are treated as rounding
/// and clamped; anything more negative means the input is materially
/// indefinite and the call fails.
pub fn sqrtm_psd<T: Real>(a: &SymMatrix<T>) -> Result<SymMatrix<T>, LinalgError> {
    let eig = sym_eig(a)?;
    let scale = a.frobenius_norm().max(T::one());
    let floor = -T::of(PSD_TOL) * scale;
    if let Some(&min) = eig.values.last() {
        if min < floor {
            return Err(LinalgError::NotPsd {
                min_eigenvalue: min.as_f64(),
            });
        }
    }
    Ok(eig.reassemble(|w| w.max(T::zero()).sqrt()))
}

/// Frobenius-nearest PSD matrix: eigenvalues clamped at zero.
pub fn psd_project<T: Real>(a: &SymMatrix<T>) -> Result<SymMatrix<T>, LinalgError> {
    let eig = sym_eig(a)?;
    Ok(eig.reassemble(|w| w.max(T::zero())))
}

/// Cholesky factorization `A = L·Lᵀ`; returns the lower-triangular factor as
/// full rows (zeros above the diagonal).
///
/// # Errors
///
/// [`LinalgError::NotPd`] on a non-positive pivot.
pub fn cholesky<T: Real>(a: &SymMatrix<T>) -> Result<Vec<Vec<T>>, LinalgError> {
    let n = a.dim;
    let mut l = vec![vec![T::zero(); n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut acc = a.get(i, j);
            for k in 0..j {
                acc -= l[i][k] * l[j][k];
            }
            if i == j {
                if acc <= T::zero() {
                    return Err(LinalgError::NotPd {
                        pivot: acc.as_f64(),
                        index: i,
                    });
                }
                l[i][j] = acc.sqrt();
            } else {
                l[i][j] = acc / l[j][j];
            }
        }
    }
    Ok(l)
}

/// LU factorization with partial pivoting of a general square matrix.
///
/// Factorization never fails: a zero pivot is recorded and simply makes the
/// determinant zero; only [`LuFactors::solve`] refuses to run on it.
#[derive(Debug, Clone)]
pub struct LuFactors<T> {
    n: usize,
    /// Combined L (unit lower, below diagonal) and U (on/above diagonal).
    lu: Vec<T>,
    /// Row permutation applied to the input.
    perm: Vec<usize>,
    /// Sign of the permutation, ±1.
    sign: T,
}

impl<T: Real> LuFactors<T> {
    /// Factors a row-major `n×n` matrix.
    pub fn factor(n: usize, data: &[T]) -> Result<Self, LinalgError> {
        if data.len() != n * n {
            return Err(LinalgError::DimensionMismatch {
                expected: n * n,
                got: data.len(),
            });
        }
        let mut lu = data.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = T::one();
        for col in 0..n {
            let mut pivot_row = col;
            let mut pivot_val = lu[col * n + col].abs();
            for r in (col + 1)..n {
                let v = lu[r * n + col].abs();
                if v > pivot_val {
                    pivot_val = v;
                    pivot_row = r;
                }
            }
            if pivot_row != col {
                for c in 0..n {
                    lu.swap(col * n + c, pivot_row * n + c);
                }
                perm.swap(col, pivot_row);
                sign = -sign;
            }
            let p = lu[col * n + col];
            if p == T::zero() {
                continue;
            }
            for r in (col + 1)..n {
                let factor = lu[r * n + col] / p;
                lu[r * n + col] = factor;
                for c in (col + 1)..n {
                    let u = lu[col * n + c];
                    lu[r * n + c] = lu[r * n + c] - factor * u;
                }
            }
        }
        Ok(Self { n, lu, perm, sign })
    }

    /// Determinant: permutation sign times the product of U's diagonal.
    pub fn det(&self) -> T {
        let mut d = self.sign;
        for i in 0..self.n {
            d = d * self.lu[i * self.n + i];
        }
        d
    }

    /// Solves `A·x = b` using the stored factors.
    ///
    /// # Errors
    ///
    /// [`LinalgError::Singular`] when any pivot magnitude is below
    /// `1e-12` times the factor scale.
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>, LinalgError> {
        let n = self.n;
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                got: b.len(),
            });
        }
        let scale = self
            .lu
            .iter()
            .map(|&v| v * v)
            .sum::<T>()
            .sqrt()
            .max(T::one());
        for i in 0..n {
            if self.lu[i * n + i].abs() <= T::of(SINGULAR_TOL) * scale {
                return Err(LinalgError::Singular {
                    det: self.det().as_f64(),
                });
            }
        }
        // Forward substitution on the permuted right-hand side.
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 1..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu[i * n + j] * x[j];
            }
            x[i] = acc;
        }
        // Back substitution.
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in (i + 1)..n {
                acc -= self.lu[i * n + j] * x[j];
            }
            x[i] = acc / self.lu[i * n + i];
        }
        Ok(x)
    }
}

/// Determinant via LU with partial pivoting; indefinite input is fine.
pub fn det<T: Real>(a: &SymMatrix<T>) -> Result<T, LinalgError> {
    Ok(LuFactors::factor(a.dim, &a.data)?.det())
}

/// Matrix inverse.
///
/// # Errors
///
/// [`LinalgError::Singular`] when `|det|` is below `1e-12` scaled by
/// `max(1, ‖a‖_F)ᵈ`, the natural unit of a `d`-dimensional determinant.
pub fn inverse<T: Real>(a: &SymMatrix<T>) -> Result<SymMatrix<T>, LinalgError> {
    let n = a.dim;
    let lu = LuFactors::factor(n, &a.data)?;
    let scale = a.frobenius_norm().max(T::one()).powi(n as i32);
    if lu.det().abs() <= T::of(SINGULAR_TOL) * scale {
        return Err(LinalgError::Singular {
            det: lu.det().as_f64(),
        });
    }
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = vec![T::zero(); n];
        e[j] = T::one();
        cols.push(lu.solve(&e)?);
    }
    // Inverse of a symmetric matrix is symmetric; averaging the two
    // triangles removes the rounding skew from column-wise solves.
    let half = T::of(0.5);
    Ok(SymMatrix::from_fn(n, |i, j| {
        (cols[j][i] + cols[i][j]) * half
    }))
}

/// Solves `A·x = b` for symmetric `A` via LU.
pub fn solve<T: Real>(a: &SymMatrix<T>, b: &[T]) -> Result<Vec<T>, LinalgError> {
    LuFactors::factor(a.dim, &a.data)?.solve(b)
}

// Serde form: {dim, data(flat row-major)} with symmetry revalidated on the
// way in, so a hand-edited JSON file cannot smuggle in an asymmetric matrix.
#[derive(Serialize, Deserialize)]
struct SymMatrixRepr<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Real + Serialize> Serialize for SymMatrix<T> {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        SymMatrixRepr {
            dim: self.dim,
            data: self.data.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de, T: Real + Deserialize<'de>> Deserialize<'de> for SymMatrix<T> {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = SymMatrixRepr::<T>::deserialize(deserializer)?;
        SymMatrix::from_flat(repr.dim, &repr.data).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn reconstruction_error(a: &SymMatrix<f64>, eig: &Eigen<f64>) -> f64 {
        let rebuilt = eig.reassemble(|w| w);
        rebuilt.sub(a).frobenius_norm()
    }

    #[test]
    fn identity_eigenvalues_are_ones() {
        let a = SymMatrix::<f64>::identity(3);
        let eig = sym_eig(&a).unwrap();
        for w in eig.values {
            assert_relative_eq!(w, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn diagonal_eigenpairs_are_axis_aligned() {
        let a = SymMatrix::<f64>::diag(&[4.0, 1.0]);
        let eig = sym_eig(&a).unwrap();
        assert_relative_eq!(eig.values[0], 4.0, epsilon = 1e-12);
        assert_relative_eq!(eig.values[1], 1.0, epsilon = 1e-12);
        assert!(eig.vectors[0][0].abs() > 1.0 - 1e-10);
        assert!(eig.vectors[1][1].abs() > 1.0 - 1e-10);
    }

    #[test]
    fn two_by_two_eigenvalues_match_characteristic_roots() {
        // det([[2−w,1],[1,2−w]]) = 0 gives w = 3 and w = 1.
        let a = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let eig = sym_eig(&a).unwrap();
        assert_relative_eq!(eig.values[0], 3.0, epsilon = 1e-10);
        assert_relative_eq!(eig.values[1], 1.0, epsilon = 1e-10);
        assert!(reconstruction_error(&a, &eig) < 1e-10);
    }

    #[test]
    fn eigenvectors_are_orthonormal() {
        let a = SymMatrix::from_rows(&[
            vec![2.0, -1.0, 0.3],
            vec![-1.0, 1.5, 0.7],
            vec![0.3, 0.7, -0.4],
        ])
        .unwrap();
        let eig = sym_eig(&a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(
                    dot(&eig.vectors[i], &eig.vectors[j]),
                    expected,
                    epsilon = 1e-10
                );
            }
        }
    }

    #[test]
    fn sqrtm_of_identity_is_identity() {
        let a = SymMatrix::<f64>::identity(4);
        let r = sqrtm_psd(&a).unwrap();
        assert!(r.sub(&a).frobenius_norm() < 1e-12);
    }

    #[test]
    fn sqrtm_of_diagonal_takes_elementwise_roots() {
        let a = SymMatrix::<f64>::diag(&[4.0, 9.0]);
        let r = sqrtm_psd(&a).unwrap();
        let expected = SymMatrix::<f64>::diag(&[2.0, 3.0]);
        assert!(r.sub(&expected).frobenius_norm() < 1e-12);
    }

    #[test]
    fn sqrtm_squares_back_to_input() {
        let a = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let r = sqrtm_psd(&a).unwrap();
        let squared = r.mul_sym_symmetrized(&r);
        assert!(squared.sub(&a).frobenius_norm() <= 1e-9 * a.frobenius_norm());
    }

    #[test]
    fn sqrtm_rejects_indefinite_input() {
        let a = SymMatrix::<f64>::diag(&[1.0, -0.5]);
        assert!(matches!(sqrtm_psd(&a), Err(LinalgError::NotPsd { .. })));
    }

    #[test]
    fn psd_project_clamps_negative_eigenvalues() {
        let a = SymMatrix::<f64>::diag(&[1.0, -1.0]);
        let p = psd_project(&a).unwrap();
        let expected = SymMatrix::<f64>::diag(&[1.0, 0.0]);
        assert!(p.sub(&expected).frobenius_norm() < 1e-12);
    }

    #[test]
    fn psd_project_of_exchange_matrix_averages() {
        // [[0,1],[1,0]] has eigenvalues ±1; clamping the −1 leaves
        // 1·vvᵀ with v = (1,1)/√2, i.e. all entries 0.5.
        let a = SymMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let p = psd_project(&a).unwrap();
        let expected = SymMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert!(p.sub(&expected).frobenius_norm() < 1e-12);
    }

    #[test]
    fn psd_project_keeps_psd_input_unchanged() {
        let a = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let p = psd_project(&a).unwrap();
        assert!(p.sub(&a).frobenius_norm() < 1e-10);
    }

    #[test]
    fn det_of_identity_is_one() {
        assert_relative_eq!(det(&SymMatrix::<f64>::identity(3)).unwrap(), 1.0);
    }

    #[test]
    fn det_of_diagonal_is_product() {
        assert_relative_eq!(det(&SymMatrix::<f64>::diag(&[2.0, 3.0])).unwrap(), 6.0);
    }

    #[test]
    fn inverse_of_diagonal_inverts_entries() {
        let a = SymMatrix::<f64>::diag(&[2.0, 4.0]);
        let inv = inverse(&a).unwrap();
        let expected = SymMatrix::<f64>::diag(&[0.5, 0.25]);
        assert!(inv.sub(&expected).frobenius_norm() < 1e-12);
    }

    #[test]
    fn inverse_refuses_singular_matrix() {
        let a = SymMatrix::<f64>::diag(&[1.0, 0.0]);
        assert!(matches!(inverse(&a), Err(LinalgError::Singular { .. })));
    }

    #[test]
    fn solve_recovers_known_solution() {
        let a = SymMatrix::from_rows(&[vec![4.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let x_true = vec![1.0, -2.0];
        let b = a.mul_vec(&x_true);
        let x = solve(&a, &b).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(x[1], -2.0, epsilon = 1e-12);
    }

    #[test]
    fn cholesky_factors_pd_matrix() {
        let a = SymMatrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap();
        let l = cholesky(&a).unwrap();
        // L·Lᵀ must reproduce a.
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = 0.0;
                for k in 0..2 {
                    acc += l[i][k] * l[j][k];
                }
                assert_relative_eq!(acc, a.get(i, j), epsilon = 1e-12);
            }
        }
        assert!(matches!(
            cholesky(&SymMatrix::<f64>::diag(&[1.0, -1.0])),
            Err(LinalgError::NotPd { .. })
        ));
    }

    #[test]
    fn construction_rejects_material_asymmetry() {
        let r = SymMatrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]);
        assert!(matches!(r, Err(LinalgError::Asymmetric { .. })));
    }

    #[test]
    fn construction_symmetrizes_rounding_noise() {
        let a = SymMatrix::from_rows(&[vec![1.0, 0.5 + 1e-13], vec![0.5, 1.0]]).unwrap();
        assert_eq!(a.get(0, 1), a.get(1, 0));
    }

    #[test]
    fn works_in_single_precision() {
        let a = SymMatrix::<f32>::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let eig = sym_eig(&a).unwrap();
        assert!((eig.values[0] - 3.0).abs() < 1e-5);
        assert!((eig.values[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn serde_round_trip_preserves_entries() {
        let a = SymMatrix::from_rows(&[vec![2.0, 1.5], vec![1.5, 3.0]]).unwrap();
        let json = serde_json::to_string(&a).unwrap();
        let back: SymMatrix<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn serde_rejects_asymmetric_payload() {
        let json = r#"{"dim":2,"data":[1.0,0.9,0.0,1.0]}"#;
        let r: Result<SymMatrix<f64>, _> = serde_json::from_str(json);
        assert!(r.is_err());
    }

    proptest! {
        #[test]
        fn prop_eigen_reconstructs(dim in 1usize..=8, seed in 0u64..2000) {
            let mut rng = crate::seeded_rng(seed);
            let a = SymMatrix::<f64>::from_fn(dim, |_, _| {
                rand::Rng::random_range(&mut rng, -1.0..1.0)
            });
            let eig = sym_eig(&a).unwrap();
            prop_assert!(reconstruction_error(&a, &eig) <= 1e-9);
        }

        #[test]
        fn prop_sqrtm_squares_back(dim in 1usize..=6, seed in 0u64..2000) {
            let mut rng = crate::seeded_rng(seed);
            // a = BᵀB is PSD by construction.
            let b: Vec<Vec<f64>> = (0..dim)
                .map(|_| (0..dim).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect())
                .collect();
            let a = SymMatrix::from_fn(dim, |i, j| {
                (0..dim).map(|k| b[k][i] * b[k][j]).sum::<f64>()
            });
            let r = sqrtm_psd(&a).unwrap();
            let squared = r.mul_sym_symmetrized(&r);
            let denom = a.frobenius_norm().max(1.0);
            prop_assert!(squared.sub(&a).frobenius_norm() / denom <= 1e-8);
        }

        #[test]
        fn prop_psd_project_idempotent(dim in 1usize..=6, seed in 0u64..2000) {
            let mut rng = crate::seeded_rng(seed);
            let a = SymMatrix::<f64>::from_fn(dim, |_, _| {
                rand::Rng::random_range(&mut rng, -1.0..1.0)
            });
            let p1 = psd_project(&a).unwrap();
            let p2 = psd_project(&p1).unwrap();
            prop_assert!(p2.sub(&p1).frobenius_norm() <= 1e-9);
            let min = p1.min_eigenvalue().unwrap();
            prop_assert!(min >= -1e-10);
        }

        #[test]
        fn prop_det_equals_eigenvalue_product(dim in 1usize..=6, seed in 0u64..2000) {
            let mut rng = crate::seeded_rng(seed);
            let a = SymMatrix::<f64>::from_fn(dim, |_, _| {
                rand::Rng::random_range(&mut rng, -1.0..1.0)
            });
            let d = det(&a).unwrap();
            let prod: f64 = sym_eig(&a).unwrap().values.iter().product();
            let scale = a.frobenius_norm().max(1.0).powi(dim as i32);
            prop_assert!((d - prod).abs() <= 1e-8 * scale);
        }
    }
}
