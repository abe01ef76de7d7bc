//! Moment-pair geometry under the Gelbrich distance.
//!
//! A classifier whose parameters are only known through an estimated mean and
//! covariance is modelled here as a [`MomentPair`]. Uncertainty about that
//! estimate is a ball of moment pairs, an [`AmbiguitySet`], measured in the
//! Gelbrich distance
//!
//! ```text
//! G((μ₁,Σ₁),(μ₂,Σ₂)) = √(‖μ₁−μ₂‖₂² + Tr(Σ₁ + Σ₂ − 2·(Σ₂^½ Σ₁ Σ₂^½)^½))
//! ```
//!
//! which coincides with the type-2 Wasserstein distance between Gaussians
//! with those moments. The module provides the closed form, an independent
//! semidefinite reformulation used to cross-check it, moment estimation from
//! a parameter ensemble, and a sampler that draws moment pairs inside a ball.

use std::fmt::Debug;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::conic::{solve, ConicError, LinExpr, ProblemBuilder, SolverSettings};
use crate::linalg::{psd_project, sqrtm_psd, LinalgError, SymMatrix};
use crate::{ErrorClass, Real};

/// Covariances must be PSD up to this tolerance, scaled by the matrix size;
/// matches the slack the eigensolver itself is allowed.
const PSD_TOL: f64 = 1e-10;

/// Strict positive-definiteness floor for the nominal covariance of an
/// ambiguity set. The bound reformulations place `Σ̂` (and `Σ̂^½`) inside
/// semidefinite blocks and the evaluation pipeline inverts it, so a nominal
/// covariance this close to singular is rejected up front rather than left
/// to fail obscurely inside a solver.
const PD_MIN_EIGENVALUE: f64 = 1e-10;

/// Consecutive rejected draws after which [`sample_in_ball`] gives up. The
/// sampler aims at a radius strictly inside the ball, so rejections are rare;
/// hitting the cap indicates a degenerate geometry, not bad luck.
const MAX_REJECTED_DRAWS: usize = 1000;

/// Step used to probe the growth rate of the distance along a random
/// perturbation direction before scaling it to the target radius.
const RATE_PROBE_STEP: f64 = 1e-3;

/// Fixed-point refinements of the perturbation scale. The distance is almost
/// linear in the scale near zero, so a few corrections land well inside the
/// rejection tolerance.
const SCALE_REFINEMENTS: usize = 3;

/// Errors from moment construction, estimation, and sampling.
#[derive(Debug, thiserror::Error)]
pub enum MomentsError {
    /// Two objects that must share a dimension do not.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch {
        /// Dimension implied by the first argument.
        expected: usize,
        /// Dimension actually supplied.
        got: usize,
    },
    /// A covariance matrix has an eigenvalue too far below zero.
    #[error("covariance is not PSD (min eigenvalue {min_eigenvalue:.3e})")]
    CovarianceNotPsd {
        /// Most negative eigenvalue found.
        min_eigenvalue: f64,
    },
    /// The nominal covariance of an ambiguity set is singular or nearly so.
    #[error(
        "nominal covariance must be strictly PD (min eigenvalue \
         {min_eigenvalue:.3e} ≤ {PD_MIN_EIGENVALUE:.0e})"
    )]
    CovarianceNotPd {
        /// Smallest eigenvalue found.
        min_eigenvalue: f64,
    },
    /// An ambiguity radius was negative or non-finite.
    #[error("ambiguity radius must be a finite value ≥ 0, got {value}")]
    InvalidRadius {
        /// Offending radius.
        value: f64,
    },
    /// [`sample_in_ball`] was asked to sample from a zero-radius ball.
    #[error("sampling requires a strictly positive radius")]
    ZeroRadiusSample,
    /// Moment estimation needs at least two parameter vectors.
    #[error("moment estimation needs ≥ 2 samples, got {got}")]
    TooFewSamples {
        /// Number of samples supplied.
        got: usize,
    },
    /// Every draw in a full rejection budget landed outside the ball.
    #[error("ball sampler rejected {attempts} consecutive draws")]
    SamplingFailed {
        /// Draws attempted before giving up.
        attempts: usize,
    },
    /// A dense linear-algebra kernel failed.
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    /// The conic solver failed while evaluating the SDP form of the distance.
    #[error(transparent)]
    Conic(#[from] ConicError),
}

impl MomentsError {
    /// Coarse classification for exit-code mapping.
    pub fn class(&self) -> ErrorClass {
        match self {
            MomentsError::DimensionMismatch { .. }
            | MomentsError::CovarianceNotPsd { .. }
            | MomentsError::CovarianceNotPd { .. }
            | MomentsError::InvalidRadius { .. }
            | MomentsError::ZeroRadiusSample
            | MomentsError::TooFewSamples { .. } => ErrorClass::Input,
            MomentsError::SamplingFailed { .. } => ErrorClass::Numerical,
            MomentsError::Linalg(e) => e.class(),
            MomentsError::Conic(e) => e.class(),
        }
    }
}

/// A mean vector paired with a PSD covariance matrix, the unit of parameter
/// uncertainty everywhere in this crate.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentPair<T> {
    mean: Vec<T>,
    covariance: SymMatrix<T>,
}

// Wire form: mean array, row-major covariance array, dimension; the full
// constructor runs on the way in so a hand-edited file cannot smuggle in a
// mismatched or indefinite covariance.
#[derive(Serialize, Deserialize)]
struct MomentPairRepr<T> {
    mean: Vec<T>,
    cov: Vec<T>,
    dim: usize,
}

impl<T: Real + Serialize> Serialize for MomentPair<T> {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        MomentPairRepr {
            mean: self.mean.clone(),
            cov: self.covariance.as_slice().to_vec(),
            dim: self.dim(),
        }
        .serialize(serializer)
    }
}

impl<'de, T: Real + Deserialize<'de>> Deserialize<'de> for MomentPair<T> {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = MomentPairRepr::<T>::deserialize(deserializer)?;
        if repr.mean.len() != repr.dim {
            return Err(serde::de::Error::custom(MomentsError::DimensionMismatch {
                expected: repr.dim,
                got: repr.mean.len(),
            }));
        }
        let covariance =
            SymMatrix::from_flat(repr.dim, &repr.cov).map_err(serde::de::Error::custom)?;
        MomentPair::new(repr.mean, covariance).map_err(serde::de::Error::custom)
    }
}

impl<T: Real> MomentPair<T> {
    /// Builds a pair, rejecting mismatched dimensions and covariances whose
    /// spectrum dips below `-1e-10` (scaled by the matrix norm).
    pub fn new(mean: Vec<T>, covariance: SymMatrix<T>) -> Result<Self, MomentsError> {
        if mean.len() != covariance.dim() {
            return Err(MomentsError::DimensionMismatch {
                expected: mean.len(),
                got: covariance.dim(),
            });
        }
        let min = covariance.min_eigenvalue()?;
        let floor = -T::of(PSD_TOL) * covariance.frobenius_norm().max(T::one());
        if min < floor {
            return Err(MomentsError::CovarianceNotPsd {
                min_eigenvalue: min.as_f64(),
            });
        }
        Ok(Self { mean, covariance })
    }

    /// Dimension `d` of the parameter space.
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Mean vector `μ`.
    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    /// Covariance matrix `Σ`.
    pub fn covariance(&self) -> &SymMatrix<T> {
        &self.covariance
    }
}

/// A Gelbrich ball: every moment pair within `radius` of `nominal`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguitySet<T> {
    nominal: MomentPair<T>,
    radius: T,
}

// Wire form; the constructor reruns on the way in, so radius and strict
// positive-definiteness are revalidated.
#[derive(Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
struct AmbiguitySetRepr<T> {
    nominal: MomentPair<T>,
    radius: T,
}

impl<T: Real + Serialize> Serialize for AmbiguitySet<T> {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        AmbiguitySetRepr {
            nominal: self.nominal.clone(),
            radius: self.radius,
        }
        .serialize(serializer)
    }
}

impl<'de, T: Real + Deserialize<'de>> Deserialize<'de> for AmbiguitySet<T> {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = AmbiguitySetRepr::<T>::deserialize(deserializer)?;
        AmbiguitySet::new(repr.nominal, repr.radius).map_err(serde::de::Error::custom)
    }
}

impl<T: Real> AmbiguitySet<T> {
    /// Builds a ball around `nominal`, requiring `radius ≥ 0` and a strictly
    /// PD nominal covariance. Positive-definiteness is what lets downstream
    /// consumers form `Σ̂^½` and `Σ̂^{-1}` without further checks.
    pub fn new(nominal: MomentPair<T>, radius: T) -> Result<Self, MomentsError> {
        if !radius.is_finite() || radius < T::zero() {
            return Err(MomentsError::InvalidRadius {
                value: radius.as_f64(),
            });
        }
        let min = nominal.covariance().min_eigenvalue()?;
        if min.as_f64() <= PD_MIN_EIGENVALUE {
            return Err(MomentsError::CovarianceNotPd {
                min_eigenvalue: min.as_f64(),
            });
        }
        Ok(Self { nominal, radius })
    }

    /// Center of the ball, the nominal moment estimate `(μ̂, Σ̂)`.
    pub fn nominal(&self) -> &MomentPair<T> {
        &self.nominal
    }

    /// Ball radius `ρ`.
    pub fn radius(&self) -> T {
        self.radius
    }

    /// Dimension of the underlying parameter space.
    pub fn dim(&self) -> usize {
        self.nominal.dim()
    }
}

/// Gelbrich distance between two moment pairs, by the closed form.
///
/// The trace argument is clamped at zero before the outer square root: for
/// nearly identical covariances rounding can push the analytic value a hair
/// below zero, and the distance is defined as the root of a nonnegative
/// quantity.
///
/// # Errors
///
/// Dimension mismatch, or an eigendecomposition failure on the inner matrix
/// square roots.
pub fn gelbrich_distance<T: Real>(
    p: &MomentPair<T>,
    q: &MomentPair<T>,
) -> Result<T, MomentsError> {
    if p.dim() != q.dim() {
        return Err(MomentsError::DimensionMismatch {
            expected: p.dim(),
            got: q.dim(),
        });
    }
    let mean_sq: T = p
        .mean
        .iter()
        .zip(&q.mean)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    let root_q = sqrtm_psd(q.covariance())?;
    // Σ₂^½ Σ₁ Σ₂^½ is PSD by construction; its root exists.
    let cross = sqrtm_psd(&root_q.sandwich(p.covariance()))?;
    let trace_term = p.covariance().trace() + q.covariance().trace()
        - T::of(2.0) * cross.trace();
    Ok((mean_sq + trace_term.max(T::zero())).sqrt())
}

/// Gelbrich distance via its semidefinite reformulation, used as an
/// independent cross-check of [`gelbrich_distance`].
///
/// The squared distance equals the minimum of
/// `‖μ₁−μ₂‖² + Tr(Σ₁ + Σ₂ − 2·C)` over matrices `C` making the block matrix
/// `[[Σ₁, C], [Cᵀ, Σ₂]]` PSD; `C` plays the role of the cross-covariance of
/// an optimal coupling.
///
/// # Errors
///
/// Dimension mismatch, or solver failure on the reformulated problem.
pub fn gelbrich_distance_sdp<T: Real>(
    p: &MomentPair<T>,
    q: &MomentPair<T>,
) -> Result<T, MomentsError> {
    if p.dim() != q.dim() {
        return Err(MomentsError::DimensionMismatch {
            expected: p.dim(),
            got: q.dim(),
        });
    }
    let d = p.dim();
    let mut pb = ProblemBuilder::<T>::new();
    let c_vars = pb.vars(d * d);

    // [[Σ₁, C], [Cᵀ, Σ₂]] ⪰ 0 with Σ₁, Σ₂ fixed data.
    let block = |i: usize, j: usize| -> LinExpr<T> {
        match (i < d, j < d) {
            (true, true) => LinExpr::constant(p.covariance().get(i, j)),
            (true, false) => LinExpr::var(c_vars[i * d + (j - d)]),
            (false, true) => LinExpr::var(c_vars[j * d + (i - d)]),
            (false, false) => LinExpr::constant(q.covariance().get(i - d, j - d)),
        }
    };
    let entries: Vec<Vec<LinExpr<T>>> = (0..2 * d)
        .map(|i| (0..2 * d).map(|j| block(i, j)).collect())
        .collect();
    pb.psd(entries);

    let mean_sq: T = p
        .mean
        .iter()
        .zip(&q.mean)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    let fixed = mean_sq + p.covariance().trace() + q.covariance().trace();
    let minus_two_trace_c = LinExpr::sum(
        (0..d).map(|i| LinExpr::scaled(-T::of(2.0), c_vars[i * d + i])),
    );
    pb.minimize(minus_two_trace_c + LinExpr::constant(fixed));

    let (problem, offset) = pb.build();
    let solution = solve(&problem, SolverSettings::default())?.ensure_optimal()?;
    Ok((solution.objective + offset).max(T::zero()).sqrt())
}

/// Empirical moments of a parameter ensemble: sample mean and the
/// population covariance `(1/N)·Σ (θᵢ−μ̄)(θᵢ−μ̄)ᵀ`, PSD-projected to absorb
/// rounding.
///
/// The divisor is `N`, not `N−1`: the ensemble is treated as the population
/// whose spread the ambiguity set must cover, so no small-sample inflation
/// is applied.
///
/// # Errors
///
/// Fewer than two samples, or samples of unequal dimension.
pub fn estimate_moments<T: Real>(samples: &[Vec<T>]) -> Result<MomentPair<T>, MomentsError> {
    if samples.len() < 2 {
        return Err(MomentsError::TooFewSamples { got: samples.len() });
    }
    let d = samples[0].len();
    for s in samples {
        if s.len() != d {
            return Err(MomentsError::DimensionMismatch {
                expected: d,
                got: s.len(),
            });
        }
    }
    let n = T::of(samples.len() as f64);
    let mut mean = vec![T::zero(); d];
    for s in samples {
        for (m, &v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let raw = SymMatrix::from_fn(d, |i, j| {
        let mut acc = T::zero();
        for s in samples {
            acc += (s[i] - mean[i]) * (s[j] - mean[j]);
        }
        acc / n
    });
    let covariance = psd_project(&raw)?;
    MomentPair::new(mean, covariance)
}

/// Draws a moment pair from (approximately) the uniform-radius law on the
/// ball: a random perturbation direction scaled so the Gelbrich distance
/// from the nominal pair hits a radius drawn uniformly in `[0, ρ)`, then a
/// membership check with resampling on violation.
///
/// The mean moves along a Gaussian step `g` and the covariance along
/// `(Σ̂^½ + t·B)·(Σ̂^½ + t·B)` for a random symmetric `B`, which keeps every
/// candidate covariance PSD by construction. The scale `t` is set by probing
/// the distance growth rate and refining with a few fixed-point corrections;
/// the law of the draw is a documented convention of this crate, not a
/// property inherited from any particular reference.
///
/// # Errors
///
/// Zero radius, or [`MAX_REJECTED_DRAWS`] consecutive draws landing outside
/// the ball.
pub fn sample_in_ball<T: Real, R: Rng>(
    set: &AmbiguitySet<T>,
    rng: &mut R,
) -> Result<MomentPair<T>, MomentsError> {
    let rho = set.radius().as_f64();
    if rho <= 0.0 {
        return Err(MomentsError::ZeroRadiusSample);
    }
    let d = set.dim();
    let root_nominal = sqrtm_psd(set.nominal().covariance())?;

    for _ in 0..MAX_REJECTED_DRAWS {
        let target = rho * rng.random::<f64>();
        let step: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let bump = SymMatrix::<f64>::from_fn(d, |_, _| StandardNormal.sample(rng));

        let candidate = |t: f64| -> Result<MomentPair<T>, MomentsError> {
            let mean: Vec<T> = set
                .nominal()
                .mean()
                .iter()
                .zip(&step)
                .map(|(&m, &g)| m + T::of(t * g))
                .collect();
            let factor = SymMatrix::from_fn(d, |i, j| {
                root_nominal.get(i, j) + T::of(t) * T::of(bump.get(i, j))
            });
            // A symmetric factor squared is PSD regardless of t.
            let covariance = factor.mul_sym_symmetrized(&factor);
            MomentPair::new(mean, psd_project(&covariance)?)
        };

        if target == 0.0 {
            return Ok(set.nominal().clone());
        }
        let probe = candidate(RATE_PROBE_STEP)?;
        let rate = gelbrich_distance(set.nominal(), &probe)?.as_f64() / RATE_PROBE_STEP;
        if !(rate > 1e-12) || !rate.is_finite() {
            // Degenerate direction (both perturbations essentially zero);
            // redraw rather than divide by it.
            continue;
        }
        let mut t = target / rate;
        for _ in 0..SCALE_REFINEMENTS {
            let reached = gelbrich_distance(set.nominal(), &candidate(t)?)?.as_f64();
            if !(reached > 0.0) || !reached.is_finite() {
                break;
            }
            t *= target / reached;
            if !t.is_finite() {
                break;
            }
        }
        if !t.is_finite() {
            continue;
        }
        let pair = candidate(t)?;
        if gelbrich_distance(set.nominal(), &pair)?.as_f64() <= rho {
            return Ok(pair);
        }
    }
    Err(MomentsError::SamplingFailed {
        attempts: MAX_REJECTED_DRAWS,
    })
}
