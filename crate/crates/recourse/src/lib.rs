//! Robustness analysis and construction of counterfactual explanation plans
//! for linear classifiers whose parameters are uncertain.
//!
//! A counterfactual plan is a small set of alternative inputs `x_1..x_J`
//! offered to someone who received an unfavorable decision from a linear
//! classifier. The plan is *jointly valid* under a parameter vector `θ` when
//! every point receives the favorable label, i.e. `x_jᵀθ ≥ 0` for all `j`.
//! When the deployed parameters are only known through a nominal mean and
//! covariance `(μ̂, Σ̂)` plus a Gelbrich-distance budget `ρ` around them, the
//! probability of joint validity can still be bracketed and improved:
//!
//! * [`bounds`] computes distributionally robust lower/upper bounds `L*`/`U*`
//!   on the validity probability by semidefinite programming,
//! * [`corrections`] repairs an existing plan, either by half-space
//!   projection or by per-point Mahalanobis margin maximization,
//! * [`copa`] builds plans from scratch by projected gradient descent on a
//!   proximity / validity / diversity trade-off,
//! * [`moments`], [`classify`], and [`experiments`] supply the Gelbrich
//!   geometry, the linear-classification substrate, and scripted validity
//!   sweeps used to exercise everything end to end.
//!
//! The numerical kernels ([`linalg`], [`conic`]) are self-contained and
//! deterministic: same inputs, same outputs, no threads, no hidden state.
//!
//! All core types are generic over the scalar through the [`Real`] trait;
//! `f64` aliases are exported at the crate root for the common case.

pub mod bounds;
pub mod classify;
pub mod conic;
pub mod copa;
pub mod corrections;
pub mod experiments;
pub mod linalg;
pub mod moments;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Scalar abstraction for every numeric routine in the crate.
///
/// Implemented automatically for `f32` and `f64`. Algorithm constants are
/// written as `f64` literals and converted through [`Real::of`], so the same
/// code path runs in both precisions and random draws (always performed in
/// `f64`) produce identical streams regardless of the scalar in use.
pub trait Real:
    Float + FromPrimitive + NumAssign + Sum<Self> + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` constant into this scalar type.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 constant must convert into a Real scalar")
    }

    /// Widens this scalar to `f64`, e.g. for error payloads and reports.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real scalar must widen to f64")
    }
}

impl<T> Real for T where
    T: Float + FromPrimitive + NumAssign + Sum<T> + Debug + Display + Send + Sync + 'static
{
}

/// Coarse failure classification shared by all module error types.
///
/// Callers that need process-level exit codes (the command-line front end)
/// map [`ErrorClass::Input`] to a usage error and [`ErrorClass::Numerical`]
/// to a solver/numeric failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// The caller handed over something malformed: dimension mismatches,
    /// empty inputs, out-of-range parameters, unreadable files.
    Input,
    /// The computation itself broke down: non-convergence, singularity,
    /// infeasible subproblems, NaN contamination.
    Numerical,
}

/// Constructs the deterministic random generator used throughout the crate.
///
/// Every seeded entry point funnels through this single constructor so that
/// a seed value means the same byte stream everywhere.
pub fn seeded_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

/// `f64` symmetric matrix.
pub type SymMatrix64 = linalg::SymMatrix<f64>;
/// Double-precision moment pair, the common concrete choice.
pub type MomentPair64 = moments::MomentPair<f64>;
/// Double-precision ambiguity set.
pub type AmbiguitySet64 = moments::AmbiguitySet<f64>;
/// Double-precision counterfactual plan.
pub type CounterfactualPlan64 = bounds::CounterfactualPlan<f64>;
/// Double-precision bounds result.
pub type BoundsResult64 = bounds::BoundsResult<f64>;
/// Double-precision correction report.
pub type CorrectionReport64 = corrections::CorrectionReport<f64>;
/// Double-precision plan-generation configuration.
pub type CopaConfig64 = copa::CopaConfig<f64>;
/// Double-precision plan-generation trace.
pub type PlanTrace64 = copa::PlanTrace<f64>;
/// Double-precision linear classifier.
pub type LinearModel64 = classify::LinearModel<f64>;
/// Double-precision labeled dataset.
pub type Dataset64 = classify::Dataset<f64>;
/// Double-precision classifier-parameter ensemble.
pub type ParameterEnsemble64 = classify::ParameterEnsemble<f64>;
/// Double-precision shift-sweep description.
pub type ShiftSpec64 = experiments::ShiftSpec<f64>;
/// Double-precision experiment report.
pub type ExperimentReport64 = experiments::ExperimentReport<f64>;
