//! Linear classification substrate for the experiments: logistic training,
//! bootstrap parameter ensembles, synthetic data, and Monte Carlo validity.
//!
//! A linear classifier `𝒞_θ(x) = 1{θᵀx ≥ 0}` assigns the favorable label
//! to the closed half-space containing `θ` (the boundary maps to 1). Models
//! come from deterministic full-batch logistic regression; parameter
//! uncertainty is manufactured by retraining on random subsets of the data
//! ([`bootstrap_ensemble`]) or by sampling parameters from a Gaussian
//! ([`gaussian_parameter_sampler`]). [`empirical_validity`] then counts how
//! often a whole plan keeps the favorable label across an ensemble, the
//! Monte Carlo quantity the probability bounds bracket.
//!
//! Bias terms are handled by dimension extension: [`append_bias`] and
//! [`Dataset::with_bias`] append a constant-1 feature so `θ` and `x` live in
//! the same extended space.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bounds::CounterfactualPlan;
use crate::linalg::{dot, norm2, sqrtm_psd, LinalgError};
use crate::moments::MomentPair;
use crate::{ErrorClass, Real};

/// Armijo sufficient-decrease constant for the backtracking line search.
const ARMIJO: f64 = 1e-4;

/// Step halvings per line search before giving up; 60 halvings from any
/// finite trial step reach denormal territory, so exhausting them means the
/// gradient is numerically spent.
const BACKTRACK_CAP: usize = 60;

/// Consecutive single-class resamples tolerated before a bootstrap draw is
/// abandoned.
const RESAMPLE_RETRIES: usize = 100;

/// Default ridge penalty on the mean log-loss.
const DEFAULT_L2: f64 = 1e-4;

/// Default gradient-norm target; training returns only below it.
const DEFAULT_TOLERANCE: f64 = 1e-6;

/// Default iteration budget for training.
const DEFAULT_TRAIN_ITERATIONS: usize = 10_000;

/// Synthetic two-Gaussian data: unfavorable class mean.
pub(crate) const SYNTH_MEAN_UNFAVORABLE: [f64; 2] = [-2.0, -2.0];

/// Synthetic two-Gaussian data: favorable class mean.
const SYNTH_MEAN_FAVORABLE: [f64; 2] = [2.0, 2.0];

/// Synthetic two-Gaussian data: isotropic variance of both classes.
pub(crate) const SYNTH_VARIANCE: f64 = 0.5;

/// Errors from the classification layer.
#[derive(Debug, thiserror::Error)]
pub enum ClassifyError {
    /// Model, plan, dataset, or point dimensions disagree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch {
        /// Dimension implied by the first object.
        expected: usize,
        /// Dimension actually supplied.
        got: usize,
    },
    /// A parameter vector entry is not finite.
    #[error("parameter {index} is not finite")]
    NonFiniteParameter {
        /// Position of the offending entry.
        index: usize,
    },
    /// A feature value is not finite.
    #[error("feature at row {row}, column {column} is not finite")]
    NonFiniteFeature {
        /// Row of the offending value.
        row: usize,
        /// Column of the offending value.
        column: usize,
    },
    /// A dataset with no rows or no feature columns was supplied.
    #[error("dataset must have at least one row and one feature column")]
    EmptyDataset,
    /// An ensemble with no parameter samples was supplied.
    #[error("parameter ensemble must contain at least one sample")]
    EmptyEnsemble,
    /// Training data carries only one label value.
    #[error("training requires both classes present in the labels")]
    SingleClass,
    /// The subsampling fraction must lie in (0, 1].
    #[error("subsample fraction must lie in (0, 1], got {value}")]
    InvalidFraction {
        /// Offending fraction.
        value: f64,
    },
    /// A count argument must be at least 1.
    #[error("{what} must be ≥ 1")]
    InvalidCount {
        /// Which count was zero.
        what: &'static str,
    },
    /// Every retry of a bootstrap draw produced a single-class subsample.
    #[error("{attempts} consecutive resamples carried a single class")]
    ResampleExhausted {
        /// Number of rejected draws.
        attempts: usize,
    },
    /// Training stopped at the iteration cap above the gradient target.
    #[error("training stalled with gradient norm {gradient_norm:.3e} above the tolerance")]
    NoConvergence {
        /// Gradient norm at the last iterate.
        gradient_norm: f64,
    },
    /// The trailing CSV column must be named `label`.
    #[error("CSV must end with a `label` column, got `{got}`")]
    MissingLabelColumn {
        /// Name actually found in the last header slot.
        got: String,
    },
    /// A CSV label cell was not 0 or 1.
    #[error("row {row}: label must be 0 or 1, got `{value}`")]
    BadLabel {
        /// Offending data row (0-based, excluding the header).
        row: usize,
        /// Cell contents.
        value: String,
    },
    /// A CSV numeric cell did not parse to a finite number.
    #[error("row {row}, column {column}: expected a finite number, got `{value}`")]
    BadNumber {
        /// Offending data row (0-based, excluding the header).
        row: usize,
        /// Offending column.
        column: usize,
        /// Cell contents.
        value: String,
    },
    /// Malformed CSV structure (unequal row lengths, broken quoting).
    #[error(transparent)]
    Csv(#[from] csv::Error),
    /// Matrix square root of the sampling covariance failed.
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

impl ClassifyError {
    /// Coarse classification for process exit codes.
    pub fn class(&self) -> ErrorClass {
        match self {
            ClassifyError::DimensionMismatch { .. }
            | ClassifyError::NonFiniteParameter { .. }
            | ClassifyError::NonFiniteFeature { .. }
            | ClassifyError::EmptyDataset
            | ClassifyError::EmptyEnsemble
            | ClassifyError::SingleClass
            | ClassifyError::InvalidFraction { .. }
            | ClassifyError::InvalidCount { .. }
            | ClassifyError::MissingLabelColumn { .. }
            | ClassifyError::BadLabel { .. }
            | ClassifyError::BadNumber { .. }
            | ClassifyError::Csv(_) => ErrorClass::Input,
            ClassifyError::ResampleExhausted { .. } | ClassifyError::NoConvergence { .. } => {
                ErrorClass::Numerical
            }
            ClassifyError::Linalg(e) => e.class(),
        }
    }
}

/// A linear classifier `x ↦ 1{θᵀx ≥ 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel<T> {
    theta: Vec<T>,
}

impl<T: Real> LinearModel<T> {
    /// Wraps a parameter vector, rejecting empty or non-finite input.
    pub fn new(theta: Vec<T>) -> Result<Self, ClassifyError> {
        if theta.is_empty() {
            return Err(ClassifyError::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        for (index, value) in theta.iter().enumerate() {
            if !value.is_finite() {
                return Err(ClassifyError::NonFiniteParameter { index });
            }
        }
        Ok(Self { theta })
    }

    /// The parameter vector `θ`.
    pub fn theta(&self) -> &[T] {
        &self.theta
    }

    /// Feature dimension.
    pub fn dim(&self) -> usize {
        self.theta.len()
    }
}

/// Feature rows with binary labels (`true` is the favorable class).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    features: Vec<Vec<T>>,
    labels: Vec<bool>,
}

impl<T: Real> Dataset<T> {
    /// Builds a dataset, requiring at least one row, at least one feature
    /// column, one label per row, and finite features.
    pub fn new(features: Vec<Vec<T>>, labels: Vec<bool>) -> Result<Self, ClassifyError> {
        if features.is_empty() || features[0].is_empty() {
            return Err(ClassifyError::EmptyDataset);
        }
        if labels.len() != features.len() {
            return Err(ClassifyError::DimensionMismatch {
                expected: features.len(),
                got: labels.len(),
            });
        }
        let dim = features[0].len();
        for (row, x) in features.iter().enumerate() {
            if x.len() != dim {
                return Err(ClassifyError::DimensionMismatch {
                    expected: dim,
                    got: x.len(),
                });
            }
            for (column, value) in x.iter().enumerate() {
                if !value.is_finite() {
                    return Err(ClassifyError::NonFiniteFeature { row, column });
                }
            }
        }
        Ok(Self { features, labels })
    }

    /// Number of rows.
    pub fn len(&self) -> usize {
        self.features.len()
    }

    /// A dataset always has at least one row; kept for idiom completeness.
    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Feature dimension.
    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    /// All feature rows.
    pub fn features(&self) -> &[Vec<T>] {
        &self.features
    }

    /// All labels, aligned with the rows.
    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    /// A copy with a constant-1 feature appended to every row, the
    /// dimension-extension treatment of the bias term.
    pub fn with_bias(&self) -> Self {
        let features = self
            .features
            .iter()
            .map(|row| {
                let mut extended = row.clone();
                extended.push(T::one());
                extended
            })
            .collect();
        Self {
            features,
            labels: self.labels.clone(),
        }
    }

    /// The sub-dataset given by row indices (indices may repeat; each index
    /// must be in range).
    fn select(&self, indices: &[usize]) -> Self {
        Self {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Renders the dataset as CSV: header `f0,...,f{d−1},label`, one row per
    /// sample, labels as 0/1.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.dim() {
            let _ = write!(out, "f{i},");
        }
        out.push_str("label\n");
        for (row, &label) in self.features.iter().zip(&self.labels) {
            for value in row {
                let _ = write!(out, "{value},");
            }
            let _ = writeln!(out, "{}", u8::from(label));
        }
        out
    }

    /// Parses the CSV format written by [`Dataset::to_csv`]: a header whose
    /// last column is literally `label`, feature cells as finite floats, and
    /// label cells as 0 or 1.
    ///
    /// # Errors
    ///
    /// Structural CSV problems, a missing `label` header, non-finite or
    /// unparsable feature cells, labels outside {0, 1}, or an empty table.
    pub fn from_csv(text: &str) -> Result<Self, ClassifyError> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        let last = headers.iter().last().unwrap_or("");
        if last != "label" {
            return Err(ClassifyError::MissingLabelColumn { got: last.into() });
        }
        let dim = headers.len() - 1;
        if dim == 0 {
            return Err(ClassifyError::EmptyDataset);
        }
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            let mut x = Vec::with_capacity(dim);
            for column in 0..dim {
                let cell = &record[column];
                let value: f64 = cell.parse().map_err(|_| ClassifyError::BadNumber {
                    row,
                    column,
                    value: cell.into(),
                })?;
                if !value.is_finite() {
                    return Err(ClassifyError::BadNumber {
                        row,
                        column,
                        value: cell.into(),
                    });
                }
                x.push(T::of(value));
            }
            let label = match &record[dim] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(ClassifyError::BadLabel {
                        row,
                        value: other.into(),
                    })
                }
            };
            features.push(x);
            labels.push(label);
        }
        Dataset::new(features, labels)
    }
}

/// A collection of parameter vectors of common dimension, the raw material
/// for moment estimation and Monte Carlo validity.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterEnsemble<T> {
    samples: Vec<Vec<T>>,
}

impl<T: Real> ParameterEnsemble<T> {
    /// Wraps parameter samples, requiring at least one, a common dimension,
    /// and finite entries.
    pub fn new(samples: Vec<Vec<T>>) -> Result<Self, ClassifyError> {
        if samples.is_empty() || samples[0].is_empty() {
            return Err(ClassifyError::EmptyEnsemble);
        }
        let dim = samples[0].len();
        for (row, theta) in samples.iter().enumerate() {
            if theta.len() != dim {
                return Err(ClassifyError::DimensionMismatch {
                    expected: dim,
                    got: theta.len(),
                });
            }
            for (column, value) in theta.iter().enumerate() {
                if !value.is_finite() {
                    return Err(ClassifyError::NonFiniteFeature { row, column });
                }
            }
        }
        Ok(Self { samples })
    }

    /// Number of parameter samples.
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// An ensemble always has at least one sample; kept for idiom
    /// completeness.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Parameter dimension.
    pub fn dim(&self) -> usize {
        self.samples[0].len()
    }

    /// All parameter samples.
    pub fn samples(&self) -> &[Vec<T>] {
        &self.samples
    }

    /// Renders the ensemble as headerless CSV, one `θ` per row.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for theta in &self.samples {
            let mut first = true;
            for value in theta {
                if !first {
                    out.push(',');
                }
                let _ = write!(out, "{value}");
                first = false;
            }
            out.push('\n');
        }
        out
    }

    /// Parses the headerless CSV written by [`ParameterEnsemble::to_csv`].
    ///
    /// # Errors
    ///
    /// Structural CSV problems, unparsable or non-finite cells, or an empty
    /// table.
    pub fn from_csv(text: &str) -> Result<Self, ClassifyError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(text.as_bytes());
        let mut samples = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            let mut theta = Vec::with_capacity(record.len());
            for (column, cell) in record.iter().enumerate() {
                let value: f64 = cell.parse().map_err(|_| ClassifyError::BadNumber {
                    row,
                    column,
                    value: cell.into(),
                })?;
                theta.push(T::of(value));
            }
            samples.push(theta);
        }
        ParameterEnsemble::new(samples)
    }
}

/// Settings for [`train_logistic`]: ridge weight on the mean log-loss,
/// iteration budget, and gradient-norm target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSettings<T> {
    /// Ridge penalty weight (the objective adds `l2/2·‖θ‖²`).
    pub l2: T,
    /// Hard cap on descent iterations.
    pub max_iterations: usize,
    /// Training returns once the objective gradient norm is at or below
    /// this.
    pub tolerance: T,
}

impl<T: Real> Default for TrainSettings<T> {
    fn default() -> Self {
        Self {
            l2: T::of(DEFAULT_L2),
            max_iterations: DEFAULT_TRAIN_ITERATIONS,
            tolerance: T::of(DEFAULT_TOLERANCE),
        }
    }
}

/// The favorable-side indicator `1{θᵀx ≥ 0}`; the boundary itself is
/// favorable.
///
/// # Errors
///
/// Dimension mismatch between the model and the point.
pub fn predict<T: Real>(model: &LinearModel<T>, x: &[T]) -> Result<bool, ClassifyError> {
    if x.len() != model.dim() {
        return Err(ClassifyError::DimensionMismatch {
            expected: model.dim(),
            got: x.len(),
        });
    }
    Ok(dot(model.theta(), x) >= T::zero())
}

/// Numerically stable `σ(z) = 1/(1+e^{−z})`.
fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Numerically stable `ln(1+e^z)`.
fn softplus<T: Real>(z: T) -> T {
    if z >= T::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean ridge-penalized log-loss and its gradient at `theta`.
fn logistic_objective<T: Real>(data: &Dataset<T>, l2: T, theta: &[T]) -> (T, Vec<T>) {
    let n = T::of(data.len() as f64);
    let inv_n = T::one() / n;
    let mut loss = T::zero();
    let mut gradient = vec![T::zero(); theta.len()];
    for (x, &label) in data.features().iter().zip(data.labels()) {
        let z = dot(theta, x);
        let y = if label { T::one() } else { T::zero() };
        loss += softplus(z) - y * z;
        let residual = sigmoid(z) - y;
        for (g, &xi) in gradient.iter_mut().zip(x) {
            *g += residual * xi;
        }
    }
    loss *= inv_n;
    let half = T::of(0.5);
    for (g, &t) in gradient.iter_mut().zip(theta) {
        *g = *g * inv_n + l2 * t;
        loss += half * l2 * t * t;
    }
    (loss, gradient)
}

/// Trains a logistic model by full-batch descent: Barzilai-Borwein trial
/// steps safeguarded by Armijo backtracking, from `θ = 0`. Deterministic,
/// and the mean-loss formulation makes the objective invariant under row
/// duplication.
///
/// # Errors
///
/// Single-class labels, or failure to push the gradient norm below the
/// tolerance within the iteration budget.
pub fn train_logistic<T: Real>(
    data: &Dataset<T>,
    settings: &TrainSettings<T>,
) -> Result<LinearModel<T>, ClassifyError> {
    let labels = data.labels();
    if labels.iter().all(|&y| y) || labels.iter().all(|&y| !y) {
        return Err(ClassifyError::SingleClass);
    }
    let dim = data.dim();
    let mut theta = vec![T::zero(); dim];
    let (mut loss, mut gradient) = logistic_objective(data, settings.l2, &theta);
    let mut previous: Option<(Vec<T>, Vec<T>)> = None;

    for _ in 0..settings.max_iterations {
        let gradient_norm = norm2(&gradient);
        if gradient_norm <= settings.tolerance {
            return LinearModel::new(theta);
        }
        let mut step = match &previous {
            Some((old_theta, old_gradient)) => {
                let dx: Vec<T> = theta
                    .iter()
                    .zip(old_theta)
                    .map(|(&a, &b)| a - b)
                    .collect();
                let dg: Vec<T> = gradient
                    .iter()
                    .zip(old_gradient)
                    .map(|(&a, &b)| a - b)
                    .collect();
                let curvature = dot(&dx, &dg);
                if curvature > T::zero() {
                    dot(&dx, &dx) / curvature
                } else {
                    T::one()
                }
            }
            None => T::one(),
        };
        if !step.is_finite() || step <= T::zero() {
            step = T::one();
        }

        let slope = T::of(ARMIJO) * gradient_norm * gradient_norm;
        let mut accepted = None;
        for _ in 0..BACKTRACK_CAP {
            let candidate: Vec<T> = theta
                .iter()
                .zip(&gradient)
                .map(|(&t, &g)| t - step * g)
                .collect();
            let (candidate_loss, candidate_gradient) =
                logistic_objective(data, settings.l2, &candidate);
            if candidate_loss <= loss - step * slope {
                accepted = Some((candidate, candidate_loss, candidate_gradient));
                break;
            }
            step *= T::of(0.5);
        }
        match accepted {
            Some((next, next_loss, next_gradient)) => {
                previous = Some((theta, gradient));
                theta = next;
                loss = next_loss;
                gradient = next_gradient;
            }
            // The line search cannot make progress at floating precision;
            // fall through to the convergence error with the current norm.
            None => break,
        }
    }
    let gradient_norm = norm2(&gradient);
    if gradient_norm <= settings.tolerance {
        return LinearModel::new(theta);
    }
    Err(ClassifyError::NoConvergence {
        gradient_norm: gradient_norm.as_f64(),
    })
}

/// Trains `count` models, each on a without-replacement subsample of
/// `fraction·N` rows (at least one row). Draws whose subsample carries a
/// single class are redrawn, up to a retry cap per member. Index sets are
/// sorted before training, so `fraction = 1` reproduces the full-data model
/// exactly and results depend only on which rows were drawn.
///
/// # Errors
///
/// Zero count, a fraction outside (0, 1], single-class full data, retry
/// exhaustion, or a member failing to train.
pub fn bootstrap_ensemble<T: Real, R: Rng>(
    data: &Dataset<T>,
    count: usize,
    fraction: f64,
    rng: &mut R,
) -> Result<ParameterEnsemble<T>, ClassifyError> {
    if count == 0 {
        return Err(ClassifyError::InvalidCount {
            what: "ensemble size",
        });
    }
    if !fraction.is_finite() || fraction <= 0.0 || fraction > 1.0 {
        return Err(ClassifyError::InvalidFraction { value: fraction });
    }
    let labels = data.labels();
    if labels.iter().all(|&y| y) || labels.iter().all(|&y| !y) {
        return Err(ClassifyError::SingleClass);
    }
    let total = data.len();
    let take = ((fraction * total as f64).round() as usize).clamp(1, total);
    let settings = TrainSettings::default();
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let mut subset = None;
        for _ in 0..RESAMPLE_RETRIES {
            let mut indices = rand::seq::index::sample(rng, total, take).into_vec();
            indices.sort_unstable();
            let candidate = data.select(&indices);
            let sub_labels = candidate.labels();
            if sub_labels.iter().any(|&y| y) && sub_labels.iter().any(|&y| !y) {
                subset = Some(candidate);
                break;
            }
        }
        let Some(subset) = subset else {
            return Err(ClassifyError::ResampleExhausted {
                attempts: RESAMPLE_RETRIES,
            });
        };
        let model = train_logistic(&subset, &settings)?;
        samples.push(model.theta.clone());
    }
    ParameterEnsemble::new(samples)
}

/// Fraction of ensemble members under which the whole plan is favorable:
/// `(1/N)·#{θ : x_jᵀθ ≥ 0 ∀j}`.
///
/// # Errors
///
/// Dimension mismatch between the plan and the ensemble.
pub fn empirical_validity<T: Real>(
    plan: &CounterfactualPlan<T>,
    ensemble: &ParameterEnsemble<T>,
) -> Result<T, ClassifyError> {
    if plan.dim() != ensemble.dim() {
        return Err(ClassifyError::DimensionMismatch {
            expected: ensemble.dim(),
            got: plan.dim(),
        });
    }
    let valid = ensemble
        .samples()
        .iter()
        .filter(|theta| {
            plan.points()
                .iter()
                .all(|x| dot(theta, x) >= T::zero())
        })
        .count();
    Ok(T::of(valid as f64) / T::of(ensemble.len() as f64))
}

/// Draws `n` parameters from the Gaussian with the given moments:
/// `θ = μ + Σ^½·g` with `g` standard normal.
///
/// # Errors
///
/// Zero count, or failure of the covariance square root.
pub fn gaussian_parameter_sampler<T: Real, R: Rng>(
    moment: &MomentPair<T>,
    n: usize,
    rng: &mut R,
) -> Result<ParameterEnsemble<T>, ClassifyError> {
    if n == 0 {
        return Err(ClassifyError::InvalidCount {
            what: "sample count",
        });
    }
    let dim = moment.dim();
    let root = sqrtm_psd(moment.covariance())?;
    let mean = moment.mean();
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let noise: Vec<T> = (0..dim)
            .map(|_| {
                let g: f64 = StandardNormal.sample(rng);
                T::of(g)
            })
            .collect();
        let shift = root.mul_vec(&noise);
        samples.push(mean.iter().zip(shift).map(|(&m, s)| m + s).collect());
    }
    ParameterEnsemble::new(samples)
}

/// Draws the synthetic two-Gaussian dataset: `n_per_class` unfavorable
/// points around `(−2, −2)` followed by `n_per_class` favorable points
/// around `(2, 2)`, both with covariance `0.5·I`.
///
/// # Errors
///
/// Zero count.
pub fn synth_gaussian_dataset<T: Real, R: Rng>(
    n_per_class: usize,
    rng: &mut R,
) -> Result<Dataset<T>, ClassifyError> {
    if n_per_class == 0 {
        return Err(ClassifyError::InvalidCount {
            what: "per-class count",
        });
    }
    let spread = SYNTH_VARIANCE.sqrt();
    let mut features = Vec::with_capacity(2 * n_per_class);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    for (center, label) in [
        (SYNTH_MEAN_UNFAVORABLE, false),
        (SYNTH_MEAN_FAVORABLE, true),
    ] {
        for _ in 0..n_per_class {
            let row: Vec<T> = center
                .iter()
                .map(|&m| {
                    let g: f64 = StandardNormal.sample(rng);
                    T::of(m + spread * g)
                })
                .collect();
            features.push(row);
            labels.push(label);
        }
    }
    Dataset::new(features, labels)
}

/// A copy of `x` with a constant-1 coordinate appended, the
/// dimension-extension treatment of the bias term.
pub fn append_bias<T: Real>(x: &[T]) -> Vec<T> {
    let mut extended = x.to_vec();
    extended.push(T::one());
    extended
}
