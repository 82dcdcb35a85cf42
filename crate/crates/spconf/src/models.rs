//! Base regression models. The conformal layer only needs point predictions,
//! so anything implementing [`Predictor`] plugs in; the built-in model is a
//! Nadaraya–Watson kernel regressor with a Gaussian kernel.

use thiserror::Error;

use crate::data::{kfold_indices, Observation, RngSpec};

/// Errors raised by model fitting and prediction.
#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    /// No training observations were supplied.
    #[error("cannot fit a model on an empty training set")]
    EmptyTrainSet,
    /// Query feature length differs from the training feature length.
    #[error("feature length {got} does not match trained length {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    /// Bandwidth must be finite and positive.
    #[error("bandwidth must be finite and > 0, got {0}")]
    BadBandwidth(f64),
    /// No candidate bandwidths were supplied to selection.
    #[error("candidate list is empty")]
    NoCandidates,
    /// Underlying split utilities rejected the data.
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
}

/// A fitted point-prediction model.
pub trait Predictor: Send + Sync {
    /// Predicts the response for one feature vector.
    fn predict(&self, features: &[f64]) -> Result<f64, ModelError>;
}

/// Nadaraya–Watson kernel regression:
/// `f̂(x) = Σᵢ w_i·y_i / Σᵢ w_i` with `w_i = exp(−‖x−x_i‖² / (2h²))`.
///
/// Weights are computed relative to the nearest training point (the largest
/// weight is always 1), so the estimate stays defined for any query and
/// degrades gracefully to the nearest neighbor's response — ties averaged —
/// when every other weight underflows (far queries or `h → 0⁺`).
#[derive(Debug, Clone)]
pub struct KernelRegressor {
    bandwidth: f64,
    train_x: Vec<Vec<f64>>,
    train_y: Vec<f64>,
}

/// Fits a kernel regressor (stores the training set; all work is at query
/// time). Requires a non-empty training set, constant feature length, and a
/// positive bandwidth.
pub fn fit_kernel_regression(
    train: &[Observation],
    bandwidth: f64,
) -> Result<KernelRegressor, ModelError> {
    if train.is_empty() {
        return Err(ModelError::EmptyTrainSet);
    }
    if !(bandwidth.is_finite() && bandwidth > 0.0) {
        return Err(ModelError::BadBandwidth(bandwidth));
    }
    let dim = train[0].features.len();
    for obs in train {
        if obs.features.len() != dim {
            return Err(ModelError::DimensionMismatch {
                expected: dim,
                got: obs.features.len(),
            });
        }
    }
    Ok(KernelRegressor {
        bandwidth,
        train_x: train.iter().map(|o| o.features.clone()).collect(),
        train_y: train.iter().map(|o| o.response).collect(),
    })
}

impl KernelRegressor {
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn len(&self) -> usize {
        self.train_y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_y.is_empty()
    }
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl Predictor for KernelRegressor {
    fn predict(&self, features: &[f64]) -> Result<f64, ModelError> {
        let dim = self.train_x[0].len();
        if features.len() != dim {
            return Err(ModelError::DimensionMismatch {
                expected: dim,
                got: features.len(),
            });
        }
        let d2: Vec<f64> = self.train_x.iter().map(|x| dist_sq(features, x)).collect();
        let d2_min = d2.iter().copied().fold(f64::INFINITY, f64::min);
        let two_h2 = 2.0 * self.bandwidth * self.bandwidth;

        let mut num = 0.0;
        let mut den = 0.0;
        for (d, &y) in d2.iter().zip(&self.train_y) {
            // Shift by the minimum squared distance: a constant factor that
            // cancels in the ratio but keeps the nearest weight at exactly 1,
            // so the denominator can never underflow to zero.
            let w = (-(d - d2_min) / two_h2).exp();
            num += w * y;
            den += w;
        }
        Ok(num / den)
    }
}

/// Mean-squared CV error of one bandwidth on `folds` splits of `train`.
fn cv_mse(
    train: &[Observation],
    bandwidth: f64,
    folds: &[(Vec<usize>, Vec<usize>)],
) -> Result<f64, ModelError> {
    let mut sq_err = 0.0;
    let mut count = 0usize;
    for (fit_idx, holdout_idx) in folds {
        let fit: Vec<Observation> = fit_idx.iter().map(|&i| train[i].clone()).collect();
        let model = fit_kernel_regression(&fit, bandwidth)?;
        for &i in holdout_idx {
            let pred = model.predict(&train[i].features)?;
            let e = pred - train[i].response;
            sq_err += e * e;
            count += 1;
        }
    }
    Ok(sq_err / count as f64)
}

/// Picks the bandwidth with the smallest k-fold CV mean-squared error.
/// Ties resolve to the smaller bandwidth; folds come from the `"kfold"`
/// substream of `rng`, so selection is a pure function of the seed.
pub fn select_bandwidth(
    train: &[Observation],
    candidates: &[f64],
    folds: usize,
    rng: &RngSpec,
) -> Result<f64, ModelError> {
    if candidates.is_empty() {
        return Err(ModelError::NoCandidates);
    }
    let idx: Vec<usize> = (0..train.len()).collect();
    let fold_sets = kfold_indices(&idx, folds, rng)?;
    let mut best = (f64::INFINITY, f64::INFINITY); // (mse, h)
    for &h in candidates {
        let mse = cv_mse(train, h, &fold_sets)?;
        if mse < best.0 || (mse == best.0 && h < best.1) {
            best = (mse, h);
        }
    }
    Ok(best.1)
}

/// A small scale-aware bandwidth grid: the median pairwise feature distance
/// (over a deterministic subsample) times {1/4, 1/2, 1, 2, 4}.
pub fn default_bandwidths(train: &[Observation]) -> Vec<f64> {
    let stride = (train.len() / 300).max(1);
    let sample: Vec<&Observation> = train.iter().step_by(stride).collect();
    let mut dists = Vec::new();
    for i in 0..sample.len() {
        for j in (i + 1)..sample.len() {
            dists.push(dist_sq(&sample[i].features, &sample[j].features).sqrt());
        }
    }
    dists.sort_by(f64::total_cmp);
    let med = dists.get(dists.len() / 2).copied().unwrap_or(1.0).max(1e-6);
    [0.25, 0.5, 1.0, 2.0, 4.0].iter().map(|m| m * med).collect()
}
