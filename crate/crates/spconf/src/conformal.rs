//! Conformal interval construction.
//!
//! All five methods share the same split-conformal skeleton: a base model is
//! fit on training data, residual scores `ε̂ᵢ = yᵢ − f̂(xᵢ)` are computed on a
//! calibration set, and a quantile of those scores calibrates the interval at
//! a test location. They differ in how calibration points are weighted and
//! whether the interval may be asymmetric:
//!
//! * **LSCP** — each calibration point is described by its k nearest
//!   calibration residuals (distance-ordered); a quantile regression forest
//!   maps the test point's neighbor-residual vector to a local residual
//!   distribution, and a width-minimizing quantile pair `[Q̂(β*), Q̂(1−α+β*)]`
//!   forms the interval.
//! * **GSCP** — global split conformal: symmetric interval from the
//!   finite-sample-corrected empirical quantile of absolute scores.
//! * **SLSCP** — like GSCP but local: Gaussian distance-kernel weights over
//!   the k nearest calibration sites.
//! * **LCP** — kernel weights in feature space over all calibration points.
//! * **EnbPI** — equal weights over the k nearest calibration sites with the
//!   same β* search as LSCP (signed residuals, asymmetric interval).
//!
//! Weighted quantiles use the convention `Q(p) = inf{e : F̂(e) ≥ p}`.
//! Cumulative-mass comparisons carry a 1e-9 absolute slack so that weights
//! which are uniform up to rounding (e.g. a kernel at huge bandwidth)
//! reproduce the unweighted order statistic exactly.

use std::str::FromStr;

use thiserror::Error;

use crate::data::{Observation, Site};
use crate::exec::par_map;
use crate::models::{ModelError, Predictor};
use crate::qrf::{
    fit_qrf, qrf_weights, quantile_from_weights, QrfError, QuantileForest, WeightVector,
};
use crate::spatial::{build_index, SpatialError, SpatialIndex};

/// Errors raised by conformal construction.
#[derive(Debug, Error, PartialEq)]
pub enum ConformalError {
    /// Miscoverage level must be strictly inside (0, 1).
    #[error("alpha must lie in (0, 1), got {0}")]
    BadAlpha(f64),
    /// Neighborhood size must be at least 1.
    #[error("k must be >= 1")]
    BadK,
    /// Kernel bandwidth must be finite and positive.
    #[error("bandwidth must be finite and > 0, got {0}")]
    BadBandwidth(f64),
    /// The β grid needs at least one step.
    #[error("beta grid needs at least 1 step")]
    BadBetaGrid,
    /// No calibration observations were supplied.
    #[error("calibration set is empty")]
    EmptyCalibration,
    /// Two parallel inputs disagree in length.
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    /// Every weight is zero, so no quantile is defined.
    #[error("all weights are zero")]
    AllZeroWeights,
    /// The forest was trained for a different neighbor count.
    #[error("forest feature length {forest_dim} does not match configured k = {k}")]
    UntrainedForest { forest_dim: usize, k: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Spatial(#[from] SpatialError),
    #[error(transparent)]
    Qrf(#[from] QrfError),
}

/// The five interval constructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Lscp,
    Gscp,
    Slscp,
    Lcp,
    Enbpi,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Lscp,
        Method::Gscp,
        Method::Slscp,
        Method::Lcp,
        Method::Enbpi,
    ];

    /// Canonical display name.
    pub fn name(&self) -> &'static str {
        match self {
            Method::Lscp => "LSCP",
            Method::Gscp => "GSCP",
            Method::Slscp => "SLSCP",
            Method::Lcp => "LCP",
            Method::Enbpi => "EnbPI",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "LSCP" => Ok(Method::Lscp),
            "GSCP" => Ok(Method::Gscp),
            "SLSCP" => Ok(Method::Slscp),
            "LCP" => Ok(Method::Lcp),
            "ENBPI" => Ok(Method::Enbpi),
            other => Err(format!(
                "unknown method '{other}', expected LSCP|GSCP|SLSCP|LCP|EnbPI"
            )),
        }
    }
}

/// Configuration shared by the interval constructors. Not every field is
/// read by every method: `k` drives LSCP/SLSCP/EnbPI (and the optional local
/// scale), `bandwidth` drives SLSCP/LCP, `beta_grid`/`forest` drive the
/// β*-searched methods.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodConfig {
    pub method: Method,
    /// Target miscoverage α; intervals aim at 1−α coverage.
    pub alpha: f64,
    /// Neighborhood size (default 20).
    pub k: usize,
    /// Gaussian kernel bandwidth (default 0.1).
    pub bandwidth: f64,
    /// β* grid steps m; the search evaluates m+1 points on [0, α] (default 20).
    pub beta_grid: usize,
    /// Forest hyperparameters for LSCP.
    pub forest: crate::qrf::ForestParams,
    /// Scale scores by a k-NN local MAD estimate (GSCP/SLSCP only,
    /// default off; the default scale is identically 1).
    pub local_scale: bool,
}

impl MethodConfig {
    pub fn new(method: Method, alpha: f64) -> Self {
        Self {
            method,
            alpha,
            k: 20,
            bandwidth: 0.1,
            beta_grid: 20,
            forest: crate::qrf::ForestParams::default(),
            local_scale: false,
        }
    }

    pub fn validate(&self) -> Result<(), ConformalError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(ConformalError::BadAlpha(self.alpha));
        }
        if self.k == 0 {
            return Err(ConformalError::BadK);
        }
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(ConformalError::BadBandwidth(self.bandwidth));
        }
        if self.beta_grid == 0 {
            return Err(ConformalError::BadBetaGrid);
        }
        Ok(())
    }
}

/// Signed calibration residuals `ε̂ᵢ = yᵢ − f̂(xᵢ)`, in calibration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    residuals: Vec<f64>,
}

impl ScoreSet {
    pub fn new(residuals: Vec<f64>) -> Result<Self, ConformalError> {
        if residuals.is_empty() {
            return Err(ConformalError::EmptyCalibration);
        }
        Ok(Self { residuals })
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    /// Absolute scores `|ε̂ᵢ|` for the symmetric methods.
    pub fn absolute(&self) -> Vec<f64> {
        self.residuals.iter().map(|r| r.abs()).collect()
    }

    pub fn len(&self) -> usize {
        self.residuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residuals.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.residuals.iter().sum::<f64>() / self.residuals.len() as f64
    }
}

/// Non-conformity scores on a calibration set.
pub fn compute_scores(
    model: &dyn Predictor,
    calib: &[Observation],
) -> Result<ScoreSet, ConformalError> {
    if calib.is_empty() {
        return Err(ConformalError::EmptyCalibration);
    }
    let residuals = calib
        .iter()
        .map(|o| model.predict(&o.features).map(|pred| o.response - pred))
        .collect::<Result<Vec<f64>, ModelError>>()?;
    ScoreSet::new(residuals)
}

/// A prediction interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(
            lo.is_finite() && hi.is_finite() && lo <= hi,
            "invalid interval [{lo}, {hi}]"
        );
        Self { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn covers(&self, y: f64) -> bool {
        self.lo <= y && y <= self.hi
    }
}

/// Slack for cumulative-mass comparisons; see the module docs.
const CUM_EPS: f64 = 1e-9;

/// Weighted empirical quantile `inf{e ∈ values : Σ wᵢ·1[vᵢ ≤ e] ≥ p}`.
///
/// `p = 0` returns the smallest value carrying positive weight; `p = 1` the
/// largest. Ties in `values` are scanned in `(value, index)` order, which
/// cannot change the result because equal values share their cumulative mass.
pub fn weighted_quantile(
    values: &[f64],
    weights: &WeightVector,
    p: f64,
) -> Result<f64, ConformalError> {
    if values.len() != weights.len() {
        return Err(ConformalError::LengthMismatch {
            left: values.len(),
            right: weights.len(),
        });
    }
    assert!(
        (0.0..=1.0).contains(&p),
        "quantile level must lie in [0, 1]"
    );
    debug_assert!(
        values.iter().all(|v| v.is_finite()),
        "values must be finite"
    );

    let w = weights.as_slice();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_unstable_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));

    let mut cum = 0.0;
    let mut last_positive = None;
    for &i in &order {
        if w[i] > 0.0 {
            last_positive = Some(values[i]);
            cum += w[i];
            if p == 0.0 || cum >= p - CUM_EPS {
                return Ok(values[i]);
            }
        }
    }
    last_positive.ok_or(ConformalError::AllZeroWeights)
}

/// Finite-sample-corrected quantile level `min(1, ⌈(1−α)(m+1)⌉ / m)` for a
/// score sample of size `m`.
fn corrected_level(alpha: f64, m: usize) -> f64 {
    (((1.0 - alpha) * (m as f64 + 1.0)).ceil() / m as f64).min(1.0)
}

/// Result of the β* width search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaStar {
    /// Minimizing offset in [0, α].
    pub beta: f64,
    /// Lower quantile Q̂(β*).
    pub lo: f64,
    /// Upper quantile Q̂(1−α+β*).
    pub hi: f64,
}

/// Minimizes `Q̂(1−α+β) − Q̂(β)` over the grid `β ∈ {0, α/m, …, α}`
/// (`m = grid_steps`, so m+1 evaluations). Ties resolve to the smallest β.
/// `quantile_pair(β)` must return `(Q̂(β), Q̂(1−α+β))`.
pub fn beta_star_search(
    quantile_pair: impl Fn(f64) -> (f64, f64),
    alpha: f64,
    grid_steps: usize,
) -> BetaStar {
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
    assert!(grid_steps >= 1, "grid needs at least one step");
    let mut best: Option<BetaStar> = None;
    for j in 0..=grid_steps {
        let beta = alpha * j as f64 / grid_steps as f64;
        let (lo, hi) = quantile_pair(beta);
        let keep = match &best {
            None => true,
            Some(b) => hi - lo < b.hi - b.lo,
        };
        if keep {
            best = Some(BetaStar { beta, lo, hi });
        }
    }
    best.expect("grid is non-empty")
}

/// One LSCP training pair: the k distance-ordered neighbor residuals of a
/// calibration point, and that point's own residual as target.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborFeaturePair {
    pub features: Vec<f64>,
    pub target: f64,
    /// How many trailing entries were padded with the mean calibration
    /// residual because fewer than k neighbors exist.
    pub padded: usize,
}

/// Builds the LSCP regression set: for every calibration point `i`, the
/// residuals of its k nearest calibration neighbors (self excluded, ordered
/// by ascending distance), padded with the mean calibration residual when
/// the calibration set is smaller than k+1.
///
/// `scores` must be parallel to the sites the index was built from.
pub fn build_neighbor_features(
    scores: &ScoreSet,
    index: &SpatialIndex,
    k: usize,
) -> Result<Vec<NeighborFeaturePair>, ConformalError> {
    if k == 0 {
        return Err(ConformalError::BadK);
    }
    if scores.len() != index.len() {
        return Err(ConformalError::LengthMismatch {
            left: scores.len(),
            right: index.len(),
        });
    }
    let residuals = scores.residuals();
    let mean = scores.mean();
    let pairs = index
        .sites()
        .iter()
        .enumerate()
        .map(|(i, site)| {
            let neighbors = index.knn(site, k, Some(i));
            let mut features: Vec<f64> = neighbors.indices.iter().map(|&j| residuals[j]).collect();
            let padded = k - features.len();
            features.resize(k, mean);
            NeighborFeaturePair {
                features,
                target: residuals[i],
                padded,
            }
        })
        .collect();
    Ok(pairs)
}

/// Neighbor-residual feature vector for a test site: residuals of its k
/// nearest calibration sites, mean-padded like the training pairs.
fn test_neighbor_features(
    scores: &ScoreSet,
    index: &SpatialIndex,
    site: &Site,
    k: usize,
) -> Vec<f64> {
    let neighbors = index.knn(site, k, None);
    let residuals = scores.residuals();
    let mut features: Vec<f64> = neighbors.indices.iter().map(|&j| residuals[j]).collect();
    features.resize(k, scores.mean());
    features
}

/// LSCP interval at a test point:
/// `[f̂ + Q̂(β*), f̂ + Q̂(1−α+β*)]` where `Q̂` is the forest's conditional
/// quantile given the test point's neighbor-residual features.
pub fn lscp_interval(
    test_features: &[f64],
    test_site: &Site,
    model: &dyn Predictor,
    scores: &ScoreSet,
    index: &SpatialIndex,
    forest: &QuantileForest,
    cfg: &MethodConfig,
) -> Result<Interval, ConformalError> {
    cfg.validate()?;
    if forest.feature_dim() != cfg.k {
        return Err(ConformalError::UntrainedForest {
            forest_dim: forest.feature_dim(),
            k: cfg.k,
        });
    }
    let x_tilde = test_neighbor_features(scores, index, test_site, cfg.k);
    let weights = qrf_weights(forest, &x_tilde)?;
    let pred = model.predict(test_features)?;
    let star = beta_star_search(
        |beta| {
            (
                quantile_from_weights(forest, &weights, beta),
                quantile_from_weights(forest, &weights, 1.0 - cfg.alpha + beta),
            )
        },
        cfg.alpha,
        cfg.beta_grid,
    );
    Ok(Interval::new(pred + star.lo, pred + star.hi))
}

/// GSCP interval: `f̂ ± q` with `q` the corrected-level empirical quantile
/// of the absolute scores.
pub fn gscp_interval(
    test_features: &[f64],
    model: &dyn Predictor,
    scores: &ScoreSet,
    cfg: &MethodConfig,
) -> Result<Interval, ConformalError> {
    cfg.validate()?;
    let abs = scores.absolute();
    let level = corrected_level(cfg.alpha, abs.len());
    let q = weighted_quantile(&abs, &WeightVector::uniform(abs.len()), level)?;
    let pred = model.predict(test_features)?;
    Ok(Interval::new(pred - q, pred + q))
}

/// Gaussian kernel weights from squared distances, shifted by the minimum so
/// the nearest point always has weight 1 (no all-zero underflow; the h → 0⁺
/// limit is a point mass on the nearest point).
fn kernel_weights(d2: &[f64], bandwidth: f64) -> Result<WeightVector, ConformalError> {
    let d2_min = d2.iter().copied().fold(f64::INFINITY, f64::min);
    let two_h2 = 2.0 * bandwidth * bandwidth;
    let raw: Vec<f64> = d2.iter().map(|d| (-(d - d2_min) / two_h2).exp()).collect();
    WeightVector::normalized(raw).ok_or(ConformalError::AllZeroWeights)
}

/// SLSCP interval: symmetric like GSCP, but the quantile is taken over the k
/// nearest calibration scores with Gaussian distance-kernel weights, at the
/// corrected level for the local sample size.
pub fn slscp_interval(
    test_features: &[f64],
    test_site: &Site,
    model: &dyn Predictor,
    scores: &ScoreSet,
    index: &SpatialIndex,
    cfg: &MethodConfig,
) -> Result<Interval, ConformalError> {
    cfg.validate()?;
    if scores.len() != index.len() {
        return Err(ConformalError::LengthMismatch {
            left: scores.len(),
            right: index.len(),
        });
    }
    let neighbors = index.knn(test_site, cfg.k, None);
    let d2: Vec<f64> = neighbors.distances.iter().map(|d| d * d).collect();
    let weights = kernel_weights(&d2, cfg.bandwidth)?;
    let vals: Vec<f64> = neighbors
        .indices
        .iter()
        .map(|&j| scores.residuals()[j].abs())
        .collect();
    let level = corrected_level(cfg.alpha, vals.len());
    let q = weighted_quantile(&vals, &weights, level)?;
    let pred = model.predict(test_features)?;
    Ok(Interval::new(pred - q, pred + q))
}

/// LCP interval: symmetric, with Gaussian kernel weights in feature space
/// over all calibration points. As `h → ∞` the weights flatten and the
/// interval converges to GSCP.
pub fn lcp_interval(
    test_features: &[f64],
    model: &dyn Predictor,
    scores: &ScoreSet,
    calib_features: &[Vec<f64>],
    cfg: &MethodConfig,
) -> Result<Interval, ConformalError> {
    cfg.validate()?;
    if scores.len() != calib_features.len() {
        return Err(ConformalError::LengthMismatch {
            left: scores.len(),
            right: calib_features.len(),
        });
    }
    let d2: Vec<f64> = calib_features
        .iter()
        .map(|x| {
            debug_assert_eq!(x.len(), test_features.len());
            x.iter()
                .zip(test_features)
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        })
        .collect();
    let weights = kernel_weights(&d2, cfg.bandwidth)?;
    let abs = scores.absolute();
    let level = corrected_level(cfg.alpha, abs.len());
    let q = weighted_quantile(&abs, &weights, level)?;
    let pred = model.predict(test_features)?;
    Ok(Interval::new(pred - q, pred + q))
}

/// EnbPI interval: equal weights over the signed scores of the k nearest
/// calibration sites, with the same β* width search as LSCP.
pub fn enbpi_interval(
    test_features: &[f64],
    test_site: &Site,
    model: &dyn Predictor,
    scores: &ScoreSet,
    index: &SpatialIndex,
    cfg: &MethodConfig,
) -> Result<Interval, ConformalError> {
    cfg.validate()?;
    if scores.len() != index.len() {
        return Err(ConformalError::LengthMismatch {
            left: scores.len(),
            right: index.len(),
        });
    }
    let neighbors = index.knn(test_site, cfg.k, None);
    let vals: Vec<f64> = neighbors
        .indices
        .iter()
        .map(|&j| scores.residuals()[j])
        .collect();
    let weights = WeightVector::uniform(vals.len());
    let pred = model.predict(test_features)?;
    let star = beta_star_search(
        |beta| {
            let lo = weighted_quantile(&vals, &weights, beta).expect("lengths match");
            let hi =
                weighted_quantile(&vals, &weights, 1.0 - cfg.alpha + beta).expect("lengths match");
            (lo, hi)
        },
        cfg.alpha,
        cfg.beta_grid,
    );
    Ok(Interval::new(pred + star.lo, pred + star.hi))
}

/// A calibrated conformal layer ready to produce intervals: scores, spatial
/// index over calibration sites, and (for LSCP) the fitted forest.
#[derive(Debug)]
pub struct FittedConformal {
    cfg: MethodConfig,
    scores: ScoreSet,
    index: SpatialIndex,
    calib_features: Vec<Vec<f64>>,
    forest: Option<QuantileForest>,
    /// Per-calibration-point local MAD scale when `local_scale` is on.
    sigma_calib: Option<Vec<f64>>,
}

/// Calibrates the conformal layer for `cfg.method` on a calibration set.
pub fn fit_conformal(
    cfg: &MethodConfig,
    model: &dyn Predictor,
    calib: &[Observation],
) -> Result<FittedConformal, ConformalError> {
    cfg.validate()?;
    if calib.is_empty() {
        return Err(ConformalError::EmptyCalibration);
    }
    let scores = compute_scores(model, calib)?;
    let sites: Vec<Site> = calib.iter().map(|o| o.site.clone()).collect();
    let index = build_index(&sites)?;
    let calib_features: Vec<Vec<f64>> = calib.iter().map(|o| o.features.clone()).collect();

    let forest = if cfg.method == Method::Lscp {
        let pairs: Vec<(Vec<f64>, f64)> = build_neighbor_features(&scores, &index, cfg.k)?
            .into_iter()
            .map(|p| (p.features, p.target))
            .collect();
        Some(fit_qrf(&pairs, &cfg.forest)?)
    } else {
        None
    };

    let sigma_calib = if cfg.local_scale && matches!(cfg.method, Method::Gscp | Method::Slscp) {
        let sigmas = (0..index.len())
            .map(|i| local_mad(&scores, &index, index.sites()[i].clone(), cfg.k, Some(i)))
            .collect();
        Some(sigmas)
    } else {
        None
    };

    Ok(FittedConformal {
        cfg: cfg.clone(),
        scores,
        index,
        calib_features,
        forest,
        sigma_calib,
    })
}

/// Median absolute residual over the k nearest calibration sites, floored
/// away from zero so scaled scores stay finite.
fn local_mad(
    scores: &ScoreSet,
    index: &SpatialIndex,
    site: Site,
    k: usize,
    exclude: Option<usize>,
) -> f64 {
    let neighbors = index.knn(&site, k, exclude);
    let mut abs: Vec<f64> = neighbors
        .indices
        .iter()
        .map(|&j| scores.residuals()[j].abs())
        .collect();
    abs.sort_by(f64::total_cmp);
    let med = abs.get(abs.len() / 2).copied().unwrap_or(1.0);
    med.max(1e-12)
}

impl FittedConformal {
    pub fn config(&self) -> &MethodConfig {
        &self.cfg
    }

    pub fn scores(&self) -> &ScoreSet {
        &self.scores
    }

    /// Prediction interval for one test point.
    pub fn interval(
        &self,
        features: &[f64],
        site: &Site,
        model: &dyn Predictor,
    ) -> Result<Interval, ConformalError> {
        match self.cfg.method {
            Method::Lscp => lscp_interval(
                features,
                site,
                model,
                &self.scores,
                &self.index,
                self.forest
                    .as_ref()
                    .expect("fit_conformal builds the forest for LSCP"),
                &self.cfg,
            ),
            Method::Gscp | Method::Slscp if self.sigma_calib.is_some() => {
                self.scaled_symmetric_interval(features, site, model)
            }
            Method::Gscp => gscp_interval(features, model, &self.scores, &self.cfg),
            Method::Slscp => {
                slscp_interval(features, site, model, &self.scores, &self.index, &self.cfg)
            }
            Method::Lcp => lcp_interval(
                features,
                model,
                &self.scores,
                &self.calib_features,
                &self.cfg,
            ),
            Method::Enbpi => {
                enbpi_interval(features, site, model, &self.scores, &self.index, &self.cfg)
            }
        }
    }

    /// The optional locally-scaled variant of GSCP/SLSCP: scores are divided
    /// by a k-NN median-absolute-residual scale at their own site, the
    /// quantile is taken on the scaled scores, and the half-width is blown
    /// back up by the scale at the test site.
    fn scaled_symmetric_interval(
        &self,
        features: &[f64],
        site: &Site,
        model: &dyn Predictor,
    ) -> Result<Interval, ConformalError> {
        let sigmas = self.sigma_calib.as_ref().expect("caller checked");
        let scaled = ScoreSet::new(
            self.scores
                .residuals()
                .iter()
                .zip(sigmas)
                .map(|(r, s)| r / s)
                .collect(),
        )?;
        let sigma_test = local_mad(&self.scores, &self.index, site.clone(), self.cfg.k, None);
        let base = match self.cfg.method {
            Method::Gscp => gscp_interval(features, model, &scaled, &self.cfg)?,
            _ => slscp_interval(features, site, model, &scaled, &self.index, &self.cfg)?,
        };
        let pred = model.predict(features)?;
        let q = 0.5 * base.width() * sigma_test;
        Ok(Interval::new(pred - q, pred + q))
    }

    /// Intervals for a batch of test observations (parallel when the
    /// `parallel` feature is on; output order always matches input order).
    pub fn intervals_batch(
        &self,
        test: &[Observation],
        model: &dyn Predictor,
    ) -> Result<Vec<Interval>, ConformalError> {
        par_map(test, |obs| self.interval(&obs.features, &obs.site, model))
            .into_iter()
            .collect()
    }
}
