//! Core data model: sites, observations, deterministic splits, and seeded
//! random-number streams.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Errors raised by dataset construction and splitting.
#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    /// Fewer observations than the operation can meaningfully split.
    #[error("dataset has {n} observations, need at least {min}")]
    EmptyDataset { n: usize, min: usize },
    /// Split ratios must be positive and sum to 1 (tolerance 1e-9).
    #[error("split ratios {0:?} must be positive and sum to 1")]
    BadRatios((f64, f64, f64)),
    /// Not enough points for the requested fold count.
    #[error("have {have} points, need at least {need}")]
    TooFewPoints { have: usize, need: usize },
    /// A coordinate, feature, or response was NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    /// Observations in one dataset must share a feature length.
    #[error("feature length {got} does not match expected {expected}")]
    FeatureLength { expected: usize, got: usize },
}

/// A spatial location with finite coordinates (any dimension ≥ 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Site {
    coords: Vec<f64>,
}

impl Site {
    /// Builds a site, rejecting empty or non-finite coordinate vectors.
    pub fn new(coords: Vec<f64>) -> Result<Self, DataError> {
        if coords.is_empty() || coords.iter().any(|c| !c.is_finite()) {
            return Err(DataError::NonFinite("site coordinates"));
        }
        Ok(Self { coords })
    }

    /// Convenience constructor for the planar case.
    ///
    /// Panics on non-finite input; use [`Site::new`] for fallible paths.
    pub fn xy(x: f64, y: f64) -> Self {
        assert!(
            x.is_finite() && y.is_finite(),
            "site coordinates must be finite"
        );
        Self { coords: vec![x, y] }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Euclidean distance to another site of the same dimension.
    pub fn distance(&self, other: &Site) -> f64 {
        self.distance_sq(other).sqrt()
    }

    pub(crate) fn distance_sq(&self, other: &Site) -> f64 {
        assert_eq!(self.dim(), other.dim(), "site dimensions must match");
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// One record: a location, a feature vector, and a scalar response.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub site: Site,
    pub features: Vec<f64>,
    pub response: f64,
}

impl Observation {
    /// Builds an observation, rejecting empty features and non-finite values.
    pub fn new(site: Site, features: Vec<f64>, response: f64) -> Result<Self, DataError> {
        if features.is_empty() || features.iter().any(|f| !f.is_finite()) {
            return Err(DataError::NonFinite("features"));
        }
        if !response.is_finite() {
            return Err(DataError::NonFinite("response"));
        }
        Ok(Self {
            site,
            features,
            response,
        })
    }
}

/// A dataset partitioned into train / calibration / test index sets.
///
/// The three index lists are disjoint, sorted ascending, and together cover
/// every observation exactly once.
#[derive(Debug, Clone)]
pub struct SplitDataset {
    observations: Vec<Observation>,
    train_idx: Vec<usize>,
    calib_idx: Vec<usize>,
    test_idx: Vec<usize>,
}

impl SplitDataset {
    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn train_idx(&self) -> &[usize] {
        &self.train_idx
    }

    pub fn calib_idx(&self) -> &[usize] {
        &self.calib_idx
    }

    pub fn test_idx(&self) -> &[usize] {
        &self.test_idx
    }

    /// Clones the training observations into a contiguous vector.
    pub fn train_set(&self) -> Vec<Observation> {
        self.gather(&self.train_idx)
    }

    /// Clones the calibration observations into a contiguous vector.
    pub fn calib_set(&self) -> Vec<Observation> {
        self.gather(&self.calib_idx)
    }

    /// Clones the test observations into a contiguous vector.
    pub fn test_set(&self) -> Vec<Observation> {
        self.gather(&self.test_idx)
    }

    fn gather(&self, idx: &[usize]) -> Vec<Observation> {
        idx.iter().map(|&i| self.observations[i].clone()).collect()
    }
}

/// Seed plus named-substream derivation.
///
/// Substreams are keyed by SHA-256 over `(seed, label[, index])`, so each
/// label yields an independent ChaCha12 generator and adding a new consumer
/// label never changes the draws seen by existing ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngSpec {
    seed: u64,
}

impl RngSpec {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// An independent generator for the given label.
    pub fn stream(&self, label: &str) -> ChaCha12Rng {
        ChaCha12Rng::from_seed(self.digest(label, None))
    }

    /// An independent generator for the given label and index, for loops that
    /// need one stream per work item (trees, replicates, ...).
    pub fn indexed_stream(&self, label: &str, index: u64) -> ChaCha12Rng {
        ChaCha12Rng::from_seed(self.digest(label, Some(index)))
    }

    /// A child spec whose own substreams are independent of the parent's.
    pub fn derive(&self, label: &str) -> RngSpec {
        let bytes = self.digest(label, None);
        RngSpec {
            seed: u64::from_le_bytes(bytes[..8].try_into().unwrap()),
        }
    }

    fn digest(&self, label: &str, index: Option<u64>) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update([label.len() as u8]);
        hasher.update(label.as_bytes());
        if let Some(i) = index {
            hasher.update(i.to_le_bytes());
        }
        hasher.finalize().into()
    }
}

/// Randomly partitions `observations` into train/calibration/test sets.
///
/// Sizes are `⌊r_train·n⌋` and `⌊r_calib·n⌋`, with every remaining point
/// assigned to test. Requires `n ≥ 10`, positive ratios summing to 1
/// (tolerance 1e-9), and a constant feature length across observations.
/// The permutation comes from the `"split"` substream of `rng`, so the split
/// is a pure function of the seed.
pub fn split_dataset(
    observations: Vec<Observation>,
    ratios: (f64, f64, f64),
    rng: &RngSpec,
) -> Result<SplitDataset, DataError> {
    let n = observations.len();
    if n < 10 {
        return Err(DataError::EmptyDataset { n, min: 10 });
    }
    let (rt, rc, rs) = ratios;
    let sum = rt + rc + rs;
    if !(rt > 0.0 && rc > 0.0 && rs > 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(DataError::BadRatios(ratios));
    }
    let feat_len = observations[0].features.len();
    for obs in &observations {
        if obs.features.len() != feat_len {
            return Err(DataError::FeatureLength {
                expected: feat_len,
                got: obs.features.len(),
            });
        }
    }

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng.stream("split"));

    let n_train = (rt * n as f64).floor() as usize;
    let n_calib = (rc * n as f64).floor() as usize;
    let mut train_idx: Vec<usize> = perm[..n_train].to_vec();
    let mut calib_idx: Vec<usize> = perm[n_train..n_train + n_calib].to_vec();
    let mut test_idx: Vec<usize> = perm[n_train + n_calib..].to_vec();
    train_idx.sort_unstable();
    calib_idx.sort_unstable();
    test_idx.sort_unstable();

    Ok(SplitDataset {
        observations,
        train_idx,
        calib_idx,
        test_idx,
    })
}

/// One cross-validation fold: `(fit, holdout)` index lists.
pub type FoldIndices = (Vec<usize>, Vec<usize>);

/// Splits `indices` into `k` cross-validation folds.
///
/// Returns `(fit, holdout)` pairs: holdout `j` is the `j`-th fold, fit is the
/// union of the others. Fold sizes differ by at most one, with the first
/// `|indices| mod k` folds taking the extra element. The shuffle comes from
/// the `"kfold"` substream of `rng`; callers wanting different folds should
/// pass a derived spec.
pub fn kfold_indices(
    indices: &[usize],
    k: usize,
    rng: &RngSpec,
) -> Result<Vec<FoldIndices>, DataError> {
    let n = indices.len();
    if k < 2 || n < k {
        return Err(DataError::TooFewPoints {
            have: n,
            need: k.max(2),
        });
    }

    let mut shuffled = indices.to_vec();
    shuffled.shuffle(&mut rng.stream("kfold"));

    let base = n / k;
    let extra = n % k;
    let mut folds: Vec<Vec<usize>> = Vec::with_capacity(k);
    let mut start = 0;
    for j in 0..k {
        let len = base + usize::from(j < extra);
        folds.push(shuffled[start..start + len].to_vec());
        start += len;
    }

    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let mut holdout = folds[j].clone();
        let mut fit: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != j)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        holdout.sort_unstable();
        fit.sort_unstable();
        out.push((fit, holdout));
    }
    Ok(out)
}
