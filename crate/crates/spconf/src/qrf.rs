//! Quantile regression forest: CART regression trees grown on variance
//! reduction, with per-leaf membership retained so any conditional quantile
//! can be read off as a weighted empirical quantile of the training targets
//! (Meinshausen's construction).

use thiserror::Error;

use crate::data::RngSpec;
use crate::exec::par_map_idx;
use rand::Rng;

/// Errors raised by forest fitting and queries.
#[derive(Debug, Error, PartialEq)]
pub enum QrfError {
    /// Need at least two training pairs to grow a tree.
    #[error("need at least 2 training pairs, got {0}")]
    TooFewPairs(usize),
    /// Query or pair feature length differs from the trained length.
    #[error("feature length {got} does not match trained length {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    /// Invalid hyperparameters.
    #[error("invalid forest parameters: {0}")]
    BadParams(&'static str),
    /// A weight vector failed validation.
    #[error("invalid weight vector: {0}")]
    BadWeights(&'static str),
}

/// Forest hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    /// Number of trees (default 200).
    pub n_trees: usize,
    /// Minimum rows per leaf; nodes under `2·min_leaf` rows stop (default 5).
    pub min_leaf: usize,
    /// Features tried per split; `None` means `⌈dim/3⌉` (default `None`).
    pub mtry: Option<usize>,
    /// Bootstrap rows per tree (default true). Points a tree never saw get
    /// zero weight from that tree; in-bag multiplicity is kept, so each
    /// tree's weights renormalize over its own bag.
    pub bootstrap: bool,
    /// Per-tree streams derive from this spec (`"tree"`, indexed).
    pub rng: RngSpec,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            min_leaf: 5,
            mtry: None,
            bootstrap: true,
            rng: RngSpec::new(0),
        }
    }
}

/// Normalized, non-negative weights over a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    weights: Vec<f64>,
}

impl WeightVector {
    /// Accepts weights that are non-negative and sum to 1 within 1e-9.
    pub fn new(weights: Vec<f64>) -> Result<Self, QrfError> {
        if weights.is_empty() {
            return Err(QrfError::BadWeights("empty"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(QrfError::BadWeights("negative or non-finite entry"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(QrfError::BadWeights("does not sum to 1"));
        }
        Ok(Self { weights })
    }

    /// Scales raw non-negative weights to sum to 1; `None` when they are all
    /// zero (or invalid), which callers surface as an all-zero-weights error.
    pub fn normalized(raw: Vec<f64>) -> Option<Self> {
        if raw.is_empty() || raw.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return None;
        }
        let sum: f64 = raw.iter().sum();
        if sum <= 0.0 {
            return None;
        }
        Some(Self {
            weights: raw.into_iter().map(|w| w / sum).collect(),
        })
    }

    /// Equal weight on each of `n` entries.
    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform weights need n > 0");
        Self {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Interior node or leaf. Leaves set `left == NO_CHILD` and reuse `feature`
/// as the index into the tree's leaf table.
#[derive(Debug, Clone, Copy)]
struct Node {
    feature: u32,
    threshold: f64,
    left: u32,
    right: u32,
}

const NO_CHILD: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Leaf {
    /// Distinct training row → bootstrap multiplicity.
    members: Vec<(u32, u32)>,
    /// Total rows in the leaf (sum of multiplicities).
    total: f64,
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
    leaves: Vec<Leaf>,
}

impl Tree {
    fn leaf_for(&self, x: &[f64]) -> &Leaf {
        let mut at = 0u32;
        loop {
            let node = self.nodes[at as usize];
            if node.left == NO_CHILD {
                return &self.leaves[node.feature as usize];
            }
            at = if x[node.feature as usize] < node.threshold {
                node.left
            } else {
                node.right
            };
        }
    }
}

/// A fitted quantile regression forest.
#[derive(Debug, Clone)]
pub struct QuantileForest {
    trees: Vec<Tree>,
    targets: Vec<f64>,
    /// Training rows sorted by `(target, row index)` for quantile scans.
    sorted_order: Vec<u32>,
    dim: usize,
}

impl QuantileForest {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_train(&self) -> usize {
        self.targets.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.dim
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }
}

struct TreeBuilder<'a> {
    x: &'a [f64], // row-major, n × dim
    y: &'a [f64],
    dim: usize,
    mtry: usize,
    min_leaf: usize,
}

impl TreeBuilder<'_> {
    fn build(&self, rows: &mut [u32], rng: &mut impl Rng) -> Tree {
        let mut tree = Tree {
            nodes: Vec::new(),
            leaves: Vec::new(),
        };
        let mut feat_scratch: Vec<u32> = (0..self.dim as u32).collect();
        self.grow(rows, rng, &mut tree, &mut feat_scratch);
        tree
    }

    /// Grows the subtree for `rows`, returning its node id. Children are
    /// built left before right so per-node rng draws have a fixed order.
    fn grow(
        &self,
        rows: &mut [u32],
        rng: &mut impl Rng,
        tree: &mut Tree,
        feats: &mut [u32],
    ) -> u32 {
        let id = tree.nodes.len() as u32;
        tree.nodes.push(Node {
            feature: 0,
            threshold: 0.0,
            left: NO_CHILD,
            right: NO_CHILD,
        });

        if let Some((feature, threshold, split_at)) = self.best_split(rows, rng, feats) {
            // Partition rows around the chosen threshold; order within each
            // side is irrelevant because leaves aggregate multiplicities.
            let mut left_rows: Vec<u32> = Vec::with_capacity(split_at);
            let mut right_rows: Vec<u32> = Vec::with_capacity(rows.len() - split_at);
            for &r in rows.iter() {
                if self.x[r as usize * self.dim + feature as usize] < threshold {
                    left_rows.push(r);
                } else {
                    right_rows.push(r);
                }
            }
            debug_assert_eq!(left_rows.len(), split_at);
            let left = self.grow(&mut left_rows, rng, tree, feats);
            let right = self.grow(&mut right_rows, rng, tree, feats);
            tree.nodes[id as usize] = Node {
                feature,
                threshold,
                left,
                right,
            };
        } else {
            let leaf_id = tree.leaves.len() as u32;
            let mut members: Vec<(u32, u32)> = Vec::new();
            let mut sorted = rows.to_vec();
            sorted.sort_unstable();
            for &r in &sorted {
                match members.last_mut() {
                    Some((idx, count)) if *idx == r => *count += 1,
                    _ => members.push((r, 1)),
                }
            }
            tree.leaves.push(Leaf {
                members,
                total: rows.len() as f64,
            });
            tree.nodes[id as usize].feature = leaf_id;
        }
        id
    }

    /// Best `(feature, threshold, left_count)` by squared-error reduction
    /// over `mtry` sampled features, or `None` if the node must become a
    /// leaf. Candidate features are scanned in ascending index order and
    /// thresholds in ascending value order with strictly-better acceptance,
    /// so ties resolve to the lowest feature, then the lowest threshold.
    fn best_split(
        &self,
        rows: &[u32],
        rng: &mut impl Rng,
        feats: &mut [u32],
    ) -> Option<(u32, f64, usize)> {
        let n = rows.len();
        if n < 2 * self.min_leaf {
            return None;
        }
        let first_y = self.y[rows[0] as usize];
        if rows.iter().all(|&r| self.y[r as usize] == first_y) {
            return None; // zero variance
        }

        // Partial Fisher–Yates: the first mtry entries become the candidates.
        for i in 0..self.mtry {
            let j = rng.random_range(i..feats.len());
            feats.swap(i, j);
        }
        let mut candidates: Vec<u32> = feats[..self.mtry].to_vec();
        candidates.sort_unstable();

        let mut vals: Vec<(f64, f64)> = Vec::with_capacity(n);
        let mut best: Option<(f64, u32, f64, usize)> = None; // (gain, feature, threshold, left_count)

        let total_sum: f64 = rows.iter().map(|&r| self.y[r as usize]).sum();
        let total_sq: f64 = rows
            .iter()
            .map(|&r| self.y[r as usize] * self.y[r as usize])
            .sum();
        let parent_sse = total_sq - total_sum * total_sum / n as f64;

        for &f in &candidates {
            vals.clear();
            vals.extend(rows.iter().map(|&r| {
                (
                    self.x[r as usize * self.dim + f as usize],
                    self.y[r as usize],
                )
            }));
            vals.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

            let mut sum_l = 0.0;
            let mut sq_l = 0.0;
            for i in 1..n {
                sum_l += vals[i - 1].1;
                sq_l += vals[i - 1].1 * vals[i - 1].1;
                if i < self.min_leaf || n - i < self.min_leaf || vals[i - 1].0 == vals[i].0 {
                    continue;
                }
                let n_l = i as f64;
                let n_r = (n - i) as f64;
                let sum_r = total_sum - sum_l;
                let sq_r = total_sq - sq_l;
                let sse = (sq_l - sum_l * sum_l / n_l) + (sq_r - sum_r * sum_r / n_r);
                let gain = parent_sse - sse;
                if best.map_or(gain > 0.0, |(g, ..)| gain > g) {
                    let a = vals[i - 1].0;
                    let b = vals[i].0;
                    let mut threshold = 0.5 * (a + b);
                    // Midpoint can round down onto `a`; bump to `b` so the
                    // `< threshold` rule reproduces the scanned partition.
                    if threshold <= a {
                        threshold = b;
                    }
                    best = Some((gain, f, threshold, i));
                }
            }
        }
        best.map(|(_, f, t, i)| (f, t, i))
    }
}

/// Fits a quantile regression forest on `(features, target)` pairs.
///
/// Each tree gets its own substream (`rng.indexed_stream("tree", t)`) used
/// for its bootstrap draw and per-node feature sampling, so refits are
/// reproducible and independent of tree scheduling.
pub fn fit_qrf(
    pairs: &[(Vec<f64>, f64)],
    params: &ForestParams,
) -> Result<QuantileForest, QrfError> {
    let n = pairs.len();
    if n < 2 {
        return Err(QrfError::TooFewPairs(n));
    }
    let dim = pairs[0].0.len();
    if dim == 0 {
        return Err(QrfError::BadParams(
            "features must have at least one column",
        ));
    }
    for (x, y) in pairs {
        if x.len() != dim {
            return Err(QrfError::DimensionMismatch {
                expected: dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) || !y.is_finite() {
            return Err(QrfError::BadParams("non-finite feature or target"));
        }
    }
    if params.n_trees == 0 {
        return Err(QrfError::BadParams("n_trees must be >= 1"));
    }
    if params.min_leaf == 0 {
        return Err(QrfError::BadParams("min_leaf must be >= 1"));
    }
    let mtry = match params.mtry {
        Some(m) if m == 0 || m > dim => return Err(QrfError::BadParams("mtry must be in 1..=dim")),
        Some(m) => m,
        None => dim.div_ceil(3),
    };

    let mut x = Vec::with_capacity(n * dim);
    let mut y = Vec::with_capacity(n);
    for (feat, target) in pairs {
        x.extend_from_slice(feat);
        y.push(*target);
    }

    let builder = TreeBuilder {
        x: &x,
        y: &y,
        dim,
        mtry,
        min_leaf: params.min_leaf,
    };
    let trees = par_map_idx(params.n_trees, |t| {
        let mut rng = params.rng.indexed_stream("tree", t as u64);
        let mut rows: Vec<u32> = if params.bootstrap {
            (0..n).map(|_| rng.random_range(0..n) as u32).collect()
        } else {
            (0..n as u32).collect()
        };
        builder.build(&mut rows, &mut rng)
    });

    let mut sorted_order: Vec<u32> = (0..n as u32).collect();
    sorted_order.sort_unstable_by(|&a, &b| y[a as usize].total_cmp(&y[b as usize]).then(a.cmp(&b)));

    Ok(QuantileForest {
        trees,
        targets: y,
        sorted_order,
        dim,
    })
}

/// Forest weights at a query point:
/// `w_i = (1/n_trees) · Σ_trees multiplicity_i(leaf(x)) / |leaf(x)|`.
/// The result is normalized (each tree contributes exactly 1/n_trees in
/// total mass, spread over its leaf's in-bag points).
pub fn qrf_weights(forest: &QuantileForest, features: &[f64]) -> Result<WeightVector, QrfError> {
    if features.len() != forest.dim {
        return Err(QrfError::DimensionMismatch {
            expected: forest.dim,
            got: features.len(),
        });
    }
    let mut weights = vec![0.0; forest.targets.len()];
    for tree in &forest.trees {
        let leaf = tree.leaf_for(features);
        for &(idx, count) in &leaf.members {
            weights[idx as usize] += count as f64 / leaf.total;
        }
    }
    let inv = 1.0 / forest.trees.len() as f64;
    for w in &mut weights {
        *w *= inv;
    }
    Ok(WeightVector { weights })
}

/// Conditional quantile at level `p ∈ [0, 1]`: the weighted empirical
/// quantile `inf{y : F̂(y | x) ≥ p}` of the training targets under
/// [`qrf_weights`]. `p = 0` returns the smallest positively-weighted target.
pub fn qrf_quantile(forest: &QuantileForest, features: &[f64], p: f64) -> Result<f64, QrfError> {
    let weights = qrf_weights(forest, features)?;
    Ok(quantile_from_weights(forest, &weights, p))
}

/// Quantile scan against precomputed weights; lets callers evaluate many
/// levels per query without recomputing leaf memberships.
pub fn quantile_from_weights(forest: &QuantileForest, weights: &WeightVector, p: f64) -> f64 {
    assert!(
        (0.0..=1.0).contains(&p),
        "quantile level must lie in [0, 1]"
    );
    assert_eq!(
        weights.len(),
        forest.targets.len(),
        "weights must cover the training set"
    );
    let w = weights.as_slice();
    let mut cum = 0.0;
    let mut last_positive = f64::NAN;
    for &i in &forest.sorted_order {
        let wi = w[i as usize];
        if wi > 0.0 {
            last_positive = forest.targets[i as usize];
            cum += wi;
            if p == 0.0 || cum >= p - 1e-12 {
                return forest.targets[i as usize];
            }
        }
    }
    // Accumulated mass fell short of p by rounding: return the largest
    // positively-weighted target.
    last_positive
}
