//! Evaluation metrics, conformal hyperparameter selection, and the
//! coverage-gap-versus-sample-size trend.

use thiserror::Error;

use crate::conformal::{fit_conformal, ConformalError, Interval, Method, MethodConfig};
use crate::data::{kfold_indices, split_dataset, DataError, Observation, RngSpec, Site};
use crate::exec::par_map;
use crate::models::{
    default_bandwidths, fit_kernel_regression, select_bandwidth, ModelError, Predictor,
};
use crate::spatial::{grid_bin, SpatialError};
use crate::synth::{gen_scenario, ScenarioSpec, SynthError};

/// Errors raised by evaluation and selection.
#[derive(Debug, Error)]
pub enum EvalError {
    /// Intervals, truths and sites must be parallel and non-empty.
    #[error("intervals/truths/sites lengths disagree or are empty: {intervals}/{truths}/{sites}")]
    LengthMismatch {
        intervals: usize,
        truths: usize,
        sites: usize,
    },
    /// The candidate grid has no entries.
    #[error("candidate grid is empty")]
    EmptyGrid,
    /// The trend needs at least three strictly increasing sizes.
    #[error("n_list needs at least 3 strictly increasing sizes")]
    BadTrendSizes,
    /// At least one repetition per size is required.
    #[error("reps must be >= 1")]
    BadReps,
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Spatial(#[from] SpatialError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

/// Coverage and width within one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStat {
    /// Flattened cell id (axis 0 fastest).
    pub cell: usize,
    /// Per-axis cell coordinates.
    pub coords: Vec<usize>,
    /// Number of test points in the cell.
    pub count: usize,
    /// Fraction of those points covered by their interval.
    pub coverage: f64,
    /// Mean interval width in the cell.
    pub mean_width: f64,
}

/// Marginal and per-cell evaluation of a batch of intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// Number of test points.
    pub n: usize,
    /// Marginal empirical coverage.
    pub coverage: f64,
    /// Marginal mean interval width.
    pub mean_width: f64,
    /// Grid resolution the cells were computed at.
    pub cells_per_axis: usize,
    /// Non-empty cells in ascending id order. Empty when the test sites are
    /// degenerate along some axis (no rectangular grid exists); the marginal
    /// numbers are always present.
    pub cells: Vec<CellStat>,
}

/// Scores a batch of intervals against true responses, marginally and per
/// cell of a `g × g` grid over the test sites' bounding box.
pub fn evaluate(
    intervals: &[Interval],
    truths: &[f64],
    sites: &[Site],
    g: usize,
) -> Result<Metrics, EvalError> {
    let n = intervals.len();
    if n == 0 || truths.len() != n || sites.len() != n {
        return Err(EvalError::LengthMismatch {
            intervals: n,
            truths: truths.len(),
            sites: sites.len(),
        });
    }
    let covered = intervals
        .iter()
        .zip(truths)
        .filter(|(iv, &y)| iv.covers(y))
        .count();
    let coverage = covered as f64 / n as f64;
    let mean_width = intervals.iter().map(Interval::width).sum::<f64>() / n as f64;

    let cells = match grid_bin(sites, g) {
        Ok(binning) => {
            let mut count = vec![0usize; binning.n_cells()];
            let mut cov = vec![0usize; binning.n_cells()];
            let mut width = vec![0.0f64; binning.n_cells()];
            for (i, &cell) in binning.assignments.iter().enumerate() {
                count[cell] += 1;
                if intervals[i].covers(truths[i]) {
                    cov[cell] += 1;
                }
                width[cell] += intervals[i].width();
            }
            (0..binning.n_cells())
                .filter(|&c| count[c] > 0)
                .map(|c| CellStat {
                    cell: c,
                    coords: binning.cell_coords(c),
                    count: count[c],
                    coverage: cov[c] as f64 / count[c] as f64,
                    mean_width: width[c] / count[c] as f64,
                })
                .collect()
        }
        // A flat cloud (all sites equal along an axis) has no rectangular
        // grid; report marginal metrics with no cell breakdown.
        Err(SpatialError::DegenerateExtent { .. }) => Vec::new(),
        Err(e) => return Err(e.into()),
    };

    Ok(Metrics {
        n,
        coverage,
        mean_width,
        cells_per_axis: g,
        cells,
    })
}

/// One hyperparameter setting: a neighborhood size and/or a bandwidth,
/// depending on what the method consumes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub k: Option<usize>,
    pub h: Option<f64>,
}

impl std::fmt::Display for Candidate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (self.k, self.h) {
            (Some(k), Some(h)) => write!(f, "k={k}, h={h}"),
            (Some(k), None) => write!(f, "k={k}"),
            (None, Some(h)) => write!(f, "h={h}"),
            (None, None) => write!(f, "defaults"),
        }
    }
}

/// Expands the hyperparameter grid a method actually searches: k for
/// LSCP/EnbPI, h for LCP, the k × h product for SLSCP (k-major order), and a
/// single defaults entry for GSCP.
pub fn candidate_grid(method: Method, ks: &[usize], hs: &[f64]) -> Vec<Candidate> {
    match method {
        Method::Gscp => vec![Candidate { k: None, h: None }],
        Method::Lscp | Method::Enbpi => ks
            .iter()
            .map(|&k| Candidate {
                k: Some(k),
                h: None,
            })
            .collect(),
        Method::Lcp => hs
            .iter()
            .map(|&h| Candidate {
                k: None,
                h: Some(h),
            })
            .collect(),
        Method::Slscp => ks
            .iter()
            .flat_map(|&k| {
                hs.iter().map(move |&h| Candidate {
                    k: Some(k),
                    h: Some(h),
                })
            })
            .collect(),
    }
}

/// Cross-validated metrics of the selected candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub candidate: Candidate,
    /// Pooled holdout coverage across folds.
    pub coverage: f64,
    /// Pooled holdout mean width across folds.
    pub mean_width: f64,
}

/// K-fold selection of conformal hyperparameters on the calibration set (the
/// base model stays fixed). Among candidates whose pooled CV coverage is at
/// least `1 − α − 0.01` the narrowest wins; if none qualifies, the highest
/// coverage wins. Ties resolve by smaller k, then smaller h, so the outcome
/// does not depend on grid order.
pub fn cv_select(
    calib: &[Observation],
    model: &dyn Predictor,
    template: &MethodConfig,
    candidates: &[Candidate],
    folds: usize,
    rng: &RngSpec,
) -> Result<CvResult, EvalError> {
    if candidates.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    template.validate()?;
    let idx: Vec<usize> = (0..calib.len()).collect();
    let fold_sets = kfold_indices(&idx, folds, rng)?;

    let results: Vec<CvResult> = par_map(candidates, |cand| {
        let mut cfg = template.clone();
        if let Some(k) = cand.k {
            cfg.k = k;
        }
        if let Some(h) = cand.h {
            cfg.bandwidth = h;
        }
        let mut covered = 0usize;
        let mut width_sum = 0.0;
        let mut total = 0usize;
        for (fit_idx, holdout_idx) in &fold_sets {
            let fit_obs: Vec<Observation> = fit_idx.iter().map(|&i| calib[i].clone()).collect();
            let holdout: Vec<Observation> = holdout_idx.iter().map(|&i| calib[i].clone()).collect();
            let fitted = fit_conformal(&cfg, model, &fit_obs)?;
            let intervals = fitted.intervals_batch(&holdout, model)?;
            for (iv, obs) in intervals.iter().zip(&holdout) {
                if iv.covers(obs.response) {
                    covered += 1;
                }
                width_sum += iv.width();
            }
            total += holdout.len();
        }
        Ok(CvResult {
            candidate: *cand,
            coverage: covered as f64 / total as f64,
            mean_width: width_sum / total as f64,
        })
    })
    .into_iter()
    .collect::<Result<_, EvalError>>()?;

    let floor = 1.0 - template.alpha - 0.01;
    let best = results
        .into_iter()
        .reduce(|best, other| {
            if better(&other, &best, floor) {
                other
            } else {
                best
            }
        })
        .expect("candidate grid is non-empty");
    Ok(best)
}

/// Strict "is `a` preferable to `b`" under the coverage-floor rule.
fn better(a: &CvResult, b: &CvResult, floor: f64) -> bool {
    let (fa, fb) = (a.coverage >= floor, b.coverage >= floor);
    if fa != fb {
        return fa;
    }
    // Primary criterion: width among feasible candidates, coverage otherwise.
    let (pa, pb) = if fa {
        (a.mean_width, b.mean_width)
    } else {
        (-a.coverage, -b.coverage)
    };
    let ka = a.candidate.k.unwrap_or(0);
    let kb = b.candidate.k.unwrap_or(0);
    let ha = a.candidate.h.unwrap_or(0.0);
    let hb = b.candidate.h.unwrap_or(0.0);
    (pa, ka, ha) < (pb, kb, hb)
}

/// Mean absolute coverage gap at one sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendPoint {
    pub n: usize,
    /// Mean over repetitions of `|empirical coverage − (1 − α)|`.
    pub mean_abs_gap: f64,
}

/// Coverage-gap trend across sample sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendReport {
    pub alpha: f64,
    pub points: Vec<TrendPoint>,
    /// Spearman rank correlation between n and the mean gap; negative values
    /// mean the gap shrinks as samples grow.
    pub spearman_rho: f64,
}

/// Runs the full synthetic pipeline (generate, split 40/40/20, bandwidth
/// selection, conformal fit, test intervals) at each size in `n_list`,
/// `reps` times with independent seeds, and reports how the absolute
/// coverage gap moves with n.
///
/// Conformal hyperparameters stay fixed at the template's values across
/// sizes so the trend isolates the effect of n.
pub fn coverage_gap_trend(
    scenario_id: u8,
    template: &MethodConfig,
    n_list: &[usize],
    reps: usize,
    rng: &RngSpec,
) -> Result<TrendReport, EvalError> {
    if n_list.len() < 3 || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EvalError::BadTrendSizes);
    }
    if reps == 0 {
        return Err(EvalError::BadReps);
    }
    template.validate()?;

    let mut points = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let mut gap_sum = 0.0;
        for rep in 0..reps {
            let run = rng.derive(&format!("trend/n{n}/rep{rep}"));
            let mut spec = ScenarioSpec::new(scenario_id, n, 0);
            spec.rng = run;
            let data = gen_scenario(&spec)?;
            let split = split_dataset(data, (0.4, 0.4, 0.2), &run)?;
            let train = split.train_set();
            let calib = split.calib_set();
            let test = split.test_set();

            let bw = select_bandwidth(&train, &default_bandwidths(&train), 5, &run)?;
            let model = fit_kernel_regression(&train, bw)?;
            let mut cfg = template.clone();
            cfg.forest.rng = run.derive("forest");
            let fitted = fit_conformal(&cfg, &model, &calib)?;
            let intervals = fitted.intervals_batch(&test, &model)?;
            let covered = intervals
                .iter()
                .zip(&test)
                .filter(|(iv, o)| iv.covers(o.response))
                .count();
            let coverage = covered as f64 / test.len() as f64;
            gap_sum += (coverage - (1.0 - template.alpha)).abs();
        }
        points.push(TrendPoint {
            n,
            mean_abs_gap: gap_sum / reps as f64,
        });
    }

    let xs: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean_abs_gap).collect();
    let spearman_rho = spearman_rho(&xs, &ys);
    Ok(TrendReport {
        alpha: template.alpha,
        points,
        spearman_rho,
    })
}

/// Spearman rank correlation with average ranks for ties. Returns 0 when
/// either side has no rank variation.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len(), "rank inputs must be parallel");
    assert!(xs.len() >= 2, "need at least two points");
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        // 1-based ranks; a tied block shares the average of its positions.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    ranks
}
