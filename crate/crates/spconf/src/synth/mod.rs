//! Synthetic data generation: Matérn covariance, Gaussian-process sampling by
//! dense Cholesky, and the three benchmark scenarios.

pub mod bessel;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::data::{Observation, RngSpec, Site};

pub use bessel::{bessel_k, bessel_k_integral};

/// Errors raised by the synthetic generators.
#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    /// Outside the supported Bessel window `[0.05, 10] × [1e-8, 100]`.
    #[error("bessel_k domain: nu = {nu}, x = {x} outside [0.05, 10] x [1e-8, 100]")]
    Domain { nu: f64, x: f64 },
    /// An internal series or continued fraction failed to converge.
    #[error("bessel_k did not converge for nu = {nu}, x = {x}")]
    NoConvergence { nu: f64, x: f64 },
    /// Covariance parameters outside their valid ranges.
    #[error("invalid Matérn parameters: {0}")]
    BadParams(&'static str),
    /// Cholesky failed even after the jitter escalation ladder.
    #[error("covariance not positive definite even with jitter {max_jitter:e}")]
    CholeskyFailure { max_jitter: f64 },
    /// Scenario id must be 1, 2, or 3.
    #[error("unknown scenario id {0}, expected 1..=3")]
    BadScenario(u8),
    /// Too few or too many points for GP generation.
    #[error("size {n} outside supported range {min}..={max}")]
    BadSize { n: usize, min: usize, max: usize },
}

/// Largest site count for which a dense covariance factorization is allowed.
pub const MAX_GP_SITES: usize = 20_000;

/// Matérn covariance parameters: marginal variance σ², range φ, smoothness κ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaternParams {
    pub variance: f64,
    pub range: f64,
    pub smoothness: f64,
}

impl MaternParams {
    /// Validates σ² ≥ 0, φ > 0 and κ within the supported Bessel window.
    pub fn new(variance: f64, range: f64, smoothness: f64) -> Result<Self, SynthError> {
        if !(variance.is_finite() && variance >= 0.0) {
            return Err(SynthError::BadParams("variance must be finite and >= 0"));
        }
        if !(range.is_finite() && range > 0.0) {
            return Err(SynthError::BadParams("range must be finite and > 0"));
        }
        if !(bessel::NU_MIN..=bessel::NU_MAX).contains(&smoothness) {
            return Err(SynthError::BadParams("smoothness must lie in [0.05, 10]"));
        }
        Ok(Self {
            variance,
            range,
            smoothness,
        })
    }
}

impl Default for MaternParams {
    /// The benchmark setting: σ² = 1, φ = 0.1, κ = 0.7.
    fn default() -> Self {
        Self {
            variance: 1.0,
            range: 0.1,
            smoothness: 0.7,
        }
    }
}

/// Matérn covariance at distance `d`:
/// `C(d) = σ² · 2^{1−κ}/Γ(κ) · (d/φ)^κ · K_κ(d/φ)`, with `C(0) = σ²`.
///
/// Below the Bessel window (`d/φ < 1e-8`) the value is within ~1e-11 of σ²
/// and is returned as σ²; beyond it (`d/φ > 100`) the tail is below 1e-40·σ²
/// and is returned as 0.
pub fn matern_cov(dist: f64, params: &MaternParams) -> f64 {
    assert!(
        dist.is_finite() && dist >= 0.0,
        "distance must be finite and >= 0"
    );
    let u = dist / params.range;
    if u < bessel::X_MIN {
        return params.variance;
    }
    if u > bessel::X_MAX {
        return 0.0;
    }
    let kappa = params.smoothness;
    let norm = (1.0 - kappa).exp2() / bessel::gamma(kappa);
    let k = bessel_k(kappa, u).expect("matern_cov arguments validated against the bessel window");
    params.variance * norm * u.powf(kappa) * k
}

/// A Cholesky factor of a Matérn covariance over fixed sites, reusable for
/// several independent draws.
#[derive(Debug, Clone)]
pub struct GpSampler {
    /// Lower factor; `None` when σ² = 0 (degenerate, all-zero field).
    factor: Option<DMatrix<f64>>,
    jitter: f64,
    n: usize,
}

impl GpSampler {
    /// Builds the covariance matrix and factors it, escalating a diagonal
    /// jitter from `1e-10·σ²` by factors of 10 (at most 5 escalations) until
    /// the factorization succeeds.
    pub fn new(sites: &[Site], params: &MaternParams) -> Result<Self, SynthError> {
        let n = sites.len();
        if n == 0 || n > MAX_GP_SITES {
            return Err(SynthError::BadSize {
                n,
                min: 1,
                max: MAX_GP_SITES,
            });
        }
        MaternParams::new(params.variance, params.range, params.smoothness)?;
        if params.variance == 0.0 {
            return Ok(Self {
                factor: None,
                jitter: 0.0,
                n,
            });
        }

        let mut cov = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let c = matern_cov(sites[i].distance(&sites[j]), params);
                cov[(i, j)] = c;
                cov[(j, i)] = c;
            }
        }

        let base = 1e-10 * params.variance;
        let mut jitter = base;
        for _ in 0..=5 {
            let mut attempt = cov.clone();
            for i in 0..n {
                attempt[(i, i)] += jitter;
            }
            if let Some(chol) = attempt.cholesky() {
                return Ok(Self {
                    factor: Some(chol.unpack()),
                    jitter,
                    n,
                });
            }
            jitter *= 10.0;
        }
        Err(SynthError::CholeskyFailure {
            max_jitter: jitter / 10.0,
        })
    }

    /// Draws one field as `L·u` with `u` i.i.d. standard normal from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: Vec<f64> = (0..self.n).map(|_| rng.sample(StandardNormal)).collect();
        match &self.factor {
            None => vec![0.0; self.n],
            Some(l) => {
                let v = l * DMatrix::from_column_slice(self.n, 1, &u);
                v.column(0).iter().copied().collect()
            }
        }
    }

    /// Diagonal jitter the factorization ended up using.
    pub fn jitter_used(&self) -> f64 {
        self.jitter
    }
}

/// Draws one mean-zero Matérn GP realization over `sites`, using the `"gp"`
/// substream of `rng`.
pub fn sample_gp(
    sites: &[Site],
    params: &MaternParams,
    rng: &RngSpec,
) -> Result<Vec<f64>, SynthError> {
    Ok(GpSampler::new(sites, params)?.sample(&mut rng.stream("gp")))
}

/// Recipe for one synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    /// Scenario id: 1 additive, 2 multiplicative, 3 site-modulated additive.
    pub id: u8,
    /// Number of observations (≥ 20).
    pub n: usize,
    /// Covariance of the signal field X.
    pub x_params: MaternParams,
    /// Covariance of the error field ε.
    pub eps_params: MaternParams,
    pub rng: RngSpec,
}

impl ScenarioSpec {
    /// Benchmark defaults: both fields Matérn(σ² = 1, φ = 0.1, κ = 0.7).
    pub fn new(id: u8, n: usize, seed: u64) -> Self {
        Self {
            id,
            n,
            x_params: MaternParams::default(),
            eps_params: MaternParams::default(),
            rng: RngSpec::new(seed),
        }
    }
}

/// Generates one synthetic dataset.
///
/// Sites are i.i.d. uniform on the unit square (substream `"sites"`); X and ε
/// are independent GP draws (substreams `"gp/x"`, `"gp/eps"`); the response is
///
/// * scenario 1: `Y = X + ε`
/// * scenario 2: `Y = X · |ε|`
/// * scenario 3: `Y = X + sin(‖s‖₂) · ε`
///
/// and each observation carries features `(X(s), s₁, s₂)`. When the two
/// covariances coincide the factorization is computed once and reused; the
/// draws are unchanged either way because each field has its own substream.
pub fn gen_scenario(spec: &ScenarioSpec) -> Result<Vec<Observation>, SynthError> {
    if !(1..=3).contains(&spec.id) {
        return Err(SynthError::BadScenario(spec.id));
    }
    if spec.n < 20 || spec.n > MAX_GP_SITES {
        return Err(SynthError::BadSize {
            n: spec.n,
            min: 20,
            max: MAX_GP_SITES,
        });
    }

    let mut site_rng = spec.rng.stream("sites");
    let sites: Vec<Site> = (0..spec.n)
        .map(|_| Site::xy(site_rng.random::<f64>(), site_rng.random::<f64>()))
        .collect();

    let x_sampler = GpSampler::new(&sites, &spec.x_params)?;
    let x = x_sampler.sample(&mut spec.rng.stream("gp/x"));
    let eps = if spec.eps_params == spec.x_params {
        x_sampler.sample(&mut spec.rng.stream("gp/eps"))
    } else {
        GpSampler::new(&sites, &spec.eps_params)?.sample(&mut spec.rng.stream("gp/eps"))
    };

    sites
        .into_iter()
        .zip(x)
        .zip(eps)
        .map(|((site, xi), ei)| {
            let y = match spec.id {
                1 => xi + ei,
                2 => xi * ei.abs(),
                _ => {
                    let norm = site.distance(&Site::xy(0.0, 0.0));
                    xi + norm.sin() * ei
                }
            };
            let features = vec![xi, site.coords()[0], site.coords()[1]];
            Observation::new(site, features, y)
                .map_err(|_| SynthError::BadParams("non-finite draw"))
        })
        .collect()
}
