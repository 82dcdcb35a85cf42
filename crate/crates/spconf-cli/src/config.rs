//! Experiment manifests.
//!
//! A manifest is a flat text file of `key = value` lines (`#` starts a
//! comment, list values are comma-separated). Command-line flags override
//! file values, and every run starts from the documented defaults, so a
//! manifest only needs the keys it changes.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use spconf::synth::MAX_GP_SITES;
use spconf::Method;

use crate::CliError;

/// What a run does; normally implied by the subcommand. A manifest may pin
/// `mode` to guard against being run under the wrong subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Synthetic,
    Real,
    TheoryTrend,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Synthetic => "synthetic",
            Mode::Real => "real",
            Mode::TheoryTrend => "theory-trend",
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "synthetic" => Ok(Mode::Synthetic),
            "real" => Ok(Mode::Real),
            "theory-trend" => Ok(Mode::TheoryTrend),
            other => Err(format!(
                "unknown mode '{other}', expected synthetic|real|theory-trend"
            )),
        }
    }
}

/// A fully-resolved experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    /// Optional mode pin; checked against the subcommand when present.
    pub mode: Option<Mode>,
    /// Synthetic scenario id (1, 2, or 3).
    pub scenario: u8,
    /// Synthetic dataset size.
    pub n: usize,
    /// Target miscoverage.
    pub alpha: f64,
    /// One full experiment per seed.
    pub seeds: Vec<u64>,
    /// Interval methods to run.
    pub methods: Vec<Method>,
    pub train_frac: f64,
    pub calib_frac: f64,
    pub test_frac: f64,
    /// Neighborhood sizes searched by CV (LSCP, SLSCP, EnbPI).
    pub k_candidates: Vec<usize>,
    /// Bandwidths searched by CV (SLSCP, LCP).
    pub h_candidates: Vec<f64>,
    /// Evaluation grid resolution (G x G cells).
    pub grid: usize,
    /// Output directory.
    pub out: PathBuf,
    /// Real-data CSV (mode = real).
    pub input: Option<PathBuf>,
    /// Sample sizes for the trend study.
    pub n_list: Vec<usize>,
    /// Repetitions per size in the trend study.
    pub reps: usize,
    /// Fixed conformal neighborhood during the trend study.
    pub trend_k: usize,
    /// Cross-validation folds (hyperparameter selection).
    pub folds: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            mode: None,
            scenario: 1,
            n: 2000,
            alpha: 0.1,
            seeds: vec![1],
            methods: Method::ALL.to_vec(),
            train_frac: 0.4,
            calib_frac: 0.4,
            test_frac: 0.2,
            k_candidates: vec![5, 10, 20, 50, 100],
            h_candidates: vec![0.01, 0.03, 0.1, 0.3],
            grid: 5,
            out: PathBuf::from("out"),
            input: None,
            n_list: vec![500, 2000, 8000],
            reps: 10,
            trend_k: 20,
            folds: 5,
        }
    }
}

/// Command-line overrides; `None` keeps the manifest (or default) value.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub seed: Option<Vec<u64>>,
    pub methods: Option<Vec<String>>,
    pub n: Option<usize>,
    pub scenario: Option<u8>,
    pub input: Option<PathBuf>,
}

/// Loads defaults, then the manifest (if any), then the overrides.
pub fn load(manifest: Option<&Path>, overrides: &Overrides) -> Result<Config, CliError> {
    let mut cfg = match manifest {
        Some(path) => parse_file(path)?,
        None => Config::default(),
    };
    apply_overrides(&mut cfg, overrides)?;
    Ok(cfg)
}

fn parse_file(path: &Path) -> Result<Config, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut cfg = Config::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!(
                "{}:{}: expected 'key = value', got '{raw}'",
                path.display(),
                lineno + 1
            ))
        })?;
        set_key(&mut cfg, key.trim(), value.trim())
            .map_err(|msg| CliError::Config(format!("{}:{}: {msg}", path.display(), lineno + 1)))?;
    }
    Ok(cfg)
}

fn set_key(cfg: &mut Config, key: &str, value: &str) -> Result<(), String> {
    match key {
        "mode" => cfg.mode = Some(value.parse::<Mode>()?),
        "scenario" => cfg.scenario = parse_one(key, value)?,
        "n" => cfg.n = parse_one(key, value)?,
        "alpha" => cfg.alpha = parse_one(key, value)?,
        "seeds" => cfg.seeds = parse_list(key, value)?,
        "methods" => {
            cfg.methods = split_list(value)
                .map(|m| m.parse::<Method>())
                .collect::<Result<Vec<_>, _>>()?
        }
        "train_frac" => cfg.train_frac = parse_one(key, value)?,
        "calib_frac" => cfg.calib_frac = parse_one(key, value)?,
        "test_frac" => cfg.test_frac = parse_one(key, value)?,
        "k_candidates" => cfg.k_candidates = parse_list(key, value)?,
        "h_candidates" => cfg.h_candidates = parse_list(key, value)?,
        "grid" => cfg.grid = parse_one(key, value)?,
        "out" => cfg.out = PathBuf::from(value),
        "input" => cfg.input = Some(PathBuf::from(value)),
        "n_list" => cfg.n_list = parse_list(key, value)?,
        "reps" => cfg.reps = parse_one(key, value)?,
        "trend_k" => cfg.trend_k = parse_one(key, value)?,
        "folds" => cfg.folds = parse_one(key, value)?,
        other => return Err(format!("unknown config key '{other}'")),
    }
    Ok(())
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| format!("bad value '{value}' for {key}: {e}"))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    split_list(value).map(|item| parse_one(key, item)).collect()
}

fn apply_overrides(cfg: &mut Config, ov: &Overrides) -> Result<(), CliError> {
    if let Some(out) = &ov.out {
        cfg.out = out.clone();
    }
    if let Some(alpha) = ov.alpha {
        cfg.alpha = alpha;
    }
    if let Some(seeds) = &ov.seed {
        cfg.seeds = seeds.clone();
    }
    if let Some(methods) = &ov.methods {
        cfg.methods = methods
            .iter()
            .map(|m| m.parse::<Method>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(CliError::Config)?;
    }
    if let Some(n) = ov.n {
        cfg.n = n;
    }
    if let Some(scenario) = ov.scenario {
        cfg.scenario = scenario;
    }
    if let Some(input) = &ov.input {
        cfg.input = Some(input.clone());
    }
    Ok(())
}

impl Config {
    /// Checks everything the given mode will rely on, so runners can treat
    /// later failures as internal errors.
    pub fn validate_for(&self, mode: Mode) -> Result<(), CliError> {
        let err = |msg: String| Err(CliError::Config(msg));
        if let Some(pinned) = self.mode {
            if pinned != mode {
                return err(format!(
                    "config pins mode = {}, but the {} subcommand was invoked",
                    pinned.name(),
                    mode.name()
                ));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return err(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.methods.is_empty() {
            return err("methods list is empty".into());
        }
        if self.seeds.is_empty() {
            return err("seeds list is empty".into());
        }
        let frac_sum = self.train_frac + self.calib_frac + self.test_frac;
        if !(self.train_frac > 0.0 && self.calib_frac > 0.0 && self.test_frac > 0.0)
            || (frac_sum - 1.0).abs() > 1e-9
        {
            return err(format!(
                "split fractions must be positive and sum to 1, got {}/{}/{}",
                self.train_frac, self.calib_frac, self.test_frac
            ));
        }
        if self.grid == 0 {
            return err("grid must be >= 1".into());
        }
        if self.folds < 2 {
            return err(format!("folds must be >= 2, got {}", self.folds));
        }
        if self.k_candidates.is_empty() || self.k_candidates.contains(&0) {
            return err("k_candidates must be non-empty positive integers".into());
        }
        if self.h_candidates.is_empty()
            || self
                .h_candidates
                .iter()
                .any(|&h| !(h.is_finite() && h > 0.0))
        {
            return err("h_candidates must be non-empty finite positive numbers".into());
        }
        match mode {
            Mode::Synthetic => {
                if !(1..=3).contains(&self.scenario) {
                    return err(format!(
                        "scenario must be 1, 2, or 3, got {}",
                        self.scenario
                    ));
                }
                if self.n < 20 || self.n > MAX_GP_SITES {
                    return err(format!(
                        "n must lie in [20, {MAX_GP_SITES}], got {}",
                        self.n
                    ));
                }
            }
            Mode::Real => match &self.input {
                None => return err("real mode needs input = <csv path>".into()),
                Some(path) if !path.exists() => {
                    return err(format!("input file does not exist: {}", path.display()))
                }
                Some(_) => {}
            },
            Mode::TheoryTrend => {
                if !(1..=3).contains(&self.scenario) {
                    return err(format!(
                        "scenario must be 1, 2, or 3, got {}",
                        self.scenario
                    ));
                }
                if self.n_list.len() < 3 || self.n_list.windows(2).any(|w| w[0] >= w[1]) {
                    return err(format!(
                        "n_list needs at least 3 strictly increasing sizes, got {:?}",
                        self.n_list
                    ));
                }
                if self
                    .n_list
                    .iter()
                    .any(|&n| !(20..=MAX_GP_SITES).contains(&n))
                {
                    return err(format!(
                        "every n_list entry must lie in [20, {MAX_GP_SITES}], got {:?}",
                        self.n_list
                    ));
                }
                if self.reps == 0 {
                    return err("reps must be >= 1".into());
                }
                if self.trend_k == 0 {
                    return err("trend_k must be >= 1".into());
                }
            }
        }
        Ok(())
    }
}
