//! Experiment runners behind the `synthetic`, `real`, and `theory-trend`
//! subcommands. Each produces CSV reports (and heatmaps where meaningful)
//! under the configured output directory; all randomness flows through the
//! configured seeds, so re-running a manifest rewrites byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use spconf::conformal::{fit_conformal, Method, MethodConfig};
use spconf::data::{split_dataset, Observation, RngSpec, Site};
use spconf::eval::{candidate_grid, coverage_gap_trend, cv_select, evaluate, Metrics, TrendReport};
use spconf::models::{default_bandwidths, fit_kernel_regression, select_bandwidth};
use spconf::synth::{gen_scenario, ScenarioSpec};

use crate::config::Config;
use crate::heatmap::emit_heatmap;
use crate::{internal, CliError};

/// One `summary.csv` row.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub seed: u64,
    pub n: usize,
    pub alpha: f64,
    pub coverage: f64,
    pub mean_width: f64,
}

/// One `cells_<METHOD>.csv` row.
#[derive(Debug, Clone, PartialEq)]
pub struct CellRow {
    pub method: Method,
    pub seed: u64,
    pub cell: usize,
    pub gx: usize,
    pub gy: usize,
    pub count: usize,
    pub coverage: f64,
    pub mean_width: f64,
}

/// Everything one runner invocation wrote, for reporting and tests.
#[derive(Debug)]
pub struct RunReport {
    pub summary: Vec<SummaryRow>,
    pub files: Vec<PathBuf>,
}

/// Synthetic benchmark: for every seed, generate the scenario, split, fit
/// the base model, CV-select each method's hyperparameters, and evaluate
/// intervals on the held-out test set.
pub fn run_synthetic(cfg: &Config) -> Result<RunReport, CliError> {
    let mut summary = Vec::new();
    let mut cells: Vec<CellRow> = Vec::new();
    for &seed in &cfg.seeds {
        let base = RngSpec::new(seed);
        let spec = ScenarioSpec::new(cfg.scenario, cfg.n, seed);
        let data = gen_scenario(&spec).map_err(|e| internal("scenario generation", e))?;
        let label = format!("synthetic s{} seed {seed}", cfg.scenario);
        let (mut rows, mut cell_rows) = evaluate_methods(cfg, &base, data, seed, &label)?;
        summary.append(&mut rows);
        cells.append(&mut cell_rows);
    }
    let files = write_reports(cfg, &summary, &cells)?;
    Ok(RunReport { summary, files })
}

/// Real-data pipeline: ingest the CSV, project coordinates to planar km,
/// then run the same split/fit/select/evaluate loop per seed.
pub fn run_real(cfg: &Config) -> Result<RunReport, CliError> {
    let input = cfg
        .input
        .as_ref()
        .expect("validated: real mode has an input");
    let loaded = load_real_csv(input)?;
    if loaded.dropped > 0 {
        eprintln!(
            "[real] dropped {} row(s) with non-finite values; {} remain",
            loaded.dropped,
            loaded.observations.len()
        );
    }
    if !loaded.skipped_columns.is_empty() {
        eprintln!(
            "[real] ignoring non-numeric column(s): {}",
            loaded.skipped_columns.join(", ")
        );
    }
    println!(
        "[real] {} rows, features: {}",
        loaded.observations.len(),
        loaded.feature_names.join(", ")
    );

    let mut summary = Vec::new();
    let mut cells: Vec<CellRow> = Vec::new();
    for &seed in &cfg.seeds {
        let base = RngSpec::new(seed);
        let label = format!("real seed {seed}");
        let (mut rows, mut cell_rows) =
            evaluate_methods(cfg, &base, loaded.observations.clone(), seed, &label)?;
        summary.append(&mut rows);
        cells.append(&mut cell_rows);
    }
    let files = write_reports(cfg, &summary, &cells)?;
    Ok(RunReport { summary, files })
}

/// Trend study: mean absolute coverage gap versus sample size for the first
/// configured method, with conformal hyperparameters held at `trend_k`.
pub fn run_theory_trend(cfg: &Config) -> Result<TrendReport, CliError> {
    if cfg.reps < 10 {
        eprintln!(
            "[theory-trend] warning: reps = {} (< 10); the trend statistic will be noisy",
            cfg.reps
        );
    }
    let method = cfg.methods[0];
    let mut template = MethodConfig::new(method, cfg.alpha);
    template.k = cfg.trend_k;
    let report = coverage_gap_trend(
        cfg.scenario,
        &template,
        &cfg.n_list,
        cfg.reps,
        &RngSpec::new(cfg.seeds[0]),
    )
    .map_err(|e| internal("trend computation", e))?;

    fs::create_dir_all(&cfg.out)
        .map_err(|e| CliError::Internal(format!("cannot create {}: {e}", cfg.out.display())))?;
    let path = cfg.out.join("trend.csv");
    let mut writer = csv_writer(&path)?;
    write_record(&mut writer, &path, &["n", "mean_abs_gap", "spearman_rho"])?;
    for point in &report.points {
        write_record(
            &mut writer,
            &path,
            &[
                point.n.to_string(),
                format!("{:.6}", point.mean_abs_gap),
                format!("{:.6}", report.spearman_rho),
            ],
        )?;
    }
    finish(writer, &path)?;

    println!("[theory-trend] {} at alpha = {}", method, cfg.alpha);
    for point in &report.points {
        println!(
            "  n = {:>6}: mean |coverage gap| = {:.4}",
            point.n, point.mean_abs_gap
        );
    }
    println!("  Spearman rho(gap, n) = {:.3}", report.spearman_rho);
    println!("wrote {}", path.display());
    Ok(report)
}

/// Shared per-seed pipeline: split, fit the kernel model, then CV-select,
/// calibrate, and evaluate every configured method on the test fold.
fn evaluate_methods(
    cfg: &Config,
    base: &RngSpec,
    data: Vec<Observation>,
    seed: u64,
    label: &str,
) -> Result<(Vec<SummaryRow>, Vec<CellRow>), CliError> {
    let n = data.len();
    let split = split_dataset(data, (cfg.train_frac, cfg.calib_frac, cfg.test_frac), base)
        .map_err(|e| CliError::Data(format!("cannot split {n} observations: {e}")))?;
    let train = split.train_set();
    let calib = split.calib_set();
    let test = split.test_set();

    let bw = select_bandwidth(&train, &default_bandwidths(&train), cfg.folds, base)
        .map_err(|e| internal("bandwidth selection", e))?;
    let model = fit_kernel_regression(&train, bw).map_err(|e| internal("model fit", e))?;

    let truths: Vec<f64> = test.iter().map(|o| o.response).collect();
    let sites: Vec<Site> = test.iter().map(|o| o.site.clone()).collect();

    let mut rows = Vec::new();
    let mut cell_rows = Vec::new();
    for &method in &cfg.methods {
        let mut template = MethodConfig::new(method, cfg.alpha);
        template.forest.rng = base.derive(&format!("forest/{}", method.name()));
        let grid = candidate_grid(method, &cfg.k_candidates, &cfg.h_candidates);
        let cv = cv_select(
            &calib,
            &model,
            &template,
            &grid,
            cfg.folds,
            &base.derive(&format!("cv/{}", method.name())),
        )
        .map_err(|e| internal("hyperparameter selection", e))?;

        let mut chosen = template.clone();
        if let Some(k) = cv.candidate.k {
            chosen.k = k;
        }
        if let Some(h) = cv.candidate.h {
            chosen.bandwidth = h;
        }
        let fitted =
            fit_conformal(&chosen, &model, &calib).map_err(|e| internal("calibration", e))?;
        let intervals = fitted
            .intervals_batch(&test, &model)
            .map_err(|e| internal("prediction", e))?;
        let metrics = evaluate(&intervals, &truths, &sites, cfg.grid)
            .map_err(|e| internal("evaluation", e))?;

        println!(
            "[{label}] {:<6} picked {:<16} coverage {:.3}, mean width {:.3}",
            method.name(),
            format!("{},", cv.candidate),
            metrics.coverage,
            metrics.mean_width
        );
        rows.push(SummaryRow {
            method,
            seed,
            n,
            alpha: cfg.alpha,
            coverage: metrics.coverage,
            mean_width: metrics.mean_width,
        });
        cell_rows.extend(cell_rows_from_metrics(&metrics, method, seed));
    }
    Ok((rows, cell_rows))
}

fn cell_rows_from_metrics(metrics: &Metrics, method: Method, seed: u64) -> Vec<CellRow> {
    metrics
        .cells
        .iter()
        .map(|c| CellRow {
            method,
            seed,
            cell: c.cell,
            gx: c.coords.first().copied().unwrap_or(0),
            gy: c.coords.get(1).copied().unwrap_or(0),
            count: c.count,
            coverage: c.coverage,
            mean_width: c.mean_width,
        })
        .collect()
}

/// Writes `summary.csv`, one `cells_<METHOD>.csv` and one
/// `heatmap_<METHOD>.svg` (count-weighted mean width across seeds) per
/// method that produced cell stats.
fn write_reports(
    cfg: &Config,
    summary: &[SummaryRow],
    cells: &[CellRow],
) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(&cfg.out)
        .map_err(|e| CliError::Internal(format!("cannot create {}: {e}", cfg.out.display())))?;
    let mut files = Vec::new();

    let path = cfg.out.join("summary.csv");
    let mut writer = csv_writer(&path)?;
    write_record(
        &mut writer,
        &path,
        &["method", "seed", "n", "alpha", "coverage", "mean_width"],
    )?;
    for row in summary {
        write_record(
            &mut writer,
            &path,
            &[
                row.method.name().to_string(),
                row.seed.to_string(),
                row.n.to_string(),
                format!("{}", row.alpha),
                format!("{:.6}", row.coverage),
                format!("{:.6}", row.mean_width),
            ],
        )?;
    }
    finish(writer, &path)?;
    files.push(path);

    for &method in cfg.methods.iter() {
        let method_cells: Vec<&CellRow> = cells.iter().filter(|c| c.method == method).collect();
        if method_cells.is_empty() {
            continue;
        }
        let path = cfg.out.join(format!("cells_{}.csv", method.name()));
        let mut writer = csv_writer(&path)?;
        write_record(
            &mut writer,
            &path,
            &[
                "method",
                "seed",
                "cell",
                "gx",
                "gy",
                "count",
                "coverage",
                "mean_width",
            ],
        )?;
        for c in &method_cells {
            write_record(
                &mut writer,
                &path,
                &[
                    c.method.name().to_string(),
                    c.seed.to_string(),
                    c.cell.to_string(),
                    c.gx.to_string(),
                    c.gy.to_string(),
                    c.count.to_string(),
                    format!("{:.6}", c.coverage),
                    format!("{:.6}", c.mean_width),
                ],
            )?;
        }
        finish(writer, &path)?;
        files.push(path);

        // Width heatmap: count-weighted mean per cell across seeds.
        let mut acc: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
        for c in &method_cells {
            let entry = acc.entry((c.gy, c.gx)).or_insert((0.0, 0.0));
            entry.0 += c.count as f64;
            entry.1 += c.count as f64 * c.mean_width;
        }
        let grid: Vec<Vec<Option<f64>>> = (0..cfg.grid)
            .map(|gy| {
                (0..cfg.grid)
                    .map(|gx| acc.get(&(gy, gx)).map(|(w, t)| t / w))
                    .collect()
            })
            .collect();
        let path = cfg.out.join(format!("heatmap_{}.svg", method.name()));
        emit_heatmap(
            &grid,
            &path,
            &format!("{} mean interval width", method.name()),
        )?;
        files.push(path);
    }
    for f in &files {
        println!("wrote {}", f.display());
    }
    Ok(files)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    csv::Writer::from_path(path)
        .map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))
}

fn write_record<S: AsRef<[u8]>>(
    writer: &mut csv::Writer<fs::File>,
    path: &Path,
    record: &[S],
) -> Result<(), CliError> {
    writer
        .write_record(record)
        .map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))
}

fn finish(mut writer: csv::Writer<fs::File>, path: &Path) -> Result<(), CliError> {
    writer
        .flush()
        .map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))
}

/// Result of ingesting a real-data CSV.
#[derive(Debug)]
pub struct LoadedCsv {
    pub observations: Vec<Observation>,
    /// Rows discarded because a required field was missing or non-finite.
    pub dropped: usize,
    /// Names of the feature columns, in feature order.
    pub feature_names: Vec<String>,
    /// Extra columns ignored because they are not numeric throughout.
    pub skipped_columns: Vec<String>,
}

/// Mean Earth radius in km for the equirectangular projection.
const EARTH_RADIUS_KM: f64 = 6371.0;

/// Reads a real-data CSV with required columns `longitude`, `latitude`,
/// `value` (case-insensitive) and any number of extra columns. Extras that
/// parse as finite numbers on every kept row become features; others are
/// skipped. Rows with missing/non-finite required fields are dropped.
///
/// Coordinates are projected to planar km by an equirectangular projection
/// about the data centroid (x = R·cosφ₀·Δλ, y = R·Δφ); each observation's
/// features are the projected coordinates followed by the extras, and its
/// response is `value`. Duplicate coordinates are accepted.
pub fn load_real_csv(path: &Path) -> Result<LoadedCsv, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Data(format!("bad CSV header in {}: {e}", path.display())))?
        .clone();

    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
    };
    let required = ["longitude", "latitude", "value"];
    let positions: Vec<Option<usize>> = required.iter().map(|c| find(c)).collect();
    let missing: Vec<&str> = required
        .iter()
        .zip(&positions)
        .filter(|(_, p)| p.is_none())
        .map(|(c, _)| *c)
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Data(format!(
            "{} is missing required column(s): {}",
            path.display(),
            missing.join(", ")
        )));
    }
    let (lon_i, lat_i, val_i) = (
        positions[0].unwrap(),
        positions[1].unwrap(),
        positions[2].unwrap(),
    );
    let extra_cols: Vec<usize> = (0..headers.len())
        .filter(|i| ![lon_i, lat_i, val_i].contains(i))
        .collect();

    // Pass 1: parse required fields, keep surviving rows as raw records.
    let mut kept: Vec<(f64, f64, f64, csv::StringRecord)> = Vec::new();
    let mut dropped = 0usize;
    for record in reader.records() {
        let record = record
            .map_err(|e| CliError::Data(format!("bad CSV row in {}: {e}", path.display())))?;
        let get = |i: usize| {
            record
                .get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
        };
        match (get(lon_i), get(lat_i), get(val_i)) {
            (Some(lon), Some(lat), Some(val)) => kept.push((lon, lat, val, record)),
            _ => dropped += 1,
        }
    }
    if kept.len() < 100 {
        return Err(CliError::Data(format!(
            "{} has {} usable rows after filtering; at least 100 are required",
            path.display(),
            kept.len()
        )));
    }

    // Pass 2: an extra column counts as a feature only if it parses finite
    // on every kept row.
    let mut numeric_extras = Vec::new();
    let mut skipped_columns = Vec::new();
    for &col in &extra_cols {
        let values: Option<Vec<f64>> = kept
            .iter()
            .map(|(_, _, _, rec)| {
                rec.get(col)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .filter(|v| v.is_finite())
            })
            .collect();
        match values {
            Some(vals) => numeric_extras.push((col, vals)),
            None => skipped_columns.push(headers[col].trim().to_string()),
        }
    }

    // Equirectangular projection about the centroid.
    let n = kept.len() as f64;
    let lon0 = kept.iter().map(|r| r.0).sum::<f64>() / n;
    let lat0 = kept.iter().map(|r| r.1).sum::<f64>() / n;
    let cos_lat0 = lat0.to_radians().cos();

    let mut observations = Vec::with_capacity(kept.len());
    for (row, (lon, lat, val, _)) in kept.iter().enumerate() {
        let x = EARTH_RADIUS_KM * cos_lat0 * (lon - lon0).to_radians();
        let y = EARTH_RADIUS_KM * (lat - lat0).to_radians();
        let mut features = vec![x, y];
        features.extend(numeric_extras.iter().map(|(_, vals)| vals[row]));
        observations.push(
            Observation::new(Site::xy(x, y), features, *val)
                .map_err(|e| CliError::Data(format!("row {}: {e}", row + 2)))?,
        );
    }

    let mut feature_names = vec!["x_km".to_string(), "y_km".to_string()];
    feature_names.extend(
        numeric_extras
            .iter()
            .map(|(col, _)| headers[*col].trim().to_string()),
    );
    Ok(LoadedCsv {
        observations,
        dropped,
        feature_names,
        skipped_columns,
    })
}
