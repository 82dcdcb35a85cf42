//! Deterministic SVG heatmaps of per-cell statistics.
//!
//! Output is a self-contained SVG: one rectangle per grid cell on a linear
//! two-color ramp over `[min, max]`, a legend with the numeric extremes, and
//! no external assets. Cells without data (possible when few test points
//! fall in a region) render gray and do not influence the ramp bounds.

use std::path::Path;

use crate::CliError;

const CELL_PX: usize = 48;
const TITLE_PX: usize = 28;
const LEGEND_PX: usize = 54;
const PAD_PX: usize = 12;

/// Low end of the color ramp (dark blue).
const LOW: (u8, u8, u8) = (0x1f, 0x30, 0x6e);
/// High end of the color ramp (warm yellow).
const HIGH: (u8, u8, u8) = (0xf9, 0xc8, 0x0e);
/// Cells with no data.
const NODATA: &str = "#c8c8c8";

fn ramp(t: f64) -> String {
    let lerp = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * t).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        lerp(LOW.0, HIGH.0),
        lerp(LOW.1, HIGH.1),
        lerp(LOW.2, HIGH.2)
    )
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Renders `grid[gy][gx]` (gy increasing northward) to SVG text.
///
/// The grid must be rectangular and non-empty; `None` cells are allowed.
pub fn render_heatmap(grid: &[Vec<Option<f64>>], title: &str) -> String {
    assert!(
        !grid.is_empty() && !grid[0].is_empty(),
        "grid must be non-empty"
    );
    let cols = grid[0].len();
    assert!(
        grid.iter().all(|row| row.len() == cols),
        "grid must be rectangular"
    );
    let rows = grid.len();

    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in grid.iter().flatten().flatten() {
        assert!(v.is_finite(), "cell values must be finite");
        min = min.min(*v);
        max = max.max(*v);
    }
    let has_data = min.is_finite();
    if !has_data {
        min = 0.0;
        max = 0.0;
    }

    let width = 2 * PAD_PX + cols * CELL_PX;
    let height = TITLE_PX + rows * CELL_PX + LEGEND_PX + PAD_PX;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\">\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{PAD_PX}\" y=\"18\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n",
        escape(title)
    ));

    for (gy, row) in grid.iter().enumerate() {
        let y = TITLE_PX + (rows - 1 - gy) * CELL_PX;
        for (gx, cell) in row.iter().enumerate() {
            let x = PAD_PX + gx * CELL_PX;
            let fill = match cell {
                Some(v) => {
                    let t = if max > min {
                        (v - min) / (max - min)
                    } else {
                        0.5
                    };
                    ramp(t)
                }
                None => NODATA.to_string(),
            };
            svg.push_str(&format!(
                "  <rect x=\"{x}\" y=\"{y}\" width=\"{CELL_PX}\" height=\"{CELL_PX}\" \
                 fill=\"{fill}\" stroke=\"#ffffff\" stroke-width=\"1\"/>\n"
            ));
        }
    }

    // Legend: a 10-step swatch strip with the numeric extremes on each end.
    let legend_y = TITLE_PX + rows * CELL_PX + 16;
    let strip_w = cols * CELL_PX;
    let step_w = strip_w as f64 / 10.0;
    for i in 0..10 {
        let x = PAD_PX as f64 + i as f64 * step_w;
        svg.push_str(&format!(
            "  <rect x=\"{x:.2}\" y=\"{legend_y}\" width=\"{step_w:.2}\" height=\"12\" \
             fill=\"{}\"/>\n",
            ramp(i as f64 / 9.0)
        ));
    }
    let label_y = legend_y + 26;
    svg.push_str(&format!(
        "  <text x=\"{PAD_PX}\" y=\"{label_y}\" font-family=\"sans-serif\" font-size=\"12\">{min:.6}</text>\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{label_y}\" font-family=\"sans-serif\" font-size=\"12\" \
         text-anchor=\"end\">{max:.6}</text>\n",
        PAD_PX + strip_w
    ));
    svg.push_str("</svg>\n");
    svg
}

/// Writes the rendered heatmap to `path`.
pub fn emit_heatmap(grid: &[Vec<Option<f64>>], path: &Path, title: &str) -> Result<(), CliError> {
    let svg = render_heatmap(grid, title);
    std::fs::write(path, svg)
        .map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))
}

/// Reconstructs a `grid[gy][gx]` of one statistic from a per-cell CSV as
/// written by the synthetic/real runners (columns `gx`, `gy`, `count`,
/// `coverage`, `mean_width`; one row per seed and cell).
///
/// `field` selects `coverage` or `width`; rows sharing a cell (several
/// seeds) are averaged, weighted by `count`. The resolution is inferred from
/// the largest coordinate unless `grid_override` is given.
pub fn grid_from_cells_csv(
    path: &Path,
    field: &str,
    grid_override: Option<usize>,
) -> Result<Vec<Vec<Option<f64>>>, CliError> {
    let column = match field {
        "coverage" => "coverage",
        "width" | "mean_width" => "mean_width",
        other => {
            return Err(CliError::Config(format!(
                "unknown field '{other}', expected coverage|width"
            )))
        }
    };
    if !path.exists() {
        return Err(CliError::Config(format!(
            "input file does not exist: {}",
            path.display()
        )));
    }
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Data(format!("bad CSV header: {e}")))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CliError::Data(format!("missing column '{name}' in {}", path.display())))
    };
    let (gx_i, gy_i, count_i, val_i) = (col("gx")?, col("gy")?, col("count")?, col(column)?);

    let mut rows: Vec<(usize, usize, f64, f64)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Data(format!("bad CSV row: {e}")))?;
        let parse = |i: usize, what: &str| -> Result<f64, CliError> {
            record
                .get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Data(format!("non-numeric {what} in {}", path.display())))
        };
        let gx = parse(gx_i, "gx")? as usize;
        let gy = parse(gy_i, "gy")? as usize;
        let count = parse(count_i, "count")?;
        let value = parse(val_i, column)?;
        rows.push((gx, gy, count, value));
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!(
            "no data rows in {}",
            path.display()
        )));
    }

    let seen_max = rows
        .iter()
        .map(|&(gx, gy, _, _)| gx.max(gy))
        .max()
        .unwrap_or(0);
    let g = grid_override.unwrap_or(seen_max + 1);
    if g == 0 || rows.iter().any(|&(gx, gy, _, _)| gx >= g || gy >= g) {
        return Err(CliError::Config(format!(
            "grid size {g} does not cover cell coordinates up to {seen_max}"
        )));
    }

    let mut weight = vec![vec![0.0f64; g]; g];
    let mut total = vec![vec![0.0f64; g]; g];
    for (gx, gy, count, value) in rows {
        weight[gy][gx] += count;
        total[gy][gx] += count * value;
    }
    Ok((0..g)
        .map(|gy| {
            (0..g)
                .map(|gx| (weight[gy][gx] > 0.0).then(|| total[gy][gx] / weight[gy][gx]))
                .collect()
        })
        .collect())
}
