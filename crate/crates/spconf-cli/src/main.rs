//! `spconf`: spatial conformal prediction experiments from the command line.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 1 internal.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use spconf_cli::config::{self, Mode, Overrides};
use spconf_cli::heatmap::{emit_heatmap, grid_from_cells_csv};
use spconf_cli::runner;
use spconf_cli::CliError;

#[derive(Parser)]
#[command(
    name = "spconf",
    version,
    about = "Spatial conformal prediction: synthetic benchmarks, real-data runs, trend studies, heatmaps",
    after_help = "Config file keys and output formats are documented in the repository README."
)]
struct Cli {
    /// Manifest file of `key = value` lines; flags below override it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (default: out).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed, or comma-separated seeds for repeated runs.
    #[arg(long, global = true, value_delimiter = ',', value_name = "N")]
    seed: Option<Vec<u64>>,
    /// Target miscoverage in (0, 1).
    #[arg(long, global = true, value_name = "F")]
    alpha: Option<f64>,
    /// Comma-separated subset of LSCP,GSCP,SLSCP,LCP,EnbPI.
    #[arg(long, global = true, value_delimiter = ',', value_name = "LIST")]
    methods: Option<Vec<String>>,
    /// Synthetic dataset size.
    #[arg(long, global = true, value_name = "N")]
    n: Option<usize>,
    /// Synthetic scenario: 1 additive, 2 multiplicative, 3 site-modulated.
    #[arg(long, global = true, value_name = "ID")]
    scenario: Option<u8>,
    /// Real-data CSV with longitude, latitude, value columns.
    #[arg(long, global = true, value_name = "PATH")]
    input: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the synthetic benchmark (generate, split, calibrate, evaluate).
    Synthetic,
    /// Run the same pipeline on a real CSV.
    Real,
    /// Study how the coverage gap moves with sample size.
    TheoryTrend,
    /// Render a per-cell CSV (from synthetic/real runs) as an SVG heatmap.
    Heatmap {
        /// A `cells_<METHOD>.csv` file produced by a previous run.
        #[arg(long, value_name = "PATH")]
        cells: PathBuf,
        /// Statistic to draw: coverage or width.
        #[arg(long, default_value = "width", value_name = "FIELD")]
        field: String,
        /// Grid resolution; inferred from the data when omitted.
        #[arg(long, value_name = "G")]
        grid: Option<usize>,
        /// Output SVG path (default: the input with an .svg extension).
        #[arg(long, value_name = "PATH")]
        svg: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let overrides = Overrides {
        out: cli.out,
        alpha: cli.alpha,
        seed: cli.seed,
        methods: cli.methods,
        n: cli.n,
        scenario: cli.scenario,
        input: cli.input,
    };
    match cli.command {
        Command::Synthetic => {
            let cfg = config::load(cli.config.as_deref(), &overrides)?;
            cfg.validate_for(Mode::Synthetic)?;
            runner::run_synthetic(&cfg)?;
        }
        Command::Real => {
            let cfg = config::load(cli.config.as_deref(), &overrides)?;
            cfg.validate_for(Mode::Real)?;
            runner::run_real(&cfg)?;
        }
        Command::TheoryTrend => {
            let cfg = config::load(cli.config.as_deref(), &overrides)?;
            cfg.validate_for(Mode::TheoryTrend)?;
            runner::run_theory_trend(&cfg)?;
        }
        Command::Heatmap {
            cells,
            field,
            grid,
            svg,
        } => {
            let grid_vals = grid_from_cells_csv(&cells, &field, grid)?;
            let out = svg.unwrap_or_else(|| cells.with_extension("svg"));
            let stem = cells
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("cells");
            emit_heatmap(&grid_vals, &out, &format!("{field} ({stem})"))?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}
