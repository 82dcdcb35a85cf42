//! Distribution-free prediction intervals at unobserved spatial locations.
//!
//! The centerpiece is localized spatial conformal prediction (LSCP): split
//! conformal residuals are turned into neighbor-residual features, a quantile
//! regression forest learns the local residual distribution, and a width-
//! minimizing quantile pair yields an asymmetric interval per test site.
//! Four comparators are provided — global split conformal (GSCP), a smoothed
//! distance-kernel variant (SLSCP), feature-kernel localized conformal (LCP),
//! and an equal-weight nearest-neighbor method (EnbPI) — together with
//! Matérn Gaussian-process scenario generators, a Nadaraya–Watson base
//! regressor, and evaluation/selection utilities.
//!
//! Everything is deterministic given a seed: randomness flows through
//! [`data::RngSpec`], which derives independent named substreams, so adding a
//! new consumer never perturbs existing ones. With the `parallel` feature
//! (default) the forest, batch prediction, and Monte Carlo loops fan out via
//! rayon; per-item substreams are pre-assigned, so parallel and sequential
//! builds produce identical output.

pub mod conformal;
pub mod data;
pub mod eval;
mod exec;
pub mod models;
pub mod qrf;
pub mod spatial;
pub mod synth;

pub use conformal::{Interval, Method, MethodConfig};
pub use data::{Observation, RngSpec, Site, SplitDataset};
pub use models::Predictor;
