//! Estimation of downward cloud-to-ground and triggered-upward lightning
//! collection areas for wind turbines from lightning-locating-system stroke
//! data.
//!
//! The pipeline: ingest LLS stroke and turbine-database exports
//! ([`ingest`]), associate strokes with nearby turbines ([`spatial`]),
//! accumulate distance-binned weighted histograms ([`histogram`]), and fit
//! the four-parameter count model with iterative density redistribution
//! ([`fit`]). Higher-level studies (height-category sweeps, seasonal splits,
//! per-turbine proximity statistics, regional grids) live in [`analysis`],
//! and [`synth`] generates synthetic stroke datasets with known ground truth
//! for validation.

pub mod analysis;
pub mod fit;
pub mod histogram;
pub mod ingest;
pub mod model;
pub mod spatial;
pub mod synth;

pub use fit::{FitOptions, FitResult, IterativeFit, IterativeOptions};
pub use histogram::{HistogramSpec, WeightFunction, WeightedHistogram};
pub use ingest::{StrokeRecord, TurbineRecord};
pub use model::{ConversionFactors, ModelParams};
pub use spatial::{MatchedPair, TurbineIndex};
