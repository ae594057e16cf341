//! Run configuration: a TOML file validated in full before any work starts.

use anyhow::{bail, Context, Result};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use wtstrike::analysis::{AnalysisWindow, SeasonFilter};
use wtstrike::fit::{FitOptions, IterativeOptions};
use wtstrike::histogram::HistogramSpec;
use wtstrike::ingest::{HeightCategories, StrokeSchema, TurbineSchema};
use wtstrike::model::ConversionFactors;
use wtstrike::synth::SynthConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: InputsConfig,
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub conversions: ConversionFactors,
    #[serde(default)]
    pub grid: GridConfig,
    pub output: OutputConfig,
    /// Only required by the synth command.
    pub synth: Option<SynthConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputsConfig {
    pub strokes: PathBuf,
    pub turbines: PathBuf,
    /// Matched-pair run file produced by `match` and consumed by the
    /// analysis commands.
    #[serde(default = "default_pairs_file")]
    pub pairs: PathBuf,
    #[serde(default)]
    pub stroke_schema: StrokeSchema,
    #[serde(default)]
    pub turbine_schema: TurbineSchema,
}

fn default_pairs_file() -> PathBuf {
    PathBuf::from("pairs.bin")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub window_start: DateTime<Utc>,
    pub window_end: DateTime<Utc>,
    #[serde(default = "default_match_radius")]
    pub match_radius_km: f64,
    #[serde(default = "default_bin_width")]
    pub bin_width_km: f64,
    #[serde(default = "default_max_radius")]
    pub max_radius_km: f64,
    /// Reweighted iterations after the unit-weight iteration zero.
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_season")]
    pub season: String,
    #[serde(default = "default_d0")]
    pub d0_km: f64,
    #[serde(default = "default_min_pairs")]
    pub min_category_pairs: usize,
    #[serde(default = "default_ul_scale")]
    pub ul_scale: f64,
    #[serde(default)]
    pub poisson_weighting: bool,
    /// Height categories as (label, lo_m, hi_m); defaults to the CONUS five.
    #[serde(default)]
    pub height_categories: Vec<CategoryConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryConfig {
    pub label: String,
    pub lo_m: f64,
    pub hi_m: f64,
}

fn default_match_radius() -> f64 {
    2.0
}
fn default_bin_width() -> f64 {
    0.02
}
fn default_max_radius() -> f64 {
    2.0
}
fn default_iterations() -> usize {
    3
}
fn default_season() -> String {
    "all".into()
}
fn default_d0() -> f64 {
    0.09
}
fn default_min_pairs() -> usize {
    10_000
}
fn default_ul_scale() -> f64 {
    2.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub cell_deg: f64,
    pub min_turbine_years: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { cell_deg: 2.5, min_turbine_years: 80.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config: RunConfig =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    /// Schema-level validation; path existence is checked per command.
    pub fn validate(&self) -> Result<()> {
        let a = &self.analysis;
        if a.window_start >= a.window_end {
            bail!("analysis window is empty: {} >= {}", a.window_start, a.window_end);
        }
        if !(a.match_radius_km > 0.0) {
            bail!("match_radius_km must be positive");
        }
        self.histogram_spec()
            .map_err(|e| anyhow::anyhow!("bad histogram geometry: {e}"))?;
        if !(a.d0_km > 0.0) {
            bail!("d0_km must be positive");
        }
        if !(a.ul_scale > 0.0) {
            bail!("ul_scale must be positive");
        }
        self.season_filter()?;
        self.height_categories()?;
        ConversionFactors::new(
            self.conversions.strokes_per_strike_point,
            self.conversions.strike_points_per_flash,
        )
        .map_err(|e| anyhow::anyhow!("bad conversions: {e}"))?;
        if !(self.grid.cell_deg > 0.0 && self.grid.min_turbine_years >= 0.0) {
            bail!("bad grid parameters");
        }
        if let Some(synth) = &self.synth {
            synth.validate().map_err(|e| anyhow::anyhow!("bad synth section: {e}"))?;
        }
        Ok(())
    }

    pub fn histogram_spec(&self) -> Result<HistogramSpec, wtstrike::histogram::HistogramError> {
        let spec = HistogramSpec {
            bin_width_km: self.analysis.bin_width_km,
            max_radius_km: self.analysis.max_radius_km,
        };
        spec.n_bins()?;
        Ok(spec)
    }

    pub fn season_filter(&self) -> Result<SeasonFilter> {
        season_from_name(&self.analysis.season)
    }

    pub fn height_categories(&self) -> Result<HeightCategories> {
        if self.analysis.height_categories.is_empty() {
            return Ok(HeightCategories::conus_default());
        }
        HeightCategories::new(
            self.analysis
                .height_categories
                .iter()
                .map(|c| (c.label.clone(), c.lo_m, c.hi_m))
                .collect(),
        )
        .map_err(|e| anyhow::anyhow!("bad height categories: {e}"))
    }

    pub fn window(&self) -> AnalysisWindow {
        AnalysisWindow { start: self.analysis.window_start, end: self.analysis.window_end }
    }

    pub fn iterative_options(&self) -> Result<IterativeOptions> {
        Ok(IterativeOptions {
            n_iter: self.analysis.iterations,
            spec: self.histogram_spec()?,
            fit: FitOptions { poisson_weighting: self.analysis.poisson_weighting, ..Default::default() },
            outer_tolerance: 1e-3,
        })
    }
}

pub fn season_from_name(name: &str) -> Result<SeasonFilter> {
    match name {
        "all" => Ok(SeasonFilter::all()),
        "warm" => Ok(SeasonFilter::warm()),
        "cold" => Ok(SeasonFilter::cold()),
        other => bail!("unknown season '{other}' (expected all, warm, or cold)"),
    }
}
