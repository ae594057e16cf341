//! Higher-level studies built on matches and fits: height-category sweeps,
//! warm/cold season splits, per-turbine proximity statistics, and regional
//! grid ratios.

use crate::fit::{self, IterativeFit, IterativeOptions};
use crate::ingest::{HeightCategories, StrokeRecord, TurbineRecord};
use crate::model::{
    self, AttractionRadii, CollectionAreas, ConversionFactors, ModelParams,
};
use crate::spatial::{exposure_years, MatchedPair};
use chrono::{DateTime, Datelike, Utc};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("category {label} has {n} pairs; {min} required for a stable fit")]
    TooFewPairs { label: String, n: usize, min: usize },
    #[error("fit failed: {0}")]
    Fit(#[from] crate::fit::FitError),
    #[error("{0}")]
    BadInput(String),
}

// ---------------------------------------------------------------------------
// Season filters
// ---------------------------------------------------------------------------

pub const WARM_MONTHS: [u32; 4] = [5, 6, 7, 8];
pub const COLD_MONTHS: [u32; 4] = [11, 12, 1, 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeasonLabel {
    All,
    Warm,
    Cold,
    Custom,
}

/// Month-set filter on stroke timestamps (UTC months).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeasonFilter {
    pub label: SeasonLabel,
    months: Vec<u32>,
}

impl SeasonFilter {
    pub fn all() -> Self {
        Self { label: SeasonLabel::All, months: (1..=12).collect() }
    }

    /// May through August, inclusive.
    pub fn warm() -> Self {
        Self { label: SeasonLabel::Warm, months: WARM_MONTHS.to_vec() }
    }

    /// November through February, inclusive.
    pub fn cold() -> Self {
        let mut months = COLD_MONTHS.to_vec();
        months.sort_unstable();
        Self { label: SeasonLabel::Cold, months }
    }

    pub fn custom(months: &[u32]) -> Result<Self, AnalysisError> {
        if months.is_empty() || months.iter().any(|m| !(1..=12).contains(m)) {
            return Err(AnalysisError::BadInput("months must be within 1..=12".into()));
        }
        let mut m = months.to_vec();
        m.sort_unstable();
        m.dedup();
        Ok(Self { label: SeasonLabel::Custom, months: m })
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.months.contains(&t.month())
    }

    pub fn months(&self) -> &[u32] {
        &self.months
    }
}

// ---------------------------------------------------------------------------
// Category sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub iterative: IterativeOptions,
    /// Minimum season-filtered pairs per category.
    pub min_pairs: usize,
    /// Detection-efficiency correction ξ applied to the upward collection
    /// area in the scaled total radius.
    pub ul_scale: f64,
    pub conversions: ConversionFactors,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            iterative: IterativeOptions::default(),
            min_pairs: 10_000,
            ul_scale: 2.0,
            conversions: ConversionFactors::default(),
        }
    }
}

/// Fit and derived quantities for one height category.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoryFit {
    pub category: usize,
    pub label: String,
    pub midpoint_m: f64,
    pub n_pairs: usize,
    pub params: ModelParams,
    pub areas: CollectionAreas,
    pub radii: AttractionRadii,
    /// Total strike-point radius with the upward area scaled by ξ:
    /// √(2·α^(SPST)·(1 + ξβ))·λ.
    pub scaled_total_sp_km: f64,
    /// β/(1+β), the upward fraction of discharges.
    pub upward_fraction: f64,
    #[serde(skip)]
    pub fit: Option<IterativeFit>,
}

/// Run the iterative fit per height category on season-filtered pairs.
pub fn category_sweep(
    pairs: &[MatchedPair],
    strokes: &[StrokeRecord],
    turbines: &[TurbineRecord],
    categories: &HeightCategories,
    season: &SeasonFilter,
    options: &SweepOptions,
) -> Result<Vec<CategoryFit>, AnalysisError> {
    let mut by_category: Vec<Vec<MatchedPair>> = vec![Vec::new(); categories.len()];
    for p in pairs {
        if !season.contains(strokes[p.stroke_ref].timestamp) {
            continue;
        }
        if let Some(c) = categories.assign(turbines[p.turbine_ref].tip_height_m) {
            by_category[c].push(*p);
        }
    }
    let mut out = Vec::with_capacity(categories.len());
    for (c, cat_pairs) in by_category.iter().enumerate() {
        if cat_pairs.len() < options.min_pairs {
            return Err(AnalysisError::TooFewPairs {
                label: categories.label(c).to_string(),
                n: cat_pairs.len(),
                min: options.min_pairs,
            });
        }
        let run = fit::iterative_fit(cat_pairs, &options.iterative)?;
        let params = run.result.params;
        let areas = model::collection_areas(&params);
        let radii = model::attraction_radii(&params, &options.conversions);
        let scaled = (2.0
            * options.conversions.strokes_per_strike_point
            * (1.0 + options.ul_scale * params.beta()))
        .sqrt()
            * params.lambda();
        out.push(CategoryFit {
            category: c,
            label: categories.label(c).to_string(),
            midpoint_m: categories.midpoint_m(c),
            n_pairs: cat_pairs.len(),
            params,
            areas,
            radii,
            scaled_total_sp_km: scaled,
            upward_fraction: params.beta() / (1.0 + params.beta()),
            fit: Some(run),
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Regression over category radii
// ---------------------------------------------------------------------------

/// Ordinary least squares line y = intercept + slope·x.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub residuals: Vec<f64>,
}

/// Closed-form OLS on (x, y) points. Requires at least two distinct x.
pub fn regression_fit(points: &[(f64, f64)]) -> Result<LineFit, AnalysisError> {
    if points.len() < 2 {
        return Err(AnalysisError::BadInput("regression needs at least two points".into()));
    }
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let det = n * sxx - sx * sx;
    if det.abs() < 1e-12 * sxx.max(1.0) {
        return Err(AnalysisError::BadInput("regression x values are degenerate".into()));
    }
    let slope = (n * sxy - sx * sy) / det;
    let intercept = (sy - slope * sx) / n;
    let residuals = points.iter().map(|&(x, y)| y - intercept - slope * x).collect();
    Ok(LineFit { intercept, slope, residuals })
}

/// Height regressions of the CG and TUL strike-point radii (meters) at
/// category midpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadiusRegressions {
    pub cg: LineFit,
    pub tul: LineFit,
}

pub fn radius_regressions(fits: &[CategoryFit]) -> Result<RadiusRegressions, AnalysisError> {
    let cg: Vec<(f64, f64)> =
        fits.iter().map(|f| (f.midpoint_m, f.radii.r_cg_sp_km * 1000.0)).collect();
    let tul: Vec<(f64, f64)> =
        fits.iter().map(|f| (f.midpoint_m, f.radii.r_ul_sp_km * 1000.0)).collect();
    Ok(RadiusRegressions { cg: regression_fit(&cg)?, tul: regression_fit(&tul)? })
}

// ---------------------------------------------------------------------------
// Per-turbine proximity analysis
// ---------------------------------------------------------------------------

/// Rayleigh capture fraction within radius d0: 1 - exp(-d0²/2σ²).
pub fn capture_fraction(d0_km: f64, sigma_km: f64) -> Result<f64, AnalysisError> {
    if !(d0_km > 0.0 && sigma_km > 0.0) {
        return Err(AnalysisError::BadInput("d0 and sigma must be positive".into()));
    }
    Ok(1.0 - (-d0_km * d0_km / (2.0 * sigma_km * sigma_km)).exp())
}

/// Upper bound on the fraction of strokes within d0 counted by chance:
/// the integrated non-attachment count within d0 relative to the total
/// turbine strike count. The background density cancels.
pub fn chance_inclusion_bound(d0_km: f64, params: &ModelParams) -> Result<f64, AnalysisError> {
    if !(d0_km > 0.0) {
        return Err(AnalysisError::BadInput("d0 must be positive".into()));
    }
    let lam = params.lambda();
    let nearby = d0_km * d0_km + 2.0 * lam * (-d0_km / lam).exp() * (d0_km + lam)
        - 2.0 * lam * lam;
    let total = 2.0 * lam * lam * (1.0 + params.beta());
    Ok(nearby / total)
}

/// Per-turbine proximity statistics over an analysis window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerTurbineStats {
    pub turbine_ref: usize,
    /// Raw strokes within d0 of this turbine (N_inner).
    pub n_inner: u64,
    /// Strokes in the 1-2 km annulus, nearby-turbine-excluded.
    pub annulus_count: u64,
    /// Annualized annulus density, strokes/km²/yr.
    pub annulus_density: f64,
    /// Total effective strike-point attraction radius, km. Zero when no
    /// inner strokes were observed; meaningless when `outlier` is set.
    pub r_total_sp_km: f64,
    /// Set when n_inner > 0 but the annulus is empty (radius undefined).
    pub outlier: bool,
    pub exposure_years: f64,
}

/// Empirical CDF of per-turbine radii for one height category.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoryCdf {
    pub category: usize,
    pub label: String,
    /// Sorted radii including the zero-strike atoms; outliers excluded.
    pub radii_km: Vec<f64>,
}

impl CategoryCdf {
    /// Fraction of turbines with radius <= r.
    pub fn fraction_at(&self, r_km: f64) -> f64 {
        if self.radii_km.is_empty() {
            return 0.0;
        }
        let n = self.radii_km.iter().take_while(|&&v| v <= r_km).count();
        n as f64 / self.radii_km.len() as f64
    }
}

/// Category-aggregate radius from pooled inner and annulus counts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PooledRadius {
    pub category: usize,
    pub label: String,
    pub n_turbines: usize,
    pub pooled_inner: u64,
    pub pooled_annulus: u64,
    pub r_total_sp_km: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerTurbineAnalysis {
    pub stats: Vec<PerTurbineStats>,
    pub cdfs: Vec<CategoryCdf>,
    pub pooled: Vec<PooledRadius>,
    pub d0_km: f64,
}

/// Analysis window for exposure normalization.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AnalysisWindow {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

const ANNULUS_IN_KM: f64 = 1.0;
const ANNULUS_OUT_KM: f64 = 2.0;
const ANNULUS_AREA_KM2: f64 = 3.0 * std::f64::consts::PI;

/// Inner (< d0) and annulus ([1, 2) km, nearby-excluded) counts per turbine,
/// computed from matched pairs restricted to a season.
fn proximity_counts(
    pairs: &[MatchedPair],
    strokes: &[StrokeRecord],
    n_turbines: usize,
    d0_km: f64,
    season: &SeasonFilter,
) -> Vec<(u64, u64)> {
    let mut counts = vec![(0u64, 0u64); n_turbines];
    for p in pairs {
        if !season.contains(strokes[p.stroke_ref].timestamp) {
            continue;
        }
        if p.distance_km < d0_km {
            counts[p.turbine_ref].0 += 1;
        } else if (ANNULUS_IN_KM..ANNULUS_OUT_KM).contains(&p.distance_km)
            && !(p.nearest_distance_km < d0_km && !p.is_nearest())
        {
            counts[p.turbine_ref].1 += 1;
        }
    }
    counts
}

fn pooled_radius(inner: u64, annulus: u64, conv: &ConversionFactors) -> f64 {
    if inner == 0 {
        return 0.0;
    }
    (conv.strokes_per_strike_point * 3.0 * inner as f64 / annulus as f64).sqrt()
}

/// Per-turbine strike statistics, CDFs per height category, and pooled
/// category radii.
///
/// N_inner counts raw strokes within d0 of the turbine; the local density
/// comes from the 1-2 km annulus with strokes within d0 of another turbine
/// excluded; the radius follows the proximity formula with stroke-to-strike-
/// point conversion. Exposure cancels in the radius (both counts cover the
/// same period) and enters only the reported annualized density.
pub fn per_turbine_stats(
    pairs: &[MatchedPair],
    strokes: &[StrokeRecord],
    turbines: &[TurbineRecord],
    categories: &HeightCategories,
    d0_km: f64,
    conv: &ConversionFactors,
    season: &SeasonFilter,
    window: AnalysisWindow,
) -> Result<PerTurbineAnalysis, AnalysisError> {
    if !(d0_km > 0.0) {
        return Err(AnalysisError::BadInput("d0 must be positive".into()));
    }
    let counts = proximity_counts(pairs, strokes, turbines.len(), d0_km, season);
    let mut stats = Vec::with_capacity(turbines.len());
    let mut per_cat: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut pooled_counts: BTreeMap<usize, (usize, u64, u64)> = BTreeMap::new();

    for (k, &(inner, annulus)) in counts.iter().enumerate() {
        let exposure = exposure_years(&turbines[k], window.start, window.end);
        let outlier = inner > 0 && annulus == 0;
        let r = if outlier { f64::NAN } else { pooled_radius(inner, annulus, conv) };
        stats.push(PerTurbineStats {
            turbine_ref: k,
            n_inner: inner,
            annulus_count: annulus,
            annulus_density: if exposure > 0.0 {
                annulus as f64 / (ANNULUS_AREA_KM2 * exposure)
            } else {
                0.0
            },
            r_total_sp_km: if outlier { 0.0 } else { r },
            outlier,
            exposure_years: exposure,
        });
        if let Some(c) = categories.assign(turbines[k].tip_height_m) {
            let entry = pooled_counts.entry(c).or_insert((0, 0, 0));
            entry.0 += 1;
            entry.1 += inner;
            entry.2 += annulus;
            if !outlier {
                per_cat.entry(c).or_default().push(r);
            }
        }
    }

    let cdfs = per_cat
        .into_iter()
        .map(|(c, mut radii)| {
            radii.sort_by(f64::total_cmp);
            CategoryCdf { category: c, label: categories.label(c).to_string(), radii_km: radii }
        })
        .collect();
    let pooled = pooled_counts
        .into_iter()
        .map(|(c, (n, inner, annulus))| PooledRadius {
            category: c,
            label: categories.label(c).to_string(),
            n_turbines: n,
            pooled_inner: inner,
            pooled_annulus: annulus,
            r_total_sp_km: pooled_radius(inner, annulus, conv),
        })
        .collect();

    Ok(PerTurbineAnalysis { stats, cdfs, pooled, d0_km })
}

// ---------------------------------------------------------------------------
// Seasonal/regional grid
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridOptions {
    /// Cell size in degrees, anchored at integer multiples from (-180, -90).
    pub cell_deg: f64,
    /// Minimum accumulated turbine-years for strike-fraction and ratio cells.
    pub min_turbine_years: f64,
    pub d0_km: f64,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self { cell_deg: 2.5, min_turbine_years: 80.0, d0_km: 0.09 }
    }
}

/// One grid cell of the cold-season analysis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridCell {
    pub lat_index: i32,
    pub lon_index: i32,
    pub turbine_years: f64,
    /// Cold-season annulus strokes over warm+cold annulus strokes.
    pub cold_density_frac: Option<f64>,
    /// Cold-season inner-d0 strikes over warm+cold strikes; suppressed below
    /// the turbine-year threshold.
    pub cold_strike_frac: Option<f64>,
    /// strike_frac / density_frac where both are defined.
    pub ratio: Option<f64>,
}

/// Cold-vs-warm regional grid of local density and turbine-strike fractions.
pub fn seasonal_grid(
    pairs: &[MatchedPair],
    strokes: &[StrokeRecord],
    turbines: &[TurbineRecord],
    window: AnalysisWindow,
    options: &GridOptions,
) -> Result<Vec<GridCell>, AnalysisError> {
    if !(options.cell_deg > 0.0) {
        return Err(AnalysisError::BadInput("cell size must be positive".into()));
    }
    let warm = proximity_counts(pairs, strokes, turbines.len(), options.d0_km, &SeasonFilter::warm());
    let cold = proximity_counts(pairs, strokes, turbines.len(), options.d0_km, &SeasonFilter::cold());

    #[derive(Default)]
    struct Cell {
        years: f64,
        warm_inner: u64,
        cold_inner: u64,
        warm_annulus: u64,
        cold_annulus: u64,
    }
    let mut cells: BTreeMap<(i32, i32), Cell> = BTreeMap::new();
    for (k, t) in turbines.iter().enumerate() {
        let lat_index = ((t.latitude + 90.0) / options.cell_deg).floor() as i32;
        let lon_index = ((t.longitude + 180.0) / options.cell_deg).floor() as i32;
        let cell = cells.entry((lat_index, lon_index)).or_default();
        cell.years += exposure_years(&turbines[k], window.start, window.end);
        cell.warm_inner += warm[k].0;
        cell.cold_inner += cold[k].0;
        cell.warm_annulus += warm[k].1;
        cell.cold_annulus += cold[k].1;
    }

    Ok(cells
        .into_iter()
        .map(|((lat_index, lon_index), c)| {
            let density_total = c.warm_annulus + c.cold_annulus;
            let strike_total = c.warm_inner + c.cold_inner;
            let cold_density_frac =
                (density_total > 0).then(|| c.cold_annulus as f64 / density_total as f64);
            let qualified = c.years >= options.min_turbine_years;
            let cold_strike_frac = (qualified && strike_total > 0)
                .then(|| c.cold_inner as f64 / strike_total as f64);
            let ratio = match (cold_strike_frac, cold_density_frac) {
                (Some(s), Some(d)) if d > 0.0 => Some(s / d),
                _ => None,
            };
            GridCell { lat_index, lon_index, turbine_years: c.years, cold_density_frac, cold_strike_frac, ratio }
        })
        .collect())
}
