//! Plot-ready CSV tables for the analysis outputs.

use anyhow::Result;
use std::path::Path;
use wtstrike::analysis::{CategoryFit, GridCell, PerTurbineAnalysis};
use wtstrike::histogram::HistogramViews;
use wtstrike::ingest::{HeightCategories, TurbineRecord};
use wtstrike::model::{cumulative_surplus, eriksson_upward_fraction};

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

/// Four-view histogram table: one row per (iteration, bin).
pub fn write_views_csv(path: &Path, rows: &[(usize, HistogramViews)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "iteration",
        "r_km",
        "normalized_km2",
        "density",
        "surplus_km2",
        "cumulative_surplus_km2",
    ])?;
    for (iteration, v) in rows {
        for i in 0..v.r_km.len() {
            w.write_record([
                iteration.to_string(),
                fmt(v.r_km[i]),
                fmt(v.normalized[i]),
                fmt(v.density[i]),
                fmt(v.surplus[i]),
                fmt(v.cumulative_surplus[i]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-category parameter and radius table.
pub fn write_sweep_csv(path: &Path, fits: &[CategoryFit]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "category",
        "midpoint_m",
        "n_pairs",
        "amplitude",
        "beta",
        "sigma_km",
        "lambda_km",
        "cg_area_km2",
        "ul_area_km2",
        "total_area_km2",
        "r_cg_st_m",
        "r_ul_st_m",
        "r_cg_sp_m",
        "r_ul_sp_m",
        "r_total_sp_m",
        "scaled_total_sp_m",
        "upward_fraction",
        "eriksson_upward_fraction_pct",
    ])?;
    for f in fits {
        let eriksson = eriksson_upward_fraction(f.midpoint_m).ok();
        w.write_record([
            f.label.clone(),
            fmt(f.midpoint_m),
            f.n_pairs.to_string(),
            fmt(f.params.amplitude()),
            fmt(f.params.beta()),
            fmt(f.params.sigma()),
            fmt(f.params.lambda()),
            fmt(f.areas.cg_km2),
            fmt(f.areas.ul_km2),
            fmt(f.areas.total_km2),
            fmt(f.radii.r_cg_st_km * 1000.0),
            fmt(f.radii.r_ul_st_km * 1000.0),
            fmt(f.radii.r_cg_sp_km * 1000.0),
            fmt(f.radii.r_ul_sp_km * 1000.0),
            fmt(f.radii.r_total_sp_km * 1000.0),
            fmt(f.scaled_total_sp_km * 1000.0),
            fmt(f.upward_fraction),
            fmt_opt(eriksson),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Final-iteration cumulative-surplus curve per category, observed and fitted.
pub fn write_sweep_cumulative_csv(path: &Path, fits: &[CategoryFit]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["category", "r_km", "cumulative_surplus_km2", "fitted_km2"])?;
    for f in fits {
        let Some(run) = &f.fit else { continue };
        let last = run.iterations.last().expect("at least one iteration");
        let views =
            wtstrike::histogram::derived_views(&last.histogram, &last.fit.params)?;
        for i in 0..views.r_km.len() {
            let fitted = cumulative_surplus(views.r_km[i], &last.fit.params)?;
            w.write_record([
                f.label.clone(),
                fmt(views.r_km[i]),
                fmt(views.cumulative_surplus[i]),
                fmt(fitted),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_per_turbine_csv(
    path: &Path,
    analysis: &PerTurbineAnalysis,
    turbines: &[TurbineRecord],
    categories: &HeightCategories,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "turbine_id",
        "lat",
        "lon",
        "tip_height_m",
        "category",
        "n_inner",
        "annulus_count",
        "annulus_density_per_km2_yr",
        "r_total_sp_m",
        "outlier",
        "exposure_years",
    ])?;
    for s in &analysis.stats {
        let t = &turbines[s.turbine_ref];
        let category = categories
            .assign(t.tip_height_m)
            .map(|c| categories.label(c).to_string())
            .unwrap_or_else(|| "UNBINNED".into());
        w.write_record([
            t.turbine_id.clone(),
            fmt(t.latitude),
            fmt(t.longitude),
            fmt(t.tip_height_m),
            category,
            s.n_inner.to_string(),
            s.annulus_count.to_string(),
            fmt(s.annulus_density),
            fmt(s.r_total_sp_km * 1000.0),
            (s.outlier as u8).to_string(),
            fmt(s.exposure_years),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Empirical CDF points per category: radius and cumulative fraction.
pub fn write_cdf_csv(path: &Path, analysis: &PerTurbineAnalysis) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["category", "r_total_sp_m", "cumulative_fraction"])?;
    for cdf in &analysis.cdfs {
        let n = cdf.radii_km.len();
        for (i, r) in cdf.radii_km.iter().enumerate() {
            w.write_record([
                cdf.label.clone(),
                fmt(r * 1000.0),
                fmt((i + 1) as f64 / n as f64),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_pooled_csv(path: &Path, analysis: &PerTurbineAnalysis) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "category",
        "n_turbines",
        "pooled_inner",
        "pooled_annulus",
        "r_total_sp_m",
    ])?;
    for p in &analysis.pooled {
        w.write_record([
            p.label.clone(),
            p.n_turbines.to_string(),
            p.pooled_inner.to_string(),
            p.pooled_annulus.to_string(),
            fmt(p.r_total_sp_km * 1000.0),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Grid cells with the cell's southwest corner in degrees for plotting.
pub fn write_grid_csv(path: &Path, cells: &[GridCell], cell_deg: f64) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "lat_index",
        "lon_index",
        "lat_deg",
        "lon_deg",
        "turbine_years",
        "cold_density_frac",
        "cold_strike_frac",
        "ratio",
    ])?;
    for c in cells {
        w.write_record([
            c.lat_index.to_string(),
            c.lon_index.to_string(),
            fmt(c.lat_index as f64 * cell_deg - 90.0),
            fmt(c.lon_index as f64 * cell_deg - 180.0),
            fmt(c.turbine_years),
            fmt_opt(c.cold_density_frac),
            fmt_opt(c.cold_strike_frac),
            fmt_opt(c.ratio),
        ])?;
    }
    w.flush()?;
    Ok(())
}
