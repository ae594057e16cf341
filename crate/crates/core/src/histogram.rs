//! Accumulation of matched pairs into distance-binned weighted counts, and
//! the redistribution weights derived from a fitted model.
//!
//! Accumulation always proceeds in fixed-size chunks whose partial histograms
//! are merged in chunk order. The summation tree therefore depends only on
//! the input order, never on the worker count, and results are bitwise
//! reproducible for any parallelism level.

use crate::model::{self, ModelParams};
use crate::spatial::MatchedPair;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HistogramError {
    #[error("bin width must be positive and divide max radius, got width {width} over {max}")]
    BadGeometry { width: f64, max: f64 },
    #[error("histograms have different geometry: {0}")]
    GeometryMismatch(String),
    #[error("amplitude must be positive for normalized views, got {0}")]
    BadAmplitude(f64),
}

/// Bin geometry for a distance histogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub bin_width_km: f64,
    pub max_radius_km: f64,
}

impl HistogramSpec {
    /// 20 m bins from 0 to 2 km.
    pub const DEFAULT: HistogramSpec = HistogramSpec { bin_width_km: 0.02, max_radius_km: 2.0 };

    pub fn n_bins(&self) -> Result<usize, HistogramError> {
        let ratio = self.max_radius_km / self.bin_width_km;
        let n = ratio.round();
        if !(self.bin_width_km > 0.0
            && self.max_radius_km > 0.0
            && n >= 1.0
            && (ratio - n).abs() < 1e-9 * n)
        {
            return Err(HistogramError::BadGeometry {
                width: self.bin_width_km,
                max: self.max_radius_km,
            });
        }
        Ok(n as usize)
    }
}

/// Redistribution weight derived from a previous fit iteration:
/// w(d) = 1 / ρ̃(d), with ρ̃ the amplitude-normalized composite density
/// evaluated at the stroke's nearest-turbine distance.
#[derive(Debug, Clone, Copy)]
pub struct WeightFunction {
    params: ModelParams,
}

impl WeightFunction {
    pub fn new(params: ModelParams) -> Self {
        Self { params }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn weight(&self, d_km: f64) -> f64 {
        1.0 / model::normalized_density(d_km, &self.params)
            .expect("distances from matching are non-negative")
    }
}

/// Distance-binned weighted stroke counts plus accumulated metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedHistogram {
    pub bin_width_km: f64,
    pub max_radius_km: f64,
    /// Weighted counts N_i.
    pub counts: Vec<f64>,
    /// Unweighted counts, kept alongside for Poisson-error estimation.
    pub raw_counts: Vec<u64>,
    /// Accumulated exposure in turbine-years (set by the analysis layer).
    pub turbine_years: f64,
    /// Pairs skipped because their distance fell at or beyond `max_radius_km`.
    pub skipped_out_of_range: u64,
}

impl WeightedHistogram {
    pub fn empty(spec: HistogramSpec) -> Result<Self, HistogramError> {
        let n = spec.n_bins()?;
        Ok(Self {
            bin_width_km: spec.bin_width_km,
            max_radius_km: spec.max_radius_km,
            counts: vec![0.0; n],
            raw_counts: vec![0u64; n],
            turbine_years: 0.0,
            skipped_out_of_range: 0,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    /// Center of bin `i` in km.
    pub fn bin_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.bin_width_km
    }

    /// Annulus area of bin `i`: A_i = 2π·r_i·Δr with r_i the bin center.
    pub fn bin_area(&self, i: usize) -> f64 {
        2.0 * std::f64::consts::PI * self.bin_center(i) * self.bin_width_km
    }

    /// Add another histogram with identical geometry (fixed merge order is
    /// the caller's responsibility).
    pub fn merge(&mut self, other: &WeightedHistogram) -> Result<(), HistogramError> {
        if self.bin_width_km != other.bin_width_km || self.max_radius_km != other.max_radius_km {
            return Err(HistogramError::GeometryMismatch(format!(
                "({}, {}) vs ({}, {})",
                self.bin_width_km, self.max_radius_km, other.bin_width_km, other.max_radius_km
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        for (a, b) in self.raw_counts.iter_mut().zip(&other.raw_counts) {
            *a += b;
        }
        self.turbine_years += other.turbine_years;
        self.skipped_out_of_range += other.skipped_out_of_range;
        Ok(())
    }
}

/// Pairs per accumulation chunk; fixed so the reduction tree is independent
/// of worker count.
const ACCUMULATE_CHUNK: usize = 65536;

/// Accumulate matched pairs into a weighted histogram.
///
/// Bin index is floor(d_k/Δr). Added mass is 1 when the pair's turbine is the
/// stroke's nearest turbine, otherwise `weights.weight(d_l)`; iteration zero
/// passes `None` for exact unit weights. Raw counts always increment by one.
/// Pairs at or beyond the maximum radius are skipped and counted.
pub fn accumulate(
    spec: HistogramSpec,
    pairs: &[MatchedPair],
    weights: Option<&WeightFunction>,
) -> Result<WeightedHistogram, HistogramError> {
    let template = WeightedHistogram::empty(spec)?;
    let chunks: Vec<&[MatchedPair]> = pairs.chunks(ACCUMULATE_CHUNK).collect();
    let mut partials: Vec<WeightedHistogram> = Vec::with_capacity(chunks.len());
    chunks
        .into_par_iter()
        .map(|chunk| {
            let mut h = template.clone();
            accumulate_serial(&mut h, chunk, weights);
            h
        })
        .collect_into_vec(&mut partials);
    let mut out = template;
    for p in &partials {
        out.merge(p)?;
    }
    Ok(out)
}

fn accumulate_serial(
    h: &mut WeightedHistogram,
    pairs: &[MatchedPair],
    weights: Option<&WeightFunction>,
) {
    let n = h.counts.len();
    for p in pairs {
        let bin = (p.distance_km / h.bin_width_km).floor() as usize;
        if p.distance_km >= h.max_radius_km || bin >= n {
            h.skipped_out_of_range += 1;
            continue;
        }
        let mass = match weights {
            None => 1.0,
            Some(w) => {
                if p.is_nearest() {
                    1.0
                } else {
                    w.weight(p.nearest_distance_km)
                }
            }
        };
        h.counts[bin] += mass;
        h.raw_counts[bin] += 1;
    }
}

/// Histogram counts divided by the fitted amplitude; far-field bins approach
/// the bin annulus area.
pub fn normalized_counts(
    h: &WeightedHistogram,
    params: &ModelParams,
) -> Result<Vec<f64>, HistogramError> {
    if params.amplitude() <= 0.0 {
        return Err(HistogramError::BadAmplitude(params.amplitude()));
    }
    Ok(h.counts.iter().map(|c| c / params.amplitude()).collect())
}

/// The four derived representations of a histogram under fitted parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistogramViews {
    /// Bin centers in km.
    pub r_km: Vec<f64>,
    /// N_i / ρ₀ (units km²).
    pub normalized: Vec<f64>,
    /// ρ̃_i = N_i / (A_i·ρ₀).
    pub density: Vec<f64>,
    /// A_i^surplus = N_i/ρ₀ − A_i.
    pub surplus: Vec<f64>,
    /// Prefix sum of the surplus view.
    pub cumulative_surplus: Vec<f64>,
}

pub fn derived_views(
    h: &WeightedHistogram,
    params: &ModelParams,
) -> Result<HistogramViews, HistogramError> {
    let normalized = normalized_counts(h, params)?;
    let n = h.n_bins();
    let mut density = Vec::with_capacity(n);
    let mut surplus = Vec::with_capacity(n);
    let mut cumulative = Vec::with_capacity(n);
    let mut running = 0.0;
    for i in 0..n {
        let area = h.bin_area(i);
        density.push(normalized[i] / area);
        let s = normalized[i] - area;
        surplus.push(s);
        running += s;
        cumulative.push(running);
    }
    Ok(HistogramViews {
        r_km: (0..n).map(|i| h.bin_center(i)).collect(),
        normalized,
        density,
        surplus,
        cumulative_surplus: cumulative,
    })
}
