//! Synthetic stroke datasets generated from known ground-truth parameters —
//! the independent oracle for the fit — plus the Monte Carlo study of how
//! location uncertainty smears the density well.
//!
//! Generation is driven by counter-based ChaCha streams keyed by
//! (seed, phase, chunk-or-turbine), so output is bit-reproducible and
//! independent of how work is scheduled.

use crate::ingest::{EventType, StrokeRecord, TurbineRecord};
use crate::model::EARTH_RADIUS_KM;
use chrono::{DateTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("csv write failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One turbine site on the local generation plane.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TurbineSite {
    pub x_km: f64,
    pub y_km: f64,
    pub tip_height_m: f64,
    pub operational_year: i32,
}

/// Ground-truth well parameters for a turbine.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WellParams {
    /// Ratio of upward to downward discharges.
    pub beta: f64,
    /// Capture e-folding scale in km.
    pub lambda_km: f64,
}

/// Shared or per-turbine ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteParams {
    Shared(WellParams),
    PerTurbine(Vec<WellParams>),
}

impl SiteParams {
    fn get(&self, k: usize) -> WellParams {
        match self {
            SiteParams::Shared(p) => *p,
            SiteParams::PerTurbine(v) => v[k],
        }
    }
}

/// Relative month weights for stroke timestamps. Warm is May-August, cold is
/// November-February, shoulder the remaining four months.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SeasonalMix {
    pub warm_weight: f64,
    pub cold_weight: f64,
    pub shoulder_weight: f64,
}

impl Default for SeasonalMix {
    fn default() -> Self {
        Self { warm_weight: 1.0, cold_weight: 1.0, shoulder_weight: 1.0 }
    }
}

const WARM_MONTHS: [u32; 4] = [5, 6, 7, 8];
const COLD_MONTHS: [u32; 4] = [11, 12, 1, 2];
const SHOULDER_MONTHS: [u32; 4] = [3, 4, 9, 10];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub rng_seed: u64,
    /// Aggregate background stroke density over the whole window, strokes/km².
    pub background_density: f64,
    pub turbine_layout: Vec<TurbineSite>,
    /// Ground truth (beta, lambda) shared or per turbine.
    pub params: SiteParams,
    /// LLS location error per axis in km, shared across the network.
    pub sigma_km: f64,
    /// Radius of the generation disk, centered on the reference point.
    pub domain_radius_km: f64,
    /// Probability that a generated upward discharge is detected.
    pub ul_detection_efficiency: f64,
    /// Mean count of additional cold-season upward strokes per turbine over
    /// the window (a self-initiated-like population, independent of the local
    /// density). Also thinned by the detection efficiency.
    pub cold_season_ul_mean: f64,
    pub reference_lat: f64,
    pub reference_lon: f64,
    /// First year of the simulated window.
    pub start_year: i32,
    /// Number of whole years simulated.
    pub n_years: u32,
    pub seasonal: SeasonalMix,
}

impl SynthConfig {
    /// Single turbine at the disk center with CONUS-typical defaults.
    pub fn single_turbine(seed: u64, background_density: f64, beta: f64) -> Self {
        Self {
            rng_seed: seed,
            background_density,
            turbine_layout: vec![TurbineSite {
                x_km: 0.0,
                y_km: 0.0,
                tip_height_m: 120.0,
                operational_year: 2016,
            }],
            params: SiteParams::Shared(WellParams { beta, lambda_km: 0.1 }),
            sigma_km: 0.045,
            domain_radius_km: 2.5,
            ul_detection_efficiency: 1.0,
            cold_season_ul_mean: 0.0,
            reference_lat: 35.0,
            reference_lon: -101.0,
            start_year: 2017,
            n_years: 7,
            seasonal: SeasonalMix::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.turbine_layout.is_empty() {
            return Err(SynthError::Invalid("turbine layout is empty".into()));
        }
        if let SiteParams::PerTurbine(v) = &self.params {
            if v.len() != self.turbine_layout.len() {
                return Err(SynthError::Invalid(format!(
                    "{} parameter sets for {} turbines",
                    v.len(),
                    self.turbine_layout.len()
                )));
            }
        }
        for k in 0..self.turbine_layout.len() {
            let p = self.params.get(k);
            if !(p.beta >= 0.0 && p.lambda_km > 0.0) {
                return Err(SynthError::Invalid(format!("bad well params at turbine {k}")));
            }
        }
        if !(self.background_density > 0.0
            && self.domain_radius_km > 0.0
            && self.sigma_km >= 0.0
            && (0.0..=1.0).contains(&self.ul_detection_efficiency)
            && self.cold_season_ul_mean >= 0.0
            && self.n_years >= 1)
        {
            return Err(SynthError::Invalid("non-positive scale or efficiency out of range".into()));
        }
        let mix = self.seasonal;
        if !(mix.warm_weight >= 0.0
            && mix.cold_weight >= 0.0
            && mix.shoulder_weight >= 0.0
            && mix.warm_weight + mix.cold_weight + mix.shoulder_weight > 0.0)
        {
            return Err(SynthError::Invalid("seasonal weights must be non-negative".into()));
        }
        // every turbine's 2 km analysis disk plus smear margin must fit
        let margin = 2.0 + 5.0 * self.sigma_km;
        for (k, t) in self.turbine_layout.iter().enumerate() {
            if (t.x_km * t.x_km + t.y_km * t.y_km).sqrt() + margin > self.domain_radius_km {
                return Err(SynthError::Invalid(format!(
                    "turbine {k} analysis disk extends beyond the generation domain"
                )));
            }
        }
        Ok(())
    }

    /// Turbine records as the ingest module would produce them.
    pub fn turbine_records(&self) -> Vec<TurbineRecord> {
        self.turbine_layout
            .iter()
            .enumerate()
            .map(|(k, site)| {
                let (lat, lon) = self.to_lat_lon(site.x_km, site.y_km);
                TurbineRecord {
                    turbine_id: format!("synth-{k:05}"),
                    latitude: lat,
                    longitude: lon,
                    tip_height_m: site.tip_height_m,
                    operational_year: site.operational_year,
                    location_confidence: 3,
                }
            })
            .collect()
    }

    fn to_lat_lon(&self, x_km: f64, y_km: f64) -> (f64, f64) {
        let lat = self.reference_lat + (y_km / EARTH_RADIUS_KM).to_degrees();
        let lon = self.reference_lon
            + (x_km / (EARTH_RADIUS_KM * self.reference_lat.to_radians().cos())).to_degrees();
        (lat, lon)
    }
}

/// Per-stroke ground-truth label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "turbine")]
pub enum StrokeLabel {
    Ground,
    CapturedCg(usize),
    Upward(usize),
}

/// True per-turbine event counts after detection-efficiency thinning.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct TurbineTruth {
    pub captured_cg: u64,
    pub ul_generated: u64,
    pub ul_detected: u64,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub strokes: Vec<StrokeRecord>,
    /// Aligned with `strokes`.
    pub labels: Vec<StrokeLabel>,
    pub per_turbine: Vec<TurbineTruth>,
    pub turbines: Vec<TurbineRecord>,
}

// RNG stream phases
const PHASE_FIELD: u64 = 0;
const PHASE_CAPTURE: u64 = 1;
const PHASE_UL: u64 = 2;
const PHASE_NOISE_FIELD: u64 = 3;
const PHASE_NOISE_TURBINE: u64 = 4;
const PHASE_TIME_FIELD: u64 = 5;
const PHASE_TIME_TURBINE: u64 = 6;
const PHASE_CURRENT_FIELD: u64 = 7;
const PHASE_CURRENT_TURBINE: u64 = 8;

fn stream_rng(seed: u64, phase: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((phase << 40) ^ index);
    rng
}

const FIELD_CHUNK: u64 = 65536;

struct RawEvent {
    x_km: f64,
    y_km: f64,
    label: StrokeLabel,
    order: u64,
    /// Timestamp restricted to cold months (the self-initiated-like
    /// population).
    cold_only: bool,
}

/// Generate a synthetic stroke set with ground-truth labels.
///
/// A homogeneous Poisson field over the domain disk; each point relocated to
/// its nearest turbine with probability exp(-r/λ); per turbine an independent
/// Poisson count of upward strokes placed at the turbine and thinned by the
/// detection efficiency; every surviving event perturbed by isotropic 2-D
/// Gaussian noise of `sigma_km` per axis, stamped, and mapped to lat/lon.
pub fn generate(config: &SynthConfig) -> Result<SynthOutput, SynthError> {
    config.validate()?;
    let sites = &config.turbine_layout;
    let n_turbines = sites.len();
    let area = PI * config.domain_radius_km * config.domain_radius_km;

    let n_field = {
        let mut rng = stream_rng(config.rng_seed, PHASE_FIELD, u64::MAX);
        sample_poisson(&mut rng, config.background_density * area)
    };

    // field points, chunked for deterministic parallelism
    let n_chunks = n_field.div_ceil(FIELD_CHUNK) as usize;
    let mut field_events: Vec<Vec<RawEvent>> = Vec::with_capacity(n_chunks);
    let mut captured_per_chunk: Vec<Vec<u64>> = Vec::with_capacity(n_chunks);
    (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let chunk = chunk as u64;
            let count = FIELD_CHUNK.min(n_field - chunk * FIELD_CHUNK);
            let mut pos_rng = stream_rng(config.rng_seed, PHASE_FIELD, chunk);
            let mut cap_rng = stream_rng(config.rng_seed, PHASE_CAPTURE, chunk);
            let mut events = Vec::with_capacity(count as usize);
            let mut captured = vec![0u64; n_turbines];
            for i in 0..count {
                let r = config.domain_radius_km * pos_rng.random::<f64>().sqrt();
                let theta = 2.0 * PI * pos_rng.random::<f64>();
                let (x, y) = (r * theta.cos(), r * theta.sin());
                // nearest turbine on the plane
                let mut best = 0usize;
                let mut best_d2 = f64::INFINITY;
                for (k, s) in sites.iter().enumerate() {
                    let d2 = (x - s.x_km).powi(2) + (y - s.y_km).powi(2);
                    if d2 < best_d2 {
                        best_d2 = d2;
                        best = k;
                    }
                }
                let d = best_d2.sqrt();
                let p_capture = (-d / config.params.get(best).lambda_km).exp();
                let order = chunk * FIELD_CHUNK + i;
                if cap_rng.random::<f64>() < p_capture {
                    captured[best] += 1;
                    events.push(RawEvent {
                        x_km: sites[best].x_km,
                        y_km: sites[best].y_km,
                        label: StrokeLabel::CapturedCg(best),
                        order,
                        cold_only: false,
                    });
                } else {
                    events.push(RawEvent {
                        x_km: x,
                        y_km: y,
                        label: StrokeLabel::Ground,
                        order,
                        cold_only: false,
                    });
                }
            }
            (events, captured)
        })
        .unzip_into_vecs(&mut field_events, &mut captured_per_chunk);

    let mut per_turbine = vec![TurbineTruth::default(); n_turbines];
    for captured in &captured_per_chunk {
        for (k, c) in captured.iter().enumerate() {
            per_turbine[k].captured_cg += c;
        }
    }

    // upward discharges per turbine: Poisson with the analytic isolated-well
    // mean, plus the optional cold-season population
    let mut turbine_events: Vec<RawEvent> = Vec::new();
    let mut order_base = n_field;
    for (k, site) in sites.iter().enumerate() {
        let p = config.params.get(k);
        let mut rng = stream_rng(config.rng_seed, PHASE_UL, k as u64);
        let mean_ul =
            p.beta * 2.0 * PI * p.lambda_km * p.lambda_km * config.background_density;
        let n_ul = sample_poisson(&mut rng, mean_ul);
        let n_cold = sample_poisson(&mut rng, config.cold_season_ul_mean);
        per_turbine[k].ul_generated = n_ul + n_cold;
        for i in 0..n_ul + n_cold {
            if rng.random::<f64>() < config.ul_detection_efficiency {
                per_turbine[k].ul_detected += 1;
                turbine_events.push(RawEvent {
                    x_km: site.x_km,
                    y_km: site.y_km,
                    label: StrokeLabel::Upward(k),
                    order: order_base + i,
                    cold_only: i >= n_ul,
                });
            }
        }
        order_base += n_ul + n_cold;
    }

    // location noise, timestamps, currents, lat/lon mapping
    let mut assembled: Vec<(StrokeRecord, StrokeLabel, u64)> = Vec::with_capacity(
        field_events.iter().map(Vec::len).sum::<usize>() + turbine_events.len(),
    );
    let noise = Normal::new(0.0, config.sigma_km).expect("sigma validated");
    for (chunk, events) in field_events.iter().enumerate() {
        let mut noise_rng = stream_rng(config.rng_seed, PHASE_NOISE_FIELD, chunk as u64);
        let mut time_rng = stream_rng(config.rng_seed, PHASE_TIME_FIELD, chunk as u64);
        let mut cur_rng = stream_rng(config.rng_seed, PHASE_CURRENT_FIELD, chunk as u64);
        for ev in events {
            assembled.push(finish_event(config, ev, &noise, &mut noise_rng, &mut time_rng, &mut cur_rng, false));
        }
    }
    {
        let mut noise_rng = stream_rng(config.rng_seed, PHASE_NOISE_TURBINE, 0);
        let mut time_rng = stream_rng(config.rng_seed, PHASE_TIME_TURBINE, 0);
        let mut cur_rng = stream_rng(config.rng_seed, PHASE_CURRENT_TURBINE, 0);
        for ev in &turbine_events {
            assembled.push(finish_event(
                config,
                ev,
                &noise,
                &mut noise_rng,
                &mut time_rng,
                &mut cur_rng,
                ev.cold_only,
            ));
        }
    }

    assembled.sort_by(|a, b| a.0.timestamp.cmp(&b.0.timestamp).then(a.2.cmp(&b.2)));
    let mut strokes = Vec::with_capacity(assembled.len());
    let mut labels = Vec::with_capacity(assembled.len());
    for (s, l, _) in assembled {
        strokes.push(s);
        labels.push(l);
    }

    Ok(SynthOutput { strokes, labels, per_turbine, turbines: config.turbine_records() })
}

fn finish_event(
    config: &SynthConfig,
    ev: &RawEvent,
    noise: &Normal<f64>,
    noise_rng: &mut ChaCha8Rng,
    time_rng: &mut ChaCha8Rng,
    cur_rng: &mut ChaCha8Rng,
    cold_only: bool,
) -> (StrokeRecord, StrokeLabel, u64) {
    let x = ev.x_km + noise.sample(noise_rng);
    let y = ev.y_km + noise.sample(noise_rng);
    let (lat, lon) = config.to_lat_lon(x, y);
    let timestamp = sample_timestamp(config, time_rng, cold_only);
    let peak = -15.0 + 8.0 * noise_std(cur_rng);
    (
        StrokeRecord {
            timestamp,
            latitude: lat,
            longitude: lon,
            peak_current_ka: peak,
            event_type: EventType::CgStroke,
        },
        ev.label,
        ev.order,
    )
}

fn noise_std(rng: &mut ChaCha8Rng) -> f64 {
    Normal::new(0.0, 1.0).unwrap().sample(rng)
}

fn sample_timestamp(config: &SynthConfig, rng: &mut ChaCha8Rng, cold_only: bool) -> DateTime<Utc> {
    let year = config.start_year + rng.random_range(0..config.n_years) as i32;
    let month = if cold_only {
        COLD_MONTHS[rng.random_range(0..4)]
    } else {
        let mix = config.seasonal;
        let total = 4.0 * (mix.warm_weight + mix.cold_weight + mix.shoulder_weight);
        let mut u = rng.random::<f64>() * total;
        let mut chosen = SHOULDER_MONTHS[3];
        'outer: for (months, w) in [
            (WARM_MONTHS, mix.warm_weight),
            (COLD_MONTHS, mix.cold_weight),
            (SHOULDER_MONTHS, mix.shoulder_weight),
        ] {
            for m in months {
                if u < w {
                    chosen = m;
                    break 'outer;
                }
                u -= w;
            }
        }
        chosen
    };
    let day = rng.random_range(1..=28);
    let secs = rng.random_range(0..86_400u32);
    let millis = rng.random_range(0..1000u32);
    Utc.with_ymd_and_hms(year, month, day, 0, 0, 0)
        .unwrap()
        .checked_add_signed(chrono::Duration::milliseconds(secs as i64 * 1000 + millis as i64))
        .unwrap()
}

/// Poisson sampling that stays stable for large means (normal approximation
/// above 1e9 where rand_distr's algorithm loses precision anyway).
fn sample_poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng) as u64
}

// ---------------------------------------------------------------------------
// CSV / sidecar emission
// ---------------------------------------------------------------------------

/// Write strokes in the default ingest schema (time,lat,lon,peak_current,type).
pub fn write_stroke_csv<W: Write>(w: W, strokes: &[StrokeRecord]) -> Result<(), SynthError> {
    let mut writer = csv::Writer::from_writer(w);
    writer.write_record(["time", "lat", "lon", "peak_current", "type"])?;
    for s in strokes {
        writer.write_record([
            s.timestamp.format("%Y-%m-%dT%H:%M:%S%.3fZ").to_string(),
            format!("{}", s.latitude),
            format!("{}", s.longitude),
            format!("{}", s.peak_current_ka),
            "CG".to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Write turbines in the default ingest schema.
pub fn write_turbine_csv<W: Write>(w: W, turbines: &[TurbineRecord]) -> Result<(), SynthError> {
    let mut writer = csv::Writer::from_writer(w);
    writer.write_record(["id", "lat", "lon", "total_height_m", "p_year", "loc_conf"])?;
    for t in turbines {
        writer.write_record([
            t.turbine_id.clone(),
            format!("{}", t.latitude),
            format!("{}", t.longitude),
            format!("{}", t.tip_height_m),
            format!("{}", t.operational_year),
            format!("{}", t.location_confidence),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Truth sidecar: per-stroke labels, per-turbine counts, and the config echo.
#[derive(Debug, Serialize, Deserialize)]
pub struct TruthSidecar {
    pub config: SynthConfig,
    pub labels: Vec<StrokeLabel>,
    pub per_turbine: Vec<TurbineTruth>,
}

// ---------------------------------------------------------------------------
// Monte Carlo well study
// ---------------------------------------------------------------------------

/// Normalized radial density profile of location-smeared non-captured strokes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WellProfile {
    pub sigma_km: f64,
    pub lambda_km: f64,
    pub bin_width_km: f64,
    pub counts: Vec<u64>,
    /// counts normalized so the far field approaches 1.
    pub density: Vec<f64>,
    pub n_samples: u64,
}

impl WellProfile {
    pub fn bin_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.bin_width_km
    }
}

/// Sample non-captured strokes from density ∝ (1 - e^{-r/λ}), apply Gaussian
/// location scatter, and histogram the result radially.
///
/// The sampling disk extends five sigma beyond `max_radius_km` so the
/// returned profile carries no edge truncation from scatter across the
/// boundary; the normalization constant accounts for the padded area.
pub fn monte_carlo_well(
    sigma_values_km: &[f64],
    lambda_km: f64,
    n_samples: u64,
    max_radius_km: f64,
    bin_width_km: f64,
    seed: u64,
) -> Vec<WellProfile> {
    sigma_values_km
        .iter()
        .map(|&sigma| {
            let r_pad = max_radius_km + 5.0 * sigma;
            let n_bins = (max_radius_km / bin_width_km).round() as usize;
            let mut counts = vec![0u64; n_bins];
            let mut rng = stream_rng(seed, 9, (sigma * 1e6) as u64);
            let noise = Normal::new(0.0, sigma).expect("sigma >= 0");
            let mut accepted = 0u64;
            while accepted < n_samples {
                let r = r_pad * rng.random::<f64>().sqrt();
                if rng.random::<f64>() >= (1.0 - (-r / lambda_km).exp()) {
                    continue; // captured: not part of the well population
                }
                accepted += 1;
                let theta = 2.0 * PI * rng.random::<f64>();
                let x = r * theta.cos() + noise.sample(&mut rng);
                let y = r * theta.sin() + noise.sample(&mut rng);
                let rr = (x * x + y * y).sqrt();
                let bin = (rr / bin_width_km).floor() as usize;
                if bin < n_bins {
                    counts[bin] += 1;
                }
            }
            // normalization: N / ∫ (1 - e^{-r/λ}) 2πr dr over the padded disk
            let lam = lambda_km;
            let well_integral = PI * r_pad * r_pad
                - 2.0 * PI * lam * lam * (1.0 - (-r_pad / lam).exp() * (r_pad / lam + 1.0));
            let background = n_samples as f64 / well_integral;
            let density = counts
                .iter()
                .enumerate()
                .map(|(i, &c)| {
                    let r_c = (i as f64 + 0.5) * bin_width_km;
                    c as f64 / (2.0 * PI * r_c * bin_width_km) / background
                })
                .collect();
            WellProfile {
                sigma_km: sigma,
                lambda_km,
                bin_width_km,
                counts,
                density,
                n_samples,
            }
        })
        .collect()
}
