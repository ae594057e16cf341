//! Pure mathematical functions of the stroke density/count model and the
//! reference engineering curves.
//!
//! All distances are in kilometers internally. Reference formulas that take a
//! tip height `H` in meters perform the unit conversion at the boundary. No
//! function here performs I/O or holds state; everything is safe to call
//! concurrently.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Mean Earth radius in km (IUGG R1).
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("{name} must be finite and non-negative, got {value}")]
    NonNegative { name: &'static str, value: f64 },
    #[error("{name} must be finite and strictly positive, got {value}")]
    Positive { name: &'static str, value: f64 },
    #[error("tip height must exceed {min} m for this curve, got {value}")]
    HeightDomain { min: f64, value: f64 },
}

fn check_nonneg(name: &'static str, value: f64) -> Result<f64, ModelError> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(ModelError::NonNegative { name, value })
    }
}

fn check_pos(name: &'static str, value: f64) -> Result<f64, ModelError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(ModelError::Positive { name, value })
    }
}

// ---------------------------------------------------------------------------
// Parameter types
// ---------------------------------------------------------------------------

/// Fitted parameters of the composite stroke-count model.
///
/// `amplitude` is the aggregate background normalization (strokes per km²
/// accumulated over the observation period and turbine set), `beta` the ratio
/// of upward to downward discharges, `sigma` the LLS location uncertainty in
/// km, and `lambda` the capture e-folding scale in km.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    amplitude: f64,
    beta: f64,
    sigma: f64,
    lambda: f64,
}

impl ModelParams {
    pub fn new(amplitude: f64, beta: f64, sigma: f64, lambda: f64) -> Result<Self, ModelError> {
        check_nonneg("amplitude", amplitude)?;
        check_nonneg("beta", beta)?;
        check_pos("sigma", sigma)?;
        check_pos("lambda", lambda)?;
        Ok(Self { amplitude, beta, sigma, lambda })
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// LLS location uncertainty in km.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Capture e-folding scale in km.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.amplitude, self.beta, self.sigma, self.lambda]
    }
}

/// Inputs to the reference engineering models.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ReferenceModelInputs {
    /// Tip height H in meters. Zero is admitted as a degenerate height for
    /// the IEC rate; the Eriksson upward-probability curve separately
    /// requires H > 78 m.
    pub tip_height_m: f64,
    /// IEC location scaling factor C_D.
    pub location_factor: f64,
    /// Local strike-point density in strike points / km² / yr.
    pub density_sp: f64,
    /// Upward-discharge detection-efficiency correction ξ.
    pub ul_scale: f64,
}

impl ReferenceModelInputs {
    pub fn new(
        tip_height_m: f64,
        location_factor: f64,
        density_sp: f64,
        ul_scale: f64,
    ) -> Result<Self, ModelError> {
        check_nonneg("tip_height_m", tip_height_m)?;
        check_pos("location_factor", location_factor)?;
        check_nonneg("density_sp", density_sp)?;
        check_pos("ul_scale", ul_scale)?;
        Ok(Self { tip_height_m, location_factor, density_sp, ul_scale })
    }
}

/// Conversion factors between stroke, strike-point, and flash densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConversionFactors {
    /// α^(SPST): strokes per ground strike point.
    pub strokes_per_strike_point: f64,
    /// α^(GFSP): ground strike points per flash.
    pub strike_points_per_flash: f64,
}

impl ConversionFactors {
    pub fn new(
        strokes_per_strike_point: f64,
        strike_points_per_flash: f64,
    ) -> Result<Self, ModelError> {
        check_pos("strokes_per_strike_point", strokes_per_strike_point)?;
        check_pos("strike_points_per_flash", strike_points_per_flash)?;
        Ok(Self { strokes_per_strike_point, strike_points_per_flash })
    }
}

impl Default for ConversionFactors {
    /// CONUS NLDN averages: 2.7 strokes per flash and 1.69 strike points per
    /// flash give 2.7/1.69 ≈ 1.6 strokes per strike point.
    fn default() -> Self {
        Self { strokes_per_strike_point: 1.6, strike_points_per_flash: 1.69 }
    }
}

// ---------------------------------------------------------------------------
// Density / count model
// ---------------------------------------------------------------------------

/// Probability that a stroke which would have hit the ground at distance `r`
/// from the turbine strikes the turbine instead: exp(-r/λ).
pub fn strike_probability(r_km: f64, lambda_km: f64) -> Result<f64, ModelError> {
    check_nonneg("r", r_km)?;
    check_pos("lambda", lambda_km)?;
    Ok((-r_km / lambda_km).exp())
}

/// Ground-stroke density well around a turbine: amplitude·(1 - exp(-r/λ)).
pub fn well_density(r_km: f64, params: &ModelParams) -> Result<f64, ModelError> {
    check_nonneg("r", r_km)?;
    Ok(params.amplitude * (1.0 - (-r_km / params.lambda).exp()))
}

/// Composite density normalized by amplitude:
/// ρ̃(r) = (1+β)(λ²/σ²)·exp(-r²/2σ²) + 1 - exp(-r/λ).
///
/// This is the quantity the redistribution weights invert; it is independent
/// of the fitted amplitude.
pub fn normalized_density(r_km: f64, params: &ModelParams) -> Result<f64, ModelError> {
    check_nonneg("r", r_km)?;
    let lam_sig = params.lambda * params.lambda / (params.sigma * params.sigma);
    let gauss = (-r_km * r_km / (2.0 * params.sigma * params.sigma)).exp();
    Ok((1.0 + params.beta) * lam_sig * gauss + 1.0 - (-r_km / params.lambda).exp())
}

/// Overall stroke density: amplitude·[(1+β)(λ²/σ²)e^{-r²/2σ²} + 1 - e^{-r/λ}].
///
/// The Gaussian term is the location-uncertainty-smeared population of strikes
/// at the turbine; the well term is the unsmeared ground-stroke deficit.
pub fn composite_density(r_km: f64, params: &ModelParams) -> Result<f64, ModelError> {
    Ok(params.amplitude * normalized_density(r_km, params)?)
}

/// Expected count in a distance ring of width `dr` centered at `r`:
/// N(r) ≈ 2π·ρ(r)·r·Δr.
pub fn ring_counts(r_km: f64, dr_km: f64, params: &ModelParams) -> Result<f64, ModelError> {
    check_pos("dr", dr_km)?;
    Ok(2.0 * PI * composite_density(r_km, params)? * r_km * dr_km)
}

/// Closed form of the cumulative surplus area
/// 2π ∫₀^r (ρ(r')/amplitude - 1)·r' dr':
///
/// 2πλ²·[(1+β)(1 - e^{-r²/2σ²}) + e^{-r/λ}(r/λ + 1) - 1]
///
/// The r → ∞ limit is 2πλ²β, the upward-discharge collection area.
pub fn cumulative_surplus(r_km: f64, params: &ModelParams) -> Result<f64, ModelError> {
    check_nonneg("r", r_km)?;
    let lam = params.lambda;
    let gauss = (-r_km * r_km / (2.0 * params.sigma * params.sigma)).exp();
    let well = (-r_km / lam).exp() * (r_km / lam + 1.0);
    Ok(2.0 * PI * lam * lam * ((1.0 + params.beta) * (1.0 - gauss) + well - 1.0))
}

/// Collection areas in km² derived from fitted parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollectionAreas {
    /// Downward CG collection area 2πλ².
    pub cg_km2: f64,
    /// Upward-discharge collection area 2πλ²β.
    pub ul_km2: f64,
    /// Total 2πλ²(1+β).
    pub total_km2: f64,
}

pub fn collection_areas(params: &ModelParams) -> CollectionAreas {
    let cg = 2.0 * PI * params.lambda * params.lambda;
    let ul = cg * params.beta;
    CollectionAreas { cg_km2: cg, ul_km2: ul, total_km2: cg + ul }
}

/// Attraction radii in km, referenced to stroke (ST) and strike-point (SP)
/// densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttractionRadii {
    pub r_cg_st_km: f64,
    pub r_ul_st_km: f64,
    pub r_cg_sp_km: f64,
    pub r_ul_sp_km: f64,
    /// Total strike-point-referenced radius √(2·α^(SPST)·(1+β))·λ.
    pub r_total_sp_km: f64,
}

pub fn attraction_radii(params: &ModelParams, conv: &ConversionFactors) -> AttractionRadii {
    let lam = params.lambda;
    let r_cg_st = 2.0_f64.sqrt() * lam;
    let r_ul_st = (2.0 * params.beta).sqrt() * lam;
    let sp = conv.strokes_per_strike_point.sqrt();
    AttractionRadii {
        r_cg_st_km: r_cg_st,
        r_ul_st_km: r_ul_st,
        r_cg_sp_km: sp * r_cg_st,
        r_ul_sp_km: sp * r_ul_st,
        r_total_sp_km: (2.0 * conv.strokes_per_strike_point * (1.0 + params.beta)).sqrt() * lam,
    }
}

/// Convert a flash-referenced attraction radius to strike-point reference:
/// R^(SP) = R^(GF) / √α^(GFSP).
pub fn flash_to_strike_point_radius(r_gf_km: f64, conv: &ConversionFactors) -> f64 {
    r_gf_km / conv.strike_points_per_flash.sqrt()
}

/// Convert a strike-point-referenced radius to stroke reference:
/// R^(ST) = R^(SP) / √α^(SPST). Inverse of the scaling in [`attraction_radii`].
pub fn strike_point_to_stroke_radius(r_sp_km: f64, conv: &ConversionFactors) -> f64 {
    r_sp_km / conv.strokes_per_strike_point.sqrt()
}

// ---------------------------------------------------------------------------
// Reference engineering curves
// ---------------------------------------------------------------------------

/// Eriksson's tower-derived probability of upward lightning in percent:
/// P_UL = 52.8·ln(H) - 230, valid for H > 78 m, clamped to [0, 100].
pub fn eriksson_upward_fraction(h_m: f64) -> Result<f64, ModelError> {
    if !h_m.is_finite() || h_m <= 78.0 {
        return Err(ModelError::HeightDomain { min: 78.0, value: h_m });
    }
    Ok((52.8 * h_m.ln() - 230.0).clamp(0.0, 100.0))
}

/// Eriksson's flash-referenced collection area in m²: A^(GF) = 24·H^2.05.
pub fn eriksson_collection_area(h_m: f64) -> Result<f64, ModelError> {
    check_pos("h", h_m)?;
    Ok(24.0 * h_m.powf(2.05))
}

/// IEC 61400-24 strike rate: ρ^(SP)·π(3H)²·C_D, with H converted to km.
pub fn iec_strike_rate(inputs: &ReferenceModelInputs) -> f64 {
    let h_km = inputs.tip_height_m / 1000.0;
    inputs.density_sp * PI * (3.0 * h_km) * (3.0 * h_km) * inputs.location_factor
}

/// Regression radii in meters fitted to the warm-season sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionRadii {
    pub r_cg_sp_m: f64,
    pub r_tul_sp_m: f64,
}

/// Strike-point-referenced regression radii: R_CG = 11 + 1.6H and
/// R_TUL = -300 + 3.5H, the latter clamped at zero below its H-axis crossing.
pub fn regression_radii(h_m: f64) -> Result<RegressionRadii, ModelError> {
    check_pos("h", h_m)?;
    Ok(RegressionRadii {
        r_cg_sp_m: 11.0 + 1.6 * h_m,
        r_tul_sp_m: (-300.0 + 3.5 * h_m).max(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn params(amplitude: f64, beta: f64, sigma: f64, lambda: f64) -> ModelParams {
        ModelParams::new(amplitude, beta, sigma, lambda).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(1.0, 0.0, 0.045, 0.1).is_ok());
        assert!(ModelParams::new(-1.0, 0.0, 0.045, 0.1).is_err());
        assert!(ModelParams::new(1.0, -0.1, 0.045, 0.1).is_err());
        assert!(ModelParams::new(1.0, 0.0, 0.0, 0.1).is_err());
        assert!(ModelParams::new(1.0, 0.0, 0.045, 0.0).is_err());
        assert!(ModelParams::new(1.0, 0.0, f64::NAN, 0.1).is_err());
    }

    #[test]
    fn strike_probability_examples() {
        assert_relative_eq!(strike_probability(0.0, 0.1).unwrap(), 1.0);
        assert_relative_eq!(
            strike_probability(0.1, 0.1).unwrap(),
            (-1.0_f64).exp(),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            strike_probability(2.0, 0.1).unwrap(),
            (-20.0_f64).exp(),
            max_relative = 1e-12
        );
        assert!(strike_probability(-0.1, 0.1).is_err());
        assert!(strike_probability(f64::INFINITY, 0.1).is_err());
        assert!(strike_probability(0.1, 0.0).is_err());
    }

    #[test]
    fn strike_probability_monotone() {
        let mut last = 1.0;
        for i in 1..200 {
            let p = strike_probability(i as f64 * 0.01, 0.1).unwrap();
            assert!(p <= last);
            last = p;
        }
    }

    #[test]
    fn well_density_examples() {
        let p = params(1.0, 0.0, 0.045, 0.1);
        assert_eq!(well_density(0.0, &p).unwrap(), 0.0);
        assert_relative_eq!(
            well_density(1.0, &p).unwrap(),
            1.0 - (-10.0_f64).exp(),
            max_relative = 1e-12
        );
        let p2 = params(2.0, 0.0, 0.045, 0.1);
        assert_relative_eq!(
            well_density(0.1, &p2).unwrap(),
            2.0 * (1.0 - (-1.0_f64).exp()),
            max_relative = 1e-12
        );
    }

    #[test]
    fn composite_density_examples() {
        let p = params(1.0, 0.0, 0.045, 0.1);
        // Gaussian term at r=0 with zero well contribution.
        assert_relative_eq!(
            composite_density(0.0, &p).unwrap(),
            (0.1_f64 / 0.045).powi(2),
            max_relative = 1e-12
        );
        // Far-field asymptote.
        let far = composite_density(20.0 * 0.1, &p).unwrap();
        assert_relative_eq!(far, 1.0, max_relative = 1e-6);
        // Direct evaluation with beta=1 at r=sigma.
        let p3 = params(1.0, 1.0, 0.045, 0.1);
        let expect = 2.0 * (0.1_f64 / 0.045).powi(2) * (-0.5_f64).exp() + 1.0
            - (-0.45_f64).exp();
        assert_relative_eq!(composite_density(0.045, &p3).unwrap(), expect, max_relative = 1e-12);
        assert_abs_diff_eq!(expect, 6.3526, epsilon = 2e-4);
    }

    #[test]
    fn ring_counts_examples() {
        let p = params(1.0, 0.5, 0.045, 0.1);
        assert_eq!(ring_counts(0.0, 0.02, &p).unwrap(), 0.0);
        // Far-field asymptote reaches the bin annulus area 2π·2·0.02 ≈ 0.25 km².
        let far = ring_counts(2.0, 0.02, &p).unwrap();
        assert_relative_eq!(far, 2.0 * PI * 2.0 * 0.02, max_relative = 1e-6);
        assert_abs_diff_eq!(far, 0.2513, epsilon = 1e-4);
        // Direct evaluation near the origin.
        let p0 = params(1.0, 0.0, 0.045, 0.1);
        let dens = (0.1_f64 / 0.045).powi(2) * (-0.02_f64 * 0.02 / (2.0 * 0.045 * 0.045)).exp()
            + 1.0
            - (-0.2_f64).exp();
        assert_relative_eq!(
            ring_counts(0.02, 0.02, &p0).unwrap(),
            2.0 * PI * 0.02 * 0.02 * dens,
            max_relative = 1e-12
        );
    }

    #[test]
    fn cumulative_surplus_limits() {
        let p = params(1.0, 0.5, 0.045, 0.1);
        assert_abs_diff_eq!(cumulative_surplus(0.0, &p).unwrap(), 0.0, epsilon = 1e-15);
        // r → ∞ limit equals 2πλ²β.
        assert_relative_eq!(
            cumulative_surplus(50.0, &p).unwrap(),
            2.0 * PI * 0.01 * 0.5,
            max_relative = 1e-9
        );
        let p0 = params(1.0, 0.0, 0.045, 0.1);
        assert_abs_diff_eq!(cumulative_surplus(50.0, &p0).unwrap(), 0.0, epsilon = 1e-12);
    }

    /// Simpson's rule on [0, r] — the independent quadrature oracle for the
    /// closed-form cumulative surplus.
    fn surplus_quadrature(r: f64, p: &ModelParams, n: usize) -> f64 {
        let h = r / n as f64;
        let f = |x: f64| 2.0 * PI * (normalized_density(x, p).unwrap() - 1.0) * x;
        let mut sum = f(0.0) + f(r);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            sum += w * f(i as f64 * h);
        }
        sum * h / 3.0
    }

    #[test]
    fn cumulative_surplus_matches_quadrature() {
        for &(beta, sigma, lambda) in &[
            (0.0, 0.045, 0.1),
            (0.5, 0.045, 0.1),
            (1.31, 0.02, 0.05),
            (0.22, 0.08, 0.167),
            (2.0, 0.06, 0.12),
        ] {
            let p = params(1.0, beta, sigma, lambda);
            for &r in &[sigma, lambda, 5.0 * lambda, 2.0] {
                let oracle = surplus_quadrature(r, &p, 4096);
                let closed = cumulative_surplus(r, &p).unwrap();
                let scale = closed.abs().max(2.0 * PI * lambda * lambda * 1e-3);
                assert!(
                    (closed - oracle).abs() / scale < 1e-6,
                    "beta={beta} sigma={sigma} lambda={lambda} r={r}: {closed} vs {oracle}"
                );
            }
        }
    }

    #[test]
    fn strike_probability_integrates_to_cg_area() {
        // 2π ∫ e^{-r/λ} r dr = 2πλ², checked by Simpson quadrature out to 60λ.
        let lambda = 0.1;
        let r_max = 60.0 * lambda;
        let n = 8192;
        let h = r_max / n as f64;
        let f = |x: f64| strike_probability(x, lambda).unwrap() * x;
        let mut sum = f(0.0) + f(r_max);
        for i in 1..n {
            sum += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        let integral = 2.0 * PI * sum * h / 3.0;
        assert_relative_eq!(integral, 2.0 * PI * lambda * lambda, max_relative = 1e-6);
    }

    #[test]
    fn collection_areas_examples() {
        let p = params(1.0, 0.0, 0.045, 0.1);
        let a = collection_areas(&p);
        assert_relative_eq!(a.cg_km2, 2.0 * PI * 0.01, max_relative = 1e-12);
        assert_eq!(a.ul_km2, 0.0);
        assert_eq!(a.total_km2, a.cg_km2);

        let p5 = params(1.0, 1.31, 0.045, 0.1);
        assert_relative_eq!(
            collection_areas(&p5).total_km2,
            2.0 * PI * 0.01 * 2.31,
            max_relative = 1e-12
        );
        let p1 = params(1.0, 0.22, 0.045, 0.1);
        assert_relative_eq!(
            collection_areas(&p1).ul_km2,
            2.0 * PI * 0.01 * 0.22,
            max_relative = 1e-12
        );
        // total = cg + ul exactly, monotone in beta and lambda
        let a_lo = collection_areas(&params(1.0, 0.2, 0.045, 0.08));
        let a_hi_beta = collection_areas(&params(1.0, 0.4, 0.045, 0.08));
        let a_hi_lam = collection_areas(&params(1.0, 0.2, 0.045, 0.12));
        assert!(a_hi_beta.total_km2 > a_lo.total_km2);
        assert!(a_hi_lam.total_km2 > a_lo.total_km2);
    }

    #[test]
    fn attraction_radii_examples() {
        let conv1 = ConversionFactors::new(1.0, 1.69).unwrap();
        let p = params(1.0, 0.0, 0.045, 0.1);
        let r = attraction_radii(&p, &conv1);
        assert_relative_eq!(r.r_cg_st_km, 2.0_f64.sqrt() * 0.1, max_relative = 1e-12);
        assert_eq!(r.r_ul_st_km, 0.0);

        let conv = ConversionFactors::default();
        let p1 = params(1.0, 1.0, 0.045, 0.1);
        let r1 = attraction_radii(&p1, &conv);
        assert_relative_eq!(
            r1.r_total_sp_km,
            (2.0_f64 * 1.6 * 2.0).sqrt() * 0.1,
            max_relative = 1e-12
        );
        assert_abs_diff_eq!(r1.r_total_sp_km, 0.25298, epsilon = 1e-5);

        // flash → strike point conversion
        assert_relative_eq!(
            flash_to_strike_point_radius(0.310, &conv),
            0.310 / 1.69_f64.sqrt(),
            max_relative = 1e-12
        );
        assert_abs_diff_eq!(flash_to_strike_point_radius(0.310, &conv), 0.2385, epsilon = 1e-4);
    }

    #[test]
    fn attraction_radii_round_trip() {
        let conv = ConversionFactors::default();
        for &(beta, lambda) in &[(0.22, 0.0956), (0.5, 0.1), (1.31, 0.167)] {
            let p = params(1.0, beta, 0.045, lambda);
            let r = attraction_radii(&p, &conv);
            assert_relative_eq!(
                strike_point_to_stroke_radius(r.r_cg_sp_km, &conv),
                r.r_cg_st_km,
                max_relative = 1e-12
            );
            assert_relative_eq!(
                strike_point_to_stroke_radius(r.r_ul_sp_km, &conv),
                r.r_ul_st_km,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn eriksson_upward_fraction_examples() {
        assert_relative_eq!(
            eriksson_upward_fraction(100.0).unwrap(),
            52.8 * 100.0_f64.ln() - 230.0,
            max_relative = 1e-12
        );
        assert_abs_diff_eq!(eriksson_upward_fraction(100.0).unwrap(), 13.153, epsilon = 1e-3);
        // Near the 78 m root the value is ~0 (the exact root sits at
        // exp(230/52.8) ≈ 77.95 m).
        assert!(eriksson_upward_fraction(78.04).unwrap() < 0.1);
        assert_abs_diff_eq!(eriksson_upward_fraction(200.0).unwrap(), 49.751, epsilon = 1e-3);
        assert!(eriksson_upward_fraction(78.0).is_err());
        assert!(eriksson_upward_fraction(10.0).is_err());
        // Clamp: the raw formula exceeds 100% for extreme heights.
        assert_eq!(eriksson_upward_fraction(1e6).unwrap(), 100.0);
    }

    #[test]
    fn eriksson_collection_area_examples() {
        assert_relative_eq!(
            eriksson_collection_area(100.0).unwrap(),
            24.0 * 100.0_f64.powf(2.05),
            max_relative = 1e-12
        );
        assert_abs_diff_eq!(eriksson_collection_area(100.0).unwrap(), 302142.1, epsilon = 0.5);
        assert_relative_eq!(eriksson_collection_area(1.0).unwrap(), 24.0, max_relative = 1e-12);
        assert_relative_eq!(
            eriksson_collection_area(164.0).unwrap(),
            24.0 * 164.0_f64.powf(2.05),
            max_relative = 1e-12
        );
    }

    #[test]
    fn iec_strike_rate_examples() {
        let i = ReferenceModelInputs::new(100.0, 1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(iec_strike_rate(&i), PI * 0.09, max_relative = 1e-12);
        let zero = ReferenceModelInputs::new(0.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(iec_strike_rate(&zero), 0.0);
        let i2 = ReferenceModelInputs::new(150.0, 2.0, 2.0, 1.0).unwrap();
        assert_relative_eq!(iec_strike_rate(&i2), 2.0 * PI * 0.2025 * 2.0, max_relative = 1e-12);
    }

    #[test]
    fn regression_radii_examples() {
        let r = regression_radii(100.0).unwrap();
        assert_relative_eq!(r.r_cg_sp_m, 171.0, max_relative = 1e-12);
        assert_relative_eq!(r.r_tul_sp_m, 50.0, max_relative = 1e-12);
        // TUL radius root near 85.7 m, clamped at zero below it.
        assert_abs_diff_eq!(regression_radii(85.714285).unwrap().r_tul_sp_m, 0.0, epsilon = 1e-5);
        assert_eq!(regression_radii(60.0).unwrap().r_tul_sp_m, 0.0);
        let r180 = regression_radii(180.0).unwrap();
        assert_relative_eq!(r180.r_cg_sp_m, 299.0, max_relative = 1e-12);
        assert_relative_eq!(r180.r_tul_sp_m, 330.0, max_relative = 1e-12);
    }

    #[test]
    fn conversion_factors_default_and_validation() {
        let c = ConversionFactors::default();
        assert_eq!(c.strokes_per_strike_point, 1.6);
        assert_eq!(c.strike_points_per_flash, 1.69);
        assert!(ConversionFactors::new(0.0, 1.0).is_err());
        assert!(ConversionFactors::new(1.0, -2.0).is_err());
    }
}
