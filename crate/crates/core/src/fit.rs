//! Levenberg-Marquardt fitting of the four-parameter ring-count model to a
//! weighted histogram, and the iterative density-redistribution loop around
//! it.
//!
//! All four parameters are optimized in log space, which enforces positivity
//! without explicit constraints. The damping follows the classic Marquardt
//! recipe: scale the normal-equation diagonal, multiply the damping by ten on
//! a rejected step and divide by ten on an accepted one.

use crate::histogram::{self, HistogramSpec, WeightFunction, WeightedHistogram};
use crate::model::ModelParams;
use crate::spatial::MatchedPair;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

// Fixed-size linear algebra is written out locally rather than taken from a
// generic library: monomorphized generics are code-generated per binary, and
// differing feature unification across build graphs was observed to shift
// results by one ulp between the CLI and library paths. Non-generic code in
// this crate is compiled exactly once, which keeps every caller bit-identical.

/// Solve a 4x4 system by Gaussian elimination with partial pivoting.
fn solve4(a: &[[f64; 4]; 4], b: &[f64; 4]) -> Option<[f64; 4]> {
    let mut m = *a;
    let mut rhs = *b;
    for col in 0..4 {
        let mut piv = col;
        for row in col + 1..4 {
            if m[row][col].abs() > m[piv][col].abs() {
                piv = row;
            }
        }
        if m[piv][col] == 0.0 || !m[piv][col].is_finite() {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for row in col + 1..4 {
            let f = m[row][col] / m[col][col];
            if f != 0.0 {
                for k in col..4 {
                    m[row][k] -= f * m[col][k];
                }
                rhs[row] -= f * rhs[col];
            }
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let mut s = rhs[row];
        for k in row + 1..4 {
            s -= m[row][k] * x[k];
        }
        x[row] = s / m[row][row];
        if !x[row].is_finite() {
            return None;
        }
    }
    Some(x)
}

/// Invert a 4x4 matrix by solving the four unit columns.
fn invert4(a: &[[f64; 4]; 4]) -> Option<[[f64; 4]; 4]> {
    let mut inv = [[0.0; 4]; 4];
    for col in 0..4 {
        let mut e = [0.0; 4];
        e[col] = 1.0;
        let x = solve4(a, &e)?;
        for row in 0..4 {
            inv[row][col] = x[row];
        }
    }
    Some(inv)
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error("histogram has {0} nonzero bins; at least {1} required")]
    TooFewBins(usize, usize),
    #[error("histogram error: {0}")]
    Histogram(#[from] crate::histogram::HistogramError),
    #[error("no matched pairs to fit")]
    NoPairs,
}

/// Controls for a single Levenberg-Marquardt solve.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub initial_damping: f64,
    /// Stop when the relative change in the squared residual norm falls
    /// below this.
    pub residual_tolerance: f64,
    /// Stop when the log-space step norm falls below this.
    pub step_tolerance: f64,
    /// Weight squared residuals by inverse Poisson variance (1/max(raw, 1)).
    /// Off by default: the reference method fits unweighted counts.
    pub poisson_weighting: bool,
    /// Minimum number of nonzero bins required for a solve.
    pub min_nonzero_bins: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            initial_damping: 1e-3,
            residual_tolerance: 1e-10,
            step_tolerance: 1e-12,
            poisson_weighting: false,
            min_nonzero_bins: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    /// Converged on residual or step tolerance.
    Converged,
    /// Stopped at the iteration cap.
    MaxIterations,
    /// The damped normal equations became unsolvable.
    SingularJacobian,
}

/// One accepted step in a solve, or one outer iteration of the reweighting
/// loop.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub params: ModelParams,
    /// Euclidean norm of the (possibly variance-weighted) residual vector.
    pub residual_norm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ModelParams,
    /// Accepted LM steps; residual norms are nonincreasing.
    pub iteration_trace: Vec<TraceEntry>,
    pub converged: bool,
    pub status: FitStatus,
    /// Parameter covariance in (amplitude, beta, sigma, lambda) order, from
    /// the final solve; `None` when the normal matrix was not invertible.
    pub covariance: Option<[[f64; 4]; 4]>,
}

impl FitResult {
    pub fn residual_norm(&self) -> f64 {
        self.iteration_trace.last().map(|t| t.residual_norm).unwrap_or(f64::NAN)
    }
}

// ---------------------------------------------------------------------------
// Model evaluation and Jacobian
// ---------------------------------------------------------------------------

/// Ring-count model value and its analytic Jacobian with respect to
/// (amplitude, beta, sigma, lambda) at ring center `r`.
pub fn model_jacobian(r: f64, dr: f64, p: &ModelParams) -> (f64, [f64; 4]) {
    let (a, beta, sigma, lambda) = (p.amplitude(), p.beta(), p.sigma(), p.lambda());
    let c = 2.0 * PI * r * dr;
    let lam_sq = lambda * lambda;
    let sig_sq = sigma * sigma;
    let gauss = (-r * r / (2.0 * sig_sq)).exp();
    let well_exp = (-r / lambda).exp();
    let shape = (1.0 + beta) * (lam_sq / sig_sq) * gauss + 1.0 - well_exp;
    let value = c * a * shape;
    let d_amp = c * shape;
    let d_beta = c * a * (lam_sq / sig_sq) * gauss;
    let d_sigma = c * a * (1.0 + beta) * (lam_sq / (sig_sq * sigma)) * gauss
        * (r * r / sig_sq - 2.0);
    let d_lambda =
        c * a * ((1.0 + beta) * (2.0 * lambda / sig_sq) * gauss - well_exp * r / lam_sq);
    (value, [d_amp, d_beta, d_sigma, d_lambda])
}

fn params_from_log(log: &[f64; 4]) -> ModelParams {
    ModelParams::new(log[0].exp(), log[1].exp(), log[2].exp(), log[3].exp())
        .expect("exponentials of finite logs are positive")
}

/// Far-field amplitude estimate: total counts in bins beyond 1.5 km divided
/// by their total annulus area. Falls back to the global ratio when the far
/// field is empty.
pub fn initial_guess(h: &WeightedHistogram) -> ModelParams {
    let mut far_counts = 0.0;
    let mut far_area = 0.0;
    let mut all_counts = 0.0;
    let mut all_area = 0.0;
    for i in 0..h.n_bins() {
        let area = h.bin_area(i);
        all_counts += h.counts[i];
        all_area += area;
        if h.bin_center(i) > 1.5 {
            far_counts += h.counts[i];
            far_area += area;
        }
    }
    let amplitude = if far_counts > 0.0 {
        far_counts / far_area
    } else if all_counts > 0.0 {
        all_counts / all_area
    } else {
        1.0
    };
    ModelParams::new(amplitude, 0.5, 0.05, 0.1).expect("positive defaults")
}

// ---------------------------------------------------------------------------
// Single LM solve
// ---------------------------------------------------------------------------

/// Fit the ring-count model to one weighted histogram.
///
/// Never panics on ill-conditioned input: a singular normal matrix or hitting
/// the iteration cap yields a non-converged result carrying the best
/// parameters seen.
pub fn solve_lm(
    h: &WeightedHistogram,
    initial: &ModelParams,
    options: &FitOptions,
) -> Result<FitResult, FitError> {
    let nonzero = h.counts.iter().filter(|&&c| c > 0.0).count();
    if nonzero < options.min_nonzero_bins {
        return Err(FitError::TooFewBins(nonzero, options.min_nonzero_bins));
    }
    let dr = h.bin_width_km;
    let n = h.n_bins();
    // sqrt of per-bin residual weights
    let sqrt_w: Vec<f64> = (0..n)
        .map(|i| {
            if options.poisson_weighting {
                1.0 / (h.raw_counts[i].max(1) as f64).sqrt()
            } else {
                1.0
            }
        })
        .collect();

    let cost_of = |p: &ModelParams| -> f64 {
        (0..n)
            .map(|i| {
                let (value, _) = model_jacobian(h.bin_center(i), dr, p);
                let res = (h.counts[i] - value) * sqrt_w[i];
                res * res
            })
            .sum()
    };

    let mut log = [
        initial.amplitude().max(1e-300).ln(),
        initial.beta().max(1e-12).ln(),
        initial.sigma().ln(),
        initial.lambda().ln(),
    ];
    let mut params = params_from_log(&log);
    let mut cost = cost_of(&params);
    let mut damping = options.initial_damping;
    let mut trace = vec![TraceEntry { iteration: 0, params, residual_norm: cost.sqrt() }];
    let mut status = FitStatus::MaxIterations;
    let mut last_normal: Option<[[f64; 4]; 4]> = None;

    for iteration in 1..=options.max_iterations {
        // Normal equations in log space: J_log = J_linear · diag(params).
        let mut jtj = [[0.0f64; 4]; 4];
        let mut jtr = [0.0f64; 4];
        let scale = params.as_array();
        for i in 0..n {
            let (value, jac_lin) = model_jacobian(h.bin_center(i), dr, &params);
            let w = sqrt_w[i];
            let residual = (h.counts[i] - value) * w;
            let mut jac = [0.0; 4];
            for (j, val) in jac.iter_mut().enumerate() {
                *val = jac_lin[j] * scale[j] * w;
            }
            for r in 0..4 {
                for c in 0..4 {
                    jtj[r][c] += jac[r] * jac[c];
                }
                jtr[r] += jac[r] * residual;
            }
        }
        last_normal = Some(jtj);

        // try steps until one is accepted or the damping explodes
        let mut stepped = false;
        while damping < 1e12 {
            let mut damped = jtj;
            for (d, row) in damped.iter_mut().enumerate() {
                row[d] += damping * jtj[d][d].max(1e-300);
            }
            let step = match solve4(&damped, &jtr) {
                Some(s) => s,
                None => {
                    damping *= 10.0;
                    continue;
                }
            };
            let mut candidate_log = log;
            for (c, s) in candidate_log.iter_mut().zip(&step) {
                *c += s;
            }
            let candidate = params_from_log(&candidate_log);
            let candidate_cost = cost_of(&candidate);
            if candidate_cost.is_finite() && candidate_cost <= cost {
                let step_norm = step.iter().map(|s| s * s).sum::<f64>().sqrt();
                let rel_drop = (cost - candidate_cost) / cost.max(f64::MIN_POSITIVE);
                log = candidate_log;
                params = candidate;
                cost = candidate_cost;
                damping = (damping / 10.0).max(1e-15);
                trace.push(TraceEntry { iteration, params, residual_norm: cost.sqrt() });
                stepped = true;
                if rel_drop < options.residual_tolerance || step_norm < options.step_tolerance {
                    status = FitStatus::Converged;
                }
                break;
            }
            damping *= 10.0;
        }
        if !stepped {
            // no acceptable step at any damping: either at a minimum (treated
            // as converged) or the system is singular
            status = if damping >= 1e12 { FitStatus::SingularJacobian } else { FitStatus::Converged };
            break;
        }
        if status == FitStatus::Converged {
            break;
        }
    }

    let covariance = last_normal.and_then(|jtj| covariance_from_normal(&jtj, &params, cost, n));
    Ok(FitResult {
        params,
        converged: status == FitStatus::Converged,
        status,
        iteration_trace: trace,
        covariance,
    })
}

/// Covariance in linear parameter space: s²·(JᵀJ)⁻¹ back-transformed from
/// logs via diag(params).
fn covariance_from_normal(
    jtj: &Matrix4<f64>,
    params: &ModelParams,
    cost: f64,
    n_bins: usize,
) -> Option<[[f64; 4]; 4]> {
    if n_bins <= 4 {
        return None;
    }
    let inv = jtj.try_inverse()?;
    let s2 = cost / (n_bins - 4) as f64;
    let p = params.as_array();
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = s2 * inv[(i, j)] * p[i] * p[j];
        }
    }
    Some(out)
}

// ---------------------------------------------------------------------------
// Iterative reweighting
// ---------------------------------------------------------------------------

/// Controls for the outer redistribution loop.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IterativeOptions {
    /// Number of reweighted iterations after the unit-weight iteration zero.
    pub n_iter: usize,
    pub spec: HistogramSpec,
    pub fit: FitOptions,
    /// Maximum relative parameter change between the last two iterations for
    /// the outer loop to count as converged.
    pub outer_tolerance: f64,
}

impl Default for IterativeOptions {
    fn default() -> Self {
        Self {
            n_iter: 3,
            spec: HistogramSpec::DEFAULT,
            fit: FitOptions::default(),
            outer_tolerance: 1e-3,
        }
    }
}

/// One outer iteration: its index, weighted histogram, and solved fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub histogram: WeightedHistogram,
    pub fit: FitResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterativeFit {
    /// Fit of the final iteration.
    pub result: FitResult,
    /// All iterations in order, including iteration zero.
    pub iterations: Vec<IterationRecord>,
    /// Whether the last two iterations agreed within the outer tolerance.
    pub converged: bool,
    /// Set when an inner solve failed and the loop stopped early.
    pub aborted: bool,
}

/// Run the iterative reweighted fit over matched pairs.
///
/// Iteration zero accumulates with unit weights and solves; each subsequent
/// iteration recomputes weights from the previous parameters, re-accumulates,
/// and re-solves. A non-converged inner solve aborts the loop, returning the
/// partial trace.
pub fn iterative_fit(
    pairs: &[MatchedPair],
    options: &IterativeOptions,
) -> Result<IterativeFit, FitError> {
    if pairs.is_empty() {
        return Err(FitError::NoPairs);
    }
    let mut iterations: Vec<IterationRecord> = Vec::with_capacity(options.n_iter + 1);
    let mut previous: Option<ModelParams> = None;
    let mut aborted = false;

    for iteration in 0..=options.n_iter {
        let weights = previous.map(WeightFunction::new);
        let h = histogram::accumulate(options.spec, pairs, weights.as_ref())?;
        // Fresh documented initialization every iteration: each solve is a
        // pure function of its histogram, so identical histograms (e.g. under
        // unit weights) give bitwise identical fits.
        let init = initial_guess(&h);
        let fit = solve_lm(&h, &init, &options.fit)?;
        let ok = fit.converged;
        previous = Some(fit.params);
        iterations.push(IterationRecord { iteration, histogram: h, fit });
        if !ok {
            aborted = true;
            break;
        }
    }

    let converged = !aborted
        && iterations.len() >= 2
        && max_relative_change(
            &iterations[iterations.len() - 2].fit.params,
            &iterations[iterations.len() - 1].fit.params,
        ) < options.outer_tolerance;

    let result = iterations.last().expect("at least iteration zero ran").fit.clone();
    Ok(IterativeFit { result, iterations, converged, aborted })
}

fn max_relative_change(a: &ModelParams, b: &ModelParams) -> f64 {
    a.as_array()
        .iter()
        .zip(b.as_array())
        .map(|(x, y)| (y - x).abs() / x.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histogram::HistogramSpec;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn model_histogram(truth: &ModelParams, spec: HistogramSpec) -> WeightedHistogram {
        let mut h = WeightedHistogram::empty(spec).unwrap();
        for i in 0..h.n_bins() {
            let (value, _) = model_jacobian(h.bin_center(i), spec.bin_width_km, truth);
            h.counts[i] = value;
            h.raw_counts[i] = value.round().max(1.0) as u64;
        }
        h
    }

    #[test]
    fn noiseless_self_consistency() {
        let truth = ModelParams::new(50_000.0, 0.5, 0.045, 0.1).unwrap();
        let h = model_histogram(&truth, HistogramSpec::DEFAULT);
        let start = ModelParams::new(60_000.0, 0.4, 0.054, 0.08).unwrap();
        let fit = solve_lm(&h, &start, &FitOptions::default()).unwrap();
        assert!(fit.converged, "status {:?}", fit.status);
        for (got, want) in fit.params.as_array().iter().zip(truth.as_array()) {
            assert_relative_eq!(got, &want, max_relative = 1e-6);
        }
    }

    #[test]
    fn beta_zero_degenerate() {
        let truth = ModelParams::new(10_000.0, 1e-9, 0.045, 0.1).unwrap();
        let h = model_histogram(&truth, HistogramSpec::DEFAULT);
        let start = ModelParams::new(9_000.0, 0.3, 0.05, 0.12).unwrap();
        let fit = solve_lm(&h, &start, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.params.beta() < 1e-3, "beta {}", fit.params.beta());
        assert_relative_eq!(fit.params.lambda(), 0.1, max_relative = 1e-4);
    }

    #[test]
    fn too_few_bins_rejected() {
        let mut h = WeightedHistogram::empty(HistogramSpec::DEFAULT).unwrap();
        h.counts[3] = 5.0;
        let start = ModelParams::new(1.0, 0.5, 0.05, 0.1).unwrap();
        assert!(matches!(
            solve_lm(&h, &start, &FitOptions::default()),
            Err(FitError::TooFewBins(1, 10))
        ));
    }

    #[test]
    fn residual_norm_nonincreasing() {
        let truth = ModelParams::new(8_000.0, 0.8, 0.04, 0.12).unwrap();
        let mut h = model_histogram(&truth, HistogramSpec::DEFAULT);
        // mild deterministic perturbation so the fit has real work to do
        for (i, c) in h.counts.iter_mut().enumerate() {
            *c *= 1.0 + 0.01 * ((i as f64 * 0.7).sin());
        }
        let start = ModelParams::new(5_000.0, 0.3, 0.06, 0.09).unwrap();
        let fit = solve_lm(&h, &start, &FitOptions::default()).unwrap();
        let norms: Vec<f64> = fit.iteration_trace.iter().map(|t| t.residual_norm).collect();
        for w in norms.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{norms:?}");
        }
        // returned residual no worse than the start
        assert!(norms.last().unwrap() <= norms.first().unwrap());
    }

    #[test]
    fn count_scaling_moves_only_amplitude() {
        let truth = ModelParams::new(20_000.0, 0.6, 0.05, 0.11).unwrap();
        let h = model_histogram(&truth, HistogramSpec::DEFAULT);
        let mut h2 = h.clone();
        for c in h2.counts.iter_mut() {
            *c *= 3.0;
        }
        let start = ModelParams::new(18_000.0, 0.5, 0.045, 0.1).unwrap();
        let f1 = solve_lm(&h, &start, &FitOptions::default()).unwrap();
        let start2 = ModelParams::new(54_000.0, 0.5, 0.045, 0.1).unwrap();
        let f2 = solve_lm(&h2, &start2, &FitOptions::default()).unwrap();
        assert_relative_eq!(f2.params.amplitude(), 3.0 * f1.params.amplitude(), max_relative = 1e-9);
        assert_relative_eq!(f2.params.beta(), f1.params.beta(), max_relative = 1e-9);
        assert_relative_eq!(f2.params.sigma(), f1.params.sigma(), max_relative = 1e-9);
        assert_relative_eq!(f2.params.lambda(), f1.params.lambda(), max_relative = 1e-9);
    }

    #[test]
    fn fit_deterministic() {
        let truth = ModelParams::new(20_000.0, 0.6, 0.05, 0.11).unwrap();
        let mut h = model_histogram(&truth, HistogramSpec::DEFAULT);
        for (i, c) in h.counts.iter_mut().enumerate() {
            *c *= 1.0 + 0.02 * ((i as f64 * 1.3).cos());
        }
        let start = ModelParams::new(15_000.0, 0.4, 0.06, 0.09).unwrap();
        let a = solve_lm(&h, &start, &FitOptions::default()).unwrap();
        let b = solve_lm(&h, &start, &FitOptions::default()).unwrap();
        assert_eq!(a.params.as_array().map(f64::to_bits), b.params.as_array().map(f64::to_bits));
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..100 {
            let p = ModelParams::new(
                10f64.powf(rng.random_range(2.0..5.0)),
                rng.random_range(0.05..2.0),
                rng.random_range(0.02..0.09),
                rng.random_range(0.05..0.2),
            )
            .unwrap();
            let r = rng.random_range(0.0..2.0);
            let (value, analytic) = model_jacobian(r, 0.02, &p);
            let arr = p.as_array();
            let mut numeric = [0.0; 4];
            for j in 0..4 {
                let step = 1e-6 * arr[j];
                let mut hi = arr;
                let mut lo = arr;
                hi[j] += step;
                lo[j] -= step;
                let ph = ModelParams::new(hi[0], hi[1], hi[2], hi[3]).unwrap();
                let pl = ModelParams::new(lo[0], lo[1], lo[2], lo[3]).unwrap();
                let (vh, _) = model_jacobian(r, 0.02, &ph);
                let (vl, _) = model_jacobian(r, 0.02, &pl);
                numeric[j] = (vh - vl) / (2.0 * step);
            }
            for j in 0..4 {
                // 1e-5 relative, with an absolute floor at the roundoff bound
                // of the central difference itself (~eps·N / 2h).
                let allowed =
                    1e-5 * analytic[j].abs().max(numeric[j].abs()) + 1e-8 * value.abs() / arr[j];
                assert!(
                    (analytic[j] - numeric[j]).abs() <= allowed,
                    "param {j} at r={r}: analytic {} vs numeric {}",
                    analytic[j],
                    numeric[j]
                );
            }
        }
    }

    #[test]
    fn iterative_fit_unit_weights_stable() {
        // all pairs are their own nearest: every weight stays exactly 1 and
        // all iterations must agree to machine precision
        let truth = ModelParams::new(3_000.0, 0.4, 0.045, 0.1).unwrap();
        let mut rng = StdRng::seed_from_u64(7);
        let mut pairs = Vec::new();
        let mut id = 0usize;
        for _ in 0..200_000 {
            let d = rng.random_range(0.0..2.0f64);
            // thin to the model shape via rejection for a realistic histogram
            let (v, _) = model_jacobian(d, 0.02, &truth);
            let keep = v / 800.0;
            if rng.random::<f64>() < keep {
                pairs.push(MatchedPair {
                    stroke_ref: id,
                    turbine_ref: 0,
                    distance_km: d,
                    nearest_turbine_ref: 0,
                    nearest_distance_km: d,
                });
                id += 1;
            }
        }
        let opts = IterativeOptions { n_iter: 3, ..Default::default() };
        let run = iterative_fit(&pairs, &opts).unwrap();
        assert_eq!(run.iterations.len(), 4);
        assert!(!run.aborted);
        let p0 = run.iterations[0].fit.params.as_array();
        for it in &run.iterations[1..] {
            for (a, b) in p0.iter().zip(it.fit.params.as_array()) {
                assert_relative_eq!(a, &b, max_relative = 1e-9);
            }
        }
        assert!(run.converged);
    }

    #[test]
    fn iterative_fit_empty_pairs() {
        assert!(matches!(
            iterative_fit(&[], &IterativeOptions::default()),
            Err(FitError::NoPairs)
        ));
    }
}
