//! Monte Carlo small-ball probabilities `P(max_{grid ⊂ [0, T]} |X| <= ε)` and
//! fits of the rate law `-log P ≈ C ε^{-1/θ}`.
//!
//! The maximum over a grid understates the supremum, so raw grid estimates
//! are biased upward. Each path's maximum is recorded on the full grid and on
//! the nested subgrid of every `r`-th point. For a process that is Hölder of
//! order `θ` the bias in `log P` shrinks like `Δt^θ`, so
//!
//! ```text
//! log P ≈ (r^θ log P_fine − log P_coarse) / (r^θ − 1)
//! ```
//!
//! removes the leading term. Both the raw and the extrapolated values are
//! kept on the curve.

use crate::covariance::{build_cov_matrix, TimeGrid};
use crate::error::{Error, Result};
use crate::params::DerivedConstants;
use crate::sampler::{factorize, map_blocks, DenseSource, FbmSpec, PathSource};
use crate::stats::{weighted_line, weighted_origin};

/// Minimum Monte Carlo sample size for a curve.
pub const MIN_COUNT: usize = 10_000;
/// Below this radius the grid needs at least [`MIN_FINE_GRID`] points.
pub const FINE_RADIUS: f64 = 0.2;
pub const MIN_FINE_GRID: usize = 256;
/// Subgrid stride used for the bias extrapolation.
pub const REFINE_STRIDE: usize = 4;
/// Points with fewer hits are not used in fits.
pub const MIN_HITS: u64 = 20;
/// Points above this probability are outside the small-ball regime.
pub const MAX_FIT_PROBABILITY: f64 = 0.5;
pub const MIN_FIT_POINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Process {
    /// The heat-equation solution `u(·, x)`.
    Sfhe(DerivedConstants),
    /// Standard fractional Brownian motion of the given index.
    Fbm { hurst_index: f64 },
}

impl Process {
    pub fn tag(&self) -> &'static str {
        match self {
            Process::Sfhe(_) => "sfhe",
            Process::Fbm { .. } => "fbm",
        }
    }

    /// Hölder / self-similarity index.
    pub fn index(&self) -> f64 {
        match self {
            Process::Sfhe(c) => c.theta,
            Process::Fbm { hurst_index } => *hurst_index,
        }
    }

    fn source(&self, grid: &TimeGrid) -> Result<Box<dyn PathSource + Send>> {
        match self {
            Process::Sfhe(c) => {
                let cov = build_cov_matrix(grid, c, None)?;
                Ok(Box::new(DenseSource::new(factorize(&cov)?)))
            }
            Process::Fbm { hurst_index } => FbmSpec::new(*hurst_index, grid.clone())?.source(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveConfig {
    pub epsilons: Vec<f64>,
    pub count: usize,
    pub grid_size: usize,
    /// Right end `T` of the time interval `[0, T]`.
    pub horizon: f64,
    pub seed: u64,
}

impl CurveConfig {
    pub fn new(epsilons: Vec<f64>, count: usize, grid_size: usize, seed: u64) -> Self {
        CurveConfig {
            epsilons,
            count,
            grid_size,
            horizon: 1.0,
            seed,
        }
    }
}

/// `ε_k = start · ratio^k`, `k = 0..len`. The default schedule is
/// `0.5 · 0.75^k`, `k = 0..=7`.
pub fn geometric_schedule(start: f64, ratio: f64, len: usize) -> Vec<f64> {
    (0..len).map(|k| start * ratio.powi(k as i32)).collect()
}

pub fn default_schedule() -> Vec<f64> {
    geometric_schedule(0.5, 0.75, 8)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub epsilon: f64,
    /// Bias-corrected probability (equal to `raw` when no subgrid exists).
    pub probability: f64,
    pub stderr: f64,
    /// Fraction of paths with `max_grid |X| <= ε`.
    pub raw: f64,
    pub raw_stderr: f64,
    pub hits: u64,
    /// Same on the stride-[`REFINE_STRIDE`] subgrid.
    pub coarse: Option<f64>,
    pub coarse_hits: Option<u64>,
    /// Raw fine-vs-coarse gap in units of its standard error.
    pub resolution_gap_sigma: Option<f64>,
}

impl CurvePoint {
    pub fn zero_hit(&self) -> bool {
        self.hits == 0
    }

    pub fn usable(&self) -> bool {
        self.hits >= MIN_HITS && self.probability > 0.0 && self.probability <= MAX_FIT_PROBABILITY
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmallBallCurve {
    pub points: Vec<CurvePoint>,
    pub count: usize,
    pub grid_size: usize,
    pub horizon: f64,
    pub process: &'static str,
    pub index: f64,
    pub seed: u64,
}

impl SmallBallCurve {
    pub fn epsilons(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.epsilon).collect()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.probability).collect()
    }

    /// A noiseless curve `P(ε) = exp(−c ε^{−1/θ})` with binomial standard
    /// errors for `count` paths. For testing fits.
    pub fn synthetic(epsilons: &[f64], theta: f64, c: f64, count: usize) -> Self {
        let points = epsilons
            .iter()
            .map(|&e| {
                let p = (-c * e.powf(-1.0 / theta)).exp();
                let se = crate::stats::binomial_stderr(p, count);
                CurvePoint {
                    epsilon: e,
                    probability: p,
                    stderr: se,
                    raw: p,
                    raw_stderr: se,
                    hits: (p * count as f64).round() as u64,
                    coarse: None,
                    coarse_hits: None,
                    resolution_gap_sigma: None,
                }
            })
            .collect();
        SmallBallCurve {
            points,
            count,
            grid_size: 0,
            horizon: 1.0,
            process: "synthetic",
            index: theta,
            seed: 0,
        }
    }
}

/// Per-path maxima of `|X|` on the full grid and on the nested subgrid.
pub fn path_maxima(
    process: &Process,
    grid: &TimeGrid,
    count: usize,
    seed: u64,
) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let n = grid.len();
    let source = process.source(grid)?;
    let stride = REFINE_STRIDE;
    let has_coarse = n.is_multiple_of(stride) && n / stride >= 2;
    let blocks = map_blocks(source.as_ref(), count, seed, |_, rows, block| {
        let mut out = Vec::with_capacity(rows);
        for p in 0..rows {
            let row = &block[p * n..(p + 1) * n];
            let fine = row.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let coarse = row
                .iter()
                .skip(stride - 1)
                .step_by(stride)
                .fold(0.0f64, |m, x| m.max(x.abs()));
            out.push((fine, coarse));
        }
        out
    });
    let mut fine = Vec::with_capacity(count);
    let mut coarse = Vec::with_capacity(count);
    for (f, c) in blocks.into_iter().flatten() {
        if !f.is_finite() {
            return Err(Error::NonFinite { path: fine.len() });
        }
        fine.push(f);
        coarse.push(c);
    }
    Ok((fine, has_coarse.then_some(coarse)))
}

/// Combine hit counts into a [`CurvePoint`].
pub fn curve_point(
    epsilon: f64,
    hits: u64,
    coarse_hits: Option<u64>,
    count: usize,
    theta: f64,
) -> CurvePoint {
    let n = count as f64;
    let raw = hits as f64 / n;
    // With no hits the binomial error collapses to zero; report the
    // resolution of the experiment instead.
    let raw_stderr = if hits == 0 {
        1.0 / n
    } else {
        crate::stats::binomial_stderr(raw, count)
    };
    let mut point = CurvePoint {
        epsilon,
        probability: raw,
        stderr: raw_stderr,
        raw,
        raw_stderr,
        hits,
        coarse: None,
        coarse_hits,
        resolution_gap_sigma: None,
    };
    let Some(ch) = coarse_hits else {
        return point;
    };
    let pc = ch as f64 / n;
    point.coarse = Some(pc);
    let diff = pc - raw;
    if ch > hits {
        point.resolution_gap_sigma = Some(diff / (diff * (1.0 - diff) / n).sqrt());
    } else {
        point.resolution_gap_sigma = Some(0.0);
    }
    if hits == 0 {
        return point;
    }
    let q = (REFINE_STRIDE as f64).powf(theta);
    let log_p = (q * raw.ln() - pc.ln()) / (q - 1.0);
    // Fine-grid hits are a subset of coarse-grid hits, so
    // Cov(log p_f, log p_c) = Var(log p_c).
    let var_f = (1.0 - raw) / (n * raw);
    let var_c = (1.0 - pc) / (n * pc);
    let var = (q * q * var_f + (1.0 - 2.0 * q) * var_c) / ((q - 1.0) * (q - 1.0));
    let p = log_p.exp();
    point.probability = p;
    point.stderr = p * var.max(0.0).sqrt();
    point
}

pub fn estimate_curve(process: &Process, config: &CurveConfig) -> Result<SmallBallCurve> {
    let CurveConfig {
        ref epsilons,
        count,
        grid_size,
        horizon,
        seed,
    } = *config;
    if epsilons.is_empty() || epsilons.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err(Error::InvalidInput("epsilons must be positive and finite".into()));
    }
    if count < MIN_COUNT {
        return Err(Error::InvalidInput(format!("count {count} below minimum {MIN_COUNT}")));
    }
    let min_eps = epsilons.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_eps < FINE_RADIUS * horizon.powf(process.index()) && grid_size < MIN_FINE_GRID {
        return Err(Error::InvalidInput(format!(
            "grid_size {grid_size} below {MIN_FINE_GRID} with epsilon {min_eps} < {FINE_RADIUS}"
        )));
    }
    let grid = TimeGrid::uniform(grid_size, horizon)?;
    let (fine, coarse) = path_maxima(process, &grid, count, seed)?;
    let theta = process.index();
    let points: Vec<CurvePoint> = epsilons
        .iter()
        .map(|&e| {
            let hits = fine.iter().filter(|&&m| m <= e).count() as u64;
            let coarse_hits = coarse
                .as_ref()
                .map(|c| c.iter().filter(|&&m| m <= e).count() as u64);
            curve_point(e, hits, coarse_hits, count, theta)
        })
        .collect();
    if points.iter().all(|p| p.hits == 0) {
        return Err(Error::EmptyCurve);
    }
    Ok(SmallBallCurve {
        points,
        count,
        grid_size,
        horizon,
        process: process.tag(),
        index: theta,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmallBallFit {
    /// Fitted power of `1/ε` in `−log P` (ideally `1/θ`).
    pub exponent: f64,
    /// Fitted `C` in `−log P ≈ C ε^{−1/θ}`.
    pub constant: f64,
    pub stderr_exponent: f64,
    pub stderr_constant: f64,
    pub points_used: usize,
    pub warnings: Vec<String>,
}

pub fn fit_rate(curve: &SmallBallCurve, theta: f64) -> Result<SmallBallFit> {
    let usable: Vec<&CurvePoint> = curve.points.iter().filter(|p| p.usable()).collect();
    if usable.len() < MIN_FIT_POINTS {
        return Err(Error::TooFewPoints {
            needed: MIN_FIT_POINTS,
            got: usable.len(),
        });
    }
    let mut warnings = Vec::new();
    let mut sorted = usable.clone();
    sorted.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    for w in sorted.windows(2) {
        // −log P must grow as ε shrinks.
        let (a, b) = (w[0], w[1]);
        let (la, lb) = (-a.probability.ln(), -b.probability.ln());
        let se = ((a.stderr / a.probability).powi(2) + (b.stderr / b.probability).powi(2)).sqrt();
        if lb < la - 2.0 * se {
            warnings.push(format!(
                "-log P decreases from eps={} to eps={} beyond noise",
                a.epsilon, b.epsilon
            ));
        }
    }
    for p in &usable {
        if let Some(g) = p.resolution_gap_sigma {
            if g > 2.0 {
                warnings.push(format!(
                    "eps={}: grid resolution gap {g:.1} sigma (bias-corrected estimate used)",
                    p.epsilon
                ));
            }
        }
    }

    let rel: Vec<f64> = usable.iter().map(|p| p.stderr / p.probability).collect();
    let neg_log: Vec<f64> = usable.iter().map(|p| -p.probability.ln()).collect();

    // Free exponent: log(−log P) = log C + k log(1/ε).
    let x: Vec<f64> = usable.iter().map(|p| -p.epsilon.ln()).collect();
    let y: Vec<f64> = neg_log.iter().map(|v| v.ln()).collect();
    let w: Vec<f64> = rel
        .iter()
        .zip(&neg_log)
        .map(|(r, l)| (l / r).powi(2))
        .collect();
    let line = weighted_line(&x, &y, &w);

    // Constant with the exponent pinned at 1/θ.
    let xc: Vec<f64> = usable.iter().map(|p| p.epsilon.powf(-1.0 / theta)).collect();
    let wc: Vec<f64> = rel.iter().map(|r| 1.0 / (r * r)).collect();
    let (constant, stderr_constant) = weighted_origin(&xc, &neg_log, &wc);

    Ok(SmallBallFit {
        exponent: line.slope,
        constant,
        stderr_exponent: line.stderr_slope,
        stderr_constant,
        points_used: usable.len(),
        warnings,
    })
}

/// `λ̂ = C / κ^{1/θ}` with its standard error: the fBm small-ball constant
/// implied by a fit of the heat-equation curve on `[0, 1]`.
pub fn lambda_from_fit(fit: &SmallBallFit, consts: &DerivedConstants) -> (f64, f64) {
    let k = consts.kappa_pow_inv_theta();
    (fit.constant / k, fit.stderr_constant / k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule() {
        let s = default_schedule();
        assert_eq!(s.len(), 8);
        assert_eq!(s[0], 0.5);
        assert!((s[7] - 0.5 * 0.75f64.powi(7)).abs() < 1e-15);
    }

    #[test]
    fn synthetic_fit_is_exact() {
        let eps = [0.9, 0.8, 0.7, 0.6, 0.55, 0.5];
        let curve = SmallBallCurve::synthetic(&eps, 0.25, 0.3, 1_000_000);
        let fit = fit_rate(&curve, 0.25).unwrap();
        assert!((fit.exponent - 4.0).abs() < 1e-8);
        assert!((fit.constant - 0.3).abs() < 1e-8);
        assert!(fit.stderr_constant > 0.0 && fit.stderr_exponent > 0.0);
    }

    #[test]
    fn too_few_points() {
        let curve = SmallBallCurve::synthetic(&[0.7, 0.6, 0.5], 0.25, 0.3, 1_000_000);
        assert!(matches!(
            fit_rate(&curve, 0.25),
            Err(Error::TooFewPoints { needed: 4, got: 3 })
        ));
    }

    #[test]
    fn extrapolation_identity() {
        // Coarse == fine means no bias to remove.
        let p = curve_point(0.5, 100, Some(100), 10_000, 0.5);
        assert!((p.probability - 0.01).abs() < 1e-15);
        let p = curve_point(0.5, 100, Some(200), 10_000, 0.5);
        // r^θ = 2: log P = 2 log 0.01 − log 0.02 → P = 0.005.
        assert!((p.probability - 0.005).abs() < 1e-15);
        assert!(p.stderr > p.raw_stderr * 0.5);
        let z = curve_point(0.5, 0, Some(3), 10_000, 0.5);
        assert!(z.zero_hit());
        assert_eq!(z.probability, 0.0);
        assert_eq!(z.stderr, 1e-4);
    }

    #[test]
    fn input_guards() {
        let p = Process::Fbm { hurst_index: 0.5 };
        let bad = CurveConfig::new(vec![0.1], 20_000, 64, 1);
        assert!(estimate_curve(&p, &bad).is_err());
        let bad = CurveConfig::new(vec![0.5], 100, 64, 1);
        assert!(estimate_curve(&p, &bad).is_err());
        let bad = CurveConfig::new(vec![-0.5], 20_000, 64, 1);
        assert!(estimate_curve(&p, &bad).is_err());
        let empty = CurveConfig::new(vec![0.05], 10_000, 256, 1);
        assert!(matches!(estimate_curve(&p, &empty), Err(Error::EmptyCurve)));
    }
}
