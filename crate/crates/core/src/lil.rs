//! The localization experiment behind the Chung limit at `t = 0`.
//!
//! Times `t_n = exp(−n^{1+β})` cut `(0, 1/e]` into slabs `[t_{n+1}, t_n]`.
//! On slab `n` the solution splits as `u = u_n + Y_n`, where `u_n` is driven
//! by the noise after `t_{n+1}` and `Y_n` by the noise before it. The `u_n`
//! are independent across `n` and `Y_n` is small, so
//! `min_{n <= N} sup_slab |u| / ψ(t_n)` tracks `κ λ^θ` as `N` grows.
//!
//! Every slab is simulated in the units of its upper end. By
//! self-similarity, `t_n^{−θ} u_n(t_n s)` on `s ∈ [a_n, 1]`,
//! `a_n = t_{n+1}/t_n`, has the slab covariance with start `a_n`, and
//! `sup_slab |u_n| / ψ(t_n) = sup_s |ũ_n(s)| · ((1+β) log n)^θ`. Nothing
//! underflows even where `t_{n+1}` is subnormal.

use crate::covariance::{build_kind, var_yn, CovKind, TimeGrid};
use crate::error::{Error, Result};
use crate::params::{ln_t_seq, ratio_bound_holds, t_seq, DerivedConstants, ModelParams};
use crate::rng::{self, Domain};
use crate::sampler::{factorize, factorize_low_rank, map_blocks, DenseSource, Factor, PathSource};
use crate::stats::{median, weighted_line};

/// `t_{n_max}` must stay above this.
pub const TIME_FLOOR: f64 = 1e-300;
pub const MIN_SLAB_POINTS: usize = 128;
/// Stream ids of different slabs are separated by this offset.
const SLAB_STREAM_STRIDE: u64 = 1 << 40;

#[derive(Debug, Clone)]
pub struct Slab {
    pub n: u32,
    /// `t_{n+1}`.
    pub lower: f64,
    /// `t_n`.
    pub upper: f64,
    /// `ln t_n`.
    pub ln_upper: f64,
    /// Grid on `[a_n, 1]` in units of `t_n`, see [`slab_grid`].
    pub scaled_grid: TimeGrid,
}

impl Slab {
    /// `a_n = t_{n+1}/t_n`.
    pub fn scaled_start(&self) -> f64 {
        self.scaled_grid.first()
    }

    /// Grid in absolute time. Points below the normal range lose precision
    /// and `t_{27}` (β = 1) underflows to zero.
    pub fn absolute_points(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self
            .scaled_grid
            .points()
            .iter()
            .map(|s| (self.ln_upper + s.ln()).exp())
            .collect();
        let last = pts.len() - 1;
        pts[0] = self.lower;
        pts[last] = self.upper;
        pts
    }

    /// `ψ(t_n) / t_n^θ` inverted: multiply a scaled sup by this to get
    /// `sup / ψ(t_n)`. Zero at `n = 1`, where `ψ(t_1)` is infinite.
    pub fn psi_factor(&self, beta: f64, theta: f64) -> f64 {
        ((1.0 + beta) * (self.n as f64).ln()).powf(theta)
    }
}

#[derive(Debug, Clone)]
pub struct LocalizationPlan {
    pub beta: f64,
    pub n_min: u32,
    pub n_max: u32,
    pub requested_n_max: u32,
    pub slabs: Vec<Slab>,
}

impl LocalizationPlan {
    pub fn clamped(&self) -> bool {
        self.n_max < self.requested_n_max
    }
}

/// Where slab grids switch from geometric to uniform spacing (scaled units).
pub const SLAB_KNEE: f64 = 1.0 / 32.0;

/// Grid on `[a, 1]`: a quarter of the points geometric on `[a, SLAB_KNEE]`,
/// the rest uniform on `[SLAB_KNEE, 1]`. The standard deviation of the slab
/// field grows like `s^θ`, so the supremum lives near the top and the
/// geometric part only has to resolve the many decades below the knee.
/// Slabs starting above half the knee get a uniform grid.
pub fn slab_grid(points: usize, a: f64) -> Result<TimeGrid> {
    if !(a > 0.0 && a < 1.0) || points < 8 {
        return Err(Error::InvalidGrid(format!(
            "slab grid needs 0 < a < 1 and >= 8 points, got a = {a}, {points} points"
        )));
    }
    let mut pts = if a >= SLAB_KNEE / 2.0 {
        (0..points)
            .map(|k| a + (1.0 - a) * k as f64 / (points - 1) as f64)
            .collect::<Vec<_>>()
    } else {
        let geo = points / 4;
        let uni = points - geo;
        let mut p = TimeGrid::geometric(geo, a, SLAB_KNEE)?.points().to_vec();
        p.extend((1..=uni).map(|k| SLAB_KNEE + (1.0 - SLAB_KNEE) * k as f64 / uni as f64));
        p
    };
    pts[0] = a;
    *pts.last_mut().expect("non-empty") = 1.0;
    TimeGrid::new(pts)
}

/// Largest `n` with `t_n > 1e-300`, i.e. `n^{1+β} < ln(1e300) ≈ 690.8`.
pub fn max_feasible_n(beta: f64) -> u32 {
    let limit = -TIME_FLOOR.ln();
    let mut n = 1u32;
    while ((n + 1) as f64).powf(1.0 + beta) < limit {
        n += 1;
    }
    n
}

pub fn build_plan(params: &ModelParams, n_min: u32, n_max: u32, grid_points: usize) -> Result<LocalizationPlan> {
    if n_min < 1 || n_min >= n_max {
        return Err(Error::InvalidInput(format!(
            "need 1 <= n_min < n_max, got [{n_min}, {n_max}]"
        )));
    }
    if grid_points < MIN_SLAB_POINTS {
        return Err(Error::InvalidInput(format!(
            "slab grids need at least {MIN_SLAB_POINTS} points"
        )));
    }
    let beta = params.beta;
    let feasible = max_feasible_n(beta);
    let top = n_max.min(feasible);
    if n_min >= top {
        return Err(Error::InvalidInput(format!(
            "empty feasible range: n_min {n_min} >= underflow limit {top}"
        )));
    }
    let mut slabs = Vec::new();
    for n in n_min..=top {
        debug_assert!(ratio_bound_holds(n, beta));
        let ln_upper = ln_t_seq(n, beta);
        let ln_lower = ln_t_seq(n + 1, beta);
        let a = (ln_lower - ln_upper).exp();
        slabs.push(Slab {
            n,
            lower: t_seq(n + 1, beta),
            upper: t_seq(n, beta),
            ln_upper,
            scaled_grid: slab_grid(grid_points, a)?,
        });
    }
    Ok(LocalizationPlan {
        beta,
        n_min,
        n_max: top,
        requested_n_max: n_max,
        slabs,
    })
}

/// How `Y_n` is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RemainderMode {
    /// One standard normal per (realization, slab), scaled by the exact
    /// standard deviation `√var_Yn(t)` at each grid point.
    Coupled,
    /// Jointly Gaussian with the full remainder covariance (audit runs).
    Joint,
}

#[derive(Debug, Clone)]
pub struct SlabSample {
    pub n: u32,
    /// `count × grid` scaled paths of `u_n`.
    pub un: Vec<f64>,
    /// `count × grid` scaled paths of `Y_n`.
    pub yn: Vec<f64>,
    pub grid_len: usize,
}

impl SlabSample {
    pub fn un_path(&self, r: usize) -> &[f64] {
        &self.un[r * self.grid_len..(r + 1) * self.grid_len]
    }

    pub fn yn_path(&self, r: usize) -> &[f64] {
        &self.yn[r * self.grid_len..(r + 1) * self.grid_len]
    }
}

#[derive(Debug, Clone)]
pub struct Blocks {
    pub plan: LocalizationPlan,
    pub count: usize,
    pub seed: u64,
    pub mode: RemainderMode,
    pub slabs: Vec<SlabSample>,
}

/// Slab factors, computed once per plan and reused read-only.
#[derive(Debug, Clone)]
pub struct SlabFactors {
    pub un: Vec<Factor>,
    pub yn_joint: Option<Vec<Factor>>,
}

pub fn factor_slabs(plan: &LocalizationPlan, consts: &DerivedConstants, mode: RemainderMode) -> Result<SlabFactors> {
    let mut un = Vec::with_capacity(plan.slabs.len());
    let mut yn = Vec::new();
    for slab in &plan.slabs {
        let wrap = |e: Error| Error::Slab {
            slab: slab.n,
            source: Box::new(e),
        };
        let a = slab.scaled_start();
        let cov = build_kind(&slab.scaled_grid, consts, CovKind::Slab { start: a }).map_err(wrap)?;
        un.push(factorize(&cov).map_err(wrap)?);
        if mode == RemainderMode::Joint {
            let cov = build_kind(&slab.scaled_grid, consts, CovKind::Remainder { start: a })
                .map_err(wrap)?;
            yn.push(factorize_low_rank(&cov, 1e-13));
        }
    }
    Ok(SlabFactors {
        un,
        yn_joint: (mode == RemainderMode::Joint).then_some(yn),
    })
}

struct Offset<'a> {
    inner: &'a DenseSource,
    offset: u64,
}

impl PathSource for Offset<'_> {
    fn grid_size(&self) -> usize {
        self.inner.grid_size()
    }

    fn fill_block(&self, first: usize, rows: usize, seed: u64, out: &mut [f64]) {
        // Shift the stream ids so slabs draw from disjoint streams; the
        // domain key stays that of the inner source.
        self.inner.fill_block_at(self.offset + first as u64, rows, seed, out);
    }
}

pub fn simulate_blocks(
    plan: &LocalizationPlan,
    consts: &DerivedConstants,
    count: usize,
    seed: u64,
    mode: RemainderMode,
) -> Result<Blocks> {
    let factors = factor_slabs(plan, consts, mode)?;
    simulate_with_factors(plan, consts, &factors, count, seed, mode)
}

pub fn simulate_with_factors(
    plan: &LocalizationPlan,
    consts: &DerivedConstants,
    factors: &SlabFactors,
    count: usize,
    seed: u64,
    mode: RemainderMode,
) -> Result<Blocks> {
    if count == 0 {
        return Err(Error::InvalidInput("count must be >= 1".into()));
    }
    let mut slabs = Vec::with_capacity(plan.slabs.len());
    for (k, slab) in plan.slabs.iter().enumerate() {
        let m = slab.scaled_grid.len();
        let offset = slab.n as u64 * SLAB_STREAM_STRIDE;
        let src = DenseSource::new(factors.un[k].clone());
        let un = gather(&Offset { inner: &src, offset }, count, seed);
        let yn = match mode {
            RemainderMode::Coupled => {
                let a = slab.scaled_start();
                let sd: Vec<f64> = slab
                    .scaled_grid
                    .points()
                    .iter()
                    .map(|&s| var_yn(s, a, consts).map(|v| v.max(0.0).sqrt()))
                    .collect::<Result<_>>()?;
                let mut yn = vec![0.0; count * m];
                for r in 0..count {
                    let mut z = [0.0];
                    rng::fill_normals(&mut rng::stream(seed, Domain::Remainder, offset + r as u64), &mut z);
                    for (y, s) in yn[r * m..(r + 1) * m].iter_mut().zip(&sd) {
                        *y = s * z[0];
                    }
                }
                yn
            }
            RemainderMode::Joint => {
                let f = &factors.yn_joint.as_ref().expect("joint factors")[k];
                let mut src = DenseSource::new(f.clone());
                src.domain = Domain::Remainder;
                gather(&Offset { inner: &src, offset }, count, seed)
            }
        };
        if let Some(pos) = un.iter().chain(&yn).position(|x| !x.is_finite()) {
            return Err(Error::Slab {
                slab: slab.n,
                source: Box::new(Error::NonFinite { path: pos / m }),
            });
        }
        slabs.push(SlabSample {
            n: slab.n,
            un,
            yn,
            grid_len: m,
        });
    }
    Ok(Blocks {
        plan: plan.clone(),
        count,
        seed,
        mode,
        slabs,
    })
}

fn gather<S: PathSource>(source: &S, count: usize, seed: u64) -> Vec<f64> {
    map_blocks(source, count, seed, |_, _, b| b.to_vec())
        .into_iter()
        .flatten()
        .collect()
}

fn sup_abs(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn sup_abs_sum(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x + y).abs()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LilRecord {
    pub realization: usize,
    pub n: u32,
    pub sup_u_over_psi: f64,
    pub sup_un_over_psi: f64,
    pub sup_yn_over_psi: f64,
    /// Prefix minimum of `sup_un_over_psi`.
    pub running_min: f64,
    /// Prefix minimum of `sup_u_over_psi`.
    pub running_min_u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measured {
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone)]
pub struct LilStatistics {
    /// Realization-major, then increasing `n`.
    pub per_n: Vec<LilRecord>,
    pub realizations: usize,
    /// `κ λ̂^θ`.
    pub predicted: Measured,
    pub lambda_hat: Measured,
    /// Median over realizations of the final `running_min`.
    pub median_running_min: f64,
    pub median_running_min_u: f64,
    /// Same median with every slab grid thinned to every other point.
    pub median_running_min_half_grid: f64,
    pub monotone_violations: usize,
    pub triangle_violations: usize,
}

impl LilStatistics {
    pub fn final_running_min(&self) -> Vec<f64> {
        self.last_records().map(|r| r.running_min).collect()
    }

    fn last_records(&self) -> impl Iterator<Item = &LilRecord> {
        let per = self.per_n.len().checked_div(self.realizations).unwrap_or(0);
        self.per_n.iter().skip(per.saturating_sub(1)).step_by(per.max(1))
    }

    /// Fraction of the predicted value: `median / (κ λ̂^θ)`.
    pub fn bracket_ratio(&self) -> f64 {
        self.median_running_min / self.predicted.value
    }

    /// Relative change of the median under 2× grid thinning.
    pub fn refinement_gap(&self) -> f64 {
        (self.median_running_min - self.median_running_min_half_grid).abs() / self.median_running_min
    }
}

/// Statistics over slabs with `n >= 2` (ψ(t_1) is infinite).
pub fn compute_statistics(blocks: &Blocks, consts: &DerivedConstants, lambda_hat: Measured) -> LilStatistics {
    let beta = blocks.plan.beta;
    let theta = consts.theta;
    let active: Vec<(usize, f64)> = blocks
        .plan
        .slabs
        .iter()
        .enumerate()
        .filter(|(_, s)| s.n >= 2)
        .map(|(k, s)| (k, s.psi_factor(beta, theta)))
        .collect();
    let mut per_n = Vec::with_capacity(blocks.count * active.len());
    let mut finals = Vec::with_capacity(blocks.count);
    let mut finals_u = Vec::with_capacity(blocks.count);
    let mut finals_half = Vec::with_capacity(blocks.count);
    let mut monotone_violations = 0;
    let mut triangle_violations = 0;
    for r in 0..blocks.count {
        let mut run = f64::INFINITY;
        let mut run_u = f64::INFINITY;
        let mut run_half = f64::INFINITY;
        for &(k, factor) in &active {
            let s = &blocks.slabs[k];
            let (un, yn) = (s.un_path(r), s.yn_path(r));
            let sup_un = sup_abs(un) * factor;
            let sup_yn = sup_abs(yn) * factor;
            let sup_u = sup_abs_sum(un, yn) * factor;
            if sup_u > sup_un + sup_yn {
                triangle_violations += 1;
            }
            let half: Vec<f64> = un.iter().step_by(2).cloned().collect();
            run_half = run_half.min(sup_abs(&half) * factor);
            let prev = run;
            run = run.min(sup_un);
            run_u = run_u.min(sup_u);
            if run > prev {
                monotone_violations += 1;
            }
            per_n.push(LilRecord {
                realization: r,
                n: s.n,
                sup_u_over_psi: sup_u,
                sup_un_over_psi: sup_un,
                sup_yn_over_psi: sup_yn,
                running_min: run,
                running_min_u: run_u,
            });
        }
        finals.push(run);
        finals_u.push(run_u);
        finals_half.push(run_half);
    }
    let predicted = Measured {
        value: consts.kappa * lambda_hat.value.powf(theta),
        stderr: consts.kappa * theta * lambda_hat.value.powf(theta - 1.0) * lambda_hat.stderr,
    };
    LilStatistics {
        per_n,
        realizations: blocks.count,
        predicted,
        lambda_hat,
        median_running_min: median(&finals),
        median_running_min_u: median(&finals_u),
        median_running_min_half_grid: median(&finals_half),
        monotone_violations,
        triangle_violations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaRow {
    pub n: u32,
    /// Frequency of `sup_{[0, t_{n+1}]} |u| >= δ ψ(t_n)`.
    pub head_exceed: f64,
    /// Borell-type bound `2 exp(−δ² (t_n/t_{n+1})^{2θ} / (8 c21 ((1+β) log n)^{2θ}))`.
    pub head_bound: f64,
    /// Frequency of `sup_slab |Y_n| >= δ ψ(t_n)`.
    pub remainder_exceed: f64,
    /// Doubly exponential shape `exp(−exp(2θ(1+β) n^β) / (log n)^{2θ})`
    /// with unit constants.
    pub shape: f64,
    /// Frequency of `sup_slab |u| <= γ ψ(t_n)`.
    pub small_ball: f64,
    /// Frequency of `sup_slab |u_n| <= κ (1+2β)^θ λ̂^θ ψ(t_n)`.
    pub divergence_event: f64,
}

#[derive(Debug, Clone)]
pub struct LemmaReport {
    pub delta: f64,
    pub gamma: f64,
    pub rows: Vec<LemmaRow>,
    /// Fitted slope of `log P(sup |u| <= γ ψ(t_n))` against `log n`.
    pub slope: Option<f64>,
    /// `−λ̂ (κ/γ)^{1/θ} (1+β)`.
    pub predicted_slope: f64,
    /// Partial sums of `divergence_event` over `n`.
    pub partial_sums: Vec<f64>,
    /// Sum over the upper half of the `n` range divided by the sum over the
    /// lower half; a convergent tail makes this small.
    pub tail_ratio: f64,
}

/// Empirical view of the probability estimates driving the localization
/// argument. `head_sup` holds, per realization, `sup_{[0,1]} |u|` on an
/// independent grid; by self-similarity `sup_{[0, t_{n+1}]} |u| / t_n^θ`
/// has the law of `a_n^θ` times it.
pub fn check_lemma_bounds(
    blocks: &Blocks,
    consts: &DerivedConstants,
    head_sup: &[f64],
    delta: f64,
    gamma: f64,
    lambda_hat: f64,
) -> LemmaReport {
    let beta = blocks.plan.beta;
    let theta = consts.theta;
    let count = blocks.count as f64;
    let gamma_div = consts.kappa * (1.0 + 2.0 * beta).powf(theta) * lambda_hat.powf(theta);
    let mut rows = Vec::new();
    for (slab, sample) in blocks.plan.slabs.iter().zip(&blocks.slabs) {
        let n = slab.n;
        let f = slab.psi_factor(beta, theta);
        let a = slab.scaled_start();
        let head_exceed = head_sup
            .iter()
            .filter(|&&x| a.powf(theta) * x * f >= delta)
            .count() as f64
            / head_sup.len().max(1) as f64;
        let ll = ((1.0 + beta) * (n as f64).ln()).powf(2.0 * theta);
        let head_bound = if n < 2 {
            0.0
        } else {
            (2.0 * (-(delta * delta) * a.powf(-2.0 * theta) / (8.0 * consts.c21 * ll)).exp()).min(1.0)
        };
        let shape = if n < 2 {
            0.0
        } else {
            (-(2.0 * theta * (1.0 + beta) * (n as f64).powf(beta)).exp()
                / (n as f64).ln().powf(2.0 * theta))
            .exp()
        };
        let mut rem = 0usize;
        let mut small = 0usize;
        let mut div = 0usize;
        for r in 0..blocks.count {
            let (un, yn) = (sample.un_path(r), sample.yn_path(r));
            if sup_abs(yn) * f >= delta {
                rem += 1;
            }
            if sup_abs_sum(un, yn) * f <= gamma {
                small += 1;
            }
            if sup_abs(un) * f <= gamma_div {
                div += 1;
            }
        }
        rows.push(LemmaRow {
            n,
            head_exceed,
            head_bound,
            remainder_exceed: rem as f64 / count,
            shape,
            small_ball: small as f64 / count,
            divergence_event: div as f64 / count,
        });
    }

    let fit_rows: Vec<&LemmaRow> = rows
        .iter()
        .filter(|r| r.n >= 2 && r.small_ball > 0.0 && r.small_ball < 1.0)
        .collect();
    let slope = (fit_rows.len() >= 3).then(|| {
        let x: Vec<f64> = fit_rows.iter().map(|r| (r.n as f64).ln()).collect();
        let y: Vec<f64> = fit_rows.iter().map(|r| r.small_ball.ln()).collect();
        let w: Vec<f64> = fit_rows
            .iter()
            .map(|r| count * r.small_ball / (1.0 - r.small_ball))
            .collect();
        weighted_line(&x, &y, &w).slope
    });
    let predicted_slope = -lambda_hat * (consts.kappa / gamma).powf(1.0 / theta) * (1.0 + beta);

    let active: Vec<f64> = rows.iter().filter(|r| r.n >= 2).map(|r| r.divergence_event).collect();
    let mut acc = 0.0;
    let partial_sums: Vec<f64> = active
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    let half = active.len() / 2;
    let low: f64 = active[..half].iter().sum();
    let high: f64 = active[half..].iter().sum();
    LemmaReport {
        delta,
        gamma,
        rows,
        slope,
        predicted_slope,
        partial_sums,
        tail_ratio: if low > 0.0 { high / low } else { f64::NAN },
    }
}
