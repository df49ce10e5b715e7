//! Adaptive Gauss–Kronrod (7/15) quadrature and the spectral covariance
//! integral it is used to evaluate.
//!
//! This is the independent route to the temporal covariance. It never calls
//! the gamma function or the closed form.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::params::ModelParams;

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: f64,
    pub abs_error: f64,
    pub intervals: usize,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = half * XGK[j];
        let s = f(center - x) + f(center + x);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive integration of `f` over `[a, b]`: keep bisecting the
/// segment with the largest error until the summed error meets
/// `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Result<Estimate> {
    if a == b {
        return Ok(Estimate {
            value: 0.0,
            abs_error: 0.0,
            intervals: 0,
        });
    }
    let (value, err) = gk15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, err });
    let mut total = value;
    let mut total_err = err;
    while total_err > abs_tol.max(rel_tol * total.abs()) {
        if heap.len() >= max_intervals {
            return Err(Error::QuadratureNonConvergence {
                achieved: total_err,
                target: abs_tol.max(rel_tol * total.abs()),
            });
        }
        let seg = heap.pop().expect("heap never empty");
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            // Interval at machine resolution; cannot refine further.
            return Err(Error::QuadratureNonConvergence {
                achieved: total_err,
                target: abs_tol.max(rel_tol * total.abs()),
            });
        }
        let (v1, e1) = gk15(&f, seg.a, mid);
        let (v2, e2) = gk15(&f, mid, seg.b);
        total += v1 + v2 - seg.value;
        total_err += e1 + e2 - seg.err;
        heap.push(Segment { a: seg.a, b: mid, value: v1, err: e1 });
        heap.push(Segment { a: mid, b: seg.b, value: v2, err: e2 });
    }
    // Re-sum to shed accumulated cancellation from the running updates.
    let value: f64 = heap.iter().map(|s| s.value).sum();
    let abs_error: f64 = heap.iter().map(|s| s.err).sum();
    Ok(Estimate {
        value,
        abs_error,
        intervals: heap.len(),
    })
}

const REL_TOL: f64 = 1e-11;
const MAX_INTERVALS: usize = 4000;

/// `∫_0^∞ e^{-η} η^{p-1} dη` by quadrature, for `p > 0`.
///
/// On `[0, 1]` the substitution `η = w^{1/p}` removes the endpoint
/// singularity; on `[1, ∞)` the map `η = 1 + x/(1-x)` folds the tail onto
/// `[0, 1)`.
pub fn gamma_integral(p: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::Domain {
            what: "gamma_integral",
            value: p,
            domain: "(0, inf)",
        });
    }
    let head = integrate(
        |w: f64| (-w.powf(1.0 / p)).exp(),
        0.0,
        1.0,
        0.0,
        REL_TOL,
        MAX_INTERVALS,
    )?
    .value
        / p;
    let tail = integrate(
        |x: f64| {
            if x >= 1.0 {
                return 0.0;
            }
            let one_minus = 1.0 - x;
            let eta = 1.0 + x / one_minus;
            (-eta).exp() * eta.powf(p - 1.0) / (one_minus * one_minus)
        },
        0.0,
        1.0,
        0.0,
        REL_TOL,
        MAX_INTERVALS,
    )?
    .value;
    Ok(head + tail)
}

/// `∫_ℝ e^{-a|ξ|^α} |ξ|^{1-2H} dξ` for `a > 0`, reduced by `η = a ξ^α` to
/// `(2/α) a^{-p} ∫ e^{-η} η^{p-1} dη` with `p = (2-2H)/α`.
pub fn spectral_integral(a: f64, params: &ModelParams, gamma_p: f64) -> f64 {
    let p = (2.0 - 2.0 * params.hurst) / params.alpha;
    2.0 / params.alpha * a.powf(-p) * gamma_p
}

/// `C_H ∫_{lower}^{s} ∫_ℝ e^{-(t+s-2r)|ξ|^α} |ξ|^{1-2H} dξ dr` by quadrature
/// with `s <= t` (the arguments are swapped otherwise).
///
/// `lower = 0` gives the covariance of `u`; `lower = a > 0` restricts the
/// noise to `[a, s)` and gives the covariance of the slab field.
pub fn cov_quadrature_restricted(s: f64, t: f64, lower: f64, params: &ModelParams) -> Result<f64> {
    let (s, t) = if s <= t { (s, t) } else { (t, s) };
    if !(s >= lower && lower >= 0.0) {
        return Err(Error::Domain {
            what: "cov_quadrature_restricted",
            value: s,
            domain: "[lower, inf)",
        });
    }
    if s == lower {
        return Ok(0.0);
    }
    let p = (2.0 - 2.0 * params.hurst) / params.alpha;
    let gamma_p = gamma_integral(p)?;
    let c_h = crate::params::noise_constant(params.hurst);
    // r = s - z^m with m = 1/(1 - p) turns the (s - r)^{-p} endpoint
    // singularity at t = s into a bounded integrand.
    let m = 1.0 / (1.0 - p);
    let z_max = (s - lower).powf(1.0 / m);
    let integrand = |z: f64| {
        // t + s - 2r, written without cancelling s - r.
        let a = (t - s) + 2.0 * z.powf(m);
        if a <= 0.0 {
            // Only reachable at z = 0 with t = s, where the limit is finite.
            return spectral_integral(1.0, params, gamma_p) * 2f64.powf(-p) * m;
        }
        spectral_integral(a, params, gamma_p) * m * z.powf(m - 1.0)
    };
    let est = integrate(integrand, 0.0, z_max, 0.0, REL_TOL, MAX_INTERVALS)?;
    Ok(c_h * est.value)
}

pub fn cov_quadrature(s: f64, t: f64, params: &ModelParams) -> Result<f64> {
    if s < 0.0 || t < 0.0 {
        return Err(Error::Domain {
            what: "cov_quadrature",
            value: s.min(t),
            domain: "[0, inf)",
        });
    }
    if s == 0.0 || t == 0.0 {
        return Ok(0.0);
    }
    cov_quadrature_restricted(s, t, 0.0, params)
}
