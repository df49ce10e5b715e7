//! Reference values computed without the library: a Stirling-series gamma,
//! the textbook constant formulas and the reflection series for Brownian
//! motion.
#![allow(dead_code)]

use std::f64::consts::PI;

/// `ln Γ(x)` for `x > 0`: shift to `x >= 20`, then Stirling's series.
pub fn ln_gamma(x: f64) -> f64 {
    assert!(x > 0.0);
    let mut z = x;
    let mut shift = 0.0;
    while z < 20.0 {
        shift += z.ln();
        z += 1.0;
    }
    let z2 = z * z;
    let series = 1.0 / (12.0 * z) - 1.0 / (360.0 * z * z2) + 1.0 / (1260.0 * z2 * z2 * z)
        - 1.0 / (1680.0 * z2 * z2 * z2 * z)
        + 1.0 / (1188.0 * z2 * z2 * z2 * z2 * z);
    (z - 0.5) * z.ln() - z + 0.5 * (2.0 * PI).ln() + series - shift
}

pub fn gamma(x: f64) -> f64 {
    ln_gamma(x).exp()
}

pub fn theta(alpha: f64, h: f64) -> f64 {
    0.5 - (1.0 - h) / alpha
}

/// `Γ(2H+1) sin(πH) / (2π)`.
pub fn noise_constant(h: f64) -> f64 {
    gamma(2.0 * h + 1.0) * (PI * h).sin() / (2.0 * PI)
}

/// `c21 = C_H / (2H+α−2) · 2^{(2H+α−2)/α} · Γ((2−2H)/α)`.
pub fn c21(alpha: f64, h: f64) -> f64 {
    let d = 2.0 * h + alpha - 2.0;
    noise_constant(h) / d * 2f64.powf(d / alpha) * gamma((2.0 - 2.0 * h) / alpha)
}

/// `κ = sqrt(H Γ(2H) Γ(1−2θ) sin(πH) / (π α θ))`.
pub fn kappa(alpha: f64, h: f64) -> f64 {
    let th = theta(alpha, h);
    (h * gamma(2.0 * h) * gamma(1.0 - 2.0 * th) * (PI * h).sin() / (PI * alpha * th)).sqrt()
}

/// `R(s, t) = c21 2^{−2θ} ((t+s)^{2θ} − |t−s|^{2θ})`.
pub fn cov(alpha: f64, h: f64, s: f64, t: f64) -> f64 {
    let th = theta(alpha, h);
    c21(alpha, h) * 2f64.powf(-2.0 * th) * ((t + s).powf(2.0 * th) - (t - s).abs().powf(2.0 * th))
}

/// `P(sup_{[0,T]} |B| <= ε)` for standard Brownian motion.
pub fn bm_small_ball(eps: f64, horizon: f64) -> f64 {
    let mut sum = 0.0;
    for k in 0..200 {
        let m = (2 * k + 1) as f64;
        let term = (-m * m * PI * PI * horizon / (8.0 * eps * eps)).exp() / m;
        sum += if k % 2 == 0 { term } else { -term };
        if term < 1e-300 {
            break;
        }
    }
    4.0 / PI * sum
}

/// The five admissible `(α, H)` pairs used throughout.
pub const PAIRS: [(f64, f64); 5] = [(2.0, 0.5), (1.5, 0.75), (1.2, 0.9), (1.8, 0.3), (2.0, 0.95)];

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}
