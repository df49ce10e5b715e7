//! Gamma function.
//!
//! Lanczos approximation with g = 7 and nine coefficients (the set popularized
//! by Numerical Recipes and GSL), with the reflection formula below 1/2.
//! Relative error stays under 1e-13 on (0, 10], which covers every argument
//! the model constants need.

use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;

#[allow(clippy::excessive_precision)]
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

pub fn gamma(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x == x.floor() && x <= 0.0 {
        return f64::NAN;
    }
    if x < 0.5 {
        return PI / ((PI * x).sin() * gamma(1.0 - x));
    }
    // Small positive integers are exact factorials.
    if x == x.floor() && x <= 21.0 {
        return (1..x as u64).map(|k| k as f64).product();
    }
    let z = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let w = z + LANCZOS_G + 0.5;
    // w^(z+1/2) e^{-w} split in two to delay overflow for large z.
    let half = w.powf(0.5 * (z + 0.5));
    (2.0 * PI).sqrt() * half * (half * (-w).exp()) * acc
}

pub fn ln_gamma(x: f64) -> f64 {
    gamma(x).abs().ln()
}
