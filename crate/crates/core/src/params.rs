//! Model parameters and the constants derived from them.
//!
//! The equation is `du/dt = -(-Δ)^{α/2} u + Ẇ` on the real line with noise
//! that is white in time and fractional (index `H`) in space. It has a random
//! field solution exactly when `1 < α <= 2` and `(2 - α)/2 < H < 1`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::special::gamma;

/// Default localization exponent for `t_n = exp(-n^{1+β})`.
pub const DEFAULT_BETA: f64 = 1.0;

/// `H` is rejected above `1 - HURST_CONDITIONING * α / 2`, where
/// `Γ(1 - 2θ)` stops being representable with useful accuracy.
pub const HURST_CONDITIONING: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Order of the fractional Laplacian.
    pub alpha: f64,
    /// Spatial Hurst index of the noise.
    pub hurst: f64,
    /// Localization exponent.
    pub beta: f64,
}

impl ModelParams {
    pub fn new(alpha: f64, hurst: f64, beta: f64) -> Result<Self> {
        validate(ModelParams { alpha, hurst, beta })
    }

    pub fn with_default_beta(alpha: f64, hurst: f64) -> Result<Self> {
        Self::new(alpha, hurst, DEFAULT_BETA)
    }

    /// Lower end of the admissible `H` interval for this `α`.
    pub fn hurst_lower_bound(&self) -> f64 {
        (2.0 - self.alpha) / 2.0
    }
}

/// Returns `params` unchanged when every invariant holds. Bounds are strict.
pub fn validate(params: ModelParams) -> Result<ModelParams> {
    let ModelParams { alpha, hurst, beta } = params;
    if !(alpha > 1.0 && alpha <= 2.0) {
        return Err(Error::AlphaOutOfRange { value: alpha });
    }
    let lower = (2.0 - alpha) / 2.0;
    if !(hurst > lower) {
        return Err(Error::HurstOutOfRange {
            value: hurst,
            lower,
            bound: "H > (2 - alpha)/2",
        });
    }
    if !(hurst < 1.0) {
        return Err(Error::HurstOutOfRange {
            value: hurst,
            lower,
            bound: "H < 1",
        });
    }
    let limit = 1.0 - HURST_CONDITIONING * alpha / 2.0;
    if hurst > limit {
        return Err(Error::IllConditioned {
            value: hurst,
            limit,
        });
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::BetaNonPositive { value: beta });
    }
    Ok(params)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedConstants {
    /// Temporal Hurst index, in (0, 1/2).
    pub theta: f64,
    /// Spectral constant of the noise.
    pub c_h: f64,
    /// Variance coefficient: `E[u(t,x)^2] = c21 * t^{2θ}`.
    pub c21: f64,
    /// Scale constant of the Chung limit.
    pub kappa: f64,
}

impl DerivedConstants {
    /// `c21 * 2^{-2θ}`, the prefactor of every closed-form covariance.
    pub fn cov_prefactor(&self) -> f64 {
        self.c21 * 2f64.powf(-2.0 * self.theta)
    }

    /// `κ^{1/θ}`, the factor relating the small-ball constant of `u` to
    /// that of a unit fractional Brownian motion.
    pub fn kappa_pow_inv_theta(&self) -> f64 {
        self.kappa.powf(1.0 / self.theta)
    }
}

pub fn theta(params: &ModelParams) -> f64 {
    0.5 - (1.0 - params.hurst) / params.alpha
}

pub fn noise_constant(hurst: f64) -> f64 {
    gamma(2.0 * hurst + 1.0) * (PI * hurst).sin() / (2.0 * PI)
}

/// The variance coefficient written as `C_H/(2H+α-2) 2^{(2H+α-2)/α} Γ((2-2H)/α)`.
pub fn c21_original_form(params: &ModelParams) -> f64 {
    let ModelParams { alpha, hurst, .. } = *params;
    let e = 2.0 * hurst + alpha - 2.0;
    noise_constant(hurst) / e * 2f64.powf(e / alpha) * gamma((2.0 - 2.0 * hurst) / alpha)
}

/// The variance coefficient rewritten through `2H + α - 2 = 2αθ`.
pub fn c21_theta_form(params: &ModelParams) -> f64 {
    let th = theta(params);
    noise_constant(params.hurst) * 2f64.powf(2.0 * th) * gamma(1.0 - 2.0 * th)
        / (2.0 * params.alpha * th)
}

pub fn derive(params: &ModelParams) -> Result<DerivedConstants> {
    let params = validate(*params)?;
    let ModelParams { alpha, hurst, .. } = params;
    let theta = theta(&params);
    let c_h = noise_constant(hurst);
    let c21 = c21_theta_form(&params);
    let kappa_sq = hurst * gamma(2.0 * hurst) * gamma(1.0 - 2.0 * theta) * (PI * hurst).sin()
        / (PI * alpha * theta);
    Ok(DerivedConstants {
        theta,
        c_h,
        c21,
        kappa: kappa_sq.sqrt(),
    })
}

/// `ψ(t) = (t / log log(1/t))^θ` for `0 < t < 1/e`.
pub fn psi(t: f64, theta: f64) -> Result<f64> {
    if !(t > 0.0 && t < (-1f64).exp()) {
        return Err(Error::Domain {
            what: "psi",
            value: t,
            domain: "(0, 1/e)",
        });
    }
    let ll = (-t.ln()).ln();
    Ok((t / ll).powf(theta))
}

/// Localization times `t_n = exp(-n^{1+β})`.
pub fn t_seq(n: u32, beta: f64) -> f64 {
    (-(n as f64).powf(1.0 + beta)).exp()
}

/// `ln t_n`, which stays representable long after `t_n` underflows.
pub fn ln_t_seq(n: u32, beta: f64) -> f64 {
    -(n as f64).powf(1.0 + beta)
}

/// Whether `t_{n+1}/t_n <= exp(-(1+β) n^β)`, compared in log space.
pub fn ratio_bound_holds(n: u32, beta: f64) -> bool {
    let lhs = ln_t_seq(n + 1, beta) - ln_t_seq(n, beta);
    let rhs = -(1.0 + beta) * (n as f64).powf(beta);
    lhs <= rhs
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p(alpha: f64, hurst: f64) -> ModelParams {
        ModelParams::with_default_beta(alpha, hurst).unwrap()
    }

    #[test]
    fn heat_equation_white_noise_is_valid() {
        assert!(ModelParams::new(2.0, 0.5, 1.0).is_ok());
    }

    #[test]
    fn lower_hurst_boundary_is_excluded() {
        let err = ModelParams::new(1.5, 0.25, 1.0).unwrap_err();
        match err {
            Error::HurstOutOfRange { lower, .. } => assert_eq!(lower, 0.25),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn alpha_bounds() {
        assert!(matches!(
            ModelParams::new(2.5, 0.5, 1.0),
            Err(Error::AlphaOutOfRange { .. })
        ));
        assert!(matches!(
            ModelParams::new(1.0, 0.9, 1.0),
            Err(Error::AlphaOutOfRange { .. })
        ));
        assert!(ModelParams::new(2.0, 0.3, 1.0).is_ok());
    }

    #[test]
    fn hurst_upper_and_conditioning() {
        assert!(matches!(
            ModelParams::new(2.0, 1.0, 1.0),
            Err(Error::HurstOutOfRange { .. })
        ));
        assert!(matches!(
            ModelParams::new(2.0, 1.0 - 1e-7, 1.0),
            Err(Error::IllConditioned { .. })
        ));
        assert!(ModelParams::new(2.0, 1.0 - 2e-6, 1.0).is_ok());
    }

    #[test]
    fn beta_and_nan() {
        assert!(matches!(
            ModelParams::new(2.0, 0.5, 0.0),
            Err(Error::BetaNonPositive { .. })
        ));
        assert!(ModelParams::new(f64::NAN, 0.5, 1.0).is_err());
        assert!(ModelParams::new(2.0, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn white_noise_constants() {
        let c = derive(&p(2.0, 0.5)).unwrap();
        assert_eq!(c.theta, 0.25);
        assert_relative_eq!(c.c21, 1.0 / (2.0 * PI).sqrt(), max_relative = 1e-13);
        assert_relative_eq!(c.kappa, PI.powf(-0.25), max_relative = 1e-13);
        assert_relative_eq!(c.c_h, 1.0 / (2.0 * PI), max_relative = 1e-14);
    }

    // 50-digit mpmath values of (theta, C_H, c21, kappa).
    #[test]
    #[allow(clippy::excessive_precision)]
    fn constants_match_reference() {
        let table = [
            (1.5, 0.75, 0.149_603_355_150_537_25, 0.636_195_725_228_630_26, 0.895_296_814_508_287_01),
            (1.2, 0.9, 0.082_452_469_409_151_348, 0.817_767_514_812_148_01, 0.958_077_762_875_701_62),
            (1.8, 0.3, 0.115_048_190_840_816_05, 0.399_316_716_186_400_16, 0.827_419_908_152_371_89),
            (2.0, 0.95, 0.045_496_241_237_597_285, 0.900_675_330_167_904_91, 0.965_628_073_893_920_94),
            (1.5, 0.5, 0.159_154_943_091_895_34, 0.543_062_670_449_687_35, 0.928_470_922_730_751_62),
        ];
        for (a, h, ch, c21, kappa) in table {
            let c = derive(&p(a, h)).unwrap();
            assert_relative_eq!(c.c_h, ch, max_relative = 1e-12);
            assert_relative_eq!(c.c21, c21, max_relative = 1e-12);
            assert_relative_eq!(c.kappa, kappa, max_relative = 1e-12);
        }
    }

    #[test]
    fn kappa_identity() {
        let params = p(1.7, 0.6);
        let c = derive(&params).unwrap();
        let lhs = c.kappa * c.kappa * PI * params.alpha * c.theta;
        let rhs = params.hurst
            * gamma(2.0 * params.hurst)
            * gamma(1.0 - 2.0 * c.theta)
            * (PI * params.hurst).sin();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-13);
    }

    #[test]
    #[allow(clippy::excessive_precision)]
    fn psi_values() {
        let e = std::f64::consts::E;
        assert_relative_eq!(psi((-e).exp(), 0.25).unwrap(), (-e * 0.25).exp(), max_relative = 1e-13);
        assert_relative_eq!(psi((-e).exp(), 0.25).unwrap(), 0.506_834_652_834_107_44, max_relative = 1e-12);
        assert_relative_eq!(psi((-e * e).exp(), 0.25).unwrap(), 0.132_582_415_934_047_72, max_relative = 1e-12);
    }

    #[test]
    fn psi_domain() {
        assert!(psi(0.0, 0.25).is_err());
        assert!(psi(0.5, 0.25).is_err());
        assert!(psi((-1f64).exp(), 0.25).is_err());
        assert!(psi(-1.0, 0.25).is_err());
    }

    #[test]
    fn t_seq_values() {
        assert_relative_eq!(t_seq(1, 0.7), (-1f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(t_seq(2, 1.0), 0.018_315_638_888_734_18, max_relative = 1e-14);
        assert!(ratio_bound_holds(3, 0.5));
        let lhs = t_seq(4, 0.5) / t_seq(3, 0.5);
        assert!(lhs <= (-1.5 * 3f64.sqrt()).exp());
    }
}
