//! Temporal covariance of `t ↦ u(t, x)` at a fixed site.
//!
//! Integrating the spectral representation gives
//!
//! ```text
//! R(s, t) = c21 · 2^{-2θ} · ((t + s)^{2θ} − |t − s|^{2θ})
//! ```
//!
//! and restricting the noise to times after `a` (the slab field `u_n` with
//! `a = t_{n+1}`) replaces `t + s` by `t + s − 2a`. The remainder
//! `Y_n = u − u_n` is driven by the noise before `a` and is independent of
//! `u_n`, so its covariance is the difference of the two.
//!
//! The closed forms are the production path. [`crate::quadrature`] evaluates
//! the same integrals numerically and is the oracle they are checked against.

use crate::error::{Error, Result};
use crate::linalg;
use crate::params::DerivedConstants;
use crate::par;

/// `x^{2θ}` with `0^{2θ} = 0`.
#[inline]
fn pow2t(x: f64, two_theta: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.powf(two_theta)
    }
}

pub fn cov_closed(s: f64, t: f64, consts: &DerivedConstants) -> f64 {
    let tt = 2.0 * consts.theta;
    consts.cov_prefactor() * (pow2t(t + s, tt) - pow2t((t - s).abs(), tt))
}

/// Covariance of the slab field driven by noise on `[slab_start, ·)`.
pub fn cov_un_closed(s: f64, t: f64, slab_start: f64, consts: &DerivedConstants) -> Result<f64> {
    if s < slab_start || t < slab_start {
        return Err(Error::Domain {
            what: "cov_un_closed",
            value: s.min(t),
            domain: "[slab_start, inf)",
        });
    }
    let tt = 2.0 * consts.theta;
    Ok(consts.cov_prefactor()
        * (pow2t(t + s - 2.0 * slab_start, tt) - pow2t((t - s).abs(), tt)))
}

/// Covariance of the early-noise remainder `Y = u − u_n`.
pub fn cov_yn_closed(s: f64, t: f64, slab_start: f64, consts: &DerivedConstants) -> Result<f64> {
    if s < slab_start || t < slab_start {
        return Err(Error::Domain {
            what: "cov_yn_closed",
            value: s.min(t),
            domain: "[slab_start, inf)",
        });
    }
    let tt = 2.0 * consts.theta;
    Ok(consts.cov_prefactor() * (pow2t(t + s, tt) - pow2t(t + s - 2.0 * slab_start, tt)))
}

/// `Var(Y_n(t)) = c21 (t^{2θ} − (t − a)^{2θ})`.
pub fn var_yn(t: f64, slab_start: f64, consts: &DerivedConstants) -> Result<f64> {
    if t < slab_start || slab_start < 0.0 {
        return Err(Error::Domain {
            what: "var_Yn",
            value: t,
            domain: "[slab_start, inf)",
        });
    }
    let tt = 2.0 * consts.theta;
    Ok(consts.c21 * (pow2t(t, tt) - pow2t(t - slab_start, tt)))
}

/// `‖u(t) − u(s)‖_{L²}`.
pub fn canonical_metric(s: f64, t: f64, consts: &DerivedConstants) -> f64 {
    let v = cov_closed(s, s, consts) + cov_closed(t, t, consts) - 2.0 * cov_closed(s, t, consts);
    v.max(0.0).sqrt()
}

/// Maximum of `canonical_metric(s, t) / |t − s|^θ` over an `n × n` grid on
/// `(0, upper]²`, off the diagonal. An empirical Hölder constant.
pub fn empirical_holder_constant(consts: &DerivedConstants, n: usize, upper: f64) -> f64 {
    let pts: Vec<f64> = (1..=n).map(|k| upper * k as f64 / n as f64).collect();
    let mut best = 0.0f64;
    for (i, &s) in pts.iter().enumerate() {
        for &t in &pts[i + 1..] {
            let r = canonical_metric(s, t, consts) / (t - s).powf(consts.theta);
            best = best.max(r);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidGrid("empty grid".into()));
        }
        if points.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::InvalidGrid("times must be finite and >= 0".into()));
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid("times must be strictly increasing".into()));
        }
        Ok(TimeGrid { points })
    }

    /// `n` points `upper · k/n`, `k = 1..=n` (the origin is left out: every
    /// process here vanishes there).
    pub fn uniform(n: usize, upper: f64) -> Result<Self> {
        if n == 0 || !(upper > 0.0) {
            return Err(Error::InvalidGrid("uniform grid needs n >= 1 and upper > 0".into()));
        }
        Self::new((1..=n).map(|k| upper * k as f64 / n as f64).collect())
    }

    /// `n >= 2` points geometrically spaced from `lo` to `hi`, both included.
    pub fn geometric(n: usize, lo: f64, hi: f64) -> Result<Self> {
        if n < 2 || !(lo > 0.0) || !(hi > lo) {
            return Err(Error::InvalidGrid(
                "geometric grid needs n >= 2 and 0 < lo < hi".into(),
            ));
        }
        let (llo, lhi) = (lo.ln(), hi.ln());
        let mut pts: Vec<f64> = (0..n)
            .map(|k| (llo + (lhi - llo) * k as f64 / (n - 1) as f64).exp())
            .collect();
        pts[0] = lo;
        pts[n - 1] = hi;
        Self::new(pts)
    }

    pub fn scaled(&self, rho: f64) -> Result<Self> {
        Self::new(self.points.iter().map(|t| t * rho).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.points[0]
    }

    pub fn last(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// True when `points[k] = (k + 1) · step` to rounding.
    pub fn uniform_step(&self) -> Option<f64> {
        let step = self.points[0];
        if step <= 0.0 {
            return None;
        }
        let ok = self
            .points
            .iter()
            .enumerate()
            .all(|(k, &t)| ((k + 1) as f64 * step - t).abs() <= 1e-12 * t.max(step));
        ok.then_some(step)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    ClosedForm,
    Quadrature,
}

impl Provenance {
    pub fn tag(self) -> &'static str {
        match self {
            Provenance::ClosedForm => "closed-form",
            Provenance::Quadrature => "quadrature",
        }
    }
}

/// Which Gaussian field a covariance matrix describes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovKind {
    /// `u` itself.
    Process,
    /// The slab field `u_n` driven by noise after `start`.
    Slab { start: f64 },
    /// The remainder `Y_n = u − u_n` driven by noise before `start`.
    Remainder { start: f64 },
}

/// Floor on the smallest eigenvalue relative to the largest.
pub const PSD_RELATIVE_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct CovMatrix {
    pub grid: TimeGrid,
    /// Row-major `n × n`.
    pub entries: Vec<f64>,
    pub provenance: Provenance,
    pub kind: CovKind,
}

impl CovMatrix {
    pub fn size(&self) -> usize {
        self.grid.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size() + j]
    }

    pub fn slab_start(&self) -> Option<f64> {
        match self.kind {
            CovKind::Process => None,
            CovKind::Slab { start } | CovKind::Remainder { start } => Some(start),
        }
    }

    pub fn max_diagonal(&self) -> f64 {
        let n = self.size();
        (0..n).map(|i| self.entries[i * n + i]).fold(0.0, f64::max)
    }

    /// Wrap an arbitrary symmetric matrix (used for fixtures such as fBm).
    pub fn from_kernel<F>(grid: TimeGrid, kernel: F, provenance: Provenance) -> Result<Self>
    where
        F: Fn(f64, f64) -> f64 + Sync,
    {
        let entries = fill_symmetric(&grid, kernel);
        let m = CovMatrix {
            grid,
            entries,
            provenance,
            kind: CovKind::Process,
        };
        check_psd(&m)?;
        Ok(m)
    }
}

fn fill_symmetric<F>(grid: &TimeGrid, kernel: F) -> Vec<f64>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let n = grid.len();
    let pts = grid.points();
    let rows: Vec<Vec<f64>> = par::map_indices(n, |i| (0..=i).map(|j| kernel(pts[i], pts[j])).collect());
    let mut entries = vec![0.0; n * n];
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            entries[i * n + j] = v;
            entries[j * n + i] = v;
        }
    }
    entries
}

/// Certify the eigenvalue floor: if `A + τI` with `τ = 1e-10 λ_max` admits a
/// Cholesky factor then `λ_min(A) >= −τ`. Only on failure are the
/// eigenvalues computed, to report the offending one.
pub fn check_psd(m: &CovMatrix) -> Result<()> {
    let n = m.size();
    let top = linalg::largest_eigenvalue(&m.entries, n, 60);
    let floor = PSD_RELATIVE_FLOOR * top;
    if top == 0.0 {
        return Ok(());
    }
    match linalg::cholesky_shifted(&m.entries, n, floor) {
        Ok(_) => Ok(()),
        Err(_) => {
            let ev = linalg::eigenvalues(&m.entries, n);
            let lowest = ev[0];
            let top = ev[n - 1];
            if lowest >= -PSD_RELATIVE_FLOOR * top {
                Ok(())
            } else {
                Err(Error::NotPsd {
                    eigenvalue: lowest,
                    floor: -PSD_RELATIVE_FLOOR * top,
                })
            }
        }
    }
}

pub fn build_cov_matrix(
    grid: &TimeGrid,
    consts: &DerivedConstants,
    slab_start: Option<f64>,
) -> Result<CovMatrix> {
    match slab_start {
        None => build_kind(grid, consts, CovKind::Process),
        Some(start) => build_kind(grid, consts, CovKind::Slab { start }),
    }
}

pub fn build_kind(grid: &TimeGrid, consts: &DerivedConstants, kind: CovKind) -> Result<CovMatrix> {
    if let CovKind::Slab { start } | CovKind::Remainder { start } = kind {
        if !(start >= 0.0) || start > grid.first() {
            return Err(Error::InvalidGrid(format!(
                "slab start {start} must lie in [0, min(grid) = {}]",
                grid.first()
            )));
        }
    }
    let c = *consts;
    let entries = match kind {
        CovKind::Process => fill_symmetric(grid, |s, t| cov_closed(s, t, &c)),
        CovKind::Slab { start } => {
            fill_symmetric(grid, |s, t| cov_un_closed(s, t, start, &c).expect("checked"))
        }
        CovKind::Remainder { start } => {
            fill_symmetric(grid, |s, t| cov_yn_closed(s, t, start, &c).expect("checked"))
        }
    };
    let m = CovMatrix {
        grid: grid.clone(),
        entries,
        provenance: Provenance::ClosedForm,
        kind,
    };
    check_psd(&m)?;
    Ok(m)
}
