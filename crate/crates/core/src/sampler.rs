//! Exact Gaussian path sampling on a time grid.
//!
//! A path is `L z` with `L` the lower Cholesky factor of the covariance and
//! `z` a vector of independent standard normals drawn from the path's own
//! counter-based stream. Paths are produced in fixed blocks of
//! [`BLOCK`] rows; blocks are independent units of parallel work.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::covariance::{CovMatrix, Provenance, TimeGrid};
use crate::error::{Error, Result};
use crate::linalg;
use crate::par;
use crate::rng::{self, Domain};

/// Paths per unit of work.
pub const BLOCK: usize = 64;

/// Column width of the triangular product.
const PANEL: usize = 128;

pub const JITTER_BASE: f64 = 1e-12;
pub const JITTER_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterRecord {
    /// Diagonal shift that finally succeeded.
    pub amount: f64,
    /// Number of shifted attempts, 1..=3.
    pub attempts: u32,
}

/// Factor `F` (grid-size × rank, row-major) with `F Fᵀ ≈ Σ`.
#[derive(Debug, Clone)]
pub struct Factor {
    pub n: usize,
    pub rank: usize,
    pub data: Vec<f64>,
    /// True when `data` is square lower-triangular.
    pub lower_triangular: bool,
    pub jitter: Option<JitterRecord>,
}

impl Factor {
    pub fn reconstruct(&self) -> Vec<f64> {
        if self.lower_triangular {
            return linalg::gram_lower(&self.data, self.n);
        }
        let (n, r) = (self.n, self.rank);
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = linalg::dot(&self.data[i * r..(i + 1) * r], &self.data[j * r..(j + 1) * r]);
                out[i * n + j] = v;
                out[j * n + i] = v;
            }
        }
        out
    }
}

/// Cholesky with the jitter escalation `1e-12 · max diag · 2^k`, `k = 0, 1, 2`.
pub fn factorize(cov: &CovMatrix) -> Result<Factor> {
    let n = cov.size();
    match linalg::cholesky_shifted(&cov.entries, n, 0.0) {
        Ok(l) => Ok(Factor {
            n,
            rank: n,
            data: l,
            lower_triangular: true,
            jitter: None,
        }),
        Err(first) => {
            let base = JITTER_BASE * cov.max_diagonal();
            let mut last = first;
            for k in 0..JITTER_ATTEMPTS {
                let amount = base * 2f64.powi(k as i32);
                match linalg::cholesky_shifted(&cov.entries, n, amount) {
                    Ok(l) => {
                        return Ok(Factor {
                            n,
                            rank: n,
                            data: l,
                            lower_triangular: true,
                            jitter: Some(JitterRecord {
                                amount,
                                attempts: k + 1,
                            }),
                        })
                    }
                    Err(e) => last = e,
                }
            }
            let top = linalg::largest_eigenvalue(&cov.entries, n, 60);
            Err(Error::Factorization {
                row: last.row,
                pivot: last.pivot,
                condition: top / last.pivot.abs().max(f64::MIN_POSITIVE),
            })
        }
    }
}

/// Low-rank factor via pivoted Cholesky, for smooth kernels that are
/// numerically rank deficient.
pub fn factorize_low_rank(cov: &CovMatrix, tol: f64) -> Factor {
    let (data, rank) = linalg::pivoted_cholesky(&cov.entries, cov.size(), tol);
    Factor {
        n: cov.size(),
        rank,
        data,
        lower_triangular: false,
        jitter: None,
    }
}

/// A generator of Gaussian paths by global path index.
pub trait PathSource: Sync {
    fn grid_size(&self) -> usize;

    /// Write paths `first..first + rows` (row-major) into `out`.
    /// `first` is a multiple of [`BLOCK`].
    fn fill_block(&self, first: usize, rows: usize, seed: u64, out: &mut [f64]);
}

/// Dense source: `x = F z`.
#[derive(Debug, Clone)]
pub struct DenseSource {
    pub factor: Factor,
    pub domain: Domain,
}

impl DenseSource {
    pub fn new(factor: Factor) -> Self {
        DenseSource {
            factor,
            domain: Domain::Paths,
        }
    }
}

impl PathSource for DenseSource {
    fn grid_size(&self) -> usize {
        self.factor.n
    }

    fn fill_block(&self, first: usize, rows: usize, seed: u64, out: &mut [f64]) {
        self.fill_block_at(first as u64, rows, seed, out);
    }
}

impl DenseSource {
    /// Like [`PathSource::fill_block`] with an arbitrary first stream id.
    pub fn fill_block_at(&self, first: u64, rows: usize, seed: u64, out: &mut [f64]) {
        let n = self.factor.n;
        let r = self.factor.rank;
        let mut z = vec![0.0; rows * r];
        for p in 0..rows {
            let mut rng = rng::stream(seed, self.domain, first + p as u64);
            rng::fill_normals(&mut rng, &mut z[p * r..(p + 1) * r]);
        }
        let out = &mut out[..rows * n];
        if r == 0 {
            out.iter_mut().for_each(|x| *x = 0.0);
            return;
        }
        let f = &self.factor.data;
        if self.factor.lower_triangular {
            // X[:, j0..j1] = Z[:, ..j1] · Lᵀ[..j1, j0..j1]; entries of L
            // right of the diagonal are zero so the inner dimension stops at j1.
            let mut j0 = 0;
            while j0 < n {
                let j1 = (j0 + PANEL).min(n);
                // SAFETY: all pointers index inside their buffers: Z is rows × n,
                // L is n × n, X is rows × n; strides match those layouts.
                unsafe {
                    matrixmultiply::dgemm(
                        rows,
                        j1,
                        j1 - j0,
                        1.0,
                        z.as_ptr(),
                        r as isize,
                        1,
                        f.as_ptr().add(j0 * n),
                        1,
                        n as isize,
                        0.0,
                        out.as_mut_ptr().add(j0),
                        n as isize,
                        1,
                    );
                }
                j0 = j1;
            }
        } else {
            // SAFETY: Z is rows × r, F is n × r, X is rows × n.
            unsafe {
                matrixmultiply::dgemm(
                    rows,
                    r,
                    n,
                    1.0,
                    z.as_ptr(),
                    r as isize,
                    1,
                    f.as_ptr(),
                    1,
                    r as isize,
                    0.0,
                    out.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
        }
    }
}

/// Fractional Brownian motion on `t_k = k·Δ`, `k = 1..=m`, by circulant
/// embedding of the increment autocovariance (Davies–Harte). Exact whenever
/// the embedding eigenvalues are nonnegative, which holds for every Hurst
/// index. One FFT yields two independent paths (real and imaginary parts).
pub struct CirculantFbm {
    m: usize,
    sqrt_eig: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for CirculantFbm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CirculantFbm").field("m", &self.m).finish()
    }
}

impl CirculantFbm {
    pub fn new(hurst_index: f64, m: usize, step: f64) -> Result<Self> {
        if !(hurst_index > 0.0 && hurst_index < 1.0) {
            return Err(Error::InvalidInput(format!(
                "fBm hurst index {hurst_index} outside (0, 1)"
            )));
        }
        let h2 = 2.0 * hurst_index;
        let scale = step.powf(h2);
        let gamma = |j: usize| {
            let j = j as f64;
            0.5 * scale * ((j + 1.0).powf(h2) - 2.0 * j.powf(h2) + (j - 1.0).abs().powf(h2))
        };
        let size = 2 * m;
        let mut c: Vec<Complex<f64>> = (0..size)
            .map(|j| {
                let k = if j <= m { j } else { size - j };
                Complex::new(gamma(k), 0.0)
            })
            .collect();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(size);
        fft.process(&mut c);
        let top = c.iter().map(|z| z.re).fold(0.0, f64::max);
        let mut sqrt_eig = Vec::with_capacity(size);
        for z in &c {
            let lam = z.re;
            if lam < -1e-10 * top {
                return Err(Error::InvalidInput(format!(
                    "circulant embedding not nonnegative (eigenvalue {lam:e})"
                )));
            }
            sqrt_eig.push((lam.max(0.0) / size as f64).sqrt());
        }
        Ok(CirculantFbm { m, sqrt_eig, fft })
    }
}

impl PathSource for CirculantFbm {
    fn grid_size(&self) -> usize {
        self.m
    }

    fn fill_block(&self, first: usize, rows: usize, seed: u64, out: &mut [f64]) {
        let m = self.m;
        let size = 2 * m;
        let mut buf = vec![Complex::new(0.0, 0.0); size];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut normals = vec![0.0; 2 * size];
        let mut p = 0;
        while p < rows {
            let pair = (first + p) / 2;
            let mut rng = rng::stream(seed, Domain::Fbm, pair as u64);
            rng::fill_normals(&mut rng, &mut normals);
            for k in 0..size {
                buf[k] = Complex::new(normals[2 * k], normals[2 * k + 1]) * self.sqrt_eig[k];
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            // Global index parity decides real (even) or imaginary (odd) part.
            let parts = if (first + p).is_multiple_of(2) { 0..2 } else { 1..2 };
            for part in parts {
                if p >= rows {
                    break;
                }
                let row = &mut out[p * m..(p + 1) * m];
                let mut acc = 0.0;
                for k in 0..m {
                    acc += if part == 0 { buf[k].re } else { buf[k].im };
                    row[k] = acc;
                }
                p += 1;
            }
        }
    }
}

/// Apply `f(first_index, rows, block)` to every block of `count` paths and
/// return the results in block order.
pub fn map_blocks<S, T, F>(source: &S, count: usize, seed: u64, f: F) -> Vec<T>
where
    S: PathSource + ?Sized,
    T: Send,
    F: Fn(usize, usize, &[f64]) -> T + Sync + Send,
{
    let n = source.grid_size();
    let blocks = count.div_ceil(BLOCK);
    par::map_indices(blocks, |b| {
        let first = b * BLOCK;
        let rows = BLOCK.min(count - first);
        let mut buf = vec![0.0; rows * n];
        source.fill_block(first, rows, seed, &mut buf);
        f(first, rows, &buf)
    })
}

#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub grid: TimeGrid,
    /// `count × grid.len()`, row-major.
    pub paths: Vec<f64>,
    pub count: usize,
    pub seed: u64,
    pub cov_provenance: Provenance,
    pub jitter: Option<JitterRecord>,
}

impl PathEnsemble {
    pub fn path(&self, i: usize) -> &[f64] {
        let n = self.grid.len();
        &self.paths[i * n..(i + 1) * n]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        let n = self.grid.len();
        (0..self.count).map(|i| self.paths[i * n + j]).collect()
    }

    /// Sample covariance (about the known zero mean).
    pub fn sample_covariance(&self) -> Vec<f64> {
        let n = self.grid.len();
        let mut out = vec![0.0; n * n];
        for p in 0..self.count {
            let row = self.path(p);
            for i in 0..n {
                for j in 0..=i {
                    out[i * n + j] += row[i] * row[j];
                }
            }
        }
        let c = self.count as f64;
        for i in 0..n {
            for j in 0..=i {
                let v = out[i * n + j] / c;
                out[i * n + j] = v;
                out[j * n + i] = v;
            }
        }
        out
    }
}

fn collect<S: PathSource + ?Sized>(source: &S, count: usize, seed: u64) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::InvalidInput("count must be >= 1".into()));
    }
    let n = source.grid_size();
    let blocks = map_blocks(source, count, seed, |_, _, block| block.to_vec());
    let mut paths = Vec::with_capacity(count * n);
    for b in blocks {
        paths.extend_from_slice(&b);
    }
    if let Some(pos) = paths.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { path: pos / n });
    }
    Ok(paths)
}

pub fn sample(cov: &CovMatrix, count: usize, seed: u64) -> Result<PathEnsemble> {
    let factor = factorize(cov)?;
    sample_with_factor(cov, factor, count, seed)
}

pub fn sample_with_factor(
    cov: &CovMatrix,
    factor: Factor,
    count: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    let jitter = factor.jitter;
    let source = DenseSource::new(factor);
    let paths = collect(&source, count, seed)?;
    Ok(PathEnsemble {
        grid: cov.grid.clone(),
        paths,
        count,
        seed,
        cov_provenance: cov.provenance,
        jitter,
    })
}

#[derive(Debug, Clone)]
pub struct FbmSpec {
    pub hurst_index: f64,
    pub grid: TimeGrid,
}

impl FbmSpec {
    pub fn new(hurst_index: f64, grid: TimeGrid) -> Result<Self> {
        if !(hurst_index > 0.0 && hurst_index < 1.0) {
            return Err(Error::InvalidInput(format!(
                "fBm hurst index {hurst_index} outside (0, 1)"
            )));
        }
        Ok(FbmSpec { hurst_index, grid })
    }

    pub fn covariance(&self) -> Result<CovMatrix> {
        let h2 = 2.0 * self.hurst_index;
        CovMatrix::from_kernel(
            self.grid.clone(),
            move |s, t| 0.5 * (s.powf(h2) + t.powf(h2) - (t - s).abs().powf(h2)),
            Provenance::ClosedForm,
        )
    }

    /// Circulant source when the grid is `k·Δ`, `k = 1..=m`; dense otherwise.
    pub fn source(&self) -> Result<Box<dyn PathSource + Send>> {
        if let Some(step) = self.grid.uniform_step() {
            return Ok(Box::new(CirculantFbm::new(self.hurst_index, self.grid.len(), step)?));
        }
        let mut source = DenseSource::new(factorize(&self.covariance()?)?);
        source.domain = Domain::Fbm;
        Ok(Box::new(source))
    }
}

pub fn sample_fbm(spec: &FbmSpec, count: usize, seed: u64) -> Result<PathEnsemble> {
    let source = spec.source()?;
    let paths = collect(source.as_ref(), count, seed)?;
    Ok(PathEnsemble {
        grid: spec.grid.clone(),
        paths,
        count,
        seed,
        cov_provenance: Provenance::ClosedForm,
        jitter: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{build_cov_matrix, build_kind, CovKind};
    use crate::params::{derive, ModelParams};

    fn white() -> crate::params::DerivedConstants {
        derive(&ModelParams::new(2.0, 0.5, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn one_by_one_factor() {
        let cov = build_cov_matrix(&TimeGrid::new(vec![1.0]).unwrap(), &white(), None).unwrap();
        let f = factorize(&cov).unwrap();
        assert_eq!(f.data, vec![cov.entries[0].sqrt()]);
        assert!(f.jitter.is_none());
    }

    #[test]
    fn two_by_two_reconstructs() {
        let cov = build_cov_matrix(&TimeGrid::new(vec![1.0, 2.0]).unwrap(), &white(), None).unwrap();
        let f = factorize(&cov).unwrap();
        for (a, b) in f.reconstruct().iter().zip(&cov.entries) {
            assert!((a - b).abs() <= 1e-12 * b.abs());
        }
    }

    #[test]
    fn near_duplicate_times_take_jitter_path() {
        let grid = TimeGrid::new(vec![1.0, 1.0 + 1e-9, 1.0 + 2e-9]).unwrap();
        let cov = build_kind(&grid, &white(), CovKind::Remainder { start: 0.5 }).unwrap();
        let f = factorize(&cov).unwrap();
        let j = f.jitter.expect("jitter flag set");
        assert!(j.attempts >= 1 && j.attempts <= JITTER_ATTEMPTS);
        let ens = sample_with_factor(&cov, f, 10, 1).unwrap();
        assert_eq!(ens.jitter, Some(j));
    }

    #[test]
    fn hopeless_matrix_reports_condition() {
        let grid = TimeGrid::new(vec![1.0, 2.0]).unwrap();
        let cov = CovMatrix {
            grid,
            entries: vec![1.0, 1.0 + 1e-6, 1.0 + 1e-6, 1.0],
            provenance: Provenance::ClosedForm,
            kind: CovKind::Process,
        };
        assert!(matches!(factorize(&cov), Err(Error::Factorization { .. })));
    }

    #[test]
    fn zero_count_rejected() {
        let cov = build_cov_matrix(&TimeGrid::new(vec![1.0]).unwrap(), &white(), None).unwrap();
        assert!(matches!(sample(&cov, 0, 1), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn deterministic_and_block_independent() {
        let grid = TimeGrid::uniform(37, 1.0).unwrap();
        let cov = build_cov_matrix(&grid, &white(), None).unwrap();
        let a = sample(&cov, 150, 9).unwrap();
        let b = sample(&cov, 150, 9).unwrap();
        assert_eq!(a.paths, b.paths);
        // The first 70 paths of a larger ensemble are the same paths.
        let c = sample(&cov, 70, 9).unwrap();
        assert_eq!(&a.paths[..70 * 37], &c.paths[..]);
        let d = sample(&cov, 150, 10).unwrap();
        assert_ne!(a.paths, d.paths);
    }

    #[test]
    fn triangular_product_matches_naive() {
        let grid = TimeGrid::uniform(300, 1.0).unwrap();
        let cov = build_cov_matrix(&grid, &white(), None).unwrap();
        let f = factorize(&cov).unwrap();
        let src = DenseSource::new(f.clone());
        let mut out = vec![0.0; 3 * 300];
        src.fill_block(0, 3, 5, &mut out);
        for p in 0..3 {
            let mut z = vec![0.0; 300];
            rng::fill_normals(&mut rng::stream(5, Domain::Paths, p as u64), &mut z);
            for i in 0..300 {
                let want: f64 = (0..=i).map(|k| f.data[i * 300 + k] * z[k]).sum();
                assert!((out[p * 300 + i] - want).abs() < 1e-12 * (1.0 + want.abs()));
            }
        }
    }

    #[test]
    fn circulant_odd_offsets() {
        // A block starting at an even index but with odd row count, and an
        // ensemble whose paths are pairwise distinct.
        let spec = FbmSpec::new(0.3, TimeGrid::uniform(16, 1.0).unwrap()).unwrap();
        let e = sample_fbm(&spec, 5, 3).unwrap();
        let f = sample_fbm(&spec, 6, 3).unwrap();
        assert_eq!(&e.paths[..], &f.paths[..5 * 16]);
        assert_ne!(e.path(0), e.path(1));
    }

    #[test]
    fn fbm_dense_fallback_on_irregular_grid() {
        let spec = FbmSpec::new(0.5, TimeGrid::new(vec![0.1, 0.5, 0.7, 1.0]).unwrap()).unwrap();
        let e = sample_fbm(&spec, 4, 1).unwrap();
        assert!(e.paths.iter().all(|x| x.is_finite()));
        assert!(FbmSpec::new(1.0, TimeGrid::uniform(4, 1.0).unwrap()).is_err());
    }
}
