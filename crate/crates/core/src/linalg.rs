//! Dense symmetric linear algebra on row-major `Vec<f64>` storage.

use nalgebra::DMatrix;

/// Failed pivot of a Cholesky attempt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PivotFailure {
    pub row: usize,
    pub pivot: f64,
}

/// Lower Cholesky factor of the `n × n` row-major matrix `a` with `shift`
/// added to the diagonal.
///
/// A row whose diagonal is exactly zero and whose off-diagonal entries are
/// zero (a coordinate pinned at zero, like `u(0)`) produces a zero row in the
/// factor instead of failing.
pub fn cholesky_shifted(a: &[f64], n: usize, shift: f64) -> Result<Vec<f64>, PivotFailure> {
    assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    let mut diag = vec![0.0; n];
    for i in 0..n {
        let (done, rest) = l.split_at_mut(i * n);
        let row_i = &mut rest[..n];
        for j in 0..i {
            let row_j = &done[j * n..j * n + j];
            let dot = dot(&row_i[..j], row_j);
            row_i[j] = if diag[j] == 0.0 {
                0.0
            } else {
                (a[i * n + j] - dot) / diag[j]
            };
        }
        let aii = a[i * n + i];
        let pinned = aii == 0.0 && shift == 0.0 && a[i * n..i * n + i].iter().all(|&x| x == 0.0);
        if pinned {
            row_i[..i].iter_mut().for_each(|x| *x = 0.0);
            diag[i] = 0.0;
            continue;
        }
        let d = aii + shift - dot(&row_i[..i], &row_i[..i]);
        if !(d > 0.0) || !d.is_finite() {
            return Err(PivotFailure { row: i, pivot: d });
        }
        let s = d.sqrt();
        row_i[i] = s;
        diag[i] = s;
    }
    Ok(l)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorize without reassociation.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = c * 4;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in chunks * 4..a.len() {
        s += a[k] * b[k];
    }
    s
}

/// Largest eigenvalue of a symmetric PSD-ish matrix by power iteration.
pub fn largest_eigenvalue(a: &[f64], n: usize, iterations: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut w = vec![0.0; n];
    let mut lambda = 0.0;
    for _ in 0..iterations {
        for i in 0..n {
            w[i] = dot(&a[i * n..(i + 1) * n], &v);
        }
        let norm = dot(&w, &w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = dot(&v, &w);
        for i in 0..n {
            v[i] = w[i] / norm;
        }
    }
    lambda.max(a.iter().step_by(n + 1).cloned().fold(0.0, f64::max))
}

/// All eigenvalues, ascending. `O(n³)`; used on failure paths and in tests.
pub fn eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    let m = DMatrix::from_row_slice(n, n, a);
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().cloned().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// `L · Lᵀ` for a row-major lower factor.
pub fn gram_lower(l: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let k = j + 1;
            let v = dot(&l[i * n..i * n + k], &l[j * n..j * n + k]);
            out[i * n + j] = v;
            out[j * n + i] = v;
        }
    }
    out
}

pub fn frobenius(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Pivoted (low-rank) Cholesky: returns an `n × rank` row-major factor `G`
/// with `G Gᵀ ≈ A`, stopping when the largest remaining diagonal drops below
/// `tol * max_diag`. Suited to smooth, numerically low-rank kernels.
pub fn pivoted_cholesky(a: &[f64], n: usize, tol: f64) -> (Vec<f64>, usize) {
    let max_diag = (0..n).map(|i| a[i * n + i]).fold(0.0, f64::max);
    let mut resid: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    while cols.len() < n {
        let (p, &d) = resid
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(y.1))
            .expect("n > 0");
        if !(d > tol * max_diag) {
            break;
        }
        let s = d.sqrt();
        let mut col = vec![0.0; n];
        for i in 0..n {
            let mut v = a[i * n + p];
            for c in &cols {
                v -= c[i] * c[p];
            }
            col[i] = v / s;
        }
        for i in 0..n {
            resid[i] -= col[i] * col[i];
        }
        resid[p] = 0.0;
        cols.push(col);
    }
    let rank = cols.len();
    let mut g = vec![0.0; n * rank];
    for (k, c) in cols.iter().enumerate() {
        for i in 0..n {
            g[i * rank + k] = c[i];
        }
    }
    (g, rank)
}
