//! Small dense kernels on row-major `f64` slices.
//!
//! Everything here is written so that results only depend on the inputs and
//! the (fixed) loop order, never on thread scheduling.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Indices of the nonzero entries, ascending.
pub fn nonzeros(z: &[f64]) -> Vec<usize> {
    z.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect()
}

/// `out = S z` for a symmetric row-major `n x n` matrix, plus `zᵀ S z`.
///
/// Only rows listed in `support` are touched: with `S` symmetric,
/// `S z = Σ_{q ∈ supp z} z_q S[q, :]`. Zero coordinates contribute exact
/// zeros, so the result equals the dense product evaluated in the same order.
#[inline]
pub fn sym_matvec_quad(s: &[f64], n: usize, z: &[f64], support: &[usize], out: &mut [f64]) -> f64 {
    out.fill(0.0);
    for &q in support {
        axpy(z[q], &s[q * n..(q + 1) * n], out);
    }
    let mut quad = 0.0;
    for &p in support {
        quad += z[p] * out[p];
    }
    quad
}

/// Dense `y = M x` for a row-major `rows x cols` matrix.
pub fn matvec(m: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    (0..rows).map(|r| dot(&m[r * cols..(r + 1) * cols], x)).collect()
}

/// `y = Mᵀ x` for a row-major `rows x cols` matrix.
pub fn matvec_t(m: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; cols];
    for r in 0..rows {
        axpy(x[r], &m[r * cols..(r + 1) * cols], &mut y);
    }
    y
}

/// Leading eigenpair of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: Vec<f64>,
}

pub const JACOBI_TOL: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition of a symmetric row-major matrix.
///
/// Returns eigenvalues and the eigenvector matrix (columns), unsorted.
/// Converged when the off-diagonal Frobenius norm falls below
/// `JACOBI_TOL * max(1, ‖S‖_F)`.
pub fn jacobi_eigen(s: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    assert_eq!(s.len(), n * n);
    let mut a = s.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale = norm2(s).max(1.0);
    let off = |a: &[f64]| -> f64 {
        let mut acc = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                acc += 2.0 * a[p * n + q] * a[p * n + q];
            }
        }
        acc.sqrt()
    };

    let mut sweeps = 0;
    loop {
        let residual = off(&a);
        if residual <= JACOBI_TOL * scale {
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::EigenNonConvergence { iterations: sweeps, residual });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - sn * akq;
                    a[k * n + q] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - sn * aqk;
                    a[q * n + k] = sn * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - sn * vkq;
                    v[k * n + q] = sn * vkp + c * vkq;
                }
            }
        }
    }
    let values = (0..n).map(|i| a[i * n + i]).collect();
    Ok((values, v))
}

/// Flip the sign so the largest-magnitude coordinate is positive
/// (lowest index wins ties).
pub fn normalize_sign(v: &mut [f64]) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Algebraically largest eigenpair via cyclic Jacobi, unit-norm and
/// sign-normalized.
pub fn leading_eigenpair_jacobi(s: &[f64], n: usize) -> Result<Eigenpair> {
    let (values, vectors) = jacobi_eigen(s, n)?;
    let mut best = 0;
    for i in 1..n {
        if values[i] > values[best] {
            best = i;
        }
    }
    let mut vector: Vec<f64> = (0..n).map(|k| vectors[k * n + best]).collect();
    let nrm = norm2(&vector);
    vector.iter_mut().for_each(|x| *x /= nrm);
    normalize_sign(&mut vector);
    Ok(Eigenpair { value: values[best], vector })
}

/// Algebraically largest eigenpair via Householder tridiagonalization and
/// implicit QR (nalgebra). Used for large dense matrices.
pub fn leading_eigenpair_dense(s: &[f64], n: usize) -> Result<Eigenpair> {
    let m = DMatrix::from_row_slice(n, n, s);
    let eig = m
        .try_symmetric_eigen(f64::EPSILON, 10_000)
        .ok_or(Error::EigenNonConvergence { iterations: 10_000, residual: f64::NAN })?;
    let mut best = 0;
    for i in 1..n {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    let mut vector: Vec<f64> = eig.eigenvectors.column(best).iter().copied().collect();
    let nrm = norm2(&vector);
    vector.iter_mut().for_each(|x| *x /= nrm);
    normalize_sign(&mut vector);
    Ok(Eigenpair { value: eig.eigenvalues[best], vector })
}

/// Dimension above which the dense QR route replaces Jacobi.
pub const JACOBI_MAX_DIM: usize = 128;

pub fn leading_eigenpair(s: &[f64], n: usize) -> Result<Eigenpair> {
    if n <= JACOBI_MAX_DIM {
        leading_eigenpair_jacobi(s, n)
    } else {
        leading_eigenpair_dense(s, n)
    }
}

/// Modified Gram–Schmidt on the columns of a row-major `rows x cols`
/// matrix, processed left to right. Returns the orthonormal Q factor.
pub fn modified_gram_schmidt(m: &[f64], rows: usize, cols: usize) -> Result<Vec<f64>> {
    let mut columns: Vec<Vec<f64>> = (0..cols).map(|c| (0..rows).map(|r| m[r * cols + c]).collect()).collect();
    for j in 0..cols {
        let nrm = norm2(&columns[j]);
        if nrm == 0.0 {
            return Err(Error::ZeroVector("rank-deficient column in Gram-Schmidt"));
        }
        columns[j].iter_mut().for_each(|x| *x /= nrm);
        let (done, rest) = columns.split_at_mut(j + 1);
        let qj = &done[j];
        for col in rest.iter_mut() {
            let proj = dot(qj, col);
            axpy(-proj, qj, col);
        }
    }
    let mut q = vec![0.0; rows * cols];
    for (c, col) in columns.iter().enumerate() {
        for r in 0..rows {
            q[r * cols + c] = col[r];
        }
    }
    Ok(q)
}
