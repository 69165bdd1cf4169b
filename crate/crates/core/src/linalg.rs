//! Dense matrix/vector kernels and the spectral estimates the solvers need.
//!
//! Everything here is desk-scale: row-major storage, straightforward loops,
//! and a cyclic Jacobi eigensolver for restricted Gram matrices. Correctness
//! and determinism are the priorities, not throughput on large problems.

use thiserror::Error;

use crate::rng::SplitMix64;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("power iteration did not reach tolerance within {iterations} iterations (best estimate {best_estimate:e})")]
    PowerIterationStalled { iterations: usize, best_estimate: f64 },
    #[error("index set of size {got} exceeds the eigensolve cap {cap}")]
    RestrictionTooLarge { got: usize, cap: usize },
}

/// Largest index-set size accepted by the restricted eigensolves.
pub const EIG_CAP: usize = 2000;

/// Dense real matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    entries: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn new(rows: usize, cols: usize, entries: Vec<T>) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::InvalidInput(
                "matrix dimensions must be positive".into(),
            ));
        }
        if entries.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                entries.len()
            )));
        }
        if !entries.iter().all(|e| e.is_finite()) {
            return Err(LinalgError::InvalidInput(
                "matrix entries must be finite".into(),
            ));
        }
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self, LinalgError> {
        Self::new(rows, cols, vec![T::zero(); rows * cols])
    }

    pub fn identity(n: usize) -> Result<Self, LinalgError> {
        let mut m = Self::zeros(n, n)?;
        for i in 0..n {
            m.entries[i * n + i] = T::one();
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[T] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.entries[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    /// `A v`.
    pub fn matvec(&self, v: &[T]) -> Result<Vec<T>, LinalgError> {
        if v.len() != self.cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "matvec: matrix has {} columns, vector has length {}",
                self.cols,
                v.len()
            )));
        }
        let mut out = vec![T::zero(); self.rows];
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.row(i);
            let mut acc = T::zero();
            for (a, x) in row.iter().zip(v) {
                acc += *a * *x;
            }
            *o = acc;
        }
        Ok(out)
    }

    /// `A^T v`.
    pub fn matvec_transpose(&self, v: &[T]) -> Result<Vec<T>, LinalgError> {
        if v.len() != self.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "matvec_transpose: matrix has {} rows, vector has length {}",
                self.rows,
                v.len()
            )));
        }
        let mut out = vec![T::zero(); self.cols];
        for (i, vi) in v.iter().enumerate() {
            let row = self.row(i);
            for (o, a) in out.iter_mut().zip(row) {
                *o += *a * *vi;
            }
        }
        Ok(out)
    }

    /// Columns restricted to `indices` (`A_S`), preserving their order.
    pub fn restrict_columns(&self, indices: &[usize]) -> Result<Self, LinalgError> {
        if indices.is_empty() {
            return Err(LinalgError::InvalidInput("empty column restriction".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&j| j >= self.cols) {
            return Err(LinalgError::InvalidInput(format!(
                "column index {bad} out of range for {} columns",
                self.cols
            )));
        }
        let mut entries = Vec::with_capacity(self.rows * indices.len());
        for i in 0..self.rows {
            let row = self.row(i);
            entries.extend(indices.iter().map(|&j| row[j]));
        }
        Self::new(self.rows, indices.len(), entries)
    }

    /// `A_S^T A_S` for the given column set.
    fn restricted_gram(&self, indices: &[usize]) -> Result<Self, LinalgError> {
        let sub = self.restrict_columns(indices)?;
        let s = sub.cols;
        let mut gram = vec![T::zero(); s * s];
        for i in 0..self.rows {
            let row = sub.row(i);
            for a in 0..s {
                let ra = row[a];
                for b in a..s {
                    gram[a * s + b] += ra * row[b];
                }
            }
        }
        for a in 0..s {
            for b in 0..a {
                gram[a * s + b] = gram[b * s + a];
            }
        }
        Self::new(s, s, gram)
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

pub fn norm_sq<T: Scalar>(a: &[T]) -> T {
    dot(a, a)
}

pub fn norm<T: Scalar>(a: &[T]) -> T {
    norm_sq(a).sqrt()
}

pub fn inf_norm<T: Scalar>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

/// `a - b`.
pub fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| *x - *y).collect()
}

pub fn all_finite<T: Scalar>(a: &[T]) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// Largest eigenvalue of `A^T A` by power iteration on `v -> A^T(A v)`.
///
/// Starts from the normalized all-ones vector so repeated runs agree to the
/// bit; if that start is (numerically) orthogonal to the dominant
/// eigenvector, restarts from a seeded random direction.
pub fn largest_gram_eigenvalue<T: Scalar>(
    a: &DenseMatrix<T>,
    tol: T,
    max_iter: usize,
) -> Result<T, LinalgError> {
    if tol <= T::zero() || max_iter == 0 {
        return Err(LinalgError::InvalidInput(
            "tol and max_iter must be positive".into(),
        ));
    }
    if a.entries.iter().all(|&e| e == T::zero()) {
        return Err(LinalgError::InvalidInput("zero matrix".into()));
    }
    let n = a.cols;
    let ones = vec![T::one() / T::from_f64(n as f64).sqrt(); n];
    match power_iterate(a, ones, tol, max_iter) {
        Ok(v) => Ok(v),
        Err(first_err) => {
            // Deterministic fallback direction.
            let mut rng = SplitMix64::new(0x5EED_0001);
            let mut v: Vec<T> = (0..n).map(|_| T::from_f64(rng.next_gaussian())).collect();
            let nv = norm(&v);
            if nv == T::zero() {
                return Err(first_err);
            }
            for x in &mut v {
                *x /= nv;
            }
            power_iterate(a, v, tol, max_iter).or(Err(first_err))
        }
    }
}

fn power_iterate<T: Scalar>(
    a: &DenseMatrix<T>,
    mut v: Vec<T>,
    tol: T,
    max_iter: usize,
) -> Result<T, LinalgError> {
    let mut estimate = T::zero();
    for it in 0..max_iter {
        let av = a.matvec(&v)?;
        let w = a.matvec_transpose(&av)?;
        let wn = norm(&w);
        if wn == T::zero() {
            // v lies in the null space of A; caller restarts.
            return Err(LinalgError::PowerIterationStalled {
                iterations: it,
                best_estimate: 0.0,
            });
        }
        // Rayleigh quotient: v is unit, so lambda = v^T (A^T A v) = ||Av||^2.
        let lambda = norm_sq(&av);
        let done = (lambda - estimate).abs() <= tol * lambda;
        estimate = lambda;
        for (x, y) in v.iter_mut().zip(&w) {
            *x = *y / wn;
        }
        if it > 0 && done {
            return Ok(estimate);
        }
    }
    Err(LinalgError::PowerIterationStalled {
        iterations: max_iter,
        best_estimate: estimate.as_f64(),
    })
}

/// All eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi.
pub fn symmetric_eigenvalues<T: Scalar>(m: &DenseMatrix<T>) -> Result<Vec<T>, LinalgError> {
    if m.rows != m.cols {
        return Err(LinalgError::InvalidInput(format!(
            "eigensolve needs a square matrix, got {}x{}",
            m.rows, m.cols
        )));
    }
    let n = m.rows;
    let mut a = m.entries.clone();
    let idx = |i: usize, j: usize| i * n + j;

    let off_diag_sq = |a: &[T]| {
        let mut s = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                s += a[idx(i, j)] * a[idx(i, j)];
            }
        }
        s
    };

    let scale = m
        .entries
        .iter()
        .fold(T::zero(), |acc, x| acc.max(x.abs()))
        .max(T::min_positive_value());
    let stop = T::epsilon() * T::epsilon() * scale * scale * T::from_f64((n * n) as f64);

    for _sweep in 0..100 {
        if off_diag_sq(&a) <= stop {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[idx(p, q)];
                if apq.abs() <= T::epsilon() * scale {
                    continue;
                }
                let app = a[idx(p, p)];
                let aqq = a[idx(q, q)];
                let theta = (aqq - app) / (T::from_f64(2.0) * apq);
                // Smaller-root tangent for stability.
                let t = {
                    let s = if theta >= T::zero() { T::one() } else { -T::one() };
                    s / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[idx(k, p)];
                    let akq = a[idx(k, q)];
                    a[idx(k, p)] = c * akp - s * akq;
                    a[idx(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[idx(p, k)];
                    let aqk = a[idx(q, k)];
                    a[idx(p, k)] = c * apk - s * aqk;
                    a[idx(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }

    let mut eigs: Vec<T> = (0..n).map(|i| a[idx(i, i)]).collect();
    eigs.sort_by(|x, y| x.partial_cmp(y).expect("eigenvalues are finite"));
    Ok(eigs)
}

fn restricted_eigenvalues<T: Scalar>(
    a: &DenseMatrix<T>,
    indices: &[usize],
    cap: usize,
) -> Result<Vec<T>, LinalgError> {
    if indices.len() > cap {
        return Err(LinalgError::RestrictionTooLarge {
            got: indices.len(),
            cap,
        });
    }
    let gram = a.restricted_gram(indices)?;
    symmetric_eigenvalues(&gram)
}

/// Smallest eigenvalue of `A_S^T A_S` (always `>= 0` up to roundoff).
pub fn smallest_restricted_eigenvalue<T: Scalar>(
    a: &DenseMatrix<T>,
    indices: &[usize],
) -> Result<T, LinalgError> {
    let eigs = restricted_eigenvalues(a, indices, EIG_CAP)?;
    Ok(eigs[0].max(T::zero()))
}

/// Smallest eigenvalue of `A_S^T A_S` strictly above `zero_tol`;
/// zero when the whole spectrum sits at or below the threshold.
pub fn smallest_nonzero_restricted_eigenvalue<T: Scalar>(
    a: &DenseMatrix<T>,
    indices: &[usize],
    zero_tol: T,
) -> Result<T, LinalgError> {
    if zero_tol <= T::zero() {
        return Err(LinalgError::InvalidInput("zero_tol must be positive".into()));
    }
    let eigs = restricted_eigenvalues(a, indices, EIG_CAP)?;
    Ok(eigs
        .into_iter()
        .find(|&e| e > zero_tol)
        .unwrap_or_else(T::zero))
}
