//! Problem definitions: the smooth-plus-l1 composite objective and the
//! concrete l1-regularized least-squares instance.

use thiserror::Error;

use crate::linalg::{self, DenseMatrix, LinalgError};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Smooth convex term `f` with an L-Lipschitz gradient.
///
/// No Hessian is exposed: restricted-spectrum diagnostics are only available
/// for least-squares instances, where the Hessian is the Gram matrix.
pub trait SmoothOracle<T: Scalar>: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[T]) -> T;
    fn gradient(&self, x: &[T]) -> Vec<T>;
    /// Lipschitz constant of the gradient (an upper bound is acceptable
    /// and is what keeps `1/L` step sizes safe).
    fn lipschitz_constant(&self) -> T;
}

/// `F(x) = f(x) + rho * ||x||_1`.
pub struct CompositeProblem<T: Scalar, O: SmoothOracle<T>> {
    smooth: O,
    rho: T,
}

impl<T: Scalar, O: SmoothOracle<T>> CompositeProblem<T, O> {
    pub fn new(smooth: O, rho: T) -> Result<Self, ModelError> {
        if rho < T::zero() || !rho.is_finite() {
            return Err(ModelError::InvalidInput(
                "l1 weight must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { smooth, rho })
    }

    pub fn dim(&self) -> usize {
        self.smooth.dim()
    }

    pub fn rho(&self) -> T {
        self.rho
    }

    pub fn smooth(&self) -> &O {
        &self.smooth
    }

    fn check_dim(&self, x: &[T]) -> Result<(), ModelError> {
        if x.len() != self.dim() {
            return Err(ModelError::DimensionMismatch(format!(
                "point has length {}, problem dimension is {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// `F(x)`.
    pub fn objective(&self, x: &[T]) -> Result<T, ModelError> {
        self.check_dim(x)?;
        let l1 = x.iter().fold(T::zero(), |acc, v| acc + v.abs());
        Ok(self.smooth.value(x) + self.rho * l1)
    }

    /// `grad f(x)`.
    pub fn gradient_smooth(&self, x: &[T]) -> Result<Vec<T>, ModelError> {
        self.check_dim(x)?;
        Ok(self.smooth.gradient(x))
    }

    pub fn lipschitz_constant(&self) -> T {
        self.smooth.lipschitz_constant()
    }
}

/// Relative safety margin applied to the power-iteration estimate of
/// `lambda_max(A^T A)`. The Rayleigh quotient approaches the top eigenvalue
/// from below, and step sizes of exactly `1/L` need `L` to be an upper bound.
const LIPSCHITZ_MARGIN: f64 = 1e-6;

/// `f(x) = 0.5 ||b - Ax||^2` with an l1 weight, plus the cached Lipschitz
/// constant `lambda_max(A^T A)` (slightly inflated, see [`LIPSCHITZ_MARGIN`]).
pub struct L1LsInstance<T: Scalar> {
    matrix: DenseMatrix<T>,
    offset: Vec<T>,
    rho: T,
    lipschitz: T,
}

impl<T: Scalar> L1LsInstance<T> {
    pub fn new(matrix: DenseMatrix<T>, offset: Vec<T>, rho: T) -> Result<Self, ModelError> {
        let tol = T::adaptive_tol(1e-10);
        Self::with_spectral_opts(matrix, offset, rho, tol, 200_000)
    }

    /// Builds an instance with an analytically known gradient Lipschitz
    /// constant (for example `L = 1` for orthonormal designs), bypassing the
    /// power-iteration estimate and its safety margin.
    pub fn with_lipschitz(
        matrix: DenseMatrix<T>,
        offset: Vec<T>,
        rho: T,
        lipschitz: T,
    ) -> Result<Self, ModelError> {
        if !(lipschitz > T::zero()) || !lipschitz.is_finite() {
            return Err(ModelError::InvalidInput(
                "Lipschitz constant must be positive and finite".into(),
            ));
        }
        Self::validate_parts(&matrix, &offset, rho)?;
        Ok(Self {
            matrix,
            offset,
            rho,
            lipschitz,
        })
    }

    pub fn with_spectral_opts(
        matrix: DenseMatrix<T>,
        offset: Vec<T>,
        rho: T,
        spectral_tol: T,
        spectral_max_iter: usize,
    ) -> Result<Self, ModelError> {
        Self::validate_parts(&matrix, &offset, rho)?;
        let estimate = linalg::largest_gram_eigenvalue(&matrix, spectral_tol, spectral_max_iter)?;
        let lipschitz = estimate * (T::one() + T::from_f64(LIPSCHITZ_MARGIN));
        Ok(Self {
            matrix,
            offset,
            rho,
            lipschitz,
        })
    }

    fn validate_parts(
        matrix: &DenseMatrix<T>,
        offset: &[T],
        rho: T,
    ) -> Result<(), ModelError> {
        if offset.len() != matrix.rows() {
            return Err(ModelError::DimensionMismatch(format!(
                "matrix has {} rows, offset vector has length {}",
                matrix.rows(),
                offset.len()
            )));
        }
        if !linalg::all_finite(offset) {
            return Err(ModelError::InvalidInput("offset entries must be finite".into()));
        }
        if rho < T::zero() || !rho.is_finite() {
            return Err(ModelError::InvalidInput(
                "l1 weight must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub fn matrix(&self) -> &DenseMatrix<T> {
        &self.matrix
    }

    pub fn offset(&self) -> &[T] {
        &self.offset
    }

    pub fn rho(&self) -> T {
        self.rho
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    /// Residual `Ax - b`.
    pub fn residual(&self, x: &[T]) -> Result<Vec<T>, ModelError> {
        let mut r = self.matrix.matvec(x)?;
        for (ri, bi) in r.iter_mut().zip(&self.offset) {
            *ri -= *bi;
        }
        Ok(r)
    }

    /// Wraps the instance into a composite problem with its own `rho`.
    pub fn problem(&self) -> CompositeProblem<T, &Self> {
        CompositeProblem {
            smooth: self,
            rho: self.rho,
        }
    }
}

impl<T: Scalar> SmoothOracle<T> for L1LsInstance<T> {
    fn dim(&self) -> usize {
        self.matrix.cols()
    }

    fn value(&self, x: &[T]) -> T {
        let r = self.residual(x).expect("dimension checked by caller");
        linalg::norm_sq(&r) * T::from_f64(0.5)
    }

    fn gradient(&self, x: &[T]) -> Vec<T> {
        let r = self.residual(x).expect("dimension checked by caller");
        self.matrix
            .matvec_transpose(&r)
            .expect("dimension checked by caller")
    }

    fn lipschitz_constant(&self) -> T {
        self.lipschitz
    }
}

impl<T: Scalar, O: SmoothOracle<T>> SmoothOracle<T> for &O {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[T]) -> T {
        (**self).value(x)
    }
    fn gradient(&self, x: &[T]) -> Vec<T> {
        (**self).gradient(x)
    }
    fn lipschitz_constant(&self) -> T {
        (**self).lipschitz_constant()
    }
}

/// Parameters for synthetic instance generation.
#[derive(Debug, Clone)]
pub struct GenerateParams<T> {
    pub rows: usize,
    pub cols: usize,
    pub sparsity: usize,
    pub entry_std: T,
    pub rho: T,
    pub seed: u64,
}

/// Draws a random instance: `A` has i.i.d. Gaussian entries with standard
/// deviation `entry_std`, and `b = A x0` for a signal `x0` supported on a
/// uniformly random `sparsity`-subset with i.i.d. standard normal nonzeros.
///
/// Draw order (one [`SplitMix64`] stream seeded with `seed`): the `m*n`
/// matrix entries row-major, then the support subset, then the nonzero
/// values in increasing index order.
pub fn generate_instance<T: Scalar>(p: &GenerateParams<T>) -> Result<L1LsInstance<T>, ModelError> {
    if p.rows == 0 || p.cols == 0 {
        return Err(ModelError::InvalidInput("dimensions must be positive".into()));
    }
    if p.sparsity > p.cols {
        return Err(ModelError::InvalidInput(format!(
            "sparsity {} exceeds dimension {}",
            p.sparsity, p.cols
        )));
    }
    if p.entry_std <= T::zero() {
        return Err(ModelError::InvalidInput("entry_std must be positive".into()));
    }
    let mut rng = SplitMix64::new(p.seed);
    let entries: Vec<T> = (0..p.rows * p.cols)
        .map(|_| p.entry_std * T::from_f64(rng.next_gaussian()))
        .collect();
    let matrix = DenseMatrix::new(p.rows, p.cols, entries)?;

    let support = rng.sample_indices(p.cols, p.sparsity);
    let mut signal = vec![T::zero(); p.cols];
    for &i in &support {
        signal[i] = T::from_f64(rng.next_gaussian());
    }
    let offset = matrix.matvec(&signal)?;
    L1LsInstance::new(matrix, offset, p.rho)
}
