//! Small linear-algebra toolbox: a CSR matrix, banded direct solvers for
//! the structured-grid FEM systems, and dense symmetric helpers.

mod banded;
mod dense;
mod sparse;

pub use banded::{BandedCholesky, BandedLu};
pub use dense::{logdet_spd, sorted_symmetric_eigen, symmetrize};
pub use sparse::{CsrMatrix, TripletBuilder};

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Normwise backward error tolerance accepted after a direct solve.
pub const SOLVE_RTOL: f64 = 1e-12;

/// A factorized sparse system that knows its own matrix, so every solve can
/// be checked (and refined once) against the normwise backward error.
#[derive(Debug, Clone)]
pub struct SparseSolver {
    matrix: CsrMatrix,
    norm_inf: f64,
    factor: Factor,
    label: &'static str,
}

#[derive(Debug, Clone)]
enum Factor {
    Cholesky(BandedCholesky),
    Lu(BandedLu),
}

impl SparseSolver {
    /// Factorize a symmetric positive-definite matrix.
    pub fn spd(matrix: CsrMatrix, label: &'static str) -> Result<Self> {
        let factor = Factor::Cholesky(BandedCholesky::factor(&matrix).map_err(|pivot| {
            Error::Numerical {
                context: format!("{label}: Cholesky factorization"),
                residual: pivot,
            }
        })?);
        Ok(Self::wrap(matrix, factor, label))
    }

    /// Factorize a general square matrix with partial pivoting.
    pub fn general(matrix: CsrMatrix, label: &'static str) -> Result<Self> {
        let factor = Factor::Lu(BandedLu::factor(&matrix).map_err(|pivot| Error::Numerical {
            context: format!("{label}: LU factorization"),
            residual: pivot,
        })?);
        Ok(Self::wrap(matrix, factor, label))
    }

    fn wrap(matrix: CsrMatrix, factor: Factor, label: &'static str) -> Self {
        let norm_inf = matrix.norm_inf();
        Self { matrix, norm_inf, factor, label }
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        self.checked(b, false)
    }

    /// Solve `Aᵀ x = b`.
    pub fn solve_transpose(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        self.checked(b, true)
    }

    fn raw(&self, b: &mut [f64], transpose: bool) {
        match (&self.factor, transpose) {
            (Factor::Cholesky(c), _) => c.solve_in_place(b),
            (Factor::Lu(lu), false) => lu.solve_in_place(b),
            (Factor::Lu(lu), true) => lu.solve_transpose_in_place(b),
        }
    }

    fn residual(&self, x: &DVector<f64>, b: &DVector<f64>, transpose: bool) -> (DVector<f64>, f64) {
        let ax = if transpose {
            self.matrix.transpose_mul_vec(x)
        } else {
            self.matrix.mul_vec(x)
        };
        let r = b - ax;
        let scale = self.norm_inf * x.amax() + b.amax();
        let err = if scale > 0.0 { r.amax() / scale } else { 0.0 };
        (r, err)
    }

    fn checked(&self, b: &DVector<f64>, transpose: bool) -> Result<DVector<f64>> {
        crate::error::check_len("right-hand side", b.len(), self.dim())?;
        let mut x = b.clone();
        self.raw(x.as_mut_slice(), transpose);
        let (mut r, mut err) = self.residual(&x, b, transpose);
        if !err.is_finite() {
            return Err(Error::Numerical { context: self.label.to_string(), residual: err });
        }
        if err > SOLVE_RTOL {
            // one step of iterative refinement
            self.raw(r.as_mut_slice(), transpose);
            x += r;
            err = self.residual(&x, b, transpose).1;
            if !(err <= SOLVE_RTOL) {
                return Err(Error::Numerical { context: self.label.to_string(), residual: err });
            }
        }
        Ok(x)
    }
}
