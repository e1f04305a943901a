//! Gaussian priors. [`PriorOperator`] is the bilaplacian-type finite-element
//! prior `Γ_pr = A⁻¹ M A⁻¹`; [`DensePrior`] wraps an explicit covariance for
//! small toys and matrix-file problems.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{check_len, validation, Error, Result};
use crate::linalg::{BandedCholesky, CsrMatrix, SparseSolver};
use crate::mesh::{is_spd, Grid2D, Tensor2};

/// Gaussian prior `N(m_pr, Γ_pr)` accessed only through its actions.
///
/// `apply_sqrt` is any factor `L` with `Γ_pr = L Lᵀ`.
pub trait GaussianPrior: Send + Sync {
    fn dim(&self) -> usize;
    fn mean(&self) -> &DVector<f64>;
    fn apply_covariance(&self, v: &DVector<f64>) -> Result<DVector<f64>>;
    fn apply_precision(&self, v: &DVector<f64>) -> Result<DVector<f64>>;
    fn apply_sqrt(&self, v: &DVector<f64>) -> Result<DVector<f64>>;
    fn apply_sqrt_transpose(&self, v: &DVector<f64>) -> Result<DVector<f64>>;
    /// A draw from the prior, deterministic in `seed`.
    fn sample(&self, seed: u64) -> Result<DVector<f64>>;

    /// `⟨v, Γ_pr⁻¹ v⟩`.
    fn prior_norm_sq(&self, v: &DVector<f64>) -> Result<f64> {
        Ok(v.dot(&self.apply_precision(v)?).max(0.0))
    }

    /// Pointwise prior variance, one covariance column at a time.
    fn variance_diagonal(&self) -> Result<DVector<f64>> {
        let n = self.dim();
        let diag = (0..n)
            .into_par_iter()
            .map(|i| {
                let e = DVector::from_fn(n, |j, _| if j == i { 1.0 } else { 0.0 });
                Ok(self.apply_covariance(&e)?[i])
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(DVector::from_vec(diag))
    }
}

pub(crate) fn standard_normal(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Finite-element Gaussian prior with `A = γ K_Θ + δ M + β M_∂`.
#[derive(Debug, Clone)]
pub struct PriorOperator {
    grid: Grid2D,
    mean: DVector<f64>,
    gamma: f64,
    delta: f64,
    beta: f64,
    theta: Tensor2,
    stiffness: SparseSolver,
    mass: SparseSolver,
    mass_factor: BandedCholesky,
    lumped_sqrt: DVector<f64>,
}

impl PriorOperator {
    /// Prior with the Robin coefficient `β = √(γδ)`.
    pub fn new(grid: Grid2D, gamma: f64, delta: f64, theta: Tensor2, mean: DVector<f64>) -> Result<Self> {
        Self::with_robin(grid, gamma, delta, theta, (gamma * delta).sqrt(), mean)
    }

    pub fn with_robin(
        grid: Grid2D,
        gamma: f64,
        delta: f64,
        theta: Tensor2,
        beta: f64,
        mean: DVector<f64>,
    ) -> Result<Self> {
        if !(gamma > 0.0 && delta > 0.0) {
            return Err(validation(format!("prior needs gamma, delta > 0 (got {gamma}, {delta})")));
        }
        if !(beta >= 0.0) {
            return Err(validation(format!("Robin coefficient must be nonnegative, got {beta}")));
        }
        if !is_spd(&theta) {
            return Err(validation(format!("anisotropy tensor {theta:?} is not symmetric positive definite")));
        }
        check_len("prior mean", mean.len(), grid.vertex_count())?;
        let m = grid.mass_matrix();
        let k = grid.stiffness_matrix(&theta);
        let a = k
            .linear_combination(gamma, &m, delta)
            .linear_combination(1.0, &grid.boundary_mass_matrix(), beta);
        let mass_factor = BandedCholesky::factor(&m).map_err(|p| Error::Numerical {
            context: "mass matrix square root".into(),
            residual: p,
        })?;
        let lumped_sqrt = m.row_sums().map(f64::sqrt);
        Ok(Self {
            grid,
            mean,
            gamma,
            delta,
            beta,
            theta,
            stiffness: SparseSolver::spd(a, "prior operator A")?,
            mass: SparseSolver::spd(m, "mass matrix")?,
            mass_factor,
            lumped_sqrt,
        })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn theta(&self) -> &Tensor2 {
        &self.theta
    }

    /// The elliptic operator `A`.
    pub fn operator_matrix(&self) -> &CsrMatrix {
        self.stiffness.matrix()
    }

    pub fn mass_matrix(&self) -> &CsrMatrix {
        self.mass.matrix()
    }

    fn check(&self, v: &DVector<f64>) -> Result<()> {
        check_len("parameter vector", v.len(), self.dim())
    }
}

impl GaussianPrior for PriorOperator {
    fn dim(&self) -> usize {
        self.grid.vertex_count()
    }

    fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    fn apply_covariance(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(v)?;
        let x = self.stiffness.solve(v)?;
        self.stiffness.solve(&self.mass.matrix().mul_vec(&x))
    }

    fn apply_precision(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(v)?;
        let a = self.stiffness.matrix();
        Ok(a.mul_vec(&self.mass.solve(&a.mul_vec(v))?))
    }

    fn apply_sqrt(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(v)?;
        let rv = DVector::from_vec(self.mass_factor.mul_lower(v.as_slice()));
        self.stiffness.solve(&rv)
    }

    fn apply_sqrt_transpose(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(v)?;
        let x = self.stiffness.solve(v)?;
        Ok(DVector::from_vec(self.mass_factor.mul_lower_transpose(x.as_slice())))
    }

    /// `m_pr + A⁻¹ M_L^{1/2} ξ` with the lumped mass `M_L`.
    fn sample(&self, seed: u64) -> Result<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xi = standard_normal(self.dim(), &mut rng);
        Ok(&self.mean + self.stiffness.solve(&xi.component_mul(&self.lumped_sqrt))?)
    }

    fn variance_diagonal(&self) -> Result<DVector<f64>> {
        let n = self.dim();
        let m = self.mass.matrix();
        let diag = (0..n)
            .into_par_iter()
            .map(|i| {
                let e = DVector::from_fn(n, |j, _| if j == i { 1.0 } else { 0.0 });
                let c = self.stiffness.solve(&e)?;
                Ok(c.dot(&m.mul_vec(&c)))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(DVector::from_vec(diag))
    }
}

/// Prior with an explicit dense covariance.
#[derive(Debug, Clone)]
pub struct DensePrior {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    factor: DMatrix<f64>,
    precision: DMatrix<f64>,
}

impl DensePrior {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        check_len("prior mean", mean.len(), covariance.nrows())?;
        if !covariance.is_square() {
            return Err(validation("prior covariance must be square"));
        }
        let chol = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| validation("prior covariance is not positive definite"))?;
        let precision = chol.inverse();
        Ok(Self { mean, factor: chol.l(), covariance, precision })
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }
}

impl GaussianPrior for DensePrior {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    fn apply_covariance(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("parameter vector", v.len(), self.dim())?;
        Ok(&self.covariance * v)
    }

    fn apply_precision(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("parameter vector", v.len(), self.dim())?;
        Ok(&self.precision * v)
    }

    fn apply_sqrt(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("parameter vector", v.len(), self.dim())?;
        Ok(&self.factor * v)
    }

    fn apply_sqrt_transpose(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("parameter vector", v.len(), self.dim())?;
        Ok(self.factor.tr_mul(v))
    }

    fn sample(&self, seed: u64) -> Result<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(&self.mean + &self.factor * standard_normal(self.dim(), &mut rng))
    }
}
