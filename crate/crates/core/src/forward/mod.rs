//! Parameter-to-observable maps and their linearizations.

mod advection;
mod dense;
mod io;
mod lognormal;

use nalgebra::DVector;

pub use advection::{true_initial_condition, AdvectionDiffusionModel, AdvectionSettings, Velocity};
pub use dense::DenseLinearModel;
pub use io::{read_velocity_csv, write_field_csv, write_state_csv};
pub use lognormal::LogNormalDiffusionModel;

use crate::counters::Counters;
use crate::design::Design;
use crate::error::{check_len, validation, Result};
use crate::linalg::{CsrMatrix, TripletBuilder};
use crate::mesh::Grid2D;
use crate::prior::GaussianPrior;

/// Candidate sensor locations and their interpolation matrix `B_d`.
#[derive(Debug, Clone)]
pub struct SensorArray {
    locations: Vec<[f64; 2]>,
    matrix: CsrMatrix,
}

impl SensorArray {
    pub fn new(grid: &Grid2D, locations: Vec<[f64; 2]>) -> Result<Self> {
        for (a, p) in locations.iter().enumerate() {
            for q in &locations[..a] {
                if (p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12 {
                    return Err(validation(format!("duplicate sensor location ({}, {})", p[0], p[1])));
                }
            }
        }
        let mut t = TripletBuilder::new(locations.len(), grid.vertex_count());
        for (row, p) in locations.iter().enumerate() {
            for (v, w) in grid.locate(p[0], p[1])? {
                t.push(row, v, w);
            }
        }
        Ok(Self { locations, matrix: t.build() })
    }

    /// A `gx × gy` lattice strictly inside the unit square, at
    /// `((i+1)/(gx+1), (j+1)/(gy+1))`, numbered row-major.
    pub fn lattice(grid: &Grid2D, gx: usize, gy: usize) -> Result<Self> {
        let mut pts = Vec::with_capacity(gx * gy);
        for j in 0..gy {
            for i in 0..gx {
                pts.push([(i + 1) as f64 / (gx + 1) as f64, (j + 1) as f64 / (gy + 1) as f64]);
            }
        }
        Self::new(grid, pts)
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn locations(&self) -> &[[f64; 2]] {
        &self.locations
    }

    /// `B_d`, one row of interpolation weights per sensor.
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn observe(&self, u: &DVector<f64>) -> DVector<f64> {
        self.matrix.mul_vec(u)
    }

    pub fn observe_transpose(&self, z: &DVector<f64>) -> DVector<f64> {
        self.matrix.transpose_mul_vec(z)
    }
}

/// Independent Gaussian noise with per-candidate standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    sigma: DVector<f64>,
}

impl NoiseModel {
    pub fn new(sigma: DVector<f64>) -> Result<Self> {
        if let Some(s) = sigma.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(validation(format!("noise standard deviations must be positive, got {s}")));
        }
        Ok(Self { sigma })
    }

    pub fn uniform(d: usize, sigma: f64) -> Result<Self> {
        Self::new(DVector::from_element(d, sigma))
    }

    /// `σ_j = σ_rel · max|reference|` for every candidate.
    pub fn relative(sigma_rel: f64, reference: &DVector<f64>) -> Result<Self> {
        Self::uniform(reference.len(), sigma_rel * reference.amax())
    }

    pub fn dim(&self) -> usize {
        self.sigma.len()
    }

    pub fn sigma(&self) -> &DVector<f64> {
        &self.sigma
    }

    /// `Γ_n^{-1/2} z`.
    pub fn whiten(&self, z: &DVector<f64>) -> DVector<f64> {
        z.component_div(&self.sigma)
    }

    /// `Γ_n^{-1} z`.
    pub fn apply_inverse(&self, z: &DVector<f64>) -> DVector<f64> {
        z.component_div(&self.sigma).component_div(&self.sigma)
    }

    /// Standard deviations of the sensors in `design`.
    pub fn restrict(&self, design: &Design) -> Result<DVector<f64>> {
        design.select(&self.sigma)
    }
}

/// A forward solution: every stored time level (one for steady models).
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub snapshots: Vec<DVector<f64>>,
}

impl State {
    pub fn last(&self) -> &DVector<f64> {
        self.snapshots.last().expect("state holds at least one snapshot")
    }
}

/// A model `m ↦ F(m)` observed at `d` candidate sensors.
pub trait ForwardModel: Send + Sync {
    fn parameter_dim(&self) -> usize;
    fn candidate_count(&self) -> usize;
    /// True when `F` is affine in `m`, so its Jacobian is constant.
    fn is_linear(&self) -> bool;
    fn counters(&self) -> &Counters;

    fn solve_forward(&self, m: &DVector<f64>) -> Result<State>;

    /// All `d` candidate observations of a state.
    fn observe_all(&self, state: &State) -> DVector<f64>;

    /// Fix a linearization point. Jacobian actions are only reachable through
    /// the returned handle, which caches the forward state and factorizations.
    fn linearize(&self, m: &DVector<f64>) -> Result<Box<dyn Linearization + '_>>;

    /// `W B_d u`, or all candidates when `design` is `None`.
    fn observe(&self, state: &State, design: Option<&Design>) -> Result<DVector<f64>> {
        let all = self.observe_all(state);
        match design {
            Some(w) => {
                if w.d() != self.candidate_count() {
                    return Err(validation(format!(
                        "design over {} candidates used with a model of {}",
                        w.d(),
                        self.candidate_count()
                    )));
                }
                w.select(&all)
            }
            None => Ok(all),
        }
    }

    /// `F(m)` at all candidates.
    fn forward_map(&self, m: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.observe_all(&self.solve_forward(m)?))
    }
}

/// A model frozen at a point `m`, exposing `J = ∂F/∂m` at all candidates.
pub trait Linearization: Send + Sync {
    fn point(&self) -> &DVector<f64>;
    /// `F(m)` at all candidates.
    fn observables(&self) -> &DVector<f64>;
    fn jacobian_action(&self, dm: &DVector<f64>) -> Result<DVector<f64>>;
    fn jacobian_transpose_action(&self, z: &DVector<f64>) -> Result<DVector<f64>>;
}

/// `½‖W F(m) − y‖²_{Γ_n⁻¹} + ½‖m − m_pr‖²_{Γ_pr⁻¹}` evaluated from a
/// linearization at `m`.
pub fn objective(
    lin: &dyn Linearization,
    prior: &dyn GaussianPrior,
    noise: &NoiseModel,
    y: &DVector<f64>,
    design: &Design,
) -> Result<f64> {
    let (misfit, _) = weighted_residual(lin, noise, y, design)?;
    let dm = lin.point() - prior.mean();
    Ok(misfit + 0.5 * prior.prior_norm_sq(&dm)?)
}

/// Data misfit and `Wᵀ Γ_n⁻¹ (W F(m) − y)` as a full candidate vector.
fn weighted_residual(
    lin: &dyn Linearization,
    noise: &NoiseModel,
    y: &DVector<f64>,
    design: &Design,
) -> Result<(f64, DVector<f64>)> {
    check_len("data vector", y.len(), design.len())?;
    let r = design.select(lin.observables())? - y;
    let sigma = noise.restrict(design)?;
    let wr = r.component_div(&sigma).component_div(&sigma);
    Ok((0.5 * r.dot(&wr), design.scatter(&wr)?))
}

/// Gradient of [`objective`]: `Jᵀ Wᵀ Γ_n⁻¹ (W F(m) − y) + Γ_pr⁻¹ (m − m_pr)`.
pub fn misfit_gradient(
    lin: &dyn Linearization,
    prior: &dyn GaussianPrior,
    noise: &NoiseModel,
    y: &DVector<f64>,
    design: &Design,
) -> Result<DVector<f64>> {
    let (_, wr) = weighted_residual(lin, noise, y, design)?;
    let g = lin.jacobian_transpose_action(&wr)?;
    Ok(g + prior.apply_precision(&(lin.point() - prior.mean()))?)
}
