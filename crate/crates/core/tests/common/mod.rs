#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use optsensor::forward::{AdvectionDiffusionModel, AdvectionSettings, LogNormalDiffusionModel, SensorArray, Velocity};
use optsensor::mesh::{anisotropy, Grid2D, IDENTITY};
use optsensor::prior::PriorOperator;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn gaussian_vector(n: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Random SPD matrix `B Bᵀ + shift·I`.
pub fn random_spd(n: usize, shift: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    &b * b.transpose() + DMatrix::identity(n, n) * shift
}

pub fn advection_prior(grid: Grid2D) -> PriorOperator {
    PriorOperator::new(grid, 1.0, 8.0, IDENTITY, DVector::from_element(grid.vertex_count(), 0.25)).unwrap()
}

pub fn lognormal_prior(grid: Grid2D) -> PriorOperator {
    let theta = anisotropy(2.0, 0.5, std::f64::consts::FRAC_PI_4);
    PriorOperator::new(grid, 0.04, 0.2, theta, DVector::zeros(grid.vertex_count())).unwrap()
}

/// Advection-diffusion on an `n×n` grid with a `g×g` sensor lattice.
pub fn advection_model(n: usize, g: usize, settings: AdvectionSettings) -> AdvectionDiffusionModel {
    let grid = Grid2D::square(n).unwrap();
    let sensors = SensorArray::lattice(&grid, g, g).unwrap();
    AdvectionDiffusionModel::new(grid, sensors, &Velocity::Recirculating, settings).unwrap()
}

pub fn lognormal_model(n: usize, g: usize) -> LogNormalDiffusionModel {
    let grid = Grid2D::square(n).unwrap();
    let sensors = SensorArray::lattice(&grid, g, g).unwrap();
    LogNormalDiffusionModel::new(grid, sensors).unwrap()
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
