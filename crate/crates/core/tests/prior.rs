mod common;

use common::{advection_prior, gaussian_vector};
use nalgebra::{DMatrix, DVector};
use optsensor::mesh::{anisotropy, Grid2D, IDENTITY};
use optsensor::prior::{GaussianPrior, PriorOperator};
use proptest::prelude::*;

fn max_min_ratio(v: &DVector<f64>) -> f64 {
    v.max() / v.min()
}

#[test]
fn robin_term_flattens_the_variance_field() {
    let grid = Grid2D::square(32).unwrap();
    let mean = DVector::from_element(grid.vertex_count(), 0.25);
    let robin = PriorOperator::new(grid, 1.0, 8.0, IDENTITY, mean.clone()).unwrap();
    let neumann = PriorOperator::with_robin(grid, 1.0, 8.0, IDENTITY, 0.0, mean).unwrap();
    let vr = robin.variance_diagonal().unwrap();
    let vn = neumann.variance_diagonal().unwrap();
    assert!(vr.min() > 0.0 && vn.min() > 0.0);
    let corner = grid.index(0, 0);
    let center = grid.index(16, 16);
    assert!(vn[corner] > vr[corner]);
    assert!(vn[corner] > vn[center], "without Robin the corners are inflated");
    assert!(max_min_ratio(&vr) < max_min_ratio(&vn));
}

/// `A⁻¹ diag(rowsum M) A⁻¹`, formed densely.
fn lumped_covariance(prior: &PriorOperator) -> DMatrix<f64> {
    let a = prior.operator_matrix().to_dense();
    let lumped = DMatrix::from_diagonal(&prior.mass_matrix().row_sums());
    let a_inv = a.try_inverse().unwrap();
    &a_inv * lumped * &a_inv
}

#[test]
fn sample_moments_match_lumped_covariance() {
    let grid = Grid2D::square(8).unwrap();
    let prior = advection_prior(grid);
    let n = grid.vertex_count();
    let count = 10_000;
    let samples: Vec<DVector<f64>> = (0..count).map(|s| prior.sample(s as u64).unwrap()).collect();
    let mean = samples.iter().fold(DVector::zeros(n), |acc, s| acc + s) / count as f64;
    let cov = lumped_covariance(&prior);
    for v in 0..n {
        let se = (cov[(v, v)] / count as f64).sqrt();
        assert!((mean[v] - 0.25).abs() < 3.0 * se + 1e-12, "vertex {v}");
    }
    let probes = [grid.index(4, 4), grid.index(5, 4), grid.index(4, 5), grid.index(2, 6), grid.index(0, 0)];
    for &a in &probes {
        for &b in &probes {
            let emp = samples.iter().map(|s| (s[a] - 0.25) * (s[b] - 0.25)).sum::<f64>() / count as f64;
            let exact = cov[(a, b)];
            if a == b || exact.abs() > 0.3 * (cov[(a, a)] * cov[(b, b)]).sqrt() {
                assert!((emp - exact).abs() <= 0.05 * exact.abs(), "({a}, {b}): {emp} vs {exact}");
            }
        }
    }
}

#[test]
fn center_variance_is_stable_under_refinement() {
    let center_var = |n: usize| {
        let grid = Grid2D::square(n).unwrap();
        let prior = advection_prior(grid);
        let c = grid.index(n / 2, n / 2);
        let mut e = DVector::zeros(grid.vertex_count());
        e[c] = 1.0;
        prior.apply_covariance(&e).unwrap()[c]
    };
    let (coarse, fine) = (center_var(32), center_var(64));
    assert!((coarse - fine).abs() / fine < 0.05, "{coarse} vs {fine}");
}

#[test]
fn anisotropic_prior_correlates_along_the_preferred_direction() {
    let grid = Grid2D::square(24).unwrap();
    let theta = anisotropy(2.0, 0.5, std::f64::consts::FRAC_PI_4);
    let prior = PriorOperator::new(grid, 0.04, 0.2, theta, DVector::zeros(grid.vertex_count())).unwrap();
    let c = grid.index(12, 12);
    let mut e = DVector::zeros(grid.vertex_count());
    e[c] = 1.0;
    let col = prior.apply_covariance(&e).unwrap();
    let along = col[grid.index(15, 15)];
    let across = col[grid.index(9, 15)];
    assert!(along > across, "{along} vs {across}");
}

fn prior_9x9() -> PriorOperator {
    advection_prior(Grid2D::square(8).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn covariance_is_symmetric_positive(seed in 0u64..10_000) {
        let prior = prior_9x9();
        let u = gaussian_vector(81, seed);
        let v = gaussian_vector(81, seed + 1);
        let uv = u.dot(&prior.apply_covariance(&v).unwrap());
        let vu = v.dot(&prior.apply_covariance(&u).unwrap());
        prop_assert!((uv - vu).abs() <= 1e-10 * uv.abs().max(vu.abs()));
        prop_assert!(v.dot(&prior.apply_covariance(&v).unwrap()) > 0.0);
    }

    #[test]
    fn precision_inverts_covariance(seed in 0u64..10_000) {
        let prior = prior_9x9();
        let v = gaussian_vector(81, seed);
        let back = prior.apply_precision(&prior.apply_covariance(&v).unwrap()).unwrap();
        prop_assert!((&back - &v).norm() <= 1e-8 * v.norm());
    }

    #[test]
    fn prior_norm_is_quadratic(seed in 0u64..10_000, scale in -5.0f64..5.0) {
        let prior = prior_9x9();
        let v = gaussian_vector(81, seed);
        let base = prior.prior_norm_sq(&v).unwrap();
        prop_assert!(base >= 0.0);
        let scaled = prior.prior_norm_sq(&(scale * &v)).unwrap();
        prop_assert!((scaled - scale * scale * base).abs() <= 1e-12 * base.max(1.0) * scale.abs().max(1.0).powi(2) * 10.0);
    }

    #[test]
    fn sqrt_factor_reproduces_covariance(seed in 0u64..10_000) {
        let prior = prior_9x9();
        let v = gaussian_vector(81, seed);
        let via_sqrt = prior.apply_sqrt(&prior.apply_sqrt_transpose(&v).unwrap()).unwrap();
        let direct = prior.apply_covariance(&v).unwrap();
        prop_assert!((&via_sqrt - &direct).norm() <= 1e-10 * direct.norm());
    }

    #[test]
    fn sampling_is_deterministic(seed in any::<u64>()) {
        let prior = prior_9x9();
        prop_assert_eq!(prior.sample(seed).unwrap(), prior.sample(seed).unwrap());
    }
}
