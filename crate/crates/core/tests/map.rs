mod common;

use common::{advection_model, advection_prior, gaussian_vector, lognormal_model, lognormal_prior, rel_err};
use nalgebra::{DMatrix, DVector};
use optsensor::counters::Counter;
use optsensor::forward::{misfit_gradient, objective, AdvectionSettings, ForwardModel, NoiseModel};
use optsensor::map::{find_map, gn_hessian_action, NewtonSettings};
use optsensor::mesh::Grid2D;
use optsensor::prior::GaussianPrior;
use optsensor::Design;

fn short() -> AdvectionSettings {
    AdvectionSettings { time_steps: 10, final_time: 1.0, ..AdvectionSettings::default() }
}

fn dense_jacobian(lin: &dyn optsensor::forward::Linearization, n: usize) -> DMatrix<f64> {
    DMatrix::from_columns(
        &(0..n)
            .map(|i| lin.jacobian_action(&DVector::from_fn(n, |j, _| (i == j) as u8 as f64)).unwrap())
            .collect::<Vec<_>>(),
    )
}

#[test]
fn linear_map_matches_closed_form_posterior_mean() {
    let model = advection_model(4, 3, short());
    let prior = advection_prior(Grid2D::square(4).unwrap());
    let noise = NoiseModel::new(DVector::from_fn(9, |i, _| 0.02 + 0.001 * i as f64)).unwrap();
    let n = model.parameter_dim();
    let w = Design::new(vec![0, 2, 3, 5, 8], 9).unwrap();
    let truth = prior.sample(3).unwrap();
    let y = w.select(&model.forward_map(&truth).unwrap()).unwrap() + 0.01 * gaussian_vector(5, 4);

    let f = dense_jacobian(model.linearize(&DVector::zeros(n)).unwrap().as_ref(), n);
    let fw = DMatrix::from_fn(5, n, |r, j| f[(w.indices()[r], j)]);
    let gn_inv = DMatrix::from_diagonal(&w.select(noise.sigma()).unwrap().map(|s| 1.0 / (s * s)));
    let a = prior.operator_matrix().to_dense();
    let precision = &a * prior.mass_matrix().to_dense().try_inverse().unwrap() * &a;
    let lhs = fw.transpose() * &gn_inv * &fw + &precision;
    let rhs = fw.transpose() * &gn_inv * &y + &precision * prior.mean();
    let closed = lhs.lu().solve(&rhs).unwrap();

    model.counters().reset();
    let r = find_map(&model, &prior, &noise, &y, &w, &NewtonSettings::default(), None).unwrap();
    assert!(r.converged);
    assert_eq!(r.newton_iters, 1);
    assert!(rel_err(&r.m_map, &closed) <= 1e-8, "{}", rel_err(&r.m_map, &closed));
    assert_eq!(model.counters().get(Counter::GnHessianActions), r.total_cg_iters as u64);

    let lin = model.linearize(&r.m_map).unwrap();
    let g = misfit_gradient(lin.as_ref(), &prior, &noise, &y, &w).unwrap();
    let g0 = misfit_gradient(model.linearize(prior.mean()).unwrap().as_ref(), &prior, &noise, &y, &w).unwrap();
    assert!(g.norm() <= 1e-6 * g0.norm());
}

#[test]
fn gauss_newton_action_matches_dense_assembly() {
    let model = lognormal_model(4, 3);
    let grid = Grid2D::square(4).unwrap();
    let prior = lognormal_prior(grid);
    let noise = NoiseModel::uniform(9, 0.03).unwrap();
    let n = model.parameter_dim();
    let m = prior.sample(5).unwrap();
    let lin = model.linearize(&m).unwrap();
    let w = Design::new(vec![1, 4, 6, 7], 9).unwrap();
    let j = dense_jacobian(lin.as_ref(), n);
    let jw = DMatrix::from_fn(4, n, |r, c| j[(w.indices()[r], c)] / 0.03);
    let a = prior.operator_matrix().to_dense();
    let dense = jw.transpose() * &jw + &a * prior.mass_matrix().to_dense().try_inverse().unwrap() * &a;
    for seed in 0..5 {
        let dm = gaussian_vector(n, seed);
        let got = gn_hessian_action(lin.as_ref(), model.counters(), &prior, &noise, &w, &dm).unwrap();
        assert!(rel_err(&got, &(&dense * &dm)) <= 1e-8);
        let other = gaussian_vector(n, seed + 50);
        let hu = gn_hessian_action(lin.as_ref(), model.counters(), &prior, &noise, &w, &other).unwrap();
        let (a, b) = (dm.dot(&hu), other.dot(&got));
        assert!((a - b).abs() <= 1e-10 * a.abs().max(b.abs()));
    }
    let zero = gn_hessian_action(lin.as_ref(), model.counters(), &prior, &noise, &w, &DVector::zeros(n)).unwrap();
    assert_eq!(zero.amax(), 0.0);
}

#[test]
fn consistent_data_at_prior_mean_is_stationary() {
    let model = advection_model(4, 3, short());
    let prior = advection_prior(Grid2D::square(4).unwrap());
    let noise = NoiseModel::uniform(9, 0.05).unwrap();
    let y = model.forward_map(prior.mean()).unwrap();
    let r = find_map(&model, &prior, &noise, &y, &Design::full(9), &NewtonSettings::default(), None).unwrap();
    assert!(r.converged);
    assert_eq!(r.newton_iters, 0);
    assert_eq!(&r.m_map, prior.mean());
}

#[test]
fn lognormal_map_reduces_gradient_by_six_orders() {
    let model = lognormal_model(16, 5);
    let grid = Grid2D::square(16).unwrap();
    let prior = lognormal_prior(grid);
    let truth = prior.sample(7).unwrap();
    let clean = model.forward_map(&truth).unwrap();
    let noise = NoiseModel::relative(0.01, &clean).unwrap();
    let y = &clean + gaussian_vector(25, 8).component_mul(noise.sigma());
    let w = Design::full(25);

    model.counters().reset();
    let r = find_map(&model, &prior, &noise, &y, &w, &NewtonSettings::default(), None).unwrap();
    assert!(r.converged);
    let first = &r.trace[0];
    let last = r.trace.last().unwrap();
    assert!(last.grad_norm <= 1e-6 * first.grad_norm, "{} -> {}", first.grad_norm, last.grad_norm);
    assert!(r.trace.windows(2).all(|p| p[1].objective <= p[0].objective));
    assert_eq!(model.counters().get(Counter::GnHessianActions), r.total_cg_iters as u64);
    assert_eq!(model.counters().get(Counter::NewtonIterations), r.newton_iters as u64);
    assert_eq!(r.trace.iter().map(|t| t.cg_iters).sum::<usize>(), r.total_cg_iters);

    let misfit = |m: &DVector<f64>| {
        let f = model.forward_map(m).unwrap();
        0.5 * (f - &y).component_div(noise.sigma()).norm_squared()
    };
    assert!(misfit(&r.m_map) <= misfit(prior.mean()));
    let obj_map = objective(model.linearize(&r.m_map).unwrap().as_ref(), &prior, &noise, &y, &w).unwrap();
    let obj_pr = objective(model.linearize(prior.mean()).unwrap().as_ref(), &prior, &noise, &y, &w).unwrap();
    assert!(obj_map < obj_pr);
}

#[test]
fn iteration_cap_reports_nonconvergence() {
    let model = lognormal_model(8, 3);
    let prior = lognormal_prior(Grid2D::square(8).unwrap());
    let truth = prior.sample(9).unwrap();
    let y = model.forward_map(&truth).unwrap();
    let noise = NoiseModel::uniform(9, 0.001).unwrap();
    let settings = NewtonSettings { max_newton: 1, ..NewtonSettings::default() };
    let r = find_map(&model, &prior, &noise, &y, &Design::full(9), &settings, None).unwrap();
    assert!(!r.converged);
    assert_eq!(r.newton_iters, 1);
}

#[test]
fn trace_is_written_as_csv() {
    let model = advection_model(4, 3, short());
    let prior = advection_prior(Grid2D::square(4).unwrap());
    let noise = NoiseModel::uniform(9, 0.05).unwrap();
    let y = model.forward_map(&prior.sample(1).unwrap()).unwrap();
    let r = find_map(&model, &prior, &noise, &y, &Design::full(9), &NewtonSettings::default(), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    r.write_trace(&path).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.starts_with("iter,objective,grad_norm,cg_iters,step_length"));
    assert_eq!(text.lines().count(), r.trace.len() + 1);
}
