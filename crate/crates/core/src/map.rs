//! Inexact Newton–CG for the MAP point with Gauss–Newton Hessian actions.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::counters::Counter;
use crate::design::Design;
use crate::error::{check_len, validation, Result};
use crate::forward::{misfit_gradient, objective, ForwardModel, Linearization, NoiseModel};
use crate::prior::GaussianPrior;

/// Relative size of the Newton decrement below which the objective cannot
/// resolve further progress.
const DECREMENT_EPS: f64 = 1e3 * f64::EPSILON;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonSettings {
    pub max_newton: usize,
    pub grad_rtol: f64,
    /// Absolute gradient floor, for starts that are already near-stationary.
    pub grad_atol: f64,
    pub cg_max: usize,
    pub armijo_c: f64,
    pub max_backtracks: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self { max_newton: 50, grad_rtol: 1e-8, grad_atol: 1e-12, cg_max: 200, armijo_c: 1e-4, max_backtracks: 20 }
    }
}

impl NewtonSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_newton == 0 || self.cg_max == 0 || self.max_backtracks == 0 {
            return Err(validation("Newton iteration limits must be positive"));
        }
        if !(self.grad_rtol > 0.0) || !(self.grad_atol >= 0.0) {
            return Err(validation("Newton gradient tolerances must be positive"));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(validation(format!("Armijo constant must lie in (0, 1), got {}", self.armijo_c)));
        }
        Ok(())
    }
}

/// One accepted (or final) Newton iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonRecord {
    pub iter: usize,
    pub objective: f64,
    /// `√(gᵀ Γ_pr g)`.
    pub grad_norm: f64,
    pub cg_iters: usize,
    pub step_length: f64,
}

#[derive(Debug, Clone)]
pub struct MapResult {
    pub m_map: DVector<f64>,
    pub converged: bool,
    pub newton_iters: usize,
    pub total_cg_iters: usize,
    pub trace: Vec<NewtonRecord>,
}

impl MapResult {
    pub fn write_trace(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.trace {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `Jᵀ Wᵀ Γ_n⁻¹ W J dm + Γ_pr⁻¹ dm`.
pub fn gn_hessian_action(
    lin: &dyn Linearization,
    counters: &crate::counters::Counters,
    prior: &dyn GaussianPrior,
    noise: &NoiseModel,
    design: &Design,
    dm: &DVector<f64>,
) -> Result<DVector<f64>> {
    counters.incr(Counter::GnHessianActions);
    let jd = design.select(&lin.jacobian_action(dm)?)?;
    let sigma = noise.restrict(design)?;
    let z = design.scatter(&jd.component_div(&sigma).component_div(&sigma))?;
    Ok(lin.jacobian_transpose_action(&z)? + prior.apply_precision(dm)?)
}

/// Minimizes `½‖W F(m) − y‖²_{Γ_n⁻¹} + ½‖m − m_pr‖²_{Γ_pr⁻¹}` from `m0`
/// (default `m_pr`). Non-convergence is reported in the result, not as an
/// error.
#[allow(clippy::too_many_arguments)]
pub fn find_map(
    model: &dyn ForwardModel,
    prior: &dyn GaussianPrior,
    noise: &NoiseModel,
    y: &DVector<f64>,
    design: &Design,
    settings: &NewtonSettings,
    m0: Option<&DVector<f64>>,
) -> Result<MapResult> {
    settings.validate()?;
    check_len("data vector", y.len(), design.len())?;
    check_len("noise model", noise.dim(), model.candidate_count())?;
    let counters = model.counters();
    counters.incr(Counter::MapSolves);
    let mut m = m0.cloned().unwrap_or_else(|| prior.mean().clone());
    check_len("initial guess", m.len(), model.parameter_dim())?;

    let mut lin = model.linearize(&m)?;
    let mut obj = objective(lin.as_ref(), prior, noise, y, design)?;
    let mut g = misfit_gradient(lin.as_ref(), prior, noise, y, design)?;
    let g0 = prior_norm(prior, &g)?;
    let target = (settings.grad_rtol * g0).max(settings.grad_atol);
    let mut trace = vec![NewtonRecord { iter: 0, objective: obj, grad_norm: g0, cg_iters: 0, step_length: 0.0 }];
    let mut total_cg = 0;
    let mut iters = 0;
    let mut gn = g0;
    let mut converged = g0 <= target;

    while !converged && iters < settings.max_newton {
        // With an affine forward map the Gauss–Newton system is the exact
        // Newton system, so solving it to the final tolerance finishes in one
        // step.
        let eta = if model.is_linear() {
            (target / gn).min(0.5)
        } else {
            (gn / g0).sqrt().min(0.5)
        };
        let (step, cg_iters) = pcg(
            |v| gn_hessian_action(lin.as_ref(), counters, prior, noise, design, v),
            |r| prior.apply_covariance(r),
            &(-&g),
            eta * gn,
            settings.cg_max,
        )?;
        total_cg += cg_iters;
        counters.add(Counter::CgIterations, cg_iters as u64);
        iters += 1;
        counters.incr(Counter::NewtonIterations);

        let slope = g.dot(&step);
        // The predicted decrease is below what the objective can resolve.
        if -slope <= DECREMENT_EPS * obj.abs().max(1.0) {
            trace.push(NewtonRecord { iter: iters, objective: obj, grad_norm: gn, cg_iters, step_length: 0.0 });
            converged = true;
            break;
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=settings.max_backtracks {
            let trial = &m + alpha * &step;
            let trial_lin = model.linearize(&trial)?;
            let trial_obj = objective(trial_lin.as_ref(), prior, noise, y, design)?;
            if trial_obj <= obj + settings.armijo_c * alpha * slope {
                accepted = Some((trial, trial_lin, trial_obj));
                break;
            }
            alpha *= 0.5;
        }
        let Some((trial, trial_lin, trial_obj)) = accepted else {
            trace.push(NewtonRecord { iter: iters, objective: obj, grad_norm: gn, cg_iters, step_length: 0.0 });
            break;
        };
        m = trial;
        lin = trial_lin;
        obj = trial_obj;
        g = misfit_gradient(lin.as_ref(), prior, noise, y, design)?;
        gn = prior_norm(prior, &g)?;
        trace.push(NewtonRecord { iter: iters, objective: obj, grad_norm: gn, cg_iters, step_length: alpha });
        converged = gn <= target;
    }
    Ok(MapResult { m_map: m, converged, newton_iters: iters, total_cg_iters: total_cg, trace })
}

/// Gradient norm in the prior-covariance metric, `√(gᵀ Γ_pr g)`.
fn prior_norm(prior: &dyn GaussianPrior, g: &DVector<f64>) -> Result<f64> {
    Ok(g.dot(&prior.apply_covariance(g)?).max(0.0).sqrt())
}

/// Preconditioned CG for `H x = b` from `x = 0`, stopping when the
/// preconditioned residual norm `√(rᵀ P r)` drops to `tol`. Returns the iterate and the number of `H` actions.
fn pcg<H, P>(h: H, precond: P, b: &DVector<f64>, tol: f64, max_iter: usize) -> Result<(DVector<f64>, usize)>
where
    H: Fn(&DVector<f64>) -> Result<DVector<f64>>,
    P: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let mut x = DVector::zeros(b.len());
    let mut r = b.clone();
    let mut z = precond(&r)?;
    let mut rz = r.dot(&z);
    if rz.max(0.0).sqrt() <= tol {
        return Ok((x, 0));
    }
    let mut p = z.clone();
    for it in 1..=max_iter {
        let hp = h(&p)?;
        let curv = p.dot(&hp);
        if curv <= 0.0 {
            if it == 1 {
                x = p;
            }
            return Ok((x, it));
        }
        let a = rz / curv;
        x.axpy(a, &p, 1.0);
        r.axpy(-a, &hp, 1.0);
        z = precond(&r)?;
        let rz_new = r.dot(&z);
        if rz_new.max(0.0).sqrt() <= tol {
            return Ok((x, it));
        }
        p = &z + (rz_new / rz) * &p;
        rz = rz_new;
    }
    Ok((x, max_iter))
}
