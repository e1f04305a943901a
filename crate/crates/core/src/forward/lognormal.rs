//! Steady diffusion with a log-normal coefficient: `−∇·(e^m ∇u) = 0`,
//! `u = 1` on the top edge, `u = 0` on the bottom edge, no flux elsewhere.
//!
//! The element coefficient is the vertex average of `e^m`.

use nalgebra::DVector;

use super::{ForwardModel, Linearization, SensorArray, State};
use crate::counters::{Counter, Counters};
use crate::error::{check_len, validation, Error, Result};
use crate::linalg::SparseSolver;
use crate::mesh::{Grid2D, IDENTITY};

#[derive(Debug, Clone)]
pub struct LogNormalDiffusionModel {
    grid: Grid2D,
    sensors: SensorArray,
    free: Vec<usize>,
    lifting: DVector<f64>,
    counters: Counters,
}

struct Solved {
    exp_m: DVector<f64>,
    u: DVector<f64>,
    solver: SparseSolver,
}

impl LogNormalDiffusionModel {
    pub fn new(grid: Grid2D, sensors: SensorArray) -> Result<Self> {
        check_len("sensor interpolation columns", sensors.matrix().ncols(), grid.vertex_count())?;
        let ny = grid.ny();
        let free = (0..grid.vertex_count())
            .filter(|&v| {
                let (_, j) = grid.position(v);
                j != 0 && j != ny
            })
            .collect();
        let lifting = DVector::from_fn(grid.vertex_count(), |v, _| {
            if grid.position(v).1 == ny {
                1.0
            } else {
                0.0
            }
        });
        Ok(Self { grid, sensors, free, lifting, counters: Counters::new() })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn sensors(&self) -> &SensorArray {
        &self.sensors
    }

    fn element_coefficients(&self, exp_m: &DVector<f64>) -> Vec<f64> {
        self.grid
            .elements()
            .map(|e| e.vertices.iter().map(|&v| exp_m[v]).sum::<f64>() / 3.0)
            .collect()
    }

    fn solve(&self, m: &DVector<f64>) -> Result<Solved> {
        check_len("parameter", m.len(), self.grid.vertex_count())?;
        let exp_m = m.map(f64::exp);
        if exp_m.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
            return Err(Error::Numerical {
                context: "diffusion coefficient e^m overflowed or underflowed".into(),
                residual: f64::INFINITY,
            });
        }
        let k = self.grid.weighted_stiffness(&self.element_coefficients(&exp_m));
        let ku = k.mul_vec(&self.lifting);
        let rhs = DVector::from_iterator(self.free.len(), self.free.iter().map(|&v| -ku[v]));
        let solver = SparseSolver::spd(k.principal_submatrix(&self.free), "log-normal diffusion system")?;
        let uf = solver.solve(&rhs)?;
        let mut u = self.lifting.clone();
        for (a, &v) in self.free.iter().enumerate() {
            u[v] = uf[a];
        }
        Ok(Solved { exp_m, u, solver })
    }

    fn restrict_free(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.free.len(), self.free.iter().map(|&i| v[i]))
    }

    fn extend_free(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut full = DVector::zeros(self.grid.vertex_count());
        for (a, &i) in self.free.iter().enumerate() {
            full[i] = v[a];
        }
        full
    }
}

impl ForwardModel for LogNormalDiffusionModel {
    fn parameter_dim(&self) -> usize {
        self.grid.vertex_count()
    }

    fn candidate_count(&self) -> usize {
        self.sensors.len()
    }

    fn is_linear(&self) -> bool {
        false
    }

    fn counters(&self) -> &Counters {
        &self.counters
    }

    fn solve_forward(&self, m: &DVector<f64>) -> Result<State> {
        if m.iter().any(|x| !x.is_finite()) {
            return Err(validation("parameter has non-finite entries"));
        }
        self.counters.incr(Counter::ForwardSolves);
        Ok(State { snapshots: vec![self.solve(m)?.u] })
    }

    fn observe_all(&self, state: &State) -> DVector<f64> {
        self.sensors.observe(state.last())
    }

    fn linearize(&self, m: &DVector<f64>) -> Result<Box<dyn Linearization + '_>> {
        if m.iter().any(|x| !x.is_finite()) {
            return Err(validation("parameter has non-finite entries"));
        }
        self.counters.incr(Counter::ForwardSolves);
        let solved = self.solve(m)?;
        let observables = self.sensors.observe(&solved.u);
        Ok(Box::new(LogNormalLinearization { model: self, point: m.clone(), observables, solved }))
    }
}

struct LogNormalLinearization<'a> {
    model: &'a LogNormalDiffusionModel,
    point: DVector<f64>,
    observables: DVector<f64>,
    solved: Solved,
}

impl LogNormalLinearization<'_> {
    /// `(∂K/∂m · dm) u`.
    fn coefficient_derivative(&self, dm: &DVector<f64>) -> DVector<f64> {
        let (u, e) = (&self.solved.u, &self.solved.exp_m);
        let mut r = DVector::zeros(u.len());
        for el in self.model.grid.elements() {
            let dk: f64 = el.vertices.iter().map(|&c| e[c] * dm[c]).sum::<f64>() / 3.0;
            if dk == 0.0 {
                continue;
            }
            let k = el.stiffness(&IDENTITY);
            for a in 0..3 {
                let s: f64 = (0..3).map(|b| k[a][b] * u[el.vertices[b]]).sum();
                r[el.vertices[a]] += dk * s;
            }
        }
        r
    }
}

impl Linearization for LogNormalLinearization<'_> {
    fn point(&self) -> &DVector<f64> {
        &self.point
    }

    fn observables(&self) -> &DVector<f64> {
        &self.observables
    }

    fn jacobian_action(&self, dm: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("parameter direction", dm.len(), self.point.len())?;
        self.model.counters.incr(Counter::JacobianActions);
        let r = self.model.restrict_free(&self.coefficient_derivative(dm));
        let du = -self.solved.solver.solve(&r)?;
        Ok(self.model.sensors.observe(&self.model.extend_free(&du)))
    }

    fn jacobian_transpose_action(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("data vector", z.len(), self.model.candidate_count())?;
        self.model.counters.incr(Counter::JacobianTransposeActions);
        let w = self.model.restrict_free(&self.model.sensors.observe_transpose(z));
        let lambda = self.model.extend_free(&self.solved.solver.solve(&w)?);
        let (u, e) = (&self.solved.u, &self.solved.exp_m);
        let mut g = DVector::zeros(u.len());
        for el in self.model.grid.elements() {
            let k = el.stiffness(&IDENTITY);
            let mut s = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    s += lambda[el.vertices[a]] * k[a][b] * u[el.vertices[b]];
                }
            }
            for &c in &el.vertices {
                g[c] -= e[c] / 3.0 * s;
            }
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(n: usize) -> LogNormalDiffusionModel {
        let g = Grid2D::square(n).unwrap();
        let s = SensorArray::lattice(&g, 3, 3).unwrap();
        LogNormalDiffusionModel::new(g, s).unwrap()
    }

    #[test]
    fn constant_coefficient_gives_linear_profile() {
        let m = model(6);
        for c in [0.0, -2.0, 3.0] {
            let u = m.solve_forward(&DVector::from_element(49, c)).unwrap();
            let exact = m.grid().interpolate(|_, y| y);
            assert!((u.last() - exact).amax() < 1e-8);
        }
    }

    #[test]
    fn maximum_principle() {
        let m = model(8);
        let p = m.grid().interpolate(|x, y| 2.0 * (5.0 * x).sin() * (3.0 * y).cos());
        let u = m.solve_forward(&p).unwrap();
        assert!(u.last().iter().all(|&v| (-1e-10..=1.0 + 1e-10).contains(&v)));
    }

    #[test]
    fn overflow_is_a_numerical_error() {
        let m = model(2);
        let err = m.solve_forward(&DVector::from_element(9, 800.0)).unwrap_err();
        assert!(matches!(err, Error::Numerical { .. }));
    }
}
