//! Linear advection–diffusion with the initial condition as parameter:
//! `u_t − k Δu + v·∇u = 0`, homogeneous Neumann boundary, `u(0) = m`,
//! implicit Euler in time.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{ForwardModel, Linearization, SensorArray, State};
use crate::counters::{Counter, Counters};
use crate::error::{check_len, validation, Result};
use crate::linalg::{CsrMatrix, SparseSolver, TripletBuilder};
use crate::mesh::Grid2D;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdvectionSettings {
    pub diffusion: f64,
    pub time_steps: usize,
    pub final_time: f64,
    /// Time-step indices in `1..=time_steps` at which sensors record.
    /// Empty means the final time only.
    pub observation_times: Vec<usize>,
}

impl Default for AdvectionSettings {
    fn default() -> Self {
        Self { diffusion: 0.001, time_steps: 40, final_time: 4.0, observation_times: Vec::new() }
    }
}

/// Transport velocity, constant on each triangle.
#[derive(Debug, Clone, PartialEq)]
pub enum Velocity {
    /// Discrete curl of the interpolated streamfunction `sin(πx) sin(πy) / π`;
    /// unit peak speed, exactly divergence-free, no flow through the boundary.
    Recirculating,
    /// One vector per element in [`Grid2D::elements`] order.
    Elementwise(Vec<[f64; 2]>),
}

impl Velocity {
    /// Element averages of a nodal field (e.g. read from a file).
    pub fn from_nodal(grid: &Grid2D, nodal: &[[f64; 2]]) -> Result<Self> {
        check_len("nodal velocity", nodal.len(), grid.vertex_count())?;
        Ok(Velocity::Elementwise(
            grid.elements()
                .map(|e| {
                    let mut v = [0.0; 2];
                    for &a in &e.vertices {
                        v[0] += nodal[a][0] / 3.0;
                        v[1] += nodal[a][1] / 3.0;
                    }
                    v
                })
                .collect(),
        ))
    }

    fn per_element(&self, grid: &Grid2D) -> Result<Vec<[f64; 2]>> {
        match self {
            Velocity::Recirculating => {
                let pi = std::f64::consts::PI;
                let psi = grid.interpolate(|x, y| (pi * x).sin() * (pi * y).sin() / pi);
                Ok(grid
                    .elements()
                    .map(|e| {
                        let mut g = [0.0; 2];
                        for (a, &v) in e.vertices.iter().enumerate() {
                            g[0] += psi[v] * e.grads[a][0];
                            g[1] += psi[v] * e.grads[a][1];
                        }
                        [g[1], -g[0]]
                    })
                    .collect())
            }
            Velocity::Elementwise(v) => {
                check_len("element velocity", v.len(), grid.element_count())?;
                Ok(v.clone())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdvectionDiffusionModel {
    grid: Grid2D,
    sensors: SensorArray,
    settings: AdvectionSettings,
    obs_times: Vec<usize>,
    velocity: Vec<[f64; 2]>,
    advection: CsrMatrix,
    mass: CsrMatrix,
    step: SparseSolver,
    counters: Counters,
}

impl AdvectionDiffusionModel {
    pub fn new(grid: Grid2D, sensors: SensorArray, velocity: &Velocity, settings: AdvectionSettings) -> Result<Self> {
        if !(settings.diffusion > 0.0) || !(settings.final_time > 0.0) || settings.time_steps == 0 {
            return Err(validation("advection-diffusion needs positive diffusion, final time and step count"));
        }
        check_len("sensor interpolation columns", sensors.matrix().ncols(), grid.vertex_count())?;
        let obs_times = if settings.observation_times.is_empty() {
            vec![settings.time_steps]
        } else {
            settings.observation_times.clone()
        };
        for (i, &t) in obs_times.iter().enumerate() {
            if t == 0 || t > settings.time_steps || obs_times[..i].contains(&t) {
                return Err(validation(format!("invalid observation time index {t}")));
            }
        }
        let velocity = velocity.per_element(&grid)?;
        let n = grid.vertex_count();
        let mut c = TripletBuilder::new(n, n);
        for (e, v) in grid.elements().zip(&velocity) {
            for a in 0..3 {
                for b in 0..3 {
                    let g = e.grads[b];
                    c.push(e.vertices[a], e.vertices[b], e.area / 3.0 * (v[0] * g[0] + v[1] * g[1]));
                }
            }
        }
        let advection = c.build();
        let mass = grid.mass_matrix();
        let dt = settings.final_time / settings.time_steps as f64;
        let operator = grid
            .stiffness_matrix(&crate::mesh::IDENTITY)
            .linear_combination(settings.diffusion, &advection, 1.0);
        let system = mass.linear_combination(1.0, &operator, dt);
        Ok(Self {
            grid,
            sensors,
            settings,
            obs_times,
            velocity,
            advection,
            mass,
            step: SparseSolver::general(system, "implicit Euler step")?,
            counters: Counters::new(),
        })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn sensors(&self) -> &SensorArray {
        &self.sensors
    }

    pub fn settings(&self) -> &AdvectionSettings {
        &self.settings
    }

    pub fn velocity(&self) -> &[[f64; 2]] {
        &self.velocity
    }

    pub fn mass_matrix(&self) -> &CsrMatrix {
        &self.mass
    }

    /// Weak divergence `∫ v·∇φ_b` for every basis function; zero for a
    /// divergence-free field with no boundary flux.
    pub fn discrete_divergence(&self) -> DVector<f64> {
        self.advection.transpose_mul_vec(&DVector::from_element(self.grid.vertex_count(), 1.0))
    }

    fn propagate(&self, m: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        check_len("initial condition", m.len(), self.grid.vertex_count())?;
        if m.iter().any(|x| !x.is_finite()) {
            return Err(validation("initial condition has non-finite entries"));
        }
        let mut states = Vec::with_capacity(self.settings.time_steps + 1);
        states.push(m.clone());
        for _ in 0..self.settings.time_steps {
            let next = self.step.solve(&self.mass.mul_vec(states.last().unwrap()))?;
            states.push(next);
        }
        Ok(states)
    }

    fn observe_snapshots(&self, snapshots: &[DVector<f64>]) -> DVector<f64> {
        let nloc = self.sensors.len();
        let mut out = DVector::zeros(nloc * self.obs_times.len());
        for (t, &n) in self.obs_times.iter().enumerate() {
            out.rows_mut(t * nloc, nloc).copy_from(&self.sensors.observe(&snapshots[n]));
        }
        out
    }

    fn apply(&self, m: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.observe_snapshots(&self.propagate(m)?))
    }

    fn apply_transpose(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("data vector", z.len(), self.candidate_count())?;
        let nloc = self.sensors.len();
        let mut p = DVector::zeros(self.grid.vertex_count());
        for n in (1..=self.settings.time_steps).rev() {
            if let Some(t) = self.obs_times.iter().position(|&o| o == n) {
                p += self.sensors.observe_transpose(&z.rows(t * nloc, nloc).into_owned());
            }
            p = self.mass.mul_vec(&self.step.solve_transpose(&p)?);
        }
        Ok(p)
    }
}

impl ForwardModel for AdvectionDiffusionModel {
    fn parameter_dim(&self) -> usize {
        self.grid.vertex_count()
    }

    fn candidate_count(&self) -> usize {
        self.sensors.len() * self.obs_times.len()
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn counters(&self) -> &Counters {
        &self.counters
    }

    fn solve_forward(&self, m: &DVector<f64>) -> Result<State> {
        self.counters.incr(Counter::ForwardSolves);
        Ok(State { snapshots: self.propagate(m)? })
    }

    fn observe_all(&self, state: &State) -> DVector<f64> {
        self.observe_snapshots(&state.snapshots)
    }

    fn linearize(&self, m: &DVector<f64>) -> Result<Box<dyn Linearization + '_>> {
        let observables = self.forward_map(m)?;
        Ok(Box::new(AdvectionLinearization { model: self, point: m.clone(), observables }))
    }
}

struct AdvectionLinearization<'a> {
    model: &'a AdvectionDiffusionModel,
    point: DVector<f64>,
    observables: DVector<f64>,
}

impl Linearization for AdvectionLinearization<'_> {
    fn point(&self) -> &DVector<f64> {
        &self.point
    }

    fn observables(&self) -> &DVector<f64> {
        &self.observables
    }

    fn jacobian_action(&self, dm: &DVector<f64>) -> Result<DVector<f64>> {
        self.model.counters.incr(Counter::JacobianActions);
        self.model.apply(dm)
    }

    fn jacobian_transpose_action(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.model.counters.incr(Counter::JacobianTransposeActions);
        self.model.apply_transpose(z)
    }
}

/// `min(0.5, exp(−100 ‖x − (0.35, 0.7)‖²))`, the reference initial condition.
pub fn true_initial_condition(grid: &Grid2D) -> DVector<f64> {
    grid.interpolate(|x, y| (-100.0 * ((x - 0.35).powi(2) + (y - 0.7).powi(2))).exp().min(0.5))
}
