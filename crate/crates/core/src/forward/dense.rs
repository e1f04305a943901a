use nalgebra::{DMatrix, DVector};

use super::{ForwardModel, Linearization, State};
use crate::counters::{Counter, Counters};
use crate::error::{check_len, Result};

/// `F(m) = F m` with an explicit `d × n` matrix.
#[derive(Debug, Clone)]
pub struct DenseLinearModel {
    matrix: DMatrix<f64>,
    counters: Counters,
}

impl DenseLinearModel {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        Self { matrix, counters: Counters::new() }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl ForwardModel for DenseLinearModel {
    fn parameter_dim(&self) -> usize {
        self.matrix.ncols()
    }

    fn candidate_count(&self) -> usize {
        self.matrix.nrows()
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn counters(&self) -> &Counters {
        &self.counters
    }

    fn solve_forward(&self, m: &DVector<f64>) -> Result<State> {
        check_len("parameter", m.len(), self.parameter_dim())?;
        self.counters.incr(Counter::ForwardSolves);
        Ok(State { snapshots: vec![m.clone()] })
    }

    fn observe_all(&self, state: &State) -> DVector<f64> {
        &self.matrix * state.last()
    }

    fn linearize(&self, m: &DVector<f64>) -> Result<Box<dyn Linearization + '_>> {
        let observables = self.forward_map(m)?;
        Ok(Box::new(DenseLinearization { model: self, point: m.clone(), observables }))
    }
}

struct DenseLinearization<'a> {
    model: &'a DenseLinearModel,
    point: DVector<f64>,
    observables: DVector<f64>,
}

impl Linearization for DenseLinearization<'_> {
    fn point(&self) -> &DVector<f64> {
        &self.point
    }

    fn observables(&self) -> &DVector<f64> {
        &self.observables
    }

    fn jacobian_action(&self, dm: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("parameter direction", dm.len(), self.point.len())?;
        self.model.counters.incr(Counter::JacobianActions);
        Ok(&self.model.matrix * dm)
    }

    fn jacobian_transpose_action(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("data vector", z.len(), self.model.candidate_count())?;
        self.model.counters.incr(Counter::JacobianTransposeActions);
        Ok(self.model.matrix.tr_mul(z))
    }
}
