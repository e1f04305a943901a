//! Operation counters for the complexity ledger.
//!
//! Counters are owned by model and criterion instances (cheap `Arc` clones
//! share one set), so concurrent tests and pipelines never see each other's
//! counts.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Counter {
    ForwardSolves,
    JacobianActions,
    JacobianTransposeActions,
    HdActions,
    GnHessianActions,
    MapSolves,
    NewtonIterations,
    CgIterations,
}

const COUNT: usize = 8;

/// Shared, thread-safe operation counters.
#[derive(Debug, Clone, Default)]
pub struct Counters(Arc<[AtomicU64; COUNT]>);

impl Counters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&self, counter: Counter, n: u64) {
        self.0[counter as usize].fetch_add(n, Ordering::Relaxed);
    }

    pub fn incr(&self, counter: Counter) {
        self.add(counter, 1);
    }

    pub fn get(&self, counter: Counter) -> u64 {
        self.0[counter as usize].load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        for c in self.0.iter() {
            c.store(0, Ordering::Relaxed);
        }
    }

    pub fn snapshot(&self) -> CounterSnapshot {
        use Counter::*;
        CounterSnapshot {
            forward_solves: self.get(ForwardSolves),
            jacobian_actions: self.get(JacobianActions),
            jacobian_transpose_actions: self.get(JacobianTransposeActions),
            hd_actions: self.get(HdActions),
            gn_hessian_actions: self.get(GnHessianActions),
            map_solves: self.get(MapSolves),
            newton_iterations: self.get(NewtonIterations),
            cg_iterations: self.get(CgIterations),
        }
    }
}

/// Plain copy of a [`Counters`] state, suitable for reports.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterSnapshot {
    pub forward_solves: u64,
    pub jacobian_actions: u64,
    pub jacobian_transpose_actions: u64,
    pub hd_actions: u64,
    pub gn_hessian_actions: u64,
    pub map_solves: u64,
    pub newton_iterations: u64,
    pub cg_iterations: u64,
}

impl CounterSnapshot {
    /// Operator actions of any kind: PDE solves, Jacobian and Hessian actions.
    pub fn operator_actions(&self) -> u64 {
        self.forward_solves
            + self.jacobian_actions
            + self.jacobian_transpose_actions
            + self.hd_actions
            + self.gn_hessian_actions
            + self.map_solves
    }

    /// Counts accumulated since `earlier`.
    pub fn since(&self, earlier: &CounterSnapshot) -> CounterSnapshot {
        CounterSnapshot {
            forward_solves: self.forward_solves - earlier.forward_solves,
            jacobian_actions: self.jacobian_actions - earlier.jacobian_actions,
            jacobian_transpose_actions: self.jacobian_transpose_actions
                - earlier.jacobian_transpose_actions,
            hd_actions: self.hd_actions - earlier.hd_actions,
            gn_hessian_actions: self.gn_hessian_actions - earlier.gn_hessian_actions,
            map_solves: self.map_solves - earlier.map_solves,
            newton_iterations: self.newton_iterations - earlier.newton_iterations,
            cg_iterations: self.cg_iterations - earlier.cg_iterations,
        }
    }
}
