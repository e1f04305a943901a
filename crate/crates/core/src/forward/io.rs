//! CSV import/export of velocity fields, parameter fields and states.

use std::path::Path;

use nalgebra::DVector;

use super::State;
use crate::error::{check_len, Error, Result};
use crate::mesh::Grid2D;

/// Nodal velocities from a headered CSV of `vertex, vx, vy` rows, one per
/// vertex in any order.
pub fn read_velocity_csv(path: &Path, grid: &Grid2D) -> Result<Vec<[f64; 2]>> {
    let bad = |reason: String| Error::Format { path: path.to_path_buf(), reason };
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = vec![None; grid.vertex_count()];
    for rec in reader.deserialize::<(usize, f64, f64)>() {
        let (v, vx, vy) = rec?;
        let slot = out.get_mut(v).ok_or_else(|| bad(format!("vertex {v} out of range")))?;
        if slot.replace([vx, vy]).is_some() {
            return Err(bad(format!("vertex {v} listed twice")));
        }
    }
    out.into_iter()
        .enumerate()
        .map(|(v, x)| x.ok_or_else(|| bad(format!("vertex {v} missing"))))
        .collect()
}

/// `vertex, x, y, value` rows in vertex order.
pub fn write_field_csv(path: &Path, grid: &Grid2D, values: &DVector<f64>) -> Result<()> {
    check_len("field", values.len(), grid.vertex_count())?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["vertex", "x", "y", "value"])?;
    for (v, value) in values.iter().enumerate() {
        let [x, y] = grid.coords(v);
        w.serialize((v, x, y, value))?;
    }
    w.flush()?;
    Ok(())
}

/// `vertex, x, y, value, time` rows for every stored time level.
pub fn write_state_csv(path: &Path, grid: &Grid2D, state: &State) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["vertex", "x", "y", "value", "time"])?;
    for (t, u) in state.snapshots.iter().enumerate() {
        check_len("state snapshot", u.len(), grid.vertex_count())?;
        for (v, value) in u.iter().enumerate() {
            let [x, y] = grid.coords(v);
            w.serialize((v, x, y, value, t))?;
        }
    }
    w.flush()?;
    Ok(())
}
