//! Sensor designs: ordered sets of distinct candidate indices.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};

/// An ordered set of `r` distinct indices into `d` candidate sensors.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawDesign")]
pub struct Design {
    d: usize,
    indices: Vec<usize>,
}

#[derive(Deserialize)]
struct RawDesign {
    d: usize,
    indices: Vec<usize>,
}

impl TryFrom<RawDesign> for Design {
    type Error = crate::Error;

    fn try_from(raw: RawDesign) -> Result<Self> {
        Design::new(raw.indices, raw.d)
    }
}

impl Design {
    pub fn new(indices: Vec<usize>, d: usize) -> Result<Self> {
        let mut seen = vec![false; d];
        for &i in &indices {
            if i >= d {
                return Err(validation(format!("design index {i} out of range for {d} candidates")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(validation(format!("design index {i} repeated")));
            }
        }
        Ok(Self { d, indices })
    }

    pub fn empty(d: usize) -> Self {
        Self { d, indices: Vec::new() }
    }

    pub fn full(d: usize) -> Self {
        Self { d, indices: (0..d).collect() }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.contains(&i)
    }

    /// A copy with `i` appended.
    pub fn with(&self, i: usize) -> Result<Self> {
        let mut idx = self.indices.clone();
        idx.push(i);
        Self::new(idx, self.d)
    }

    /// A copy with position `pos` replaced by `i`.
    pub fn replaced(&self, pos: usize, i: usize) -> Result<Self> {
        let mut idx = self.indices.clone();
        idx[pos] = i;
        Self::new(idx, self.d)
    }

    /// Indices in increasing order.
    pub fn sorted(&self) -> Vec<usize> {
        let mut s = self.indices.clone();
        s.sort_unstable();
        s
    }

    /// The rows of a full candidate vector picked by the design.
    pub fn select(&self, full: &DVector<f64>) -> Result<DVector<f64>> {
        if full.len() != self.d {
            return Err(validation(format!(
                "data vector has {} entries, design expects {}",
                full.len(),
                self.d
            )));
        }
        Ok(DVector::from_iterator(self.len(), self.indices.iter().map(|&i| full[i])))
    }

    /// Scatter design-row values back into a zero `d`-vector (`Wᵀ z`).
    pub fn scatter(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        if z.len() != self.len() {
            return Err(validation(format!(
                "vector has {} entries, design has {} sensors",
                z.len(),
                self.len()
            )));
        }
        let mut full = DVector::zeros(self.d);
        for (k, &i) in self.indices.iter().enumerate() {
            full[i] = z[k];
        }
        Ok(full)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_rules() {
        assert!(Design::new(vec![0, 2], 3).is_ok());
        assert!(Design::new(vec![0, 3], 3).is_err());
        assert!(Design::new(vec![1, 1], 3).is_err());
        assert_eq!(Design::full(3).indices(), &[0, 1, 2]);
    }

    #[test]
    fn select_and_scatter_are_adjoint() {
        let d = Design::new(vec![2, 0], 4).unwrap();
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(d.select(&v).unwrap().as_slice(), &[3.0, 1.0]);
        let z = DVector::from_vec(vec![5.0, 6.0]);
        assert_eq!(d.scatter(&z).unwrap().as_slice(), &[6.0, 0.0, 5.0, 0.0]);
        assert!(Design::full(4).select(&v).unwrap() == v);
    }

    #[test]
    fn json_round_trip_validates() {
        let d = Design::new(vec![4, 1], 5).unwrap();
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(serde_json::from_str::<Design>(&s).unwrap(), d);
        assert!(serde_json::from_str::<Design>(r#"{"d":2,"indices":[2]}"#).is_err());
    }
}
