//! Uniform triangulations of the unit square and linear finite-element
//! assembly on them.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::linalg::{CsrMatrix, TripletBuilder};

/// 2×2 symmetric matrix stored row-major.
pub type Tensor2 = [[f64; 2]; 2];

pub const IDENTITY: Tensor2 = [[1.0, 0.0], [0.0, 1.0]];

/// `nx × ny` cells on `[0,1]²`, each split along the `(i,j)–(i+1,j+1)`
/// diagonal. Vertices are numbered row-major: `j * (nx + 1) + i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid2D {
    nx: usize,
    ny: usize,
}

/// One triangle: vertex indices, basis-function gradients and area.
#[derive(Debug, Clone, Copy)]
pub struct Element {
    pub vertices: [usize; 3],
    pub grads: [[f64; 2]; 3],
    pub area: f64,
}

impl Element {
    /// `area · ∇φ_aᵀ Θ ∇φ_b`.
    pub fn stiffness(&self, theta: &Tensor2) -> [[f64; 3]; 3] {
        let mut k = [[0.0; 3]; 3];
        for a in 0..3 {
            let ga = self.grads[a];
            let tg = [
                theta[0][0] * ga[0] + theta[0][1] * ga[1],
                theta[1][0] * ga[0] + theta[1][1] * ga[1],
            ];
            for b in 0..3 {
                let gb = self.grads[b];
                k[a][b] = self.area * (tg[0] * gb[0] + tg[1] * gb[1]);
            }
        }
        k
    }

    pub fn mass(&self) -> [[f64; 3]; 3] {
        let d = self.area / 6.0;
        let o = self.area / 12.0;
        [[d, o, o], [o, d, o], [o, o, d]]
    }
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(validation(format!("grid needs positive cell counts, got {nx}×{ny}")));
        }
        Ok(Self { nx, ny })
    }

    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn vertex_count(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn element_count(&self) -> usize {
        2 * self.nx * self.ny
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    /// `(i, j)` lattice position of a vertex.
    #[inline]
    pub fn position(&self, v: usize) -> (usize, usize) {
        (v % (self.nx + 1), v / (self.nx + 1))
    }

    pub fn coords(&self, v: usize) -> [f64; 2] {
        let (i, j) = self.position(v);
        [i as f64 / self.nx as f64, j as f64 / self.ny as f64]
    }

    pub fn hx(&self) -> f64 {
        1.0 / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        1.0 / self.ny as f64
    }

    pub fn elements(&self) -> impl Iterator<Item = Element> + '_ {
        let (hx, hy) = (self.hx(), self.hy());
        let area = 0.5 * hx * hy;
        // lower: (0,0),(1,0),(1,1); upper: (0,0),(1,1),(0,1)
        let lower = [[-1.0 / hx, 0.0], [1.0 / hx, -1.0 / hy], [0.0, 1.0 / hy]];
        let upper = [[0.0, -1.0 / hy], [1.0 / hx, 0.0], [-1.0 / hx, 1.0 / hy]];
        (0..self.ny).flat_map(move |j| {
            (0..self.nx).flat_map(move |i| {
                let v00 = self.index(i, j);
                let v10 = self.index(i + 1, j);
                let v11 = self.index(i + 1, j + 1);
                let v01 = self.index(i, j + 1);
                [
                    Element { vertices: [v00, v10, v11], grads: lower, area },
                    Element { vertices: [v00, v11, v01], grads: upper, area },
                ]
            })
        })
    }

    /// Boundary edges as vertex pairs, counter-clockwise.
    pub fn boundary_edges(&self) -> Vec<[usize; 2]> {
        let (nx, ny) = (self.nx, self.ny);
        let mut edges = Vec::with_capacity(2 * (nx + ny));
        for i in 0..nx {
            edges.push([self.index(i, 0), self.index(i + 1, 0)]);
        }
        for j in 0..ny {
            edges.push([self.index(nx, j), self.index(nx, j + 1)]);
        }
        for i in (0..nx).rev() {
            edges.push([self.index(i + 1, ny), self.index(i, ny)]);
        }
        for j in (0..ny).rev() {
            edges.push([self.index(0, j + 1), self.index(0, j)]);
        }
        edges
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        let (i, j) = self.position(v);
        i == 0 || j == 0 || i == self.nx || j == self.ny
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(&self, f: impl Fn(f64, f64) -> f64) -> DVector<f64> {
        DVector::from_iterator(
            self.vertex_count(),
            (0..self.vertex_count()).map(|v| {
                let [x, y] = self.coords(v);
                f(x, y)
            }),
        )
    }

    pub fn mass_matrix(&self) -> CsrMatrix {
        self.assemble(|e| e.mass())
    }

    pub fn stiffness_matrix(&self, theta: &Tensor2) -> CsrMatrix {
        self.assemble(|e| e.stiffness(theta))
    }

    /// Stiffness with a per-element scalar coefficient (indexed in
    /// [`Grid2D::elements`] order).
    pub fn weighted_stiffness(&self, coeff: &[f64]) -> CsrMatrix {
        assert_eq!(coeff.len(), self.element_count());
        let mut t = TripletBuilder::new(self.vertex_count(), self.vertex_count());
        for (e, c) in self.elements().zip(coeff) {
            let k = e.stiffness(&IDENTITY);
            push_local(&mut t, &e.vertices, &k, *c);
        }
        t.build()
    }

    /// `∫_∂D φ_a φ_b ds`.
    pub fn boundary_mass_matrix(&self) -> CsrMatrix {
        let n = self.vertex_count();
        let mut t = TripletBuilder::new(n, n);
        for [a, b] in self.boundary_edges() {
            let [xa, ya] = self.coords(a);
            let [xb, yb] = self.coords(b);
            let len = ((xa - xb).powi(2) + (ya - yb).powi(2)).sqrt();
            t.push(a, a, len / 3.0);
            t.push(b, b, len / 3.0);
            t.push(a, b, len / 6.0);
            t.push(b, a, len / 6.0);
        }
        t.build()
    }

    fn assemble(&self, local: impl Fn(&Element) -> [[f64; 3]; 3]) -> CsrMatrix {
        let mut t = TripletBuilder::new(self.vertex_count(), self.vertex_count());
        for e in self.elements() {
            push_local(&mut t, &e.vertices, &local(&e), 1.0);
        }
        t.build()
    }

    /// Linear interpolation weights of the point `(x, y)`; zero weights are
    /// dropped. Points outside the closed unit square are rejected.
    pub fn locate(&self, x: f64, y: f64) -> Result<Vec<(usize, f64)>> {
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return Err(validation(format!("point ({x}, {y}) lies outside the unit square")));
        }
        let sx = x * self.nx as f64;
        let sy = y * self.ny as f64;
        let i = (sx.floor() as usize).min(self.nx - 1);
        let j = (sy.floor() as usize).min(self.ny - 1);
        let xi = sx - i as f64;
        let eta = sy - j as f64;
        let v00 = self.index(i, j);
        let v10 = self.index(i + 1, j);
        let v11 = self.index(i + 1, j + 1);
        let v01 = self.index(i, j + 1);
        let weights = if xi >= eta {
            [(v00, 1.0 - xi), (v10, xi - eta), (v11, eta)]
        } else {
            [(v00, 1.0 - eta), (v11, xi), (v01, eta - xi)]
        };
        Ok(weights.into_iter().filter(|&(_, w)| w.abs() > 1e-14).collect())
    }
}

pub(crate) fn push_local(t: &mut TripletBuilder, verts: &[usize; 3], k: &[[f64; 3]; 3], scale: f64) {
    for a in 0..3 {
        for b in 0..3 {
            t.push(verts[a], verts[b], scale * k[a][b]);
        }
    }
}

/// True when `theta` is symmetric positive definite.
pub fn is_spd(theta: &Tensor2) -> bool {
    let sym = (theta[0][1] - theta[1][0]).abs() <= 1e-12 * (theta[0][1].abs() + theta[1][0].abs() + 1.0);
    sym && theta[0][0] > 0.0 && theta[0][0] * theta[1][1] - theta[0][1] * theta[1][0] > 0.0
}

/// Anisotropy tensor with principal strengths `theta1`, `theta2` and
/// orientation angle `alpha`.
pub fn anisotropy(theta1: f64, theta2: f64, alpha: f64) -> Tensor2 {
    let (s, c) = alpha.sin_cos();
    let off = (theta1 - theta2) * s * c;
    [
        [theta1 * s * s + theta2 * c * c, off],
        [off, theta1 * c * c + theta2 * s * s],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_ordering() {
        let g = Grid2D::new(3, 2).unwrap();
        assert_eq!(g.vertex_count(), 12);
        assert_eq!(g.element_count(), 12);
        assert_eq!(g.elements().count(), 12);
        assert_eq!(g.coords(5), [1.0 / 3.0, 0.5]);
        assert_eq!(g.index(1, 1), 5);
        assert!(Grid2D::new(0, 2).is_err());
    }

    #[test]
    fn mass_integrates_one_and_stiffness_rows_vanish() {
        let g = Grid2D::new(4, 3).unwrap();
        let m = g.mass_matrix();
        let total: f64 = m.row_sums().sum();
        assert!((total - 1.0).abs() < 1e-14);
        let k = g.stiffness_matrix(&anisotropy(2.0, 0.5, 0.3));
        assert!(k.row_sums().amax() < 1e-13);
        assert!(k.is_symmetric(1e-14));
        let bm = g.boundary_mass_matrix();
        assert!((bm.row_sums().sum() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn stiffness_reproduces_dirichlet_energy_of_linear_field() {
        // u = 2x + 3y: ∫|∇u|² = 13
        let g = Grid2D::new(5, 4).unwrap();
        let u = g.interpolate(|x, y| 2.0 * x + 3.0 * y);
        let k = g.stiffness_matrix(&IDENTITY);
        assert!((u.dot(&k.mul_vec(&u)) - 13.0).abs() < 1e-12);
    }

    #[test]
    fn interpolation_weights_partition_unity() {
        let g = Grid2D::new(4, 4).unwrap();
        for &(x, y) in &[(0.0, 0.0), (1.0, 1.0), (0.33, 0.71), (0.5, 0.25), (0.9, 0.1)] {
            let w = g.locate(x, y).unwrap();
            let s: f64 = w.iter().map(|p| p.1).sum();
            assert!((s - 1.0).abs() < 1e-14);
            // reproduces linear functions exactly
            let f = g.interpolate(|a, b| 1.0 + a - 2.0 * b);
            let val: f64 = w.iter().map(|&(v, c)| c * f[v]).sum();
            assert!((val - (1.0 + x - 2.0 * y)).abs() < 1e-13);
        }
        assert_eq!(g.locate(0.25, 0.5).unwrap(), vec![(g.index(1, 2), 1.0)]);
        assert!(g.locate(1.1, 0.0).is_err());
    }

    #[test]
    fn anisotropy_is_spd_with_given_eigenvalues() {
        let t = anisotropy(2.0, 0.5, std::f64::consts::FRAC_PI_4);
        assert!(is_spd(&t));
        let tr = t[0][0] + t[1][1];
        let det = t[0][0] * t[1][1] - t[0][1] * t[1][0];
        assert!((tr - 2.5).abs() < 1e-14 && (det - 1.0).abs() < 1e-14);
        assert!(!is_spd(&[[1.0, 0.75], [0.75, 0.25]]));
    }
}
