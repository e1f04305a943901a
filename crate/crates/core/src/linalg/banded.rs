//! Direct solvers for banded matrices. Row-major vertex numbering on an
//! `nx × ny` grid gives bandwidth `nx + 2`, so band storage is both compact
//! and exact (no fill outside the band).

use super::sparse::CsrMatrix;

/// `A = L Lᵀ` for a symmetric positive-definite banded matrix.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    // row i holds L[i, i-bw ..= i] at offsets 0..=bw
    l: Vec<f64>,
}

impl BandedCholesky {
    /// Factor `a`; only its lower triangle is read. Returns the offending
    /// pivot when the matrix is not positive definite.
    pub fn factor(a: &CsrMatrix) -> Result<Self, f64> {
        let n = a.nrows();
        let (kl, _) = a.bandwidths();
        let bw = kl;
        let w = bw + 1;
        let mut l = vec![0.0; n * w];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    l[i * w + (j + bw - i)] += v;
                }
            }
        }
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut s = l[i * w + (j + bw - i)];
                let kmin = lo.max(j.saturating_sub(bw));
                for k in kmin..j {
                    s -= l[i * w + (k + bw - i)] * l[j * w + (k + bw - j)];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(s);
                    }
                    l[i * w + bw] = s.sqrt();
                } else {
                    l[i * w + (j + bw - i)] = s / l[j * w + bw];
                }
            }
        }
        Ok(Self { n, bw, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.l[i * (self.bw + 1) + (j + self.bw - i)]
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.solve_lower_in_place(b);
        self.solve_lower_transpose_in_place(b);
    }

    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        for i in 0..self.n {
            let mut s = b[i];
            for k in i.saturating_sub(self.bw)..i {
                s -= self.at(i, k) * b[k];
            }
            b[i] = s / self.at(i, i);
        }
    }

    pub fn solve_lower_transpose_in_place(&self, b: &mut [f64]) {
        for i in (0..self.n).rev() {
            let x = b[i] / self.at(i, i);
            b[i] = x;
            for k in i.saturating_sub(self.bw)..i {
                b[k] -= self.at(i, k) * x;
            }
        }
    }

    /// `y = L x`.
    pub fn mul_lower(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (i.saturating_sub(self.bw)..=i).map(|k| self.at(i, k) * x[k]).sum())
            .collect()
    }

    /// `y = Lᵀ x`.
    pub fn mul_lower_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            for k in i.saturating_sub(self.bw)..=i {
                y[k] += self.at(i, k) * x[i];
            }
        }
        y
    }
}

/// `P A = L U` with partial pivoting, stored LAPACK-`gbtrf` style: the
/// upper factor gains `kl` extra superdiagonals from row interchanges.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    // row i holds columns i-kl ..= i+ku+kl at offsets 0..width
    ab: Vec<f64>,
    piv: Vec<usize>,
}

impl BandedLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self, f64> {
        let n = a.nrows();
        let (kl, ku) = a.bandwidths();
        let width = 2 * kl + ku + 1;
        let mut lu = Self { n, kl, ku, ab: vec![0.0; n * width], piv: vec![0; n] };
        for i in 0..n {
            for (j, v) in a.row(i) {
                *lu.at_mut(i, j) += v;
            }
        }
        let ucols = ku + kl;
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = lu.at(k, k).abs();
            for i in k + 1..=last {
                let v = lu.at(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            lu.piv[k] = p;
            if best == 0.0 || !best.is_finite() {
                return Err(best);
            }
            let jmax = (k + ucols).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let t = lu.at(k, j);
                    *lu.at_mut(k, j) = lu.at(p, j);
                    *lu.at_mut(p, j) = t;
                }
            }
            let pivot = lu.at(k, k);
            for i in k + 1..=last {
                let l = lu.at(i, k) / pivot;
                *lu.at_mut(i, k) = l;
                if l != 0.0 {
                    for j in k + 1..=jmax {
                        let u = lu.at(k, j);
                        *lu.at_mut(i, j) -= l * u;
                    }
                }
            }
        }
        Ok(lu)
    }

    #[inline]
    fn width(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.ab[i * self.width() + (j + self.kl - i)]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        let w = self.width();
        &mut self.ab[i * w + (j + self.kl - i)]
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + self.kl).min(n - 1) {
                    b[i] -= self.at(i, k) * bk;
                }
            }
        }
        let ucols = self.ku + self.kl;
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..=(i + ucols).min(n - 1) {
                s -= self.at(i, j) * b[j];
            }
            b[i] = s / self.at(i, i);
        }
    }

    pub fn solve_transpose_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let ucols = self.ku + self.kl;
        // Uᵀ y = b
        for i in 0..n {
            let y = b[i] / self.at(i, i);
            b[i] = y;
            for j in i + 1..=(i + ucols).min(n - 1) {
                b[j] -= self.at(i, j) * y;
            }
        }
        // then the unit-lower factors and interchanges in reverse
        for k in (0..n).rev() {
            let mut s = b[k];
            for i in k + 1..=(k + self.kl).min(n - 1) {
                s -= self.at(i, k) * b[i];
            }
            b[k] = s;
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::TripletBuilder;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_banded(n: usize, kl: usize, ku: usize, seed: u64, spd: bool) -> CsrMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = TripletBuilder::new(n, n);
        let mut dense = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                dense[(i, j)] = rng.random_range(-1.0..1.0);
            }
        }
        if spd {
            dense = &dense + dense.transpose();
            for i in 0..n {
                dense[(i, i)] = 2.0 * (kl as f64 + 2.0);
            }
        }
        for i in 0..n {
            for j in 0..n {
                if dense[(i, j)] != 0.0 {
                    t.push(i, j, dense[(i, j)]);
                }
            }
        }
        t.build()
    }

    #[test]
    fn lu_matches_dense_solve_both_ways() {
        let a = random_banded(40, 3, 5, 7, false);
        let dense = a.to_dense();
        let lu = BandedLu::factor(&a).unwrap();
        let b = DVector::from_fn(40, |i, _| (i as f64).sin());
        let mut x = b.as_slice().to_vec();
        lu.solve_in_place(&mut x);
        let expected = dense.clone().lu().solve(&b).unwrap();
        assert!((DVector::from_vec(x) - &expected).amax() < 1e-10 * expected.amax());
        let mut xt = b.as_slice().to_vec();
        lu.solve_transpose_in_place(&mut xt);
        let expected_t = dense.transpose().lu().solve(&b).unwrap();
        assert!((DVector::from_vec(xt) - &expected_t).amax() < 1e-10 * expected_t.amax());
    }

    #[test]
    fn cholesky_matches_dense_and_factor_products() {
        let a = random_banded(30, 4, 4, 11, true);
        let dense = a.to_dense();
        let ch = BandedCholesky::factor(&a).unwrap();
        let b = DVector::from_fn(30, |i, _| 1.0 + i as f64);
        let mut x = b.as_slice().to_vec();
        ch.solve_in_place(&mut x);
        let expected = dense.clone().cholesky().unwrap().solve(&b);
        assert!((DVector::from_vec(x) - &expected).amax() < 1e-12 * expected.amax());
        // L Lᵀ b reproduces A b
        let llt = ch.mul_lower(&ch.mul_lower_transpose(b.as_slice()));
        let ab = &dense * &b;
        assert!((DVector::from_vec(llt) - &ab).amax() < 1e-12 * ab.amax());
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut t = TripletBuilder::new(2, 2);
        t.push(0, 0, 1.0);
        t.push(0, 1, 2.0);
        t.push(1, 0, 2.0);
        t.push(1, 1, 1.0);
        assert!(BandedCholesky::factor(&t.build()).is_err());
    }
}
