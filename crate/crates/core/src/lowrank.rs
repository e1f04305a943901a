//! Randomized low-rank eigendecomposition of the data-space Hessian
//! `Ĥ_d = Γ_n^{-1/2} J Γ_pr Jᵀ Γ_n^{-1/2}`.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counters::Counter;
use crate::error::{check_len, validation, Error, Result};
use crate::forward::{ForwardModel, Linearization, NoiseModel};
use crate::linalg::{sorted_symmetric_eigen, symmetrize};
use crate::prior::{standard_normal, GaussianPrior};

/// Relative threshold on the diagonal of `R` below which the sketch is
/// considered rank deficient.
pub const QR_RANK_RTOL: f64 = 1e-12;

/// Eigenvalues below this are treated as round-off and clamped to zero.
pub const EIGEN_CLAMP: f64 = 1e-12;

/// How the eigenvalues beyond the retained `k` were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trailing {
    /// The complete remaining spectrum; bounds built from it are certified.
    Exact,
    /// Discarded sketch eigenvalues; bounds built from it are estimates.
    Estimate,
}

/// `Ĥ_d ≈ U_k Σ_k U_kᵀ` with the discarded spectrum kept for error bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankHessian {
    vectors: DMatrix<f64>,
    values: DVector<f64>,
    trailing: Vec<f64>,
    trailing_kind: Trailing,
    rank_deficient: bool,
}

impl LowRankHessian {
    /// Builds from explicit factors. Eigenvalues are sorted descending with
    /// vectors permuted alike and round-off negatives clamped.
    pub fn new(vectors: DMatrix<f64>, values: DVector<f64>, trailing: Vec<f64>, trailing_kind: Trailing) -> Result<Self> {
        check_len("eigenvalue list", values.len(), vectors.ncols())?;
        if values.iter().chain(&trailing).any(|v| !v.is_finite()) {
            return Err(validation("eigenvalues must be finite"));
        }
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        let vectors = DMatrix::from_columns(&order.iter().map(|&j| vectors.column(j)).collect::<Vec<_>>());
        let values = DVector::from_iterator(values.len(), order.iter().map(|&j| clamp(values[j])));
        let mut trailing: Vec<f64> = trailing.into_iter().map(clamp).collect();
        trailing.sort_by(|a, b| b.total_cmp(a));
        let vectors = if vectors.ncols() == 0 { DMatrix::zeros(vectors.nrows(), 0) } else { vectors };
        Ok(Self { vectors, values, trailing, trailing_kind, rank_deficient: false })
    }

    /// Exact decomposition of an explicit symmetric `Ĥ_d`, keeping `k` pairs.
    pub fn from_dense(h: &DMatrix<f64>, k: usize) -> Result<Self> {
        if !h.is_square() {
            return Err(validation("Hessian matrix must be square"));
        }
        if k > h.nrows() {
            return Err(validation(format!("rank {k} exceeds dimension {}", h.nrows())));
        }
        let (vals, vecs) = sorted_symmetric_eigen(&symmetrize(h));
        Self::new(
            vecs.columns(0, k).into_owned(),
            vals.rows(0, k).into_owned(),
            vals.iter().skip(k).copied().collect(),
            Trailing::Exact,
        )
    }

    pub fn d(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn k(&self) -> usize {
        self.values.len()
    }

    /// `U_k`, `d × k` with orthonormal columns.
    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    /// `λ_1 ≥ … ≥ λ_k ≥ 0`.
    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn trailing(&self) -> &[f64] {
        &self.trailing
    }

    pub fn trailing_kind(&self) -> Trailing {
        self.trailing_kind
    }

    /// True when the sketch had lower numerical rank than `k` requested.
    pub fn rank_deficient(&self) -> bool {
        self.rank_deficient
    }

    /// `Σ_{i>k} ln(1 + λ_i)` over the stored trailing spectrum.
    pub fn trailing_bound(&self) -> f64 {
        self.trailing.iter().map(|l| l.ln_1p()).sum::<f64>() + 0.0
    }

    /// Keep the leading `k` pairs, moving the rest into the trailing list.
    pub fn truncate(&self, k: usize) -> Self {
        let k = k.min(self.k());
        let mut trailing: Vec<f64> = self.values.iter().skip(k).copied().collect();
        trailing.extend_from_slice(&self.trailing);
        Self {
            vectors: self.vectors.columns(0, k).into_owned(),
            values: self.values.rows(0, k).into_owned(),
            trailing,
            trailing_kind: self.trailing_kind,
            rank_deficient: self.rank_deficient,
        }
    }

    /// Smallest `k` with `λ_{k+1} / λ_1 < rtol`, then [`truncate`](Self::truncate).
    pub fn truncate_adaptive(&self, rtol: f64) -> Self {
        let lead = self.values.get(0).copied().unwrap_or(0.0);
        let k = (0..self.k()).find(|&i| self.values[i] < rtol * lead).unwrap_or(self.k());
        self.truncate(k)
    }

    /// `U_k Σ_k U_kᵀ` as a dense matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let scaled = &self.vectors * DMatrix::from_diagonal(&self.values);
        scaled * self.vectors.transpose()
    }

    /// Writes `<stem>_eigenvalues.csv` and `<stem>_vectors.csv`
    /// (one line per eigenvector) into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        let (vals_path, vecs_path) = paths(dir, stem);
        let mut w = csv::Writer::from_path(&vals_path)?;
        w.write_record(["index", "eigenvalue", "kind"])?;
        for (i, v) in self.values.iter().enumerate() {
            w.serialize((i, v, "retained"))?;
        }
        let kind = match self.trailing_kind {
            Trailing::Exact => "trailing-exact",
            Trailing::Estimate => "trailing-estimate",
        };
        for (i, v) in self.trailing.iter().enumerate() {
            w.serialize((self.k() + i, v, kind))?;
        }
        if self.rank_deficient {
            w.serialize((self.k() + self.trailing.len(), 0.0, "rank-deficient"))?;
        }
        w.flush()?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&vecs_path)?;
        for col in self.vectors.column_iter() {
            w.write_record(col.iter().map(|x| format!("{x:e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the pair written by [`save`](Self::save) for `d` candidates.
    pub fn load(dir: &Path, stem: &str, d: usize) -> Result<Self> {
        let (vals_path, vecs_path) = paths(dir, stem);
        for p in [&vals_path, &vecs_path] {
            if !p.exists() {
                return Err(Error::MissingArtifact { path: p.clone(), stage: "offline" });
            }
        }
        let bad = |p: &PathBuf, reason: String| Error::Format { path: p.clone(), reason };
        let mut values = Vec::new();
        let mut trailing = Vec::new();
        let mut kind = Trailing::Exact;
        let mut rank_deficient = false;
        for rec in csv::Reader::from_path(&vals_path)?.deserialize::<(usize, f64, String)>() {
            let (_, v, tag) = rec?;
            match tag.as_str() {
                "retained" => values.push(v),
                "trailing-exact" => trailing.push(v),
                "trailing-estimate" => {
                    kind = Trailing::Estimate;
                    trailing.push(v)
                }
                "rank-deficient" => rank_deficient = true,
                other => return Err(bad(&vals_path, format!("unknown eigenvalue kind {other:?}"))),
            }
        }
        let mut cols = Vec::new();
        let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_path(&vecs_path)?;
        for rec in reader.records() {
            let rec = rec?;
            let col = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bad(&vecs_path, e.to_string()))?;
            if col.len() != d {
                return Err(bad(&vecs_path, format!("eigenvector of length {} for {d} candidates", col.len())));
            }
            cols.push(DVector::from_vec(col));
        }
        if cols.len() != values.len() {
            return Err(bad(&vecs_path, format!("{} eigenvectors for {} eigenvalues", cols.len(), values.len())));
        }
        let vectors = if cols.is_empty() { DMatrix::zeros(d, 0) } else { DMatrix::from_columns(&cols) };
        let mut lr = Self::new(vectors, DVector::from_vec(values), trailing, kind)?;
        lr.rank_deficient = rank_deficient;
        Ok(lr)
    }
}

fn paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{stem}_eigenvalues.csv")), dir.join(format!("{stem}_vectors.csv")))
}

fn clamp(v: f64) -> f64 {
    if v < EIGEN_CLAMP {
        v.max(0.0)
    } else {
        v
    }
}

/// Single-pass randomized eigensolver: sketch `Y = H Ω`, orthonormalize,
/// project `B = Qᵀ H Q`, and keep the leading `k` Ritz pairs. Uses exactly
/// `2(k + p)` applications of `op`, which must be symmetric.
pub fn randomized_eigs<F>(op: F, d: usize, k: usize, p: usize, seed: u64) -> Result<LowRankHessian>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>> + Sync,
{
    let l = k + p;
    if l > d {
        return Err(validation(format!("k + p = {l} exceeds dimension {d}")));
    }
    if l == 0 {
        return LowRankHessian::new(DMatrix::zeros(d, 0), DVector::zeros(0), Vec::new(), Trailing::Estimate);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega: Vec<DVector<f64>> = (0..l).map(|_| standard_normal(d, &mut rng)).collect();
    let y = apply_columns(&op, &omega, d)?;
    let qr = y.qr();
    let r_diag = qr.r().diagonal().map(f64::abs);
    let rank = r_diag.iter().filter(|&&x| x > QR_RANK_RTOL * r_diag.max()).count();
    let q = qr.q();
    let q_cols: Vec<DVector<f64>> = q.column_iter().map(|c| c.into_owned()).collect();
    let hq = apply_columns(&op, &q_cols, d)?;
    let b = symmetrize(&(q.transpose() * hq));
    let (vals, vecs) = sorted_symmetric_eigen(&b);
    let keep = k.min(rank);
    let u = &q * vecs.columns(0, keep);
    let mut lr = LowRankHessian::new(
        u,
        vals.rows(0, keep).into_owned(),
        vals.iter().skip(keep).copied().collect(),
        Trailing::Estimate,
    )?;
    lr.rank_deficient = keep < k;
    Ok(lr)
}

fn apply_columns<F>(op: &F, cols: &[DVector<f64>], d: usize) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>> + Sync,
{
    let out = cols.par_iter().map(op).collect::<Result<Vec<_>>>()?;
    for c in &out {
        check_len("operator output", c.len(), d)?;
    }
    Ok(DMatrix::from_columns(&out))
}

/// `Γ_n^{-1/2} J Γ_pr Jᵀ Γ_n^{-1/2} z`.
pub fn hd_action(
    lin: &dyn Linearization,
    counters: &crate::counters::Counters,
    prior: &dyn GaussianPrior,
    noise: &NoiseModel,
    z: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_len("data vector", z.len(), noise.dim())?;
    counters.incr(Counter::HdActions);
    let w = noise.whiten(z);
    let v = prior.apply_covariance(&lin.jacobian_transpose_action(&w)?)?;
    Ok(noise.whiten(&lin.jacobian_action(&v)?))
}

/// Dense `Ĥ_d` by applying [`hd_action`] to every unit vector.
pub fn assemble_hd(
    lin: &dyn Linearization,
    counters: &crate::counters::Counters,
    prior: &dyn GaussianPrior,
    noise: &NoiseModel,
) -> Result<DMatrix<f64>> {
    let d = noise.dim();
    let cols = (0..d)
        .into_par_iter()
        .map(|i| hd_action(lin, counters, prior, noise, &DVector::from_fn(d, |j, _| (i == j) as u8 as f64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_columns(&cols))
}

/// Linearize `model` at `m` and run [`randomized_eigs`] over [`hd_action`].
pub fn build_lowrank(
    model: &dyn ForwardModel,
    prior: &dyn GaussianPrior,
    noise: &NoiseModel,
    m: &DVector<f64>,
    k: usize,
    p: usize,
    seed: u64,
) -> Result<LowRankHessian> {
    check_len("noise model", noise.dim(), model.candidate_count())?;
    let lin = model.linearize(m)?;
    build_lowrank_at(lin.as_ref(), model.counters(), prior, noise, k, p, seed)
}

/// [`build_lowrank`] for an existing linearization.
pub fn build_lowrank_at(
    lin: &dyn Linearization,
    counters: &crate::counters::Counters,
    prior: &dyn GaussianPrior,
    noise: &NoiseModel,
    k: usize,
    p: usize,
    seed: u64,
) -> Result<LowRankHessian> {
    randomized_eigs(|z| hd_action(lin, counters, prior, noise, z), noise.dim(), k, p, seed)
}
