//! Design optimizers over a [`Criterion`]: standard and swapping greedy,
//! exhaustive search and random baselines.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{approx_eig_linear, dense_eig, la_eig, la_eig_reduced, TrainingSample};
use crate::design::Design;
use crate::error::{validation, Error, Result};
use crate::lowrank::LowRankHessian;

/// Strict improvement needed to accept a swap.
pub const SWAP_TOL: f64 = 1e-12;

/// Largest search space [`brute_force`] will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

/// A pure, deterministic design objective.
pub trait Criterion: Sync {
    /// Number of candidates.
    fn d(&self) -> usize;
    fn evaluate(&self, design: &Design) -> Result<f64>;
}

impl<C: Criterion + ?Sized> Criterion for Box<C> {
    fn d(&self) -> usize {
        (**self).d()
    }

    fn evaluate(&self, design: &Design) -> Result<f64> {
        (**self).evaluate(design)
    }
}

/// Wraps a criterion and counts evaluations.
#[derive(Debug)]
pub struct Counted<C> {
    inner: C,
    count: AtomicU64,
}

impl<C: Criterion> Counted<C> {
    pub fn new(inner: C) -> Self {
        Self { inner, count: AtomicU64::new(0) }
    }

    pub fn evaluations(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }

    pub fn into_inner(self) -> C {
        self.inner
    }
}

impl<C: Criterion> Criterion for Counted<C> {
    fn d(&self) -> usize {
        self.inner.d()
    }

    fn evaluate(&self, design: &Design) -> Result<f64> {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.evaluate(design)
    }
}

/// `½ logdet(I + W U Σ Uᵀ Wᵀ)`.
#[derive(Debug, Clone, Copy)]
pub struct LowRankCriterion<'a>(pub &'a LowRankHessian);

impl Criterion for LowRankCriterion<'_> {
    fn d(&self) -> usize {
        self.0.d()
    }

    fn evaluate(&self, design: &Design) -> Result<f64> {
        approx_eig_linear(self.0, design)
    }
}

/// `½ logdet(I + W H Wᵀ)` for an explicit matrix.
#[derive(Debug, Clone, Copy)]
pub struct DenseCriterion<'a>(pub &'a DMatrix<f64>);

impl Criterion for DenseCriterion<'_> {
    fn d(&self) -> usize {
        self.0.nrows()
    }

    fn evaluate(&self, design: &Design) -> Result<f64> {
        dense_eig(self.0, design)
    }
}

/// Sample-averaged Laplace EIG, with or without the prior term.
#[derive(Debug, Clone, Copy)]
pub struct LaplaceCriterion<'a> {
    pub samples: &'a [TrainingSample],
    pub reduced: bool,
}

impl Criterion for LaplaceCriterion<'_> {
    fn d(&self) -> usize {
        self.samples.first().map_or(0, |s| s.lowrank.d())
    }

    fn evaluate(&self, design: &Design) -> Result<f64> {
        if self.reduced {
            la_eig_reduced(self.samples, design)
        } else {
            la_eig(self.samples, design)
        }
    }
}

/// Any closure as a criterion.
pub struct FnCriterion<F> {
    pub d: usize,
    pub f: F,
}

impl<F: Fn(&Design) -> Result<f64> + Sync> Criterion for FnCriterion<F> {
    fn d(&self) -> usize {
        self.d
    }

    fn evaluate(&self, design: &Design) -> Result<f64> {
        (self.f)(design)
    }
}

/// One committed change to the design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub sweep: Option<usize>,
    pub position: Option<usize>,
    pub removed: Option<usize>,
    pub added: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub steps: Vec<StepRecord>,
    pub sweeps: usize,
    pub evaluations: u64,
    pub hit_max_sweeps: bool,
}

impl SelectionTrace {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for s in &self.steps {
            w.serialize(s)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub design: Design,
    pub value: f64,
    pub trace: SelectionTrace,
}

/// `l_i = ‖row i of U‖²`.
pub fn leverage_scores(u: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(u.nrows(), u.row_iter().map(|r| r.norm_squared()))
}

/// How per-sample eigenvector matrices are combined for initialization.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeverageInit {
    /// Scores of the entrywise sum `Σ_i U^i` (sign-dependent).
    #[default]
    SummedVectors,
    /// Sum of the per-sample scores `Σ_i l(U^i)` (sign-free).
    SummedScores,
}

/// Combined leverage scores over several `d × k_i` eigenvector matrices.
pub fn combined_leverage(us: &[&DMatrix<f64>], rule: LeverageInit) -> Result<DVector<f64>> {
    let first = us.first().ok_or_else(|| validation("leverage scores need at least one matrix"))?;
    let d = first.nrows();
    if us.iter().any(|u| u.nrows() != d) {
        return Err(validation("eigenvector matrices disagree on the candidate count"));
    }
    match rule {
        LeverageInit::SummedScores => Ok(us.iter().map(|u| leverage_scores(u)).fold(DVector::zeros(d), |a, b| a + b)),
        LeverageInit::SummedVectors => {
            let k = us.iter().map(|u| u.ncols()).max().unwrap_or(0);
            let mut sum = DMatrix::zeros(d, k);
            for u in us {
                let mut view = sum.columns_mut(0, u.ncols());
                view += *u;
            }
            Ok(leverage_scores(&sum))
        }
    }
}

/// The `r` highest scores, ties to the lower index.
pub fn top_r(scores: &DVector<f64>, r: usize) -> Result<Design> {
    if r > scores.len() {
        return Err(validation(format!("cannot pick {r} of {} candidates", scores.len())));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(r);
    Design::new(idx, scores.len())
}

/// Evaluates `f(c)` for every candidate and returns the best, ties to the
/// earliest entry of `candidates` (which callers keep in increasing order).
fn argmax(crit: &dyn Criterion, candidates: &[usize], make: impl Fn(usize) -> Result<Design> + Sync) -> Result<(usize, f64, Vec<f64>)> {
    let values = candidates
        .par_iter()
        .map(|&c| crit.evaluate(&make(c)?))
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::Numerical { context: format!("criterion at candidate {}", candidates[i]), residual: *v });
        }
        if *v > values[best] {
            best = i;
        }
    }
    Ok((candidates[best], values[best], values))
}

/// Adds the best remaining candidate `r` times, starting from the empty set.
pub fn standard_greedy(crit: &dyn Criterion, r: usize) -> Result<Selection> {
    let d = crit.d();
    if r > d {
        return Err(validation(format!("cannot place {r} sensors among {d} candidates")));
    }
    let mut design = Design::empty(d);
    let mut value = crit.evaluate(&design)?;
    let mut trace = SelectionTrace::default();
    for step in 1..=r {
        let remaining: Vec<usize> = (0..d).filter(|&c| !design.contains(c)).collect();
        let (best, v, _) = argmax(crit, &remaining, |c| design.with(c))?;
        trace.evaluations += remaining.len() as u64;
        design = design.with(best)?;
        value = v;
        trace.steps.push(StepRecord { step, sweep: None, position: None, removed: None, added: best, value });
    }
    Ok(Selection { design, value, trace })
}

/// Starting from `init`, sweeps the positions and replaces each sensor by
/// the best of itself and the unused candidates when that strictly improves
/// the criterion. Stops after a sweep without changes or `max_sweeps` sweeps.
pub fn swapping_greedy(crit: &dyn Criterion, init: Design, max_sweeps: usize) -> Result<Selection> {
    let d = crit.d();
    if init.d() != d {
        return Err(validation(format!("initial design over {} candidates, criterion over {d}", init.d())));
    }
    if max_sweeps == 0 {
        return Err(validation("max_sweeps must be positive"));
    }
    let r = init.len();
    let mut design = init;
    let mut value = f64::NAN;
    let mut trace = SelectionTrace::default();
    let mut step = 0;
    if r == 0 || r == d {
        value = crit.evaluate(&design)?;
        trace.evaluations = 1;
        return Ok(Selection { design, value, trace });
    }
    loop {
        trace.sweeps += 1;
        let mut changed = false;
        for pos in 0..r {
            let current = design.indices()[pos];
            let candidates: Vec<usize> = (0..d).filter(|&c| c == current || !design.contains(c)).collect();
            let (best, best_value, values) = argmax(crit, &candidates, |c| design.replaced(pos, c))?;
            trace.evaluations += candidates.len() as u64;
            let cur_value = values[candidates.iter().position(|&c| c == current).unwrap()];
            value = cur_value;
            if best != current && best_value > cur_value + SWAP_TOL {
                design = design.replaced(pos, best)?;
                value = best_value;
                changed = true;
                step += 1;
                trace.steps.push(StepRecord {
                    step,
                    sweep: Some(trace.sweeps),
                    position: Some(pos),
                    removed: Some(current),
                    added: best,
                    value,
                });
            }
        }
        if !changed {
            break;
        }
        if trace.sweeps >= max_sweeps {
            trace.hit_max_sweeps = true;
            break;
        }
    }
    Ok(Selection { design, value, trace })
}

/// Every `r`-subset ranked by value, descending, ties in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub designs: Vec<(Vec<usize>, f64)>,
}

impl Ranking {
    /// `1 +` the number of designs better than `value` by more than `1e-12`.
    pub fn rank_of_value(&self, value: f64) -> usize {
        1 + self.designs.partition_point(|(_, v)| *v > value + SWAP_TOL)
    }

    /// Rank of a design by its own value in this enumeration.
    pub fn rank_of(&self, design: &Design) -> Option<usize> {
        let key = design.sorted();
        self.designs.iter().find(|(idx, _)| *idx == key).map(|(_, v)| self.rank_of_value(*v))
    }

    pub fn best(&self) -> Option<&(Vec<usize>, f64)> {
        self.designs.first()
    }
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k) as u128;
    let mut c: u128 = 1;
    for i in 0..k {
        c = c.saturating_mul(n as u128 - i) / (i + 1);
    }
    c
}

/// Exhaustive search over all `C(d, r)` designs.
pub fn brute_force(crit: &dyn Criterion, r: usize) -> Result<Ranking> {
    let d = crit.d();
    let total = binomial(d, r);
    if total > BRUTE_FORCE_LIMIT {
        return Err(Error::Capability(format!("C({d}, {r}) = {total} designs exceeds {BRUTE_FORCE_LIMIT}")));
    }
    if r > d {
        return Err(validation(format!("cannot place {r} sensors among {d} candidates")));
    }
    let combos: Vec<Vec<usize>> = (0..d).combinations(r).collect();
    let values = combos
        .par_iter()
        .map(|c| crit.evaluate(&Design::new(c.clone(), d)?))
        .collect::<Result<Vec<f64>>>()?;
    let mut designs: Vec<(Vec<usize>, f64)> = combos.into_iter().zip(values).collect();
    designs.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(Ranking { designs })
}

/// `count` uniformly random `r`-subsets; with `unique`, no subset repeats.
pub fn random_designs(d: usize, r: usize, count: usize, seed: u64, unique: bool) -> Result<Vec<Design>> {
    if r > d {
        return Err(validation(format!("cannot place {r} sensors among {d} candidates")));
    }
    if unique && (count as u128) > binomial(d, r) {
        return Err(validation(format!("only {} distinct designs exist", binomial(d, r))));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let idx = rand::seq::index::sample(&mut rng, d, r).into_vec();
        if unique {
            let mut key = idx.clone();
            key.sort_unstable();
            if !seen.insert(key) {
                continue;
            }
        }
        out.push(Design::new(idx, d)?);
    }
    Ok(out)
}
