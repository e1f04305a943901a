//! Expected-information-gain criteria and reference estimators.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counters::{CounterSnapshot, Counters};
use crate::derive_seed;
use crate::design::Design;
use crate::error::{check_len, validation, Error, Result};
use crate::forward::{ForwardModel, Linearization, NoiseModel};
use crate::linalg::{logdet_spd, sorted_symmetric_eigen, symmetrize};
use crate::lowrank::{build_lowrank_at, hd_action, randomized_eigs, LowRankHessian, EIGEN_CLAMP};
use crate::map::{find_map, MapResult, NewtonSettings};
use crate::prior::{standard_normal, GaussianPrior};

/// Largest design for which dense `r × r` paths are attempted.
pub const MAX_DENSE_DESIGN: usize = 2000;

/// Budget guard for nested Monte Carlo: total forward solves.
pub const DLMC_MAX_SOLVES: usize = 100_000;

/// Budget guard for nested Monte Carlo: outer × inner likelihood evaluations.
pub const DLMC_MAX_PAIRS: usize = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EigMode {
    LinearExact,
    LinearLowrank,
    LaMap,
    LaFixedMap,
    LaPriorSample,
    Dlmc,
}

/// Where the Laplace approximation of each training sample is centered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LaMode {
    /// MAP point for all candidates, reused for every design.
    FixedMap,
    /// The prior draw itself.
    PriorSample,
    /// MAP point recomputed for every design.
    Map,
}

impl LaMode {
    pub fn eig_mode(self) -> EigMode {
        match self {
            LaMode::FixedMap => EigMode::LaFixedMap,
            LaMode::PriorSample => EigMode::LaPriorSample,
            LaMode::Map => EigMode::LaMap,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounters {
    pub criterion_evaluations: u64,
    pub operator_actions: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigResult {
    pub design: Design,
    pub value: f64,
    pub mode: EigMode,
    pub bound: Option<f64>,
    pub counters: EvalCounters,
}

/// One prior draw with its data, linearization and prior-misfit term.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub m: DVector<f64>,
    /// Data at all `d` candidates.
    pub y: DVector<f64>,
    /// Where the Laplace approximation is centered.
    pub m_ref: DVector<f64>,
    pub lowrank: LowRankHessian,
    /// `½‖m_ref − m_pr‖²_{Γ_pr⁻¹}`.
    pub prior_term: f64,
}

/// `½ logdet(I + W U Σ Uᵀ Wᵀ)`.
pub fn approx_eig_linear(lr: &LowRankHessian, design: &Design) -> Result<f64> {
    let g = restricted_matrix(lr, design)?;
    half_logdet_plus_identity(g)
}

/// `½ logdet(I + W H Wᵀ)` for an explicit `H`.
pub fn dense_eig(h: &DMatrix<f64>, design: &Design) -> Result<f64> {
    check_design(design, h.nrows())?;
    let idx = design.indices();
    let g = DMatrix::from_fn(idx.len(), idx.len(), |a, b| h[(idx[a], idx[b])]);
    half_logdet_plus_identity(symmetrize(&g))
}

fn half_logdet_plus_identity(mut g: DMatrix<f64>) -> Result<f64> {
    for i in 0..g.nrows() {
        g[(i, i)] += 1.0;
    }
    logdet_spd(&g)
        .map(|l| 0.5 * l)
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Numerical { context: "logdet of I + W H Wᵀ".into(), residual: f64::NAN })
}

fn check_design(design: &Design, d: usize) -> Result<()> {
    if design.d() != d {
        return Err(validation(format!("design over {} candidates used with {d} candidates", design.d())));
    }
    Ok(())
}

/// `(W U) Σ (W U)ᵀ`.
fn restricted_matrix(lr: &LowRankHessian, design: &Design) -> Result<DMatrix<f64>> {
    check_design(design, lr.d())?;
    let u = lr.vectors();
    let wu = DMatrix::from_fn(design.len(), lr.k(), |a, j| u[(design.indices()[a], j)]);
    let scaled = &wu * DMatrix::from_diagonal(lr.values());
    Ok(symmetrize(&(scaled * wu.transpose())))
}

/// Eigenvalues of `(W U) Σ (W U)ᵀ`, descending, round-off negatives clamped.
pub fn restricted_eigenvalues(lr: &LowRankHessian, design: &Design) -> Result<Vec<f64>> {
    let g = restricted_matrix(lr, design)?;
    Ok(sorted_symmetric_eigen(&g).0.iter().map(|&l| if l < EIGEN_CLAMP { 0.0 } else { l }).collect())
}

/// `½ Σ_{i>k} ln(1 + λ_i)` over the stored trailing spectrum.
pub fn eig_gap_bound(lr: &LowRankHessian) -> f64 {
    0.5 * lr.trailing_bound()
}

/// `½ logdet(I + W Ĥ_d Wᵀ)` with `W Ĥ_d Wᵀ` assembled from `r` Hessian actions.
pub fn exact_eig_linear(
    lin: &dyn Linearization,
    counters: &Counters,
    prior: &dyn GaussianPrior,
    noise: &NoiseModel,
    design: &Design,
) -> Result<f64> {
    half_logdet_plus_identity(restricted_hd(lin, counters, prior, noise, design)?)
}

fn restricted_hd(
    lin: &dyn Linearization,
    counters: &Counters,
    prior: &dyn GaussianPrior,
    noise: &NoiseModel,
    design: &Design,
) -> Result<DMatrix<f64>> {
    check_design(design, noise.dim())?;
    if design.len() > MAX_DENSE_DESIGN {
        return Err(Error::Capability(format!(
            "dense restricted Hessian of size {} exceeds {MAX_DENSE_DESIGN}",
            design.len()
        )));
    }
    let d = noise.dim();
    let cols = design
        .indices()
        .par_iter()
        .map(|&s| {
            let e = DVector::from_fn(d, |j, _| if j == s { 1.0 } else { 0.0 });
            design.select(&hd_action(lin, counters, prior, noise, &e)?)
        })
        .collect::<Result<Vec<_>>>()?;
    if cols.is_empty() {
        return Ok(DMatrix::zeros(0, 0));
    }
    Ok(symmetrize(&DMatrix::from_columns(&cols)))
}

fn eigen_information(lambdas: &[f64]) -> f64 {
    lambdas.iter().map(|&l| l.ln_1p() - l / (1.0 + l)).sum::<f64>()
}

/// Laplace-approximation EIG averaged over training samples:
/// `(1/N) Σ_i [½ Σ_j (ln(1+λ_j) − λ_j/(1+λ_j)) + prior_term_i]`.
pub fn la_eig(samples: &[TrainingSample], design: &Design) -> Result<f64> {
    let reduced = la_eig_reduced(samples, design)?;
    Ok(reduced + samples.iter().map(|s| s.prior_term).sum::<f64>() / samples.len() as f64)
}

/// [`la_eig`] without the design-independent prior term.
pub fn la_eig_reduced(samples: &[TrainingSample], design: &Design) -> Result<f64> {
    if samples.is_empty() {
        return Err(validation("Laplace EIG needs at least one training sample"));
    }
    let terms = samples
        .iter()
        .map(|s| Ok(0.5 * eigen_information(&restricted_eigenvalues(&s.lowrank, design)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(terms.iter().sum::<f64>() / samples.len() as f64)
}

/// Settings for generating training samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSettings {
    pub count: usize,
    pub k: usize,
    pub p: usize,
    pub seed: u64,
    pub newton: NewtonSettings,
}

/// Prior draws `m_i`, data `y_i = F(m_i) + ε_i` at all candidates, and a
/// low-rank Hessian at the point selected by `mode`.
///
/// Returns the MAP results as well when `mode` needs them.
pub fn generate_samples(
    model: &dyn ForwardModel,
    prior: &dyn GaussianPrior,
    noise: &NoiseModel,
    mode: LaMode,
    settings: &SampleSettings,
) -> Result<(Vec<TrainingSample>, Vec<MapResult>)> {
    check_len("noise model", noise.dim(), model.candidate_count())?;
    if settings.count == 0 {
        return Err(validation("at least one training sample is required"));
    }
    let out = (0..settings.count)
        .into_par_iter()
        .map(|i| {
            let i = i as u64;
            let (m, y) = synthesize(model, prior, noise, derive_seed(settings.seed, 2 * i), derive_seed(settings.seed, 2 * i + 1))?;
            let (m_ref, map) = match mode {
                LaMode::PriorSample => (m.clone(), None),
                LaMode::FixedMap | LaMode::Map => {
                    let r = find_map(model, prior, noise, &y, &Design::full(noise.dim()), &settings.newton, None)?;
                    (r.m_map.clone(), Some(r))
                }
            };
            let lin = model.linearize(&m_ref)?;
            let lowrank = build_lowrank_at(
                lin.as_ref(),
                model.counters(),
                prior,
                noise,
                settings.k,
                settings.p,
                derive_seed(settings.seed ^ 0x5eed, i),
            )?;
            let prior_term = 0.5 * prior.prior_norm_sq(&(&m_ref - prior.mean()))?;
            Ok((TrainingSample { m, y, m_ref, lowrank, prior_term }, map))
        })
        .collect::<Result<Vec<_>>>()?;
    let (samples, maps): (Vec<_>, Vec<_>) = out.into_iter().unzip();
    Ok((samples, maps.into_iter().flatten().collect()))
}

/// A prior draw and its noisy data at all candidates.
pub fn synthesize(
    model: &dyn ForwardModel,
    prior: &dyn GaussianPrior,
    noise: &NoiseModel,
    sample_seed: u64,
    noise_seed: u64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let m = prior.sample(sample_seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let eps = standard_normal(noise.dim(), &mut rng).component_mul(noise.sigma());
    let y = model.forward_map(&m)? + eps;
    Ok((m, y))
}

/// Laplace EIG with the MAP point and Hessian recomputed for `design`.
/// Costs one MAP solve and `r` Hessian actions per sample.
pub fn la_eig_map(
    model: &dyn ForwardModel,
    prior: &dyn GaussianPrior,
    noise: &NoiseModel,
    samples: &[TrainingSample],
    design: &Design,
    newton: &NewtonSettings,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(validation("Laplace EIG needs at least one training sample"));
    }
    let terms = samples
        .par_iter()
        .map(|s| {
            let y = design.select(&s.y)?;
            let r = find_map(model, prior, noise, &y, design, newton, Some(&s.m_ref))?;
            let lin = model.linearize(&r.m_map)?;
            let g = restricted_hd(lin.as_ref(), model.counters(), prior, noise, design)?;
            let lambdas: Vec<f64> = sorted_symmetric_eigen(&g).0.iter().map(|&l| l.max(0.0)).collect();
            let prior_term = 0.5 * prior.prior_norm_sq(&(&r.m_map - prior.mean()))?;
            Ok(0.5 * eigen_information(&lambdas) + prior_term)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(terms.iter().sum::<f64>() / samples.len() as f64)
}

/// Forward evaluations at prior draws, reusable across designs so that
/// design comparisons share common random numbers.
#[derive(Debug, Clone)]
pub struct DlmcEnsemble {
    outer: Vec<DVector<f64>>,
    outer_noise: Vec<DVector<f64>>,
    inner: Vec<DVector<f64>>,
}

impl DlmcEnsemble {
    pub fn build(
        model: &dyn ForwardModel,
        prior: &dyn GaussianPrior,
        n_outer: usize,
        n_inner: usize,
        seed: u64,
    ) -> Result<Self> {
        if n_outer == 0 || n_inner == 0 {
            return Err(validation("nested Monte Carlo needs positive sample counts"));
        }
        if n_outer + n_inner > DLMC_MAX_SOLVES || n_outer.saturating_mul(n_inner) > DLMC_MAX_PAIRS {
            return Err(Error::Capability(format!(
                "nested Monte Carlo with {n_outer} × {n_inner} samples exceeds the desk-scale budget"
            )));
        }
        let d = model.candidate_count();
        let draw = |stream: u64, i: usize| -> Result<DVector<f64>> {
            model.forward_map(&prior.sample(derive_seed(seed ^ stream, i as u64))?)
        };
        let outer = (0..n_outer).into_par_iter().map(|i| draw(0x0a, i)).collect::<Result<Vec<_>>>()?;
        let inner = (0..n_inner).into_par_iter().map(|i| draw(0x1b, i)).collect::<Result<Vec<_>>>()?;
        let outer_noise = (0..n_outer)
            .map(|i| standard_normal(d, &mut ChaCha8Rng::seed_from_u64(derive_seed(seed ^ 0x2c, i as u64))))
            .collect();
        Ok(Self { outer, outer_noise, inner })
    }

    pub fn n_outer(&self) -> usize {
        self.outer.len()
    }

    pub fn n_inner(&self) -> usize {
        self.inner.len()
    }

    /// Estimate and its Monte Carlo standard error.
    pub fn evaluate_with_error(&self, noise: &NoiseModel, design: &Design) -> Result<(f64, f64)> {
        check_design(design, noise.dim())?;
        if design.is_empty() {
            return Ok((0.0, 0.0));
        }
        let sigma = noise.restrict(design)?;
        let inner: Vec<DVector<f64>> =
            self.inner.iter().map(|f| design.select(f)).collect::<Result<_>>()?;
        let ln_inner = (self.inner.len() as f64).ln();
        let terms: Vec<f64> = self
            .outer
            .par_iter()
            .zip(&self.outer_noise)
            .map(|(f, xi)| {
                let xi = design.select(xi)?;
                let y = design.select(f)? + xi.component_mul(&sigma);
                let own = -0.5 * xi.norm_squared();
                let lls: Vec<f64> = inner
                    .iter()
                    .map(|g| -0.5 * (&y - g).component_div(&sigma).norm_squared())
                    .collect();
                Ok(own - (log_sum_exp(&lls) - ln_inner))
            })
            .collect::<Result<_>>()?;
        let n = terms.len() as f64;
        let mean = terms.iter().sum::<f64>() / n;
        let var = terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        if !mean.is_finite() {
            return Err(Error::Numerical { context: "nested Monte Carlo estimate".into(), residual: mean });
        }
        Ok((mean, (var / n).sqrt()))
    }

    pub fn evaluate(&self, noise: &NoiseModel, design: &Design) -> Result<f64> {
        Ok(self.evaluate_with_error(noise, design)?.0)
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Double-loop Monte Carlo EIG with independent outer and inner draws.
pub fn dlmc_eig(
    model: &dyn ForwardModel,
    prior: &dyn GaussianPrior,
    noise: &NoiseModel,
    design: &Design,
    n_outer: usize,
    n_inner: usize,
    seed: u64,
) -> Result<f64> {
    check_len("noise model", noise.dim(), model.candidate_count())?;
    DlmcEnsemble::build(model, prior, n_outer, n_inner, seed)?.evaluate(noise, design)
}

/// Pointwise variance of the Laplace posterior for `design`, linearized at
/// `lin`. A parameter-space randomized eigendecomposition of
/// `Lᵀ Jᵀ Wᵀ Γ_n⁻¹ W J L` (with `Γ_pr = L Lᵀ`) gives
/// `diag(Γ_pr) − Σ_j λ_j/(1+λ_j) (L v_j)²`.
#[allow(clippy::too_many_arguments)]
pub fn posterior_pointwise_variance(
    prior: &dyn GaussianPrior,
    lin: &dyn Linearization,
    noise: &NoiseModel,
    design: &Design,
    prior_variance: &DVector<f64>,
    k: usize,
    p: usize,
    seed: u64,
) -> Result<DVector<f64>> {
    check_design(design, noise.dim())?;
    let n = prior.dim();
    check_len("prior variance", prior_variance.len(), n)?;
    if design.is_empty() {
        return Ok(prior_variance.clone());
    }
    let sigma = noise.restrict(design)?;
    let op = |v: &DVector<f64>| -> Result<DVector<f64>> {
        let jd = design.select(&lin.jacobian_action(&prior.apply_sqrt(v)?)?)?;
        let z = design.scatter(&jd.component_div(&sigma).component_div(&sigma))?;
        prior.apply_sqrt_transpose(&lin.jacobian_transpose_action(&z)?)
    };
    let k = k.min(design.len()).min(n);
    let p = p.min(n - k);
    let lr = randomized_eigs(op, n, k, p, seed)?;
    let mut var = prior_variance.clone();
    for (j, &l) in lr.values().iter().enumerate() {
        let lv = prior.apply_sqrt(&lr.vectors().column(j).into_owned())?;
        var -= (l / (1.0 + l)) * lv.component_mul(&lv);
    }
    Ok(var)
}

/// Counter delta helper for [`EigResult`].
pub fn eval_counters(evaluations: u64, before: &CounterSnapshot, after: &CounterSnapshot) -> EvalCounters {
    EvalCounters { criterion_evaluations: evaluations, operator_actions: after.since(before).operator_actions() }
}
