//! Offline, online and evaluation stages driven by a [`RunConfig`].
//!
//! The offline stage does every PDE solve and persists low-rank factors;
//! the online stage reloads them and optimizes the design without touching
//! a model (except in `la-map` mode, whose criterion needs fresh MAP points).

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::{CandidateConfig, ProblemKind, RunConfig, RunMode, CONFIG_VERSION};
use crate::counters::CounterSnapshot;
use crate::criteria::{
    approx_eig_linear, dense_eig, eig_gap_bound, exact_eig_linear, generate_samples, la_eig, la_eig_map,
    posterior_pointwise_variance, DlmcEnsemble, LaMode, SampleSettings, TrainingSample,
};
use crate::derive_seed;
use crate::design::Design;
use crate::error::{check_len, Error, Result};
use crate::forward::{
    read_velocity_csv, true_initial_condition, write_field_csv, AdvectionDiffusionModel, DenseLinearModel,
    ForwardModel, LogNormalDiffusionModel, NoiseModel, SensorArray, Velocity,
};
use crate::lowrank::{build_lowrank, LowRankHessian, Trailing};
use crate::mesh::{anisotropy, Grid2D};
use crate::prior::{DensePrior, GaussianPrior, PriorOperator};
use crate::selection::{
    binomial, brute_force, combined_leverage, random_designs, standard_greedy, swapping_greedy, top_r, Counted,
    Criterion, FnCriterion, LaplaceCriterion, LowRankCriterion, SelectionTrace, BRUTE_FORCE_LIMIT,
};

const MANIFEST: &str = "offline.json";
const REPORT: &str = "report.json";

// Seed streams derived from the configured base seed.
const SEED_TRUTH: u64 = 1;
const SEED_SAMPLES: u64 = 2;
const SEED_SKETCH: u64 = 3;
const SEED_RANDOM: u64 = 4;
const SEED_DLMC: u64 = 5;
const SEED_VARIANCE: u64 = 6;

/// A forward model with its prior and noise.
pub struct ModelProblem {
    pub model: Box<dyn ForwardModel>,
    pub prior: Box<dyn GaussianPrior>,
    pub noise: NoiseModel,
    pub grid: Option<Grid2D>,
    pub truth: Option<DVector<f64>>,
}

pub enum Problem {
    Model(ModelProblem),
    /// An explicit data-space Hessian; only linear criteria apply.
    Hessian(DMatrix<f64>),
}

impl Problem {
    pub fn candidate_count(&self) -> usize {
        match self {
            Problem::Model(p) => p.model.candidate_count(),
            Problem::Hessian(h) => h.nrows(),
        }
    }

    fn model(&self) -> Result<&ModelProblem> {
        match self {
            Problem::Model(p) => Ok(p),
            Problem::Hessian(_) => Err(Error::Config("this criterion needs a forward model, not a Hessian file".into())),
        }
    }
}

/// Headerless CSV of numbers, one matrix row per line.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let bad = |reason: String| Error::Format { path: path.to_path_buf(), reason };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    for rec in reader.records() {
        let row = rec?
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(e.to_string()))?;
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(bad("rows of unequal length".into()));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.into_iter().flatten()))
}

fn read_vector_csv(path: &Path) -> Result<DVector<f64>> {
    let m = read_matrix_csv(path)?;
    Ok(DVector::from_iterator(m.len(), m.transpose().iter().copied()))
}

/// Builds the problem described by `cfg`, including the true parameter and
/// the noise level calibrated on it.
pub fn build_problem(cfg: &RunConfig) -> Result<Problem> {
    if cfg.problem == ProblemKind::MatrixFile {
        return build_matrix_problem(cfg);
    }
    let grid = Grid2D::new(cfg.grid.nx, cfg.grid.ny)?;
    let sensors = match &cfg.candidates {
        CandidateConfig::Lattice([gx, gy]) => SensorArray::lattice(&grid, *gx, *gy)?,
        CandidateConfig::Points(p) => SensorArray::new(&grid, p.clone())?,
    };
    let pc = &cfg.prior;
    let linear = cfg.problem == ProblemKind::AdvectionDiffusion;
    let (g, dl, t1, t2, a, mean) = if linear {
        (1.0, 8.0, 1.0, 1.0, 0.0, 0.25)
    } else {
        (0.04, 0.2, 2.0, 0.5, std::f64::consts::FRAC_PI_4, 0.0)
    };
    let theta = anisotropy(pc.theta1.unwrap_or(t1), pc.theta2.unwrap_or(t2), pc.alpha.unwrap_or(a));
    let prior = PriorOperator::new(
        grid,
        pc.gamma.unwrap_or(g),
        pc.delta.unwrap_or(dl),
        theta,
        DVector::from_element(grid.vertex_count(), pc.mean.unwrap_or(mean)),
    )?;
    let (model, truth): (Box<dyn ForwardModel>, DVector<f64>) = if linear {
        let velocity = match &cfg.advection.velocity_file {
            Some(p) => Velocity::from_nodal(&grid, &read_velocity_csv(p, &grid)?)?,
            None => Velocity::Recirculating,
        };
        let m = AdvectionDiffusionModel::new(grid, sensors, &velocity, cfg.advection.settings())?;
        (Box::new(m), true_initial_condition(&grid))
    } else {
        let truth = prior.sample(derive_seed(cfg.seed, SEED_TRUTH))?;
        (Box::new(LogNormalDiffusionModel::new(grid, sensors)?), truth)
    };
    let noise = match cfg.noise.sigma {
        Some(s) => NoiseModel::uniform(model.candidate_count(), s)?,
        None => NoiseModel::relative(cfg.noise.sigma_rel, &model.forward_map(&truth)?)?,
    };
    Ok(Problem::Model(ModelProblem { model, prior: Box::new(prior), noise, grid: Some(grid), truth: Some(truth) }))
}

fn build_matrix_problem(cfg: &RunConfig) -> Result<Problem> {
    let m = &cfg.matrix;
    if let Some(h) = &m.hessian {
        let h = read_matrix_csv(h)?;
        if !h.is_square() {
            return Err(Error::Format { path: m.hessian.clone().unwrap(), reason: "Hessian must be square".into() });
        }
        return Ok(Problem::Hessian(h));
    }
    let need = |p: &Option<PathBuf>, what: &str| {
        p.clone().ok_or_else(|| Error::Config(format!("matrix-file problem needs `{what}`")))
    };
    let f = read_matrix_csv(&need(&m.forward, "forward")?)?;
    let cov = read_matrix_csv(&need(&m.prior_covariance, "prior_covariance")?)?;
    let sigma = read_vector_csv(&need(&m.noise_sigma, "noise_sigma")?)?;
    let mean = match &m.prior_mean {
        Some(p) => read_vector_csv(p)?,
        None => DVector::zeros(f.ncols()),
    };
    check_len("noise_sigma", sigma.len(), f.nrows())?;
    let prior = DensePrior::new(mean, cov)?;
    let noise = NoiseModel::new(sigma)?;
    Ok(Problem::Model(ModelProblem {
        model: Box::new(DenseLinearModel::new(f)),
        prior: Box::new(prior),
        noise,
        grid: None,
        truth: None,
    }))
}

/// Keeps `k + p ≤ d` by trimming `k` first, then `p`.
fn fit_sketch(k: usize, p: usize, d: usize) -> (usize, usize) {
    let k = k.min(d);
    (k, p.min(d - k))
}

/// Persisted description of one training sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub stem: String,
    pub prior_term: f64,
    pub m: Vec<f64>,
    pub m_ref: Vec<f64>,
    pub y: Vec<f64>,
    pub map_converged: Option<bool>,
    pub newton_iters: Option<usize>,
    pub cg_iters: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineManifest {
    pub version: u32,
    pub problem: ProblemKind,
    pub mode: RunMode,
    pub d: usize,
    pub k: usize,
    pub p: usize,
    pub samples: Vec<SampleRecord>,
    pub counters: CounterSnapshot,
    pub wall_time_s: f64,
    pub converged: bool,
}

/// Draws samples, solves for MAP points when the mode needs them, and
/// persists one low-rank Hessian per sample (exactly one in linear mode).
pub fn run_offline(cfg: &RunConfig) -> Result<OfflineManifest> {
    let start = Instant::now();
    std::fs::create_dir_all(&cfg.output_dir)?;
    let problem = build_problem(cfg)?;
    let d = problem.candidate_count();
    let (k, p) = fit_sketch(cfg.lowrank.k, cfg.lowrank.p, d);
    let adapt = |lr: LowRankHessian| match cfg.lowrank.adaptive_rtol {
        Some(t) => lr.truncate_adaptive(t),
        None => lr,
    };
    let mut records = Vec::new();
    let mut lowranks = Vec::new();
    let mut converged = true;
    let counters = match (&problem, cfg.mode.la_mode()) {
        (Problem::Hessian(h), None) => {
            lowranks.push(adapt(LowRankHessian::from_dense(h, k)?));
            CounterSnapshot::default()
        }
        (Problem::Hessian(_), Some(_)) => {
            return Err(Error::Config("a Hessian matrix file only supports linear-lowrank mode".into()))
        }
        (Problem::Model(mp), None) => {
            if !mp.model.is_linear() {
                return Err(Error::Config("linear-lowrank mode requires a linear model".into()));
            }
            let seed = derive_seed(cfg.seed, SEED_SKETCH);
            let lr = build_lowrank(mp.model.as_ref(), mp.prior.as_ref(), &mp.noise, mp.prior.mean(), k, p, seed)?;
            lowranks.push(adapt(lr));
            mp.model.counters().snapshot()
        }
        (Problem::Model(mp), Some(mode)) => {
            let settings = SampleSettings {
                count: cfg.samples.count,
                k,
                p,
                seed: derive_seed(cfg.seed, SEED_SAMPLES),
                newton: cfg.newton.clone(),
            };
            let sample_mode = if mode == LaMode::Map { LaMode::FixedMap } else { mode };
            let (samples, maps) = generate_samples(mp.model.as_ref(), mp.prior.as_ref(), &mp.noise, sample_mode, &settings)?;
            for (i, s) in samples.into_iter().enumerate() {
                let map = maps.get(i);
                if let Some(m) = map {
                    m.write_trace(&cfg.output_dir.join(format!("sample_{i:03}_newton.csv")))?;
                }
                converged &= map.is_none_or(|m| m.converged);
                records.push(SampleRecord {
                    stem: format!("sample_{i:03}"),
                    prior_term: s.prior_term,
                    m: s.m.as_slice().to_vec(),
                    m_ref: s.m_ref.as_slice().to_vec(),
                    y: s.y.as_slice().to_vec(),
                    map_converged: map.map(|m| m.converged),
                    newton_iters: map.map(|m| m.newton_iters),
                    cg_iters: map.map(|m| m.total_cg_iters),
                });
                lowranks.push(adapt(s.lowrank));
            }
            mp.model.counters().snapshot()
        }
    };
    if cfg.mode == RunMode::LinearLowrank {
        records.push(SampleRecord {
            stem: "hessian".into(),
            prior_term: 0.0,
            m: vec![],
            m_ref: vec![],
            y: vec![],
            map_converged: None,
            newton_iters: None,
            cg_iters: None,
        });
    }
    for (rec, lr) in records.iter().zip(&lowranks) {
        lr.save(&cfg.output_dir, &rec.stem)?;
    }
    let manifest = OfflineManifest {
        version: CONFIG_VERSION,
        problem: cfg.problem,
        mode: cfg.mode,
        d,
        k,
        p,
        samples: records,
        counters,
        wall_time_s: start.elapsed().as_secs_f64(),
        converged,
    };
    std::fs::write(cfg.output_dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Reads the offline manifest, checking it matches `cfg`.
pub fn load_manifest(cfg: &RunConfig) -> Result<OfflineManifest> {
    let path = cfg.output_dir.join(MANIFEST);
    if !path.exists() {
        return Err(Error::MissingArtifact { path, stage: "offline" });
    }
    let manifest: OfflineManifest = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
    if manifest.mode != cfg.mode || manifest.problem != cfg.problem {
        return Err(Error::Config(format!(
            "offline artifacts in {} were built for {:?}/{:?}; rerun the offline stage",
            cfg.output_dir.display(),
            manifest.problem,
            manifest.mode
        )));
    }
    Ok(manifest)
}

fn load_samples(cfg: &RunConfig, manifest: &OfflineManifest) -> Result<Vec<TrainingSample>> {
    manifest
        .samples
        .iter()
        .map(|rec| {
            Ok(TrainingSample {
                m: DVector::from_vec(rec.m.clone()),
                y: DVector::from_vec(rec.y.clone()),
                m_ref: DVector::from_vec(rec.m_ref.clone()),
                lowrank: LowRankHessian::load(&cfg.output_dir, &rec.stem, manifest.d)?,
                prior_term: rec.prior_term,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignOutcome {
    pub label: String,
    pub design: Design,
    pub value: f64,
    /// Position in the exhaustive ranking, when it was computed.
    pub rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomSummary {
    pub count: usize,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCounters {
    pub offline: CounterSnapshot,
    pub online_operator_actions: u64,
    pub online_criterion_evaluations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallTimes {
    pub offline_s: f64,
    pub online_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: u32,
    pub problem: ProblemKind,
    pub mode: RunMode,
    pub d: usize,
    pub r: usize,
    pub designs: Vec<DesignOutcome>,
    pub optimal_value: Option<f64>,
    pub random: Option<RandomSummary>,
    pub gap_bound: Option<f64>,
    pub gap_bound_certified: Option<bool>,
    pub spectra: Vec<Vec<f64>>,
    pub counters: StageCounters,
    pub wall_times: WallTimes,
    pub swapping_trace: SelectionTrace,
    pub standard_trace: Option<SelectionTrace>,
    pub converged: bool,
}

impl RunReport {
    pub fn design(&self, label: &str) -> Option<&DesignOutcome> {
        self.designs.iter().find(|d| d.label == label)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact { path: path.to_path_buf(), stage: "online" });
        }
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Greedy design optimization on persisted offline artifacts.
pub fn run_online(cfg: &RunConfig) -> Result<RunReport> {
    let start = Instant::now();
    let manifest = load_manifest(cfg)?;
    let d = manifest.d;
    if cfg.r > d {
        return Err(Error::Config(format!("r = {} exceeds the {d} candidates", cfg.r)));
    }
    let samples = load_samples(cfg, &manifest)?;
    let spectra = samples.iter().map(|s| s.lowrank.values().as_slice().to_vec()).collect();
    let us: Vec<&DMatrix<f64>> = samples.iter().map(|s| s.lowrank.vectors()).collect();
    let init = top_r(&combined_leverage(&us, cfg.selection.init)?, cfg.r)?;

    // la-map is the only mode whose criterion touches a model.
    let la_map_problem = match cfg.mode {
        RunMode::LaMap => Some(build_problem(cfg)?),
        _ => None,
    };
    let before = la_map_problem
        .as_ref()
        .map(|p| p.model().map(|m| m.model.counters().snapshot()))
        .transpose()?;
    let criterion: Box<dyn Criterion> = match (cfg.mode, &la_map_problem) {
        (RunMode::LinearLowrank, _) => Box::new(LowRankCriterion(&samples[0].lowrank)),
        (RunMode::LaMap, Some(p)) => {
            let mp = p.model()?;
            let newton = cfg.newton.clone();
            let samples = &samples;
            Box::new(FnCriterion {
                d,
                f: move |w: &Design| la_eig_map(mp.model.as_ref(), mp.prior.as_ref(), &mp.noise, samples, w, &newton),
            })
        }
        _ => Box::new(LaplaceCriterion { samples: &samples, reduced: false }),
    };
    let crit = Counted::new(criterion);

    let swap = swapping_greedy(&crit, init, cfg.selection.max_sweeps)?;
    let standard = if cfg.selection.standard { Some(standard_greedy(&crit, cfg.r)?) } else { None };
    let random = if cfg.selection.random_count > 0 {
        let designs = random_designs(
            d,
            cfg.r,
            cfg.selection.random_count,
            derive_seed(cfg.seed, SEED_RANDOM),
            cfg.selection.unique_random,
        )?;
        let mut values = designs.iter().map(|w| crit.evaluate(w)).collect::<Result<Vec<f64>>>()?;
        values.sort_by(f64::total_cmp);
        Some(RandomSummary {
            count: values.len(),
            min: values[0],
            median: values[values.len() / 2],
            max: values[values.len() - 1],
        })
    } else {
        None
    };
    let ranking = if cfg.selection.brute_force && binomial(d, cfg.r) <= BRUTE_FORCE_LIMIT && cfg.mode.offline_online() {
        Some(brute_force(&crit, cfg.r)?)
    } else {
        None
    };
    let rank = |v: f64| ranking.as_ref().map(|r| r.rank_of_value(v));
    let mut designs =
        vec![DesignOutcome { label: "swapping".into(), design: swap.design.clone(), value: swap.value, rank: rank(swap.value) }];
    if let Some(s) = &standard {
        designs.push(DesignOutcome { label: "standard".into(), design: s.design.clone(), value: s.value, rank: rank(s.value) });
    }
    let (gap_bound, certified) = match cfg.mode {
        RunMode::LinearLowrank => {
            let lr = &samples[0].lowrank;
            (Some(eig_gap_bound(lr)), Some(lr.trailing_kind() == Trailing::Exact))
        }
        _ => (None, None),
    };
    let online_actions = match (&la_map_problem, before) {
        (Some(p), Some(b)) => p.model()?.model.counters().snapshot().since(&b).operator_actions(),
        _ => 0,
    };
    let report = RunReport {
        version: CONFIG_VERSION,
        problem: cfg.problem,
        mode: cfg.mode,
        d,
        r: cfg.r,
        designs,
        optimal_value: ranking.as_ref().and_then(|r| r.best()).map(|b| b.1),
        random,
        gap_bound,
        gap_bound_certified: certified,
        spectra,
        counters: StageCounters {
            offline: manifest.counters,
            online_operator_actions: online_actions,
            online_criterion_evaluations: crit.evaluations(),
        },
        wall_times: WallTimes { offline_s: manifest.wall_time_s, online_s: start.elapsed().as_secs_f64() },
        converged: manifest.converged && !swap.trace.hit_max_sweeps,
        swapping_trace: swap.trace,
        standard_trace: standard.map(|s| s.trace),
    };
    write_report(cfg, &report)?;
    Ok(report)
}

fn write_report(cfg: &RunConfig, report: &RunReport) -> Result<()> {
    let dir = &cfg.output_dir;
    std::fs::write(dir.join(REPORT), serde_json::to_string_pretty(report)?)?;
    report.swapping_trace.write_csv(&dir.join("swapping_trace.csv"))?;
    if let Some(t) = &report.standard_trace {
        t.write_csv(&dir.join("standard_trace.csv"))?;
    }
    let chosen: Vec<&[usize]> = report.designs.iter().map(|d| d.design.indices()).collect();
    std::fs::write(dir.join("designs.json"), serde_json::to_string(&chosen)?)?;
    Ok(())
}

pub fn report_path(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join(REPORT)
}

/// Column-per-criterion values for a list of designs.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationTable {
    pub columns: Vec<String>,
    pub designs: Vec<Design>,
    /// `values[c][i]` is criterion `c` at design `i`.
    pub values: Vec<Vec<f64>>,
}

impl EvaluationTable {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().position(|c| c == name).map(|i| self.values[i].as_slice())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["design_id".to_string(), "design".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (i, design) in self.designs.iter().enumerate() {
            let mut row = vec![i.to_string(), design.indices().iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")];
            row.extend(self.values.iter().map(|col| format!("{:e}", col[i])));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads a JSON list of index lists.
pub fn read_designs(path: &Path, d: usize) -> Result<Vec<Design>> {
    let lists: Vec<Vec<usize>> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    lists.into_iter().map(|l| Design::new(l, d)).collect()
}

/// The designs to evaluate: the given list, the config's designs file, or
/// random draws.
pub fn evaluation_designs(cfg: &RunConfig, d: usize) -> Result<Vec<Design>> {
    match &cfg.evaluate.designs_file {
        Some(p) => read_designs(p, d),
        None => random_designs(d, cfg.r, cfg.evaluate.random_count, derive_seed(cfg.seed, SEED_RANDOM), false),
    }
}

/// Evaluates the configured criteria at every design and writes
/// `evaluate.csv` (plus `variance_<id>.csv` fields when requested).
pub fn run_evaluate(cfg: &RunConfig, designs: &[Design]) -> Result<EvaluationTable> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let problem = build_problem(cfg)?;
    let d = problem.candidate_count();
    for w in designs {
        if w.d() != d {
            return Err(Error::Validation(format!("design over {} candidates, problem has {d}", w.d())));
        }
    }
    let (k, p) = fit_sketch(cfg.lowrank.k, cfg.lowrank.p, d);
    let sample_settings = |seed| SampleSettings {
        count: cfg.samples.count,
        k,
        p,
        seed,
        newton: cfg.newton.clone(),
    };
    let mut columns = Vec::new();
    let mut values = Vec::new();
    for name in &cfg.evaluate.criteria {
        let col: Vec<f64> = match name.as_str() {
            "linear-lowrank" => {
                let lr = match &problem {
                    Problem::Hessian(h) => LowRankHessian::from_dense(h, k)?,
                    Problem::Model(mp) => {
                        let seed = derive_seed(cfg.seed, SEED_SKETCH);
                        build_lowrank(mp.model.as_ref(), mp.prior.as_ref(), &mp.noise, mp.prior.mean(), k, p, seed)?
                    }
                };
                designs.iter().map(|w| approx_eig_linear(&lr, w)).collect::<Result<_>>()?
            }
            "linear-exact" => match &problem {
                Problem::Hessian(h) => designs.iter().map(|w| dense_eig(h, w)).collect::<Result<_>>()?,
                Problem::Model(mp) => {
                    let lin = mp.model.linearize(mp.prior.mean())?;
                    designs
                        .iter()
                        .map(|w| exact_eig_linear(lin.as_ref(), mp.model.counters(), mp.prior.as_ref(), &mp.noise, w))
                        .collect::<Result<_>>()?
                }
            },
            "la-fixed-map" | "la-prior-sample" | "la-map" => {
                let mp = problem.model()?;
                let mode = if name == "la-prior-sample" { LaMode::PriorSample } else { LaMode::FixedMap };
                let settings = sample_settings(derive_seed(cfg.seed, SEED_SAMPLES));
                let (samples, _) = generate_samples(mp.model.as_ref(), mp.prior.as_ref(), &mp.noise, mode, &settings)?;
                if name == "la-map" {
                    designs
                        .iter()
                        .map(|w| la_eig_map(mp.model.as_ref(), mp.prior.as_ref(), &mp.noise, &samples, w, &cfg.newton))
                        .collect::<Result<_>>()?
                } else {
                    designs.iter().map(|w| la_eig(&samples, w)).collect::<Result<_>>()?
                }
            }
            "dlmc" => {
                let mp = problem.model()?;
                let ens = DlmcEnsemble::build(
                    mp.model.as_ref(),
                    mp.prior.as_ref(),
                    cfg.evaluate.dlmc_outer,
                    cfg.evaluate.dlmc_inner,
                    derive_seed(cfg.seed, SEED_DLMC),
                )?;
                designs.iter().map(|w| ens.evaluate(&mp.noise, w)).collect::<Result<_>>()?
            }
            other => return Err(Error::Config(format!("unknown evaluation criterion {other:?}"))),
        };
        columns.push(name.clone());
        values.push(col);
    }
    if cfg.evaluate.variance {
        let mp = problem.model()?;
        let grid = mp.grid.ok_or_else(|| Error::Config("variance fields need a mesh-based problem".into()))?;
        let prior_var = mp.prior.variance_diagonal()?;
        let lin = mp.model.linearize(mp.prior.mean())?;
        let mut means = Vec::with_capacity(designs.len());
        for (i, w) in designs.iter().enumerate() {
            let var = posterior_pointwise_variance(
                mp.prior.as_ref(),
                lin.as_ref(),
                &mp.noise,
                w,
                &prior_var,
                w.len(),
                cfg.lowrank.p,
                derive_seed(cfg.seed, SEED_VARIANCE),
            )?;
            write_field_csv(&cfg.output_dir.join(format!("variance_{i:04}.csv")), &grid, &var)?;
            means.push(var.mean());
        }
        columns.push("mean-variance".into());
        values.push(means);
    }
    let table = EvaluationTable { columns, designs: designs.to_vec(), values };
    table.write_csv(&cfg.output_dir.join("evaluate.csv"))?;
    Ok(table)
}

/// Pearson correlation coefficient; `NaN` for constant or short inputs.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n < 2 {
        return f64::NAN;
    }
    let ma = a[..n].iter().sum::<f64>() / n as f64;
    let mb = b[..n].iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (x, y) = (a[i] - ma, b[i] - mb);
        sab += x * y;
        saa += x * x;
        sbb += y * y;
    }
    sab / (saa * sbb).sqrt()
}
