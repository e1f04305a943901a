//! Run configuration, read from TOML.
//!
//! ```toml
//! version = 1
//! problem = "advection-diffusion"   # or "lognormal-diffusion", "matrix-file"
//! mode = "linear-lowrank"           # or "la-fixed-map", "la-prior-sample", "la-map"
//! r = 5
//! seed = 7
//! output_dir = "out"
//!
//! [grid]
//! nx = 32
//! ny = 32
//!
//! [candidates]
//! lattice = [3, 3]                  # or points = [[0.2, 0.25], ...]
//! ```
//!
//! Every other table (`prior`, `noise`, `lowrank`, `samples`, `newton`,
//! `advection`, `selection`, `evaluate`, `matrix`) is optional; see the
//! field defaults below.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::criteria::LaMode;
use crate::error::{Error, Result};
use crate::forward::AdvectionSettings;
use crate::map::NewtonSettings;
use crate::selection::LeverageInit;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    AdvectionDiffusion,
    LognormalDiffusion,
    MatrixFile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    LinearLowrank,
    LaFixedMap,
    LaPriorSample,
    LaMap,
}

impl RunMode {
    pub fn la_mode(self) -> Option<LaMode> {
        match self {
            RunMode::LinearLowrank => None,
            RunMode::LaFixedMap => Some(LaMode::FixedMap),
            RunMode::LaPriorSample => Some(LaMode::PriorSample),
            RunMode::LaMap => Some(LaMode::Map),
        }
    }

    /// Modes whose online stage needs no operator actions.
    pub fn offline_online(self) -> bool {
        self != RunMode::LaMap
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { nx: 32, ny: 32 }
    }
}

/// Prior parameters. Unset values take the problem's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub gamma: Option<f64>,
    pub delta: Option<f64>,
    pub theta1: Option<f64>,
    pub theta2: Option<f64>,
    pub alpha: Option<f64>,
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub enum CandidateConfig {
    /// `[gx, gy]` interior lattice.
    Lattice([usize; 2]),
    Points(Vec<[f64; 2]>),
}

impl Default for CandidateConfig {
    fn default() -> Self {
        CandidateConfig::Lattice([3, 3])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdvectionConfig {
    pub diffusion: f64,
    pub time_steps: usize,
    pub final_time: f64,
    pub observation_times: Vec<usize>,
    /// CSV of nodal velocities; the analytic recirculating field when unset.
    pub velocity_file: Option<PathBuf>,
}

impl Default for AdvectionConfig {
    fn default() -> Self {
        let s = AdvectionSettings::default();
        Self {
            diffusion: s.diffusion,
            time_steps: s.time_steps,
            final_time: s.final_time,
            observation_times: s.observation_times,
            velocity_file: None,
        }
    }
}

impl AdvectionConfig {
    pub fn settings(&self) -> AdvectionSettings {
        AdvectionSettings {
            diffusion: self.diffusion,
            time_steps: self.time_steps,
            final_time: self.final_time,
            observation_times: self.observation_times.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Standard deviation relative to the peak observation at the true parameter.
    pub sigma_rel: f64,
    /// Absolute standard deviation; overrides `sigma_rel` when set.
    pub sigma: Option<f64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { sigma_rel: 0.01, sigma: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LowRankConfig {
    pub k: usize,
    pub p: usize,
    /// Truncate to the smallest `k` with `λ_{k+1}/λ_1` below this.
    pub adaptive_rtol: Option<f64>,
}

impl Default for LowRankConfig {
    fn default() -> Self {
        Self { k: 20, p: 10, adaptive_rtol: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplesConfig {
    pub count: usize,
}

impl Default for SamplesConfig {
    fn default() -> Self {
        Self { count: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub max_sweeps: usize,
    pub init: LeverageInit,
    pub standard: bool,
    pub random_count: usize,
    pub unique_random: bool,
    /// Rank greedy designs by exhaustive search when the space is small enough.
    pub brute_force: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self { max_sweeps: 10, init: LeverageInit::default(), standard: true, random_count: 200, unique_random: false, brute_force: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Criteria columns: any of `linear-lowrank`, `linear-exact`,
    /// `la-fixed-map`, `la-prior-sample`, `la-map`, `dlmc`.
    pub criteria: Vec<String>,
    /// JSON list of index lists; random designs are drawn when unset.
    pub designs_file: Option<PathBuf>,
    pub random_count: usize,
    pub dlmc_outer: usize,
    pub dlmc_inner: usize,
    /// Write a posterior pointwise-variance field per design.
    pub variance: bool,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            criteria: vec!["la-fixed-map".into(), "la-prior-sample".into()],
            designs_file: None,
            random_count: 200,
            dlmc_outer: 200,
            dlmc_inner: 200,
            variance: false,
        }
    }
}

/// Files for the PDE-free problem: either `hessian` alone, or the triplet
/// `forward`, `prior_covariance`, `noise_sigma`. All are headerless CSV.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatrixConfig {
    pub hessian: Option<PathBuf>,
    pub forward: Option<PathBuf>,
    pub prior_covariance: Option<PathBuf>,
    pub prior_mean: Option<PathBuf>,
    pub noise_sigma: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub problem: ProblemKind,
    pub mode: RunMode,
    pub r: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub candidates: CandidateConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub lowrank: LowRankConfig,
    #[serde(default)]
    pub samples: SamplesConfig,
    #[serde(default)]
    pub newton: NewtonSettings,
    #[serde(default)]
    pub advection: AdvectionConfig,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub evaluate: EvaluateConfig,
    #[serde(default)]
    pub matrix: MatrixConfig,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with_overrides(text, &[])
    }

    /// Parses `text`, then applies `key.path=value` overrides (values in
    /// TOML syntax, bare words taken as strings) before validation.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_with_overrides(&text, overrides)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.check_files()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(q) = p {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        fix(&mut self.matrix.hessian);
        fix(&mut self.matrix.forward);
        fix(&mut self.matrix.prior_covariance);
        fix(&mut self.matrix.prior_mean);
        fix(&mut self.matrix.noise_sigma);
        fix(&mut self.advection.velocity_file);
        fix(&mut self.evaluate.designs_file);
        if self.output_dir.is_relative() {
            self.output_dir = base.join(&self.output_dir);
        }
    }

    /// Referenced input files must exist.
    pub fn check_files(&self) -> Result<()> {
        let m = &self.matrix;
        for p in [&m.hessian, &m.forward, &m.prior_covariance, &m.prior_mean, &m.noise_sigma, &self.advection.velocity_file, &self.evaluate.designs_file]
            .into_iter()
            .flatten()
        {
            if !p.exists() {
                return Err(Error::Config(format!("referenced file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.version != CONFIG_VERSION {
            return err(format!("unsupported config version {} (expected {CONFIG_VERSION})", self.version));
        }
        if self.grid.nx == 0 || self.grid.ny == 0 {
            return err("grid sizes must be positive".into());
        }
        match (self.problem, self.mode) {
            (ProblemKind::AdvectionDiffusion | ProblemKind::MatrixFile, RunMode::LinearLowrank) => {}
            (ProblemKind::LognormalDiffusion, RunMode::LinearLowrank) => {
                return err("linear-lowrank mode requires a linear problem".into())
            }
            (ProblemKind::MatrixFile, _) if self.matrix.hessian.is_some() => {
                return err("a Hessian matrix file only supports linear-lowrank mode".into())
            }
            _ => {}
        }
        if self.problem == ProblemKind::MatrixFile {
            let m = &self.matrix;
            let triplet = m.forward.is_some() && m.prior_covariance.is_some() && m.noise_sigma.is_some();
            if m.hessian.is_none() && !triplet {
                return err("matrix-file problems need `hessian` or `forward` + `prior_covariance` + `noise_sigma`".into());
            }
        }
        if let CandidateConfig::Lattice([gx, gy]) = self.candidates {
            if gx == 0 || gy == 0 {
                return err("candidate lattice must be non-empty".into());
            }
        }
        if self.samples.count == 0 {
            return err("samples.count must be positive".into());
        }
        if self.selection.max_sweeps == 0 {
            return err("selection.max_sweeps must be positive".into());
        }
        if !(self.noise.sigma_rel > 0.0) || self.noise.sigma.is_some_and(|s| !(s > 0.0)) {
            return err("noise levels must be positive".into());
        }
        self.newton.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not of the form key=value")))?;
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, path) = parts.split_last().unwrap();
    let mut cur = table;
    for p in path {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key {key:?}: {p:?} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
