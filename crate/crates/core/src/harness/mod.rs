//! Scenario configuration, method runners and parameter sweeps.

pub mod models;
pub mod series;
mod sweep;

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cluster::{self, KMeansConfig};
use crate::error::{Error, Result};
use crate::linalg;
use crate::mixture::{AedConfig, PairSample, SharedGmm};
use crate::objectives::{simsiam_xi_bound, SiamConfig};
use crate::optim::{self, ClipNegatives, InfoNceTask, PairSource, SimSiamTask, TrainConfig, TrainTrace};
use crate::rng::{stream, Seed};
use crate::subspace::{
    containment_report, fisher_discriminant, svd_subspace_empirical, top_fisher_subspace, ProjectionMap, Subspace,
    SubspaceReport, ANGLE_TOL_ANALYTIC, ANGLE_TOL_TRAINED, RANK_TOL_ANALYTIC, RANK_TOL_TRAINED,
};

pub use sweep::{clip_rows, collapse_demo, method_labels, pancake_demo, read_rows, run_sweep, sweep_rows, DemoReport, SweepSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    DeltaSweep,
    FlatnessSweep,
    RankSweep,
    ScalingSweep,
    Clip,
    PancakeDemo,
    CollapseDemo,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Self::DeltaSweep => "delta_sweep",
            Self::FlatnessSweep => "flatness_sweep",
            Self::RankSweep => "rank_sweep",
            Self::ScalingSweep => "scaling_sweep",
            Self::Clip => "clip",
            Self::PancakeDemo => "pancake_demo",
            Self::CollapseDemo => "collapse_demo",
        }
    }

    /// Name of the swept parameter as written to the `param` column.
    pub fn param(self) -> &'static str {
        match self {
            Self::DeltaSweep => "delta",
            Self::FlatnessSweep => "flatness",
            Self::RankSweep => "r",
            Self::ScalingSweep => "kappa",
            Self::Clip => "aligned",
            Self::PancakeDemo => "spread",
            Self::CollapseDemo => "mean_norm",
        }
    }
}

impl std::str::FromStr for Experiment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.into()))
            .map_err(|_| Error::Config(format!("unknown experiment {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ambient,
    Random,
    Optimal,
    Pca,
    Infonce,
    Simsiam,
}

impl Method {
    pub const ALL: [Method; 6] =
        [Method::Ambient, Method::Random, Method::Optimal, Method::Pca, Method::Infonce, Method::Simsiam];

    pub fn name(self) -> &'static str {
        match self {
            Self::Ambient => "ambient",
            Self::Random => "random",
            Self::Optimal => "optimal",
            Self::Pca => "pca",
            Self::Infonce => "infonce",
            Self::Simsiam => "simsiam",
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, Self::Infonce | Self::Simsiam)
    }

    fn tag(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.into()))
            .map_err(|_| Error::Config(format!("unknown method {s:?}")))
    }
}

/// Where learned methods draw their training pairs from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainSource {
    /// A fresh batch from the model at every step.
    #[default]
    Fresh,
    /// Resampling from the `n_train` pairs the baselines see.
    Pool,
}

/// CLIP training defaults. The loss is nearly flat across the noise
/// directions of the query side, so single iterates wander; a constant step
/// with the last three quarters of the iterates averaged settles instead.
pub fn default_clip_train() -> TrainConfig {
    TrainConfig {
        steps: 20_000,
        lr: 0.02,
        lr_decay: 1.0,
        batch_n: 2048,
        init_scale: 0.01,
        tail_average: 0.75,
        ..TrainConfig::default()
    }
}

/// Fields left out of a `clip_train` block keep their CLIP defaults rather
/// than the generic ones.
fn clip_train_over_defaults<'de, D: serde::Deserializer<'de>>(de: D) -> std::result::Result<TrainConfig, D::Error> {
    use serde::de::Error as _;
    let given = serde_json::Value::deserialize(de)?;
    let mut merged = serde_json::to_value(default_clip_train()).map_err(D::Error::custom)?;
    match (given, &mut merged) {
        (serde_json::Value::Object(fields), serde_json::Value::Object(base)) => base.extend(fields),
        _ => return Err(D::Error::custom("clip_train must be an object")),
    }
    serde_json::from_value(merged).map_err(D::Error::custom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub experiment: Experiment,
    #[serde(rename = "K")]
    pub k: usize,
    pub d: usize,
    /// Target dimension; defaults to `K`.
    pub r: Option<usize>,
    /// Target dimension for the non-learning baselines; defaults to `r`.
    pub baseline_r: Option<usize>,
    pub delta: f64,
    pub kappa: f64,
    pub n_train: usize,
    pub n_eval: usize,
    pub train_source: TrainSource,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    pub orthonormalize: bool,
    /// SimSiam regulariser; defaults to half the equality-regime bound.
    pub xi: Option<f64>,
    /// Overrides the experiment's default grid.
    pub grid: Option<Vec<f64>>,
    pub d1: usize,
    pub d2: usize,
    /// Optimiser settings for CLIP cells, which need their own step size
    /// and iterate averaging; see [`default_clip_train`].
    #[serde(deserialize_with = "clip_train_over_defaults")]
    pub clip_train: TrainConfig,
    pub clip_negatives: ClipNegatives,
    pub record_wallclock: bool,
    /// Worker threads for independent cells (default: all available).
    pub threads: Option<usize>,
    pub train: TrainConfig,
    pub kmeans: KMeansConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::DeltaSweep,
            k: 10,
            d: 100,
            r: None,
            baseline_r: None,
            delta: 1.0,
            kappa: 10.0,
            n_train: 20_000,
            n_eval: 5_000,
            train_source: TrainSource::Fresh,
            seeds: (0..5).collect(),
            methods: Method::ALL.to_vec(),
            orthonormalize: false,
            xi: None,
            grid: None,
            d1: 12,
            d2: 8,
            clip_train: default_clip_train(),
            clip_negatives: ClipNegatives::Expected,
            record_wallclock: true,
            threads: None,
            train: TrainConfig::default(),
            kmeans: KMeansConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn target_dim(&self) -> usize {
        self.r.unwrap_or(self.k)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.k < 2 && !matches!(self.experiment, Experiment::Clip) {
            return bad(format!("K must be at least 2, got {}", self.k));
        }
        if !(self.kappa >= 1.0) {
            return bad(format!("kappa must be at least 1, got {}", self.kappa));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return bad(format!("delta must lie in [0, 1], got {}", self.delta));
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if self.n_train == 0 || self.n_eval < self.k.max(1) {
            return bad("n_train must be positive and n_eval at least K".into());
        }
        if self.target_dim() == 0 || self.baseline_r == Some(0) {
            return bad("target dimensions must be positive".into());
        }
        if matches!(self.experiment, Experiment::DeltaSweep | Experiment::FlatnessSweep | Experiment::RankSweep)
            && self.d + 1 < self.k
        {
            return bad(format!("d = {} is below K - 1", self.d));
        }
        if self.experiment == Experiment::Clip && (self.d1 == 0 || self.d2 == 0) {
            return bad("d1 and d2 must be positive".into());
        }
        if let Some(xi) = self.xi {
            if !(xi > 0.0) {
                return bad(format!("xi must be positive, got {xi}"));
            }
        }
        if self.threads == Some(0) {
            return bad("threads must be positive".into());
        }
        for &v in &self.grid() {
            let ok = match self.experiment {
                Experiment::DeltaSweep => (0.0..=1.0).contains(&v),
                Experiment::FlatnessSweep => v > 0.0 && v <= 1.0,
                Experiment::RankSweep => v >= 1.0 && v.fract() == 0.0,
                Experiment::ScalingSweep => v >= 1.0,
                Experiment::Clip => v == 0.0 || v == 1.0,
                Experiment::PancakeDemo => v >= 1.0,
                Experiment::CollapseDemo => v > 0.0,
            };
            if !ok {
                return bad(format!("grid value {v} is invalid for {}", self.experiment.name()));
            }
        }
        self.train.validate()?;
        if self.experiment == Experiment::Clip {
            self.clip_train.validate()?;
        }
        if self.kmeans.restarts == 0 {
            return bad("k-means restarts must be positive".into());
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        if let Some(g) = &self.grid {
            return g.clone();
        }
        let tenths = |lo: usize, hi: usize| (lo..=hi).map(|i| i as f64 / 10.0).collect::<Vec<_>>();
        match self.experiment {
            Experiment::DeltaSweep => tenths(1, 10),
            Experiment::FlatnessSweep => tenths(1, 9),
            Experiment::RankSweep => (1..=2 * self.k).map(|r| r as f64).collect(),
            Experiment::ScalingSweep => vec![1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0],
            Experiment::Clip => vec![0.0, 1.0],
            Experiment::PancakeDemo => vec![sweep::PANCAKE_SPREAD],
            Experiment::CollapseDemo => vec![sweep::COLLAPSE_MEAN_NORM],
        }
    }
}

/// One CSV row: a (cell, method, seed) outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub method: String,
    pub param: String,
    pub value: f64,
    pub seed: u64,
    pub ari: f64,
    pub ami: f64,
    pub angle_deg: f64,
    #[serde(rename = "J")]
    pub j: f64,
    pub wallclock_s: f64,
}

pub const CSV_HEADER: &str = "experiment,method,param,value,seed,ari,ami,angle_deg,J,wallclock_s";

/// Everything a method needs about one cell.
pub struct MethodInput<'a> {
    pub model: &'a SharedGmm,
    pub delta: f64,
    pub r: usize,
    pub baseline_r: usize,
    /// Training pairs; PCA uses their first halves.
    pub pool: &'a PairSample,
    pub fisher: &'a Subspace,
    /// Root of every random choice made for this (cell, method).
    pub seed: Seed,
}

#[derive(Debug, Clone)]
pub struct MethodOutput {
    pub map: ProjectionMap,
    pub report: SubspaceReport,
    pub j: f64,
    pub trace: Option<TrainTrace>,
    pub xi: Option<f64>,
}

impl MethodOutput {
    /// The QR `Q` factor of the map, with the same diagnostics.
    pub fn orthonormalized(&self, model: &SharedGmm) -> Result<MethodOutput> {
        let q = ProjectionMap::new(linalg::qr_q(self.map.matrix()))?;
        Ok(MethodOutput { j: subspace_j(model, &q, RANK_TOL_ANALYTIC)?, map: q, ..self.clone() })
    }
}

/// `J` of the numerical column space of `a`; zero for a vanishing map.
pub fn subspace_j(model: &SharedGmm, a: &ProjectionMap, rank_tol: f64) -> Result<f64> {
    match Subspace::span_of(a.matrix(), rank_tol) {
        Some(s) => fisher_discriminant(model, &s.as_map()),
        None => Ok(0.0),
    }
}

/// Default SimSiam regulariser: half of `δ λ_min / (1 + λ_min)`.
pub fn default_xi(model: &SharedGmm, delta: f64) -> f64 {
    0.5 * simsiam_xi_bound(model, delta)
}

pub fn run_method(method: Method, input: &MethodInput<'_>, cfg: &ScenarioConfig) -> Result<MethodOutput> {
    let d = input.model.dim();
    let br = input.baseline_r.min(d);
    let analytic = |map: ProjectionMap| -> Result<MethodOutput> {
        let report = containment_report(&map, input.fisher, RANK_TOL_ANALYTIC, ANGLE_TOL_ANALYTIC)?;
        let j = subspace_j(input.model, &map, RANK_TOL_ANALYTIC)?;
        Ok(MethodOutput { map, report, j, trace: None, xi: None })
    };
    match method {
        Method::Ambient => analytic(ProjectionMap::identity(d)),
        Method::Random => {
            let mut rng = input.seed.derive(stream::BASELINE).rng();
            analytic(ProjectionMap::new(linalg::random_orthonormal(d, br, &mut rng))?)
        }
        Method::Optimal => analytic(top_fisher_subspace(input.model, br)?.as_map()),
        Method::Pca => analytic(svd_subspace_empirical(&input.pool.x, br)?.subspace.as_map()),
        Method::Infonce | Method::Simsiam => {
            let aed = AedConfig::new(input.model.clone(), input.delta)?;
            let mut tcfg = cfg.train.clone();
            tcfg.seed = cfg.train.seed.derive_path(&[input.seed.0, stream::TRAIN]);
            let source = match cfg.train_source {
                TrainSource::Fresh => PairSource::Fresh(aed.clone()),
                TrainSource::Pool => PairSource::Pool(input.pool.clone()),
            };
            let (map, trace, xi) = if method == Method::Infonce {
                let task = InfoNceTask { source };
                let (map, trace) = optim::train_from_random(&task, d, input.r, &tcfg, Some(input.fisher))?;
                (map, trace, None)
            } else {
                let xi = cfg.xi.unwrap_or_else(|| default_xi(&aed.base, input.delta));
                tcfg.spectral_projection = tcfg.spectral_projection.or(Some(1.0));
                let task = SimSiamTask { source, siam: SiamConfig::new(xi)? };
                let (map, trace) = optim::train_from_random(&task, d, input.r, &tcfg, Some(input.fisher))?;
                (map, trace, Some(xi))
            };
            let report = containment_report(&map, input.fisher, RANK_TOL_TRAINED, ANGLE_TOL_TRAINED)?;
            let j = subspace_j(input.model, &map, RANK_TOL_TRAINED)?;
            Ok(MethodOutput { map, report, j, trace: Some(trace), xi })
        }
    }
}

/// Projects and clusters a labelled evaluation sample.
pub fn score(
    map: &ProjectionMap,
    eval: &(DMatrix<f64>, Vec<usize>),
    k: usize,
    kmeans: &KMeansConfig,
    seed: Seed,
) -> Result<cluster::Scores> {
    cluster::evaluate_projection(map, &eval.0, &eval.1, k, kmeans, &mut seed.derive(stream::KMEANS).rng())
}
