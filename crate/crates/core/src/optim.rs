//! Projected gradient descent over linear maps.

use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::mixture::{AedConfig, ClipGmm, PairSample, SharedGmm};
use crate::objectives::{self, Batch, ClipBatch, ClipVariant, SiamConfig};
use crate::rng::{stream, Seed};
use crate::subspace::{containment_report, ProjectionMap, Subspace, ANGLE_TOL_TRAINED, RANK_TOL_TRAINED};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    /// Multiplier applied to `lr` after `patience` steps without a new
    /// smoothed-loss minimum.
    pub lr_decay: f64,
    pub patience: usize,
    pub lr_min: f64,
    /// EMA factor for the smoothed loss and gradient norm.
    pub smoothing: f64,
    pub batch_n: usize,
    pub batch_m: usize,
    pub seed: Seed,
    pub spectral_projection: Option<f64>,
    pub tol_grad: f64,
    pub init_scale: f64,
    /// Record the angle to the monitor subspace every this many steps (0: never).
    pub checkpoint_every: usize,
    /// When positive, return the mean of the iterates over this final
    /// fraction of the steps instead of the best one.
    pub tail_average: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 5000,
            lr: 0.05,
            lr_decay: 0.5,
            patience: 50,
            lr_min: 1e-5,
            smoothing: 0.9,
            batch_n: 512,
            batch_m: 512,
            seed: Seed(0),
            spectral_projection: None,
            tol_grad: 1e-6,
            init_scale: 0.1,
            checkpoint_every: 0,
            tail_average: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.steps == 0 {
            return bad("steps must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.tol_grad > 0.0) {
            return bad("tol_grad must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.smoothing) {
            return bad("smoothing must lie in [0, 1)");
        }
        if !(self.lr_min >= 0.0) {
            return bad("lr_min must be non-negative");
        }
        if !(0.0..1.0).contains(&self.tail_average) {
            return bad("tail_average must lie in [0, 1)");
        }
        if self.batch_n == 0 || self.batch_m == 0 {
            return bad("batch sizes must be at least 1");
        }
        if let Some(b) = self.spectral_projection {
            if !(b > 0.0) {
                return bad("spectral_projection bound must be positive");
            }
        }
        if !(self.init_scale > 0.0) {
            return bad("init_scale must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub loss: Vec<f64>,
    pub grad_norm: Vec<f64>,
    pub smoothed_loss: Vec<f64>,
    pub best_loss: Vec<f64>,
    pub lr: Vec<f64>,
    pub spectral_norm: Vec<f64>,
    /// `(step, containment angle in radians)` at checkpoints.
    pub angles: Vec<(usize, f64)>,
    pub best_step: usize,
    /// Number of iterates in the returned average (0 when the best iterate is returned).
    pub averaged: usize,
    pub converged: bool,
    pub retried: bool,
}

impl TrainTrace {
    pub fn steps_executed(&self) -> usize {
        self.loss.len()
    }

    /// Spectrum shrinking towards zero at the end of the run.
    pub fn collapsed(&self) -> bool {
        self.spectral_norm.last().is_some_and(|&s| s < 0.1)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "loss", "grad_norm", "max_principal_angle"])?;
        let mut checkpoints = self.angles.iter().peekable();
        for step in 0..self.loss.len() {
            let angle = match checkpoints.peek() {
                Some(&&(s, a)) if s == step => {
                    checkpoints.next();
                    crate::json::fmt_f64(a)
                }
                _ => String::new(),
            };
            w.write_record([
                step.to_string(),
                crate::json::fmt_f64(self.loss[step]),
                crate::json::fmt_f64(self.grad_norm[step]),
                angle,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A loss and its gradient at a given step. Stochastic objectives must draw
/// their batch from a generator determined by `(cfg.seed, step)` only.
pub trait Objective {
    fn evaluate(&self, a: &ProjectionMap, step: usize, cfg: &TrainConfig) -> Result<(f64, DMatrix<f64>)>;
}

impl<F> Objective for F
where
    F: Fn(&ProjectionMap, usize, &TrainConfig) -> Result<(f64, DMatrix<f64>)>,
{
    fn evaluate(&self, a: &ProjectionMap, step: usize, cfg: &TrainConfig) -> Result<(f64, DMatrix<f64>)> {
        self(a, step, cfg)
    }
}

fn batch_seed(cfg: &TrainConfig, step: usize) -> Seed {
    cfg.seed.derive_path(&[stream::TRAIN, step as u64])
}

/// Where training pairs come from: fresh draws from the augmentation model,
/// or rows resampled with replacement from a fixed pool.
#[derive(Debug, Clone)]
pub enum PairSource {
    Fresh(AedConfig),
    Pool(PairSample),
}

impl PairSource {
    /// `n` row-aligned pairs and `m` negatives.
    pub fn draw<R: Rng + ?Sized>(&self, n: usize, m: usize, rng: &mut R) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        match self {
            PairSource::Fresh(aed) => {
                let pairs = aed.sample_matrix(n, rng);
                let (negatives, _) = aed.base.sample_matrix(m, rng);
                (pairs.x, pairs.x_hat, negatives)
            }
            PairSource::Pool(pool) => {
                let size = pool.x.nrows();
                let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..size)).collect();
                let neg: Vec<usize> = (0..m).map(|_| rng.random_range(0..size)).collect();
                (pool.x.select_rows(&idx), pool.x_hat.select_rows(&idx), pool.x.select_rows(&neg))
            }
        }
    }
}

/// InfoNCE on a fresh batch at every step.
pub struct InfoNceTask {
    pub source: PairSource,
}

impl InfoNceTask {
    fn batch(&self, seed: Seed, cfg: &TrainConfig) -> Result<Batch> {
        let (x, x_hat, negatives) = self.source.draw(cfg.batch_n, cfg.batch_m, &mut seed.rng());
        Batch::new(x, x_hat, negatives)
    }
}

impl Objective for InfoNceTask {
    fn evaluate(&self, a: &ProjectionMap, step: usize, cfg: &TrainConfig) -> Result<(f64, DMatrix<f64>)> {
        objectives::infonce_loss_grad(a, &self.batch(batch_seed(cfg, step), cfg)?)
    }
}

/// Modified SimSiam on a fresh batch at every step; negatives are not used.
pub struct SimSiamTask {
    pub source: PairSource,
    pub siam: SiamConfig,
}

impl SimSiamTask {
    fn batch(&self, seed: Seed, cfg: &TrainConfig) -> Result<Batch> {
        let (x, x_hat, _) = self.source.draw(cfg.batch_n, 0, &mut seed.rng());
        let d = x.ncols();
        Batch::new(x, x_hat, DMatrix::zeros(1, d))
    }
}

impl Objective for SimSiamTask {
    fn evaluate(&self, a: &ProjectionMap, step: usize, cfg: &TrainConfig) -> Result<(f64, DMatrix<f64>)> {
        objectives::simsiam_loss_grad(a, &self.batch(batch_seed(cfg, step), cfg)?, &self.siam)
    }
}

/// Closed-form SimSiam objective; deterministic.
pub struct PopulationSimSiamTask {
    pub model: SharedGmm,
    pub delta: f64,
    pub xi: f64,
}

impl Objective for PopulationSimSiamTask {
    fn evaluate(&self, a: &ProjectionMap, _step: usize, _cfg: &TrainConfig) -> Result<(f64, DMatrix<f64>)> {
        let loss = objectives::simsiam_population_loss(a, &self.model, self.delta, self.xi)?;
        let grad = objectives::simsiam_population_grad(a, &self.model, self.delta, self.xi)?;
        Ok((loss, grad))
    }
}

/// How the CLIP task treats the negatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipNegatives {
    /// `batch_m` sampled negatives per step.
    #[default]
    Batch,
    /// Closed-form expectation under the model; only queries are sampled.
    Expected,
}

/// CLIP loss over the stacked map `[A_v; A_t]` (`d_v + d_t` rows).
pub struct ClipTask {
    pub model: ClipGmm,
    pub variant: ClipVariant,
    pub negatives: ClipNegatives,
}

impl ClipTask {
    pub fn split(&self, stacked: &ProjectionMap) -> Result<(ProjectionMap, ProjectionMap)> {
        let (dv, dt) = (self.model.dim_v(), self.model.dim_t());
        let m = stacked.matrix();
        if m.nrows() != dv + dt {
            return Err(Error::Dimension(format!("stacked map needs {} rows, has {}", dv + dt, m.nrows())));
        }
        Ok((
            ProjectionMap::new(m.rows(0, dv).into_owned())?,
            ProjectionMap::new(m.rows(dv, dt).into_owned())?,
        ))
    }

    fn batch(&self, seed: Seed, cfg: &TrainConfig) -> Result<ClipBatch> {
        let mut rng = seed.rng();
        let pairs = self.model.sample_matrix(cfg.batch_n, &mut rng);
        let negatives = self.model.sample_matrix(cfg.batch_m, &mut rng);
        let negatives_t = match self.variant {
            ClipVariant::Symmetric => Some(negatives.x_t),
            ClipVariant::VNegatives => None,
        };
        ClipBatch::new(pairs.x_v, pairs.x_t, negatives.x_v, negatives_t)
    }

    fn loss_grads(&self, a: &ProjectionMap, seed: Seed, cfg: &TrainConfig) -> Result<(f64, DMatrix<f64>, DMatrix<f64>)> {
        let (a_v, a_t) = self.split(a)?;
        match self.negatives {
            ClipNegatives::Batch => objectives::clip_loss_grads(&a_v, &a_t, &self.batch(seed, cfg)?, self.variant),
            ClipNegatives::Expected => {
                let q = self.model.sample_matrix(cfg.batch_n, &mut seed.rng());
                objectives::clip_expected_loss_grads(&a_v, &a_t, &self.model, &q.x_v, &q.x_t, self.variant)
            }
        }
    }
}

impl Objective for ClipTask {
    fn evaluate(&self, a: &ProjectionMap, step: usize, cfg: &TrainConfig) -> Result<(f64, DMatrix<f64>)> {
        let (loss, g_v, g_t) = self.loss_grads(a, batch_seed(cfg, step), cfg)?;
        let mut grad = DMatrix::zeros(g_v.nrows() + g_t.nrows(), g_v.ncols());
        grad.rows_mut(0, g_v.nrows()).copy_from(&g_v);
        grad.rows_mut(g_v.nrows(), g_t.nrows()).copy_from(&g_t);
        Ok((loss, grad))
    }
}

/// Clips the singular values of `a` at `bound`. Maps already inside the
/// ball are returned unchanged.
pub fn spectral_clip(a: &ProjectionMap, bound: f64) -> Result<ProjectionMap> {
    if !(bound > 0.0 && bound.is_finite()) {
        return Err(Error::InvalidArgument(format!("bound must be positive, got {bound}")));
    }
    let svd = linalg::svd_sorted(a.matrix());
    if svd.singular_values[0] <= bound {
        return Ok(a.clone());
    }
    let clipped: Vec<f64> = svd.singular_values.iter().map(|&s| s.min(bound)).collect();
    let sigma = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(clipped));
    ProjectionMap::new(&svd.u * sigma * &svd.v_t)
}

/// Gaussian `d x r` map with entries `N(0, 1) · scale / √d`, redrawn until
/// its smallest singular value exceeds 1e-8 (checked only when `r ≤ d`).
pub fn init_projection<R: Rng + ?Sized>(d: usize, r: usize, scale: f64, rng: &mut R) -> Result<ProjectionMap> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidArgument(format!("init scale must be positive, got {scale}")));
    }
    if d == 0 || r == 0 {
        return Err(Error::InvalidArgument("init dimensions must be positive".into()));
    }
    loop {
        let a = linalg::standard_normal_matrix(d, r, rng) * (scale / (d as f64).sqrt());
        if r > d || linalg::singular_values_desc(&a)[r - 1] >= 1e-8 {
            return ProjectionMap::new(a);
        }
    }
}

struct Evaluated {
    loss: f64,
    grad: DMatrix<f64>,
}

fn evaluate_checked<O: Objective + ?Sized>(
    objective: &O,
    a: &ProjectionMap,
    step: usize,
    cfg: &TrainConfig,
) -> Result<std::result::Result<Evaluated, String>> {
    match objective.evaluate(a, step, cfg) {
        Ok((loss, grad)) => {
            if grad.shape() != a.matrix().shape() {
                return Err(Error::Dimension("gradient shape differs from the map".into()));
            }
            if !loss.is_finite() {
                Ok(Err(format!("loss is {loss}")))
            } else if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
                Ok(Err(format!("gradient entry {i} is non-finite")))
            } else {
                Ok(Ok(Evaluated { loss, grad }))
            }
        }
        Err(e @ Error::NonFinite { .. }) => Ok(Err(e.to_string())),
        Err(e) => Err(e),
    }
}

/// Runs gradient descent from `init`. Returns the iterate with the lowest
/// smoothed loss, unless `tail_average` asks for the mean of the final
/// iterates. `monitor`, if given, is compared against at checkpoints.
pub fn train<O: Objective + ?Sized>(
    objective: &O,
    init: ProjectionMap,
    cfg: &TrainConfig,
    monitor: Option<&Subspace>,
) -> Result<(ProjectionMap, TrainTrace)> {
    cfg.validate()?;
    let mut a = match cfg.spectral_projection {
        Some(b) => spectral_clip(&init, b)?,
        None => init,
    };
    let mut trace = TrainTrace::default();
    let mut best = a.clone();
    let mut best_smoothed = f64::INFINITY;
    let mut plateau_best = f64::INFINITY;
    let mut since_improvement = 0usize;
    let mut ema_loss = None::<f64>;
    let mut ema_grad = None::<f64>;
    let mut lr = cfg.lr;
    let beta = cfg.smoothing;
    let average_from = if cfg.tail_average > 0.0 {
        cfg.steps - ((cfg.tail_average * cfg.steps as f64).ceil() as usize).min(cfg.steps)
    } else {
        usize::MAX
    };
    let mut sum = DMatrix::zeros(0, 0);

    let mut step = 0;
    while step < cfg.steps {
        let eval = match evaluate_checked(objective, &a, step, cfg)? {
            Ok(e) => e,
            Err(reason) => {
                if trace.retried {
                    return Err(Error::TrainingAborted { step, reason, trace: Box::new(trace) });
                }
                trace.retried = true;
                // fall back to the best iterate and retry with a smaller step
                lr *= 0.1;
                a = best.clone();
                match evaluate_checked(objective, &a, step, cfg)? {
                    Ok(e) => e,
                    Err(reason) => return Err(Error::TrainingAborted { step, reason, trace: Box::new(trace) }),
                }
            }
        };
        let gnorm = eval.grad.norm();
        let smoothed = ema_loss.map_or(eval.loss, |e| beta * e + (1.0 - beta) * eval.loss);
        let smoothed_grad = ema_grad.map_or(gnorm, |e| beta * e + (1.0 - beta) * gnorm);
        ema_loss = Some(smoothed);
        ema_grad = Some(smoothed_grad);

        if smoothed < best_smoothed {
            best_smoothed = smoothed;
            best = a.clone();
            trace.best_step = step;
        }
        if smoothed < plateau_best {
            plateau_best = smoothed;
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= cfg.patience {
                lr = (lr * cfg.lr_decay).max(cfg.lr_min);
                since_improvement = 0;
                plateau_best = smoothed;
            }
        }

        trace.loss.push(eval.loss);
        trace.grad_norm.push(gnorm);
        trace.smoothed_loss.push(smoothed);
        trace.best_loss.push(best_smoothed);
        trace.lr.push(lr);
        trace.spectral_norm.push(a.spectral_norm());
        if let Some(reference) = monitor {
            if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 {
                let report = containment_report(&a, reference, RANK_TOL_TRAINED, ANGLE_TOL_TRAINED)?;
                trace.angles.push((step, report.containment_angle));
            }
        }

        if step >= average_from {
            if trace.averaged == 0 {
                sum = a.matrix().clone();
            } else {
                sum += a.matrix();
            }
            trace.averaged += 1;
        }
        if smoothed_grad < cfg.tol_grad {
            trace.converged = true;
            break;
        }
        let next = ProjectionMap::new(a.matrix() - &eval.grad * lr)?;
        a = match cfg.spectral_projection {
            Some(b) => spectral_clip(&next, b)?,
            None => next,
        };
        step += 1;
    }
    if trace.averaged > 0 {
        return Ok((ProjectionMap::new(sum / trace.averaged as f64)?, trace));
    }
    Ok((best, trace))
}

/// `train` from a fresh random initialisation drawn on the init substream.
pub fn train_from_random<O: Objective + ?Sized>(
    objective: &O,
    d: usize,
    r: usize,
    cfg: &TrainConfig,
    monitor: Option<&Subspace>,
) -> Result<(ProjectionMap, TrainTrace)> {
    let mut rng = cfg.seed.derive(stream::INIT).rng();
    let init = init_projection(d, r, cfg.init_scale, &mut rng)?;
    train(objective, init, cfg, monitor)
}
