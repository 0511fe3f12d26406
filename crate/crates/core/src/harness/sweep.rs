use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::models;
use super::{run_method, score, subspace_j, Experiment, Method, MethodInput, ResultRow, ScenarioConfig, CSV_HEADER};
use crate::error::{Error, Result};
use crate::mixture::{AedConfig, SharedGmm};
use crate::objectives::ClipVariant;
use crate::optim::{self, ClipTask};
use crate::rng::{stream, Seed};
use crate::subspace::{containment_report, fisher_subspace, ANGLE_TOL_TRAINED, RANK_TOL_TRAINED};

pub(super) const PANCAKE_DIM: usize = 3;
pub(super) const PANCAKE_SEPARATION: f64 = 3.0;
pub(super) const PANCAKE_SPREAD: f64 = 64.0;
/// Spread up to which the configured learning rate is used unscaled.
const PANCAKE_LR_SPREAD: f64 = 6.4;
pub(super) const COLLAPSE_DIM: usize = 4;
pub(super) const COLLAPSE_MEAN_NORM: f64 = 3.0;
/// SimSiam regulariser of the collapse run, as a multiple of the equality bound.
const COLLAPSE_XI_FACTOR: f64 = 4.0;

/// Rows plus human-readable observations.
#[derive(Debug, Clone, Default)]
pub struct DemoReport {
    pub rows: Vec<ResultRow>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SweepSummary {
    pub written: usize,
    pub skipped_cells: usize,
}

struct Row<'a> {
    cfg: &'a ScenarioConfig,
    value: f64,
    seed: u64,
}

impl Row<'_> {
    fn make(&self, method: &str, ari: f64, ami: f64, angle_deg: f64, j: f64, started: Instant) -> ResultRow {
        ResultRow {
            experiment: self.cfg.experiment.name().into(),
            method: method.into(),
            param: self.cfg.experiment.param().into(),
            value: self.value,
            seed: self.seed,
            ari,
            ami,
            angle_deg,
            j,
            wallclock_s: if self.cfg.record_wallclock { started.elapsed().as_secs_f64() } else { 0.0 },
        }
    }
}

/// Method labels a cell of this config produces, in output order.
pub fn method_labels(cfg: &ScenarioConfig) -> Vec<String> {
    match cfg.experiment {
        Experiment::Clip => vec!["clip_v".into(), "clip_t".into()],
        Experiment::CollapseDemo => vec!["infonce".into(), "simsiam".into(), "simsiam_large_xi".into()],
        _ => {
            let mut out = Vec::new();
            for m in &cfg.methods {
                out.push(m.name().to_string());
                if cfg.orthonormalize && m.is_learned() {
                    out.push(format!("{}_ortho", m.name()));
                }
            }
            out
        }
    }
}

struct CellModel {
    model: SharedGmm,
    delta: f64,
    r: usize,
    baseline_r: usize,
}

fn cell_model(cfg: &ScenarioConfig, value: f64, seed: u64) -> Result<CellModel> {
    let mut rng = Seed(seed).derive(stream::MODEL).rng();
    let r = cfg.target_dim();
    let br = cfg.baseline_r.unwrap_or(r);
    let cell = |model, delta, r, baseline_r| Ok(CellModel { model, delta, r, baseline_r });
    match cfg.experiment {
        Experiment::DeltaSweep => cell(models::make_appendix_g_model(cfg.k, cfg.d, cfg.kappa, &mut rng)?, value, r, br),
        Experiment::FlatnessSweep => {
            cell(models::make_appendix_g_model(cfg.k, cfg.d, 1.0 / value, &mut rng)?, cfg.delta, r, br)
        }
        Experiment::RankSweep => {
            let r = value as usize;
            let model = models::make_appendix_g_model(cfg.k, cfg.d, cfg.kappa, &mut rng)?;
            cell(model, cfg.delta, r, cfg.baseline_r.unwrap_or(r))
        }
        Experiment::ScalingSweep => cell(models::make_scaling_model(cfg.k, value, &mut rng)?, cfg.delta, r, br),
        Experiment::PancakeDemo => {
            let model = models::make_pancake_model(PANCAKE_DIM, PANCAKE_SEPARATION, value)?;
            cell(model, cfg.delta, cfg.r.unwrap_or(2), cfg.baseline_r.unwrap_or(1))
        }
        Experiment::CollapseDemo => cell(models::make_collapse_model(COLLAPSE_DIM, value)?, cfg.delta, 1, 1),
        Experiment::Clip => Err(Error::Config("clip cells have no shared mixture".into())),
    }
}

fn unit_direction(m: &DMatrix<f64>) -> Vec<f64> {
    let col = m.column(0);
    let norm = col.norm();
    col.iter().map(|v| if norm > 0.0 { v / norm } else { 0.0 }).collect()
}

/// All rows of one (value, seed) cell, skipping labels in `done`.
fn gmm_cell(cfg: &ScenarioConfig, value: f64, seed: u64, done: &HashSet<String>) -> Result<DemoReport> {
    let setup = cell_model(cfg, value, seed)?;
    let model = &setup.model;
    let fisher = fisher_subspace(model)?;
    let cell_seed = Seed(seed).derive(value.to_bits());
    let aed = AedConfig::new(model.clone(), setup.delta)?;
    let pool = aed.sample_matrix(cfg.n_train, &mut cell_seed.derive(stream::DATA).rng());
    let eval = model.sample_matrix(cfg.n_eval, &mut cell_seed.derive(stream::EVAL).rng());
    let k = model.num_components();
    let row = Row { cfg, value, seed };
    let mut report = DemoReport::default();

    let mut jobs: Vec<(String, Method, Option<f64>)> = Vec::new();
    if cfg.experiment == Experiment::CollapseDemo {
        let bound = crate::objectives::simsiam_xi_bound(model, setup.delta);
        jobs.push(("infonce".into(), Method::Infonce, None));
        jobs.push(("simsiam".into(), Method::Simsiam, cfg.xi));
        jobs.push(("simsiam_large_xi".into(), Method::Simsiam, Some(COLLAPSE_XI_FACTOR * bound)));
    } else {
        for &m in &cfg.methods {
            jobs.push((m.name().into(), m, None));
        }
    }

    for (label, method, xi) in jobs {
        let ortho_label = format!("{label}_ortho");
        let want_ortho = cfg.orthonormalize && method.is_learned() && cfg.experiment != Experiment::CollapseDemo;
        if done.contains(&label) && (!want_ortho || done.contains(&ortho_label)) {
            continue;
        }
        let started = Instant::now();
        let mut method_cfg = cfg.clone();
        if xi.is_some() {
            method_cfg.xi = xi;
        }
        if cfg.experiment == Experiment::PancakeDemo {
            // the step must shrink with the spread or InfoNCE overshoots and diverges
            method_cfg.train.lr *= (PANCAKE_LR_SPREAD / value).min(1.0);
        }
        let cfg_for_method = &method_cfg;
        let input = MethodInput {
            model,
            delta: setup.delta,
            r: setup.r,
            baseline_r: setup.baseline_r,
            pool: &pool,
            fisher: &fisher,
            seed: cell_seed.derive(method.tag()),
        };
        let out = run_method(method, &input, cfg_for_method)?;
        let scores = score(&out.map, &eval, k, &cfg.kmeans, input.seed)?;
        if !done.contains(&label) {
            report.rows.push(row.make(
                &label,
                scores.ari,
                scores.ami,
                out.report.containment_angle_deg(),
                out.j,
                started,
            ));
        }
        if want_ortho && !done.contains(&ortho_label) {
            let ortho = out.orthonormalized(model)?;
            let s = score(&ortho.map, &eval, k, &cfg.kmeans, input.seed)?;
            report.rows.push(row.make(&ortho_label, s.ari, s.ami, ortho.report.containment_angle_deg(), ortho.j, started));
        }
        if matches!(cfg.experiment, Experiment::CollapseDemo | Experiment::PancakeDemo) {
            let dir = unit_direction(out.map.matrix());
            let mut note = format!(
                "{label}: first direction {:?}, spectral norm {:.4}",
                dir.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>(),
                out.map.spectral_norm()
            );
            if cfg.experiment == Experiment::CollapseDemo {
                // angle to the line x + y = 0 within the first two coordinates
                let cos = ((dir[0] - dir[1]) / std::f64::consts::SQRT_2).abs().min(1.0);
                note.push_str(&format!(", angle to x+y=0: {:.2} deg", cos.acos().to_degrees()));
                if let Some(x) = out.xi {
                    note.push_str(&format!(", xi {x:.4}"));
                }
                if out.trace.as_ref().is_some_and(|t| t.collapsed()) {
                    note.push_str(", collapsed");
                }
            }
            report.notes.push(note);
        }
    }
    Ok(report)
}

/// CLIP cell: one jointly trained pair of maps scored per modality.
fn clip_cell(cfg: &ScenarioConfig, value: f64, seed: u64, done: &HashSet<String>) -> Result<DemoReport> {
    let aligned = value == 1.0;
    let mut report = DemoReport::default();
    if done.contains("clip_v") && done.contains("clip_t") {
        return Ok(report);
    }
    let started = Instant::now();
    let model = models::make_clip_model(cfg.k, cfg.d1, cfg.d2, aligned, &mut Seed(seed).derive(stream::MODEL).rng())?;
    let (mv, mt) = (model.marginal_v(), model.marginal_t());
    let (fv, ft) = (fisher_subspace(&mv)?, fisher_subspace(&mt)?);
    let cell_seed = Seed(seed).derive(value.to_bits());
    let mut tcfg = cfg.clip_train.clone();
    tcfg.seed = cfg.clip_train.seed.derive_path(&[cell_seed.0, stream::TRAIN]);
    let task = ClipTask { model: model.clone(), variant: ClipVariant::VNegatives, negatives: cfg.clip_negatives };
    let (stacked, _) = optim::train_from_random(&task, cfg.d1 + cfg.d2, cfg.target_dim(), &tcfg, None)?;
    let (a_v, a_t) = task.split(&stacked)?;
    let eval = model.sample_matrix(cfg.n_eval, &mut cell_seed.derive(stream::EVAL).rng());
    let k = model.num_components();
    let row = Row { cfg, value, seed };
    for (label, map, marginal, fisher, x) in
        [("clip_v", &a_v, &mv, &fv, &eval.x_v), ("clip_t", &a_t, &mt, &ft, &eval.x_t)]
    {
        if done.contains(label) {
            continue;
        }
        let rep = containment_report(map, fisher, RANK_TOL_TRAINED, ANGLE_TOL_TRAINED)?;
        let j = subspace_j(marginal, map, RANK_TOL_TRAINED)?;
        let s = score(map, &(x.clone(), eval.z.clone()), k, &cfg.kmeans, cell_seed.derive(label.len() as u64))?;
        report.rows.push(row.make(label, s.ari, s.ami, rep.containment_angle_deg(), j, started));
    }
    Ok(report)
}

fn run_cell(cfg: &ScenarioConfig, value: f64, seed: u64, done: &HashSet<String>) -> Result<DemoReport> {
    match cfg.experiment {
        Experiment::Clip => clip_cell(cfg, value, seed, done),
        _ => gmm_cell(cfg, value, seed, done),
    }
}

/// CLIP rows for a single cell.
pub fn clip_rows(cfg: &ScenarioConfig, aligned: bool, seed: u64) -> Result<Vec<ResultRow>> {
    let cfg = ScenarioConfig { experiment: Experiment::Clip, ..cfg.clone() };
    Ok(clip_cell(&cfg, if aligned { 1.0 } else { 0.0 }, seed, &HashSet::new())?.rows)
}

fn cells(cfg: &ScenarioConfig) -> Vec<(f64, u64)> {
    cfg.grid().into_iter().flat_map(|v| cfg.seeds.iter().map(move |&s| (v, s))).collect()
}

fn pool(cfg: &ScenarioConfig) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        b = b.num_threads(t);
    }
    b.build().map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Runs every cell and returns the rows in grid-then-seed order.
pub fn sweep_rows(cfg: &ScenarioConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let none = HashSet::new();
    let results: Vec<Result<DemoReport>> =
        pool(cfg)?.install(|| cells(cfg).par_iter().map(|&(v, s)| run_cell(cfg, v, s, &none)).collect());
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?.rows);
    }
    Ok(rows)
}

fn demo(cfg: &ScenarioConfig, experiment: Experiment) -> Result<DemoReport> {
    let cfg = ScenarioConfig { experiment, ..cfg.clone() };
    cfg.validate()?;
    let mut out = DemoReport::default();
    for (v, s) in cells(&cfg) {
        let rep = run_cell(&cfg, v, s, &HashSet::new())?;
        out.rows.extend(rep.rows);
        out.notes.extend(rep.notes.into_iter().map(|n| format!("seed {s}: {n}")));
    }
    Ok(out)
}

/// Two parallel pancakes: spectral baseline against the learned map.
pub fn pancake_demo(cfg: &ScenarioConfig) -> Result<DemoReport> {
    demo(cfg, Experiment::PancakeDemo)
}

/// Rank-one maps on two components placed on the coordinate axes.
pub fn collapse_demo(cfg: &ScenarioConfig) -> Result<DemoReport> {
    demo(cfg, Experiment::CollapseDemo)
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Config(format!("{} does not carry the result header", path.display())));
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

fn existing_header_ok(path: &Path) -> Result<bool> {
    let mut first = String::new();
    BufReader::new(File::open(path)?).read_line(&mut first)?;
    Ok(first.trim_end() == CSV_HEADER)
}

/// Runs the sweep into `out`. With `resume`, rows already present (keyed by
/// experiment, method, parameter value and seed) are not recomputed.
/// Completed cells are flushed in order after every parallel batch.
pub fn run_sweep(cfg: &ScenarioConfig, out: &Path, resume: bool) -> Result<SweepSummary> {
    cfg.validate()?;
    let mut done: HashSet<(String, u64, u64)> = HashSet::new();
    let append = resume && out.exists() && std::fs::metadata(out)?.len() > 0;
    if append {
        if !existing_header_ok(out)? {
            return Err(Error::Config(format!("{} does not carry the result header", out.display())));
        }
        for r in read_rows(out)? {
            if r.experiment == cfg.experiment.name() && r.param == cfg.experiment.param() {
                done.insert((r.method, r.value.to_bits(), r.seed));
            }
        }
    }
    let file = if append { OpenOptions::new().append(true).open(out)? } else { File::create(out)? };
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if !append {
        w.write_record(CSV_HEADER.split(','))?;
        w.flush()?;
    }

    let labels = method_labels(cfg);
    let mut summary = SweepSummary::default();
    let mut pending = Vec::new();
    for (v, s) in cells(cfg) {
        let have: HashSet<String> =
            labels.iter().filter(|l| done.contains(&((*l).clone(), v.to_bits(), s))).cloned().collect();
        if have.len() == labels.len() {
            summary.skipped_cells += 1;
        } else {
            pending.push((v, s, have));
        }
    }

    let workers = pool(cfg)?;
    let chunk = workers.current_num_threads().max(1);
    for batch in pending.chunks(chunk) {
        let results: Vec<Result<DemoReport>> =
            workers.install(|| batch.par_iter().map(|(v, s, have)| run_cell(cfg, *v, *s, have)).collect());
        let mut first_err = None;
        for r in results {
            match r {
                Ok(rep) => {
                    for row in rep.rows {
                        w.serialize(&row)?;
                        summary.written += 1;
                    }
                }
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        w.flush()?;
        if let Some(e) = first_err {
            return Err(e);
        }
    }
    Ok(summary)
}
