use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use fisher_ssl::harness::{self, models, Experiment, Method, MethodInput, ScenarioConfig};
use fisher_ssl::mixture::{AedConfig, SharedGmm};
use fisher_ssl::rng::{stream, Seed};
use fisher_ssl::subspace::{containment_report, fisher_subspace, ANGLE_TOL_TRAINED, RANK_TOL_TRAINED};
use fisher_ssl::{json, Error, ProjectionMap, Result};

#[derive(Parser)]
#[command(name = "fisher-ssl", version, about = "Linear self-supervised learning on Gaussian mixtures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    AppendixG,
    Scaling,
    Clip,
    Pancake,
    Collapse,
}

#[derive(Clone, Copy, ValueEnum)]
enum DemoKind {
    Pancake,
    Collapse,
}

#[derive(Subcommand)]
enum Command {
    /// Emit a mixture model as JSON.
    Generate {
        #[arg(long, value_enum, default_value = "appendix-g")]
        kind: ModelKind,
        #[arg(short = 'K', long = "components", default_value_t = 10)]
        k: usize,
        #[arg(short, long, default_value_t = 100)]
        d: usize,
        #[arg(long, default_value_t = 10.0)]
        kappa: f64,
        #[arg(long, default_value_t = 12)]
        d1: usize,
        #[arg(long, default_value_t = 8)]
        d2: usize,
        #[arg(long)]
        aligned: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Fit one method on a model and emit the map as JSON.
    Train {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        method: Method,
        #[arg(short, long)]
        r: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        delta: f64,
        #[arg(long)]
        xi: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long, default_value_t = 20_000)]
        n_train: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional JSON file with `train` settings, as in a scenario config.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the per-step trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario config and write result rows as CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Keep rows already in `out` and compute only the missing ones.
        #[arg(long)]
        resume: bool,
    },
    /// Score a map on a model: clustering agreement, angle to the Fisher subspace, J.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        map: PathBuf,
        #[arg(long, default_value_t = 5_000)]
        n_eval: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Singular values below this fraction of the largest are treated as zero.
        #[arg(long, default_value_t = RANK_TOL_TRAINED)]
        rank_tol: f64,
    },
    /// Small self-contained scenarios printed as CSV rows plus notes.
    Demo {
        #[arg(value_enum)]
        which: DemoKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        steps: Option<usize>,
    },
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => fs::write(p, format!("{text}\n"))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn print_rows(rows: &[harness::ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(std::io::stdout());
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { kind, k, d, kappa, d1, d2, aligned, seed, out } => {
            let mut rng = Seed(seed).derive(stream::MODEL).rng();
            let text = match kind {
                ModelKind::AppendixG => models::make_appendix_g_model(k, d, kappa, &mut rng)?.to_json(),
                ModelKind::Scaling => models::make_scaling_model(k, kappa, &mut rng)?.to_json(),
                ModelKind::Clip => models::make_clip_model(k, d1, d2, aligned, &mut rng)?.to_json(),
                ModelKind::Pancake => models::make_pancake_model(d, 3.0, kappa)?.to_json(),
                ModelKind::Collapse => models::make_collapse_model(d, kappa)?.to_json(),
            };
            emit(&text, out.as_deref())
        }
        Command::Train { model, method, r, delta, xi, steps, lr, n_train, seed, config, trace, out } => {
            let model = SharedGmm::from_json(&fs::read_to_string(model)?)?;
            let mut cfg = match config {
                Some(p) => ScenarioConfig::from_json(&fs::read_to_string(p)?)?,
                None => ScenarioConfig::default(),
            };
            cfg.k = model.num_components();
            cfg.d = model.dim();
            cfg.delta = delta;
            cfg.n_train = n_train;
            cfg.xi = xi.or(cfg.xi);
            if let Some(s) = steps {
                cfg.train.steps = s;
            }
            if let Some(l) = lr {
                cfg.train.lr = l;
            }
            cfg.validate()?;
            let r = r.unwrap_or(cfg.k);
            let fisher = fisher_subspace(&model)?;
            let cell = Seed(seed);
            let pool = AedConfig::new(model.clone(), delta)?.sample_matrix(n_train, &mut cell.derive(stream::DATA).rng());
            let input = MethodInput { model: &model, delta, r, baseline_r: r, pool: &pool, fisher: &fisher, seed: cell };
            let result = harness::run_method(method, &input, &cfg)?;
            if let (Some(path), Some(t)) = (trace, &result.trace) {
                t.write_csv(fs::File::create(path)?)?;
            }
            eprintln!("{}", result.report.to_json());
            emit(&result.map.to_json(), out.as_deref())
        }
        Command::Sweep { config, out, resume } => {
            let cfg = ScenarioConfig::from_json(&fs::read_to_string(config)?)?;
            let summary = harness::run_sweep(&cfg, &out, resume)?;
            eprintln!("wrote {} rows, skipped {} finished cells", summary.written, summary.skipped_cells);
            Ok(())
        }
        Command::Eval { model, map, n_eval, seed, rank_tol } => {
            let model = SharedGmm::from_json(&fs::read_to_string(model)?)?;
            let map = ProjectionMap::from_json(&fs::read_to_string(map)?)?;
            if map.ambient_dim() != model.dim() {
                return Err(Error::Config(format!("map has {} rows, model dimension is {}", map.ambient_dim(), model.dim())));
            }
            let fisher = fisher_subspace(&model)?;
            let eval = model.sample_matrix(n_eval, &mut Seed(seed).derive(stream::EVAL).rng());
            let scores = harness::score(&map, &eval, model.num_components(), &Default::default(), Seed(seed))?;
            let report = containment_report(&map, &fisher, rank_tol, ANGLE_TOL_TRAINED)?;
            let j = harness::subspace_j(&model, &map, rank_tol)?;
            println!(
                "{}",
                json::object(&[
                    ("ari", json::fmt_f64(scores.ari)),
                    ("ami", json::fmt_f64(scores.ami)),
                    ("angle_deg", json::fmt_f64(report.containment_angle_deg())),
                    ("J", json::fmt_f64(j)),
                    ("report", report.to_json()),
                ])
            );
            Ok(())
        }
        Command::Demo { which, seed, steps } => {
            let mut cfg = ScenarioConfig { seeds: vec![seed], n_eval: 2_000, ..Default::default() };
            if let Some(s) = steps {
                cfg.train.steps = s;
            }
            let report = match which {
                DemoKind::Pancake => {
                    cfg.experiment = Experiment::PancakeDemo;
                    cfg.k = 2;
                    harness::pancake_demo(&cfg)?
                }
                DemoKind::Collapse => {
                    cfg.experiment = Experiment::CollapseDemo;
                    cfg.k = 2;
                    harness::collapse_demo(&cfg)?
                }
            };
            print_rows(&report.rows)?;
            for note in &report.notes {
                eprintln!("{note}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
