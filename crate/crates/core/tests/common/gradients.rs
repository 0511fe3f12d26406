use fisher_ssl::objectives::{self, Batch, ClipBatch, ClipVariant, SiamConfig};
use fisher_ssl::{ProjectionMap, Seed};
use nalgebra::DMatrix;
use rand::Rng;

use super::{fd_grad, normal_matrix, random_centered_model, random_clip_model, rel_err};

pub const FD_STEP: f64 = 1e-5;
pub const INSTANCES: u64 = 20;

fn pm(a: &DMatrix<f64>) -> ProjectionMap {
    ProjectionMap::new(a.clone()).unwrap()
}

fn random_batch<R: Rng + ?Sized>(rng: &mut R) -> Batch {
    let (n, m, d) = (rng.random_range(2..7), rng.random_range(2..7), rng.random_range(2..7));
    let x = normal_matrix(n, d, 1.0, rng);
    let x_hat = &x + normal_matrix(n, d, 0.5, rng);
    Batch::new(x, x_hat, normal_matrix(m, d, 1.0, rng)).unwrap()
}

fn infonce(seed: u64) -> f64 {
    let mut rng = Seed(seed).rng();
    let b = random_batch(&mut rng);
    let a = normal_matrix(b.dim(), rng.random_range(1..4), 0.7, &mut rng);
    let g = objectives::infonce_grad(&pm(&a), &b).unwrap();
    rel_err(&g, &fd_grad(|a| objectives::infonce_loss(&pm(a), &b).unwrap(), &a, FD_STEP))
}

fn simsiam(seed: u64) -> f64 {
    let mut rng = Seed(seed).rng();
    let b = random_batch(&mut rng);
    let cfg = SiamConfig::new(rng.random_range(0.05..1.0)).unwrap();
    let a = normal_matrix(b.dim(), rng.random_range(1..4), 0.7, &mut rng);
    let g = objectives::simsiam_grad(&pm(&a), &b, &cfg).unwrap();
    rel_err(&g, &fd_grad(|a| objectives::simsiam_loss(&pm(a), &b, &cfg).unwrap(), &a, FD_STEP))
}

fn simsiam_population(seed: u64) -> f64 {
    let mut rng = Seed(seed).rng();
    let (k, d) = (rng.random_range(2..5), rng.random_range(2..7));
    let model = random_centered_model(k, d, &mut rng);
    let (delta, xi) = (rng.random_range(0.0..1.0), rng.random_range(0.01..1.0));
    let a = normal_matrix(d, rng.random_range(1..4), 0.7, &mut rng);
    let g = objectives::simsiam_population_grad(&pm(&a), &model, delta, xi).unwrap();
    let f = |a: &DMatrix<f64>| objectives::simsiam_population_loss(&pm(a), &model, delta, xi).unwrap();
    rel_err(&g, &fd_grad(f, &a, FD_STEP))
}

/// Worst of the two per-side errors for a CLIP-style loss.
fn clip_pair(
    a_v: &DMatrix<f64>,
    a_t: &DMatrix<f64>,
    grads: (DMatrix<f64>, DMatrix<f64>),
    loss: impl Fn(&DMatrix<f64>, &DMatrix<f64>) -> f64,
) -> f64 {
    let fv = fd_grad(|a| loss(a, a_t), a_v, FD_STEP);
    let ft = fd_grad(|a| loss(a_v, a), a_t, FD_STEP);
    rel_err(&grads.0, &fv).max(rel_err(&grads.1, &ft))
}

fn clip_batch(seed: u64, variant: ClipVariant) -> f64 {
    let mut rng = Seed(seed).rng();
    let (n, m, d1, d2, r) =
        (rng.random_range(2..7), rng.random_range(2..7), rng.random_range(2..7), rng.random_range(2..7), rng.random_range(1..4));
    let neg_t = match variant {
        ClipVariant::Symmetric => Some(normal_matrix(m, d2, 1.0, &mut rng)),
        ClipVariant::VNegatives => None,
    };
    let b = ClipBatch::new(
        normal_matrix(n, d1, 1.0, &mut rng),
        normal_matrix(n, d2, 1.0, &mut rng),
        normal_matrix(m, d1, 1.0, &mut rng),
        neg_t,
    )
    .unwrap();
    let a_v = normal_matrix(d1, r, 0.7, &mut rng);
    let a_t = normal_matrix(d2, r, 0.7, &mut rng);
    let grads = objectives::clip_grads(&pm(&a_v), &pm(&a_t), &b, variant).unwrap();
    clip_pair(&a_v, &a_t, grads, |v, t| objectives::clip_loss(&pm(v), &pm(t), &b, variant).unwrap())
}

fn clip_expected(seed: u64, variant: ClipVariant) -> f64 {
    let mut rng = Seed(seed).rng();
    let (k, d1, d2, r) = (rng.random_range(2..5), rng.random_range(2..7), rng.random_range(2..7), rng.random_range(1..4));
    let model = random_clip_model(k, d1, d2, &mut rng);
    let q = model.sample_matrix(rng.random_range(1..9), &mut rng);
    let a_v = normal_matrix(d1, r, 0.7, &mut rng);
    let a_t = normal_matrix(d2, r, 0.7, &mut rng);
    let eval = |v: &DMatrix<f64>, t: &DMatrix<f64>| {
        objectives::clip_expected_loss_grads(&pm(v), &pm(t), &model, &q.x_v, &q.x_t, variant).unwrap()
    };
    let (_, gv, gt) = eval(&a_v, &a_t);
    clip_pair(&a_v, &a_t, (gv, gt), |v, t| eval(v, t).0)
}

/// `(loss name, worst relative error over the instances)` for every analytic gradient.
pub fn suite() -> Vec<(&'static str, f64)> {
    let worst = |f: &dyn Fn(u64) -> f64| (0..INSTANCES).map(|s| f(1000 + s)).fold(0.0, f64::max);
    vec![
        ("infonce", worst(&infonce)),
        ("simsiam", worst(&simsiam)),
        ("simsiam_population", worst(&simsiam_population)),
        ("clip_batch_v_negatives", worst(&|s| clip_batch(s, ClipVariant::VNegatives))),
        ("clip_batch_symmetric", worst(&|s| clip_batch(s, ClipVariant::Symmetric))),
        ("clip_expected_v_negatives", worst(&|s| clip_expected(s, ClipVariant::VNegatives))),
        ("clip_expected_symmetric", worst(&|s| clip_expected(s, ClipVariant::Symmetric))),
    ]
}
