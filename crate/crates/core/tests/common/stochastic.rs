//! Posterior preservation and Monte-Carlo moment checks.

use fisher_ssl::objectives::{self, Batch, SiamConfig};
use fisher_ssl::subspace::fisher_subspace;
use fisher_ssl::{AedConfig, ProjectionMap, Seed, SharedGmm};
use nalgebra::{DMatrix, DVector};

use super::{normal_matrix, random_centered_model, random_spd, random_weights};

pub const MC_SAMPLES: usize = 1_000_000;

/// Worst posterior gap between a model and its projection onto the Fisher
/// subspace, over `points` inputs for each of `models` random mixtures.
pub fn posterior_preservation(models: u64, points: usize) -> f64 {
    let mut worst = 0.0f64;
    for m in 0..models {
        let mut rng = Seed(500 + m).rng();
        let model = random_centered_model(3 + m as usize, 8, &mut rng);
        let a = fisher_subspace(&model).unwrap().as_map();
        let projected = model.project(&a).unwrap();
        // half drawn from the model, half from a broad Gaussian
        let (near, _) = model.sample_matrix(points / 2, &mut rng);
        let far = normal_matrix(points - points / 2, 8, 4.0, &mut rng);
        for x in near.row_iter().chain(far.row_iter()) {
            let x = x.transpose();
            let p = model.posterior(&x).unwrap();
            let q = projected.posterior(&(a.matrix().transpose() * &x)).unwrap();
            worst = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
        }
    }
    worst
}

/// Deviation of a sample mean from a target in standard errors.
pub fn z_score(values: impl Iterator<Item = f64>, target: f64) -> f64 {
    let (mut n, mut sum, mut sq) = (0.0, 0.0, 0.0);
    for v in values {
        n += 1.0;
        sum += v;
        sq += v * v;
    }
    let mean = sum / n;
    let var = (sq / n - mean * mean) * n / (n - 1.0);
    (mean - target).abs() / (var / n).sqrt()
}

/// Non-centered mixture in `R^2` so the `(1 − δ)` term of the cross moment matters.
pub fn offset_model() -> SharedGmm {
    let mut rng = Seed(77).rng();
    let means = vec![DVector::from_vec(vec![2.0, 0.5]), DVector::from_vec(vec![-1.0, 1.5]), DVector::from_vec(vec![0.5, -2.0])];
    SharedGmm::new(random_weights(3, &mut rng), means, random_spd(2, &mut rng)).unwrap()
}

/// `δ Σ_k w_k μ_k μ_kᵀ + (1 − δ) μ̄ μ̄ᵀ`, coded from the weights and means directly.
pub fn cross_moment_closed_form(model: &SharedGmm, delta: f64) -> DMatrix<f64> {
    let d = model.dim();
    let mut within = DMatrix::zeros(d, d);
    let mut bar = DVector::zeros(d);
    for (w, mu) in model.weights().iter().zip(model.means()) {
        within += mu * mu.transpose() * *w;
        bar += mu * *w;
    }
    within * delta + &bar * bar.transpose() * (1.0 - delta)
}

/// Largest z-score over the entries of the empirical `E[x x̂ᵀ]`, per δ.
pub fn cross_moment_z(deltas: &[f64]) -> Vec<(f64, f64)> {
    let model = offset_model();
    deltas
        .iter()
        .enumerate()
        .map(|(i, &delta)| {
            let pairs = AedConfig::new(model.clone(), delta).unwrap().sample_matrix(MC_SAMPLES, &mut Seed(900 + i as u64).rng());
            let closed = cross_moment_closed_form(&model, delta);
            let mut worst = 0.0f64;
            for a in 0..2 {
                for b in 0..2 {
                    let prods = pairs.x.column(a).iter().zip(pairs.x_hat.column(b).iter()).map(|(u, v)| u * v).collect::<Vec<_>>();
                    worst = worst.max(z_score(prods.into_iter(), closed[(a, b)]));
                }
            }
            (delta, worst)
        })
        .collect()
}

/// z-scores of the empirical SimSiam loss against the closed form, per
/// `(δ, ξ)`, plus the gap between the library estimator and the per-pair mean.
pub fn simsiam_consistency(settings: &[(f64, f64)]) -> Vec<(f64, f64, f64, f64)> {
    let mut rng = Seed(31).rng();
    let model = random_centered_model(3, 4, &mut rng);
    let a = normal_matrix(4, 2, 0.6, &mut rng);
    let map = ProjectionMap::new(a.clone()).unwrap();
    settings
        .iter()
        .enumerate()
        .map(|(i, &(delta, xi))| {
            let pairs = AedConfig::new(model.clone(), delta).unwrap().sample_matrix(MC_SAMPLES, &mut Seed(950 + i as u64).rng());
            let (za, zh) = (&pairs.x * &a, &pairs.x_hat * &a);
            let terms: Vec<f64> =
                za.row_iter().zip(zh.row_iter()).map(|(u, v)| -u.dot(&v) + xi * u.norm_squared()).collect();
            let mean = terms.iter().sum::<f64>() / terms.len() as f64;
            let batch = Batch::new(pairs.x, pairs.x_hat, DMatrix::zeros(1, 4)).unwrap();
            let lib = objectives::simsiam_loss(&map, &batch, &SiamConfig::new(xi).unwrap()).unwrap();
            let population = objectives::simsiam_population_loss(&map, &model, delta, xi).unwrap();
            (delta, xi, z_score(terms.into_iter(), population), (lib - mean).abs())
        })
        .collect()
}
