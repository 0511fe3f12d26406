#![allow(dead_code)]

pub mod gradients;
pub mod oracles;
pub mod stochastic;

use fisher_ssl::linalg;
use fisher_ssl::{ClipGmm, SharedGmm};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Central differences of `f` at `a`, one entry at a time.
pub fn fd_grad(f: impl Fn(&DMatrix<f64>) -> f64, a: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(a.nrows(), a.ncols());
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let mut p = a.clone();
            p[(i, j)] += h;
            let mut m = a.clone();
            m[(i, j)] -= h;
            g[(i, j)] = (f(&p) - f(&m)) / (2.0 * h);
        }
    }
    g
}

/// Largest entrywise error relative to the largest reference entry.
pub fn rel_err(got: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    let scale = reference.amax().max(1e-12);
    (got - reference).amax() / scale
}

pub fn random_spd<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let g = linalg::standard_normal_matrix(d, d, rng);
    &g * g.transpose() / d as f64 + DMatrix::identity(d, d) * 0.5
}

/// Means drawn normally then shifted so their weighted sum is zero.
pub fn centered_means<R: Rng + ?Sized>(weights: &[f64], d: usize, scale: f64, rng: &mut R) -> Vec<DVector<f64>> {
    let raw: Vec<DVector<f64>> =
        weights.iter().map(|_| DVector::from_iterator(d, (0..d).map(|_| scale * rng.sample::<f64, _>(rand_distr::StandardNormal)))).collect();
    let centre = raw.iter().zip(weights).fold(DVector::zeros(d), |acc, (m, w)| acc + m * *w);
    raw.into_iter().map(|m| m - &centre).collect()
}

pub fn random_weights<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Centered mixture with random weights and a non-spherical covariance.
pub fn random_centered_model<R: Rng + ?Sized>(k: usize, d: usize, rng: &mut R) -> SharedGmm {
    let w = random_weights(k, rng);
    let means = centered_means(&w, d, 1.5, rng);
    SharedGmm::new(w, means, random_spd(d, rng)).unwrap()
}

pub fn random_clip_model<R: Rng + ?Sized>(k: usize, d1: usize, d2: usize, rng: &mut R) -> ClipGmm {
    let w = random_weights(k, rng);
    let mv = centered_means(&w, d1, 1.0, rng);
    let mt = centered_means(&w, d2, 1.0, rng);
    ClipGmm::new(w, mv, random_spd(d1, rng), mt, random_spd(d2, rng)).unwrap()
}

pub fn normal_matrix<R: Rng + ?Sized>(r: usize, c: usize, scale: f64, rng: &mut R) -> DMatrix<f64> {
    linalg::standard_normal_matrix(r, c, rng) * scale
}
