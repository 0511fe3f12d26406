//! Generative models: shared-covariance Gaussian mixtures, their
//! augmentation pairs, and two-modality (CLIP-style) mixtures.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::json;
use crate::linalg::{self, max_asymmetry};
use crate::subspace::ProjectionMap;

const WEIGHT_SUM_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-12;

/// A point together with the index of the component that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub point: DVector<f64>,
    pub component: usize,
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::InvalidModel("at least one component required".into()));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::InvalidModel(format!("mixture weights must be strictly positive, got {w}")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::InvalidModel(format!("mixture weights sum to {total}, expected 1")));
    }
    Ok(())
}

/// Component means plus one shared covariance with its Cholesky factor.
#[derive(Debug, Clone)]
struct Components {
    means: Vec<DVector<f64>>,
    covariance: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl Components {
    fn new(means: Vec<DVector<f64>>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = covariance.nrows();
        if covariance.ncols() != d || d == 0 {
            return Err(Error::InvalidModel(format!(
                "covariance must be square and non-empty, got {}x{}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        if covariance.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("covariance has non-finite entries".into()));
        }
        let asym = max_asymmetry(&covariance);
        if asym > SYMMETRY_TOL {
            return Err(Error::InvalidModel(format!("covariance is not symmetric (defect {asym:e})")));
        }
        if let Some((k, m)) = means.iter().enumerate().find(|(_, m)| m.len() != d) {
            return Err(Error::InvalidModel(format!("mean {k} has dimension {}, covariance has order {d}", m.len())));
        }
        if means.iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidModel("means have non-finite entries".into()));
        }
        let chol = Cholesky::new(covariance.clone())
            .ok_or_else(|| Error::InvalidModel("covariance is not positive definite".into()))?;
        if chol.l_dirty().diagonal().iter().any(|p| !(*p > 0.0)) {
            return Err(Error::InvalidModel("covariance Cholesky pivot is not positive".into()));
        }
        Ok(Self { means, covariance, chol })
    }

    fn dim(&self) -> usize {
        self.covariance.nrows()
    }

    /// Rows are `mu_{labels[i]} + L z_i`, with `z` drawn row by row.
    fn draw<R: Rng + ?Sized>(&self, labels: &[usize], rng: &mut R) -> DMatrix<f64> {
        let d = self.dim();
        let z = linalg::standard_normal_matrix(labels.len(), d, rng);
        let l = self.chol.l();
        let mut x = z * l.transpose();
        for (i, &k) in labels.iter().enumerate() {
            let mut row = x.row_mut(i);
            row += self.means[k].transpose();
        }
        x
    }

    fn to_json_fields(&self) -> Vec<(&'static str, String)> {
        vec![("means", json::fmt_rows(&self.means)), ("covariance", json::fmt_matrix(&self.covariance))]
    }
}

/// Mixture of Gaussians that share one positive-definite covariance.
#[derive(Debug, Clone)]
pub struct SharedGmm {
    weights: Vec<f64>,
    comps: Components,
}

impl SharedGmm {
    pub fn new(weights: Vec<f64>, means: Vec<DVector<f64>>, covariance: DMatrix<f64>) -> Result<Self> {
        check_weights(&weights)?;
        if weights.len() != means.len() {
            return Err(Error::InvalidModel(format!("{} weights but {} means", weights.len(), means.len())));
        }
        Ok(Self { weights, comps: Components::new(means, covariance)? })
    }

    /// Equal-weight mixture.
    pub fn uniform(means: Vec<DVector<f64>>, covariance: DMatrix<f64>) -> Result<Self> {
        let k = means.len().max(1);
        Self::new(vec![1.0 / k as f64; means.len()], means, covariance)
    }

    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.comps.dim()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.comps.means
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.comps.covariance
    }

    pub fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.comps.chol
    }

    /// d x K matrix whose columns are the component means.
    pub fn mean_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_columns(&self.comps.means)
    }

    /// `sum_k w_k mu_k`.
    pub fn overall_mean(&self) -> DVector<f64> {
        self.comps
            .means
            .iter()
            .zip(&self.weights)
            .fold(DVector::zeros(self.dim()), |acc, (m, w)| acc + m * *w)
    }

    /// Inter-component scatter `M = sum_k w_k mu_k mu_kᵀ` (uncentered).
    pub fn between_scatter(&self) -> DMatrix<f64> {
        let d = self.dim();
        self.comps
            .means
            .iter()
            .zip(&self.weights)
            .fold(DMatrix::zeros(d, d), |acc, (m, w)| acc + m * m.transpose() * *w)
    }

    /// `E[x xᵀ] = M + Σ`.
    pub fn second_moment(&self) -> DMatrix<f64> {
        self.between_scatter() + &self.comps.covariance
    }

    pub fn is_centered(&self, tol: f64) -> bool {
        self.overall_mean().amax() <= tol
    }

    /// Smallest non-zero eigenvalue of `Σ^{-1/2} M Σ^{-1/2}`; zero when `M = 0`.
    ///
    /// Eigenvalues below `1e-10 * largest` count as zero.
    pub fn whitened_scatter_min_eigenvalue(&self) -> f64 {
        let l = self.comps.chol.l();
        // L⁻¹ M L⁻ᵀ is similar to Σ^{-1/2} M Σ^{-1/2}
        let mut lm = self.between_scatter();
        l.solve_lower_triangular_mut(&mut lm);
        let mut w = lm.transpose();
        l.solve_lower_triangular_mut(&mut w);
        let (vals, _) = linalg::sym_eigen_desc(&w);
        let top = vals.first().copied().unwrap_or(0.0);
        if top <= 0.0 {
            return 0.0;
        }
        vals.into_iter().filter(|&v| v > 1e-10 * top).fold(f64::INFINITY, f64::min)
    }

    pub fn draw_labels<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        let dist = WeightedIndex::new(&self.weights).expect("weights validated at construction");
        (0..n).map(|_| dist.sample(rng)).collect()
    }

    /// Draws `n` points as the rows of a matrix, plus their labels.
    ///
    /// All `n` labels are drawn first, then the standard-normal noise row by row.
    pub fn sample_matrix<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (DMatrix<f64>, Vec<usize>) {
        let labels = self.draw_labels(n, rng);
        let x = self.comps.draw(&labels, rng);
        (x, labels)
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<LabeledSample> {
        let (x, labels) = self.sample_matrix(n, rng);
        labels
            .into_iter()
            .enumerate()
            .map(|(i, component)| LabeledSample { point: x.row(i).transpose(), component })
            .collect()
    }

    /// Log-densities up to the shared constant `-(d log 2π + log det Σ)/2`.
    fn log_joint(&self, x: &DVector<f64>) -> Vec<f64> {
        self.comps
            .means
            .iter()
            .zip(&self.weights)
            .map(|(m, w)| {
                let mut r = x - m;
                self.comps.chol.l_dirty().solve_lower_triangular_unchecked_mut(&mut r);
                w.ln() - 0.5 * r.norm_squared()
            })
            .collect()
    }

    /// Component posterior `Pr(z = k | x)`.
    pub fn posterior(&self, x: &DVector<f64>) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!("point has dimension {}, model has {}", x.len(), self.dim())));
        }
        Ok(softmax(&self.log_joint(x)))
    }

    /// The mixture of `Aᵀx`: means `Aᵀ mu_k`, covariance `Aᵀ Σ A`.
    pub fn project(&self, a: &ProjectionMap) -> Result<SharedGmm> {
        let a = a.matrix();
        if a.nrows() != self.dim() {
            return Err(Error::Dimension(format!("projection has {} rows, model dimension is {}", a.nrows(), self.dim())));
        }
        let smin = linalg::singular_values_desc(a).last().copied().unwrap_or(0.0);
        if a.ncols() > a.nrows() || smin <= 1e-10 {
            return Err(Error::DegenerateProjection(format!("projection is not full column rank (sigma_min = {smin:e})")));
        }
        let at = a.transpose();
        let means = self.comps.means.iter().map(|m| &at * m).collect();
        let cov = linalg::symmetrize(&(&at * &self.comps.covariance * a));
        SharedGmm::new(self.weights.clone(), means, cov)
    }

    pub fn to_json(&self) -> String {
        let mut fields = vec![("weights", json::fmt_vec(&self.weights))];
        fields.extend(self.comps.to_json_fields());
        json::object(&fields)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: GmmJson = serde_json::from_str(s)?;
        raw.build()
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[derive(Deserialize)]
struct GmmJson {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covariance: Vec<Vec<f64>>,
}

impl GmmJson {
    fn build(self) -> Result<SharedGmm> {
        let cov = json::matrix_from_rows(&self.covariance, "covariance")?;
        let means = self.means.into_iter().map(DVector::from_vec).collect();
        SharedGmm::new(self.weights, means, cov)
    }
}

/// Augmentation-enabled pair distribution over a [`SharedGmm`].
///
/// With probability `delta` both points of a pair come from one component;
/// otherwise their components are drawn independently.
#[derive(Debug, Clone)]
pub struct AedConfig {
    pub base: SharedGmm,
    delta: f64,
}

/// A batch of augmentation pairs stored row-aligned.
#[derive(Debug, Clone)]
pub struct PairSample {
    pub x: DMatrix<f64>,
    pub x_hat: DMatrix<f64>,
    pub z: Vec<usize>,
    pub z_hat: Vec<usize>,
}

impl AedConfig {
    pub fn new(base: SharedGmm, delta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::InvalidArgument(format!("delta must lie in [0, 1], got {delta}")));
        }
        Ok(Self { base, delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Per pair: coin, label of `x`, label of `x̂` (when tails); then the
    /// noise for all `x`, then the noise for all `x̂`.
    pub fn sample_matrix<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> PairSample {
        let dist = WeightedIndex::new(&self.base.weights).expect("weights validated at construction");
        let mut z = Vec::with_capacity(n);
        let mut z_hat = Vec::with_capacity(n);
        for _ in 0..n {
            let same = rng.random::<f64>() < self.delta;
            let k = dist.sample(rng);
            let k_hat = if same { k } else { dist.sample(rng) };
            z.push(k);
            z_hat.push(k_hat);
        }
        let x = self.base.comps.draw(&z, rng);
        let x_hat = self.base.comps.draw(&z_hat, rng);
        PairSample { x, x_hat, z, z_hat }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<(LabeledSample, LabeledSample)> {
        let s = self.sample_matrix(n, rng);
        (0..n)
            .map(|i| {
                (
                    LabeledSample { point: s.x.row(i).transpose(), component: s.z[i] },
                    LabeledSample { point: s.x_hat.row(i).transpose(), component: s.z_hat[i] },
                )
            })
            .collect()
    }

    /// Closed form `E[x x̂ᵀ] = δ Σ_k w_k μ_k μ_kᵀ + (1 − δ) m mᵀ` with `m = Σ_k w_k μ_k`.
    pub fn cross_moment(&self) -> DMatrix<f64> {
        let m = self.base.overall_mean();
        self.base.between_scatter() * self.delta + &m * m.transpose() * (1.0 - self.delta)
    }
}

/// Two-modality mixture: one component index per sample, independent
/// Gaussian draws in each modality.
#[derive(Debug, Clone)]
pub struct ClipGmm {
    weights: Vec<f64>,
    v: Components,
    t: Components,
}

/// A batch of paired two-modality draws, row-aligned.
#[derive(Debug, Clone)]
pub struct ClipSample {
    pub x_v: DMatrix<f64>,
    pub x_t: DMatrix<f64>,
    pub z: Vec<usize>,
}

impl ClipGmm {
    pub fn new(
        weights: Vec<f64>,
        means_v: Vec<DVector<f64>>,
        cov_v: DMatrix<f64>,
        means_t: Vec<DVector<f64>>,
        cov_t: DMatrix<f64>,
    ) -> Result<Self> {
        check_weights(&weights)?;
        if means_v.len() != weights.len() || means_t.len() != weights.len() {
            return Err(Error::InvalidModel("both modalities need one mean per component".into()));
        }
        Ok(Self { weights, v: Components::new(means_v, cov_v)?, t: Components::new(means_t, cov_t)? })
    }

    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim_v(&self) -> usize {
        self.v.dim()
    }

    pub fn dim_t(&self) -> usize {
        self.t.dim()
    }

    pub fn marginal_v(&self) -> SharedGmm {
        SharedGmm { weights: self.weights.clone(), comps: self.v.clone() }
    }

    pub fn marginal_t(&self) -> SharedGmm {
        SharedGmm { weights: self.weights.clone(), comps: self.t.clone() }
    }

    /// `E[x_v x_tᵀ] = Σ_k w_k μ_{V,k} μ_{T,k}ᵀ`.
    pub fn cross_moment(&self) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.dim_v(), self.dim_t());
        for ((mv, mt), w) in self.v.means.iter().zip(&self.t.means).zip(&self.weights) {
            acc += mv * mt.transpose() * *w;
        }
        acc
    }

    /// Labels first, then V-side noise, then T-side noise.
    pub fn sample_matrix<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> ClipSample {
        let dist = WeightedIndex::new(&self.weights).expect("weights validated at construction");
        let z: Vec<usize> = (0..n).map(|_| dist.sample(rng)).collect();
        let x_v = self.v.draw(&z, rng);
        let x_t = self.t.draw(&z, rng);
        ClipSample { x_v, x_t, z }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<((DVector<f64>, DVector<f64>), usize)> {
        let s = self.sample_matrix(n, rng);
        (0..n).map(|i| ((s.x_v.row(i).transpose(), s.x_t.row(i).transpose()), s.z[i])).collect()
    }

    /// `{"weights":[..],"v":{"means":..,"covariance":..},"t":{..}}`
    pub fn to_json(&self) -> String {
        json::object(&[
            ("weights", json::fmt_vec(&self.weights)),
            ("v", json::object(&self.v.to_json_fields())),
            ("t", json::object(&self.t.to_json_fields())),
        ])
    }

    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Block {
            means: Vec<Vec<f64>>,
            covariance: Vec<Vec<f64>>,
        }
        #[derive(Deserialize)]
        struct Raw {
            weights: Vec<f64>,
            v: Block,
            t: Block,
        }
        let raw: Raw = serde_json::from_str(s)?;
        let cv = json::matrix_from_rows(&raw.v.covariance, "v.covariance")?;
        let ct = json::matrix_from_rows(&raw.t.covariance, "t.covariance")?;
        ClipGmm::new(
            raw.weights,
            raw.v.means.into_iter().map(DVector::from_vec).collect(),
            cv,
            raw.t.means.into_iter().map(DVector::from_vec).collect(),
            ct,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Seed;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    fn two_blob(sep: f64) -> SharedGmm {
        SharedGmm::uniform(vec![dv(&[sep, 0.0]), dv(&[-sep, 0.0])], DMatrix::identity(2, 2)).unwrap()
    }

    #[test]
    fn rejects_bad_models() {
        let id = DMatrix::<f64>::identity(2, 2);
        assert!(SharedGmm::new(vec![1.0, 0.0], vec![dv(&[0.0, 0.0]); 2], id.clone()).is_err());
        assert!(SharedGmm::new(vec![0.6, 0.6], vec![dv(&[0.0, 0.0]); 2], id.clone()).is_err());
        assert!(SharedGmm::new(vec![1.0], vec![dv(&[0.0, 0.0, 0.0])], id.clone()).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(SharedGmm::new(vec![1.0], vec![dv(&[0.0, 0.0])], asym).is_err());
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(SharedGmm::new(vec![1.0], vec![dv(&[0.0, 0.0])], indefinite).is_err());
    }

    #[test]
    fn single_component_sample_mean_is_zero() {
        let m = SharedGmm::new(vec![1.0], vec![dv(&[0.0, 0.0])], DMatrix::identity(2, 2)).unwrap();
        let (x, labels) = m.sample_matrix(100_000, &mut Seed(1).rng());
        assert!(labels.iter().all(|&l| l == 0));
        for j in 0..2 {
            assert!(x.column(j).mean().abs() < 0.02);
        }
    }

    #[test]
    fn pooled_covariance_matches_total_covariance_law() {
        // Oracle: Cov = Σ_k w_k μ_k μ_kᵀ − m mᵀ + Σ = diag(9 + 1, 1).
        let m = two_blob(3.0);
        let n = 100_000;
        let (x, _) = m.sample_matrix(n, &mut Seed(2).rng());
        let expected = DMatrix::from_row_slice(2, 2, &[10.0, 0.0, 0.0, 1.0]);
        let mean = x.row_mean();
        for i in 0..2 {
            for j in 0..2 {
                let prods: Vec<f64> = (0..n).map(|r| (x[(r, i)] - mean[i]) * (x[(r, j)] - mean[j])).collect();
                let avg = prods.iter().sum::<f64>() / n as f64;
                let var = prods.iter().map(|p| (p - avg).powi(2)).sum::<f64>() / (n - 1) as f64;
                let se = (var / n as f64).sqrt();
                assert!((avg - expected[(i, j)]).abs() <= 3.0 * se, "entry ({i},{j}): {avg} vs {}", expected[(i, j)]);
            }
        }
    }

    #[test]
    fn aed_extremes() {
        let base = two_blob(1.0);
        let full = AedConfig::new(base.clone(), 1.0).unwrap().sample_matrix(10_000, &mut Seed(3).rng());
        assert_eq!(full.z, full.z_hat);

        let n = 100_000;
        let indep = AedConfig::new(base, 0.0).unwrap().sample_matrix(n, &mut Seed(4).rng());
        let same = indep.z.iter().zip(&indep.z_hat).filter(|(a, b)| a == b).count() as f64 / n as f64;
        // Σ_k w_k² = 1/2
        let se = (0.25 / n as f64).sqrt();
        assert!((same - 0.5).abs() <= 3.0 * se, "{same}");
        assert!(AedConfig::new(two_blob(1.0), 1.5).is_err());
    }

    #[test]
    fn clip_single_component_is_uncorrelated() {
        let m = ClipGmm::new(
            vec![1.0],
            vec![dv(&[1.0, -1.0])],
            DMatrix::identity(2, 2),
            vec![dv(&[0.5])],
            DMatrix::identity(1, 1),
        )
        .unwrap();
        let n = 100_000;
        let s = m.sample_matrix(n, &mut Seed(5).rng());
        assert!(s.z.iter().all(|&z| z == 0));
        for j in 0..2 {
            let mv = s.x_v.column(j).mean();
            let mt = s.x_t.column(0).mean();
            let prods: Vec<f64> = (0..n).map(|r| (s.x_v[(r, j)] - mv) * (s.x_t[(r, 0)] - mt)).collect();
            let avg = prods.iter().sum::<f64>() / n as f64;
            let var = prods.iter().map(|p| (p - avg).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!(avg.abs() <= 3.0 * (var / n as f64).sqrt());
        }
    }

    #[test]
    fn posterior_basics() {
        let one = SharedGmm::new(vec![1.0], vec![dv(&[2.0, 1.0])], DMatrix::identity(2, 2)).unwrap();
        assert_eq!(one.posterior(&dv(&[-40.0, 3.0])).unwrap(), vec![1.0]);

        let m = two_blob(1.0);
        let p = m.posterior(&dv(&[0.0, 5.0])).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15);

        // Two-density oracle: N(e1; e1, I) ∝ 1, N(e1; -e1, I) ∝ exp(-2).
        let p = m.posterior(&dv(&[1.0, 0.0])).unwrap();
        let oracle = 1.0 / (1.0 + (-2.0f64).exp());
        assert!((p[0] - oracle).abs() < 1e-14);
        assert!((p[0] - 0.880797077977882).abs() < 1e-12);

        // far-out points do not underflow
        let p = m.posterior(&dv(&[1e4, 0.0])).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(p[0] > 0.999);
        assert!(m.posterior(&dv(&[1.0])).is_err());
    }

    #[test]
    fn projection_cases() {
        let m = SharedGmm::uniform(
            vec![dv(&[1.0, 2.0]), dv(&[-1.0, -2.0])],
            DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]),
        )
        .unwrap();
        let id = ProjectionMap::new(DMatrix::identity(2, 2)).unwrap();
        let same = m.project(&id).unwrap();
        assert_eq!(same.covariance(), m.covariance());
        assert_eq!(same.means(), m.means());

        let e1 = ProjectionMap::new(DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        let p = m.project(&e1).unwrap();
        assert_eq!(p.covariance()[(0, 0)], 4.0);
        assert_eq!(p.means()[0][0], 1.0);

        let rank_def = ProjectionMap::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0])).unwrap();
        assert!(matches!(m.project(&rank_def), Err(Error::DegenerateProjection(_))));
    }

    #[test]
    fn json_round_trip() {
        let m = SharedGmm::new(
            vec![0.3, 0.7],
            vec![dv(&[0.1, 1.0 / 3.0]), dv(&[-2.5e-17, 7.0])],
            DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0 / 7.0]),
        )
        .unwrap();
        let back = SharedGmm::from_json(&m.to_json()).unwrap();
        assert_eq!(back.weights(), m.weights());
        assert_eq!(back.means(), m.means());
        assert_eq!(back.covariance(), m.covariance());

        let c = ClipGmm::new(
            vec![1.0],
            vec![dv(&[0.1, 0.2])],
            DMatrix::identity(2, 2),
            vec![dv(&[1.0 / 3.0])],
            DMatrix::identity(1, 1) * 2.0,
        )
        .unwrap();
        let back = ClipGmm::from_json(&c.to_json()).unwrap();
        assert_eq!(back.to_json(), c.to_json());
    }
}
