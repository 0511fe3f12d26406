//! Synthetic mixtures used by the experiments.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;
use crate::mixture::{ClipGmm, SharedGmm};

/// `k − 1` standard normal means in `R^d` and a last mean that makes them sum to zero.
fn centered_means<R: Rng + ?Sized>(k: usize, d: usize, scale: f64, rng: &mut R) -> Vec<DVector<f64>> {
    let mut means: Vec<DVector<f64>> =
        (0..k - 1).map(|_| DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal) * scale)).collect();
    let total = means.iter().fold(DVector::zeros(d), |acc, m| acc + m);
    means.push(-total);
    means
}

/// Equal-weight mixture with centered Gaussian means and identity covariance
/// inflated by `kappa` on the orthogonal complement of the mean span.
pub fn make_appendix_g_model<R: Rng + ?Sized>(k: usize, d: usize, kappa: f64, rng: &mut R) -> Result<SharedGmm> {
    if k < 2 {
        return Err(Error::InvalidArgument("need at least two components".into()));
    }
    if d < k - 1 {
        return Err(Error::InvalidArgument(format!("ambient dimension {d} is below K - 1 = {}", k - 1)));
    }
    check_kappa(kappa)?;
    let means = centered_means(k, d, 1.0, rng);
    let (q, _) = linalg::orthonormal_basis(&linalg::rows_to_matrix(&means, d).transpose(), 1e-9);
    let complement = DMatrix::identity(d, d) - &q * q.transpose();
    let cov = linalg::symmetrize(&(DMatrix::identity(d, d) + complement * (kappa - 1.0)));
    SharedGmm::uniform(means, cov)
}

/// Mixture in `R^{K−1}` whose covariance is inflated by `kappa` along
/// `⌊K/2⌋` random orthonormal directions.
pub fn make_scaling_model<R: Rng + ?Sized>(k: usize, kappa: f64, rng: &mut R) -> Result<SharedGmm> {
    if k < 2 {
        return Err(Error::InvalidArgument("need at least two components".into()));
    }
    check_kappa(kappa)?;
    let d = k - 1;
    let means = centered_means(k, d, 1.0, rng);
    let v = linalg::random_orthonormal(d, k / 2, rng);
    let cov = linalg::symmetrize(&(DMatrix::identity(d, d) + &v * v.transpose() * (kappa - 1.0)));
    SharedGmm::uniform(means, cov)
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(kappa >= 1.0 && kappa.is_finite()) {
        return Err(Error::InvalidArgument(format!("kappa must be at least 1, got {kappa}")));
    }
    Ok(())
}

/// Random SPD matrix `Q diag(λ) Qᵀ` with eigenvalues uniform in `[1, cond]`.
fn random_spd<R: Rng + ?Sized>(d: usize, cond: f64, rng: &mut R) -> DMatrix<f64> {
    let q = linalg::random_orthogonal(d, rng);
    let eig = DVector::from_fn(d, |_, _| rng.random_range(1.0..=cond));
    linalg::symmetrize(&(&q * DMatrix::from_diagonal(&eig) * q.transpose()))
}

/// Spread of the component means relative to unit noise.
pub const CLIP_MEAN_SCALE: f64 = 3.0;
/// Condition number bound of the random modality covariances.
pub const CLIP_COV_CONDITION: f64 = 4.0;

/// Two-modality mixture with random SPD covariances and centered means.
/// With `aligned`, the whitened means agree on the first `min(d1, d2)`
/// coordinates and vanish elsewhere.
pub fn make_clip_model<R: Rng + ?Sized>(k: usize, d1: usize, d2: usize, aligned: bool, rng: &mut R) -> Result<ClipGmm> {
    if k == 0 || d1 == 0 || d2 == 0 {
        return Err(Error::InvalidArgument("K, d1 and d2 must be positive".into()));
    }
    let cov_v = random_spd(d1, CLIP_COV_CONDITION, rng);
    let cov_t = random_spd(d2, CLIP_COV_CONDITION, rng);
    let weights = vec![1.0 / k as f64; k];
    let (means_v, means_t) = if k == 1 {
        (vec![DVector::zeros(d1)], vec![DVector::zeros(d2)])
    } else if aligned {
        let shared = d1.min(d2);
        let nu = centered_means(k, shared, CLIP_MEAN_SCALE, rng);
        let lift = |cov: &DMatrix<f64>, d: usize| -> Vec<DVector<f64>> {
            let root = linalg::sym_sqrt(cov);
            nu.iter()
                .map(|v| {
                    let mut padded = DVector::zeros(d);
                    padded.rows_mut(0, shared).copy_from(v);
                    &root * padded
                })
                .collect()
        };
        (lift(&cov_v, d1), lift(&cov_t, d2))
    } else {
        (centered_means(k, d1, CLIP_MEAN_SCALE, rng), centered_means(k, d2, CLIP_MEAN_SCALE, rng))
    };
    ClipGmm::new(weights, means_v, cov_v, means_t, cov_t)
}

/// Two flat, parallel Gaussians: means `±sep·e₁`, covariance
/// `diag(1, spread, …, spread)`. The top variance directions carry no
/// class information.
pub fn make_pancake_model(d: usize, sep: f64, spread: f64) -> Result<SharedGmm> {
    if d < 2 {
        return Err(Error::InvalidArgument("pancakes need at least two dimensions".into()));
    }
    let mut mu = DVector::zeros(d);
    mu[0] = sep;
    let mut diag = DVector::from_element(d, spread);
    diag[0] = 1.0;
    SharedGmm::uniform(vec![mu.clone(), -mu], DMatrix::from_diagonal(&diag))
}

/// Two isotropic components with means `c·e₁` and `c·e₂`.
pub fn make_collapse_model(d: usize, c: f64) -> Result<SharedGmm> {
    if d < 2 {
        return Err(Error::InvalidArgument("collapse model needs at least two dimensions".into()));
    }
    let mut m1 = DVector::zeros(d);
    m1[0] = c;
    let mut m2 = DVector::zeros(d);
    m2[1] = c;
    SharedGmm::uniform(vec![m1, m2], DMatrix::identity(d, d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Seed;
    use crate::subspace::{fisher_subspace, mean_subspace, principal_angles};

    #[test]
    fn appendix_g_structure() {
        let model = make_appendix_g_model(4, 10, 10.0, &mut Seed(1).rng()).unwrap();
        assert!(model.overall_mean().amax() < 1e-12);
        let (vals, vecs) = linalg::sym_eigen_desc(model.covariance());
        assert!(vals[..7].iter().all(|v| (v - 10.0).abs() < 1e-10));
        assert!(vals[7..].iter().all(|v| (v - 1.0).abs() < 1e-10));
        // unit-variance eigenvectors span the means
        let unit = crate::subspace::Subspace::new(vecs.columns(7, 3).into_owned()).unwrap();
        let angles = principal_angles(&unit, &mean_subspace(&model).unwrap()).unwrap();
        assert!(angles.iter().all(|a| *a < 1e-8));
        assert_eq!(fisher_subspace(&model).unwrap().dim(), 3);

        let iso = make_appendix_g_model(4, 10, 1.0, &mut Seed(1).rng()).unwrap();
        assert!(linalg::max_abs_diff(iso.covariance(), &DMatrix::identity(10, 10)) < 1e-15);
        assert!(make_appendix_g_model(5, 3, 2.0, &mut Seed(1).rng()).is_err());
    }

    #[test]
    fn scaling_structure() {
        let model = make_scaling_model(10, 5.0, &mut Seed(2).rng()).unwrap();
        assert_eq!(model.dim(), 9);
        let (vals, _) = linalg::sym_eigen_desc(model.covariance());
        assert_eq!(vals.iter().filter(|v| (*v - 5.0).abs() < 1e-10).count(), 5);
        let iso = make_scaling_model(10, 1.0, &mut Seed(2).rng()).unwrap();
        assert!(linalg::max_abs_diff(iso.covariance(), &DMatrix::identity(9, 9)) < 1e-15);
    }

    #[test]
    fn aligned_clip_has_matching_whitened_means() {
        let model = make_clip_model(3, 6, 4, true, &mut Seed(3).rng()).unwrap();
        let (v, t) = (model.marginal_v(), model.marginal_t());
        let wv = linalg::sym_fn(v.covariance(), |x| 1.0 / x.sqrt());
        let wt = linalg::sym_fn(t.covariance(), |x| 1.0 / x.sqrt());
        for (mv, mt) in v.means().iter().zip(t.means()) {
            let (a, b) = (&wv * mv, &wt * mt);
            for i in 0..4 {
                assert!((a[i] - b[i]).abs() < 1e-12);
            }
            assert!(a.rows(4, 2).amax() < 1e-12);
        }
    }

    #[test]
    fn unaligned_clip_has_full_fisher_rank() {
        let model = make_clip_model(3, 12, 8, false, &mut Seed(4).rng()).unwrap();
        assert_eq!(fisher_subspace(&model.marginal_v()).unwrap().dim(), 2);
        assert_eq!(fisher_subspace(&model.marginal_t()).unwrap().dim(), 2);
        let single = make_clip_model(1, 3, 3, false, &mut Seed(4).rng()).unwrap();
        assert!(fisher_subspace(&single.marginal_v()).is_err());
    }
}
