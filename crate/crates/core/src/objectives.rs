//! Self-supervised objectives over linear maps and their exact gradients.
//!
//! All batch estimators treat rows as samples. The repulsive log-mean-exp
//! term is estimated with one pool of `m` negatives shared by every anchor.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::mixture::{ClipGmm, SharedGmm};
use crate::subspace::ProjectionMap;

/// Anchors, their augmentations (row-aligned), and independent negatives.
#[derive(Debug, Clone)]
pub struct Batch {
    pub anchors: DMatrix<f64>,
    pub augments: DMatrix<f64>,
    pub negatives: DMatrix<f64>,
}

impl Batch {
    pub fn new(anchors: DMatrix<f64>, augments: DMatrix<f64>, negatives: DMatrix<f64>) -> Result<Self> {
        let d = anchors.ncols();
        if anchors.nrows() == 0 || negatives.nrows() == 0 {
            return Err(Error::InvalidArgument("batch needs at least one pair and one negative".into()));
        }
        if augments.shape() != anchors.shape() {
            return Err(Error::Dimension("anchors and augments must be row-aligned with equal width".into()));
        }
        if negatives.ncols() != d {
            return Err(Error::Dimension(format!("negatives have width {}, anchors {d}", negatives.ncols())));
        }
        Ok(Self { anchors, augments, negatives })
    }

    pub fn dim(&self) -> usize {
        self.anchors.ncols()
    }
}

/// Paired two-modality draws plus V-side (and optionally T-side) negatives.
#[derive(Debug, Clone)]
pub struct ClipBatch {
    pub side_v: DMatrix<f64>,
    pub side_t: DMatrix<f64>,
    pub negatives_v: DMatrix<f64>,
    pub negatives_t: Option<DMatrix<f64>>,
}

impl ClipBatch {
    pub fn new(
        side_v: DMatrix<f64>,
        side_t: DMatrix<f64>,
        negatives_v: DMatrix<f64>,
        negatives_t: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        if side_v.nrows() == 0 || side_v.nrows() != side_t.nrows() {
            return Err(Error::Dimension("modalities must be row-aligned and non-empty".into()));
        }
        if negatives_v.nrows() == 0 || negatives_v.ncols() != side_v.ncols() {
            return Err(Error::Dimension("V negatives must be non-empty with the V width".into()));
        }
        if let Some(nt) = &negatives_t {
            if nt.nrows() == 0 || nt.ncols() != side_t.ncols() {
                return Err(Error::Dimension("T negatives must be non-empty with the T width".into()));
            }
        }
        Ok(Self { side_v, side_t, negatives_v, negatives_t })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiamConfig {
    xi: f64,
    pub spectral_bound: f64,
}

impl SiamConfig {
    pub fn new(xi: f64) -> Result<Self> {
        if !(xi > 0.0 && xi.is_finite()) {
            return Err(Error::InvalidArgument(format!("xi must be positive, got {xi}")));
        }
        Ok(Self { xi, spectral_bound: 1.0 })
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }
}

/// Upper end of the regularisation range where the norm-constrained
/// SimSiam minimiser spans the whole Fisher subspace:
/// `δ λ_min / (1 + λ_min)`.
pub fn simsiam_xi_bound(model: &SharedGmm, delta: f64) -> f64 {
    let lmin = model.whitened_scatter_min_eigenvalue();
    delta * lmin / (1.0 + lmin)
}

fn check_map(a: &DMatrix<f64>, d: usize, what: &str) -> Result<()> {
    if a.nrows() != d {
        return Err(Error::Dimension(format!("{what} has {} rows, data dimension is {d}", a.nrows())));
    }
    Ok(())
}

/// Softmax of `q kᵀ` along each row, stored transposed (`m x n`, one
/// column per query), and the per-query log-mean-exp.
fn softmax_cols(q: &DMatrix<f64>, k: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let mut st = k * q.transpose();
    let m = k.nrows() as f64;
    let mut lme = Vec::with_capacity(st.ncols());
    for (i, mut col) in st.column_iter_mut().enumerate() {
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::NonFinite { what: "similarity row", index: i });
        }
        let mut total = 0.0;
        for v in col.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        col /= total;
        lme.push(max + total.ln() - m.ln());
    }
    Ok((st, lme))
}

/// Gradients of a one-sided contrastive loss with respect to the embeddings
/// `q` (queries), `kp` (positives, row-aligned with `q`) and `kn` (negatives).
struct ContrastiveParts {
    loss: f64,
    d_q: DMatrix<f64>,
    d_kp: DMatrix<f64>,
    d_kn: DMatrix<f64>,
}

fn contrastive(q: &DMatrix<f64>, kp: &DMatrix<f64>, kn: &DMatrix<f64>, want_grad: bool) -> Result<ContrastiveParts> {
    let n = q.nrows() as f64;
    let (probs_t, lme) = softmax_cols(q, kn)?;
    let mut loss = 0.0;
    for i in 0..q.nrows() {
        let term = -q.row(i).dot(&kp.row(i)) + lme[i];
        if !term.is_finite() {
            return Err(Error::NonFinite { what: "contrastive row", index: i });
        }
        loss += term;
    }
    loss /= n;
    if !want_grad {
        let empty = DMatrix::zeros(0, 0);
        return Ok(ContrastiveParts { loss, d_q: empty.clone(), d_kp: empty.clone(), d_kn: empty });
    }
    let d_q = (probs_t.tr_mul(kn) - kp) / n;
    let d_kp = -q / n;
    let d_kn = &probs_t * q / n;
    Ok(ContrastiveParts { loss, d_q, d_kp, d_kn })
}

fn infonce_eval(a: &ProjectionMap, batch: &Batch, want_grad: bool) -> Result<(f64, Option<DMatrix<f64>>)> {
    let a = a.matrix();
    check_map(a, batch.dim(), "projection")?;
    let y = &batch.anchors * a;
    let y_hat = &batch.augments * a;
    let y_neg = &batch.negatives * a;
    let parts = contrastive(&y, &y_hat, &y_neg, want_grad)?;
    if !want_grad {
        return Ok((parts.loss, None));
    }
    let grad = batch.anchors.transpose() * parts.d_q
        + batch.augments.transpose() * parts.d_kp
        + batch.negatives.transpose() * parts.d_kn;
    Ok((parts.loss, Some(grad)))
}

/// Empirical InfoNCE:
/// `−(1/n) Σ_i (Aᵀx_i)ᵀ(Aᵀx̂_i) + (1/n) Σ_i log[(1/m) Σ_j exp((Aᵀx_i)ᵀ(Aᵀx̃_j))]`.
pub fn infonce_loss(a: &ProjectionMap, batch: &Batch) -> Result<f64> {
    Ok(infonce_eval(a, batch, false)?.0)
}

pub fn infonce_grad(a: &ProjectionMap, batch: &Batch) -> Result<DMatrix<f64>> {
    Ok(infonce_eval(a, batch, true)?.1.expect("gradient requested"))
}

pub fn infonce_loss_grad(a: &ProjectionMap, batch: &Batch) -> Result<(f64, DMatrix<f64>)> {
    let (l, g) = infonce_eval(a, batch, true)?;
    Ok((l, g.expect("gradient requested")))
}

/// Softmax weights `p_ij` over the negatives for each anchor.
pub fn infonce_weights(a: &ProjectionMap, batch: &Batch) -> Result<DMatrix<f64>> {
    check_map(a.matrix(), batch.dim(), "projection")?;
    let y = &batch.anchors * a.matrix();
    let y_neg = &batch.negatives * a.matrix();
    Ok(softmax_cols(&y, &y_neg)?.0.transpose())
}

fn simsiam_eval(a: &ProjectionMap, batch: &Batch, cfg: &SiamConfig, want_grad: bool) -> Result<(f64, Option<DMatrix<f64>>)> {
    let a = a.matrix();
    check_map(a, batch.dim(), "projection")?;
    let n = batch.anchors.nrows() as f64;
    let y = &batch.anchors * a;
    let y_hat = &batch.augments * a;
    let mut loss = 0.0;
    for i in 0..y.nrows() {
        let term = -y.row(i).dot(&y_hat.row(i)) + cfg.xi * y.row(i).norm_squared();
        if !term.is_finite() {
            return Err(Error::NonFinite { what: "simsiam row", index: i });
        }
        loss += term;
    }
    loss /= n;
    if !want_grad {
        return Ok((loss, None));
    }
    let grad = (batch.anchors.transpose() * (&y * (2.0 * cfg.xi) - &y_hat) - batch.augments.transpose() * &y) / n;
    Ok((loss, Some(grad)))
}

/// `−(1/n) Σ_i (Aᵀx_i)ᵀ(Aᵀx̂_i) + ξ (1/n) Σ_i ‖Aᵀx_i‖²`; negatives are ignored.
pub fn simsiam_loss(a: &ProjectionMap, batch: &Batch, cfg: &SiamConfig) -> Result<f64> {
    Ok(simsiam_eval(a, batch, cfg, false)?.0)
}

pub fn simsiam_grad(a: &ProjectionMap, batch: &Batch, cfg: &SiamConfig) -> Result<DMatrix<f64>> {
    Ok(simsiam_eval(a, batch, cfg, true)?.1.expect("gradient requested"))
}

pub fn simsiam_loss_grad(a: &ProjectionMap, batch: &Batch, cfg: &SiamConfig) -> Result<(f64, DMatrix<f64>)> {
    let (l, g) = simsiam_eval(a, batch, cfg, true)?;
    Ok((l, g.expect("gradient requested")))
}

fn population_matrix(model: &SharedGmm, delta: f64, xi: f64) -> Result<DMatrix<f64>> {
    let offset = model.overall_mean().amax();
    if offset > 1e-10 {
        return Err(Error::NotCentered(offset));
    }
    Ok(model.between_scatter() * (xi - delta) + model.covariance() * xi)
}

/// `⟨AAᵀ, (ξ − δ)M + ξΣ⟩` for a mixture with centered means.
pub fn simsiam_population_loss(a: &ProjectionMap, model: &SharedGmm, delta: f64, xi: f64) -> Result<f64> {
    check_map(a.matrix(), model.dim(), "projection")?;
    let c = population_matrix(model, delta, xi)?;
    let a = a.matrix();
    Ok((a.transpose() * c * a).trace())
}

/// `2((ξ − δ)M + ξΣ)A`.
pub fn simsiam_population_grad(a: &ProjectionMap, model: &SharedGmm, delta: f64, xi: f64) -> Result<DMatrix<f64>> {
    check_map(a.matrix(), model.dim(), "projection")?;
    let c = population_matrix(model, delta, xi)?;
    Ok(c * a.matrix() * 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClipVariant {
    /// T-side anchors repelled from V-side negatives only.
    #[default]
    VNegatives,
    /// Average of both directions; needs T-side negatives.
    Symmetric,
}

fn clip_eval(
    a_v: &ProjectionMap,
    a_t: &ProjectionMap,
    batch: &ClipBatch,
    variant: ClipVariant,
    want_grad: bool,
) -> Result<(f64, Option<(DMatrix<f64>, DMatrix<f64>)>)> {
    let (av, at) = (a_v.matrix(), a_t.matrix());
    check_map(av, batch.side_v.ncols(), "A_v")?;
    check_map(at, batch.side_t.ncols(), "A_t")?;
    if av.ncols() != at.ncols() {
        return Err(Error::Dimension(format!("A_v has {} columns, A_t has {}", av.ncols(), at.ncols())));
    }
    let emb_v = &batch.side_v * av;
    let emb_t = &batch.side_t * at;
    let neg_v = &batch.negatives_v * av;
    let fwd = contrastive(&emb_t, &emb_v, &neg_v, want_grad)?;
    match variant {
        ClipVariant::VNegatives => {
            if !want_grad {
                return Ok((fwd.loss, None));
            }
            let g_t = batch.side_t.transpose() * &fwd.d_q;
            let g_v = batch.side_v.transpose() * &fwd.d_kp + batch.negatives_v.transpose() * &fwd.d_kn;
            Ok((fwd.loss, Some((g_v, g_t))))
        }
        ClipVariant::Symmetric => {
            let negatives_t = batch
                .negatives_t
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("symmetric CLIP loss needs T-side negatives".into()))?;
            let neg_t = negatives_t * at;
            let bwd = contrastive(&emb_v, &emb_t, &neg_t, want_grad)?;
            let loss = 0.5 * (fwd.loss + bwd.loss);
            if !want_grad {
                return Ok((loss, None));
            }
            let g_t = (batch.side_t.transpose() * (&fwd.d_q + &bwd.d_kp) + negatives_t.transpose() * &bwd.d_kn) * 0.5;
            let g_v = (batch.side_v.transpose() * (&fwd.d_kp + &bwd.d_q) + batch.negatives_v.transpose() * &fwd.d_kn) * 0.5;
            Ok((loss, Some((g_v, g_t))))
        }
    }
}

/// CLIP InfoNCE:
/// `−(1/n) Σ_i (A_tᵀx_{t,i})ᵀ(A_vᵀx_{v,i}) + (1/n) Σ_i log[(1/m) Σ_j exp((A_tᵀx_{t,i})ᵀ(A_vᵀx̃_{v,j}))]`.
pub fn clip_loss(a_v: &ProjectionMap, a_t: &ProjectionMap, batch: &ClipBatch, variant: ClipVariant) -> Result<f64> {
    Ok(clip_eval(a_v, a_t, batch, variant, false)?.0)
}

/// Gradients `(∂L/∂A_v, ∂L/∂A_t)`.
pub fn clip_grads(
    a_v: &ProjectionMap,
    a_t: &ProjectionMap,
    batch: &ClipBatch,
    variant: ClipVariant,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    Ok(clip_eval(a_v, a_t, batch, variant, true)?.1.expect("gradient requested"))
}

pub fn clip_loss_grads(
    a_v: &ProjectionMap,
    a_t: &ProjectionMap,
    batch: &ClipBatch,
    variant: ClipVariant,
) -> Result<(f64, DMatrix<f64>, DMatrix<f64>)> {
    let (l, g) = clip_eval(a_v, a_t, batch, variant, true)?;
    let (gv, gt) = g.expect("gradient requested");
    Ok((l, gv, gt))
}

/// One direction of the CLIP loss with the expectations over the key side
/// taken in closed form. Keys follow `keys`; `cross` is `E[x_key x_queryᵀ]`.
/// With `u = A_qᵀx`, `log E exp(uᵀA_kᵀx_k) = ½ uᵀ(A_kᵀΣA_k)u + log Σ_j w_j exp(uᵀA_kᵀμ_j)`.
fn expected_side(
    a_key: &DMatrix<f64>,
    a_query: &DMatrix<f64>,
    keys: &SharedGmm,
    cross: &DMatrix<f64>,
    queries: &DMatrix<f64>,
) -> Result<(f64, DMatrix<f64>, DMatrix<f64>)> {
    let means = keys.mean_matrix();
    let nu = means.tr_mul(a_key); // K x r
    let s = a_key.transpose() * keys.covariance() * a_key;
    let u = queries * a_query;
    let n = u.nrows() as f64;
    let us = &u * &s;
    let log_w: Vec<f64> = keys.weights().iter().map(|w| w.ln()).collect();
    let mut probs = &u * nu.transpose();
    let mut lse_sum = 0.0;
    for (i, mut row) in probs.row_iter_mut().enumerate() {
        let mut max = f64::NEG_INFINITY;
        for (v, lw) in row.iter_mut().zip(&log_w) {
            *v += lw;
            max = max.max(*v);
        }
        if !max.is_finite() {
            return Err(Error::NonFinite { what: "query logits", index: i });
        }
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row /= total;
        lse_sum += max + total.ln() + 0.5 * u.row(i).dot(&us.row(i));
    }
    let pair = (a_query * a_key.transpose() * cross).trace();
    let loss = lse_sum / n - pair;
    if !loss.is_finite() {
        return Err(Error::NonFinite { what: "expected CLIP loss", index: 0 });
    }
    let g_u = (us + &probs * &nu) / n;
    let g_query = queries.tr_mul(&g_u) - cross.tr_mul(a_key);
    let g_key = means * (probs.tr_mul(&u) / n) + keys.covariance() * a_key * (u.tr_mul(&u) / n) - cross * a_query;
    Ok((loss, g_key, g_query))
}

/// CLIP InfoNCE with every expectation over the negatives, and the pair term,
/// computed exactly under `model`. Only the queries are sampled: `x_t` for
/// `VNegatives`, and both `x_v` and `x_t` for `Symmetric`. Unbiased for the
/// population loss, unlike the batch estimator. Returns `(loss, ∂/∂A_v, ∂/∂A_t)`.
pub fn clip_expected_loss_grads(
    a_v: &ProjectionMap,
    a_t: &ProjectionMap,
    model: &ClipGmm,
    x_v: &DMatrix<f64>,
    x_t: &DMatrix<f64>,
    variant: ClipVariant,
) -> Result<(f64, DMatrix<f64>, DMatrix<f64>)> {
    let (av, at) = (a_v.matrix(), a_t.matrix());
    check_map(av, model.dim_v(), "V-side map")?;
    check_map(at, model.dim_t(), "T-side map")?;
    if av.ncols() != at.ncols() {
        return Err(Error::Dimension("V and T maps need the same number of columns".into()));
    }
    if x_t.ncols() != model.dim_t() || x_t.nrows() == 0 {
        return Err(Error::Dimension(format!("T queries must be n x {} with n ≥ 1", model.dim_t())));
    }
    let cross = model.cross_moment();
    let (fwd, g_v, g_t) = expected_side(av, at, &model.marginal_v(), &cross, x_t)?;
    match variant {
        ClipVariant::VNegatives => Ok((fwd, g_v, g_t)),
        ClipVariant::Symmetric => {
            if x_v.ncols() != model.dim_v() || x_v.nrows() == 0 {
                return Err(Error::Dimension(format!("V queries must be n x {} with n ≥ 1", model.dim_v())));
            }
            let (bwd, h_t, h_v) = expected_side(at, av, &model.marginal_t(), &cross.transpose(), x_v)?;
            Ok((0.5 * (fwd + bwd), (g_v + h_v) * 0.5, (g_t + h_t) * 0.5))
        }
    }
}

/// Projected variance `(1/n) Σ_i ‖Aᵀx_i‖²` for an orthonormal `A`.
pub fn spectral_objective(a: &ProjectionMap, sample: &DMatrix<f64>) -> Result<f64> {
    let a = a.matrix();
    check_map(a, sample.ncols(), "projection")?;
    let defect = linalg::orthonormality_defect(a);
    if defect > 1e-8 {
        return Err(Error::InvalidArgument(format!("AᵀA must equal the identity (defect {defect:e})")));
    }
    if sample.nrows() == 0 {
        return Err(Error::InvalidArgument("empty sample".into()));
    }
    Ok((sample * a).norm_squared() / sample.nrows() as f64)
}

/// InfoNCE repulsive term as a function of `B = AAᵀ`:
/// `(1/n) Σ_i log[(1/m) Σ_j exp(x_iᵀ B x̃_j)]`.
pub fn repulsive_term(b: &DMatrix<f64>, batch: &Batch) -> Result<f64> {
    if b.shape() != (batch.dim(), batch.dim()) {
        return Err(Error::Dimension("B must be d x d".into()));
    }
    let q = &batch.anchors * b;
    let (_, lme) = softmax_cols(&q, &batch.negatives)?;
    Ok(lme.iter().sum::<f64>() / lme.len() as f64)
}

/// `f(λB₁ + (1−λ)B₂) − [λ f(B₁) + (1−λ) f(B₂)]` for the repulsive term `f`;
/// non-positive up to rounding when `f` is convex.
pub fn convexity_gap(batch: &Batch, b1: &DMatrix<f64>, b2: &DMatrix<f64>, lambda: f64) -> Result<f64> {
    let mix = b1 * lambda + b2 * (1.0 - lambda);
    let f_mix = repulsive_term(&mix, batch)?;
    let f1 = repulsive_term(b1, batch)?;
    let f2 = repulsive_term(b2, batch)?;
    Ok(f_mix - (lambda * f1 + (1.0 - lambda) * f2))
}

/// Checks midpoint-style convexity of the repulsive term on random PSD pairs.
pub fn convexity_probe<R: Rng + ?Sized>(batch: &Batch, trials: usize, rng: &mut R) -> Result<bool> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let d = batch.dim();
    let mean_sq = batch.anchors.norm_squared() / batch.anchors.nrows() as f64;
    // keep typical exponents O(1)
    let scale = 1.0 / (d as f64 * mean_sq.max(1e-12));
    for _ in 0..trials {
        let g1 = linalg::standard_normal_matrix(d, d, rng);
        let g2 = linalg::standard_normal_matrix(d, d, rng);
        let b1 = &g1 * g1.transpose() * scale;
        let b2 = &g2 * g2.transpose() * scale;
        let lambda: f64 = rng.random_range(1e-6..1.0 - 1e-6);
        if convexity_gap(batch, &b1, &b2, lambda)? > 1e-9 {
            return Ok(false);
        }
    }
    Ok(true)
}
