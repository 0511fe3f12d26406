//! Reference subspaces, the Fisher discriminant, and subspace comparison.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::json;
use crate::linalg;
use crate::mixture::SharedGmm;

/// Relative singular-value cutoff used for analytic constructions.
pub const RANK_TOL_ANALYTIC: f64 = 1e-6;
/// Angle tolerance for analytic constructions, radians.
pub const ANGLE_TOL_ANALYTIC: f64 = 1e-6;
/// Angle tolerance for trained solutions: 3 degrees.
pub const ANGLE_TOL_TRAINED: f64 = 3.0 * std::f64::consts::PI / 180.0;
/// Relative singular-value cutoff for trained solutions.
///
/// Directions of a trained map that the loss does not use shrink only
/// polynomially under stochastic gradients and settle at the gradient-noise
/// floor, a few percent of the leading singular value.
pub const RANK_TOL_TRAINED: f64 = 0.2;
/// Cutoff used when extracting the Fisher subspace from `Σ⁻¹[μ_1 … μ_K]`.
pub const FISHER_RANK_TOL: f64 = 1e-9;

const ORTHONORMAL_TOL: f64 = 1e-10;

/// A real d x r matrix `A`; points map to `Aᵀx`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMap(DMatrix<f64>);

impl ProjectionMap {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.ncols() == 0 || matrix.nrows() == 0 {
            return Err(Error::InvalidArgument("projection needs at least one row and one column".into()));
        }
        if let Some(i) = matrix.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "projection map", index: i });
        }
        Ok(Self(matrix))
    }

    pub fn identity(d: usize) -> Self {
        Self(DMatrix::identity(d, d))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn ambient_dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn rank_bound(&self) -> usize {
        self.0.ncols()
    }

    pub fn spectral_norm(&self) -> f64 {
        linalg::singular_values_desc(&self.0).first().copied().unwrap_or(0.0)
    }

    /// Projects the rows of `points` (n x d) to n x r.
    pub fn apply_rows(&self, points: &DMatrix<f64>) -> DMatrix<f64> {
        points * &self.0
    }

    pub fn to_json(&self) -> String {
        json::fmt_matrix(&self.0)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let rows: Vec<Vec<f64>> = serde_json::from_str(s)?;
        Self::new(json::matrix_from_rows(&rows, "projection")?)
    }
}

/// A subspace of R^d stored by an orthonormal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: DMatrix<f64>,
}

impl Subspace {
    pub fn new(basis: DMatrix<f64>) -> Result<Self> {
        let (d, m) = basis.shape();
        if m == 0 || m > d {
            return Err(Error::InvalidArgument(format!("subspace dimension must be in 1..={d}, got {m}")));
        }
        let defect = linalg::orthonormality_defect(&basis);
        if defect > ORTHONORMAL_TOL {
            return Err(Error::InvalidArgument(format!("basis columns are not orthonormal (defect {defect:e})")));
        }
        Ok(Self { basis })
    }

    /// Column space of `a`, truncated at `rel_tol * sigma_max`. `None` when `a` is numerically zero.
    pub fn span_of(a: &DMatrix<f64>, rel_tol: f64) -> Option<Self> {
        let (q, _) = linalg::orthonormal_basis(a, rel_tol);
        (q.ncols() > 0).then_some(Self { basis: q })
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn as_map(&self) -> ProjectionMap {
        ProjectionMap(self.basis.clone())
    }

    pub fn to_json(&self) -> String {
        json::fmt_matrix(&self.basis)
    }
}

/// Span of the component means, orthonormalised.
pub fn mean_subspace(model: &SharedGmm) -> Result<Subspace> {
    Subspace::span_of(&model.mean_matrix(), FISHER_RANK_TOL).ok_or(Error::ZeroFisherSubspace)
}

/// `span{Σ⁻¹ μ_k}`, via a Cholesky solve followed by a rank-revealing SVD.
pub fn fisher_subspace(model: &SharedGmm) -> Result<Subspace> {
    let y = model.cholesky().solve(&model.mean_matrix());
    Subspace::span_of(&y, FISHER_RANK_TOL).ok_or(Error::ZeroFisherSubspace)
}

/// Fisher directions sorted by generalised Rayleigh quotient `vᵀMv / vᵀΣv`,
/// largest first. Only directions with a non-zero quotient are returned.
pub fn ranked_fisher_directions(model: &SharedGmm) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let l = model.cholesky().l();
    let mut w = model.between_scatter();
    l.solve_lower_triangular_mut(&mut w);
    let mut w = w.transpose();
    l.solve_lower_triangular_mut(&mut w);
    let (vals, vecs) = linalg::sym_eigen_desc(&w);
    let top = vals.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return Err(Error::ZeroFisherSubspace);
    }
    let keep = vals.iter().take_while(|&&v| v > FISHER_RANK_TOL * top).count();
    // v = L⁻ᵀ y
    let mut dirs = vecs.columns(0, keep).into_owned();
    l.transpose().solve_upper_triangular_mut(&mut dirs);
    Ok((vals[..keep].to_vec(), dirs))
}

/// Orthonormal basis of the top-`r` ranked Fisher directions (all of `S_F` when `r >= dim S_F`).
pub fn top_fisher_subspace(model: &SharedGmm, r: usize) -> Result<Subspace> {
    let (_, dirs) = ranked_fisher_directions(model)?;
    let k = r.min(dirs.ncols()).max(1);
    Subspace::new(linalg::qr_q(&dirs.columns(0, k).into_owned()))
}

#[derive(Debug, Clone)]
pub struct SvdSubspace {
    pub subspace: Subspace,
    /// Eigenvalues `r` and `r+1` of the second moment coincide within 1e-10,
    /// so the top-`r` subspace is not unique.
    pub non_unique: bool,
    pub eigenvalues: Vec<f64>,
}

fn top_eigen_subspace(second_moment: &DMatrix<f64>, r: usize) -> Result<SvdSubspace> {
    let d = second_moment.nrows();
    if r == 0 || r > d {
        return Err(Error::InvalidArgument(format!("target dimension must be in 1..={d}, got {r}")));
    }
    let (vals, vecs) = linalg::sym_eigen_desc(second_moment);
    let non_unique = r < d && (vals[r - 1] - vals[r]).abs() <= 1e-10;
    Ok(SvdSubspace { subspace: Subspace::new(vecs.columns(0, r).into_owned())?, non_unique, eigenvalues: vals })
}

/// Top-`r` eigenvectors of the population second moment `Σ_k w_k μ_k μ_kᵀ + Σ`.
pub fn svd_subspace(model: &SharedGmm, r: usize) -> Result<SvdSubspace> {
    top_eigen_subspace(&model.second_moment(), r)
}

/// Top-`r` eigenvectors of `(1/n) Xᵀ X` for the rows of `sample`.
pub fn svd_subspace_empirical(sample: &DMatrix<f64>, r: usize) -> Result<SvdSubspace> {
    if sample.nrows() == 0 {
        return Err(Error::InvalidArgument("empty sample".into()));
    }
    let m = sample.transpose() * sample / sample.nrows() as f64;
    top_eigen_subspace(&m, r)
}

/// `J(A) = Tr((AᵀΣA)⁻¹ AᵀMA)` with `M = Σ_k w_k μ_k μ_kᵀ`.
pub fn fisher_discriminant(model: &SharedGmm, a: &ProjectionMap) -> Result<f64> {
    let a = a.matrix();
    if a.nrows() != model.dim() {
        return Err(Error::Dimension(format!("projection has {} rows, model dimension is {}", a.nrows(), model.dim())));
    }
    let at = a.transpose();
    let within = linalg::symmetrize(&(&at * model.covariance() * a));
    let (vals, _) = linalg::sym_eigen_desc(&within);
    let smallest = vals.last().copied().unwrap_or(0.0);
    if !(smallest > 1e-12) {
        return Err(Error::DegenerateProjection(format!("AᵀΣA is singular (smallest eigenvalue {smallest:e})")));
    }
    let between = &at * model.between_scatter() * a;
    let chol = within
        .cholesky()
        .ok_or_else(|| Error::DegenerateProjection("AᵀΣA is not positive definite".into()))?;
    Ok(chol.solve(&between).trace())
}

/// Principal angles in radians, non-decreasing, `min(dim1, dim2)` of them.
pub fn principal_angles(s1: &Subspace, s2: &Subspace) -> Result<Vec<f64>> {
    if s1.ambient_dim() != s2.ambient_dim() {
        return Err(Error::Dimension(format!(
            "subspaces live in R^{} and R^{}",
            s1.ambient_dim(),
            s2.ambient_dim()
        )));
    }
    // the smaller subspace goes second so both spectra have min(dim) entries
    let (big, small) = if s1.dim() >= s2.dim() { (s1, s2) } else { (s2, s1) };
    let c = big.basis.transpose() * &small.basis;
    let residual = &small.basis - &big.basis * &c;
    let cosines = linalg::singular_values_desc(&c);
    let mut sines = linalg::singular_values_desc(&residual);
    sines.reverse();
    // acos loses accuracy near zero, asin near a right angle
    let mut angles: Vec<f64> = cosines
        .iter()
        .zip(&sines)
        .map(|(&cs, &sn)| if cs * cs >= 0.5 { sn.clamp(0.0, 1.0).asin() } else { cs.clamp(0.0, 1.0).acos() })
        .collect();
    angles.sort_by(f64::total_cmp);
    Ok(angles)
}

/// Whether a learned map's column space sits inside (or equals) a reference.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceReport {
    pub principal_angles: Vec<f64>,
    /// Largest angle between a learned direction and the reference; π/2 when
    /// the learned span has more dimensions than the reference.
    pub containment_angle: f64,
    pub contained: bool,
    pub equal: bool,
    /// Learned map is numerically zero.
    pub collapse: bool,
    pub learned_dim: usize,
    pub reference_dim: usize,
    pub learned_singular_values: Vec<f64>,
    pub rank_tolerance: f64,
    pub angle_tolerance: f64,
}

impl SubspaceReport {
    pub fn to_json(&self) -> String {
        json::object(&[
            ("principal_angles", json::fmt_vec(&self.principal_angles)),
            ("containment_angle", json::fmt_f64(self.containment_angle)),
            ("contained", self.contained.to_string()),
            ("equal", self.equal.to_string()),
            ("collapse", self.collapse.to_string()),
            ("learned_dim", self.learned_dim.to_string()),
            ("reference_dim", self.reference_dim.to_string()),
            ("learned_singular_values", json::fmt_vec(&self.learned_singular_values)),
            ("rank_tolerance", json::fmt_f64(self.rank_tolerance)),
            ("angle_tolerance", json::fmt_f64(self.angle_tolerance)),
        ])
    }

    pub fn containment_angle_deg(&self) -> f64 {
        self.containment_angle.to_degrees()
    }
}

/// Orthonormalises `learned` by SVD, dropping singular values at or below
/// `rank_tol * sigma_max`, and compares the result against `reference`.
pub fn containment_report(
    learned: &ProjectionMap,
    reference: &Subspace,
    rank_tol: f64,
    angle_tol: f64,
) -> Result<SubspaceReport> {
    let a = learned.matrix();
    if a.nrows() != reference.ambient_dim() {
        return Err(Error::Dimension(format!(
            "learned map lives in R^{}, reference in R^{}",
            a.nrows(),
            reference.ambient_dim()
        )));
    }
    let (basis, svals) = linalg::orthonormal_basis(a, rank_tol);
    let m = reference.dim();
    if basis.ncols() == 0 {
        return Ok(SubspaceReport {
            principal_angles: vec![],
            containment_angle: 0.0,
            contained: true,
            equal: false,
            collapse: true,
            learned_dim: 0,
            reference_dim: m,
            learned_singular_values: svals,
            rank_tolerance: rank_tol,
            angle_tolerance: angle_tol,
        });
    }
    let k = basis.ncols();
    let learned_span = Subspace { basis };
    let angles = principal_angles(&learned_span, reference)?;
    let containment_angle =
        if k > m { std::f64::consts::FRAC_PI_2 } else { angles.iter().copied().fold(0.0, f64::max) };
    let contained = containment_angle <= angle_tol;
    Ok(SubspaceReport {
        principal_angles: angles,
        containment_angle,
        contained,
        // equal dimensions make containment symmetric
        equal: contained && k == m,
        collapse: false,
        learned_dim: k,
        reference_dim: m,
        learned_singular_values: svals,
        rank_tolerance: rank_tol,
        angle_tolerance: angle_tol,
    })
}

/// `Σ⁻¹(μ₁ − μ₂)`, unnormalised.
pub fn lda_direction(mu1: &DVector<f64>, mu2: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<DVector<f64>> {
    let diff = mu1 - mu2;
    if diff.iter().all(|v| *v == 0.0) {
        return Err(Error::ZeroDiscriminant);
    }
    let chol = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidModel("covariance is not positive definite".into()))?;
    Ok(chol.solve(&diff))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FisherLdaVariant {
    /// Pooled covariance `w₁Σ₁ + w₂Σ₂`, the maximiser of the weighted ratio.
    #[default]
    Weighted,
    /// Closed form `(Σ₁ + Σ₂)⁻¹(μ₁ − μ₂)` that ignores the weights.
    Unweighted,
}

pub fn fisher_lda_direction(
    mu1: &DVector<f64>,
    mu2: &DVector<f64>,
    sigma1: &DMatrix<f64>,
    sigma2: &DMatrix<f64>,
    w1: f64,
    w2: f64,
    variant: FisherLdaVariant,
) -> Result<DVector<f64>> {
    if !(w1 > 0.0 && w2 > 0.0 && (w1 + w2 - 1.0).abs() <= 1e-12) {
        return Err(Error::InvalidArgument(format!("weights must be positive and sum to 1, got ({w1}, {w2})")));
    }
    let pooled = match variant {
        FisherLdaVariant::Weighted => sigma1 * w1 + sigma2 * w2,
        FisherLdaVariant::Unweighted => sigma1 + sigma2,
    };
    lda_direction(mu1, mu2, &pooled)
}
