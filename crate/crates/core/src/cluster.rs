//! k-means and external clustering agreement scores.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Seed;
use crate::subspace::ProjectionMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self { restarts: 10, max_iter: 300 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub assignments: Vec<usize>,
    /// `k x r`, one centroid per row.
    pub centroids: DMatrix<f64>,
    pub inertia: f64,
    /// Inertia after each assignment step of the winning restart.
    pub inertia_history: Vec<f64>,
}

/// Row-major copy of the points for cache-friendly distance loops.
struct Points {
    data: Vec<f64>,
    n: usize,
    r: usize,
}

impl Points {
    fn new(m: &DMatrix<f64>) -> Self {
        let (n, r) = m.shape();
        let mut data = Vec::with_capacity(n * r);
        for i in 0..n {
            data.extend(m.row(i).iter());
        }
        Self { data, n, r }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.r..(i + 1) * self.r]
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus_seed<R: Rng + ?Sized>(pts: &Points, k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids = vec![pts.row(rng.random_range(0..pts.n)).to_vec()];
    let mut d2: Vec<f64> = (0..pts.n).map(|i| sq_dist(pts.row(i), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = pts.n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.random_range(0..pts.n)
        };
        let c = pts.row(pick).to_vec();
        for (i, slot) in d2.iter_mut().enumerate() {
            *slot = slot.min(sq_dist(pts.row(i), &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Nearest centroid per point (lowest index wins ties) and the inertia.
fn assign(pts: &Points, centroids: &[Vec<f64>], labels: &mut [usize], dists: &mut [f64]) -> f64 {
    let mut inertia = 0.0;
    for i in 0..pts.n {
        let p = pts.row(i);
        let (mut best, mut best_d) = (0, f64::INFINITY);
        for (c, centroid) in centroids.iter().enumerate() {
            let d = sq_dist(p, centroid);
            if d < best_d {
                best = c;
                best_d = d;
            }
        }
        labels[i] = best;
        dists[i] = best_d;
        inertia += best_d;
    }
    inertia
}

fn lloyd(pts: &Points, mut centroids: Vec<Vec<f64>>, max_iter: usize) -> (Vec<usize>, Vec<Vec<f64>>, f64, Vec<f64>) {
    let k = centroids.len();
    let mut labels = vec![usize::MAX; pts.n];
    let mut next = vec![0; pts.n];
    let mut dists = vec![0.0; pts.n];
    let mut history = Vec::new();
    let mut inertia = f64::INFINITY;
    for _ in 0..max_iter.max(1) {
        inertia = assign(pts, &centroids, &mut next, &mut dists);
        debug_assert!(
            history.last().is_none_or(|&prev: &f64| inertia <= prev + 1e-9 * prev.abs().max(1.0)),
            "k-means inertia increased"
        );
        history.push(inertia);
        if next == labels {
            break;
        }
        labels.copy_from_slice(&next);

        let mut sums = vec![vec![0.0; pts.r]; k];
        let mut counts = vec![0usize; k];
        for i in 0..pts.n {
            counts[labels[i]] += 1;
            for (s, x) in sums[labels[i]].iter_mut().zip(pts.row(i)) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        // Empty clusters take the point farthest from its current centroid.
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..pts.n)
                    .max_by(|&i, &j| dists[i].total_cmp(&dists[j]).then(j.cmp(&i)))
                    .expect("n >= k >= 1");
                centroids[c] = pts.row(far).to_vec();
                dists[far] = 0.0;
            }
        }
    }
    (labels, centroids, inertia, history)
}

/// k-means++ seeding followed by Lloyd iterations; the restart with the
/// lowest inertia wins. Restart `i` draws from its own substream.
pub fn kmeans<R: Rng + ?Sized>(points: &DMatrix<f64>, k: usize, cfg: &KMeansConfig, rng: &mut R) -> Result<Clustering> {
    let n = points.nrows();
    if k == 0 || n < k {
        return Err(Error::InvalidArgument(format!("k-means needs n >= k >= 1, got n={n}, k={k}")));
    }
    if cfg.restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be at least 1".into()));
    }
    if let Some(i) = points.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "k-means input", index: i });
    }
    let pts = Points::new(points);
    let root = Seed(rng.random());
    let mut best: Option<(Vec<usize>, Vec<Vec<f64>>, f64, Vec<f64>)> = None;
    for restart in 0..cfg.restarts {
        let mut sub = root.derive(restart as u64).rng();
        let init = plus_plus_seed(&pts, k, &mut sub);
        let run = lloyd(&pts, init, cfg.max_iter);
        if best.as_ref().is_none_or(|b| run.2 < b.2) {
            best = Some(run);
        }
    }
    let (assignments, centroids, inertia, inertia_history) = best.expect("at least one restart");
    Ok(Clustering {
        assignments,
        centroids: DMatrix::from_fn(k, pts.r, |c, j| centroids[c][j]),
        inertia,
        inertia_history,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    /// `counts[i][j]`: points with the `i`-th true and `j`-th predicted label
    /// (labels renumbered in order of first appearance).
    pub counts: Vec<Vec<u64>>,
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    pub n: u64,
}

fn renumber(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::HashMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

impl ContingencyTable {
    pub fn new(truth: &[usize], pred: &[usize]) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::Dimension(format!("label vectors differ in length: {} vs {}", truth.len(), pred.len())));
        }
        let (t, kt) = renumber(truth);
        let (p, kp) = renumber(pred);
        let mut counts = vec![vec![0u64; kp]; kt];
        for (&i, &j) in t.iter().zip(&p) {
            counts[i][j] += 1;
        }
        let row_sums = counts.iter().map(|r| r.iter().sum()).collect();
        let col_sums = (0..kp).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
        Ok(Self { counts, row_sums, col_sums, n: truth.len() as u64 })
    }

    /// Same partition up to relabelling.
    pub fn is_bijective(&self) -> bool {
        self.row_sums.len() == self.col_sums.len()
            && self.counts.iter().all(|r| r.iter().filter(|&&c| c > 0).count() == 1)
    }
}

fn pairs(x: u64) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index. Identical trivial partitions (both one cluster,
/// both all singletons, or `n ≤ 1`) score 1.
pub fn ari(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let t = ContingencyTable::new(truth, pred)?;
    if t.n <= 1 {
        return Ok(1.0);
    }
    let index: f64 = t.counts.iter().flatten().map(|&c| pairs(c)).sum();
    let a: f64 = t.row_sums.iter().map(|&c| pairs(c)).sum();
    let b: f64 = t.col_sums.iter().map(|&c| pairs(c)).sum();
    let expected = a * b / pairs(t.n);
    let max_index = 0.5 * (a + b);
    if max_index == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max_index - expected))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmiNormalization {
    Min,
    Geometric,
    #[default]
    Arithmetic,
    Max,
}

impl AmiNormalization {
    fn apply(self, h1: f64, h2: f64) -> f64 {
        match self {
            Self::Min => h1.min(h2),
            Self::Geometric => (h1 * h2).sqrt(),
            Self::Arithmetic => 0.5 * (h1 + h2),
            Self::Max => h1.max(h2),
        }
    }
}

fn entropy(sums: &[u64], n: f64) -> f64 {
    sums.iter().filter(|&&c| c > 0).map(|&c| {
        let p = c as f64 / n;
        -p * p.ln()
    }).sum()
}

fn log_factorials(n: u64) -> Vec<f64> {
    let mut t = Vec::with_capacity(n as usize + 1);
    let mut acc = 0.0;
    t.push(0.0);
    for i in 1..=n {
        acc += (i as f64).ln();
        t.push(acc);
    }
    t
}

pub fn mutual_information(t: &ContingencyTable) -> f64 {
    let n = t.n as f64;
    let mut mi = 0.0;
    for (i, row) in t.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (n * c / (t.row_sums[i] as f64 * t.col_sums[j] as f64)).ln();
            }
        }
    }
    mi
}

/// Expected mutual information under the hypergeometric model with the
/// table's marginals fixed.
pub fn expected_mutual_information(t: &ContingencyTable) -> f64 {
    let n = t.n;
    let lf = log_factorials(n);
    let nf = n as f64;
    let mut emi = 0.0;
    for &a in &t.row_sums {
        for &b in &t.col_sums {
            let lo = (a + b).saturating_sub(n).max(1);
            let hi = a.min(b);
            let fixed = lf[a as usize] + lf[b as usize] + lf[(n - a) as usize] + lf[(n - b) as usize] - lf[n as usize];
            for nij in lo..=hi {
                let log_p = fixed
                    - lf[nij as usize]
                    - lf[(a - nij) as usize]
                    - lf[(b - nij) as usize]
                    - lf[(n + nij - a - b) as usize];
                let x = nij as f64;
                emi += x / nf * (nf * x / (a as f64 * b as f64)).ln() * log_p.exp();
            }
        }
    }
    emi
}

/// Adjusted mutual information with natural-log entropies. Degenerate
/// tables whose normaliser equals the expected MI score 1 for identical
/// partitions and 0 otherwise.
pub fn ami_with(truth: &[usize], pred: &[usize], norm: AmiNormalization) -> Result<f64> {
    let t = ContingencyTable::new(truth, pred)?;
    if t.n <= 1 || (t.row_sums.len() == 1 && t.col_sums.len() == 1) {
        return Ok(1.0);
    }
    let n = t.n as f64;
    let mi = mutual_information(&t);
    let emi = expected_mutual_information(&t);
    let h = norm.apply(entropy(&t.row_sums, n), entropy(&t.col_sums, n));
    let denom = h - emi;
    if denom.abs() <= 1e-14 * h.max(1.0) {
        return Ok(if t.is_bijective() { 1.0 } else { 0.0 });
    }
    Ok((mi - emi) / denom)
}

pub fn ami(truth: &[usize], pred: &[usize]) -> Result<f64> {
    ami_with(truth, pred, AmiNormalization::Arithmetic)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub ari: f64,
    pub ami: f64,
}

/// Projects the rows of `points` through `Aᵀ`, clusters into `k` groups and
/// scores the result against `labels`.
pub fn evaluate_projection<R: Rng + ?Sized>(
    a: &ProjectionMap,
    points: &DMatrix<f64>,
    labels: &[usize],
    k: usize,
    cfg: &KMeansConfig,
    rng: &mut R,
) -> Result<Scores> {
    if points.ncols() != a.ambient_dim() {
        return Err(Error::Dimension(format!("points have width {}, map expects {}", points.ncols(), a.ambient_dim())));
    }
    if labels.len() != points.nrows() {
        return Err(Error::Dimension("one label per point required".into()));
    }
    let projected = a.apply_rows(points);
    let clustering = kmeans(&projected, k, cfg, rng)?;
    Ok(Scores { ari: ari(labels, &clustering.assignments)?, ami: ami(labels, &clustering.assignments)? })
}
