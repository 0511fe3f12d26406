//! Brute-force clustering metrics used as references for the library ones.

use std::collections::BTreeMap;

use fisher_ssl::cluster;

/// All labelings of `n` points with labels below `k`, as base-`k` digits.
pub fn all_labelings(n: usize, k: usize) -> Vec<Vec<usize>> {
    let total = k.pow(n as u32);
    (0..total)
        .map(|mut code| {
            (0..n)
                .map(|_| {
                    let d = code % k;
                    code /= k;
                    d
                })
                .collect()
        })
        .collect()
}

/// One representative per partition into at most `k` blocks (first-appearance order).
pub fn canonical_labelings(n: usize, k: usize) -> Vec<Vec<usize>> {
    all_labelings(n, k)
        .into_iter()
        .filter(|l| {
            let mut next = 0;
            l.iter().all(|&v| {
                if v < next {
                    true
                } else if v == next {
                    next += 1;
                    true
                } else {
                    false
                }
            })
        })
        .collect()
}

fn choose2(x: u64) -> f64 {
    (x * x.saturating_sub(1) / 2) as f64
}

/// Adjusted Rand index by walking every unordered pair of points.
pub fn ari_oracle(t: &[usize], p: &[usize]) -> f64 {
    let n = t.len();
    if n <= 1 {
        return 1.0;
    }
    let (mut both, mut same_t, mut same_p) = (0u64, 0u64, 0u64);
    for i in 0..n {
        for j in i + 1..n {
            let st = t[i] == t[j];
            let sp = p[i] == p[j];
            both += (st && sp) as u64;
            same_t += st as u64;
            same_p += sp as u64;
        }
    }
    let all = choose2(n as u64);
    let expected = same_t as f64 * same_p as f64 / all;
    let max = 0.5 * (same_t + same_p) as f64;
    if max == expected {
        return 1.0;
    }
    (both as f64 - expected) / (max - expected)
}

fn binom(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn counts(labels: &[usize]) -> BTreeMap<usize, u64> {
    let mut m = BTreeMap::new();
    for &l in labels {
        *m.entry(l).or_insert(0) += 1;
    }
    m
}

/// Adjusted mutual information (arithmetic-mean normaliser) with the expected
/// MI summed over exact integer hypergeometric probabilities.
pub fn ami_oracle(t: &[usize], p: &[usize]) -> f64 {
    let n = t.len() as u64;
    let (ct, cp) = (counts(t), counts(p));
    if n <= 1 || (ct.len() == 1 && cp.len() == 1) {
        return 1.0;
    }
    let nf = n as f64;
    let mut joint: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    for (&a, &b) in t.iter().zip(p) {
        *joint.entry((a, b)).or_insert(0) += 1;
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(a, b), &c)| {
            let c = c as f64;
            c / nf * (nf * c / (ct[&a] as f64 * cp[&b] as f64)).ln()
        })
        .sum();
    let h = |m: &BTreeMap<usize, u64>| -> f64 { m.values().map(|&c| -(c as f64 / nf) * (c as f64 / nf).ln()).sum() };
    let mut emi = 0.0;
    for &a in ct.values() {
        for &b in cp.values() {
            let total = binom(n, b) as f64;
            for nij in 1..=a.min(b) {
                let ways = binom(a, nij) * binom(n - a, b - nij);
                if ways == 0 {
                    continue;
                }
                let x = nij as f64;
                emi += (ways as f64 / total) * x / nf * (nf * x / (a as f64 * b as f64)).ln();
            }
        }
    }
    let denom = 0.5 * (h(&ct) + h(&cp)) - emi;
    if denom.abs() <= 1e-12 {
        return if same_partition(t, p) { 1.0 } else { 0.0 };
    }
    (mi - emi) / denom
}

fn same_partition(t: &[usize], p: &[usize]) -> bool {
    (0..t.len()).all(|i| (0..t.len()).all(|j| (t[i] == t[j]) == (p[i] == p[j])))
}

/// Worst ARI and AMI deviation from the oracles and the number of pairs
/// checked, over canonical truths and every predicted labeling, for all
/// `n ≤ max_n` and labels below `max_k`.
pub fn exhaustive(max_n: usize, max_k: usize) -> (f64, f64, usize) {
    let (mut worst_ari, mut worst_ami, mut checked) = (0.0f64, 0.0f64, 0usize);
    for n in 1..=max_n {
        let preds = all_labelings(n, max_k);
        for t in canonical_labelings(n, max_k) {
            for p in &preds {
                worst_ari = worst_ari.max((cluster::ari(&t, p).unwrap() - ari_oracle(&t, p)).abs());
                worst_ami = worst_ami.max((cluster::ami(&t, p).unwrap() - ami_oracle(&t, p)).abs());
                checked += 1;
            }
        }
    }
    (worst_ari, worst_ami, checked)
}
