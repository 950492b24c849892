//! Independent reference implementations used as test oracles.
//!
//! Nothing here calls into the library's kernels: distances, neighbor sets,
//! refined distances, DBSCAN and the losses are all recomputed from their
//! definitions with straightforward loops and std collections.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use reid_core::{FeatureMatrix, Metric};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| (0..d).map(|_| StandardNormal.sample(&mut r)).collect())
        .collect()
}

pub fn gaussian_matrix(n: usize, d: usize, seed: u64) -> FeatureMatrix {
    FeatureMatrix::from_rows(&gaussian_rows(n, d, seed)).unwrap()
}

pub fn unit_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut r)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect()
}

/// Plain scalar distance, accumulated in f64.
pub fn distance(a: &[f32], b: &[f32], metric: Metric) -> f64 {
    match metric {
        Metric::Euclidean => a
            .iter()
            .zip(b)
            .map(|(x, y)| (*x as f64 - *y as f64).powi(2))
            .sum::<f64>()
            .sqrt(),
        Metric::Cosine => {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
            let na = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
            (1.0 - dot / (na * nb)).clamp(0.0, 2.0)
        }
    }
}

/// Full n x n table, stored at f32 precision like the library's outputs.
pub fn distance_table(f: &FeatureMatrix, metric: Metric) -> Vec<Vec<f32>> {
    (0..f.rows())
        .map(|i| {
            (0..f.rows())
                .map(|j| if i == j { 0.0 } else { distance(f.row(i), f.row(j), metric) as f32 })
                .collect()
        })
        .collect()
}

/// Top-k by sorting each full row on (distance, index), self excluded.
pub fn brute_knn(f: &FeatureMatrix, k: usize, metric: Metric) -> Vec<Vec<(usize, f32)>> {
    let table = distance_table(f, metric);
    table
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut all: Vec<(usize, f32)> =
                row.iter().enumerate().filter(|(j, _)| *j != i).map(|(j, &d)| (j, d)).collect();
            all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
            all.truncate(k);
            all
        })
        .collect()
}

/// Refined distances evaluated pair by pair from the set definitions.
pub fn naive_refined(neighbors: &[Vec<(usize, f32)>]) -> Vec<Vec<(usize, f64)>> {
    let local: Vec<HashMap<usize, f64>> = neighbors
        .iter()
        .map(|row| row.iter().map(|&(j, d)| (j, (-(d as f64)).exp())).collect())
        .collect();
    let sets: Vec<HashSet<usize>> =
        neighbors.iter().map(|row| row.iter().map(|&(j, _)| j).collect()).collect();
    neighbors
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .map(|&(j, _)| {
                    if !sets[j].contains(&i) {
                        return (j, 1.0);
                    }
                    let inter: HashSet<usize> = sets[i].intersection(&sets[j]).copied().collect();
                    let s_min: f64 = inter.iter().map(|p| local[i][p].min(local[j][p])).sum();
                    let s_max: f64 = inter.iter().map(|p| local[i][p].max(local[j][p])).sum();
                    let s_ij: f64 = sets[i].difference(&inter).map(|p| local[i][p]).sum();
                    let s_ji: f64 = sets[j].difference(&inter).map(|p| local[j][p]).sum();
                    let denom = s_max + s_ij + s_ji;
                    let iou = if denom == 0.0 { 0.0 } else { s_min / denom };
                    (j, 1.0 - iou)
                })
                .collect()
        })
        .collect()
}

pub fn naive_local_rerank(f: &FeatureMatrix, k: usize, metric: Metric) -> Vec<Vec<(usize, f64)>> {
    naive_refined(&brute_knn(f, k, metric))
}

pub const UNVISITED: i64 = -2;
pub const NOISE: i64 = -1;

/// Textbook DBSCAN on a dense symmetric distance matrix.
pub fn dense_dbscan(dist: &[Vec<f64>], eps: f64, min_samples: usize) -> Vec<i64> {
    let n = dist.len();
    let region = |p: usize| -> Vec<usize> { (0..n).filter(|&q| q == p || dist[p][q] <= eps).collect() };
    let mut labels = vec![UNVISITED; n];
    let mut c = -1i64;
    for p in 0..n {
        if labels[p] != UNVISITED {
            continue;
        }
        let nb = region(p);
        if nb.len() < min_samples {
            labels[p] = NOISE;
            continue;
        }
        c += 1;
        labels[p] = c;
        let mut stack: Vec<usize> = nb.into_iter().filter(|&q| q != p).collect();
        while let Some(q) = stack.pop() {
            if labels[q] == NOISE {
                labels[q] = c;
            }
            if labels[q] != UNVISITED {
                continue;
            }
            labels[q] = c;
            let nq = region(q);
            if nq.len() >= min_samples {
                stack.extend(nq);
            }
        }
    }
    labels
}

/// Canonical form of a partition: noise stays -1, clusters renumbered by first occurrence.
pub fn canonical(labels: &[i64]) -> Vec<i64> {
    let mut map = HashMap::new();
    labels
        .iter()
        .map(|&l| {
            if l < 0 {
                -1
            } else {
                let next = map.len() as i64;
                *map.entry(l).or_insert(next)
            }
        })
        .collect()
}

/// Pair-counting form of the adjusted Rand index (noise as singletons).
pub fn ari_pairs(a: &[i64], b: &[i64]) -> f64 {
    let n = a.len();
    let tag = |l: &[i64], i: usize| if l[i] < 0 { -(i as i64) - 10 } else { l[i] };
    let (mut ss, mut sd, mut ds, mut dd) = (0f64, 0f64, 0f64, 0f64);
    for i in 0..n {
        for j in i + 1..n {
            let sa = tag(a, i) == tag(a, j);
            let sb = tag(b, i) == tag(b, j);
            match (sa, sb) {
                (true, true) => ss += 1.0,
                (true, false) => sd += 1.0,
                (false, true) => ds += 1.0,
                (false, false) => dd += 1.0,
            }
        }
    }
    let den = (ss + sd) * (sd + dd) + (ss + ds) * (ds + dd);
    if den == 0.0 {
        1.0
    } else {
        2.0 * (ss * dd - sd * ds) / den
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Proxy loss value straight from the softmax definition.
pub fn proxy_value(vs: &[Vec<f64>], labels: &[usize], proxies: &[Vec<f64>], tau: f64) -> f64 {
    let mut total = 0.0;
    for (v, &l) in vs.iter().zip(labels) {
        let num = (dot(v, &proxies[l]) / tau).exp();
        let den: f64 = proxies.iter().map(|q| (dot(v, q) / tau).exp()).sum();
        total -= (num / den).ln();
    }
    total / vs.len() as f64
}

/// Batch-hard value with hard pairs chosen by scanning similarities.
pub fn hard_value(vs: &[Vec<f64>], labels: &[usize], tau: f64) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    for a in 0..vs.len() {
        let pos = (0..vs.len())
            .filter(|&u| u != a && labels[u] == labels[a])
            .min_by(|&x, &y| dot(&vs[a], &vs[x]).partial_cmp(&dot(&vs[a], &vs[y])).unwrap().then(x.cmp(&y)));
        let neg = (0..vs.len())
            .filter(|&u| labels[u] != labels[a])
            .max_by(|&x, &y| dot(&vs[a], &vs[x]).partial_cmp(&dot(&vs[a], &vs[y])).unwrap().then(y.cmp(&x)));
        if let (Some(p), Some(n)) = (pos, neg) {
            let ep = (dot(&vs[a], &vs[p]) / tau).exp();
            let en = (dot(&vs[a], &vs[n]) / tau).exp();
            total -= (ep / (ep + en)).ln();
            count += 1;
        }
    }
    total / count as f64
}

/// Smallest gap between the chosen hard positive/negative and the runner-up.
pub fn hard_selection_margin(vs: &[Vec<f64>], labels: &[usize]) -> f64 {
    let mut margin = f64::INFINITY;
    for a in 0..vs.len() {
        let mut pos: Vec<f64> =
            (0..vs.len()).filter(|&u| u != a && labels[u] == labels[a]).map(|u| dot(&vs[a], &vs[u])).collect();
        let mut neg: Vec<f64> =
            (0..vs.len()).filter(|&u| labels[u] != labels[a]).map(|u| dot(&vs[a], &vs[u])).collect();
        pos.sort_by(|x, y| x.partial_cmp(y).unwrap());
        neg.sort_by(|x, y| y.partial_cmp(x).unwrap());
        if pos.len() > 1 {
            margin = margin.min(pos[1] - pos[0]);
        }
        if neg.len() > 1 {
            margin = margin.min(neg[0] - neg[1]);
        }
    }
    margin
}

/// Central finite differences of `f` at `x`.
pub fn finite_diff(x: &[Vec<f64>], h: f64, f: impl Fn(&[Vec<f64>]) -> f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        for k in 0..x[i].len() {
            let orig = xp[i][k];
            xp[i][k] = orig + h;
            let up = f(&xp);
            xp[i][k] = orig - h;
            let down = f(&xp);
            xp[i][k] = orig;
            out.push((up - down) / (2.0 * h));
        }
    }
    out
}

/// `max |a - b| / max |b|`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    analytic.iter().zip(numeric).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale
}

/// Barlow Twins loss by triple loops.
pub fn barlow_value(z1: &[Vec<f64>], z2: &[Vec<f64>], lambda: f64) -> f64 {
    let n = z1.len();
    let d = z1[0].len();
    let std = |z: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let mut out = z.to_vec();
        for c in 0..d {
            let mean = z.iter().map(|r| r[c]).sum::<f64>() / n as f64;
            let sd = (z.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            for r in 0..n {
                out[r][c] = (z[r][c] - mean) / sd;
            }
        }
        out
    };
    let (a, b) = (std(z1), std(z2));
    let mut loss = 0.0;
    for i in 0..d {
        for j in 0..d {
            let mut c = 0.0;
            for r in 0..n {
                c += a[r][i] * b[r][j];
            }
            c /= n as f64;
            loss += if i == j { (1.0 - c).powi(2) } else { lambda * c * c };
        }
    }
    loss
}

/// k-reciprocal re-ranking written directly against dense matrices.
pub fn dense_frr(f: &FeatureMatrix, k1: usize, k2: usize, lambda: f64, metric: Metric) -> Vec<Vec<f64>> {
    let n = f.rows();
    let mut orig: Vec<Vec<f64>> = distance_table(f, metric)
        .into_iter()
        .map(|row| row.into_iter().map(|v| (v * v) as f64).collect())
        .collect();
    for row in &mut orig {
        let m = row.iter().cloned().fold(0.0, f64::max);
        if m > 0.0 {
            row.iter_mut().for_each(|v| *v /= m);
        }
    }
    let rank: Vec<Vec<usize>> = orig
        .iter()
        .map(|row| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| (row[a] as f32).partial_cmp(&(row[b] as f32)).unwrap().then(a.cmp(&b)));
            idx
        })
        .collect();
    let k_recip = |i: usize, k: usize| -> Vec<usize> {
        rank[i][..k + 1].iter().copied().filter(|&c| rank[c][..k + 1].contains(&i)).collect()
    };
    let half = ((k1 as f64) / 2.0).round_ties_even() as usize;
    let mut v = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        let recip = k_recip(i, k1);
        let mut exp_set: Vec<usize> = recip.clone();
        for &c in &recip {
            let cr = k_recip(c, half);
            let shared = cr.iter().filter(|x| recip.contains(x)).count();
            if shared as f64 > 2.0 / 3.0 * cr.len() as f64 {
                exp_set.extend(cr);
            }
        }
        exp_set.sort();
        exp_set.dedup();
        let w: Vec<f64> = exp_set.iter().map(|&c| (-(orig[i][c] as f32 as f64)).exp()).collect();
        let s: f64 = w.iter().sum();
        for (&c, wc) in exp_set.iter().zip(w) {
            v[i][c] = wc / s;
        }
    }
    if k2 != 1 {
        let mut qe = vec![vec![0.0f64; n]; n];
        for i in 0..n {
            for c in 0..n {
                qe[i][c] = rank[i][..k2].iter().map(|&r| v[r][c]).sum::<f64>() / k2 as f64;
            }
        }
        v = qe;
    }
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut m = 0.0;
            for c in 0..n {
                m += v[i][c].min(v[j][c]);
            }
            let jac = 1.0 - m / (2.0 - m);
            out[i][j] = jac * (1.0 - lambda) + (orig[i][j] as f32 as f64) * lambda;
        }
    }
    out
}

pub fn random_labels(n: usize, classes: i64, seed: u64) -> Vec<i64> {
    let mut r = rng(seed);
    (0..n).map(|_| r.random_range(0..classes)).collect()
}
