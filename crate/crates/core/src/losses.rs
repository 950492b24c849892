//! Loss values with analytic gradients, EMA updates and PK batch sampling.
//!
//! Gradients are taken with respect to the batch vectors only; proxies are
//! treated as constants. Everything is evaluated in `f64`.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::types::{ClusterAssignment, FeatureMatrix};

pub const DEFAULT_TAU: f64 = 0.04;
pub const DEFAULT_LAMBDA: f64 = 0.5;
pub const DEFAULT_BETA: f64 = 0.999;
pub const DEFAULT_LAMBDA_BT: f64 = 5e-3;
pub const UNIT_NORM_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossHyper {
    /// Softmax temperature.
    pub tau: f64,
    /// Weight of the batch-hard term.
    pub lambda: f64,
    /// EMA inertia.
    pub beta: f64,
}

impl Default for LossHyper {
    fn default() -> Self {
        Self { tau: DEFAULT_TAU, lambda: DEFAULT_LAMBDA, beta: DEFAULT_BETA }
    }
}

impl LossHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(invalid("tau", alloc::format!("{} must be > 0", self.tau)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid("lambda", alloc::format!("{} must be >= 0", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(invalid("beta", alloc::format!("{} outside [0, 1]", self.beta)));
        }
        Ok(())
    }
}

fn check_unit_rows(dim: usize, data: &[f64]) -> Result<()> {
    for (i, row) in data.chunks(dim).enumerate() {
        let norm = libm::sqrt(row.iter().map(|v| v * v).sum::<f64>());
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(Error::NotUnitNorm { index: i, norm });
        }
    }
    Ok(())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unit-norm vectors, one per cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxySet {
    dim: usize,
    proxies: Vec<f64>,
    cluster_ids: Vec<usize>,
}

impl ProxySet {
    pub fn new(dim: usize, proxies: Vec<f64>, cluster_ids: Vec<usize>) -> Result<Self> {
        if dim == 0 || proxies.len() != dim * cluster_ids.len() {
            return Err(Error::ShapeMismatch { rows: cluster_ids.len(), dim, len: proxies.len() });
        }
        check_unit_rows(dim, &proxies)?;
        let mut seen = cluster_ids.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("cluster_ids", "duplicate cluster id"));
        }
        Ok(Self { dim, proxies, cluster_ids })
    }

    /// One uniformly chosen member per cluster as that cluster's proxy.
    pub fn from_random_members(features: &FeatureMatrix, a: &ClusterAssignment, seed: u64) -> Result<Self> {
        if features.rows() != a.len() {
            return Err(Error::LengthMismatch { left: features.rows(), right: a.len() });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut proxies = Vec::with_capacity(a.num_clusters() * features.dim());
        for members in a.members() {
            let pick = members[rng.random_range(0..members.len())];
            proxies.extend(features.row(pick).iter().map(|&v| f64::from(v)));
        }
        Self::new(features.dim(), proxies, (0..a.num_clusters()).collect())
    }

    pub fn len(&self) -> usize {
        self.cluster_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cluster_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn proxy(&self, c: usize) -> &[f64] {
        &self.proxies[c * self.dim..(c + 1) * self.dim]
    }

    pub fn cluster_ids(&self) -> &[usize] {
        &self.cluster_ids
    }
}

/// Unit-norm vectors with cluster labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    dim: usize,
    vectors: Vec<f64>,
    labels: Vec<usize>,
}

impl Batch {
    pub fn new(dim: usize, vectors: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if dim == 0 || vectors.len() != dim * labels.len() || labels.is_empty() {
            return Err(Error::ShapeMismatch { rows: labels.len(), dim, len: vectors.len() });
        }
        check_unit_rows(dim, &vectors)?;
        Ok(Self { dim, vectors, labels })
    }

    /// Gathers `indices` from `features` under `labels[index]`; noise indices are rejected.
    pub fn gather(features: &FeatureMatrix, a: &ClusterAssignment, indices: &[usize]) -> Result<Self> {
        let mut vectors = Vec::with_capacity(indices.len() * features.dim());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= features.rows() || i >= a.len() {
                return Err(Error::IndexOutOfRange { index: i, n: features.rows().min(a.len()) });
            }
            let l = a.labels()[i];
            if l < 0 {
                return Err(Error::InvalidLabels(alloc::format!("index {i} is noise")));
            }
            vectors.extend(features.row(i).iter().map(|&v| f64::from(v)));
            labels.push(l as usize);
        }
        Self::new(features.dim(), vectors, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

/// A loss value and its gradient with respect to each batch vector (`B x d`, row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// Softmax cross-entropy of each vector against all proxies.
pub fn proxy_loss(batch: &Batch, proxies: &ProxySet, h: &LossHyper) -> Result<LossGrad> {
    h.validate()?;
    if batch.dim != proxies.dim {
        return Err(Error::DimensionMismatch { left: batch.dim, right: proxies.dim });
    }
    let slot: BTreeMap<usize, usize> =
        proxies.cluster_ids.iter().enumerate().map(|(s, &c)| (c, s)).collect();
    let (b, d, c) = (batch.len(), batch.dim, proxies.len());
    let mut value = 0.0;
    let mut grad = vec![0.0; b * d];
    let mut logits = vec![0.0; c];
    for i in 0..b {
        let pos = *slot.get(&batch.labels[i]).ok_or(Error::MissingProxy(batch.labels[i]))?;
        let v = batch.vector(i);
        for (q, l) in logits.iter_mut().enumerate() {
            *l = dot(v, proxies.proxy(q)) / h.tau;
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| libm::exp(l - max)).sum();
        value += max + libm::log(z) - logits[pos];
        let g = &mut grad[i * d..(i + 1) * d];
        for (q, l) in logits.iter().enumerate() {
            let w = libm::exp(l - max) / z - if q == pos { 1.0 } else { 0.0 };
            for (gk, pk) in g.iter_mut().zip(proxies.proxy(q)) {
                *gk += w * pk;
            }
        }
    }
    let scale = 1.0 / (b as f64);
    grad.iter_mut().for_each(|g| *g *= scale / h.tau);
    Ok(LossGrad { value: value * scale, grad })
}

/// Stable `ln(1 + e^z)`.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + libm::log1p(libm::exp(-z))
    } else {
        libm::log1p(libm::exp(z))
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// Hardest positive (lowest similarity, same label) and hardest negative
/// (highest similarity, other label) of sample `a`; ties keep the lower index.
pub fn hard_pair(batch: &Batch, a: usize) -> Option<(usize, usize)> {
    let v = batch.vector(a);
    let mut pos: Option<(usize, f64)> = None;
    let mut neg: Option<(usize, f64)> = None;
    for u in 0..batch.len() {
        if u == a {
            continue;
        }
        let s = dot(v, batch.vector(u));
        if batch.labels[u] == batch.labels[a] {
            if pos.is_none_or(|(_, best)| s < best) {
                pos = Some((u, s));
            }
        } else if neg.is_none_or(|(_, best)| s > best) {
            neg = Some((u, s));
        }
    }
    Some((pos?.0, neg?.0))
}

/// Batch-hard softmax loss, averaged over samples that have both a positive and a negative.
pub fn hard_loss(batch: &Batch, h: &LossHyper) -> Result<LossGrad> {
    h.validate()?;
    let (b, d) = (batch.len(), batch.dim);
    let mut value = 0.0;
    let mut grad = vec![0.0; b * d];
    let mut eligible = 0usize;
    for a in 0..b {
        let Some((p, n)) = hard_pair(batch, a) else { continue };
        eligible += 1;
        let (va, vp, vn) = (batch.vector(a), batch.vector(p), batch.vector(n));
        let z = (dot(va, vn) - dot(va, vp)) / h.tau;
        value += softplus(z);
        let s = sigmoid(z) / h.tau;
        for k in 0..d {
            grad[a * d + k] += s * (vn[k] - vp[k]);
            grad[n * d + k] += s * va[k];
            grad[p * d + k] -= s * va[k];
        }
    }
    if eligible == 0 {
        return Err(Error::NoEligibleSample);
    }
    let scale = 1.0 / eligible as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok(LossGrad { value: value * scale, grad })
}

/// `proxy + λ·hard`. With `λ = 0` the hard term is not evaluated.
pub fn final_loss(batch: &Batch, proxies: &ProxySet, h: &LossHyper) -> Result<LossGrad> {
    let mut out = proxy_loss(batch, proxies, h)?;
    if h.lambda == 0.0 {
        return Ok(out);
    }
    let hard = hard_loss(batch, h)?;
    out.value += h.lambda * hard.value;
    for (g, hg) in out.grad.iter_mut().zip(&hard.grad) {
        *g += h.lambda * hg;
    }
    Ok(out)
}

/// Barlow Twins redundancy-reduction loss between two views.
///
/// Columns are standardized with the population standard deviation and the
/// cross-correlation is normalized by the batch size.
pub fn barlow_twins_loss(z1: &FeatureMatrix, z2: &FeatureMatrix, lambda_bt: f64) -> Result<f64> {
    if z1.rows() != z2.rows() || z1.dim() != z2.dim() {
        return Err(Error::DimensionMismatch { left: z1.rows() * z1.dim(), right: z2.rows() * z2.dim() });
    }
    let (n, d) = (z1.rows(), z1.dim());
    if n < 2 {
        return Err(invalid("batch", "need at least 2 rows"));
    }
    let standardize = |z: &FeatureMatrix| -> Result<Vec<f64>> {
        let mut out: Vec<f64> = z.as_slice().iter().map(|&v| f64::from(v)).collect();
        for col in 0..d {
            let mean = (0..n).map(|r| out[r * d + col]).sum::<f64>() / n as f64;
            let var = (0..n).map(|r| (out[r * d + col] - mean) * (out[r * d + col] - mean)).sum::<f64>() / n as f64;
            if var <= 0.0 {
                return Err(Error::ZeroVariance { col });
            }
            let std = libm::sqrt(var);
            for r in 0..n {
                out[r * d + col] = (out[r * d + col] - mean) / std;
            }
        }
        Ok(out)
    };
    let (a, b) = (standardize(z1)?, standardize(z2)?);
    let mut loss = 0.0;
    for i in 0..d {
        for j in 0..d {
            let c = (0..n).map(|r| a[r * d + i] * b[r * d + j]).sum::<f64>() / n as f64;
            if i == j {
                loss += (1.0 - c) * (1.0 - c);
            } else {
                loss += lambda_bt * c * c;
            }
        }
    }
    Ok(loss)
}

/// `β·prev + (1 - β)·current`, evaluated as `current + β·(prev - current)`.
pub fn ema_update(prev: &[f64], current: &[f64], beta: f64) -> Result<Vec<f64>> {
    if prev.len() != current.len() {
        return Err(Error::LengthMismatch { left: prev.len(), right: current.len() });
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(invalid("beta", alloc::format!("{beta} outside [0, 1]")));
    }
    Ok(prev.iter().zip(current).map(|(&p, &c)| c + beta * (p - c)).collect())
}

/// P clusters x K samples per batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PkParams {
    pub clusters_per_batch: usize,
    pub samples_per_cluster: usize,
    pub repeats: usize,
}

impl Default for PkParams {
    fn default() -> Self {
        Self { clusters_per_batch: 16, samples_per_cluster: 12, repeats: 5 }
    }
}

/// PK batches covering every cluster once per pass, for `repeats` passes.
///
/// Clusters with at least K members contribute K distinct members; smaller
/// clusters are sampled with replacement. Noise is never sampled.
pub fn pk_sample_batches(a: &ClusterAssignment, pk: PkParams, seed: u64) -> Result<Vec<Vec<usize>>> {
    if pk.clusters_per_batch == 0 || pk.samples_per_cluster == 0 {
        return Err(invalid("pk", "P and K must be at least 1"));
    }
    let members = a.members();
    if members.is_empty() {
        return Err(Error::NoClusters);
    }
    let k = pk.samples_per_cluster;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..members.len()).collect();
    let mut batches = Vec::new();
    for _ in 0..pk.repeats {
        order.shuffle(&mut rng);
        for group in order.chunks(pk.clusters_per_batch) {
            let mut batch = Vec::with_capacity(group.len() * k);
            for &c in group {
                let m = &members[c];
                if m.len() >= k {
                    batch.extend(rand::seq::index::sample(&mut rng, m.len(), k).iter().map(|q| m[q]));
                } else {
                    batch.extend((0..k).map(|_| m[rng.random_range(0..m.len())]));
                }
            }
            batches.push(batch);
        }
    }
    Ok(batches)
}
