//! DBSCAN over sparse refined distances, plus partition statistics.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::types::{ClusterAssignment, SparseRefinedDistances};

pub const DEFAULT_MIN_SAMPLES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbscanParams {
    pub epsilon: f64,
    /// Neighborhood population (self included) that makes a core point.
    pub min_samples: usize,
}

impl DbscanParams {
    pub fn new(epsilon: f64, min_samples: usize) -> Result<Self> {
        let p = Self { epsilon, min_samples };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(invalid("epsilon", alloc::format!("{} outside (0, 1)", self.epsilon)));
        }
        if self.min_samples == 0 {
            return Err(invalid("min_samples", "must be at least 1"));
        }
        Ok(())
    }
}

/// Symmetric ε-neighborhoods: `j` neighbors `i` iff either stored direction is `<= ε`.
///
/// Absent entries count as distance 1, which never passes since `ε < 1`.
pub fn epsilon_neighborhoods(r: &SparseRefinedDistances, epsilon: f64) -> Vec<Vec<usize>> {
    let n = r.n();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for (&j, &v) in r.row_indices(i).iter().zip(r.row_values(i)) {
            if j != i && f64::from(v) <= epsilon {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }
    adj
}

/// DBSCAN with a fixed ascending scan order.
///
/// A cluster is fully expanded before the next unlabeled core point starts a
/// new one, so a border point reachable from several clusters joins the one
/// seeded by the lowest-index core point.
pub fn dbscan_sparse(r: &SparseRefinedDistances, params: DbscanParams) -> Result<ClusterAssignment> {
    params.validate()?;
    let adj = epsilon_neighborhoods(r, params.epsilon);
    Ok(dbscan_on_graph(&adj, params.min_samples))
}

pub(crate) fn dbscan_on_graph(adj: &[Vec<usize>], min_samples: usize) -> ClusterAssignment {
    let n = adj.len();
    let core: Vec<bool> = adj.iter().map(|a| a.len() + 1 >= min_samples).collect();
    let mut labels = vec![ClusterAssignment::NOISE; n];
    let mut next = 0i32;
    let mut queue = VecDeque::new();
    for seed in 0..n {
        if labels[seed] != ClusterAssignment::NOISE || !core[seed] {
            continue;
        }
        labels[seed] = next;
        queue.push_back(seed);
        while let Some(p) = queue.pop_front() {
            for &q in &adj[p] {
                if labels[q] == ClusterAssignment::NOISE {
                    labels[q] = next;
                    if core[q] {
                        queue.push_back(q);
                    }
                }
            }
        }
        next += 1;
    }
    ClusterAssignment::from_labels(labels).expect("labels are dense by construction")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterStats {
    pub num_clusters: usize,
    pub noise_count: usize,
    /// Size of each cluster, by cluster id.
    pub size_histogram: Vec<usize>,
}

pub fn cluster_stats(a: &ClusterAssignment) -> ClusterStats {
    let mut sizes = vec![0usize; a.num_clusters()];
    let mut noise = 0;
    for &l in a.labels() {
        if l < 0 {
            noise += 1;
        } else {
            sizes[l as usize] += 1;
        }
    }
    ClusterStats { num_clusters: a.num_clusters(), noise_count: noise, size_histogram: sizes }
}

fn comb2(x: u64) -> f64 {
    (x as f64) * (x.saturating_sub(1) as f64) / 2.0
}

/// Adjusted Rand index against reference labels; noise points are singletons.
pub fn adjusted_rand_index(a: &ClusterAssignment, truth: &[i64]) -> Result<f64> {
    if a.len() != truth.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: truth.len() });
    }
    let n = a.len();
    // noise -> fresh singleton ids past the real clusters
    let mut next = a.num_clusters();
    let pred: Vec<usize> = a
        .labels()
        .iter()
        .map(|&l| {
            if l < 0 {
                next += 1;
                next - 1
            } else {
                l as usize
            }
        })
        .collect();
    let truth = ClusterAssignment::densify(truth);
    let mut contingency = alloc::collections::BTreeMap::<(usize, usize), u64>::new();
    let mut rows = vec![0u64; next];
    let mut cols = vec![0u64; truth.num_clusters() + n];
    let mut tnext = truth.num_clusters();
    for (i, &p) in pred.iter().enumerate() {
        let t = match truth.labels()[i] {
            l if l >= 0 => l as usize,
            _ => {
                tnext += 1;
                tnext - 1
            }
        };
        *contingency.entry((p, t)).or_insert(0) += 1;
        rows[p] += 1;
        cols[t] += 1;
    }
    let index: f64 = contingency.values().map(|&c| comb2(c)).sum();
    let sum_rows: f64 = rows.iter().map(|&c| comb2(c)).sum();
    let sum_cols: f64 = cols.iter().map(|&c| comb2(c)).sum();
    let total = comb2(n as u64);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_rows * sum_cols / total;
    let max_index = (sum_rows + sum_cols) / 2.0;
    if max_index == expected {
        // both partitions trivial in the same way
        return Ok(1.0);
    }
    Ok((index - expected) / (max_index - expected))
}
