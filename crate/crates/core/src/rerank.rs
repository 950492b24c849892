//! Neighborhood-based distance refinement.
//!
//! [`local_rerank`] only ever looks at two `k`-neighborhoods at a time and
//! stores `n·k` refined values. [`full_rerank`] is the classic k-reciprocal
//! encoding baseline with set expansion, local query expansion and Jaccard
//! distance over a dense `n x n` table.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::knn::{self, by_distance_then_index, Metric, Prepared, BLOCK};
use crate::par;
use crate::types::{DistanceTable, FeatureMatrix, NeighborList, SparseRefinedDistances};

/// `exp(-d)` for every stored neighbor distance, same layout as the [`NeighborList`].
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDistances {
    k: usize,
    values: Vec<f64>,
}

impl LocalDistances {
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

pub fn local_distances(nn: &NeighborList) -> LocalDistances {
    let values = nn.distances_flat().iter().map(|&d| libm::exp(-f64::from(d))).collect();
    LocalDistances { k: nn.k(), values }
}

/// Shared and one-sided neighbors of a pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InclusionExclusion {
    /// `N(i) ∩ N(j)`, in `N(i)` order.
    pub inclusion: Vec<usize>,
    /// `N(i) \ N(j)`, in `N(i)` order.
    pub exclusion_ij: Vec<usize>,
    /// `N(j) \ N(i)`, in `N(j)` order.
    pub exclusion_ji: Vec<usize>,
}

fn check_neighbor(i: usize, j: usize, nn: &NeighborList) -> Result<()> {
    let n = nn.n();
    for p in [i, j] {
        if p >= n {
            return Err(Error::IndexOutOfRange { index: p, n });
        }
    }
    if !nn.neighbors(i).contains(&j) {
        return Err(Error::NotANeighbor { i, j });
    }
    Ok(())
}

pub fn inclusion_exclusion(i: usize, j: usize, nn: &NeighborList) -> Result<InclusionExclusion> {
    check_neighbor(i, j, nn)?;
    let (ni, nj) = (nn.neighbors(i), nn.neighbors(j));
    let (inclusion, exclusion_ij) = ni.iter().partition(|p| nj.contains(p));
    let exclusion_ji = nj.iter().copied().filter(|p| !ni.contains(p)).collect();
    Ok(InclusionExclusion { inclusion, exclusion_ij, exclusion_ji })
}

/// A neighborhood re-keyed by point index: `(point, position in the original row)`.
fn sorted_row(row: &[usize]) -> Vec<(usize, usize)> {
    let mut s: Vec<_> = row.iter().enumerate().map(|(q, &p)| (p, q)).collect();
    s.sort_unstable();
    s
}

/// Intersection-over-union affinity of two neighborhoods.
///
/// Walks both rows in ascending point order, so the result is bit-identical
/// when the two sides are swapped.
fn iou_sorted(sa: &[(usize, usize)], la: &[f64], sb: &[(usize, usize)], lb: &[f64]) -> f64 {
    let (mut s_min, mut s_max, mut s_a, mut s_b) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let (mut x, mut y) = (0, 0);
    while x < sa.len() && y < sb.len() {
        let (pa, qa) = sa[x];
        let (pb, qb) = sb[y];
        if pa == pb {
            let (u, v) = (la[qa], lb[qb]);
            s_min += u.min(v);
            s_max += u.max(v);
            x += 1;
            y += 1;
        } else if pa < pb {
            s_a += la[qa];
            x += 1;
        } else {
            s_b += lb[qb];
            y += 1;
        }
    }
    s_a += sa[x..].iter().map(|&(_, q)| la[q]).sum::<f64>();
    s_b += sb[y..].iter().map(|&(_, q)| lb[q]).sum::<f64>();
    let denom = s_max + (s_a + s_b);
    if denom > 0.0 {
        (s_min / denom).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Affinity of two explicit neighborhoods with their local distances.
///
/// This is the row-level kernel behind [`d_iou`]; it places no relation
/// between the rows and the points that own them. Returns 0 when every sum
/// vanishes.
pub fn neighborhood_iou(row_i: &[usize], local_i: &[f64], row_j: &[usize], local_j: &[f64]) -> Result<f64> {
    if row_i.len() != local_i.len() {
        return Err(Error::LengthMismatch { left: row_i.len(), right: local_i.len() });
    }
    if row_j.len() != local_j.len() {
        return Err(Error::LengthMismatch { left: row_j.len(), right: local_j.len() });
    }
    Ok(iou_sorted(&sorted_row(row_i), local_i, &sorted_row(row_j), local_j))
}

/// `D_IoU(i, j)` for `j` in the neighborhood of `i`.
pub fn d_iou(i: usize, j: usize, local: &LocalDistances, nn: &NeighborList) -> Result<f64> {
    check_neighbor(i, j, nn)?;
    if local.k() != nn.k() || local.as_slice().len() != nn.indices_flat().len() {
        return Err(Error::LengthMismatch { left: local.as_slice().len(), right: nn.indices_flat().len() });
    }
    neighborhood_iou(nn.neighbors(i), local.row(i), nn.neighbors(j), local.row(j))
}

/// Refined distances from an existing neighbor list.
///
/// `R(i, j) = 1 - D_IoU(i, j)` when `i` and `j` are mutual neighbors, `1` otherwise.
pub fn refine_neighbors(nn: &NeighborList) -> SparseRefinedDistances {
    let (n, k) = (nn.n(), nn.k());
    let local = local_distances(nn);
    let mut sorted = Vec::with_capacity(n * k);
    for i in 0..n {
        sorted.extend(sorted_row(nn.neighbors(i)));
    }
    let srow = |i: usize| &sorted[i * k..(i + 1) * k];

    let mut values = vec![1.0f32; n * k];
    par::for_each_row(&mut values, k, |i, out| {
        for (o, &j) in out.iter_mut().zip(nn.neighbors(i)) {
            let reciprocal = srow(j).binary_search_by_key(&i, |&(p, _)| p).is_ok();
            if reciprocal {
                let iou = iou_sorted(srow(i), local.row(i), srow(j), local.row(j));
                *o = (1.0 - iou).clamp(0.0, 1.0) as f32;
            }
        }
    });
    SparseRefinedDistances::from_parts_unchecked(k, nn.indices_flat().to_vec(), values)
}

/// Local re-ranking: exact kNN followed by [`refine_neighbors`].
pub fn local_rerank(features: &FeatureMatrix, k: usize, metric: Metric) -> Result<SparseRefinedDistances> {
    let nn = knn::topk_neighbors(features, k, metric)?;
    Ok(refine_neighbors(&nn))
}

/// Parameters of the k-reciprocal baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrrParams {
    pub k1: usize,
    pub k2: usize,
    pub lambda_jaccard: f64,
}

impl Default for FrrParams {
    fn default() -> Self {
        Self { k1: 20, k2: 6, lambda_jaccard: 0.3 }
    }
}

impl FrrParams {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k1 == 0 || self.k1 >= n {
            return Err(Error::KOutOfRange { k: self.k1, n });
        }
        if self.k2 == 0 || self.k2 > self.k1 {
            return Err(invalid("k2", alloc::format!("{} must be in 1..={}", self.k2, self.k1)));
        }
        if !(0.0..=1.0).contains(&self.lambda_jaccard) {
            return Err(invalid("lambda_jaccard", alloc::format!("{} outside [0, 1]", self.lambda_jaccard)));
        }
        Ok(())
    }
}

/// `round(x / 2)` with ties to even, as numpy's `around` does.
fn half_round_even(x: usize) -> usize {
    let h = x / 2;
    if x % 2 == 1 && h % 2 == 1 {
        h + 1
    } else {
        h
    }
}

/// Column indices fit in u32: the dense n x n output bounds n far below that.
type SparseRow = Vec<(u32, f32)>;

/// Full k-reciprocal re-ranking over all `n x n` pairs.
///
/// Original distances are squared and divided by their row maximum, then the
/// Jaccard distance between k-reciprocal encodings is mixed back in:
/// `final = (1 - λ)·jaccard + λ·original`. Every row is fully sorted to
/// produce the initial ranking, as in the published baseline. Encodings are
/// kept sparse; the only quadratic buffer is the returned table.
pub fn full_rerank(features: &FeatureMatrix, params: FrrParams, metric: Metric) -> Result<DistanceTable> {
    let n = features.rows();
    params.validate(n)?;
    let prep = Prepared::new(features, metric)?.widened();

    let mut dist = vec![0.0f32; n * n];
    par::for_each_row(&mut dist, BLOCK * n, |b, block| {
        prep.block_into(b * BLOCK, block);
        for row in block.chunks_mut(n) {
            let mut max = 0.0f32;
            for v in row.iter_mut() {
                *v *= *v;
                max = max.max(*v);
            }
            if max > 0.0 {
                for v in row.iter_mut() {
                    *v /= max;
                }
            }
        }
    });
    drop(prep);

    let width = params.k1 + 1;
    let mut rank = vec![0usize; n * width];
    {
        let dist = &dist;
        par::for_each_row_with(
            &mut rank,
            width,
            || Vec::with_capacity(n),
            |cands: &mut Vec<(f32, usize)>, i, out| {
                cands.clear();
                cands.extend(dist[i * n..(i + 1) * n].iter().copied().zip(0..n));
                cands.sort_unstable_by(by_distance_then_index);
                for (o, &(_, j)) in out.iter_mut().zip(cands.iter()) {
                    *o = j;
                }
            },
        );
    }
    let top = |i: usize, m: usize| &rank[i * width..i * width + m];

    let half = half_round_even(params.k1) + 1;
    let encodings: Vec<SparseRow> = par::map_range(n, |i| {
        let forward = top(i, width);
        let reciprocal: Vec<usize> =
            forward.iter().copied().filter(|&c| top(c, width).contains(&i)).collect();
        let mut expansion = reciprocal.clone();
        for &cand in &reciprocal {
            let cand_recip: Vec<usize> =
                top(cand, half).iter().copied().filter(|&c| top(c, half).contains(&cand)).collect();
            let shared = cand_recip.iter().filter(|c| reciprocal.contains(c)).count();
            if 3 * shared > 2 * cand_recip.len() {
                expansion.extend_from_slice(&cand_recip);
            }
        }
        expansion.sort_unstable();
        expansion.dedup();
        let row = &dist[i * n..(i + 1) * n];
        let weights: Vec<f64> = expansion.iter().map(|&c| libm::exp(-f64::from(row[c]))).collect();
        let total: f64 = weights.iter().sum();
        expansion.iter().zip(&weights).map(|(&c, &w)| (c as u32, (w / total) as f32)).collect()
    });

    let encodings = if params.k2 > 1 {
        let k2 = params.k2;
        let mut out = Vec::with_capacity(n);
        let mut acc = vec![0.0f64; n];
        let mut touched = Vec::new();
        for i in 0..n {
            for &r in top(i, k2) {
                for &(c, v) in &encodings[r] {
                    let c = c as usize;
                    if acc[c] == 0.0 {
                        touched.push(c);
                    }
                    acc[c] += f64::from(v);
                }
            }
            touched.sort_unstable();
            let row: SparseRow = touched.iter().map(|&c| (c as u32, (acc[c] / k2 as f64) as f32)).collect();
            for &c in &touched {
                acc[c] = 0.0;
            }
            touched.clear();
            out.push(row);
        }
        out
    } else {
        encodings
    };
    drop(rank);

    // exact-size postings: count first so no list over-allocates
    let mut counts = vec![0usize; n];
    for &(c, _) in encodings.iter().flatten() {
        counts[c as usize] += 1;
    }
    let mut inverted: Vec<SparseRow> = counts.iter().map(|&m| Vec::with_capacity(m)).collect();
    drop(counts);
    for (r, row) in encodings.iter().enumerate() {
        for &(c, v) in row {
            inverted[c as usize].push((r as u32, v));
        }
    }

    let lambda = params.lambda_jaccard;
    par::for_each_row_with(
        &mut dist,
        n,
        || vec![0.0f64; n],
        |acc: &mut Vec<f64>, i, row| {
            for &(c, v) in &encodings[i] {
                for &(r, w) in &inverted[c as usize] {
                    acc[r as usize] += f64::from(v.min(w));
                }
            }
            for (o, a) in row.iter_mut().zip(acc.iter_mut()) {
                let jaccard = 1.0 - *a / (2.0 - *a);
                *o = (jaccard * (1.0 - lambda) + f64::from(*o) * lambda) as f32;
                *a = 0.0;
            }
        },
    );
    DistanceTable::new(n, n, dist)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_decay_endpoints() {
        let nn = NeighborList::new(1, vec![1, 0], vec![0.0, core::f32::consts::LN_2]).unwrap();
        let dl = local_distances(&nn);
        assert_eq!(dl.row(0), &[1.0]);
        assert!((dl.row(1)[0] - 0.5).abs() < 1e-7);
    }

    #[test]
    fn inclusion_exclusion_shapes() {
        // rows: 0 -> {1,2,3}, 1 -> {0,2,3}, 2 -> {4,5,6}
        let idx = vec![1, 2, 3, 0, 2, 3, 4, 5, 6, 0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2];
        let nn = NeighborList::new(3, idx, vec![1.0; 21]).unwrap();
        let s = inclusion_exclusion(0, 1, &nn).unwrap();
        assert_eq!(s.inclusion, vec![2, 3]);
        assert_eq!(s.exclusion_ij, vec![1]);
        assert_eq!(s.exclusion_ji, vec![0]);
        let s = inclusion_exclusion(0, 2, &nn).unwrap();
        assert!(s.inclusion.is_empty());
        assert_eq!(s.exclusion_ij, vec![1, 2, 3]);
        assert_eq!(s.exclusion_ji, vec![4, 5, 6]);
        assert_eq!(inclusion_exclusion(2, 0, &nn), Err(Error::NotANeighbor { i: 2, j: 0 }));
    }

    #[test]
    fn identical_and_disjoint_rows() {
        let row = [3, 4, 5];
        let l = [0.9, 0.5, 0.25];
        assert_eq!(neighborhood_iou(&row, &l, &row, &l).unwrap(), 1.0);
        assert_eq!(neighborhood_iou(&row, &l, &[6, 7, 8], &l).unwrap(), 0.0);
        assert_eq!(neighborhood_iou(&row, &[0.0; 3], &[6, 7, 8], &[0.0; 3]).unwrap(), 0.0);
    }

    #[test]
    fn rounding_matches_numpy() {
        assert_eq!(half_round_even(20), 10);
        assert_eq!(half_round_even(5), 2);
        assert_eq!(half_round_even(7), 4);
        assert_eq!(half_round_even(1), 0);
    }

    #[test]
    fn frr_param_validation() {
        let f = FeatureMatrix::from_rows(&[[0.0f32], [1.0], [2.0]]).unwrap();
        let bad = FrrParams { k1: 3, k2: 1, lambda_jaccard: 0.3 };
        assert!(full_rerank(&f, bad, Metric::Euclidean).is_err());
        let bad = FrrParams { k1: 2, k2: 3, lambda_jaccard: 0.3 };
        assert!(full_rerank(&f, bad, Metric::Euclidean).is_err());
        let bad = FrrParams { k1: 2, k2: 1, lambda_jaccard: 1.5 };
        assert!(full_rerank(&f, bad, Metric::Euclidean).is_err());
    }
}
