//! Exact nearest-neighbor search.
//!
//! Distances are accumulated in `f64` and rounded to `f32` once, so every
//! consumer (kNN, sampling, pairwise tables, full re-ranking) sees the same
//! value for a given pair. Ties are broken by the smaller index.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::par;
use crate::types::{DistanceTable, FeatureMatrix, NeighborList};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    /// `1 - u·v / (|u| |v|)`, in `[0, 2]`.
    Cosine,
    /// `|u - v|_2`.
    Euclidean,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Cosine => "cosine",
            Metric::Euclidean => "euclidean",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Metric::Cosine),
            "euclidean" => Ok(Metric::Euclidean),
            other => Err(invalid("metric", alloc::format!("unknown metric `{other}`"))),
        }
    }
}

impl Metric {
    /// Distance between two vectors of equal length.
    pub fn distance(self, a: &[f32], b: &[f32]) -> Result<f32> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch { left: a.len(), right: b.len() });
        }
        match self {
            Metric::Euclidean => Ok(euclidean(a, b)),
            Metric::Cosine => {
                let (na, nb) = (norm(a), norm(b));
                if na == 0.0 {
                    return Err(Error::ZeroNorm { row: 0 });
                }
                if nb == 0.0 {
                    return Err(Error::ZeroNorm { row: 1 });
                }
                Ok(cosine(a, b, 1.0 / na, 1.0 / nb))
            }
        }
    }
}

#[inline]
fn euclidean(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            let d = f64::from(x[l]) - f64::from(y[l]);
            acc[l] += d * d;
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        let d = f64::from(*x) - f64::from(*y);
        s += d * d;
    }
    libm::sqrt(s) as f32
}

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += f64::from(x[l]) * f64::from(y[l]);
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += f64::from(*x) * f64::from(*y);
    }
    s
}

#[inline]
fn norm(a: &[f32]) -> f64 {
    libm::sqrt(dot(a, a))
}

#[inline]
fn cosine(a: &[f32], b: &[f32], inv_na: f64, inv_nb: f64) -> f32 {
    let d = 1.0 - dot(a, b) * inv_na * inv_nb;
    d.clamp(0.0, 2.0) as f32
}

/// Query rows handled together by the block kernel.
pub(crate) const BLOCK: usize = 4;

#[inline(always)]
fn block_sums<const Q: usize, const EUCLID: bool>(qs: [&[f64]; Q], c: &[f64]) -> [f64; Q] {
    // same lane layout and reduction order as `dot` / `euclidean`
    let full = c.len() / 4 * 4;
    let mut acc = [[0.0f64; 4]; Q];
    for (t, y) in c[..full].chunks_exact(4).enumerate() {
        for q in 0..Q {
            let x = &qs[q][t * 4..t * 4 + 4];
            for l in 0..4 {
                acc[q][l] += if EUCLID {
                    let d = x[l] - y[l];
                    d * d
                } else {
                    x[l] * y[l]
                };
            }
        }
    }
    let mut out = [0.0; Q];
    for q in 0..Q {
        let mut s = (acc[q][0] + acc[q][1]) + (acc[q][2] + acc[q][3]);
        for (x, y) in qs[q][full..].iter().zip(&c[full..]) {
            s += if EUCLID { (x - y) * (x - y) } else { x * y };
        }
        out[q] = s;
    }
    out
}

/// A matrix paired with whatever per-row state its metric needs.
pub(crate) struct Prepared<'a> {
    m: &'a FeatureMatrix,
    metric: Metric,
    inv_norms: Vec<f64>,
    /// The matrix widened to f64, for the block kernel.
    wide: Vec<f64>,
}

impl<'a> Prepared<'a> {
    pub(crate) fn new(m: &'a FeatureMatrix, metric: Metric) -> Result<Self> {
        let inv_norms = match metric {
            Metric::Euclidean => Vec::new(),
            Metric::Cosine => (0..m.rows())
                .map(|i| {
                    let n = norm(m.row(i));
                    if n == 0.0 {
                        Err(Error::ZeroNorm { row: i })
                    } else {
                        Ok(1.0 / n)
                    }
                })
                .collect::<Result<_>>()?,
        };
        Ok(Self { m, metric, inv_norms, wide: Vec::new() })
    }

    /// Enables [`block_into`](Self::block_into).
    pub(crate) fn widened(mut self) -> Self {
        self.wide = self.m.as_slice().iter().map(|&v| f64::from(v)).collect();
        self
    }

    #[inline]
    pub(crate) fn between(&self, i: usize, other: &Prepared<'_>, j: usize) -> f32 {
        match self.metric {
            Metric::Euclidean => euclidean(self.m.row(i), other.m.row(j)),
            Metric::Cosine => {
                cosine(self.m.row(i), other.m.row(j), self.inv_norms[i], other.inv_norms[j])
            }
        }
    }

    #[inline]
    pub(crate) fn pair(&self, i: usize, j: usize) -> f32 {
        if i == j {
            return 0.0;
        }
        self.between(i, self, j)
    }

    #[inline(always)]
    fn wide_row(&self, i: usize) -> &[f64] {
        let d = self.m.dim();
        &self.wide[i * d..(i + 1) * d]
    }

    fn block_full<const EUCLID: bool>(&self, first: usize, out: &mut [f32]) {
        let n = self.m.rows();
        let qs: [&[f64]; BLOCK] = core::array::from_fn(|q| self.wide_row(first + q));
        for j in 0..n {
            let sums = block_sums::<BLOCK, EUCLID>(qs, self.wide_row(j));
            for (q, s) in sums.into_iter().enumerate() {
                out[q * n + j] = if EUCLID {
                    libm::sqrt(s) as f32
                } else {
                    (1.0 - s * self.inv_norms[first + q] * self.inv_norms[j]).clamp(0.0, 2.0) as f32
                };
            }
        }
        for q in 0..BLOCK {
            out[q * n + first + q] = 0.0;
        }
    }

    /// Distances from rows `first..first + out.len() / n` to every row,
    /// bit-identical to [`pair`](Self::pair). Needs [`widened`](Self::widened).
    pub(crate) fn block_into(&self, first: usize, out: &mut [f32]) {
        let n = self.m.rows();
        let rows = out.len() / n;
        debug_assert!(rows <= BLOCK && self.wide.len() == n * self.m.dim());
        if rows == BLOCK {
            match self.metric {
                Metric::Euclidean => self.block_full::<true>(first, out),
                Metric::Cosine => self.block_full::<false>(first, out),
            }
        } else {
            for (q, row) in out.chunks_mut(n).enumerate() {
                for (j, o) in row.iter_mut().enumerate() {
                    *o = self.pair(first + q, j);
                }
            }
        }
    }
}

/// Total order on `(distance, index)` candidates.
#[inline]
pub(crate) fn by_distance_then_index(a: &(f32, usize), b: &(f32, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Keeps the `k` smallest candidates, sorted.
pub(crate) fn smallest_k(cands: &mut Vec<(f32, usize)>, k: usize) {
    if k < cands.len() {
        cands.select_nth_unstable_by(k - 1, by_distance_then_index);
        cands.truncate(k);
    }
    cands.sort_unstable_by(by_distance_then_index);
}

/// Exact top-`k` neighbors of every row, excluding the row itself.
pub fn topk_neighbors(features: &FeatureMatrix, k: usize, metric: Metric) -> Result<NeighborList> {
    let n = features.rows();
    if k == 0 || k >= n {
        return Err(Error::KOutOfRange { k, n });
    }
    let prep = Prepared::new(features, metric)?.widened();
    let mut rows = vec![(0usize, 0.0f32); n * k];
    par::for_each_row_with(
        &mut rows,
        BLOCK * k,
        || (vec![0.0f32; BLOCK * n], Vec::with_capacity(n)),
        |(dist, cands): &mut (Vec<f32>, Vec<(f32, usize)>), b, out| {
            let first = b * BLOCK;
            let count = out.len() / k;
            let dist = &mut dist[..count * n];
            prep.block_into(first, dist);
            for (q, (drow, orow)) in dist.chunks(n).zip(out.chunks_mut(k)).enumerate() {
                let i = first + q;
                cands.clear();
                cands.extend(drow.iter().copied().zip(0..n).filter(|&(_, j)| j != i));
                smallest_k(cands, k);
                for (o, &(d, j)) in orow.iter_mut().zip(cands.iter()) {
                    *o = (j, d);
                }
            }
        },
    );
    let (indices, distances) = rows.into_iter().unzip();
    Ok(NeighborList::from_parts_unchecked(k, indices, distances))
}

/// Dense `|a| x |b|` table of distances.
pub fn pairwise_distances(a: &FeatureMatrix, b: &FeatureMatrix, metric: Metric) -> Result<DistanceTable> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { left: a.dim(), right: b.dim() });
    }
    let pa = Prepared::new(a, metric)?;
    let pb = Prepared::new(b, metric)?;
    let cols = b.rows();
    let mut data = vec![0.0f32; a.rows() * cols];
    par::for_each_row(&mut data, cols, |i, out| {
        for (j, o) in out.iter_mut().enumerate() {
            *o = pa.between(i, &pb, j);
        }
    });
    DistanceTable::new(a.rows(), cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn block_kernel_matches_pairwise() {
        let rows: Vec<Vec<f32>> = (0..11)
            .map(|i| (0..7).map(|t| ((i * 7 + t) as f32 * 0.37).sin() + 0.1).collect())
            .collect();
        let f = FeatureMatrix::from_rows(&rows).unwrap();
        for metric in [Metric::Cosine, Metric::Euclidean] {
            let p = Prepared::new(&f, metric).unwrap().widened();
            let mut out = [0.0f32; BLOCK * 11];
            for first in (0..11).step_by(BLOCK) {
                let count = BLOCK.min(11 - first);
                p.block_into(first, &mut out[..count * 11]);
                for q in 0..count {
                    for j in 0..11 {
                        assert_eq!(out[q * 11 + j].to_bits(), p.pair(first + q, j).to_bits());
                    }
                }
            }
        }
    }

    #[test]
    fn unit_basis_ties_break_by_index() {
        let f = FeatureMatrix::from_rows(&[[1.0f32, 0., 0.], [0., 1., 0.], [0., 0., 1.]]).unwrap();
        let nn = topk_neighbors(&f, 2, Metric::Euclidean).unwrap();
        assert_eq!(nn.neighbors(0), &[1, 2]);
        assert_eq!(nn.neighbors(1), &[0, 2]);
        assert_eq!(nn.neighbors(2), &[0, 1]);
        for d in nn.distances_flat() {
            assert!((f64::from(*d) - core::f64::consts::SQRT_2).abs() < 1e-6);
        }
    }

    #[test]
    fn points_on_a_line() {
        let f = FeatureMatrix::from_rows(&[[0.0f32], [1.0], [3.0]]).unwrap();
        let nn = topk_neighbors(&f, 1, Metric::Euclidean).unwrap();
        assert_eq!(nn.indices_flat(), &[1, 0, 1]);
    }

    #[test]
    fn k_range_and_zero_norm() {
        let f = FeatureMatrix::from_rows(&[[0.0f32, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(topk_neighbors(&f, 0, Metric::Euclidean), Err(Error::KOutOfRange { k: 0, n: 3 }));
        assert_eq!(topk_neighbors(&f, 3, Metric::Euclidean), Err(Error::KOutOfRange { k: 3, n: 3 }));
        assert_eq!(topk_neighbors(&f, 1, Metric::Cosine), Err(Error::ZeroNorm { row: 0 }));
    }

    #[test]
    fn cosine_basics() {
        let u = [0.6f32, 0.8];
        assert!(Metric::Cosine.distance(&u, &u).unwrap().abs() < 1e-6);
        assert!((Metric::Cosine.distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-7);
        assert_eq!(Metric::Cosine.distance(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), 2.0);
    }

    #[test]
    fn pairwise_dimension_mismatch() {
        let a = FeatureMatrix::new(1, 2, vec![1.0, 0.0]).unwrap();
        let b = FeatureMatrix::new(1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(
            pairwise_distances(&a, &b, Metric::Euclidean),
            Err(Error::DimensionMismatch { left: 2, right: 3 })
        );
    }

    #[test]
    fn metric_parse() {
        assert_eq!("cosine".parse::<Metric>().unwrap(), Metric::Cosine);
        assert!("manhattan".parse::<Metric>().is_err());
    }
}
