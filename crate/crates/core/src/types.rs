//! Shared domain types.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;
use core::mem::size_of;

use crate::error::{Error, Result};

/// Dense `rows x dim` matrix of finite `f32` features, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || dim == 0 {
            return Err(Error::EmptyMatrix { rows, dim });
        }
        if rows.checked_mul(dim) != Some(data.len()) {
            return Err(Error::ShapeMismatch { rows, dim, len: data.len() });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: pos / dim, col: pos % dim });
        }
        Ok(Self { rows, dim, data })
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch { left: dim, right: r.len() });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), dim, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// New matrix holding the given rows, in order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.rows {
                return Err(Error::IndexOutOfRange { index: i, n: self.rows });
            }
            data.extend_from_slice(self.row(i));
        }
        Self::new(indices.len(), self.dim, data)
    }

    /// Copy with every row scaled to unit L2 norm. Zero rows are rejected.
    pub fn l2_normalized(&self) -> Result<Self> {
        let mut data = self.data.clone();
        for (i, row) in data.chunks_mut(self.dim).enumerate() {
            let norm = libm::sqrt(row.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>());
            if norm == 0.0 {
                return Err(Error::ZeroNorm { row: i });
            }
            for v in row {
                *v = (f64::from(*v) / norm) as f32;
            }
        }
        Ok(Self { rows: self.rows, dim: self.dim, data })
    }
}

/// Per-row identity and camera codes.
///
/// Codes are densified in first-occurrence order; the original values are kept
/// so that tables loaded from different files can still be compared.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTable {
    identity: Vec<u32>,
    camera: Vec<u32>,
    identity_values: Vec<u64>,
    camera_values: Vec<u64>,
}

fn densify(raw: &[i64], what: &str) -> Result<(Vec<u32>, Vec<u64>)> {
    let mut seen: BTreeMap<u64, u32> = BTreeMap::new();
    let mut values = Vec::new();
    let mut codes = Vec::with_capacity(raw.len());
    for (i, &v) in raw.iter().enumerate() {
        if v < 0 {
            return Err(Error::InvalidLabels(format!("negative {what} {v} at row {i}")));
        }
        let v = v as u64;
        let next = values.len() as u32;
        let code = *seen.entry(v).or_insert_with(|| {
            values.push(v);
            next
        });
        codes.push(code);
    }
    Ok((codes, values))
}

impl LabelTable {
    pub fn from_raw(identities: &[i64], cameras: &[i64]) -> Result<Self> {
        if identities.len() != cameras.len() {
            return Err(Error::LengthMismatch { left: identities.len(), right: cameras.len() });
        }
        if identities.is_empty() {
            return Err(Error::InvalidLabels("label table is empty".into()));
        }
        let (identity, identity_values) = densify(identities, "identity")?;
        let (camera, camera_values) = densify(cameras, "camera")?;
        Ok(Self { identity, camera, identity_values, camera_values })
    }

    pub fn len(&self) -> usize {
        self.identity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.identity.is_empty()
    }

    /// Dense identity codes.
    pub fn identities(&self) -> &[u32] {
        &self.identity
    }

    /// Dense camera codes.
    pub fn cameras(&self) -> &[u32] {
        &self.camera
    }

    pub fn original_identity(&self, i: usize) -> u64 {
        self.identity_values[self.identity[i] as usize]
    }

    pub fn original_camera(&self, i: usize) -> u64 {
        self.camera_values[self.camera[i] as usize]
    }

    /// Dense code -> original value.
    pub fn identity_values(&self) -> &[u64] {
        &self.identity_values
    }

    pub fn camera_values(&self) -> &[u64] {
        &self.camera_values
    }
}

/// Top-k neighbors of every point, ascending by distance, self excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList {
    k: usize,
    indices: Vec<usize>,
    distances: Vec<f32>,
}

impl NeighborList {
    pub fn new(k: usize, indices: Vec<usize>, distances: Vec<f32>) -> Result<Self> {
        if k == 0 || !indices.len().is_multiple_of(k) {
            return Err(crate::error::invalid("k", format!("{k} does not divide {}", indices.len())));
        }
        if indices.len() != distances.len() {
            return Err(Error::LengthMismatch { left: indices.len(), right: distances.len() });
        }
        let n = indices.len() / k;
        if k >= n {
            return Err(Error::KOutOfRange { k, n });
        }
        for i in 0..n {
            let idx = &indices[i * k..(i + 1) * k];
            let dst = &distances[i * k..(i + 1) * k];
            for (q, &j) in idx.iter().enumerate() {
                if j >= n {
                    return Err(Error::IndexOutOfRange { index: j, n });
                }
                if j == i {
                    return Err(crate::error::invalid("indices", format!("row {i} contains itself")));
                }
                if idx[..q].contains(&j) {
                    return Err(crate::error::invalid("indices", format!("row {i} repeats {j}")));
                }
            }
            if dst.iter().any(|d| !d.is_finite() || *d < 0.0) || dst.windows(2).any(|w| w[0] > w[1]) {
                return Err(crate::error::invalid(
                    "distances",
                    format!("row {i} is not finite, non-negative and ascending"),
                ));
            }
        }
        Ok(Self { k, indices, distances })
    }

    pub(crate) fn from_parts_unchecked(k: usize, indices: Vec<usize>, distances: Vec<f32>) -> Self {
        Self { k, indices, distances }
    }

    pub fn n(&self) -> usize {
        self.indices.len() / self.k
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    #[inline]
    pub fn distances(&self, i: usize) -> &[f32] {
        &self.distances[i * self.k..(i + 1) * self.k]
    }

    pub fn indices_flat(&self) -> &[usize] {
        &self.indices
    }

    pub fn distances_flat(&self) -> &[f32] {
        &self.distances
    }
}

/// The `n x k` refined distance matrix. Unstored pairs read as `1.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRefinedDistances {
    k: usize,
    indices: Vec<usize>,
    values: Vec<f32>,
}

impl SparseRefinedDistances {
    pub fn new(k: usize, indices: Vec<usize>, values: Vec<f32>) -> Result<Self> {
        if k == 0 || !indices.len().is_multiple_of(k) {
            return Err(crate::error::invalid("k", format!("{k} does not divide {}", indices.len())));
        }
        if indices.len() != values.len() {
            return Err(Error::LengthMismatch { left: indices.len(), right: values.len() });
        }
        let n = indices.len() / k;
        if let Some(&bad) = indices.iter().find(|&&j| j >= n) {
            return Err(Error::IndexOutOfRange { index: bad, n });
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(crate::error::invalid("values", format!("{v} outside [0, 1]")));
        }
        Ok(Self { k, indices, values })
    }

    pub(crate) fn from_parts_unchecked(k: usize, indices: Vec<usize>, values: Vec<f32>) -> Self {
        Self { k, indices, values }
    }

    pub fn n(&self) -> usize {
        self.indices.len() / self.k
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn row_indices(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    #[inline]
    pub fn row_values(&self, i: usize) -> &[f32] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    /// Stored `R(i, j)`, or `1.0` when `j` is not in row `i`.
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.row_indices(i)
            .iter()
            .position(|&p| p == j)
            .map_or(1.0, |q| self.row_values(i)[q])
    }

    pub fn indices_flat(&self) -> &[usize] {
        &self.indices
    }

    pub fn values_flat(&self) -> &[f32] {
        &self.values
    }

    /// Bytes held by the index and value buffers: exactly `n·k·(8 + 4)` on 64-bit targets.
    pub fn storage_bytes(&self) -> usize {
        self.indices.len() * size_of::<usize>() + self.values.len() * size_of::<f32>()
    }
}

/// Per-point cluster labels; `-1` marks noise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    labels: Vec<i32>,
    num_clusters: usize,
}

impl ClusterAssignment {
    pub const NOISE: i32 = -1;

    /// Validates that non-noise labels are exactly `0..C`.
    pub fn from_labels(labels: Vec<i32>) -> Result<Self> {
        let mut present = Vec::new();
        for (i, &l) in labels.iter().enumerate() {
            if l < -1 {
                return Err(Error::InvalidLabels(format!("label {l} at {i} is below -1")));
            }
            if l >= 0 {
                let l = l as usize;
                if l >= present.len() {
                    present.resize(l + 1, false);
                }
                present[l] = true;
            }
        }
        if let Some(gap) = present.iter().position(|p| !p) {
            return Err(Error::InvalidLabels(format!("cluster id {gap} is unused; ids must be dense")));
        }
        Ok(Self { num_clusters: present.len(), labels })
    }

    /// Renumbers arbitrary labels densely in first-occurrence order; negatives become noise.
    pub fn densify(raw: &[i64]) -> Self {
        let mut map = BTreeMap::new();
        let labels = raw
            .iter()
            .map(|&l| {
                if l < 0 {
                    Self::NOISE
                } else {
                    let next = map.len() as i32;
                    *map.entry(l).or_insert(next)
                }
            })
            .collect();
        Self { labels, num_clusters: map.len() }
    }

    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Member indices of each cluster, by cluster id.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = alloc::vec![Vec::new(); self.num_clusters];
        for (i, &l) in self.labels.iter().enumerate() {
            if l >= 0 {
                out[l as usize].push(i);
            }
        }
        out
    }
}

/// Dense `rows x cols` table of `f32` distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTable {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl DistanceTable {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(Error::ShapeMismatch { rows, dim: cols, len: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn storage_bytes(&self) -> usize {
        self.data.len() * size_of::<f32>()
    }
}
