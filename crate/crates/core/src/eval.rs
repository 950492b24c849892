//! Inference-time ranking: ensemble distances, cross-camera filtering, mAP and CMC.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::types::{DistanceTable, LabelTable};

/// Ranks reported by default.
pub const DEFAULT_RANKS: [usize; 3] = [1, 5, 10];

/// Element-wise mean of equal-shape tables.
pub fn ensemble_distances(tables: &[DistanceTable]) -> Result<DistanceTable> {
    let first = tables.first().ok_or_else(|| invalid("tables", "need at least one table"))?;
    for t in &tables[1..] {
        if t.rows() != first.rows() || t.cols() != first.cols() {
            return Err(Error::ShapeMismatch { rows: first.rows(), dim: first.cols(), len: t.as_slice().len() });
        }
    }
    if tables.len() == 1 {
        return Ok(first.clone());
    }
    let m = tables.len() as f64;
    let data = (0..first.as_slice().len())
        .map(|e| (tables.iter().map(|t| f64::from(t.as_slice()[e])).sum::<f64>() / m) as f32)
        .collect();
    DistanceTable::new(first.rows(), first.cols(), data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingResult {
    /// Gallery indices per query after cross-camera filtering, best first.
    pub rankings: Vec<Vec<usize>>,
    /// Average precision per query; `None` when no positive survived filtering.
    pub average_precision: Vec<Option<f64>>,
    /// `cmc[r - 1]`: fraction of valid queries with a positive in the top `r`.
    pub cmc: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub map: f64,
    /// `(rank, CMC(rank))` for each requested rank.
    pub rank_hits: Vec<(usize, f64)>,
    pub valid_queries: usize,
    pub excluded_queries: usize,
}

/// Cross-camera retrieval evaluation.
///
/// Gallery entries sharing both identity and camera with the query are
/// dropped; the rest are sorted by distance (ties by gallery index). Labels
/// are compared through their original values, so query and gallery tables
/// may have been densified independently.
pub fn evaluate(
    dist: &DistanceTable,
    queries: &LabelTable,
    gallery: &LabelTable,
    ranks: &[usize],
) -> Result<(RankingResult, EvalSummary)> {
    if dist.rows() != queries.len() {
        return Err(Error::LengthMismatch { left: dist.rows(), right: queries.len() });
    }
    if dist.cols() != gallery.len() {
        return Err(Error::LengthMismatch { left: dist.cols(), right: gallery.len() });
    }
    if ranks.contains(&0) {
        return Err(invalid("ranks", "ranks start at 1"));
    }
    let ng = gallery.len();
    let mut rankings = Vec::with_capacity(dist.rows());
    let mut aps = Vec::with_capacity(dist.rows());
    let mut hits = vec![0usize; ng];
    for q in 0..dist.rows() {
        let (qid, qcam) = (queries.original_identity(q), queries.original_camera(q));
        let row = dist.row(q);
        let mut order: Vec<usize> = (0..ng)
            .filter(|&g| !(gallery.original_identity(g) == qid && gallery.original_camera(g) == qcam))
            .collect();
        order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
        let mut found = 0usize;
        let mut precision_sum = 0.0;
        let mut first_hit = None;
        for (r, &g) in order.iter().enumerate() {
            if gallery.original_identity(g) == qid {
                found += 1;
                precision_sum += found as f64 / (r + 1) as f64;
                first_hit.get_or_insert(r);
            }
        }
        if let Some(r) = first_hit {
            hits[r] += 1;
            aps.push(Some(precision_sum / found as f64));
        } else {
            aps.push(None);
        }
        rankings.push(order);
    }
    let valid = aps.iter().flatten().count();
    let mut cmc = Vec::with_capacity(ng);
    let mut acc = 0usize;
    for h in hits {
        acc += h;
        cmc.push(if valid > 0 { acc as f64 / valid as f64 } else { 0.0 });
    }
    let map = if valid > 0 { aps.iter().flatten().sum::<f64>() / valid as f64 } else { 0.0 };
    let at = |r: usize| cmc.get(r - 1).or(cmc.last()).copied().unwrap_or(0.0);
    let rank_hits = ranks.iter().map(|&r| (r, at(r))).collect();
    let summary = EvalSummary { map, rank_hits, valid_queries: valid, excluded_queries: aps.len() - valid };
    Ok((RankingResult { rankings, average_precision: aps, cmc }, summary))
}
