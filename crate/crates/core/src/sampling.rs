//! Local neighborhood sampling: the epoch's training subset is the top-p%
//! neighborhood of one random anchor.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::knn::{by_distance_then_index, Metric, Prepared};
use crate::types::FeatureMatrix;

/// Default resampling cadence, in epochs.
pub const DEFAULT_CADENCE: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub anchor: usize,
    /// Anchor first, then ascending distance to the anchor (ties by index).
    pub members: Vec<usize>,
    pub p: f64,
}

/// `max(1, round_half_up(p·n/100))`.
pub fn subset_size(p: f64, n: usize) -> usize {
    let raw = libm::floor(p * n as f64 / 100.0 + 0.5) as usize;
    raw.clamp(1, n)
}

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p <= 100.0 {
        Ok(())
    } else {
        Err(invalid("p", alloc::format!("{p} outside (0, 100]")))
    }
}

/// Samples with a uniformly drawn anchor.
pub fn lns_sample(features: &FeatureMatrix, p: f64, seed: u64, metric: Metric) -> Result<SampleSet> {
    check_p(p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let anchor = rng.random_range(0..features.rows());
    lns_sample_from_anchor(features, p, anchor, metric)
}

/// Samples the top-p% neighborhood of a given anchor.
pub fn lns_sample_from_anchor(features: &FeatureMatrix, p: f64, anchor: usize, metric: Metric) -> Result<SampleSet> {
    check_p(p)?;
    let n = features.rows();
    if anchor >= n {
        return Err(Error::IndexOutOfRange { index: anchor, n });
    }
    let size = subset_size(p, n);
    let prep = Prepared::new(features, metric)?;
    let mut cands: Vec<(f32, usize)> =
        (0..n).filter(|&j| j != anchor).map(|j| (prep.pair(anchor, j), j)).collect();
    let keep = size - 1;
    if keep > 0 && keep < cands.len() {
        cands.select_nth_unstable_by(keep - 1, by_distance_then_index);
    }
    cands.truncate(keep);
    cands.sort_unstable_by(by_distance_then_index);
    let mut members = Vec::with_capacity(size);
    members.push(anchor);
    members.extend(cands.iter().map(|&(_, j)| j));
    Ok(SampleSet { anchor, members, p })
}

/// Epochs `0, cadence, 2·cadence, ...` below `total_epochs`.
pub fn resample_epochs(total_epochs: usize, cadence: usize) -> Vec<usize> {
    (0..total_epochs).step_by(cadence.max(1)).collect()
}
