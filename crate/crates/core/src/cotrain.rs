//! Pseudo-label exchange between views: each view is supervised by another
//! view's clustering, never its own.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::types::ClusterAssignment;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelBundle {
    assignments: Vec<ClusterAssignment>,
}

impl LabelBundle {
    pub fn new(assignments: Vec<ClusterAssignment>) -> Result<Self> {
        if assignments.len() < 2 {
            return Err(invalid("assignments", alloc::format!("need at least 2, got {}", assignments.len())));
        }
        let n = assignments[0].len();
        if let Some(a) = assignments.iter().find(|a| a.len() != n) {
            return Err(Error::LengthMismatch { left: n, right: a.len() });
        }
        Ok(Self { assignments })
    }

    pub fn assignments(&self) -> &[ClusterAssignment] {
        &self.assignments
    }

    pub fn into_inner(self) -> Vec<ClusterAssignment> {
        self.assignments
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }
}

/// Uniform random derangement of `0..m` by rejection sampling shuffles.
pub fn derangement(m: usize, seed: u64) -> Result<Vec<usize>> {
    if m < 2 {
        return Err(invalid("m", alloc::format!("need at least 2 views, got {m}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sigma: Vec<usize> = (0..m).collect();
    loop {
        sigma.shuffle(&mut rng);
        if sigma.iter().enumerate().all(|(i, &s)| i != s) {
            return Ok(sigma);
        }
    }
}

/// Output position `m` holds input assignment `σ(m)`, with `σ(m) != m`.
pub fn permute_labels(bundle: &LabelBundle, seed: u64) -> Result<LabelBundle> {
    let sigma = derangement(bundle.len(), seed)?;
    let assignments = sigma.iter().map(|&s| bundle.assignments[s].clone()).collect();
    Ok(LabelBundle { assignments })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn two_views_swap() {
        let y1 = ClusterAssignment::from_labels(vec![-1, 0, 1]).unwrap();
        let y2 = ClusterAssignment::from_labels(vec![0, 0, 1]).unwrap();
        let b = LabelBundle::new(vec![y1.clone(), y2.clone()]).unwrap();
        for seed in 0..20 {
            let p = permute_labels(&b, seed).unwrap();
            assert_eq!(p.assignments(), &[y2.clone(), y1.clone()]);
        }
    }

    #[test]
    fn rejects_small_or_ragged() {
        let y = ClusterAssignment::from_labels(vec![0]).unwrap();
        assert!(LabelBundle::new(vec![y.clone()]).is_err());
        let z = ClusterAssignment::from_labels(vec![0, 0]).unwrap();
        assert!(LabelBundle::new(vec![y, z]).is_err());
        assert!(derangement(1, 0).is_err());
    }
}
