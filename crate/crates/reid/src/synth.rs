//! Gaussian-blob feature collections with known identities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use reid_core::{FeatureMatrix, LabelTable};

use crate::error::{Error, Result};

/// Attempts per center before placement is declared infeasible.
pub const MAX_PLACEMENT_TRIES: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub classes: usize,
    pub cameras: usize,
    /// Within-class standard deviation per coordinate.
    pub sigma: f64,
    /// Minimum distance between class centers, in units of `sigma`.
    pub separation: f64,
    pub seed: u64,
    pub normalize: bool,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { n: 500, d: 16, classes: 10, cameras: 4, sigma: 1.0, separation: 8.0, seed: 0, normalize: false }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n == 0 || self.d == 0 {
            return fail(format!("n and d must be positive (n={}, d={})", self.n, self.d));
        }
        if self.classes == 0 || self.classes > self.n {
            return fail(format!("classes must be in 1..={} (got {})", self.n, self.classes));
        }
        if self.cameras == 0 {
            return fail("cameras must be at least 1".into());
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return fail(format!("sigma must be positive (got {})", self.sigma));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return fail(format!("separation must be non-negative (got {})", self.separation));
        }
        Ok(())
    }

    /// Side of the cube centers are drawn from.
    ///
    /// Uniform points in a cube of side `L` in `d` dimensions lie about
    /// `L·sqrt(d/6)` apart, so this puts the typical center distance at
    /// 1.5 separations and keeps the minimum close to the requested one.
    pub fn cube_side(&self) -> f64 {
        1.5 * self.separation * self.sigma * (6.0 / self.d as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub features: FeatureMatrix,
    pub labels: LabelTable,
    /// Class of each row, `i % classes`.
    pub truth: Vec<i64>,
    /// Class centers, `classes x d`, before any normalization.
    pub centers: Vec<Vec<f64>>,
}

fn place_centers(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let half = spec.cube_side() / 2.0;
    let min_sq = (spec.separation * spec.sigma).powi(2);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(spec.classes);
    while centers.len() < spec.classes {
        let mut placed = false;
        for _ in 0..MAX_PLACEMENT_TRIES {
            let c: Vec<f64> = (0..spec.d).map(|_| rng.random_range(-half..=half)).collect();
            let far = centers.iter().all(|o| o.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() >= min_sq);
            if far {
                centers.push(c);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Placement { placed: centers.len(), classes: spec.classes });
        }
    }
    Ok(centers)
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Synthetic> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers = place_centers(spec, &mut rng)?;
    let mut data = Vec::with_capacity(spec.n * spec.d);
    let mut truth = Vec::with_capacity(spec.n);
    let mut cameras = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let class = i % spec.classes;
        for &c in &centers[class] {
            let z: f64 = StandardNormal.sample(&mut rng);
            data.push((c + spec.sigma * z) as f32);
        }
        truth.push(class as i64);
        cameras.push(((i / spec.classes) % spec.cameras) as i64);
    }
    let mut features = FeatureMatrix::new(spec.n, spec.d, data)?;
    if spec.normalize {
        features = features.l2_normalized()?;
    }
    let labels = LabelTable::from_raw(&truth, &cameras)?;
    Ok(Synthetic { features, labels, truth, centers })
}

/// `base + noise·N(0, 1)` per entry, L2-normalized per row.
pub fn noisy_view(base: &FeatureMatrix, noise: f64, seed: u64) -> Result<FeatureMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = base
        .as_slice()
        .iter()
        .map(|&v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (f64::from(v) + noise * z) as f32
        })
        .collect();
    Ok(FeatureMatrix::new(base.rows(), base.dim(), data)?.l2_normalized()?)
}
