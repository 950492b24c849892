//! Wall-clock and heap comparison of local against full re-ranking.

use std::time::Instant;

use reid_core::rerank::{full_rerank, local_rerank, FrrParams};
use reid_core::Metric;
use serde::{Deserialize, Serialize};

use crate::alloc_meter;
use crate::error::{Error, Result};
use crate::synth::{gen_synthetic, SyntheticSpec};

/// Largest n for which the full table is actually built.
pub const DEFAULT_FRR_CAP: usize = 30_000;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchParams {
    pub sizes: Vec<usize>,
    pub k: usize,
    pub d: usize,
    pub seed: u64,
    pub runs: usize,
    pub frr_cap: usize,
    pub metric: Metric,
    pub frr: FrrParams,
}

impl BenchParams {
    pub fn new(sizes: Vec<usize>, k: usize, d: usize, seed: u64) -> Self {
        Self {
            sizes,
            k,
            d,
            seed,
            runs: 3,
            frr_cap: DEFAULT_FRR_CAP,
            metric: Metric::Cosine,
            frr: FrrParams { k1: k, ..FrrParams::default() },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("sizes must be non-empty and strictly ascending".into()));
        }
        if self.runs < 3 {
            return Err(Error::Config(format!("runs must be at least 3 (got {})", self.runs)));
        }
        if self.k == 0 || self.d == 0 {
            return Err(Error::Config("k and d must be positive".into()));
        }
        Ok(())
    }
}

/// One row of the timing report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub k: usize,
    pub d: usize,
    pub threads: usize,
    pub runs: usize,
    pub lrr_wall_ms: f64,
    /// Measured median, or the quadratic extrapolation when `frr_skipped`.
    pub frr_wall_ms: Option<f64>,
    /// `n·k·(8 + 4)`: one index and one value per stored entry.
    pub lrr_bytes: u64,
    /// `n·n·4`.
    pub frr_bytes: u64,
    pub lrr_peak_bytes: Option<u64>,
    pub frr_peak_bytes: Option<u64>,
    pub speedup: Option<f64>,
    pub frr_skipped: bool,
}

pub fn lrr_bytes(n: usize, k: usize) -> u64 {
    (n * k * (std::mem::size_of::<u64>() + std::mem::size_of::<f32>())) as u64
}

pub fn frr_bytes(n: usize) -> u64 {
    (n as u64) * (n as u64) * 4
}

pub fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        (xs[m - 1] + xs[m]) / 2.0
    }
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Least-squares `c` for `t = c·n²` through the measured points.
pub fn quadratic_fit(points: &[(usize, f64)]) -> Option<f64> {
    let den: f64 = points.iter().map(|&(n, _)| (n as f64).powi(4)).sum();
    (den > 0.0).then(|| points.iter().map(|&(n, t)| t * (n as f64).powi(2)).sum::<f64>() / den)
}

/// Times both re-rankers on one synthetic matrix per size. Runs are serialized.
pub fn time_rerank(params: &BenchParams) -> Result<Vec<BenchRow>> {
    params.validate()?;
    let threads = rayon::current_num_threads();
    let mut rows = Vec::with_capacity(params.sizes.len());
    for &n in &params.sizes {
        let spec = SyntheticSpec {
            n,
            d: params.d,
            classes: (n / 50).max(1),
            separation: 4.0,
            seed: params.seed,
            normalize: true,
            ..SyntheticSpec::default()
        };
        let features = gen_synthetic(&spec)?.features;
        let run_frr = n <= params.frr_cap;
        let (mut lrr_ms, mut frr_ms) = (Vec::new(), Vec::new());
        let (mut lrr_peak, mut frr_peak) = (None, None);
        let mut stored = 0;
        for run in 0..params.runs {
            let start = Instant::now();
            let (r, peak) = alloc_meter::measure(|| local_rerank(&features, params.k, params.metric));
            lrr_ms.push(elapsed_ms(start));
            let r = r?;
            stored = r.storage_bytes();
            drop(r);
            if run == 0 {
                lrr_peak = peak.map(|p| p as u64);
            }
            if run_frr {
                let start = Instant::now();
                let (t, peak) = alloc_meter::measure(|| full_rerank(&features, params.frr, params.metric));
                frr_ms.push(elapsed_ms(start));
                drop(t?);
                if run == 0 {
                    frr_peak = peak.map(|p| p as u64);
                }
            }
        }
        debug_assert_eq!(stored as u64, lrr_bytes(n, params.k));
        let lrr_wall_ms = median(&mut lrr_ms);
        let frr_wall_ms = run_frr.then(|| median(&mut frr_ms));
        rows.push(BenchRow {
            n,
            k: params.k,
            d: params.d,
            threads,
            runs: params.runs,
            lrr_wall_ms,
            frr_wall_ms,
            lrr_bytes: lrr_bytes(n, params.k),
            frr_bytes: frr_bytes(n),
            lrr_peak_bytes: lrr_peak,
            frr_peak_bytes: frr_peak,
            speedup: frr_wall_ms.map(|f| f / lrr_wall_ms),
            frr_skipped: !run_frr,
        });
    }
    let measured: Vec<(usize, f64)> = rows.iter().filter_map(|r| Some((r.n, r.frr_wall_ms?))).collect();
    if let Some(c) = quadratic_fit(&measured) {
        for r in rows.iter_mut().filter(|r| r.frr_skipped) {
            let t = c * (r.n as f64).powi(2);
            r.frr_wall_ms = Some(t);
            r.speedup = Some(t / r.lrr_wall_ms);
        }
    }
    Ok(rows)
}

/// Least-squares slope of `ln y` against `ln x`, with the fit's R².
pub fn log_log_slope(points: &[(f64, f64)]) -> (f64, f64) {
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, r2)
}
