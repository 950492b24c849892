//! Training-loop simulation without weight updates.
//!
//! M noisy views of one latent collection stand in for M backbones. Each
//! epoch samples a neighborhood, clusters every view on its re-ranked
//! distances at the scheduled ε, swaps pseudo-labels across views and
//! evaluates the losses on PK batches.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reid_core::clustering::{adjusted_rand_index, cluster_stats, dbscan_sparse, DbscanParams};
use reid_core::cotrain::{permute_labels, LabelBundle};
use reid_core::losses::{
    barlow_twins_loss, ema_update, hard_loss, pk_sample_batches, proxy_loss, Batch, LossHyper, PkParams, ProxySet,
};
use reid_core::rerank::local_rerank;
use reid_core::sampling::{lns_sample, DEFAULT_CADENCE};
use reid_core::scheduler::{EpsSchedule, ScheduleKind};
use reid_core::{ClusterAssignment, FeatureMatrix, Metric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::{gen_synthetic, noisy_view, SyntheticSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub synth: SyntheticSpec,
    pub views: usize,
    /// Per-coordinate noise added to each view, in units of `synth.sigma`.
    pub view_noise: f64,
    pub epochs: usize,
    pub p: f64,
    pub cadence: usize,
    pub k: usize,
    pub metric: Metric,
    pub schedule: ScheduleKind,
    pub eps_lo: f64,
    pub eps_hi: f64,
    /// Plateau value; also the constant for the `fixed` schedule.
    pub eps_steady: f64,
    pub min_samples: usize,
    pub hyper: LossHyper,
    pub lambda_bt: f64,
    pub pk: PkParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            synth: SyntheticSpec::default(),
            views: 2,
            view_noise: 0.5,
            epochs: reid_core::scheduler::DEFAULT_TOTAL_EPOCHS,
            p: 100.0,
            cadence: DEFAULT_CADENCE,
            k: reid_core::DEFAULT_K,
            metric: Metric::Cosine,
            schedule: ScheduleKind::NoiseRobust,
            eps_lo: reid_core::scheduler::DEFAULT_EPS_LO,
            eps_hi: reid_core::scheduler::DEFAULT_EPS_HI,
            eps_steady: reid_core::scheduler::DEFAULT_EPS_STEADY,
            min_samples: reid_core::clustering::DEFAULT_MIN_SAMPLES,
            hyper: LossHyper::default(),
            lambda_bt: reid_core::losses::DEFAULT_LAMBDA_BT,
            pk: PkParams::default(),
        }
    }
}

/// Every key accepted by [`PipelineConfig::set`], in file order.
pub const CONFIG_KEYS: [&str; 26] = [
    "seed", "n", "d", "classes", "cameras", "sigma", "separation", "views", "view_noise", "epochs", "p",
    "cadence", "k", "metric", "schedule", "eps_lo", "eps_hi", "eps_steady", "min_samples", "tau", "lambda",
    "beta", "lambda_bt", "pk_p", "pk_k", "pk_repeats",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| Error::Config(format!("{key} = {value:?}: {e}")))
}

impl PipelineConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.synth.seed = parse(key, value)?,
            "n" => self.synth.n = parse(key, value)?,
            "d" => self.synth.d = parse(key, value)?,
            "classes" => self.synth.classes = parse(key, value)?,
            "cameras" => self.synth.cameras = parse(key, value)?,
            "sigma" => self.synth.sigma = parse(key, value)?,
            "separation" => self.synth.separation = parse(key, value)?,
            "views" => self.views = parse(key, value)?,
            "view_noise" => self.view_noise = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "p" => self.p = parse(key, value)?,
            "cadence" => self.cadence = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "metric" => self.metric = parse(key, value)?,
            "schedule" => self.schedule = parse(key, value)?,
            "eps_lo" => self.eps_lo = parse(key, value)?,
            "eps_hi" => self.eps_hi = parse(key, value)?,
            "eps_steady" => self.eps_steady = parse(key, value)?,
            "min_samples" => self.min_samples = parse(key, value)?,
            "tau" => self.hyper.tau = parse(key, value)?,
            "lambda" => self.hyper.lambda = parse(key, value)?,
            "beta" => self.hyper.beta = parse(key, value)?,
            "lambda_bt" => self.lambda_bt = parse(key, value)?,
            "pk_p" => self.pk.clusters_per_batch = parse(key, value)?,
            "pk_k" => self.pk.samples_per_cluster = parse(key, value)?,
            "pk_repeats" => self.pk.repeats = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_str(&text)?;
        Ok(cfg)
    }

    /// The full configuration as `key = value` lines, readable by [`apply_str`](Self::apply_str).
    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        let s_ = &self.synth;
        let h = &self.hyper;
        let values: [String; 26] = [
            s_.seed.to_string(),
            s_.n.to_string(),
            s_.d.to_string(),
            s_.classes.to_string(),
            s_.cameras.to_string(),
            s_.sigma.to_string(),
            s_.separation.to_string(),
            self.views.to_string(),
            self.view_noise.to_string(),
            self.epochs.to_string(),
            self.p.to_string(),
            self.cadence.to_string(),
            self.k.to_string(),
            self.metric.to_string(),
            self.schedule.to_string(),
            self.eps_lo.to_string(),
            self.eps_hi.to_string(),
            self.eps_steady.to_string(),
            self.min_samples.to_string(),
            h.tau.to_string(),
            h.lambda.to_string(),
            h.beta.to_string(),
            self.lambda_bt.to_string(),
            self.pk.clusters_per_batch.to_string(),
            self.pk.samples_per_cluster.to_string(),
            self.pk.repeats.to_string(),
        ];
        for (k, v) in CONFIG_KEYS.iter().zip(values) {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn schedule(&self) -> Result<EpsSchedule> {
        Ok(match self.schedule {
            ScheduleKind::Fixed => EpsSchedule::fixed(self.eps_steady, self.epochs)?,
            kind => EpsSchedule::new(kind, self.eps_lo, self.eps_hi, self.eps_steady, self.epochs)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        let fail = |m: String| Err(Error::Config(m));
        if self.views < 2 {
            return fail(format!("views must be at least 2 (got {})", self.views));
        }
        if !(self.view_noise >= 0.0 && self.view_noise.is_finite()) {
            return fail(format!("view_noise must be non-negative (got {})", self.view_noise));
        }
        if !(self.p > 0.0 && self.p <= 100.0) {
            return fail(format!("p must be in (0, 100] (got {})", self.p));
        }
        if self.cadence == 0 || self.k == 0 {
            return fail("cadence and k must be positive".into());
        }
        if !(self.lambda_bt >= 0.0 && self.lambda_bt.is_finite()) {
            return fail(format!("lambda_bt must be non-negative (got {})", self.lambda_bt));
        }
        if self.pk.clusters_per_batch == 0 || self.pk.samples_per_cluster == 0 || self.pk.repeats == 0 {
            return fail("pk_p, pk_k and pk_repeats must be positive".into());
        }
        self.schedule()?;
        DbscanParams::new(self.eps_lo.min(self.eps_steady), self.min_samples)?;
        self.hyper.validate()?;
        Ok(())
    }
}

/// One epoch of the simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRow {
    pub epoch: usize,
    pub epsilon: f64,
    pub sample_size: usize,
    /// Clusters found in view 0.
    pub num_clusters: usize,
    /// Noise points in view 0.
    pub noise_count: usize,
    /// Mean over views of the ARI against the true classes of the sample.
    pub ari_vs_truth: f64,
    /// Means over every PK batch of every view; empty when no batch qualified.
    pub proxy_loss: Option<f64>,
    pub hard_loss: Option<f64>,
    pub final_loss: Option<f64>,
    /// Barlow Twins loss between views 0 and 1 on the sample.
    pub bt_loss: Option<f64>,
    /// `final_loss` smoothed with the EMA rule at inertia β.
    pub final_loss_ema: Option<f64>,
}

fn cluster_view(sub: &FeatureMatrix, cfg: &PipelineConfig, eps: f64) -> Result<ClusterAssignment> {
    let n = sub.rows();
    if n < 2 {
        return Ok(ClusterAssignment::from_labels(vec![ClusterAssignment::NOISE; n])?);
    }
    let r = local_rerank(sub, cfg.k.min(n - 1), cfg.metric)?;
    Ok(dbscan_sparse(&r, DbscanParams::new(eps, cfg.min_samples)?)?)
}

#[derive(Default)]
struct Means {
    sum: f64,
    count: usize,
}

impl Means {
    fn add(&mut self, v: f64) {
        self.sum += v;
        self.count += 1;
    }

    fn get(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Vec<PipelineRow>> {
    cfg.validate()?;
    let schedule = cfg.schedule()?;
    let data = gen_synthetic(&SyntheticSpec { normalize: false, ..cfg.synth.clone() })?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.synth.seed.wrapping_add(1));
    let views: Vec<FeatureMatrix> = (0..cfg.views)
        .map(|_| noisy_view(&data.features, cfg.view_noise * cfg.synth.sigma, rng.random()))
        .collect::<Result<_>>()?;

    let mut sample: Vec<usize> = (0..cfg.synth.n).collect();
    let mut ema: Option<f64> = None;
    let mut rows = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let epsilon = schedule.epsilon_at(epoch)?;
        if epoch % cfg.cadence == 0 {
            let anchor_view = rng.random_range(0..cfg.views);
            sample = lns_sample(&views[anchor_view], cfg.p, rng.random(), cfg.metric)?.members;
        }
        let subs: Vec<FeatureMatrix> = views.iter().map(|v| v.select_rows(&sample)).collect::<Result<_, _>>()?;
        let truth: Vec<i64> = sample.iter().map(|&i| data.truth[i]).collect();

        let assignments: Vec<ClusterAssignment> =
            subs.iter().map(|s| cluster_view(s, cfg, epsilon)).collect::<Result<_>>()?;
        let mut ari = 0.0;
        for a in &assignments {
            ari += adjusted_rand_index(a, &truth)?;
        }
        let stats = cluster_stats(&assignments[0]);

        let permuted = permute_labels(&LabelBundle::new(assignments)?, rng.random())?;
        let (mut proxy, mut hard, mut fin) = (Means::default(), Means::default(), Means::default());
        for (sub, a) in subs.iter().zip(permuted.assignments()) {
            if a.num_clusters() == 0 {
                continue;
            }
            let proxies = ProxySet::from_random_members(sub, a, rng.random())?;
            for indices in pk_sample_batches(a, cfg.pk, rng.random())? {
                let batch = Batch::gather(sub, a, &indices)?;
                let pl = proxy_loss(&batch, &proxies, &cfg.hyper)?.value;
                proxy.add(pl);
                let hl = match hard_loss(&batch, &cfg.hyper) {
                    Ok(h) => Some(h.value),
                    Err(reid_core::Error::NoEligibleSample) => None,
                    Err(e) => return Err(e.into()),
                };
                if let Some(h) = hl {
                    hard.add(h);
                }
                match hl {
                    _ if cfg.hyper.lambda == 0.0 => fin.add(pl),
                    Some(h) => fin.add(pl + cfg.hyper.lambda * h),
                    None => {}
                }
            }
        }
        let bt_loss = barlow_twins_loss(&subs[0], &subs[1], cfg.lambda_bt).ok();
        let final_loss = fin.get();
        if let Some(f) = final_loss {
            ema = Some(match ema {
                None => f,
                Some(prev) => ema_update(&[prev], &[f], cfg.hyper.beta)?[0],
            });
        }
        rows.push(PipelineRow {
            epoch,
            epsilon,
            sample_size: sample.len(),
            num_clusters: stats.num_clusters,
            noise_count: stats.noise_count,
            ari_vs_truth: ari / cfg.views as f64,
            proxy_loss: proxy.get(),
            hard_loss: hard.get(),
            final_loss,
            bt_loss,
            final_loss_ema: ema,
        });
    }
    Ok(rows)
}
