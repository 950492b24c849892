//! The `reid` command line.
//!
//! Exit codes: 0 on success, 2 on a usage error, 1 on a runtime error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use reid_core::clustering::{adjusted_rand_index, cluster_stats, dbscan_sparse, DbscanParams, DEFAULT_MIN_SAMPLES};
use reid_core::eval::{ensemble_distances, evaluate};
use reid_core::knn::{pairwise_distances, topk_neighbors};
use reid_core::losses::{DEFAULT_BETA, DEFAULT_LAMBDA, DEFAULT_LAMBDA_BT, DEFAULT_TAU};
use reid_core::rerank::{full_rerank, local_rerank, FrrParams};
use reid_core::sampling::{lns_sample, DEFAULT_CADENCE};
use reid_core::scheduler::{
    EpsSchedule, ScheduleKind, DEFAULT_EPS_HI, DEFAULT_EPS_LO, DEFAULT_EPS_STEADY, DEFAULT_TOTAL_EPOCHS,
};
use reid_core::{Metric, DEFAULT_K};

use crate::bench::{time_rerank, BenchParams, DEFAULT_FRR_CAP};
use crate::error::{Error, Result};
use crate::formats;
use crate::pipeline::{run_pipeline, PipelineConfig, CONFIG_KEYS};

fn positive(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn float(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e: std::num::ParseFloatError| e.to_string())?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err("must be finite".into())
    }
}

fn open_unit(s: &str) -> std::result::Result<f64, String> {
    let v = float(s)?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err("must lie strictly between 0 and 1".into())
    }
}

fn closed_unit(s: &str) -> std::result::Result<f64, String> {
    let v = float(s)?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err("must lie in [0, 1]".into())
    }
}

fn positive_float(s: &str) -> std::result::Result<f64, String> {
    let v = float(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err("must be positive".into())
    }
}

fn non_negative(s: &str) -> std::result::Result<f64, String> {
    let v = float(s)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err("must be non-negative".into())
    }
}

fn percent(s: &str) -> std::result::Result<f64, String> {
    let v = float(s)?;
    if v > 0.0 && v <= 100.0 {
        Ok(v)
    } else {
        Err("must lie in (0, 100]".into())
    }
}

fn at_least_four(s: &str) -> std::result::Result<usize, String> {
    match positive(s)? {
        v if v >= 4 => Ok(v),
        _ => Err("must be at least 4".into()),
    }
}

fn at_least_three(s: &str) -> std::result::Result<usize, String> {
    match positive(s)? {
        v if v >= 3 => Ok(v),
        _ => Err("must be at least 3".into()),
    }
}

fn at_least_two(s: &str) -> std::result::Result<usize, String> {
    match positive(s)? {
        v if v >= 2 => Ok(v),
        _ => Err("must be at least 2".into()),
    }
}

fn metric_parser() -> impl TypedValueParser<Value = Metric> {
    PossibleValuesParser::new(["cosine", "euclidean"]).map(|s| s.parse::<Metric>().unwrap())
}

fn schedule_parser() -> impl TypedValueParser<Value = ScheduleKind> {
    PossibleValuesParser::new(ScheduleKind::ALL.map(ScheduleKind::name)).map(|s| s.parse::<ScheduleKind>().unwrap())
}

#[derive(Debug, Parser)]
#[command(name = "reid", version, about = "Re-ranking, clustering and evaluation tools for feature collections")]
pub struct Cli {
    /// Worker threads [default: available cores]
    #[arg(long, global = true, value_parser = positive)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact k nearest neighbors of every row (NNLK output)
    Knn(KnnArgs),
    /// Local (SRDM output) or full (FVEC n x n output) re-ranking
    Rerank(RerankArgs),
    /// Local neighborhood sample around a random anchor (one-column CSV)
    Sample(SampleArgs),
    /// Epsilon schedule table (epoch,epsilon CSV)
    Schedule(ScheduleArgs),
    /// DBSCAN over a refined distance file (index,label CSV)
    Cluster(ClusterArgs),
    /// Cross-camera retrieval metrics over one or more feature spaces (metric,value CSV)
    Eval(EvalArgs),
    /// Local vs full re-ranking timing and memory report
    Bench(BenchArgs),
    /// Simulated training loop on synthetic blobs
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct KnnArgs {
    /// Feature file (FVEC)
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_K, value_parser = positive)]
    pub k: usize,
    #[arg(long, default_value = "cosine", value_parser = metric_parser())]
    pub metric: Metric,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RerankMode {
    Local,
    Full,
}

#[derive(Debug, Args)]
pub struct RerankArgs {
    #[arg(long, value_enum, default_value_t = RerankMode::Local)]
    pub mode: RerankMode,
    /// Feature file (FVEC)
    #[arg(long)]
    pub input: PathBuf,
    /// Neighborhood size for local mode
    #[arg(long, default_value_t = DEFAULT_K, value_parser = positive)]
    pub k: usize,
    #[arg(long, default_value = "cosine", value_parser = metric_parser())]
    pub metric: Metric,
    /// Reciprocal neighborhood size for full mode
    #[arg(long, default_value_t = FrrParams::default().k1, value_parser = positive)]
    pub k1: usize,
    /// Query expansion size for full mode
    #[arg(long, default_value_t = FrrParams::default().k2, value_parser = positive)]
    pub k2: usize,
    /// Weight of the original distance in full mode
    #[arg(long, default_value_t = FrrParams::default().lambda_jaccard, value_parser = closed_unit)]
    pub lambda_jaccard: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Feature file (FVEC)
    #[arg(long)]
    pub input: PathBuf,
    /// Sample size as a percentage of the collection
    #[arg(long, default_value_t = 100.0, value_parser = percent)]
    pub p: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value = "cosine", value_parser = metric_parser())]
    pub metric: Metric,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    #[arg(long, default_value = "noise-robust", value_parser = schedule_parser())]
    pub kind: ScheduleKind,
    #[arg(long, default_value_t = DEFAULT_TOTAL_EPOCHS, value_parser = at_least_four)]
    pub epochs: usize,
    #[arg(long, default_value_t = DEFAULT_EPS_LO, value_parser = open_unit)]
    pub eps_lo: f64,
    #[arg(long, default_value_t = DEFAULT_EPS_HI, value_parser = open_unit)]
    pub eps_hi: f64,
    /// Plateau value; the constant for `fixed`
    #[arg(long, default_value_t = DEFAULT_EPS_STEADY, value_parser = open_unit)]
    pub eps_steady: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Refined distance file (SRDM)
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_parser = open_unit)]
    pub eps: f64,
    #[arg(long, default_value_t = DEFAULT_MIN_SAMPLES, value_parser = positive)]
    pub min_samples: usize,
    /// Labels CSV; when given, the ARI against its identities is reported
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Query features (FVEC); repeat once per feature space
    #[arg(long, required = true)]
    pub query: Vec<PathBuf>,
    /// Gallery features (FVEC); one per --query, in the same order
    #[arg(long, required = true)]
    pub gallery: Vec<PathBuf>,
    #[arg(long)]
    pub query_labels: PathBuf,
    #[arg(long)]
    pub gallery_labels: PathBuf,
    #[arg(long, default_value = "cosine", value_parser = metric_parser())]
    pub metric: Metric,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10", value_parser = positive)]
    pub ranks: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Collection sizes, ascending
    #[arg(long, value_delimiter = ',', required = true, value_parser = positive)]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_K, value_parser = positive)]
    pub k: usize,
    #[arg(long, default_value_t = 64, value_parser = positive)]
    pub dim: usize,
    #[arg(long)]
    pub seed: u64,
    /// Timed runs per method; the median is reported
    #[arg(long, default_value_t = 3, value_parser = at_least_three)]
    pub runs: usize,
    /// Sizes above this skip the full re-ranking and report an extrapolation
    #[arg(long, default_value_t = DEFAULT_FRR_CAP, value_parser = positive)]
    pub frr_cap: usize,
    #[arg(long, default_value = "cosine", value_parser = metric_parser())]
    pub metric: Metric,
    #[arg(long)]
    pub out: PathBuf,
}

/// Every flag except `--config` and `--out` mirrors a config-file key and,
/// when given, overrides it.
#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// key = value file applied before the flags below
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 500, value_parser = positive)]
    pub n: usize,
    #[arg(long, default_value_t = 16, value_parser = positive)]
    pub d: usize,
    #[arg(long, default_value_t = 10, value_parser = positive)]
    pub classes: usize,
    #[arg(long, default_value_t = 4, value_parser = positive)]
    pub cameras: usize,
    #[arg(long, default_value_t = 1.0, value_parser = positive_float)]
    pub sigma: f64,
    /// Minimum distance between class centers, in sigmas
    #[arg(long, default_value_t = 8.0, value_parser = non_negative)]
    pub separation: f64,
    /// Number of noisy views standing in for backbones
    #[arg(long, default_value_t = 2, value_parser = at_least_two)]
    pub views: usize,
    /// Per-view noise, in sigmas
    #[arg(long, default_value_t = 0.5, value_parser = non_negative)]
    pub view_noise: f64,
    #[arg(long, default_value_t = DEFAULT_TOTAL_EPOCHS, value_parser = at_least_four)]
    pub epochs: usize,
    /// Sample size as a percentage of the collection
    #[arg(long, default_value_t = 100.0, value_parser = percent)]
    pub p: f64,
    /// Epochs between resamples
    #[arg(long, default_value_t = DEFAULT_CADENCE, value_parser = positive)]
    pub cadence: usize,
    #[arg(long, default_value_t = DEFAULT_K, value_parser = positive)]
    pub k: usize,
    #[arg(long, default_value = "cosine", value_parser = metric_parser())]
    pub metric: Metric,
    #[arg(long, default_value = "noise-robust", value_parser = schedule_parser())]
    pub schedule: ScheduleKind,
    #[arg(long, default_value_t = DEFAULT_EPS_LO, value_parser = open_unit)]
    pub eps_lo: f64,
    #[arg(long, default_value_t = DEFAULT_EPS_HI, value_parser = open_unit)]
    pub eps_hi: f64,
    #[arg(long, default_value_t = DEFAULT_EPS_STEADY, value_parser = open_unit)]
    pub eps_steady: f64,
    #[arg(long, default_value_t = DEFAULT_MIN_SAMPLES, value_parser = positive)]
    pub min_samples: usize,
    /// Softmax temperature
    #[arg(long, default_value_t = DEFAULT_TAU, value_parser = positive_float)]
    pub tau: f64,
    /// Weight of the hard-sample loss
    #[arg(long, default_value_t = DEFAULT_LAMBDA, value_parser = non_negative)]
    pub lambda: f64,
    /// EMA inertia
    #[arg(long, default_value_t = DEFAULT_BETA, value_parser = closed_unit)]
    pub beta: f64,
    /// Off-diagonal weight of the Barlow Twins loss
    #[arg(long, default_value_t = DEFAULT_LAMBDA_BT, value_parser = non_negative)]
    pub lambda_bt: f64,
    /// Clusters per batch (P)
    #[arg(long, default_value_t = 16, value_parser = positive)]
    pub pk_p: usize,
    /// Samples per cluster (K)
    #[arg(long, default_value_t = 12, value_parser = positive)]
    pub pk_k: usize,
    /// Passes over the clusters per epoch
    #[arg(long, default_value_t = 5, value_parser = positive)]
    pub pk_repeats: usize,
    #[arg(long)]
    pub out: PathBuf,
}

impl PipelineArgs {
    /// Defaults, then the config file, then flags given on the command line.
    pub fn resolve(&self, matches: &ArgMatches) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        for key in CONFIG_KEYS {
            if matches.value_source(key) != Some(ValueSource::CommandLine) {
                continue;
            }
            if let Some(raw) = matches.get_raw(key).and_then(|mut v| v.next_back()) {
                cfg.set(key, &raw.to_string_lossy())?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(cli: &Cli, matches: &ArgMatches) -> Result<String> {
    match &cli.command {
        Command::Knn(a) => {
            let f = formats::load_features(&a.input)?;
            let nn = topk_neighbors(&f, a.k, a.metric)?;
            formats::save_neighbors(&nn, &a.out)?;
            Ok(format!("knn: n={} k={} -> {}", nn.n(), nn.k(), a.out.display()))
        }
        Command::Rerank(a) => {
            let f = formats::load_features(&a.input)?;
            match a.mode {
                RerankMode::Local => {
                    let r = local_rerank(&f, a.k, a.metric)?;
                    formats::save_refined(&r, &a.out)?;
                    Ok(format!("rerank local: n={} k={} bytes={} -> {}", r.n(), r.k(), r.storage_bytes(), a.out.display()))
                }
                RerankMode::Full => {
                    let params = FrrParams { k1: a.k1, k2: a.k2, lambda_jaccard: a.lambda_jaccard };
                    let t = full_rerank(&f, params, a.metric)?;
                    formats::save_table(&t, &a.out)?;
                    Ok(format!("rerank full: n={} bytes={} -> {}", t.rows(), t.storage_bytes(), a.out.display()))
                }
            }
        }
        Command::Sample(a) => {
            let f = formats::load_features(&a.input)?;
            let s = lns_sample(&f, a.p, a.seed, a.metric)?;
            formats::save_sample(&s.members, &a.out)?;
            Ok(format!("sample: anchor={} size={} -> {}", s.anchor, s.members.len(), a.out.display()))
        }
        Command::Schedule(a) => {
            let s = match a.kind {
                ScheduleKind::Fixed => EpsSchedule::fixed(a.eps_steady, a.epochs)?,
                kind => EpsSchedule::new(kind, a.eps_lo, a.eps_hi, a.eps_steady, a.epochs)?,
            };
            formats::save_schedule(&s.table(), &a.out)?;
            Ok(format!("schedule: kind={} epochs={} -> {}", a.kind, a.epochs, a.out.display()))
        }
        Command::Cluster(a) => {
            let r = formats::load_refined(&a.input)?;
            let assignment = dbscan_sparse(&r, DbscanParams::new(a.eps, a.min_samples)?)?;
            let stats = cluster_stats(&assignment);
            let ari = match &a.truth {
                Some(path) => {
                    let labels = formats::load_labels(path)?;
                    let truth: Vec<i64> = labels.identities().iter().map(|&v| i64::from(v)).collect();
                    Some(adjusted_rand_index(&assignment, &truth)?)
                }
                None => None,
            };
            formats::save_assignment(&assignment, &a.out)?;
            let ari = ari.map(|v| format!(" ari={v:.4}")).unwrap_or_default();
            Ok(format!(
                "cluster: clusters={} noise={}{ari} -> {}",
                stats.num_clusters,
                stats.noise_count,
                a.out.display()
            ))
        }
        Command::Eval(a) => {
            if a.query.len() != a.gallery.len() {
                return Err(Error::Config(format!(
                    "{} --query files but {} --gallery files",
                    a.query.len(),
                    a.gallery.len()
                )));
            }
            let tables = a
                .query
                .iter()
                .zip(&a.gallery)
                .map(|(q, g)| Ok(pairwise_distances(&formats::load_features(q)?, &formats::load_features(g)?, a.metric)?))
                .collect::<Result<Vec<_>>>()?;
            let dist = ensemble_distances(&tables)?;
            let (ql, gl) = (formats::load_labels(&a.query_labels)?, formats::load_labels(&a.gallery_labels)?);
            let (_, summary) = evaluate(&dist, &ql, &gl, &a.ranks)?;
            formats::save_eval_summary(&summary, &a.out)?;
            let ranks: Vec<String> = summary.rank_hits.iter().map(|(r, v)| format!("R{r}={v:.4}")).collect();
            Ok(format!(
                "eval: mAP={:.4} {} excluded={} -> {}",
                summary.map,
                ranks.join(" "),
                summary.excluded_queries,
                a.out.display()
            ))
        }
        Command::Bench(a) => {
            let params = BenchParams {
                runs: a.runs,
                frr_cap: a.frr_cap,
                metric: a.metric,
                ..BenchParams::new(a.sizes.clone(), a.k, a.dim, a.seed)
            };
            let rows = time_rerank(&params)?;
            formats::save_report(&rows, &a.out)?;
            let last = rows.last().expect("sizes is non-empty");
            Ok(format!(
                "bench: sizes={} speedup@{}={} -> {}",
                rows.len(),
                last.n,
                last.speedup.map_or("n/a".into(), |s| format!("{s:.2}")),
                a.out.display()
            ))
        }
        Command::Pipeline(a) => {
            let sub = matches.subcommand_matches("pipeline").expect("pipeline matches");
            let cfg = a.resolve(sub)?;
            let rows = run_pipeline(&cfg)?;
            formats::save_report(&rows, &a.out)?;
            let last = rows.last().expect("at least four epochs");
            Ok(format!(
                "pipeline: epochs={} final ari={:.4} clusters={} -> {}",
                rows.len(),
                last.ari_vs_truth,
                last.num_clusters,
                a.out.display()
            ))
        }
    }
}

/// Parses `argv` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let parsed = Cli::command().try_get_matches_from(argv).and_then(|m| Ok((Cli::from_arg_matches(&m)?, m)));
    let (cli, matches) = match parsed {
        Ok(v) => v,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    match pool.install(|| execute(&cli, &matches)) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
