//! Seeded multi-chain campaigns over beta and chain-length sweeps.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use intrepid_core::diagnostics::{
    lag_correlation, marginal_pairs, DiagnosticsError, ReferenceBinning, DEFAULT_BINS, RANGE_PADDING,
};
use intrepid_core::kernel::{run_chain_with, ChainRecord, KernelError};
use intrepid_core::oracle::{read_reference, reference_moments, reference_sample, write_reference, OracleError, ReferenceSet};
use intrepid_core::rng::{chain_seed, chain_stream, substream};
use intrepid_core::stats::Moments;
use intrepid_core::{KernelConfig, Point, TargetModel};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{CampaignConfig, ConfigError, Expectation, Metric, StartPolicy};
use crate::summary::quantile;

const START_LABEL: u64 = 0x57A7;
const MAX_START_DRAWS: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid campaign: {0}")]
    Invalid(String),
    #[error("reference: {0}")]
    Reference(#[from] OracleError),
    #[error("diagnostics: {0}")]
    Diagnostics(#[from] DiagnosticsError),
    #[error("every chain failed; first error: {0}")]
    AllChainsFailed(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CampaignError + '_ {
    move |source| CampaignError::Io { path: path.to_path_buf(), source }
}

/// One CSV row: metrics of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRow {
    pub target: String,
    pub beta: f64,
    pub chain_id: usize,
    pub length: usize,
    pub tvd: f64,
    pub mean_error: f64,
    pub cov_error: f64,
    pub acceptance_total: f64,
    pub acceptance_intrepid: f64,
    pub acceptance_local: f64,
    pub target_evals: u64,
    pub wall_time: f64,
}

impl ChainRow {
    pub fn metric(&self, m: Metric) -> f64 {
        match m {
            Metric::Tvd => self.tvd,
            Metric::MeanError => self.mean_error,
            Metric::CovError => self.cov_error,
            Metric::AcceptanceTotal => self.acceptance_total,
            Metric::AcceptanceIntrepid => self.acceptance_intrepid,
            Metric::AcceptanceLocal => self.acceptance_local,
        }
    }
}

/// Lag-`lag` correlation of coordinate `dim` for one chain; empty when the
/// coordinate never moved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagRow {
    pub beta: f64,
    pub chain_id: usize,
    pub length: usize,
    pub lag: usize,
    pub dim: usize,
    pub correlation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainFailure {
    pub beta: f64,
    pub chain_id: usize,
    pub length: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceInfo {
    pub path: Option<PathBuf>,
    pub seed: u64,
    pub n: usize,
    pub proposed: u64,
    pub accepted: u64,
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningInfo {
    pub bins_per_axis: usize,
    pub padding_per_side: f64,
    pub pairs: Vec<(usize, usize)>,
    pub statistic: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectationOutcome {
    pub expectation: Expectation,
    pub value: f64,
    pub chains: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignResult {
    pub rows: Vec<ChainRow>,
    pub lags: Vec<LagRow>,
    pub failures: Vec<ChainFailure>,
    pub reference: ReferenceInfo,
    pub binning: BinningInfo,
    pub expectations: Vec<ExpectationOutcome>,
}

impl CampaignResult {
    pub fn expectations_met(&self) -> bool {
        self.expectations.iter().all(|e| e.passed)
    }
}

/// Loads the configured reference, or draws it (saving it when a path is
/// configured).
pub fn obtain_reference(cfg: &CampaignConfig, target: &TargetModel) -> Result<ReferenceSet, CampaignError> {
    if let Some(path) = &cfg.reference.path {
        if path.exists() {
            let set = read_reference(path)?;
            if set.dim != target.dim() {
                return Err(CampaignError::Invalid(format!(
                    "reference {} has dimension {}, target has {}",
                    path.display(),
                    set.dim,
                    target.dim()
                )));
            }
            return Ok(set);
        }
    }
    let set = reference_sample(target, cfg.reference.n, cfg.reference.seed)?;
    if let Some(path) = &cfg.reference.path {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        write_reference(&set, path)?;
    }
    Ok(set)
}

fn start_point(
    cfg: &CampaignConfig,
    target: &TargetModel,
    reference: &ReferenceSet,
    seed: u64,
) -> Result<Point, String> {
    let mut rng = substream(seed, START_LABEL, 0);
    match &cfg.start {
        StartPolicy::Reference => Ok(Point::new(reference.row(rng.random_range(0..reference.len())).to_vec())),
        StartPolicy::Fixed { point } => Ok(Point::new(point.clone())),
        StartPolicy::Parent => {
            for _ in 0..MAX_START_DRAWS {
                let x = target.parent().sample(&mut rng).ok_or("parent has no sampler")?;
                if target.log_target_uncounted(&x) > f64::NEG_INFINITY {
                    return Ok(x);
                }
            }
            Err("no parent draw with positive target density".into())
        }
    }
}

struct Job {
    beta_index: usize,
    length_index: usize,
    chain_id: usize,
}

struct ChainOutput {
    row: ChainRow,
    lags: Vec<LagRow>,
}

fn run_one(
    cfg: &CampaignConfig,
    target: &TargetModel,
    kernel: &KernelConfig,
    reference: &ReferenceSet,
    summary: (&ReferenceBinning, &[f64], &[f64]),
    job: &Job,
) -> Result<ChainOutput, String> {
    let (binning, ref_mean, ref_cov) = summary;
    let beta = cfg.betas[job.beta_index];
    let length = cfg.lengths[job.length_index];
    let seed = chain_seed(cfg.seed, job.beta_index, job.chain_id, job.length_index);
    let local = target.clone();
    let x0 = start_point(cfg, &local, reference, seed)?;
    let mut rng = chain_stream(cfg.seed, job.beta_index, job.chain_id, job.length_index);
    let dim = local.dim();
    let keep = !cfg.lags.is_empty();
    let mut acc = binning.accumulator();
    let mut moments = Moments::new(dim);
    let mut states = Vec::with_capacity(if keep { length * dim } else { 0 });
    let clock = Instant::now();
    let (counts, _) = run_chain_with(kernel, &local, x0, length, cfg.burn_in, &mut rng, |x| {
        acc.push(x);
        moments.push(x);
        if keep {
            states.extend_from_slice(x);
        }
    })
    .map_err(|e: KernelError| e.to_string())?;
    let wall_time = clock.elapsed().as_secs_f64();
    let err = |e: DiagnosticsError| e.to_string();
    let tvd = acc.tvd(binning).map_err(err)?;
    let mean_error = intrepid_core::diagnostics::mean_error_from(&moments, ref_mean, ref_cov).map_err(err)?;
    let cov_error = if moments.n >= 2 {
        intrepid_core::diagnostics::cov_error_from(&moments, ref_cov).map_err(err)?
    } else {
        f64::NAN
    };
    let mut lags = Vec::new();
    if keep {
        let record = ChainRecord { dim, states, counts };
        for &k in cfg.lags.iter().filter(|&&k| k < length) {
            for c in 0..dim {
                let column: Vec<f64> = record.iter().map(|x| x[c]).collect();
                let correlation = lag_correlation(&ChainRecord::from_states(1, column), k).ok().map(|v| v[0]);
                lags.push(LagRow { beta, chain_id: job.chain_id, length, lag: k, dim: c, correlation });
            }
        }
    }
    Ok(ChainOutput {
        row: ChainRow {
            target: cfg.target.clone(),
            beta,
            chain_id: job.chain_id,
            length,
            tvd,
            mean_error,
            cov_error,
            acceptance_total: counts.acceptance_total(),
            acceptance_intrepid: counts.acceptance_intrepid(),
            acceptance_local: counts.acceptance_local(),
            target_evals: counts.target_evals,
            wall_time,
        },
        lags,
    })
}

/// Runs every `(beta, length, chain)` combination. Failed chains are
/// recorded and skipped.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignResult, CampaignError> {
    cfg.validate()?;
    let target = cfg.build_target().map_err(CampaignError::Invalid)?;
    let reference = obtain_reference(cfg, &target)?;
    if reference.len() < 2 {
        return Err(CampaignError::Invalid("reference set needs at least two samples".into()));
    }
    let (ref_mean, ref_cov) = reference_moments(&reference)?;
    let binning = ReferenceBinning::from_reference(&reference.samples, reference.dim)?;
    let kernels: Vec<KernelConfig> = cfg
        .betas
        .iter()
        .map(|&b| cfg.kernel(b, target.dim()))
        .collect::<Result<_, _>>()
        .map_err(CampaignError::Invalid)?;

    let mut jobs = Vec::new();
    for beta_index in 0..cfg.betas.len() {
        for length_index in 0..cfg.lengths.len() {
            for chain_id in 0..cfg.chains {
                jobs.push(Job { beta_index, length_index, chain_id });
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CampaignError::Invalid(format!("worker pool: {e}")))?;
    let outputs: Vec<Result<ChainOutput, String>> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                run_one(cfg, &target, &kernels[job.beta_index], &reference, (&binning, &ref_mean, &ref_cov), job)
            })
            .collect()
    });

    let mut rows = Vec::new();
    let mut lags = Vec::new();
    let mut failures = Vec::new();
    for (job, out) in jobs.iter().zip(outputs) {
        match out {
            Ok(o) => {
                rows.push(o.row);
                lags.extend(o.lags);
            }
            Err(error) => failures.push(ChainFailure {
                beta: cfg.betas[job.beta_index],
                chain_id: job.chain_id,
                length: cfg.lengths[job.length_index],
                error,
            }),
        }
    }
    if rows.is_empty() {
        let first = failures.first().map(|f| f.error.clone()).unwrap_or_default();
        return Err(CampaignError::AllChainsFailed(first));
    }
    let expectations = cfg.expect.iter().map(|e| check_expectation(e, &rows)).collect();
    Ok(CampaignResult {
        rows,
        lags,
        failures,
        reference: ReferenceInfo {
            path: cfg.reference.path.clone(),
            seed: reference.seed,
            n: reference.len(),
            proposed: reference.proposed,
            accepted: reference.accepted,
            mean: ref_mean,
            cov: ref_cov,
        },
        binning: BinningInfo {
            bins_per_axis: DEFAULT_BINS,
            padding_per_side: RANGE_PADDING,
            pairs: marginal_pairs(target.dim()),
            statistic: "max over pairs of binned TVD, out-of-range cell included".into(),
        },
        expectations,
    })
}

fn check_expectation(e: &Expectation, rows: &[ChainRow]) -> ExpectationOutcome {
    let mut values: Vec<f64> = rows
        .iter()
        .filter(|r| r.beta == e.beta && e.length.is_none_or(|l| l == r.length))
        .map(|r| r.metric(e.metric))
        .filter(|v| !v.is_nan())
        .collect();
    values.sort_by(|a, b| a.total_cmp(b));
    let value = if values.is_empty() { f64::NAN } else { quantile(&values, e.quantile) };
    let passed = !value.is_nan() && e.max.is_none_or(|m| value <= m) && e.min.is_none_or(|m| value >= m);
    ExpectationOutcome { expectation: e.clone(), value, chains: values.len(), passed }
}

/// Written next to the CSV; `config` reproduces the campaign.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub library_version: String,
    pub config: CampaignConfig,
    pub output_dir: PathBuf,
    pub results_csv: String,
    pub lags_csv: Option<String>,
    pub summary_csv: String,
    pub rows: usize,
    pub failures: Vec<ChainFailure>,
    pub reference: ReferenceInfo,
    pub binning: BinningInfo,
    pub expectations: Vec<ExpectationOutcome>,
}

pub const RESULTS_CSV: &str = "results.csv";
pub const LAGS_CSV: &str = "lags.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const MANIFEST_JSON: &str = "manifest.json";

/// Writes `results.csv`, `summary.csv`, optionally `lags.csv`, and
/// `manifest.json` into `dir`. Returns the manifest path.
pub fn write_outputs(cfg: &CampaignConfig, result: &CampaignResult, dir: &Path) -> Result<PathBuf, CampaignError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut w = csv::Writer::from_path(dir.join(RESULTS_CSV))?;
    for r in &result.rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(dir))?;
    let lags_csv = if result.lags.is_empty() {
        None
    } else {
        let mut w = csv::Writer::from_path(dir.join(LAGS_CSV))?;
        for r in &result.lags {
            w.serialize(r)?;
        }
        w.flush().map_err(io_err(dir))?;
        Some(LAGS_CSV.to_string())
    };
    crate::summary::write_summary(&crate::summary::summarize(&result.rows), &dir.join(SUMMARY_CSV))?;
    let manifest = Manifest {
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        output_dir: dir.to_path_buf(),
        results_csv: RESULTS_CSV.into(),
        lags_csv,
        summary_csv: SUMMARY_CSV.into(),
        rows: result.rows.len(),
        failures: result.failures.clone(),
        reference: result.reference.clone(),
        binning: result.binning.clone(),
        expectations: result.expectations.clone(),
    };
    let path = dir.join(MANIFEST_JSON);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(io_err(&path))?;
    Ok(path)
}

pub fn read_rows(path: &Path) -> Result<Vec<ChainRow>, CampaignError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().collect::<Result<_, _>>().map_err(CampaignError::from)
}
