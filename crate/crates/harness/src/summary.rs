//! Quantile tables of chain metrics grouped by `(target, beta, length)`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::campaign::{CampaignError, ChainRow};

pub const QUANTILES: [f64; 7] = [0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0];

const METRICS: [&str; 8] = [
    "tvd",
    "mean_error",
    "cov_error",
    "acceptance_total",
    "acceptance_intrepid",
    "acceptance_local",
    "target_evals",
    "wall_time",
];

/// Linear-interpolation quantile of sorted values.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    intrepid_core::stats::quantile_sorted(sorted, q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub target: String,
    pub beta: f64,
    pub length: usize,
    pub metric: String,
    pub chains: usize,
    pub min: f64,
    pub q05: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
    pub max: f64,
}

fn metric_value(r: &ChainRow, m: &str) -> f64 {
    match m {
        "tvd" => r.tvd,
        "mean_error" => r.mean_error,
        "cov_error" => r.cov_error,
        "acceptance_total" => r.acceptance_total,
        "acceptance_intrepid" => r.acceptance_intrepid,
        "acceptance_local" => r.acceptance_local,
        "target_evals" => r.target_evals as f64,
        "wall_time" => r.wall_time,
        _ => unreachable!("unknown metric {m}"),
    }
}

/// One row per group and metric, groups ordered by target, beta, length.
/// NaN values are left out of the quantiles.
pub fn summarize(rows: &[ChainRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, f64, usize)> = Vec::new();
    for r in rows {
        let k = (r.target.clone(), r.beta, r.length);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = Vec::new();
    for (target, beta, length) in keys {
        let group: Vec<&ChainRow> = rows.iter().filter(|r| r.target == target && r.beta == beta && r.length == length).collect();
        for m in METRICS {
            let mut v: Vec<f64> = group.iter().map(|r| metric_value(r, m)).filter(|x| !x.is_nan()).collect();
            if v.is_empty() {
                continue;
            }
            v.sort_by(|a, b| a.total_cmp(b));
            let q: Vec<f64> = QUANTILES.iter().map(|&p| quantile(&v, p)).collect();
            out.push(SummaryRow {
                target: target.clone(),
                beta,
                length,
                metric: m.to_string(),
                chains: v.len(),
                min: q[0],
                q05: q[1],
                q25: q[2],
                median: q[3],
                q75: q[4],
                q95: q[5],
                max: q[6],
            });
        }
    }
    out
}

pub fn write_summary(rows: &[SummaryRow], path: &Path) -> Result<(), CampaignError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|source| CampaignError::Io { path: path.to_path_buf(), source })
}
