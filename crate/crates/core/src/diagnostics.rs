//! Convergence and mixing metrics against an IID reference: binned total
//! variation distance, normalised moment errors, lag correlation and mode
//! occupancy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::ChainRecord;
use crate::stats::{quantile_sorted, Moments};

/// Bins per axis of the default TVD grid.
pub const DEFAULT_BINS: usize = 100;
/// Fraction of the reference range added on each side of the grid.
pub const RANGE_PADDING: f64 = 0.05;
/// Most 2-D marginals compared when `d > 2`.
pub const MAX_PAIRS: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosticsError {
    #[error("histograms are on different grids")]
    GridMismatch,
    #[error("no samples")]
    EmptySample,
    #[error("dimension {0} has zero variance")]
    DegenerateVariance(usize),
    #[error("chain of length {length} is too short for lag/step {lag}")]
    TooShort { length: usize, lag: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Uniform 2-D grid over coordinates `(pair.0, pair.1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid2 {
    pub pair: (usize, usize),
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub bins: usize,
}

impl Grid2 {
    pub fn new(pair: (usize, usize), lo: [f64; 2], hi: [f64; 2], bins: usize) -> Self {
        assert!(bins > 0 && lo[0] < hi[0] && lo[1] < hi[1], "grid must be non-empty");
        Grid2 { pair, lo, hi, bins }
    }

    /// Bounding box of `samples` on `pair`, padded by `RANGE_PADDING` of the
    /// range per side.
    pub fn covering<'a>(pair: (usize, usize), samples: impl IntoIterator<Item = &'a [f64]>, bins: usize) -> Result<Self, DiagnosticsError> {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        let mut any = false;
        for x in samples {
            any = true;
            for (k, c) in [pair.0, pair.1].into_iter().enumerate() {
                lo[k] = lo[k].min(x[c]);
                hi[k] = hi[k].max(x[c]);
            }
        }
        if !any {
            return Err(DiagnosticsError::EmptySample);
        }
        for k in 0..2 {
            let width = hi[k] - lo[k];
            let pad = if width > 0.0 { RANGE_PADDING * width } else { 0.5 };
            lo[k] -= pad;
            hi[k] += pad;
        }
        Ok(Grid2::new(pair, lo, hi, bins))
    }

    /// Strictly increasing bin edges along axis `k`.
    pub fn edges(&self, k: usize) -> Vec<f64> {
        let w = (self.hi[k] - self.lo[k]) / self.bins as f64;
        (0..=self.bins).map(|i| if i == self.bins { self.hi[k] } else { self.lo[k] + w * i as f64 }).collect()
    }

    pub fn cells(&self) -> usize {
        self.bins * self.bins
    }

    /// Cell index of `x`, or `None` outside the grid (upper edges are closed).
    pub fn cell(&self, x: &[f64]) -> Option<usize> {
        let mut idx = [0usize; 2];
        for (k, c) in [self.pair.0, self.pair.1].into_iter().enumerate() {
            let v = x[c];
            if !(v >= self.lo[k] && v <= self.hi[k]) {
                return None;
            }
            let t = (v - self.lo[k]) / (self.hi[k] - self.lo[k]) * self.bins as f64;
            idx[k] = (t as usize).min(self.bins - 1);
        }
        Some(idx[0] * self.bins + idx[1])
    }
}

/// Streaming histogram on a [`Grid2`]; the last count is the out-of-range cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub grid: Grid2,
    counts: Vec<u64>,
}

impl Histogram {
    pub fn new(grid: Grid2) -> Self {
        let n = grid.cells() + 1;
        Histogram { grid, counts: vec![0; n] }
    }

    pub fn push(&mut self, x: &[f64]) {
        let i = self.grid.cell(x).unwrap_or(self.counts.len() - 1);
        self.counts[i] += 1;
    }

    pub fn merge(&mut self, other: &Histogram) -> Result<(), DiagnosticsError> {
        if self.grid != other.grid {
            return Err(DiagnosticsError::GridMismatch);
        }
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn normalize(&self) -> Result<BinnedDistribution, DiagnosticsError> {
        let n = self.total();
        if n == 0 {
            return Err(DiagnosticsError::EmptySample);
        }
        let inv = 1.0 / n as f64;
        let cells = self.grid.cells();
        Ok(BinnedDistribution {
            grid: self.grid.clone(),
            masses: self.counts[..cells].iter().map(|&c| c as f64 * inv).collect(),
            out_of_range: self.counts[cells] as f64 * inv,
        })
    }
}

/// Normalised histogram: `masses` and `out_of_range` sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedDistribution {
    pub grid: Grid2,
    pub masses: Vec<f64>,
    pub out_of_range: f64,
}

impl BinnedDistribution {
    pub fn from_samples<'a>(grid: Grid2, samples: impl IntoIterator<Item = &'a [f64]>) -> Result<Self, DiagnosticsError> {
        let mut h = Histogram::new(grid);
        samples.into_iter().for_each(|x| h.push(x));
        h.normalize()
    }

    /// Mass of the cell containing `x` (the out-of-range mass outside the grid).
    pub fn mass_at(&self, x: &[f64]) -> f64 {
        match self.grid.cell(x) {
            Some(i) => self.masses[i],
            None => self.out_of_range,
        }
    }
}

/// Half the L1 distance, including the out-of-range cell.
pub fn tvd(a: &BinnedDistribution, b: &BinnedDistribution) -> Result<f64, DiagnosticsError> {
    if a.grid != b.grid {
        return Err(DiagnosticsError::GridMismatch);
    }
    let body: f64 = a.masses.iter().zip(&b.masses).map(|(x, y)| (x - y).abs()).sum();
    Ok((0.5 * (body + (a.out_of_range - b.out_of_range).abs())).min(1.0))
}

/// The 2-D marginals compared for a `dim`-dimensional target: the first
/// `MAX_PAIRS` coordinate pairs in lexicographic order.
pub fn marginal_pairs(dim: usize) -> Vec<(usize, usize)> {
    if dim < 2 {
        return vec![(0, 0)];
    }
    let mut pairs = Vec::new();
    for i in 0..dim {
        for j in i + 1..dim {
            if pairs.len() < MAX_PAIRS {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Reference histograms on every compared marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceBinning {
    pub dim: usize,
    pub marginals: Vec<BinnedDistribution>,
}

impl ReferenceBinning {
    /// Default binning from reference samples stored row-major.
    pub fn from_reference(rows: &[f64], dim: usize) -> Result<Self, DiagnosticsError> {
        Self::with_bins(rows, dim, DEFAULT_BINS)
    }

    pub fn with_bins(rows: &[f64], dim: usize, bins: usize) -> Result<Self, DiagnosticsError> {
        if rows.is_empty() {
            return Err(DiagnosticsError::EmptySample);
        }
        let marginals = marginal_pairs(dim)
            .into_iter()
            .map(|pair| {
                let grid = Grid2::covering(pair, rows.chunks_exact(dim), bins)?;
                BinnedDistribution::from_samples(grid, rows.chunks_exact(dim))
            })
            .collect::<Result<_, _>>()?;
        Ok(ReferenceBinning { dim, marginals })
    }

    pub fn accumulator(&self) -> TvdAccumulator {
        TvdAccumulator { hists: self.marginals.iter().map(|m| Histogram::new(m.grid.clone())).collect() }
    }

    /// Maximum marginal TVD of the given points against the reference.
    pub fn tvd_of<'a>(&self, samples: impl IntoIterator<Item = &'a [f64]>) -> Result<f64, DiagnosticsError> {
        let mut acc = self.accumulator();
        samples.into_iter().for_each(|x| acc.push(x));
        acc.tvd(self)
    }
}

/// Streaming histograms matching a [`ReferenceBinning`].
#[derive(Debug, Clone, PartialEq)]
pub struct TvdAccumulator {
    hists: Vec<Histogram>,
}

impl TvdAccumulator {
    pub fn push(&mut self, x: &[f64]) {
        self.hists.iter_mut().for_each(|h| h.push(x));
    }

    pub fn merge(&mut self, other: &TvdAccumulator) -> Result<(), DiagnosticsError> {
        if self.hists.len() != other.hists.len() {
            return Err(DiagnosticsError::GridMismatch);
        }
        self.hists.iter_mut().zip(&other.hists).try_for_each(|(a, b)| a.merge(b))
    }

    pub fn tvd(&self, reference: &ReferenceBinning) -> Result<f64, DiagnosticsError> {
        if self.hists.len() != reference.marginals.len() {
            return Err(DiagnosticsError::GridMismatch);
        }
        let mut worst: f64 = 0.0;
        for (h, r) in self.hists.iter().zip(&reference.marginals) {
            worst = worst.max(tvd(&h.normalize()?, r)?);
        }
        Ok(worst)
    }
}

fn trace(cov: &[f64], dim: usize) -> f64 {
    (0..dim).map(|i| cov[i * dim + i]).sum()
}

fn check_dims(m: &Moments, mean: &[f64], cov: &[f64]) -> Result<(), DiagnosticsError> {
    let d = m.dim();
    if mean.len() != d {
        return Err(DiagnosticsError::DimensionMismatch { expected: d, found: mean.len() });
    }
    if cov.len() != d * d {
        return Err(DiagnosticsError::DimensionMismatch { expected: d * d, found: cov.len() });
    }
    Ok(())
}

/// `|mean - ref_mean|_2 / sqrt(tr ref_cov)`.
pub fn mean_error_from(m: &Moments, ref_mean: &[f64], ref_cov: &[f64]) -> Result<f64, DiagnosticsError> {
    if m.n == 0 {
        return Err(DiagnosticsError::EmptySample);
    }
    check_dims(m, ref_mean, ref_cov)?;
    let dist = m.mean.iter().zip(ref_mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    Ok(dist / trace(ref_cov, m.dim()).sqrt())
}

/// `|cov - ref_cov|_F / sqrt(tr ref_cov)`.
pub fn cov_error_from(m: &Moments, ref_cov: &[f64]) -> Result<f64, DiagnosticsError> {
    if m.n < 2 {
        return Err(DiagnosticsError::EmptySample);
    }
    let d = m.dim();
    if ref_cov.len() != d * d {
        return Err(DiagnosticsError::DimensionMismatch { expected: d * d, found: ref_cov.len() });
    }
    let frob = m.covariance().iter().zip(ref_cov).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    Ok(frob / trace(ref_cov, d).sqrt())
}

fn moments_of(rows: &[f64], dim: usize) -> Moments {
    let mut m = Moments::new(dim);
    rows.chunks_exact(dim).for_each(|x| m.push(x));
    m
}

/// [`mean_error_from`] over samples stored row-major.
pub fn mean_error(rows: &[f64], dim: usize, ref_mean: &[f64], ref_cov: &[f64]) -> Result<f64, DiagnosticsError> {
    mean_error_from(&moments_of(rows, dim), ref_mean, ref_cov)
}

/// [`cov_error_from`] over samples stored row-major.
pub fn cov_error(rows: &[f64], dim: usize, ref_cov: &[f64]) -> Result<f64, DiagnosticsError> {
    cov_error_from(&moments_of(rows, dim), ref_cov)
}

/// Per-dimension Pearson correlation between states `t` and `t + k`.
pub fn lag_correlation(chain: &ChainRecord, k: usize) -> Result<Vec<f64>, DiagnosticsError> {
    let n = chain.len();
    if n <= k {
        return Err(DiagnosticsError::TooShort { length: n, lag: k });
    }
    let m = n - k;
    (0..chain.dim)
        .map(|c| {
            let col = |t: usize| chain.states[t * chain.dim + c];
            let (mut ma, mut mb) = (0.0, 0.0);
            for t in 0..m {
                ma += col(t);
                mb += col(t + k);
            }
            ma /= m as f64;
            mb /= m as f64;
            let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
            for t in 0..m {
                let (a, b) = (col(t) - ma, col(t + k) - mb);
                sab += a * b;
                saa += a * a;
                sbb += b * b;
            }
            if saa <= 0.0 || sbb <= 0.0 {
                return Err(DiagnosticsError::DegenerateVariance(c));
            }
            Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
        })
        .collect()
}

/// Mean and quantiles of one dimension's lag correlation across chains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagSummary {
    pub chains: usize,
    pub mean: f64,
    pub q05: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
}

/// Pools per-chain correlations by dimension. Chains with a constant
/// dimension are skipped.
pub fn pooled_lag_correlation(chains: &[ChainRecord], k: usize) -> Result<Vec<LagSummary>, DiagnosticsError> {
    let dim = chains.first().ok_or(DiagnosticsError::EmptySample)?.dim;
    let mut per_dim: Vec<Vec<f64>> = vec![Vec::new(); dim];
    for chain in chains {
        match lag_correlation(chain, k) {
            Ok(rho) => rho.into_iter().zip(per_dim.iter_mut()).for_each(|(r, v)| v.push(r)),
            Err(DiagnosticsError::DegenerateVariance(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    per_dim
        .into_iter()
        .map(|mut v| {
            if v.is_empty() {
                return Err(DiagnosticsError::EmptySample);
            }
            v.sort_by(|a, b| a.total_cmp(b));
            Ok(LagSummary {
                chains: v.len(),
                mean: v.iter().sum::<f64>() / v.len() as f64,
                q05: quantile_sorted(&v, 0.05),
                q25: quantile_sorted(&v, 0.25),
                median: quantile_sorted(&v, 0.5),
                q75: quantile_sorted(&v, 0.75),
                q95: quantile_sorted(&v, 0.95),
            })
        })
        .collect()
}

/// TVD of the `l`-th state across chains against the reference.
pub fn ensemble_tvd(chains: &[ChainRecord], l: usize, reference: &ReferenceBinning) -> Result<f64, DiagnosticsError> {
    if chains.is_empty() {
        return Err(DiagnosticsError::EmptySample);
    }
    for c in chains {
        if c.len() <= l {
            return Err(DiagnosticsError::TooShort { length: c.len(), lag: l });
        }
    }
    reference.tvd_of(chains.iter().map(|c| c.state(l)))
}

/// Behaviour of [`mode_occupancy`] on an empty sample set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyPolicy {
    #[default]
    Error,
    Zeros,
}

/// Fraction of samples in each (disjoint) region.
pub fn mode_occupancy<F>(rows: &[f64], dim: usize, regions: &[F], empty: EmptyPolicy) -> Result<Vec<f64>, DiagnosticsError>
where
    F: Fn(&[f64]) -> bool,
{
    let n = rows.len() / dim;
    if n == 0 {
        return match empty {
            EmptyPolicy::Error => Err(DiagnosticsError::EmptySample),
            EmptyPolicy::Zeros => Ok(vec![0.0; regions.len()]),
        };
    }
    let mut counts = vec![0usize; regions.len()];
    for x in rows.chunks_exact(dim) {
        if let Some(i) = regions.iter().position(|r| r(x)) {
            counts[i] += 1;
        }
    }
    Ok(counts.into_iter().map(|c| c as f64 / n as f64).collect())
}

/// Acceptance rates of one chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRates {
    pub total: f64,
    pub intrepid: f64,
    pub local: f64,
}

/// Per-chain metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub tvd: f64,
    pub mean_error: f64,
    pub cov_error: f64,
    pub acceptance: AcceptanceRates,
    /// `(lag, per-dimension correlation)`; `None` where a dimension is constant.
    pub lag_correlations: Vec<(usize, Vec<Option<f64>>)>,
    pub mode_occupancy: Vec<f64>,
}

/// Reference quantities a chain is scored against.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSummary {
    pub binning: ReferenceBinning,
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
}

impl DiagnosticsReport {
    pub fn for_chain(chain: &ChainRecord, reference: &ReferenceSummary, lags: &[usize]) -> Result<Self, DiagnosticsError> {
        let mut acc = reference.binning.accumulator();
        let mut m = Moments::new(chain.dim);
        for x in chain.iter() {
            acc.push(x);
            m.push(x);
        }
        let lag_correlations = lags
            .iter()
            .filter(|&&k| k < chain.len())
            .map(|&k| {
                let per_dim = match lag_correlation(chain, k) {
                    Ok(v) => v.into_iter().map(Some).collect(),
                    Err(_) => per_dim_with_gaps(chain, k),
                };
                (k, per_dim)
            })
            .collect();
        Ok(DiagnosticsReport {
            tvd: acc.tvd(&reference.binning)?,
            mean_error: mean_error_from(&m, &reference.mean, &reference.cov)?,
            cov_error: if m.n >= 2 { cov_error_from(&m, &reference.cov)? } else { f64::NAN },
            acceptance: AcceptanceRates {
                total: chain.counts.acceptance_total(),
                intrepid: chain.counts.acceptance_intrepid(),
                local: chain.counts.acceptance_local(),
            },
            lag_correlations,
            mode_occupancy: Vec::new(),
        })
    }
}

fn per_dim_with_gaps(chain: &ChainRecord, k: usize) -> Vec<Option<f64>> {
    (0..chain.dim)
        .map(|c| {
            let column: Vec<f64> = chain.iter().map(|x| x[c]).collect();
            let single = ChainRecord::from_states(1, column);
            lag_correlation(&single, k).ok().map(|v| v[0])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    fn grid(bins: usize) -> Grid2 {
        Grid2::new((0, 1), [0.0, 0.0], [1.0, 1.0], bins)
    }

    fn dist(masses: Vec<f64>, out: f64) -> BinnedDistribution {
        let bins = (masses.len() as f64).sqrt() as usize;
        BinnedDistribution { grid: grid(bins), masses, out_of_range: out }
    }

    fn normal_rows(n: usize, seed: u64) -> Vec<f64> {
        let mut r = RandomStream::seed_from_u64(seed);
        (0..2 * n).map(|_| r.sample::<f64, _>(StandardNormal)).collect()
    }

    #[test]
    fn tvd_examples() {
        let a = dist(vec![0.5, 0.5, 0.0, 0.0], 0.0);
        let b = dist(vec![1.0, 0.0, 0.0, 0.0], 0.0);
        assert_eq!(tvd(&a, &a).unwrap(), 0.0);
        assert_eq!(tvd(&a, &b).unwrap(), 0.5);
        let c = dist(vec![0.0, 0.0, 0.0, 0.0], 1.0);
        assert_eq!(tvd(&b, &c).unwrap(), 1.0);
        let other = BinnedDistribution { grid: Grid2::new((0, 1), [0.0, 0.0], [2.0, 1.0], 2), ..a.clone() };
        assert_eq!(tvd(&a, &other), Err(DiagnosticsError::GridMismatch));
    }

    #[test]
    fn binning_masses_sum_to_one() {
        let rows = normal_rows(10_000, 1);
        let reference = ReferenceBinning::from_reference(&rows, 2).unwrap();
        let m = &reference.marginals[0];
        assert!((m.masses.iter().sum::<f64>() + m.out_of_range - 1.0).abs() < 1e-12);
        assert_eq!(m.out_of_range, 0.0);
        let e = m.grid.edges(0);
        assert!(e.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(e.len(), DEFAULT_BINS + 1);
    }

    #[test]
    fn iid_tvd_shrinks_with_sample_size() {
        let reference = ReferenceBinning::from_reference(&normal_rows(1_000_000, 2), 2).unwrap();
        let t: Vec<f64> = [1_000usize, 10_000, 100_000]
            .iter()
            .map(|&n| {
                let a = normal_rows(n, 3 + n as u64);
                let b = normal_rows(n, 4 + n as u64);
                let grid = reference.marginals[0].grid.clone();
                let da = BinnedDistribution::from_samples(grid.clone(), a.chunks_exact(2)).unwrap();
                let db = BinnedDistribution::from_samples(grid, b.chunks_exact(2)).unwrap();
                tvd(&da, &db).unwrap()
            })
            .collect();
        assert!(t[0] > t[1] && t[1] > t[2], "{t:?}");
    }

    #[test]
    fn pairs_for_higher_dimensions() {
        assert_eq!(marginal_pairs(2), vec![(0, 1)]);
        assert_eq!(marginal_pairs(3), vec![(0, 1), (0, 2), (1, 2)]);
        let p = marginal_pairs(10);
        assert_eq!(p.len(), MAX_PAIRS);
        assert_eq!(p[9], (1, 2));
    }

    #[test]
    fn moment_error_examples() {
        assert_eq!(mean_error(&[0.0, 2.0], 1, &[0.0], &[4.0]).unwrap().to_bits(), 0.5f64.to_bits());
        assert!(mean_error(&[1.0, 1.0], 1, &[1.0], &[1.0]).unwrap() == 0.0);
        // sample variance 2 against reference variance 1
        assert!((cov_error(&[1.0, -1.0], 1, &[1.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cov_error(&[0.5, 1.5], 1, &[0.5]).unwrap(), 0.0);
        assert_eq!(mean_error(&[], 1, &[0.0], &[1.0]), Err(DiagnosticsError::EmptySample));
    }

    #[test]
    fn cov_error_diag_example() {
        // a sample whose covariance is exactly diag(1, 2)
        let s = (1.5f64).sqrt();
        let t = 3f64.sqrt();
        let rows = [s, 0.0, -s, 0.0, 0.0, t, 0.0, -t];
        let e = cov_error(&rows, 2, &[1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((e - 1.0 / 2f64.sqrt()).abs() < 1e-14, "{e}");
    }

    #[test]
    fn lag_correlation_examples() {
        let rows = normal_rows(10_000, 5);
        let chain = ChainRecord::from_states(2, rows);
        assert!(lag_correlation(&chain, 0).unwrap().iter().all(|r| (r - 1.0).abs() < 1e-12));
        let n = chain.len() as f64;
        assert!(lag_correlation(&chain, 1).unwrap().iter().all(|r| r.abs() < 3.0 / n.sqrt()));
        let stuck = ChainRecord::from_states(2, vec![0.5; 200]);
        assert_eq!(lag_correlation(&stuck, 3), Err(DiagnosticsError::DegenerateVariance(0)));
        assert!(matches!(lag_correlation(&stuck, 100), Err(DiagnosticsError::TooShort { .. })));
    }

    #[test]
    fn ensemble_tvd_of_collapsed_ensemble() {
        let reference = ReferenceBinning::from_reference(&normal_rows(100_000, 6), 2).unwrap();
        let chains: Vec<ChainRecord> = (0..50).map(|_| ChainRecord::from_states(2, vec![0.1, 0.2, 0.3, 0.4])).collect();
        let t = ensemble_tvd(&chains, 0, &reference).unwrap();
        let cell_mass = reference.marginals[0].mass_at(&[0.1, 0.2]);
        assert!((t - (1.0 - cell_mass)).abs() < 1e-12);
        assert!(ensemble_tvd(&chains, 2, &reference).is_err());
    }

    #[test]
    fn occupancy_examples() {
        let right = |x: &[f64]| x[0] >= 1.25;
        let left = |x: &[f64]| x[0] <= -1.75;
        let regions: [&dyn Fn(&[f64]) -> bool; 2] = [&right, &left];
        let f = mode_occupancy(&[2.0, 0.0, 3.0, 1.0], 2, &regions, EmptyPolicy::Error).unwrap();
        assert_eq!(f, vec![1.0, 0.0]);
        assert_eq!(mode_occupancy(&[], 2, &regions, EmptyPolicy::Zeros).unwrap(), vec![0.0, 0.0]);
        assert!(mode_occupancy(&[], 2, &regions, EmptyPolicy::Error).is_err());
    }

    #[test]
    fn accumulator_merge_is_order_independent() {
        let rows = normal_rows(4_000, 7);
        let reference = ReferenceBinning::from_reference(&rows, 2).unwrap();
        let mut a = reference.accumulator();
        let mut b = reference.accumulator();
        let mut all = reference.accumulator();
        for (i, x) in rows.chunks_exact(2).enumerate() {
            all.push(x);
            if i % 3 == 0 { a.push(x) } else { b.push(x) }
        }
        let mut ab = a.clone();
        ab.merge(&b).unwrap();
        let mut ba = b;
        ba.merge(&a).unwrap();
        assert_eq!(ab, all);
        assert_eq!(ba, all);
    }

    fn masses(cells: usize) -> impl Strategy<Value = BinnedDistribution> {
        prop::collection::vec(0.0f64..1.0, cells + 1).prop_filter_map("non-zero mass", move |w| {
            let s: f64 = w.iter().sum();
            (s > 0.0).then(|| dist(w[..cells].iter().map(|v| v / s).collect(), w[cells] / s))
        })
    }

    proptest! {
        #[test]
        fn tvd_is_a_metric(a in masses(9), b in masses(9), c in masses(9)) {
            let ab = tvd(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab, tvd(&b, &a).unwrap());
            prop_assert!(ab <= tvd(&a, &c).unwrap() + tvd(&c, &b).unwrap() + 1e-12);
        }

        #[test]
        fn moment_errors_ignore_order(rows in prop::collection::vec(-10.0f64..10.0, 2..60), seed in any::<u64>()) {
            let n = rows.len() / 2;
            let rows = &rows[..2 * n];
            prop_assume!(n >= 2);
            let mut perm: Vec<usize> = (0..n).collect();
            let mut r = RandomStream::seed_from_u64(seed);
            for i in (1..n).rev() {
                perm.swap(i, r.random_range(0..=i));
            }
            let shuffled: Vec<f64> = perm.iter().flat_map(|&i| [rows[2 * i], rows[2 * i + 1]]).collect();
            let (m, c) = ([0.3, -0.1], [2.0, 0.3, 0.3, 1.0]);
            let a = mean_error(rows, 2, &m, &c).unwrap();
            let b = mean_error(&shuffled, 2, &m, &c).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
            let a = cov_error(rows, 2, &c).unwrap();
            let b = cov_error(&shuffled, 2, &c).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
        }
    }
}
