//! Ground truth independent of the Markov kernels: IID reference samples by
//! rejection from the parent (or exact per-target draws), reference moments,
//! grid quadrature and a binned goodness-of-fit check.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{substream, RandomStream};
use crate::stats::{chi_square_test, ChiSquareResult, Moments};
use crate::targets::{sample_gaussian_radial_tail, ReferenceRecipe, TargetModel};

/// Samples produced per parallel work unit.
pub const CHUNK_SIZE: usize = 10_000;
/// Proposals after which a low-acceptance sampler is abandoned.
pub const NONTERMINATING_PROPOSALS: u64 = 10_000_000;
/// Acceptance rate below which the sampler counts as nonterminating.
pub const NONTERMINATING_RATE: f64 = 1e-5;
/// Multiplier applied to a grid-searched supremum of `T`.
pub const BOUND_SAFETY: f64 = 1.5;
/// Boundary-to-peak density ratio above which a box is too small.
pub const BOUNDARY_RATIO: f64 = 1e-8;

const MAGIC: &[u8; 8] = b"IMCREF01";
const SAMPLE_LABEL: u64 = 0x5EF5;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("T(x) = {value} exceeds the rejection bound {bound}")]
    BoundViolation { value: f64, bound: f64 },
    #[error("acceptance {accepted}/{proposed} is too low to terminate")]
    Nonterminating { proposed: u64, accepted: u64 },
    #[error("target '{0}' has no parent sampler")]
    NoSampler(String),
    #[error("no samples")]
    EmptySample,
    #[error("invalid reference file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// IID samples from a target, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet {
    pub target: String,
    pub seed: u64,
    pub dim: usize,
    pub samples: Vec<f64>,
    pub proposed: u64,
    pub accepted: u64,
}

impl ReferenceSet {
    pub fn len(&self) -> usize {
        self.samples.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.chunks_exact(self.dim.max(1))
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

struct Chunk {
    samples: Vec<f64>,
    proposed: u64,
    accepted: u64,
}

/// Splits `n` samples into seeded chunks, runs them in parallel and
/// concatenates in chunk order.
fn chunked<F>(n: usize, seed: u64, dim: usize, make: F) -> Result<(Vec<f64>, u64, u64), OracleError>
where
    F: Fn(usize, &mut RandomStream) -> Result<Chunk, OracleError> + Sync,
{
    let chunks = n.div_ceil(CHUNK_SIZE);
    let parts: Vec<Result<Chunk, OracleError>> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let want = CHUNK_SIZE.min(n - k * CHUNK_SIZE);
            let mut rng = substream(seed, SAMPLE_LABEL, k as u64);
            make(want, &mut rng)
        })
        .collect();
    let mut samples = Vec::with_capacity(n * dim);
    let (mut proposed, mut accepted) = (0, 0);
    for p in parts {
        let p = p?;
        samples.extend(p.samples);
        proposed += p.proposed;
        accepted += p.accepted;
    }
    Ok((samples, proposed, accepted))
}

fn check_progress(proposed: u64, accepted: u64) -> Result<(), OracleError> {
    if proposed >= NONTERMINATING_PROPOSALS && (accepted as f64) < NONTERMINATING_RATE * proposed as f64 {
        return Err(OracleError::Nonterminating { proposed, accepted });
    }
    Ok(())
}

/// `n` IID draws from the target: `x ~ p` accepted with probability
/// `T(x) / bound`. Any observed `T(x) > bound` aborts.
pub fn rejection_sample(target: &TargetModel, n: usize, bound: f64, seed: u64) -> Result<ReferenceSet, OracleError> {
    let parent = target.parent();
    if !parent.has_sampler() {
        return Err(OracleError::NoSampler(target.name().into()));
    }
    let dim = target.dim();
    let log_bound = bound.ln();
    let (samples, proposed, accepted) = chunked(n, seed, dim, |want, rng| {
        let mut out = Vec::with_capacity(want * dim);
        let (mut proposed, mut accepted) = (0u64, 0u64);
        while (accepted as usize) < want {
            let x = parent.sample(rng).expect("sampler present");
            proposed += 1;
            let lt = target.log_transform(&x);
            if lt > log_bound {
                return Err(OracleError::BoundViolation { value: lt.exp(), bound });
            }
            let u: f64 = rng.random();
            if lt > f64::NEG_INFINITY && u < (lt - log_bound).exp() {
                out.extend_from_slice(&x);
                accepted += 1;
            }
            check_progress(proposed, accepted)?;
        }
        Ok(Chunk { samples: out, proposed, accepted })
    })?;
    Ok(ReferenceSet { target: target.name().into(), seed, dim, samples, proposed, accepted })
}

/// `n` IID draws using the target's reference recipe.
pub fn reference_sample(target: &TargetModel, n: usize, seed: u64) -> Result<ReferenceSet, OracleError> {
    let dim = target.dim();
    match target.reference_recipe() {
        ReferenceRecipe::ParentRejection { bound } => rejection_sample(target, n, *bound, seed),
        ReferenceRecipe::GaussianRadialTail { radius } => {
            let radius = *radius;
            let (samples, proposed, accepted) = chunked(n, seed, dim, |want, rng| {
                let samples = (0..want).flat_map(|_| sample_gaussian_radial_tail(radius, rng)).collect();
                Ok(Chunk { samples, proposed: want as u64, accepted: want as u64 })
            })?;
            Ok(ReferenceSet { target: target.name().into(), seed, dim, samples, proposed, accepted })
        }
        ReferenceRecipe::FilteredExact { sampler, accept } => {
            let (samples, proposed, accepted) = chunked(n, seed, dim, |want, rng| {
                let mut out = Vec::with_capacity(want * dim);
                let (mut proposed, mut accepted) = (0u64, 0u64);
                while (accepted as usize) < want {
                    let x = sampler(rng);
                    proposed += 1;
                    if accept(&x) {
                        out.extend_from_slice(&x);
                        accepted += 1;
                    }
                    check_progress(proposed, accepted)?;
                }
                Ok(Chunk { samples: out, proposed, accepted })
            })?;
            Ok(ReferenceSet { target: target.name().into(), seed, dim, samples, proposed, accepted })
        }
    }
}

/// Sample mean and unbiased covariance (row-major); the covariance is zero
/// for a single sample.
pub fn reference_moments(set: &ReferenceSet) -> Result<(Vec<f64>, Vec<f64>), OracleError> {
    if set.is_empty() {
        return Err(OracleError::EmptySample);
    }
    let mut m = Moments::new(set.dim);
    set.rows().for_each(|x| m.push(x));
    let cov = m.covariance();
    Ok((m.mean, cov))
}

/// Supremum of `T` over a uniform grid on `[lo, hi]`, times `BOUND_SAFETY`.
pub fn estimate_bound(target: &TargetModel, lo: &[f64], hi: &[f64], per_axis: usize) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for_each_midpoint(lo, hi, per_axis, |x, _| best = best.max(target.log_transform(x)));
    BOUND_SAFETY * best.exp()
}

/// Calls `f(point, on_boundary)` at every cell midpoint of a uniform grid.
fn for_each_midpoint(lo: &[f64], hi: &[f64], per_axis: usize, mut f: impl FnMut(&[f64], bool)) {
    let d = lo.len();
    let h: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| (b - a) / per_axis as f64).collect();
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    loop {
        let mut edge = false;
        for k in 0..d {
            x[k] = lo[k] + (idx[k] as f64 + 0.5) * h[k];
            edge |= idx[k] == 0 || idx[k] + 1 == per_axis;
        }
        f(&x, edge);
        let mut k = 0;
        loop {
            if k == d {
                return;
            }
            idx[k] += 1;
            if idx[k] < per_axis {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Midpoint-rule integral of `exp(log_density)` over a box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridIntegral {
    pub value: f64,
    /// Largest density on the outermost cells relative to the largest overall.
    pub boundary_ratio: f64,
}

impl GridIntegral {
    /// False when the box likely truncates non-negligible mass.
    pub fn boundary_ok(&self) -> bool {
        self.boundary_ratio < BOUNDARY_RATIO
    }
}

pub fn grid_normalization(log_density: impl Fn(&[f64]) -> f64, lo: &[f64], hi: &[f64], per_axis: usize) -> GridIntegral {
    assert_eq!(lo.len(), hi.len());
    assert!(per_axis > 0);
    let cell: f64 = lo.iter().zip(hi).map(|(a, b)| (b - a) / per_axis as f64).product();
    let (mut sum, mut peak, mut edge_peak) = (0.0, 0.0f64, 0.0f64);
    for_each_midpoint(lo, hi, per_axis, |x, edge| {
        let v = log_density(x).exp();
        if v.is_finite() {
            sum += v;
            peak = peak.max(v);
            if edge {
                edge_peak = edge_peak.max(v);
            }
        }
    });
    let boundary_ratio = if peak > 0.0 { edge_peak / peak } else { 0.0 };
    GridIntegral { value: sum * cell, boundary_ratio }
}

/// Pearson test of 2-D samples against a density on a `bins x bins` grid
/// over `[lo, hi]`. Cell probabilities integrate the density with
/// `refine x refine` midpoints per cell. The complement of the grid forms
/// one extra cell when `total_mass` (the integral over the plane) is given;
/// otherwise the density is normalised over the grid itself.
pub fn chi_square_2d(
    rows: &[f64],
    log_density: impl Fn(&[f64]) -> f64 + Sync,
    lo: [f64; 2],
    hi: [f64; 2],
    bins: usize,
    refine: usize,
    total_mass: Option<f64>,
) -> ChiSquareResult {
    let w = [(hi[0] - lo[0]) / bins as f64, (hi[1] - lo[1]) / bins as f64];
    let sub = [w[0] / refine as f64, w[1] / refine as f64];
    let probs: Vec<f64> = (0..bins * bins)
        .into_par_iter()
        .map(|c| {
            let (i, j) = (c / bins, c % bins);
            let mut s = 0.0;
            for a in 0..refine {
                for b in 0..refine {
                    let x = [lo[0] + i as f64 * w[0] + (a as f64 + 0.5) * sub[0], lo[1] + j as f64 * w[1] + (b as f64 + 0.5) * sub[1]];
                    s += log_density(&x).exp();
                }
            }
            s * sub[0] * sub[1]
        })
        .collect();
    let mass = total_mass.unwrap_or_else(|| probs.iter().sum());
    let probs: Vec<f64> = probs.into_iter().map(|p| p / mass).collect();
    let mut observed = vec![0.0; bins * bins + 1];
    for x in rows.chunks_exact(2) {
        let fi = (x[0] - lo[0]) / w[0];
        let fj = (x[1] - lo[1]) / w[1];
        if fi >= 0.0 && fj >= 0.0 && fi < bins as f64 && fj < bins as f64 {
            observed[fi as usize * bins + fj as usize] += 1.0;
        } else {
            observed[bins * bins] += 1.0;
        }
    }
    let n = (rows.len() / 2) as f64;
    let inside: f64 = probs.iter().sum();
    let mut expected: Vec<f64> = probs.iter().map(|p| p * n).collect();
    expected.push((1.0 - inside).max(0.0) * n);
    chi_square_test(&observed, &expected, 5.0)
}

/// Sidecar metadata written next to a reference file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMeta {
    pub seed: u64,
    pub target: String,
    pub n: usize,
    pub dim: usize,
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
    pub proposed: u64,
    pub accepted: u64,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Binary layout: magic, `n` and `dim` as little-endian `u64`, then the
/// samples column by column as little-endian `f64`. Metadata goes to
/// `<path>.json`.
pub fn write_reference(set: &ReferenceSet, path: &Path) -> Result<(), OracleError> {
    let n = set.len();
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(n as u64).to_le_bytes())?;
    w.write_all(&(set.dim as u64).to_le_bytes())?;
    for c in 0..set.dim {
        for i in 0..n {
            w.write_all(&set.samples[i * set.dim + c].to_le_bytes())?;
        }
    }
    w.flush()?;
    let (mean, cov) = if n > 0 { reference_moments(set)? } else { (vec![], vec![]) };
    let meta = ReferenceMeta {
        seed: set.seed,
        target: set.target.clone(),
        n,
        dim: set.dim,
        mean,
        cov,
        proposed: set.proposed,
        accepted: set.accepted,
    };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn read_reference(path: &Path) -> Result<ReferenceSet, OracleError> {
    let meta: ReferenceMeta = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(OracleError::Format("bad magic".into()));
    }
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    let n = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let dim = u64::from_le_bytes(word) as usize;
    if n != meta.n || dim != meta.dim {
        return Err(OracleError::Format(format!("header ({n}, {dim}) disagrees with sidecar ({}, {})", meta.n, meta.dim)));
    }
    let mut samples = vec![0.0; n * dim];
    for c in 0..dim {
        for i in 0..n {
            r.read_exact(&mut word)?;
            samples[i * dim + c] = f64::from_le_bytes(word);
        }
    }
    if r.read(&mut word)? != 0 {
        return Err(OracleError::Format("trailing bytes".into()));
    }
    Ok(ReferenceSet { target: meta.target, seed: meta.seed, dim, samples, proposed: meta.proposed, accepted: meta.accepted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::to_hyperspherical;
    use crate::kernel::{intrepid_log_proposal, KernelConfig};
    use crate::parent::{LogDensityFn, ParentModel};
    use crate::proposal::{uniform_angular, ComponentProposal, RadialProposal};
    use crate::targets::make_case;
    use std::f64::consts::TAU;
    use std::sync::Arc;

    #[test]
    fn gaussian_and_uniform_normalization() {
        let g = grid_normalization(|x| -0.5 * (x[0] * x[0] + x[1] * x[1]), &[-8.0, -8.0], &[8.0, 8.0], 400);
        assert!((g.value / TAU - 1.0).abs() < 1e-3);
        assert!(g.boundary_ok());
        let u = grid_normalization(|_| 0.0, &[0.0, 0.0], &[1.0, 1.0], 50);
        assert!((u.value - 1.0).abs() < 1e-12);
        assert!(!u.boundary_ok());
    }

    #[test]
    fn proposal_density_integrates_to_one() {
        let cfg = KernelConfig::new(1.0, uniform_angular(2).unwrap(), RadialProposal::default(), ComponentProposal::isotropic(1.0, 2).unwrap()).unwrap();
        let parent = ParentModel::standard_gaussian(2);
        let v_s = to_hyperspherical(&[1.0, 1.0], &[0.0, 0.0]).unwrap();
        let lq = |x: &[f64]| {
            let v_c = to_hyperspherical(x, &[0.0, 0.0]).unwrap();
            let gamma = v_c.r / v_s.r;
            let phi = v_c.angles[0] - v_s.angles[0];
            intrepid_log_proposal(&cfg, &parent, &v_s, &v_c, gamma, &[phi]).unwrap()
        };
        let g = grid_normalization(lq, &[-3.0, -3.0], &[3.0, 3.0], 600);
        assert!((g.value - 1.0).abs() < 0.02, "{}", g.value);
    }

    #[test]
    fn indicator_rejection_and_determinism() {
        let t = make_case(2).unwrap();
        let a = rejection_sample(&t, 25_000, 1.0, 9).unwrap();
        assert_eq!(a.len(), 25_000);
        assert!(a.rows().all(|x| t.log_target_uncounted(x) > f64::NEG_INFINITY));
        let b = rejection_sample(&t, 25_000, 1.0, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(rejection_sample(&t, 0, 1.0, 9).unwrap().len(), 0);
        let (mean, _) = reference_moments(&a).unwrap();
        assert!(mean[0] > 0.0);
    }

    #[test]
    fn bound_violation_aborts() {
        let doubled: LogDensityFn = Arc::new(|_: &[f64]| 2f64.ln());
        let t = TargetModel::new("doubled", ParentModel::standard_gaussian(2), doubled, ReferenceRecipe::ParentRejection { bound: 1.0 });
        assert!(matches!(rejection_sample(&t, 10, 1.0, 1), Err(OracleError::BoundViolation { .. })));
    }

    #[test]
    fn nonterminating_is_reported() {
        let never: LogDensityFn = Arc::new(|_: &[f64]| f64::NEG_INFINITY);
        let t = TargetModel::new("empty", ParentModel::standard_gaussian(2), never, ReferenceRecipe::ParentRejection { bound: 1.0 });
        assert!(matches!(rejection_sample(&t, 1, 1.0, 1), Err(OracleError::Nonterminating { .. })));
    }

    #[test]
    fn radial_tail_agrees_with_plain_rejection() {
        // Plain rejection at a smaller radius where it is affordable.
        let t = make_case(1).unwrap();
        let ring2: LogDensityFn = Arc::new(|x: &[f64]| if x[0] * x[0] + x[1] * x[1] >= 4.0 { 0.0 } else { f64::NEG_INFINITY });
        let plain_t = TargetModel::new("ring2", ParentModel::standard_gaussian(2), ring2, ReferenceRecipe::ParentRejection { bound: 1.0 });
        let plain = rejection_sample(&plain_t, 40_000, 1.0, 3).unwrap();
        let mut rng = substream(4, 0, 0);
        let exact: Vec<f64> = (0..40_000).flat_map(|_| sample_gaussian_radial_tail(2.0, &mut rng)).collect();
        let r2 = |v: &[f64]| v.chunks_exact(2).map(|x| x[0] * x[0] + x[1] * x[1]).sum::<f64>() / (v.len() / 2) as f64;
        // E|x|^2 given |x| >= 2 is 4 + 2
        assert!((r2(&plain.samples) - 6.0).abs() < 0.08);
        assert!((r2(&exact) - 6.0).abs() < 0.08);
        let ring = reference_sample(&t, 20_000, 5).unwrap();
        assert!(ring.rows().all(|x| x[0].hypot(x[1]) >= 4.0));
        assert!((r2(&ring.samples) - 18.0).abs() < 0.1);
    }

    #[test]
    fn case1_parent_acceptance_matches_tail_probability() {
        // P(|x| >= 4) under the 2-D standard Gaussian
        let p = (-8.0f64).exp();
        let t = make_case(1).unwrap();
        let set = rejection_sample(&t, 100, 1.0, 17).unwrap();
        let rate = set.acceptance_rate();
        let sd = (p / set.proposed as f64).sqrt();
        assert!((rate - p).abs() < 4.0 * sd, "{rate} vs {p}");
    }

    #[test]
    fn chi_square_detects_wrong_density() {
        let t = make_case(2).unwrap();
        let set = rejection_sample(&t, 50_000, 1.0, 21).unwrap();
        let ld = |x: &[f64]| t.log_target_uncounted(x);
        let z = grid_normalization(ld, &[-9.0, -9.0], &[9.0, 9.0], 1800).value;
        let ok = chi_square_2d(&set.samples, ld, [-4.5, -4.5], [4.5, 4.5], 20, 32, Some(z));
        assert!(ok.p_value > 1e-3, "{ok:?}");
        let shifted = |x: &[f64]| t.log_target_uncounted(&[x[0], x[1] - 0.1]);
        let bad = chi_square_2d(&set.samples, shifted, [-4.5, -4.5], [4.5, 4.5], 20, 32, Some(z));
        assert!(bad.p_value < 1e-6, "{bad:?}");
    }

    #[test]
    fn reference_file_round_trip() {
        let t = make_case(5).unwrap();
        let set = reference_sample(&t, 1234, 8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ref.bin");
        write_reference(&set, &path).unwrap();
        let back = read_reference(&path).unwrap();
        assert_eq!(back, set);
        let meta: ReferenceMeta = serde_json::from_str(&std::fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!(meta.n, 1234);
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 24 + 8 * 2 * 1234);
        assert_eq!(&bytes[..8], b"IMCREF01");
        // column-major: the second f64 is sample 1, coordinate 0
        assert_eq!(f64::from_le_bytes(bytes[32..40].try_into().unwrap()), set.row(1)[0]);
    }

    #[test]
    fn single_point_has_zero_covariance() {
        let set = ReferenceSet { target: "p".into(), seed: 0, dim: 2, samples: vec![1.0, 2.0], proposed: 1, accepted: 1 };
        let (m, c) = reference_moments(&set).unwrap();
        assert_eq!(m, vec![1.0, 2.0]);
        assert_eq!(c, vec![0.0; 4]);
    }

    #[test]
    fn bound_search_covers_gumbel_transform() {
        let t = make_case(4).unwrap();
        let b = estimate_bound(&t, &[-6.0, -6.0], &[6.0, 6.0], 200);
        assert!(b.is_finite() && b > 0.0);
    }
}
