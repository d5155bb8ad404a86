//! Angular, radial and component-wise proposal distributions.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::RandomStream;
use crate::stats::{std_normal_cdf, std_normal_inverse_cdf, std_normal_ln_pdf};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProposalError {
    #[error("invalid proposal parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngularKind {
    UniformRange,
    TruncatedNormal,
}

/// Proposal for the perturbation `phi` of angle `index` in dimension `dim`.
///
/// The support is `[-theta, span - theta]`, so `theta + phi` always stays in
/// the valid range for that angle. `span` is `2 pi` for the last angle and
/// `pi` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularProposal {
    pub kind: AngularKind,
    pub sigma: f64,
    /// Location of the untruncated normal; zero for the standard proposal.
    #[serde(default)]
    pub shift: f64,
    pub index: usize,
    pub dim: usize,
}

impl AngularProposal {
    pub fn new(kind: AngularKind, sigma: f64, index: usize, dim: usize) -> Result<Self, ProposalError> {
        if dim < 2 || index + 1 >= dim {
            return Err(ProposalError::InvalidParameter(format!(
                "angle index {index} out of range for dimension {dim}"
            )));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(ProposalError::InvalidParameter(format!("sigma = {sigma}")));
        }
        Ok(AngularProposal { kind, sigma, shift: 0.0, index, dim })
    }

    pub fn uniform(index: usize, dim: usize) -> Result<Self, ProposalError> {
        Self::new(AngularKind::UniformRange, PI, index, dim)
    }

    pub fn truncated_normal(sigma: f64, index: usize, dim: usize) -> Result<Self, ProposalError> {
        Self::new(AngularKind::TruncatedNormal, sigma, index, dim)
    }

    pub fn with_shift(mut self, shift: f64) -> Self {
        self.shift = shift;
        self
    }

    pub fn is_last(&self) -> bool {
        self.index + 2 == self.dim
    }

    pub fn span(&self) -> f64 {
        if self.is_last() {
            TAU
        } else {
            PI
        }
    }

    pub fn support(&self, theta: f64) -> (f64, f64) {
        (-theta, self.span() - theta)
    }

    /// `theta + phi` folded into the valid range; only rounding can push it out.
    pub fn apply(&self, theta: f64, phi: f64) -> f64 {
        let t = theta + phi;
        if self.is_last() {
            if t >= TAU {
                let w = t - TAU;
                if w < TAU { w.max(0.0) } else { 0.0 }
            } else {
                t.max(0.0)
            }
        } else {
            t.clamp(0.0, PI)
        }
    }

    fn standardized_bounds(&self, theta: f64) -> (f64, f64) {
        let (lo, hi) = self.support(theta);
        ((lo - self.shift) / self.sigma, (hi - self.shift) / self.sigma)
    }

    /// Draws `phi`; consumes exactly one uniform variate.
    pub fn sample<R: Rng + ?Sized>(&self, theta: f64, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.sample_from_uniform(theta, u)
    }

    pub fn sample_from_uniform(&self, theta: f64, u: f64) -> f64 {
        let (lo, hi) = self.support(theta);
        match self.kind {
            AngularKind::UniformRange => (lo + u * (hi - lo)).min(hi),
            AngularKind::TruncatedNormal => {
                let (a, b) = self.standardized_bounds(theta);
                // work in the lower tail for accuracy
                let z = if a > 0.0 {
                    let (pa, pb) = (std_normal_cdf(-b), std_normal_cdf(-a));
                    -std_normal_inverse_cdf(pa + u * (pb - pa))
                } else {
                    let (pa, pb) = (std_normal_cdf(a), std_normal_cdf(b));
                    std_normal_inverse_cdf(pa + u * (pb - pa))
                };
                (self.shift + self.sigma * z).clamp(lo, hi)
            }
        }
    }

    pub fn log_density(&self, phi: f64, theta: f64) -> f64 {
        let (lo, hi) = self.support(theta);
        if !(phi >= lo && phi <= hi) {
            return f64::NEG_INFINITY;
        }
        match self.kind {
            AngularKind::UniformRange => -self.span().ln(),
            AngularKind::TruncatedNormal => {
                let (a, b) = self.standardized_bounds(theta);
                let mass = if a > 0.0 {
                    std_normal_cdf(-a) - std_normal_cdf(-b)
                } else {
                    std_normal_cdf(b) - std_normal_cdf(a)
                };
                std_normal_ln_pdf((phi - self.shift) / self.sigma) - self.sigma.ln() - mass.ln()
            }
        }
    }

    /// Checks `q(-phi | theta_s + phi) = q(phi | theta_s)` on 10^3 random pairs.
    pub fn verify_symmetry(&self) -> bool {
        let mut rng = RandomStream::seed_from_u64(0x5EED_0A11);
        let span = self.span();
        (0..1000).all(|_| {
            let theta_s: f64 = rng.random::<f64>() * span;
            let phi = self.sample(theta_s, &mut rng);
            let theta_c = theta_s + phi;
            let fwd = self.log_density(phi, theta_s).exp();
            let rev = self.log_density(-phi, theta_c).exp();
            (fwd - rev).abs() <= 1e-10
        })
    }
}

/// Default angular proposals: `sigma = pi/2` for the polar angles and `pi` for
/// the last one.
pub fn default_angular(dim: usize) -> Result<Vec<AngularProposal>, ProposalError> {
    (0..dim.saturating_sub(1))
        .map(|j| {
            let sigma = if j + 2 == dim { PI } else { FRAC_PI_2 };
            AngularProposal::truncated_normal(sigma, j, dim)
        })
        .collect()
}

pub fn uniform_angular(dim: usize) -> Result<Vec<AngularProposal>, ProposalError> {
    (0..dim.saturating_sub(1)).map(|j| AngularProposal::uniform(j, dim)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RadialKind {
    UniformSymmetric,
    /// Density proportional to `gamma^(k/2)`.
    PowerLaw { k: f64 },
}

/// Distribution of the contour-level factor `gamma` on `[1/gamma0, gamma0]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialProposal {
    pub kind: RadialKind,
    pub gamma0: f64,
}

impl Default for RadialProposal {
    fn default() -> Self {
        RadialProposal { kind: RadialKind::UniformSymmetric, gamma0: 2.0 }
    }
}

impl RadialProposal {
    pub fn new(kind: RadialKind, gamma0: f64) -> Result<Self, ProposalError> {
        if !(gamma0 > 1.0) || !gamma0.is_finite() {
            return Err(ProposalError::InvalidParameter(format!("gamma0 = {gamma0}")));
        }
        if let RadialKind::PowerLaw { k } = kind {
            if !k.is_finite() {
                return Err(ProposalError::InvalidParameter(format!("k = {k}")));
            }
        }
        Ok(RadialProposal { kind, gamma0 })
    }

    pub fn uniform(gamma0: f64) -> Result<Self, ProposalError> {
        Self::new(RadialKind::UniformSymmetric, gamma0)
    }

    pub fn power_law(k: f64, gamma0: f64) -> Result<Self, ProposalError> {
        Self::new(RadialKind::PowerLaw { k }, gamma0)
    }

    pub fn support(&self) -> (f64, f64) {
        (1.0 / self.gamma0, self.gamma0)
    }

    /// Exponent `a = k/2 + 1` of the power-law CDF.
    fn power_exponent(k: f64) -> f64 {
        0.5 * k + 1.0
    }

    /// Draws `gamma`; consumes exactly one uniform variate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.sample_from_uniform(u)
    }

    pub fn sample_from_uniform(&self, u: f64) -> f64 {
        let (lo, hi) = self.support();
        let g = match self.kind {
            RadialKind::UniformSymmetric => lo + u * (hi - lo),
            RadialKind::PowerLaw { k } => {
                let a = Self::power_exponent(k);
                if a.abs() < 1e-12 {
                    self.gamma0.powf(2.0 * u - 1.0)
                } else {
                    let (ga, gb) = (lo.powf(a), hi.powf(a));
                    (ga + u * (gb - ga)).powf(1.0 / a)
                }
            }
        };
        g.clamp(lo, hi)
    }

    pub fn log_density(&self, gamma: f64) -> f64 {
        let (lo, hi) = self.support();
        if !(gamma >= lo && gamma <= hi) {
            return f64::NEG_INFINITY;
        }
        match self.kind {
            RadialKind::UniformSymmetric => -(hi - lo).ln(),
            RadialKind::PowerLaw { k } => {
                let a = Self::power_exponent(k);
                let log_c = if a.abs() < 1e-12 {
                    -(2.0 * self.gamma0.ln()).ln()
                } else {
                    a.abs().ln() - (hi.powf(a) - lo.powf(a)).abs().ln()
                };
                log_c + 0.5 * k * gamma.ln()
            }
        }
    }

    pub fn cdf(&self, gamma: f64) -> f64 {
        let (lo, hi) = self.support();
        if gamma <= lo {
            return 0.0;
        }
        if gamma >= hi {
            return 1.0;
        }
        match self.kind {
            RadialKind::UniformSymmetric => (gamma - lo) / (hi - lo),
            RadialKind::PowerLaw { k } => {
                let a = Self::power_exponent(k);
                if a.abs() < 1e-12 {
                    (gamma.ln() / self.gamma0.ln() + 1.0) / 2.0
                } else {
                    (gamma.powf(a) - lo.powf(a)) / (hi.powf(a) - lo.powf(a))
                }
            }
        }
    }

    /// The `k` in `q(gamma) = gamma^k q(1/gamma)` implied by the family.
    pub fn symmetry_exponent(&self) -> f64 {
        match self.kind {
            RadialKind::UniformSymmetric => 0.0,
            RadialKind::PowerLaw { k } => k,
        }
    }

    /// Estimates that `k` from the densities themselves, at an interior point.
    pub fn measured_symmetry_exponent(&self) -> f64 {
        let g = self.gamma0.sqrt();
        (self.log_density(g) - self.log_density(1.0 / g)) / g.ln()
    }
}

/// Independent Gaussian random-walk proposals, one scale per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentProposal {
    pub scales: Vec<f64>,
}

impl ComponentProposal {
    pub fn new(scales: Vec<f64>) -> Result<Self, ProposalError> {
        if scales.is_empty() {
            return Err(ProposalError::InvalidParameter("no component scales".into()));
        }
        if let Some(s) = scales.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
            return Err(ProposalError::InvalidParameter(format!("component scale {s}")));
        }
        Ok(ComponentProposal { scales })
    }

    pub fn isotropic(scale: f64, dim: usize) -> Result<Self, ProposalError> {
        Self::new(vec![scale; dim])
    }

    pub fn dim(&self) -> usize {
        self.scales.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, i: usize, x_i: f64, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        x_i + self.scales[i] * z
    }

    pub fn log_density(&self, i: usize, y: f64, x_i: f64) -> f64 {
        let s = self.scales[i];
        let z = (y - x_i) / s;
        -0.5 * z * z - s.ln() - 0.5 * (TAU).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> RandomStream {
        RandomStream::seed_from_u64(seed)
    }

    fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    /// Trapezoid integral of `exp(log_density)` over `[lo, hi]`.
    fn integrate(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
        let h = (hi - lo) / n as f64;
        (0..n).map(|i| f(lo + (i as f64 + 0.5) * h)).sum::<f64>() * h
    }

    #[test]
    fn uniform_last_angle_mean() {
        let p = AngularProposal::uniform(0, 2).unwrap();
        let mut r = rng(1);
        let n = 100_000;
        let mean = (0..n).map(|_| p.sample(0.0, &mut r)).sum::<f64>() / n as f64;
        assert!((mean - PI).abs() < 0.02, "{mean}");
    }

    #[test]
    fn truncated_normal_stays_in_support() {
        let p = AngularProposal::truncated_normal(FRAC_PI_2, 0, 3).unwrap();
        let mut r = rng(2);
        for _ in 0..100_000 {
            let phi = p.sample(FRAC_PI_2, &mut r);
            assert!((-FRAC_PI_2..=FRAC_PI_2).contains(&phi));
        }
    }

    #[test]
    fn uniform_polar_angle_ks() {
        let p = AngularProposal::uniform(0, 3).unwrap();
        let mut r = rng(3);
        let th = PI / 4.0;
        let xs: Vec<f64> = (0..100_000).map(|_| p.sample(th, &mut r)).collect();
        let d = ks_statistic(xs, |x| ((x + th) / PI).clamp(0.0, 1.0));
        assert!(d < 0.01, "{d}");
    }

    #[test]
    fn truncated_normal_ks_against_its_density() {
        let p = AngularProposal::truncated_normal(0.7, 0, 3).unwrap();
        let th = 2.5;
        let (lo, hi) = p.support(th);
        let mut r = rng(4);
        let xs: Vec<f64> = (0..100_000).map(|_| p.sample(th, &mut r)).collect();
        let cdf = |x: f64| integrate(lo, x.min(hi), 2000, |t| p.log_density(t, th).exp());
        let d = ks_statistic(xs, cdf);
        assert!(d < 0.01, "{d}");
    }

    #[test]
    fn angular_log_densities() {
        assert!((AngularProposal::uniform(0, 2).unwrap().log_density(1.0, 0.5) + TAU.ln()).abs() < 1e-15);
        assert!((AngularProposal::uniform(0, 3).unwrap().log_density(0.1, 0.5) + PI.ln()).abs() < 1e-15);
        assert_eq!(
            AngularProposal::uniform(0, 3).unwrap().log_density(3.0, 0.5),
            f64::NEG_INFINITY
        );

        let p = AngularProposal::truncated_normal(FRAC_PI_2, 0, 3).unwrap();
        // closed form: phi(0) / (sigma (Phi(1) - Phi(-1)))
        let phi0 = 1.0 / TAU.sqrt();
        let mass = 0.682_689_492_137_085_9;
        let expected = (phi0 / (FRAC_PI_2 * mass)).ln();
        let got = p.log_density(0.0, FRAC_PI_2);
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        let total = integrate(-FRAC_PI_2, FRAC_PI_2, 20_000, |t| p.log_density(t, FRAC_PI_2).exp());
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn far_tail_truncation_is_finite() {
        // theta near pi puts the whole support in the lower tail
        let p = AngularProposal::truncated_normal(0.05, 0, 3).unwrap().with_shift(3.0);
        let mut r = rng(5);
        for _ in 0..1000 {
            let phi = p.sample(0.01, &mut r);
            assert!(p.log_density(phi, 0.01).is_finite());
        }
    }

    #[test]
    fn symmetry_checks() {
        assert!(AngularProposal::uniform(0, 3).unwrap().verify_symmetry());
        assert!(AngularProposal::uniform(1, 3).unwrap().verify_symmetry());
        // the truncation normaliser depends on theta, so this is not symmetric
        assert!(!AngularProposal::truncated_normal(FRAC_PI_2, 0, 3).unwrap().verify_symmetry());
        assert!(!AngularProposal::truncated_normal(FRAC_PI_2, 0, 3)
            .unwrap()
            .with_shift(0.1)
            .verify_symmetry());
    }

    #[test]
    fn apply_wraps_last_angle() {
        let p = AngularProposal::uniform(1, 3).unwrap();
        assert_eq!(p.apply(TAU - 1.0, 1.0), 0.0);
        let q = AngularProposal::uniform(0, 3).unwrap();
        assert_eq!(q.apply(PI, 1e-17), PI);
    }

    #[test]
    fn default_scales() {
        let ps = default_angular(4).unwrap();
        assert_eq!(ps.len(), 3);
        assert_eq!(ps[0].sigma, FRAC_PI_2);
        assert_eq!(ps[2].sigma, PI);
        assert_eq!(RadialProposal::default().gamma0, 2.0);
    }

    #[test]
    fn uniform_radial() {
        let p = RadialProposal::uniform(2.0).unwrap();
        assert_eq!(p.support(), (0.5, 2.0));
        assert!((p.log_density(1.3).exp() - 1.0 / 1.5).abs() < 1e-15);
        assert_eq!(p.log_density(0.49), f64::NEG_INFINITY);
        let mut r = rng(6);
        for _ in 0..10_000 {
            let g = p.sample(&mut r);
            assert!((0.5..=2.0).contains(&g));
        }
        assert!((integrate(0.5, 2.0, 10_000, |g| p.log_density(g).exp()) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn power_law_k0_is_uniform() {
        let p = RadialProposal::power_law(0.0, 2.0).unwrap();
        let u = RadialProposal::uniform(2.0).unwrap();
        for g in [0.5, 0.8, 1.0, 1.7, 2.0] {
            assert!((p.log_density(g) - u.log_density(g)).abs() < 1e-12);
        }
    }

    #[test]
    fn power_law_normalises_and_matches_cdf() {
        for k in [-4.0, -2.0, -1.0, 1.0, 3.0] {
            let p = RadialProposal::power_law(k, 2.5).unwrap();
            let total = integrate(0.4, 2.5, 20_000, |g| p.log_density(g).exp());
            assert!((total - 1.0).abs() < 1e-6, "k={k} total={total}");
            let mut r = rng(7);
            let xs: Vec<f64> = (0..100_000).map(|_| p.sample(&mut r)).collect();
            assert!(ks_statistic(xs, |g| p.cdf(g)) < 0.01);
        }
    }

    #[test]
    fn radial_symmetry_relation() {
        let mut r = rng(8);
        for p in [
            RadialProposal::uniform(2.0).unwrap(),
            RadialProposal::power_law(0.0, 2.0).unwrap(),
            RadialProposal::power_law(3.0, 3.0).unwrap(),
            RadialProposal::power_law(-2.0, 2.0).unwrap(),
        ] {
            let k = p.symmetry_exponent();
            assert!((p.measured_symmetry_exponent() - k).abs() < 1e-10);
            for _ in 0..1000 {
                let g = p.sample(&mut r);
                let lhs = p.log_density(g);
                let rhs = k * g.ln() + p.log_density(1.0 / g);
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn component_moments() {
        let mut r = rng(9);
        let n = 100_000;
        let p = ComponentProposal::isotropic(1.0, 1).unwrap();
        let xs: Vec<f64> = (0..n).map(|_| p.sample(0, 0.0, &mut r)).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(m.abs() < 0.01 && (v - 1.0).abs() < 0.02);

        let p = ComponentProposal::isotropic(0.25, 1).unwrap();
        let xs: Vec<f64> = (0..n).map(|_| p.sample(0, 5.0, &mut r)).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((v - 0.0625).abs() < 0.002);
    }

    #[test]
    fn component_symmetry_and_validation() {
        let p = ComponentProposal::new(vec![0.3, 2.0]).unwrap();
        let mut r = rng(10);
        for _ in 0..1000 {
            let (x, y): (f64, f64) = (r.random_range(-5.0..5.0), r.random_range(-5.0..5.0));
            assert!((p.log_density(1, y, x) - p.log_density(1, x, y)).abs() < 1e-12);
        }
        assert!(ComponentProposal::new(vec![1.0, 0.0]).is_err());
        assert!(RadialProposal::uniform(1.0).is_err());
        assert!(AngularProposal::truncated_normal(-1.0, 0, 3).is_err());
        assert!(AngularProposal::uniform(2, 3).is_err());
    }
}
