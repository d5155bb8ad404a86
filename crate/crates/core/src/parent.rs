//! Parent densities and their radial transformation functions (RTFs).
//!
//! An RTF `R_{1,2}` maps a radius along direction `theta_1` (measured from the
//! anchor) to the radius along `theta_2` that lies on the same density contour,
//! and is order-preserving.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{random_angles, unit_direction, GeometryError, Point};
use crate::rng::RandomStream;

pub type LogDensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type SamplerFn = Arc<dyn Fn(&mut RandomStream) -> Vec<f64> + Send + Sync>;
/// Function of the hyperspherical angles of a direction.
pub type AngularFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Critical-radius table for the direction with the given angles.
pub type PartitionFn = Arc<dyn Fn(&[f64]) -> Vec<CriticalPoint> + Send + Sync>;

pub const INVERSION_MAX_ITER: usize = 200;
pub const INVERSION_REL_TOL: f64 = 1e-12;
/// Relative tolerance for matched radial-conditional values across directions.
pub const PARTITION_MATCH_TOL: f64 = 1e-9;
const SPOT_CHECK_DIRECTIONS: usize = 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RtfError {
    #[error("parent has no radial transformation function of the required class")]
    Unavailable,
    #[error("radial conditional inversion failed: {0}")]
    InversionFailure(String),
    #[error("critical-radius tables do not match: {0}")]
    PartitionMismatch(String),
    #[error("invalid parent model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RtfClass {
    Identity,
    UniformScaling,
    MonotoneRadialConditional,
    PiecewiseMatched,
    None,
}

/// Support radius `lambda(theta)` of a uniform parent along a ray from the anchor.
#[derive(Clone)]
pub enum RadialExtent {
    /// Axis-aligned box `lo <= x <= hi`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Polytope `normals[i] . x <= offsets[i]`.
    Halfspaces { normals: Vec<Vec<f64>>, offsets: Vec<f64> },
    /// User-supplied `lambda(theta)`.
    Custom(AngularFn),
}

impl fmt::Debug for RadialExtent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RadialExtent::Box { lo, hi } => f.debug_struct("Box").field("lo", lo).field("hi", hi).finish(),
            RadialExtent::Halfspaces { offsets, .. } => {
                write!(f, "Halfspaces({} faces)", offsets.len())
            }
            RadialExtent::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl RadialExtent {
    fn evaluate(&self, anchor: &[f64], angles: &[f64]) -> Result<f64, RtfError> {
        let lambda = match self {
            RadialExtent::Custom(g) => g(angles),
            RadialExtent::Box { lo, hi } => {
                let u = unit_direction(angles);
                let mut t = f64::INFINITY;
                for i in 0..u.len() {
                    if u[i] > 0.0 {
                        t = t.min((hi[i] - anchor[i]) / u[i]);
                    } else if u[i] < 0.0 {
                        t = t.min((lo[i] - anchor[i]) / u[i]);
                    }
                }
                t
            }
            RadialExtent::Halfspaces { normals, offsets } => {
                let u = unit_direction(angles);
                let mut t = f64::INFINITY;
                for (a, b) in normals.iter().zip(offsets) {
                    let au: f64 = a.iter().zip(&u).map(|(p, q)| p * q).sum();
                    if au > 0.0 {
                        let slack = b - a.iter().zip(anchor).map(|(p, q)| p * q).sum::<f64>();
                        t = t.min(slack / au);
                    }
                }
                t
            }
        };
        if lambda.is_finite() && lambda > 0.0 {
            Ok(lambda)
        } else {
            Err(RtfError::InvalidModel(format!("radial extent {lambda} is not positive and finite")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalKind {
    LocalMin,
    LocalMax,
    /// Start of an interval on which the radial conditional is constant.
    UniformStart,
    UniformEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub radius: f64,
    pub kind: CriticalKind,
}

impl CriticalPoint {
    pub fn new(radius: f64, kind: CriticalKind) -> Self {
        CriticalPoint { radius, kind }
    }
}

#[derive(Clone)]
pub enum Rtf {
    Identity,
    UniformScaling(RadialExtent),
    MonotoneRadialConditional,
    PiecewiseMatched(PartitionFn),
    None,
}

impl Rtf {
    pub fn class(&self) -> RtfClass {
        match self {
            Rtf::Identity => RtfClass::Identity,
            Rtf::UniformScaling(_) => RtfClass::UniformScaling,
            Rtf::MonotoneRadialConditional => RtfClass::MonotoneRadialConditional,
            Rtf::PiecewiseMatched(_) => RtfClass::PiecewiseMatched,
            Rtf::None => RtfClass::None,
        }
    }
}

impl fmt::Debug for Rtf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rtf::UniformScaling(e) => f.debug_tuple("UniformScaling").field(e).finish(),
            other => write!(f, "{:?}", other.class()),
        }
    }
}

/// `R_{1,2}(r)` and `ln R'_{1,2}(r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RtfEvaluation {
    pub r_out: f64,
    pub log_derivative: f64,
}

/// Parent density `p(x)` with its anchor and RTF capability.
#[derive(Clone)]
pub struct ParentModel {
    name: String,
    dim: usize,
    log_density: LogDensityFn,
    anchor: Point,
    rtf: Rtf,
    reference_direction: Option<Vec<f64>>,
    sampler: Option<SamplerFn>,
}

impl fmt::Debug for ParentModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParentModel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("anchor", &self.anchor)
            .field("rtf", &self.rtf)
            .field("reference_direction", &self.reference_direction)
            .finish()
    }
}

impl ParentModel {
    /// Builds and validates a parent. Monotone radial conditionals are
    /// spot-checked for strict decrease and piecewise tables for matched
    /// contour values on sampled directions.
    pub fn new(
        name: impl Into<String>,
        log_density: LogDensityFn,
        anchor: Point,
        rtf: Rtf,
    ) -> Result<Self, RtfError> {
        let dim = anchor.dim();
        if dim == 0 || anchor.iter().any(|a| !a.is_finite()) {
            return Err(RtfError::InvalidModel("anchor must be a finite point".into()));
        }
        let model = ParentModel {
            name: name.into(),
            dim,
            log_density,
            anchor,
            rtf,
            reference_direction: None,
            sampler: None,
        };
        model.validate()?;
        Ok(model)
    }

    /// Unnormalised standard Gaussian `exp(-|x|^2 / 2)` anchored at the origin.
    pub fn standard_gaussian(dim: usize) -> Self {
        let log_density: LogDensityFn = Arc::new(|x: &[f64]| -0.5 * x.iter().map(|v| v * v).sum::<f64>());
        let sampler: SamplerFn =
            Arc::new(move |rng: &mut RandomStream| (0..dim).map(|_| rng.sample(StandardNormal)).collect());
        ParentModel {
            name: format!("gaussian-{dim}"),
            dim,
            log_density,
            anchor: Point::zeros(dim),
            rtf: Rtf::Identity,
            reference_direction: None,
            sampler: Some(sampler),
        }
    }

    /// Uniform density on the box `[lo, hi]`.
    pub fn uniform_box(lo: Vec<f64>, hi: Vec<f64>, anchor: Point) -> Result<Self, RtfError> {
        if lo.len() != hi.len() || lo.len() != anchor.dim() || lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(RtfError::InvalidModel("box bounds must be ordered and match the anchor".into()));
        }
        if anchor.iter().zip(lo.iter().zip(&hi)).any(|(a, (l, h))| !(a > l && a < h)) {
            return Err(RtfError::InvalidModel("anchor must lie strictly inside the box".into()));
        }
        let (lo_d, hi_d) = (lo.clone(), hi.clone());
        let log_density: LogDensityFn = Arc::new(move |x: &[f64]| {
            let inside = x.iter().zip(lo_d.iter().zip(&hi_d)).all(|(v, (l, h))| *v >= *l && *v <= *h);
            if inside { 0.0 } else { f64::NEG_INFINITY }
        });
        let (lo_s, hi_s) = (lo.clone(), hi.clone());
        let sampler: SamplerFn = Arc::new(move |rng: &mut RandomStream| {
            lo_s.iter().zip(&hi_s).map(|(l, h)| l + (h - l) * rng.random::<f64>()).collect()
        });
        let model = ParentModel::new("uniform-box", log_density, anchor, Rtf::UniformScaling(RadialExtent::Box { lo, hi }))?;
        Ok(model.with_sampler(sampler))
    }

    /// Product of independent lognormals with the given `(mu, sigma)` pairs.
    pub fn lognormal_product(params: Vec<(f64, f64)>, anchor: Point) -> Result<Self, RtfError> {
        if params.len() != anchor.dim() || params.iter().any(|(m, s)| !m.is_finite() || !(*s > 0.0)) {
            return Err(RtfError::InvalidModel("lognormal parameters must match the anchor dimension".into()));
        }
        let p = params.clone();
        let log_norm = 0.5 * TAU.ln();
        let log_density: LogDensityFn = Arc::new(move |x: &[f64]| {
            let mut acc = 0.0;
            for (xi, (mu, sigma)) in x.iter().zip(&p) {
                if !(*xi > 0.0) {
                    return f64::NEG_INFINITY;
                }
                let z = (xi.ln() - mu) / sigma;
                acc += -xi.ln() - sigma.ln() - log_norm - 0.5 * z * z;
            }
            acc
        });
        let p = params;
        let sampler: SamplerFn = Arc::new(move |rng: &mut RandomStream| {
            p.iter()
                .map(|(mu, sigma)| {
                    let z: f64 = rng.sample(StandardNormal);
                    (mu + sigma * z).exp()
                })
                .collect()
        });
        let model = ParentModel::new("lognormal-product", log_density, anchor, Rtf::MonotoneRadialConditional)?;
        Ok(model.with_sampler(sampler))
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_sampler(mut self, sampler: SamplerFn) -> Self {
        self.sampler = Some(sampler);
        self
    }

    pub fn with_reference_direction(mut self, angles: Vec<f64>) -> Result<Self, RtfError> {
        if angles.len() + 1 != self.dim {
            return Err(GeometryError::DimensionMismatch { expected: self.dim - 1, found: angles.len() }.into());
        }
        self.reference_direction = Some(angles);
        self.validate()?;
        Ok(self)
    }

    pub fn with_anchor(mut self, anchor: Point) -> Result<Self, RtfError> {
        if anchor.dim() != self.dim {
            return Err(GeometryError::DimensionMismatch { expected: self.dim, found: anchor.dim() }.into());
        }
        self.anchor = anchor;
        self.validate()?;
        Ok(self)
    }

    pub fn with_rtf(mut self, rtf: Rtf) -> Result<Self, RtfError> {
        self.rtf = rtf;
        self.validate()?;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn anchor(&self) -> &Point {
        &self.anchor
    }

    pub fn rtf(&self) -> &Rtf {
        &self.rtf
    }

    pub fn rtf_class(&self) -> RtfClass {
        self.rtf.class()
    }

    /// Reference direction; the first coordinate axis unless set.
    pub fn reference_direction(&self) -> Vec<f64> {
        self.reference_direction
            .clone()
            .unwrap_or_else(|| vec![0.0; self.dim.saturating_sub(1)])
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        (self.log_density)(x)
    }

    pub fn has_sampler(&self) -> bool {
        self.sampler.is_some()
    }

    pub fn sample(&self, rng: &mut RandomStream) -> Option<Point> {
        self.sampler.as_ref().map(|s| Point::new(s(rng)))
    }

    fn log_radial_along(&self, u: &[f64], r: f64, buf: &mut [f64]) -> f64 {
        for ((b, a), ui) in buf.iter_mut().zip(self.anchor.iter()).zip(u) {
            *b = a + r * ui;
        }
        (self.log_density)(buf)
    }

    /// `ln Psi_theta(r) = ln p(anchor + r u(theta))`.
    pub fn log_radial_conditional(&self, theta: &[f64], r: f64) -> f64 {
        let u = unit_direction(theta);
        let mut buf = vec![0.0; self.dim];
        self.log_radial_along(&u, r, &mut buf)
    }

    pub fn radial_conditional(&self, theta: &[f64], r: f64) -> f64 {
        self.log_radial_conditional(theta, r).exp()
    }

    pub fn radial_extent(&self, theta: &[f64]) -> Result<f64, RtfError> {
        match &self.rtf {
            Rtf::UniformScaling(ext) => ext.evaluate(&self.anchor, theta),
            _ => Err(RtfError::Unavailable),
        }
    }

    fn check_angles(&self, theta: &[f64]) -> Result<(), RtfError> {
        if theta.len() + 1 != self.dim {
            return Err(GeometryError::DimensionMismatch { expected: self.dim - 1, found: theta.len() }.into());
        }
        Ok(())
    }

    /// Evaluates `R_{from,to}(r)` and its log-derivative.
    pub fn rtf_apply(&self, theta_from: &[f64], theta_to: &[f64], r: f64) -> Result<RtfEvaluation, RtfError> {
        self.check_angles(theta_from)?;
        self.check_angles(theta_to)?;
        if !(r >= 0.0) || !r.is_finite() {
            return Err(RtfError::InvalidModel(format!("radius {r}")));
        }
        match &self.rtf {
            Rtf::Identity => Ok(RtfEvaluation { r_out: r, log_derivative: 0.0 }),
            Rtf::UniformScaling(ext) => {
                let lf = ext.evaluate(&self.anchor, theta_from)?;
                let lt = ext.evaluate(&self.anchor, theta_to)?;
                Ok(RtfEvaluation { r_out: r * (lt / lf), log_derivative: (lt / lf).ln() })
            }
            Rtf::MonotoneRadialConditional => self.monotone_map(theta_from, theta_to, r),
            Rtf::PiecewiseMatched(partition) => self.piecewise_map(partition, theta_from, theta_to, r),
            Rtf::None => Err(RtfError::Unavailable),
        }
    }

    fn log_slope(&self, u: &[f64], r: f64, buf: &mut [f64]) -> f64 {
        let h = 1e-6 * r.max(1.0);
        if r >= h {
            (self.log_radial_along(u, r + h, buf) - self.log_radial_along(u, r - h, buf)) / (2.0 * h)
        } else {
            (self.log_radial_along(u, r + h, buf) - self.log_radial_along(u, r, buf)) / h
        }
    }

    fn derivative_ratio(&self, u_from: &[f64], r: f64, u_to: &[f64], r_out: f64, buf: &mut [f64]) -> Result<f64, RtfError> {
        let num = self.log_slope(u_from, r, buf);
        let den = self.log_slope(u_to, r_out, buf);
        let ratio = num / den;
        if ratio.is_finite() && ratio > 0.0 {
            Ok(ratio.ln())
        } else {
            Err(RtfError::InversionFailure(format!("derivative ratio {num}/{den} at r = {r}")))
        }
    }

    fn monotone_map(&self, theta_from: &[f64], theta_to: &[f64], r: f64) -> Result<RtfEvaluation, RtfError> {
        let u_from = unit_direction(theta_from);
        let u_to = unit_direction(theta_to);
        let mut buf = vec![0.0; self.dim];
        let level = self.log_radial_along(&u_from, r, &mut buf);
        if level.is_nan() || level == f64::NEG_INFINITY {
            return Err(RtfError::InversionFailure(format!("radius {r} lies outside the parent support")));
        }
        let top = self.log_radial_along(&u_to, 0.0, &mut buf);
        if level > top {
            return Err(RtfError::InversionFailure("level above the anchor density".into()));
        }
        let r_out = if r == 0.0 {
            0.0
        } else {
            let mut f = |s: f64| self.log_radial_along(&u_to, s, &mut buf);
            invert_decreasing(&mut f, level, 0.0, r)?
        };
        let log_derivative = self.derivative_ratio(&u_from, r, &u_to, r_out, &mut buf)?;
        Ok(RtfEvaluation { r_out, log_derivative })
    }

    fn piecewise_map(
        &self,
        partition: &PartitionFn,
        theta_from: &[f64],
        theta_to: &[f64],
        r: f64,
    ) -> Result<RtfEvaluation, RtfError> {
        let tf = partition(theta_from);
        let tt = partition(theta_to);
        check_table_shape(&tf)?;
        check_tables_match(&tf, &tt)?;
        let u_from = unit_direction(theta_from);
        let u_to = unit_direction(theta_to);
        let mut buf = vec![0.0; self.dim];

        let i = tf.iter().rposition(|c| c.radius <= r).unwrap_or(0);
        let a0 = tf[i].radius;
        let b0 = tt[i].radius;
        if i + 1 < tf.len() {
            let (a1, b1) = (tf[i + 1].radius, tt[i + 1].radius);
            if tf[i].kind == CriticalKind::UniformStart {
                let scale = (b1 - b0) / (a1 - a0);
                return Ok(RtfEvaluation { r_out: b0 + (r - a0) * scale, log_derivative: scale.ln() });
            }
            let level = self.log_radial_along(&u_from, r, &mut buf);
            let r_out = {
                let mut g = |s: f64| self.log_radial_along(&u_to, s, &mut buf);
                bisect_level(&mut g, level, b0, b1)?
            };
            let log_derivative = self.derivative_ratio(&u_from, r, &u_to, r_out, &mut buf)?;
            Ok(RtfEvaluation { r_out, log_derivative })
        } else {
            let level = self.log_radial_along(&u_from, r, &mut buf);
            if level.is_nan() || level == f64::NEG_INFINITY {
                return Err(RtfError::InversionFailure(format!("radius {r} lies outside the parent support")));
            }
            let r_out = {
                let mut g = |s: f64| self.log_radial_along(&u_to, s, &mut buf);
                invert_decreasing(&mut g, level, b0, b0 + (r - a0).max(1e-3))?
            };
            let log_derivative = self.derivative_ratio(&u_from, r, &u_to, r_out, &mut buf)?;
            Ok(RtfEvaluation { r_out, log_derivative })
        }
    }

    fn validate(&self) -> Result<(), RtfError> {
        let d = self.dim;
        if let Some(theta0) = &self.reference_direction {
            self.check_angles(theta0)?;
        }
        let needs_angles = !matches!(self.rtf, Rtf::Identity | Rtf::None);
        if needs_angles && d < 2 {
            return Err(RtfError::InvalidModel("RTF classes need at least 2 dimensions".into()));
        }
        let mut rng = RandomStream::seed_from_u64(0xA5C4_0D1E);
        let mut directions: Vec<Vec<f64>> = vec![self.reference_direction()];
        if d >= 2 {
            directions.extend((0..SPOT_CHECK_DIRECTIONS).map(|_| random_angles(d, &mut rng)));
        }
        match &self.rtf {
            Rtf::Identity | Rtf::None => Ok(()),
            Rtf::UniformScaling(ext) => {
                if let RadialExtent::Box { lo, hi } = ext {
                    if lo.len() != d || hi.len() != d {
                        return Err(RtfError::InvalidModel("box dimension mismatch".into()));
                    }
                }
                for theta in &directions {
                    ext.evaluate(&self.anchor, theta)?;
                }
                Ok(())
            }
            Rtf::MonotoneRadialConditional => {
                let mut buf = vec![0.0; d];
                for theta in &directions {
                    let u = unit_direction(theta);
                    let mut prev = self.log_radial_along(&u, 0.0, &mut buf);
                    if !prev.is_finite() {
                        return Err(RtfError::InvalidModel("parent density vanishes at the anchor".into()));
                    }
                    let mut r = 1e-2;
                    for _ in 0..80 {
                        let cur = self.log_radial_along(&u, r, &mut buf);
                        if cur == f64::NEG_INFINITY {
                            break;
                        }
                        if !(cur < prev) {
                            return Err(RtfError::InvalidModel(format!(
                                "radial conditional is not strictly decreasing at r = {r}"
                            )));
                        }
                        prev = cur;
                        r *= 1.3;
                    }
                }
                Ok(())
            }
            Rtf::PiecewiseMatched(partition) => {
                let reference = partition(&directions[0]);
                check_table_shape(&reference)?;
                let mut buf = vec![0.0; d];
                let u0 = unit_direction(&directions[0]);
                let ref_levels: Vec<f64> =
                    reference.iter().map(|c| self.log_radial_along(&u0, c.radius, &mut buf)).collect();
                for theta in &directions[1..] {
                    let table = partition(theta);
                    check_table_shape(&table)?;
                    check_tables_match(&reference, &table)?;
                    let u = unit_direction(theta);
                    for (c, &l0) in table.iter().zip(&ref_levels) {
                        let l = self.log_radial_along(&u, c.radius, &mut buf);
                        let (p0, p) = (l0.exp(), l.exp());
                        if (p - p0).abs() > PARTITION_MATCH_TOL * p.max(p0) {
                            return Err(RtfError::PartitionMismatch(format!(
                                "density {p} at radius {} differs from the reference value {p0}",
                                c.radius
                            )));
                        }
                    }
                }
                Ok(())
            }
        }
    }
}

fn check_table_shape(table: &[CriticalPoint]) -> Result<(), RtfError> {
    if table.is_empty() || table[0].radius != 0.0 {
        return Err(RtfError::PartitionMismatch("table must start at radius 0".into()));
    }
    for w in table.windows(2) {
        if !(w[1].radius > w[0].radius) || !w[1].radius.is_finite() {
            return Err(RtfError::PartitionMismatch("radii must be strictly increasing".into()));
        }
    }
    for (i, c) in table.iter().enumerate() {
        let next = table.get(i + 1).map(|n| n.kind);
        match c.kind {
            CriticalKind::UniformStart if next != Some(CriticalKind::UniformEnd) => {
                return Err(RtfError::PartitionMismatch("uniform start without a matching end".into()))
            }
            CriticalKind::UniformEnd if i == 0 || table[i - 1].kind != CriticalKind::UniformStart => {
                return Err(RtfError::PartitionMismatch("uniform end without a matching start".into()))
            }
            _ => {}
        }
    }
    Ok(())
}

fn check_tables_match(a: &[CriticalPoint], b: &[CriticalPoint]) -> Result<(), RtfError> {
    if a.len() != b.len() {
        return Err(RtfError::PartitionMismatch(format!("{} vs {} critical points", a.len(), b.len())));
    }
    if a.iter().zip(b).any(|(p, q)| p.kind != q.kind) {
        return Err(RtfError::PartitionMismatch("critical point kinds differ".into()));
    }
    Ok(())
}

/// Solves `f(s) = level` for `s >= lo`, `f` strictly decreasing with
/// `f(lo) >= level`. Brackets by doubling from `guess`, then bisects.
fn invert_decreasing(f: &mut impl FnMut(f64) -> f64, level: f64, lo: f64, guess: f64) -> Result<f64, RtfError> {
    let mut lo = lo;
    let mut hi = guess.max(lo + f64::MIN_POSITIVE);
    if f(hi) >= level {
        let mut n = 0;
        loop {
            lo = hi;
            hi *= 2.0;
            n += 1;
            if !hi.is_finite() || n > 2100 {
                return Err(RtfError::InversionFailure("bracket search diverged".into()));
            }
            if f(hi) < level {
                break;
            }
        }
    }
    bisect(f, level, lo, hi, false)
}

/// Solves `f(s) = level` on `[lo, hi]` for `f` monotone there.
fn bisect_level(f: &mut impl FnMut(f64) -> f64, level: f64, lo: f64, hi: f64) -> Result<f64, RtfError> {
    let (flo, fhi) = (f(lo), f(hi));
    let increasing = fhi > flo;
    let (min, max) = if increasing { (flo, fhi) } else { (fhi, flo) };
    let tol = PARTITION_MATCH_TOL * max.exp();
    if !(level.exp() >= min.exp() - tol && level.exp() <= max.exp() + tol) {
        return Err(RtfError::InversionFailure(format!("level {level} outside matched interval [{min}, {max}]")));
    }
    bisect(f, level, lo, hi, increasing)
}

fn bisect(f: &mut impl FnMut(f64) -> f64, level: f64, mut lo: f64, mut hi: f64, increasing: bool) -> Result<f64, RtfError> {
    // keeps halving past the tolerance until the bracket stops shrinking
    for _ in 0..INVERSION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let above = f(mid) >= level;
        if above != increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if hi - lo <= INVERSION_REL_TOL * hi.abs() {
        Ok(0.5 * (lo + hi))
    } else {
        Err(RtfError::InversionFailure(format!("no convergence in {INVERSION_MAX_ITER} iterations")))
    }
}
