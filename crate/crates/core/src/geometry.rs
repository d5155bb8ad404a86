//! Anchor-centred hyperspherical coordinates.
//!
//! A point `x` in `R^d` is written as `(r, theta_1, ..., theta_{d-1})` about an
//! anchor `a`, with `r = |x - a|`, `theta_j in [0, pi]` for `j < d - 1` and the
//! last angle in `[0, 2 pi)`. Angles are stored 0-based, so `angles[j]`
//! corresponds to `theta_{j+1}`.

use std::f64::consts::{PI, TAU};
use std::ops::Deref;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance used for geometric comparisons.
pub const GEOMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("point coincides with the anchor; hyperspherical angles are undefined")]
    ZeroRadius,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("hyperspherical coordinates need at least 2 dimensions, got {0}")]
    TooFewDimensions(usize),
    #[error("volume element is singular (zero radius or sin(theta) = 0)")]
    SingularJacobian,
    #[error("invalid polar vector: {0}")]
    InvalidPolar(String),
    #[error("non-finite coordinate at index {0}")]
    NonFinite(usize),
}

/// A state in Cartesian coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn zeros(dim: usize) -> Self {
        Point(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Checks the `d >= 2`, all-finite invariant.
    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.0.len() < 2 {
            return Err(GeometryError::TooFewDimensions(self.0.len()));
        }
        match self.0.iter().position(|c| !c.is_finite()) {
            Some(i) => Err(GeometryError::NonFinite(i)),
            None => Ok(()),
        }
    }
}

impl Deref for Point {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

impl From<&[f64]> for Point {
    fn from(v: &[f64]) -> Self {
        Point(v.to_vec())
    }
}

/// Radius and `d - 1` angles of a point relative to an anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarVector {
    pub r: f64,
    pub angles: Vec<f64>,
}

impl PolarVector {
    pub fn new(r: f64, angles: Vec<f64>) -> Self {
        PolarVector { r, angles }
    }

    /// Dimension of the Cartesian space this vector lives in.
    pub fn dim(&self) -> usize {
        self.angles.len() + 1
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let d = self.dim();
        if d < 2 {
            return Err(GeometryError::TooFewDimensions(d));
        }
        if !(self.r >= 0.0) || !self.r.is_finite() {
            return Err(GeometryError::InvalidPolar(format!("radius {}", self.r)));
        }
        for (j, &a) in self.angles.iter().enumerate() {
            let ok = if j + 1 == self.angles.len() {
                (0.0..TAU).contains(&a)
            } else {
                (0.0..=PI).contains(&a)
            };
            if !ok {
                return Err(GeometryError::InvalidPolar(format!("angle {j} = {a}")));
            }
        }
        Ok(())
    }
}

fn check_dims(x: &[f64], anchor: &[f64]) -> Result<usize, GeometryError> {
    if x.len() != anchor.len() {
        return Err(GeometryError::DimensionMismatch {
            expected: anchor.len(),
            found: x.len(),
        });
    }
    if x.len() < 2 {
        return Err(GeometryError::TooFewDimensions(x.len()));
    }
    Ok(x.len())
}

/// Maps `x` to hyperspherical coordinates centred on `anchor`.
pub fn to_hyperspherical(x: &[f64], anchor: &[f64]) -> Result<PolarVector, GeometryError> {
    let d = check_dims(x, anchor)?;
    let v: Vec<f64> = x.iter().zip(anchor).map(|(xi, ai)| xi - ai).collect();

    // tail[j] = sum_{i >= j} v_i^2
    let mut tail = vec![0.0; d + 1];
    for i in (0..d).rev() {
        tail[i] = tail[i + 1] + v[i] * v[i];
    }
    let r = tail[0].sqrt();
    if r == 0.0 {
        return Err(GeometryError::ZeroRadius);
    }

    let mut angles = Vec::with_capacity(d - 1);
    for j in 0..d - 2 {
        angles.push(tail[j + 1].sqrt().atan2(v[j]));
    }
    let mut last = v[d - 1].atan2(v[d - 2]);
    if last < 0.0 {
        last += TAU;
    }
    if last >= TAU {
        last = 0.0;
    }
    angles.push(last);
    Ok(PolarVector { r, angles })
}

/// Writes the unit direction for `angles` into `out` (length `angles.len() + 1`).
pub fn unit_direction_into(angles: &[f64], out: &mut [f64]) {
    let d = angles.len() + 1;
    debug_assert_eq!(out.len(), d);
    let mut sin_prod = 1.0;
    for (j, &theta) in angles.iter().enumerate() {
        let (s, c) = theta.sin_cos();
        out[j] = sin_prod * c;
        sin_prod *= s;
    }
    out[d - 1] = sin_prod;
}

pub fn unit_direction(angles: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; angles.len() + 1];
    unit_direction_into(angles, &mut out);
    out
}

/// Inverse of [`to_hyperspherical`].
pub fn to_cartesian(v: &PolarVector, anchor: &[f64]) -> Result<Point, GeometryError> {
    let d = v.dim();
    if anchor.len() != d {
        return Err(GeometryError::DimensionMismatch {
            expected: anchor.len(),
            found: d,
        });
    }
    if d < 2 {
        return Err(GeometryError::TooFewDimensions(d));
    }
    let mut out = vec![0.0; d];
    unit_direction_into(&v.angles, &mut out);
    for (o, a) in out.iter_mut().zip(anchor) {
        *o = a + v.r * *o;
    }
    Ok(Point(out))
}

/// Angles of a direction drawn uniformly from the unit sphere in `R^dim`.
pub fn random_angles<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    let origin = vec![0.0; dim];
    loop {
        let z: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(v) = to_hyperspherical(&z, &origin) {
            return v.angles;
        }
    }
}

/// Exponent of `sin(angles[j])` in the volume element.
#[inline]
pub fn sin_exponent(j: usize, d: usize) -> usize {
    d - j - 2
}

/// Sum of `(d - j - 2) ln sin(angles[j])`; the angular part of
/// [`log_volume_jacobian`].
pub fn log_sin_jacobian(angles: &[f64]) -> Result<f64, GeometryError> {
    let d = angles.len() + 1;
    let mut acc = 0.0;
    for (j, &theta) in angles.iter().enumerate() {
        let k = sin_exponent(j, d);
        if k == 0 {
            continue;
        }
        if theta <= 0.0 || theta >= PI {
            return Err(GeometryError::SingularJacobian);
        }
        let s = theta.sin();
        if s <= 0.0 {
            return Err(GeometryError::SingularJacobian);
        }
        acc += k as f64 * s.ln();
    }
    Ok(acc)
}

/// `ln` of the hyperspherical volume element `r^{d-1} prod sin^{d-j-1}(theta_j)`.
pub fn log_volume_jacobian(v: &PolarVector) -> Result<f64, GeometryError> {
    if !(v.r > 0.0) {
        return Err(GeometryError::SingularJacobian);
    }
    let d = v.dim();
    Ok((d - 1) as f64 * v.r.ln() + log_sin_jacobian(&v.angles)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn axis_aligned_points() {
        let v = to_hyperspherical(&[1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!(close(v.r, 1.0) && close(v.angles[0], 0.0));

        let v = to_hyperspherical(&[0.0, 2.0], &[0.0, 0.0]).unwrap();
        assert!(close(v.r, 2.0) && close(v.angles[0], PI / 2.0));

        let v = to_hyperspherical(&[0.0, 0.0, 1.0], &[0.0; 3]).unwrap();
        assert!(close(v.r, 1.0));
        assert!(close(v.angles[0], PI / 2.0) && close(v.angles[1], PI / 2.0));
    }

    #[test]
    fn last_angle_is_wrapped_into_0_2pi() {
        let v = to_hyperspherical(&[0.0, -1.0], &[0.0, 0.0]).unwrap();
        assert!(close(v.angles[0], 1.5 * PI));
        let v = to_hyperspherical(&[1.0, -1e-300], &[0.0, 0.0]).unwrap();
        assert!(v.angles[0] < TAU && v.angles[0] >= 0.0);
    }

    #[test]
    fn anchor_is_zero_radius() {
        assert_eq!(
            to_hyperspherical(&[3.0, 4.0], &[3.0, 4.0]),
            Err(GeometryError::ZeroRadius)
        );
        assert!(matches!(
            to_hyperspherical(&[3.0, 4.0, 1.0], &[3.0, 4.0]),
            Err(GeometryError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cartesian_examples() {
        let x = to_cartesian(&PolarVector::new(1.0, vec![PI]), &[0.0, 0.0]).unwrap();
        assert!(close(x[0], -1.0) && close(x[1], 0.0));

        let x = to_cartesian(&PolarVector::new(0.0, vec![1.234]), &[3.0, 4.0]).unwrap();
        assert_eq!(x.as_slice(), &[3.0, 4.0]);

        let x = to_cartesian(&PolarVector::new(2.0, vec![PI / 2.0, 0.0]), &[0.0; 3]).unwrap();
        assert!(close(x[0], 0.0) && close(x[1], 2.0) && close(x[2], 0.0));
    }

    #[test]
    fn jacobian_examples() {
        let j = log_volume_jacobian(&PolarVector::new(2.0, vec![0.3])).unwrap();
        assert!(close(j, 2f64.ln()));
        let j = log_volume_jacobian(&PolarVector::new(1.0, vec![PI / 2.0, 4.0])).unwrap();
        assert!(close(j, 0.0));
        let j = log_volume_jacobian(&PolarVector::new(2.0, vec![PI / 6.0, 1.0])).unwrap();
        assert!((j - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn jacobian_singularities() {
        assert_eq!(
            log_volume_jacobian(&PolarVector::new(0.0, vec![1.0])),
            Err(GeometryError::SingularJacobian)
        );
        assert_eq!(
            log_volume_jacobian(&PolarVector::new(1.0, vec![0.0, 1.0])),
            Err(GeometryError::SingularJacobian)
        );
        assert_eq!(
            log_volume_jacobian(&PolarVector::new(1.0, vec![PI, 1.0])),
            Err(GeometryError::SingularJacobian)
        );
        // the last angle carries exponent zero
        assert!(log_volume_jacobian(&PolarVector::new(1.0, vec![1.0, 0.0])).is_ok());
    }

    #[test]
    fn jacobian_matches_monte_carlo_volume_d3() {
        // volume of the image of [1, 1.5] x [0.5, 1.2] x [0.2, 2.0] under the map,
        // estimated by hit-or-miss in a bounding box
        let (r0, r1, t0, t1, p0, p1) = (1.0, 1.5, 0.5, 1.2, 0.2, 2.0);
        let n = 400;
        let mut quad = 0.0;
        for a in 0..n {
            for b in 0..n {
                let r = r0 + (a as f64 + 0.5) * (r1 - r0) / n as f64;
                let t = t0 + (b as f64 + 0.5) * (t1 - t0) / n as f64;
                let v = PolarVector::new(r, vec![t, 1.0]);
                quad += log_volume_jacobian(&v).unwrap().exp();
            }
        }
        quad *= (r1 - r0) * (t1 - t0) * (p1 - p0) / (n * n) as f64;

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = 2_000_000;
        let mut hits = 0usize;
        for _ in 0..m {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
            let v = to_hyperspherical(&x, &[0.0; 3]).unwrap();
            if v.r >= r0 && v.r <= r1 && v.angles[0] >= t0 && v.angles[0] <= t1
                && v.angles[1] >= p0 && v.angles[1] <= p1
            {
                hits += 1;
            }
        }
        let mc = 27.0 * hits as f64 / m as f64;
        assert!((quad - mc).abs() / mc < 0.005, "quad {quad} mc {mc}");
    }

    #[test]
    fn jacobian_matches_lebesgue_area_d2() {
        // annulus sector area: (r1^2 - r0^2)/2 * dphi
        let (r0, r1, p0, p1) = (0.5, 2.0, 0.3, 2.5);
        let n = 2000;
        let mut quad = 0.0;
        for a in 0..n {
            let r = r0 + (a as f64 + 0.5) * (r1 - r0) / n as f64;
            quad += log_volume_jacobian(&PolarVector::new(r, vec![1.0])).unwrap().exp();
        }
        quad *= (r1 - r0) / n as f64 * (p1 - p0);
        let exact = 0.5 * (r1 * r1 - r0 * r0) * (p1 - p0);
        assert!((quad - exact).abs() / exact < 0.005);
    }

    #[test]
    fn round_trip_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &d in &[2usize, 3, 10, 50] {
            for _ in 0..2000 {
                let a: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-10.0..10.0)).collect();
                let v = to_hyperspherical(&x, &a).unwrap();
                v.validate().unwrap();
                let y = to_cartesian(&v, &a).unwrap();
                let err = x.iter().zip(y.iter()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
                assert!(err < 1e-10, "d={d} err={err}");
            }
        }
    }
}
