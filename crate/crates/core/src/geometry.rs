//! Points of the ball in ℂ^m ≅ ℝ^{2m}, the standard primitive λ and symplectic
//! form ω, and the angular sectors of the last complex coordinate.
//!
//! Real coordinates are interleaved: `(x_1, y_1, ..., x_m, y_m)` with
//! `z_i = x_i + i y_i`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    coords: Vec<f64>,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() || !coords.len().is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "a point needs 2m > 0 real coordinates, got {}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("point coordinate".into()));
        }
        Ok(Self { coords })
    }

    pub fn origin(m: usize) -> Self {
        Self {
            coords: vec![0.0; 2 * m],
        }
    }

    pub fn from_complex(z: &[Complex64]) -> Self {
        let coords = z.iter().flat_map(|c| [c.re, c.im]).collect();
        Self { coords }
    }

    pub fn m(&self) -> usize {
        self.coords.len() / 2
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn z(&self, i: usize) -> Complex64 {
        Complex64::new(self.coords[2 * i], self.coords[2 * i + 1])
    }

    /// Last complex coordinate `z_m`.
    pub fn last(&self) -> Complex64 {
        self.z(self.m() - 1)
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        (0..self.m()).map(|i| self.z(i)).collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coords.iter().map(|c| c * c).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn sub(&self, other: &Point) -> Point {
        Point {
            coords: self.coords.iter().zip(&other.coords).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn add(&self, other: &Point) -> Point {
        Point {
            coords: self.coords.iter().zip(&other.coords).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn scale(&self, k: f64) -> Point {
        Point {
            coords: self.coords.iter().map(|c| c * k).collect(),
        }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Multiplies every complex coordinate by `e^{i angle}`.
    pub fn rotate(&self, angle: f64) -> Point {
        let (s, c) = angle.sin_cos();
        let mut coords = Vec::with_capacity(self.coords.len());
        for pair in self.coords.chunks_exact(2) {
            let (x, y) = (pair[0], pair[1]);
            coords.push(c * x - s * y);
            coords.push(s * x + c * y);
        }
        Point { coords }
    }
}

fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// `λ_z(v) = ½ Σ (x_i v_{y_i} − y_i v_{x_i})`.
pub fn lambda_eval(z: &Point, v: &[f64]) -> Result<f64> {
    check_dims(z.coords.len(), v.len())?;
    Ok(lambda_unchecked(&z.coords, v))
}

pub(crate) fn lambda_unchecked(z: &[f64], v: &[f64]) -> f64 {
    0.5 * z
        .chunks_exact(2)
        .zip(v.chunks_exact(2))
        .map(|(p, w)| p[0] * w[1] - p[1] * w[0])
        .sum::<f64>()
}

/// `ω(u, v) = Σ (u_{x_i} v_{y_i} − u_{y_i} v_{x_i})`.
pub fn omega_pair(u: &[f64], v: &[f64]) -> Result<f64> {
    check_dims(u.len(), v.len())?;
    if !u.len().is_multiple_of(2) {
        return Err(Error::InvalidParameter(
            "tangent vectors must have even dimension".into(),
        ));
    }
    Ok(u.chunks_exact(2)
        .zip(v.chunks_exact(2))
        .map(|(a, b)| a[0] * b[1] - a[1] * b[0])
        .sum())
}

/// Partition of the ball by the argument of the last complex coordinate into
/// `n` open sectors `(k−1)·2π/n < arg z_m < k·2π/n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorGeometry {
    pub m: usize,
    pub n: usize,
}

impl SectorGeometry {
    pub fn new(m: usize, n: usize) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::InvalidParameter(format!(
                "sector geometry needs m, n >= 1 (got m={m}, n={n})"
            )));
        }
        Ok(Self { m, n })
    }

    pub fn width(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    /// Lower and upper wall angles of sector `k` (1-based).
    pub fn walls(&self, k: usize) -> (f64, f64) {
        let w = self.width();
        ((k - 1) as f64 * w, k as f64 * w)
    }
}

fn arg_2pi(w: Complex64) -> f64 {
    let a = w.im.atan2(w.re);
    if a < 0.0 {
        a + 2.0 * PI
    } else {
        a
    }
}

/// Sector index in `1..=n` of the last complex coordinate, or `None` on the
/// deleted axis `z_m = 0` or exactly on a wall.
pub fn sector_membership(geom: &SectorGeometry, z: &Point) -> Option<usize> {
    let w = z.last();
    if w.re == 0.0 && w.im == 0.0 {
        return None;
    }
    let pos = arg_2pi(w) / geom.width();
    let k = pos.floor();
    if pos == k {
        return None;
    }
    // atan2 can land on 2π after the shift when im is -0.0
    let k = (k as usize) % geom.n;
    Some(k + 1)
}

/// Euclidean distance from the point `w` of the `z_m`-plane to the wall ray at
/// angle `wall`, given the angular gap between `arg w` and the ray.
fn wall_distance(radius: f64, gap: f64) -> f64 {
    if gap >= PI / 2.0 {
        radius
    } else {
        radius * gap.sin()
    }
}

/// Distance in the `z_m`-plane from the center's last coordinate to the two
/// walls of its sector, together with the sector index.
pub fn wall_clearance(geom: &SectorGeometry, center: &Point) -> Result<(usize, f64)> {
    let k = sector_membership(geom, center)
        .ok_or_else(|| Error::OutOfDomain("ball center lies on a sector wall or on z_m = 0".into()))?;
    let w = center.last();
    let theta = arg_2pi(w);
    let (lo, hi) = geom.walls(k);
    let r = w.norm();
    let d = wall_distance(r, theta - lo).min(wall_distance(r, hi - theta));
    Ok((k, d))
}

/// Containment margin of the closed ball `B(center, radius)` in `U_k ∩ B(0, outer)`.
pub fn ball_in_sector_margin_within(geom: &SectorGeometry, center: &Point, radius: f64, outer: f64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "radius must be positive, got {radius}"
        )));
    }
    check_dims(2 * geom.m, center.coords.len())?;
    let (_, wall) = wall_clearance(geom, center)?;
    Ok((outer - center.norm() - radius).min(wall - radius))
}

/// Containment margin of the closed ball in `U_k ∩ 𝔹`; positive certifies
/// containment.
pub fn ball_in_sector_margin(geom: &SectorGeometry, center: &Point, radius: f64) -> Result<f64> {
    ball_in_sector_margin_within(geom, center, radius, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    #[test]
    fn lambda_examples() {
        assert_eq!(lambda_eval(&pt(&[1.0, 0.0]), &[0.0, 1.0]).unwrap(), 0.5);
        assert_eq!(lambda_eval(&Point::origin(2), &[0.3, -1.0, 2.0, 5.0]).unwrap(), 0.0);
        let v = lambda_eval(&pt(&[0.3, 0.4, 0.1, 0.2]), &[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!((v - 0.15).abs() < 1e-15);
        assert!(matches!(
            lambda_eval(&pt(&[1.0, 0.0]), &[0.0, 1.0, 0.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn omega_examples() {
        assert_eq!(omega_pair(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        let u = [0.3, -0.2, 0.7, 0.1];
        assert_eq!(omega_pair(&u, &u).unwrap(), 0.0);
        assert!(omega_pair(&u, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn sector_examples() {
        let g = SectorGeometry::new(2, 4).unwrap();
        let w = Complex64::from_polar(0.1, PI / 4.0);
        let z = Point::from_complex(&[Complex64::new(0.2, 0.1), w]);
        assert_eq!(sector_membership(&g, &z), Some(1));
        let on_axis = Point::from_complex(&[Complex64::new(0.2, 0.1), Complex64::new(0.0, 0.0)]);
        assert_eq!(sector_membership(&g, &on_axis), None);

        let g = SectorGeometry::new(1, 8).unwrap();
        let z = Point::from_complex(&[Complex64::from_polar(0.5, 2.0 * PI / 8.0 * 2.5)]);
        assert_eq!(sector_membership(&g, &z), Some(3));
        // wall
        let z = Point::from_complex(&[Complex64::new(0.5, 0.0)]);
        assert_eq!(sector_membership(&g, &z), None);
    }

    #[test]
    fn margin_examples() {
        let g = SectorGeometry::new(1, 4).unwrap();
        let c = Point::from_complex(&[Complex64::from_polar(0.5, PI / 4.0)]);
        let margin = ball_in_sector_margin(&g, &c, 0.1).unwrap();
        let analytic = (1.0f64 - 0.5 - 0.1).min(0.5 * (PI / 4.0).sin() - 0.1);
        assert!((margin - analytic).abs() < 1e-15);

        // independent route: densely sample the boundary circle and measure
        // the smallest distance to either wall line and to the unit circle
        let mut sampled = f64::INFINITY;
        for i in 0..100_000 {
            let a = 2.0 * PI * i as f64 / 100_000.0;
            let p = c.z(0) + Complex64::from_polar(0.1, a);
            let to_walls = p.im.min(p.re);
            sampled = sampled.min(to_walls).min(1.0 - p.norm());
        }
        assert!(margin > 0.0 && sampled > 0.0);
        assert!((sampled - margin).abs() < 1e-6);

        let c = Point::from_complex(&[Complex64::from_polar(0.5, PI / 4.0)]);
        assert!(ball_in_sector_margin(&g, &c, 0.5).unwrap() <= 0.0);
        let on_wall = Point::from_complex(&[Complex64::new(0.5, 0.0)]);
        assert!(ball_in_sector_margin(&g, &on_wall, 0.1).is_err());
    }

    #[test]
    fn wide_sector_uses_half_plane_distance() {
        // n = 1: one sector covering (0, 2π); a gap above π/2 clamps to |w|
        let g = SectorGeometry::new(1, 1).unwrap();
        let c = Point::from_complex(&[Complex64::from_polar(0.3, PI)]);
        let (_, d) = wall_clearance(&g, &c).unwrap();
        assert!((d - 0.3).abs() < 1e-15);
    }

    #[test]
    fn rotation_preserves_norm() {
        let z = pt(&[0.3, 0.4, -0.1, 0.2]);
        let r = z.rotate(1.234);
        assert!((r.norm() - z.norm()).abs() < 1e-15);
    }
}
