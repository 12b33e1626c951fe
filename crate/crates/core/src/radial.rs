//! Radial Hamiltonians `H(z) = h(‖z‖²)` on the unit ball: closed-form flow,
//! action and Calabi invariant, and numerical oracles for the latter two.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::cutoff::{build_chi, CutoffChi, RadialProfile, ZeroProfile};
use crate::error::{Error, Result};
use crate::geometry::{lambda_unchecked, Point};
use crate::quadrature::integrate;
use crate::sampling::{ball_mean, Estimate};

pub const CALABI_TOL: f64 = 1e-10;

#[derive(Clone)]
pub struct RadialHamiltonian {
    pub m: usize,
    pub profile: Arc<dyn RadialProfile>,
    pub scale: f64,
}

impl fmt::Debug for RadialHamiltonian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RadialHamiltonian")
            .field("m", &self.m)
            .field("scale", &self.scale)
            .field("support_end", &self.profile.support_end())
            .finish()
    }
}

impl RadialHamiltonian {
    pub fn new(m: usize, profile: Arc<dyn RadialProfile>, scale: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("dimension m must be at least 1".into()));
        }
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "scale must be finite and >= 0, got {scale}"
            )));
        }
        if scale > 0.0 && !(profile.support_end() < 1.0) {
            return Err(Error::InvalidParameter(
                "profile must vanish on a neighborhood of r^2 = 1".into(),
            ));
        }
        Ok(Self { m, profile, scale })
    }

    pub fn zero(m: usize) -> Result<Self> {
        Self::new(m, Arc::new(ZeroProfile), 0.0)
    }

    /// `H₊ = (π/n) χ_δ(r²)`.
    pub fn plus(m: usize, n: usize, delta: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("n must be positive".into()));
        }
        let chi: CutoffChi = build_chi(delta)?;
        Self::new(m, Arc::new(chi), PI / n as f64)
    }

    pub fn h(&self, s: f64) -> f64 {
        self.scale * self.profile.value(s)
    }

    pub fn dh(&self, s: f64) -> f64 {
        self.scale * self.profile.deriv(s)
    }

    pub fn eval(&self, z: &Point) -> f64 {
        self.h(z.norm_sqr())
    }

    /// Radius squared beyond which `h` vanishes.
    pub fn support_end(&self) -> f64 {
        if self.scale == 0.0 {
            0.0
        } else {
            self.profile.support_end()
        }
    }

    fn check(&self, z: &Point) -> Result<()> {
        if z.m() != self.m {
            return Err(Error::DimensionMismatch {
                expected: 2 * self.m,
                found: z.coords().len(),
            });
        }
        if !(z.norm_sqr() < 1.0) {
            return Err(Error::OutOfDomain(format!("|z| = {} is not < 1", z.norm())));
        }
        Ok(())
    }

    /// Rotation angle of the time-`t` map at radius squared `s`.
    pub fn angle(&self, t: f64, s: f64) -> f64 {
        -2.0 * self.dh(s) * t
    }
}

pub fn radial_flow(hm: &RadialHamiltonian, t: f64, z: &Point) -> Result<Point> {
    hm.check(z)?;
    Ok(z.rotate(hm.angle(t, z.norm_sqr())))
}

/// Action of the time-`t` map: `t (h(r²) − r² h'(r²))`.
pub fn radial_action_t(hm: &RadialHamiltonian, t: f64, z: &Point) -> Result<f64> {
    hm.check(z)?;
    let s = z.norm_sqr();
    Ok(t * hm.scale * hm.profile.legendre(s))
}

/// Action of the time-one map.
pub fn radial_action(hm: &RadialHamiltonian, z: &Point) -> Result<f64> {
    radial_action_t(hm, 1.0, z)
}

/// `2m(m+1)π^m ∫₀¹ r^{2m−1} h(r²) dr`.
pub fn calabi_radial(hm: &RadialHamiltonian) -> Result<f64> {
    if hm.scale == 0.0 {
        return Ok(0.0);
    }
    let m = hm.m as i32;
    let bps: Vec<f64> = hm
        .profile
        .breakpoints()
        .into_iter()
        .filter(|b| *b > 0.0 && *b < 1.0)
        .map(f64::sqrt)
        .collect();
    let q = integrate(|r| r.powi(2 * m - 1) * hm.h(r * r), 0.0, 1.0, &bps, CALABI_TOL)?;
    Ok(2.0 * hm.m as f64 * (hm.m as f64 + 1.0) * PI.powi(m) * q.value)
}

/// Monte-Carlo estimate of `(m+1) ∫_𝔹 H ω^m = (m+1) π^m · mean_𝔹 H`.
pub fn calabi_oracle<F>(h: F, m: usize, samples: usize, seed: u64) -> Estimate
where
    F: Fn(&Point) -> f64 + Sync,
{
    let (mean, se) = ball_mean(h, &vec![0.0; 2 * m], 1.0, samples, seed);
    let k = (m as f64 + 1.0) * PI.powi(m as i32);
    Estimate {
        value: k * mean,
        std_error: k * se,
        samples,
    }
}

/// A Hamiltonian isotopy exposing its trajectories and generating Hamiltonian.
pub trait Isotopy: Sync {
    /// Image of `z` at time `t`.
    fn position(&self, t: f64, z: &Point) -> Point;

    /// Time derivative of the trajectory through `z` at time `t`.
    fn velocity(&self, t: f64, z: &Point) -> Vec<f64> {
        let h = 1e-6;
        let a = self.position(t + h, z);
        let b = self.position(t - h, z);
        a.coords()
            .iter()
            .zip(b.coords())
            .map(|(x, y)| (x - y) / (2.0 * h))
            .collect()
    }

    /// `H_t(p)`.
    fn hamiltonian(&self, t: f64, p: &Point) -> f64;

    /// Times in `(0, t)` where the isotopy is only piecewise smooth.
    fn breaks(&self) -> Vec<f64> {
        Vec::new()
    }
}

impl Isotopy for RadialHamiltonian {
    fn position(&self, t: f64, z: &Point) -> Point {
        z.rotate(self.angle(t, z.norm_sqr()))
    }

    fn velocity(&self, t: f64, z: &Point) -> Vec<f64> {
        let w = self.dh(z.norm_sqr());
        let p = self.position(t, z);
        rotation_velocity(p.coords(), w)
    }

    fn hamiltonian(&self, _t: f64, p: &Point) -> f64 {
        self.eval(p)
    }
}

/// Velocity `−2w·i·u` of the rotation flow at the point with coordinates `u`.
pub(crate) fn rotation_velocity(u: &[f64], w: f64) -> Vec<f64> {
    let mut v = Vec::with_capacity(u.len());
    for pair in u.chunks_exact(2) {
        v.push(2.0 * w * pair[1]);
        v.push(-2.0 * w * pair[0]);
    }
    v
}

/// Runs `first` on `[0, 1]`, then `second` on `[1, 2]` from where `first` ended.
pub struct Concatenation<'a, A: Isotopy + ?Sized, B: Isotopy + ?Sized> {
    pub first: &'a A,
    pub second: &'a B,
}

impl<A: Isotopy + ?Sized, B: Isotopy + ?Sized> Isotopy for Concatenation<'_, A, B> {
    fn position(&self, t: f64, z: &Point) -> Point {
        if t <= 1.0 {
            self.first.position(t, z)
        } else {
            self.second.position(t - 1.0, &self.first.position(1.0, z))
        }
    }

    fn velocity(&self, t: f64, z: &Point) -> Vec<f64> {
        if t <= 1.0 {
            self.first.velocity(t, z)
        } else {
            self.second.velocity(t - 1.0, &self.first.position(1.0, z))
        }
    }

    fn hamiltonian(&self, t: f64, p: &Point) -> f64 {
        if t <= 1.0 {
            self.first.hamiltonian(t, p)
        } else {
            self.second.hamiltonian(t - 1.0, p)
        }
    }

    fn breaks(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.first.breaks();
        b.push(1.0);
        b.extend(self.second.breaks().into_iter().map(|x| x + 1.0));
        b
    }
}

/// `∫ λ` along `s ↦ φ^s(z)` plus `∫ H_s(φ^s(z)) ds` over `[0, t]`, by
/// composite Simpson on each smooth piece with about `steps` panels in total.
pub fn action_oracle(iso: &dyn Isotopy, t: f64, z: &Point, steps: usize) -> Result<f64> {
    if steps < 100 {
        return Err(Error::InvalidParameter(format!(
            "oracle needs >= 100 steps, got {steps}"
        )));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if t > 0.0 { (0.0, t, 1.0) } else { (t, 0.0, -1.0) };
    let mut edges = vec![lo];
    edges.extend(iso.breaks().into_iter().filter(|b| *b > lo && *b < hi));
    edges.push(hi);
    let integrand = |s: f64| {
        let p = iso.position(s, z);
        let v = iso.velocity(s, z);
        lambda_unchecked(p.coords(), &v) + iso.hamiltonian(s, &p)
    };
    let mut total = 0.0;
    for w in edges.windows(2) {
        let share = ((steps as f64) * (w[1] - w[0]) / (hi - lo)).ceil() as usize;
        let k = (share.max(2) + 1) & !1;
        let h = (w[1] - w[0]) / k as f64;
        // one-sided values at the piece ends
        let nudge = 1e-13 * (w[1] - w[0]);
        let mut acc = integrand(w[0] + nudge) + integrand(w[1] - nudge);
        for i in 1..k {
            let c = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += c * integrand(w[0] + i as f64 * h);
        }
        total += acc * h / 3.0;
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("action oracle integral".into()));
    }
    Ok(sign * total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::omega_pair;
    use crate::sampling::{chunk_rng, uniform_in_ball};
    use proptest::prelude::*;

    #[test]
    fn bulk_rotation_of_plus() {
        let hp = RadialHamiltonian::plus(1, 4, 0.1).unwrap();
        let z = Point::new(vec![0.5, 0.0]).unwrap();
        let w = radial_flow(&hp, 1.0, &z).unwrap();
        assert!((w.coords()[0]).abs() < 1e-15);
        assert!((w.coords()[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn boundary_region_is_fixed() {
        let hp = RadialHamiltonian::plus(2, 8, 0.1).unwrap();
        let z = Point::new(vec![0.0, 0.0, 0.97, 0.1]).unwrap();
        assert_eq!(radial_flow(&hp, 1.0, &z).unwrap(), z);
        assert_eq!(radial_action(&hp, &z).unwrap(), 0.0);
        assert!(radial_flow(&hp, 1.0, &Point::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap()).is_err());
    }

    #[test]
    fn action_at_origin() {
        let hp = RadialHamiltonian::plus(2, 8, 0.1).unwrap();
        let a = radial_action(&hp, &Point::origin(2)).unwrap();
        assert!((a - PI / 8.0 * 0.9).abs() < 1e-15);
    }

    #[test]
    fn zero_hamiltonian() {
        let z0 = RadialHamiltonian::zero(2).unwrap();
        assert_eq!(calabi_radial(&z0).unwrap(), 0.0);
        let e = calabi_oracle(|p| z0.eval(p), 2, 10_000, 1);
        assert_eq!((e.value, e.std_error), (0.0, 0.0));
        let z = Point::new(vec![0.1, 0.2, 0.3, 0.1]).unwrap();
        assert_eq!(action_oracle(&z0, 1.0, &z, 100).unwrap(), 0.0);
    }

    #[test]
    fn constant_integrand_oracle() {
        for m in 1..=3 {
            let e = calabi_oracle(|_| 1.0, m, 10_000, 5);
            assert!((e.value - (m as f64 + 1.0) * PI.powi(m as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_matches_closed_form() {
        let hp = RadialHamiltonian::plus(2, 8, 0.1).unwrap();
        let mut rng = chunk_rng(11, 0);
        for _ in 0..50 {
            let z = uniform_in_ball(&mut rng, &[0.0; 4], 1.0);
            let o = action_oracle(&hp, 1.0, &z, 10_000).unwrap();
            let c = radial_action(&hp, &z).unwrap();
            assert!((o - c).abs() < 1e-6, "{o} vs {c}");
        }
        let z = Point::new(vec![0.3, 0.1, 0.0, 0.2]).unwrap();
        assert_eq!(action_oracle(&hp, 0.0, &z, 100).unwrap(), 0.0);
    }

    #[test]
    fn calabi_bracket_and_oracle() {
        for m in 1..=2 {
            let n = 8;
            let hp = RadialHamiltonian::plus(m, n, 0.1).unwrap();
            let cal = calabi_radial(&hp).unwrap();
            let top = (m as f64 + 1.0) * PI.powi(m as i32 + 1) / n as f64;
            assert!((0.0..=top).contains(&cal));
            let e = calabi_oracle(|p| hp.eval(p), m, 200_000, 3);
            assert!(e.agrees_with(cal, 3.0), "{cal} vs {e:?}");
        }
    }

    #[test]
    fn flow_is_symplectic() {
        let hp = RadialHamiltonian::plus(2, 5, 0.2).unwrap();
        let z = Point::new(vec![0.3, -0.2, 0.4, 0.5]).unwrap();
        let u = [0.3, 0.1, -0.7, 0.2];
        let v = [-0.1, 0.5, 0.2, 0.9];
        let h = 1e-6;
        let push = |d: &[f64]| -> Vec<f64> {
            let a = z.add(&Point::new(d.iter().map(|x| x * h).collect()).unwrap());
            let b = z.sub(&Point::new(d.iter().map(|x| x * h).collect()).unwrap());
            let fa = radial_flow(&hp, 0.7, &a).unwrap();
            let fb = radial_flow(&hp, 0.7, &b).unwrap();
            fa.coords()
                .iter()
                .zip(fb.coords())
                .map(|(p, q)| (p - q) / (2.0 * h))
                .collect()
        };
        let before = omega_pair(&u, &v).unwrap();
        let after = omega_pair(&push(&u), &push(&v)).unwrap();
        assert!((before - after).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn group_law_and_norm(x in prop::collection::vec(-0.5f64..0.5, 4), t in -2.0f64..2.0, s in -2.0f64..2.0) {
            let hp = RadialHamiltonian::plus(2, 7, 0.15).unwrap();
            let z = Point::new(x).unwrap();
            let a = radial_flow(&hp, t, &radial_flow(&hp, s, &z).unwrap()).unwrap();
            let b = radial_flow(&hp, t + s, &z).unwrap();
            prop_assert!(a.distance(&b) < 1e-12);
            prop_assert!((a.norm() - z.norm()).abs() < 1e-15);
        }

        #[test]
        fn plus_action_range(x in prop::collection::vec(-0.49f64..0.49, 4), n in 2usize..64, delta in 0.01f64..0.49) {
            let hp = RadialHamiltonian::plus(2, n, delta).unwrap();
            let a = radial_action(&hp, &Point::new(x).unwrap()).unwrap();
            prop_assert!(a >= 0.0 && a <= PI / n as f64 * (1.0 - delta));
        }
    }
}
