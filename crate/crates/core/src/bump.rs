//! Negative bumps `K(z) = −c χ_ε(‖z − z_j‖² / r_j²)` supported on small balls,
//! their flows, and their actions with respect to the standard primitive.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cutoff::{build_chi, CutoffChi, RadialProfile};
use crate::error::{Error, Result};
use crate::geometry::{lambda_unchecked, Point};
use crate::radial::{calabi_radial, rotation_velocity, Isotopy, RadialHamiltonian};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpSpec {
    pub center: Point,
    pub radius: f64,
    pub strength: f64,
    pub chi: CutoffChi,
}

impl BumpSpec {
    pub fn new(center: Point, radius: f64, strength: f64, epsilon: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "bump radius must be positive, got {radius}"
            )));
        }
        if !(strength >= 0.0 && strength.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "bump strength must be >= 0, got {strength}"
            )));
        }
        Ok(Self {
            center,
            radius,
            strength,
            chi: build_chi(epsilon)?,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.chi.delta
    }

    /// Normalized radius squared `‖z − z_j‖² / r_j²` and the offset `z − z_j`.
    fn local(&self, z: &Point) -> (f64, Point) {
        let u = z.sub(&self.center);
        (u.norm_sqr() / (self.radius * self.radius), u)
    }

    pub fn hamiltonian(&self, z: &Point) -> f64 {
        let (q, _) = self.local(z);
        -self.strength * self.chi.value(q)
    }

    /// `h'(‖u‖²)` of the translated Hamiltonian `h(s) = −c χ_ε(s / r²)`.
    fn dh(&self, q: f64) -> f64 {
        -self.strength * self.chi.deriv(q) / (self.radius * self.radius)
    }

    /// Rotation angle about the center at normalized radius squared `q`.
    pub fn angle(&self, t: f64, q: f64) -> f64 {
        -2.0 * self.dh(q) * t
    }

    /// `η(u) = ½ Im Σ u_i · conj(z_{j,i})`, the primitive of `τ*λ − λ` for the
    /// translation `τ(u) = u + z_j`.
    pub fn eta(&self, u: &Point) -> f64 {
        lambda_unchecked(self.center.coords(), u.coords())
    }

    pub fn contains(&self, z: &Point) -> bool {
        self.local(z).0 < 1.0
    }
}

pub fn bump_flow(spec: &BumpSpec, t: f64, z: &Point) -> Point {
    let (q, u) = spec.local(z);
    if q >= 1.0 {
        return z.clone();
    }
    spec.center.add(&u.rotate(spec.angle(t, q)))
}

/// Action of the time-`t` map with respect to the standard primitive:
/// `σ̃(u) + η(ψ̃(u)) − η(u)` with `u = z − z_j`.
pub fn bump_action(spec: &BumpSpec, t: f64, z: &Point) -> f64 {
    let (q, u) = spec.local(z);
    if q >= 1.0 {
        return 0.0;
    }
    let sigma = -spec.strength * t * spec.chi.legendre(q);
    let moved = u.rotate(spec.angle(t, q));
    sigma + spec.eta(&moved) - spec.eta(&u)
}

/// Calabi invariant of `χ_ε(‖z‖²)` on the unit ball; a bump of strength `c`
/// and radius `r` has Calabi invariant `−c r^{2m}` times this value.
pub fn unit_bump_calabi(m: usize, epsilon: f64) -> Result<f64> {
    let chi = build_chi(epsilon)?;
    calabi_radial(&RadialHamiltonian::new(m, Arc::new(chi), 1.0)?)
}

pub fn bump_calabi(spec: &BumpSpec) -> Result<f64> {
    let m = spec.center.m();
    Ok(-spec.strength * spec.radius.powi(2 * m as i32) * unit_bump_calabi(m, spec.epsilon())?)
}

/// The upper bound `−c π^m (1 − 2ε)^{m+1} r^{2m}` for a single bump.
pub fn bump_calabi_bound(spec: &BumpSpec) -> f64 {
    let m = spec.center.m() as i32;
    -spec.strength * PI.powi(m) * (1.0 - 2.0 * spec.epsilon()).powi(m + 1) * spec.radius.powi(2 * m)
}

/// A map with an action, evaluable at any time `t`.
pub trait FlowAction: Sync {
    fn flow(&self, t: f64, z: &Point) -> Point;
    fn action(&self, t: f64, z: &Point) -> f64;
}

/// The identity isotopy.
pub struct Identity;

impl FlowAction for Identity {
    fn flow(&self, _: f64, z: &Point) -> Point {
        z.clone()
    }
    fn action(&self, _: f64, _: &Point) -> f64 {
        0.0
    }
}

impl FlowAction for BumpSpec {
    fn flow(&self, t: f64, z: &Point) -> Point {
        bump_flow(self, t, z)
    }
    fn action(&self, t: f64, z: &Point) -> f64 {
        bump_action(self, t, z)
    }
}

impl FlowAction for RadialHamiltonian {
    fn flow(&self, t: f64, z: &Point) -> Point {
        z.rotate(self.angle(t, z.norm_sqr()))
    }
    fn action(&self, t: f64, z: &Point) -> f64 {
        t * self.scale * self.profile.legendre(z.norm_sqr())
    }
}

/// Action of `outer ∘ inner` at time `t`: `σ_outer ∘ inner + σ_inner`.
pub fn compose_action(outer: &dyn FlowAction, inner: &dyn FlowAction, t: f64, z: &Point) -> f64 {
    outer.action(t, &inner.flow(t, z)) + inner.action(t, z)
}

impl Isotopy for BumpSpec {
    fn position(&self, t: f64, z: &Point) -> Point {
        bump_flow(self, t, z)
    }

    fn velocity(&self, t: f64, z: &Point) -> Vec<f64> {
        let (q, _) = self.local(z);
        if q >= 1.0 {
            return vec![0.0; z.coords().len()];
        }
        let p = bump_flow(self, t, z).sub(&self.center);
        rotation_velocity(p.coords(), self.dh(q))
    }

    fn hamiltonian(&self, _t: f64, p: &Point) -> f64 {
        BumpSpec::hamiltonian(self, p)
    }
}
