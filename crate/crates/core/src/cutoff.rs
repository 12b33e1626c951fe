//! Scalar profiles: the cutoff χ_δ and the collar profiles `v` and `û`.
//!
//! Every profile carries closed-form first and second derivatives. The joins
//! between closed-form pieces are explicit and C¹: a quadratic for χ_δ, a
//! quadratic Bézier corner for `û`, and an integrated positive slope density
//! for `v`.

use serde::{Deserialize, Serialize};

use crate::certificate::{Certificate, Check, Evidence};
use crate::error::{Error, Result};

/// A function of one real variable with explicit derivatives.
pub trait RadialProfile: Send + Sync {
    fn value(&self, s: f64) -> f64;
    fn deriv(&self, s: f64) -> f64;
    fn second(&self, s: f64) -> f64;
    /// `p(s) − s·p'(s)`.
    fn legendre(&self, s: f64) -> f64 {
        self.value(s) - s * self.deriv(s)
    }
    /// Points where the second derivative may jump.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
    /// Infimum of the set on which the profile vanishes identically (for
    /// compactly supported cutoffs).
    fn support_end(&self) -> f64 {
        f64::INFINITY
    }
}

/// The identically zero profile.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ZeroProfile;

impl RadialProfile for ZeroProfile {
    fn value(&self, _: f64) -> f64 {
        0.0
    }
    fn deriv(&self, _: f64) -> f64 {
        0.0
    }
    fn second(&self, _: f64) -> f64 {
        0.0
    }
    fn support_end(&self) -> f64 {
        0.0
    }
}

/// χ_δ: equal to `1 − δ − s` up to `join`, a quadratic that reaches zero
/// with zero slope at `end`, and zero afterwards.
///
/// With `end = 1 − δ/2` and `join = 1 − 3δ/2` the quadratic piece is
/// `(end − s)² / (2(end − join))`, so χ is C¹, its slope lies in `[−1, 0]`
/// and `χ − sχ'` decreases from `1 − δ` to `0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffChi {
    pub delta: f64,
    pub join: f64,
    pub end: f64,
}

pub fn build_chi(delta: f64) -> Result<CutoffChi> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "cutoff parameter must lie in (0, 1/2), got {delta}"
        )));
    }
    Ok(CutoffChi {
        delta,
        join: 1.0 - 1.5 * delta,
        end: 1.0 - 0.5 * delta,
    })
}

impl CutoffChi {
    fn width(&self) -> f64 {
        self.end - self.join
    }
}

impl RadialProfile for CutoffChi {
    fn value(&self, s: f64) -> f64 {
        if s <= self.join {
            1.0 - self.delta - s
        } else if s < self.end {
            let d = self.end - s;
            d * d / (2.0 * self.width())
        } else {
            0.0
        }
    }

    fn deriv(&self, s: f64) -> f64 {
        if s <= self.join {
            -1.0
        } else if s < self.end {
            -(self.end - s) / self.width()
        } else {
            0.0
        }
    }

    fn second(&self, s: f64) -> f64 {
        if s > self.join && s < self.end {
            1.0 / self.width()
        } else {
            0.0
        }
    }

    fn legendre(&self, s: f64) -> f64 {
        if s <= self.join {
            1.0 - self.delta
        } else if s < self.end {
            (self.end * self.end - s * s) / (2.0 * self.width())
        } else {
            0.0
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        vec![self.join, self.end]
    }

    fn support_end(&self) -> f64 {
        self.end
    }
}

/// Worst-case violations of the four defining properties of χ_δ.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ChiViolations {
    pub linear_piece: f64,
    pub sandwich: f64,
    pub slope: f64,
    pub action_range: f64,
    pub derivative_consistency: f64,
}

const FD_STEP: f64 = 1e-6;

fn central_difference(f: impl Fn(f64) -> f64, s: f64, h: f64) -> f64 {
    (f(s + h) - f(s - h)) / (2.0 * h)
}

fn near_breakpoint(s: f64, bps: &[f64], h: f64) -> bool {
    bps.iter().any(|b| (s - b).abs() <= 2.0 * h)
}

/// Measures the four χ_δ properties (plus derivative consistency) of an
/// arbitrary profile on the uniform grid of `[0, 1]` with `grid` intervals.
pub fn chi_violations(p: &dyn RadialProfile, delta: f64, grid: usize) -> (ChiViolations, [f64; 5]) {
    let mut v = ChiViolations::default();
    let mut at = [0.0; 5];
    let bps = p.breakpoints();
    let bump = |slot: &mut f64, idx: usize, x: f64, s: f64, at: &mut [f64; 5]| {
        if x > *slot {
            *slot = x;
            at[idx] = s;
        }
    };
    for i in 0..=grid {
        let s = i as f64 / grid as f64;
        let x = p.value(s);
        let d = p.deriv(s);
        if s <= 1.0 - 2.0 * delta {
            bump(&mut v.linear_piece, 0, (x - (1.0 - delta - s)).abs(), s, &mut at);
            bump(&mut v.slope, 2, (d + 1.0).abs(), s, &mut at);
        }
        let lower = (1.0 - delta - s).max(0.0);
        let upper = ((1.0 - delta) * (1.0 - s)).max(0.0);
        bump(&mut v.sandwich, 1, (lower - x).max(x - upper), s, &mut at);
        bump(&mut v.slope, 2, (-1.0 - d).max(d), s, &mut at);
        let q = x - s * d;
        bump(&mut v.action_range, 3, (-q).max(q - (1.0 - delta)), s, &mut at);
        if !near_breakpoint(s, &bps, FD_STEP) {
            let fd = central_difference(|t| p.value(t), s, FD_STEP);
            bump(&mut v.derivative_consistency, 4, (fd - d).abs(), s, &mut at);
        }
    }
    (v, at)
}

/// Grid verification of χ_δ. Linear-piece checks use zero tolerance, the
/// remaining inequalities allow `1e−12` of rounding slack.
pub fn verify_chi(chi: &CutoffChi, grid: usize) -> Certificate {
    verify_chi_profile(chi, chi.delta, grid)
}

pub fn verify_chi_profile(p: &dyn RadialProfile, delta: f64, grid: usize) -> Certificate {
    let (v, at) = chi_violations(p, delta, grid);
    let mut cert = Certificate::new("chi").with_params(&serde_json::json!({
        "delta": delta,
        "grid": grid,
    }));
    let ev = |i: usize| Evidence::grid(grid).with_argmin(vec![at[i]]);
    cert.push(Check::at_most("chi_linear_piece", v.linear_piece, 0.0, 0.0, ev(0)));
    cert.push(Check::at_most("chi_sandwich", v.sandwich, 0.0, 1e-12, ev(1)));
    cert.push(Check::at_most("chi_slope", v.slope, 0.0, 1e-12, ev(2)));
    cert.push(Check::at_most("chi_action_range", v.action_range, 0.0, 1e-12, ev(3)));
    cert.push(Check::at_most(
        "chi_derivative_consistency",
        v.derivative_consistency,
        0.0,
        1e-6,
        ev(4).with_note("central differences, step 1e-8, away from breakpoints"),
    ));
    cert
}

/// Quadratic Bézier arc used as a graph `y(x)`; requires `x0 < x1 < x2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadBezier {
    pub p0: [f64; 2],
    pub p1: [f64; 2],
    pub p2: [f64; 2],
}

impl QuadBezier {
    fn param(&self, x: f64) -> f64 {
        let a = self.p0[0] - 2.0 * self.p1[0] + self.p2[0];
        let b = 2.0 * (self.p1[0] - self.p0[0]);
        let c = self.p0[0] - x;
        let disc = (b * b - 4.0 * a * c).max(0.0);
        (-2.0 * c / (b + disc.sqrt())).clamp(0.0, 1.0)
    }

    /// `(y, dy/dx, d²y/dx²)` at abscissa `x`.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let t = self.param(x);
        let ax = self.p0[0] - 2.0 * self.p1[0] + self.p2[0];
        let bx = 2.0 * (self.p1[0] - self.p0[0]);
        let ay = self.p0[1] - 2.0 * self.p1[1] + self.p2[1];
        let by = 2.0 * (self.p1[1] - self.p0[1]);
        let y = (ay * t + by) * t + self.p0[1];
        let dx = 2.0 * ax * t + bx;
        let dy = 2.0 * ay * t + by;
        let d2 = (2.0 * ay * dx - 2.0 * ax * dy) / (dx * dx * dx);
        (y, dy / dx, d2)
    }

    /// Corner through the intersection of the tangent lines at two points,
    /// or `None` when the intersection does not lie strictly between them.
    pub fn corner(x0: f64, y0: f64, k0: f64, x2: f64, y2: f64, k2: f64) -> Option<Self> {
        let den = k0 - k2;
        if den == 0.0 {
            return None;
        }
        let x1 = (y2 - y0 + k0 * x0 - k2 * x2) / den;
        if !(x1 > x0 && x1 < x2) {
            return None;
        }
        let y1 = y0 + k0 * (x1 - x0);
        Some(Self {
            p0: [x0, y0],
            p1: [x1, y1],
            p2: [x2, y2],
        })
    }
}

/// Decreasing C¹ arc from `(x0, y0)` to `(x1, y1)` whose slope is
/// `−(y0 − y1)·d(x)` for a positive piecewise-linear density `d` with unit
/// integral. `d` equals `d0` at `x0`, ramps to the plateau `p` over a length
/// `a`, and ramps to `d1` over the final length `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeBlend {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub d0: f64,
    pub d1: f64,
    pub a: f64,
    pub p: f64,
}

impl SlopeBlend {
    /// Requires `x0 < x1`, `y0 > y1` and negative end slopes `k0`, `k1`.
    pub fn new(x0: f64, y0: f64, k0: f64, x1: f64, y1: f64, k1: f64) -> Option<Self> {
        let drop = y0 - y1;
        let h = x1 - x0;
        if !(h > 0.0 && drop > 0.0 && k0 < 0.0 && k1 < 0.0) {
            return None;
        }
        let d0 = -k0 / drop;
        let d1 = -k1 / drop;
        let a = (h / 3.0).min(0.5 / (d0 + d1));
        let p = (1.0 - 0.5 * a * (d0 + d1)) / (h - a);
        Some(Self {
            x0,
            x1,
            y0,
            y1,
            d0,
            d1,
            a,
            p,
        })
    }

    fn density(&self, x: f64) -> (f64, f64, f64) {
        // (d, d', ∫_{x0}^{x} d)
        let h = self.x1 - self.x0;
        let u = (x - self.x0).clamp(0.0, h);
        let a = self.a;
        if u <= a {
            let k = (self.p - self.d0) / a;
            (self.d0 + k * u, k, self.d0 * u + 0.5 * k * u * u)
        } else if u <= h - a {
            (self.p, 0.0, 0.5 * a * (self.d0 + self.p) + self.p * (u - a))
        } else {
            let v = u - (h - a);
            let k = (self.d1 - self.p) / a;
            let base = 0.5 * a * (self.d0 + self.p) + self.p * (h - 2.0 * a);
            (self.p + k * v, k, base + self.p * v + 0.5 * k * v * v)
        }
    }

    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let drop = self.y0 - self.y1;
        let (d, dd, integral) = self.density(x);
        (self.y0 - drop * integral, -drop * d, -drop * dd)
    }

    pub fn breakpoints(&self) -> [f64; 4] {
        [self.x0, self.x0 + self.a, self.x1 - self.a, self.x1]
    }
}

/// A C¹ join between two closed-form pieces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Join {
    Corner(QuadBezier),
    Slope(SlopeBlend),
}

impl Join {
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        match self {
            Join::Corner(b) => b.eval(x),
            Join::Slope(s) => s.eval(x),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            Join::Corner(b) => vec![b.p0[0], b.p2[0]],
            Join::Slope(s) => s.breakpoints().to_vec(),
        }
    }
}

/// `v(r) = C(1 − r²)` on `[0, ρ]`, a decreasing join on `[ρ, r_a]`, and
/// `v(r) = 1/r` on `[r_a, ρ']`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileV {
    pub rho: f64,
    pub rho_prime: f64,
    pub c: f64,
    pub r_a: f64,
    pub join: Join,
}

pub fn build_v(rho: f64, rho_prime: f64, c: f64) -> Result<ProfileV> {
    if !(rho > 0.0 && rho < rho_prime && rho_prime.is_finite() && c > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < rho < rho' and C > 0 (rho={rho}, rho'={rho_prime}, C={c})"
        )));
    }
    let a = c * (1.0 - rho * rho);
    if !(a > 1.0 / rho_prime) {
        return Err(Error::InfeasibleJoin(format!(
            "C(1-rho^2) = {a} must exceed 1/rho' = {} for a decreasing join",
            1.0 / rho_prime
        )));
    }
    let r_a = 0.5 * (rho.max(1.0 / a) + rho_prime);
    let join = SlopeBlend::new(rho, a, -2.0 * c * rho, r_a, 1.0 / r_a, -1.0 / (r_a * r_a))
        .ok_or_else(|| Error::InfeasibleJoin(format!("degenerate join window at rho={rho}")))?;
    Ok(ProfileV {
        rho,
        rho_prime,
        c,
        r_a,
        join: Join::Slope(join),
    })
}

impl RadialProfile for ProfileV {
    fn value(&self, r: f64) -> f64 {
        if r <= self.rho {
            self.c * (1.0 - r * r)
        } else if r >= self.r_a {
            1.0 / r
        } else {
            self.join.eval(r).0
        }
    }

    fn deriv(&self, r: f64) -> f64 {
        if r <= self.rho {
            -2.0 * self.c * r
        } else if r >= self.r_a {
            -1.0 / (r * r)
        } else {
            self.join.eval(r).1
        }
    }

    fn second(&self, r: f64) -> f64 {
        if r <= self.rho {
            -2.0 * self.c
        } else if r >= self.r_a {
            2.0 / (r * r * r)
        } else {
            self.join.eval(r).2
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.join.breakpoints()
    }
}

/// `û(r) = r` on `[0, ρ]`, a Bézier corner on `[ρ, r_b]`, and `û ≡ b` beyond.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileUhat {
    pub rho: f64,
    pub rho_prime: f64,
    pub b: f64,
    pub r_b: f64,
    pub join: Join,
}

pub fn build_uhat(rho: f64, rho_prime: f64, b: f64) -> Result<ProfileUhat> {
    if !(rho > 0.0 && rho < rho_prime && rho_prime.is_finite() && b > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < rho < rho' and b > 0 (rho={rho}, rho'={rho_prime}, b={b})"
        )));
    }
    if !(b > rho && b < rho_prime) {
        return Err(Error::InfeasibleJoin(format!(
            "a monotone join from r to the constant b needs rho < b < rho' (b={b})"
        )));
    }
    // Tangent lines y = r and y = b meet at r = b; end the corner halfway to ρ'.
    let r_b = 0.5 * (b + rho_prime);
    let join = Join::Corner(QuadBezier {
        p0: [rho, rho],
        p1: [b, b],
        p2: [r_b, b],
    });
    Ok(ProfileUhat {
        rho,
        rho_prime,
        b,
        r_b,
        join,
    })
}

impl RadialProfile for ProfileUhat {
    fn value(&self, r: f64) -> f64 {
        if r <= self.rho {
            r
        } else if r >= self.r_b {
            self.b
        } else {
            self.join.eval(r).0
        }
    }

    fn deriv(&self, r: f64) -> f64 {
        if r <= self.rho {
            1.0
        } else if r >= self.r_b {
            0.0
        } else {
            self.join.eval(r).1
        }
    }

    fn second(&self, r: f64) -> f64 {
        if r <= self.rho || r >= self.r_b {
            0.0
        } else {
            self.join.eval(r).2
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.join.breakpoints()
    }
}

/// Grid verification of `v`: closed forms, strict decrease, derivative
/// consistency.
pub fn verify_v(v: &ProfileV, grid: usize) -> Certificate {
    let mut cert = Certificate::new("profile_v").with_params(v);
    let mut closed = 0.0f64;
    let mut max_slope = f64::NEG_INFINITY;
    let mut fd_err = 0.0f64;
    let bps = v.breakpoints();
    for i in 1..=grid {
        let r = v.rho_prime * i as f64 / grid as f64;
        let d = v.deriv(r);
        max_slope = max_slope.max(d);
        if r <= v.rho {
            closed = closed.max((v.value(r) - v.c * (1.0 - r * r)).abs());
        } else if r >= v.r_a {
            closed = closed.max((v.value(r) - 1.0 / r).abs());
        }
        if !near_breakpoint(r, &bps, FD_STEP) && r + FD_STEP <= v.rho_prime {
            fd_err = fd_err.max((central_difference(|t| v.value(t), r, FD_STEP) - d).abs());
        }
    }
    cert.push(Check::at_most("v_closed_forms", closed, 0.0, 0.0, Evidence::grid(grid)));
    cert.push(Check::below("v_decreasing", max_slope, 0.0, Evidence::grid(grid)));
    cert.push(Check::at_most(
        "v_derivative_consistency",
        fd_err,
        0.0,
        1e-6,
        Evidence::grid(grid),
    ));
    cert
}

/// Grid verification of `û`: closed forms, monotonicity, derivative
/// consistency.
pub fn verify_uhat(u: &ProfileUhat, grid: usize) -> Certificate {
    let mut cert = Certificate::new("profile_uhat").with_params(u);
    let mut closed = 0.0f64;
    let mut min_slope = f64::INFINITY;
    let mut fd_err = 0.0f64;
    let bps = u.breakpoints();
    let span = 1.5 * u.rho_prime;
    for i in 0..=grid {
        let r = span * i as f64 / grid as f64;
        let d = u.deriv(r);
        min_slope = min_slope.min(d);
        if r <= u.rho {
            closed = closed.max((u.value(r) - r).abs());
        } else if r >= u.rho_prime {
            closed = closed.max((u.value(r) - u.b).abs());
        }
        if r > FD_STEP && !near_breakpoint(r, &bps, FD_STEP) {
            fd_err = fd_err.max((central_difference(|t| u.value(t), r, FD_STEP) - d).abs());
        }
    }
    cert.push(Check::at_most(
        "uhat_closed_forms",
        closed,
        0.0,
        0.0,
        Evidence::grid(grid),
    ));
    cert.push(Check::at_least(
        "uhat_monotone",
        min_slope,
        0.0,
        0.0,
        Evidence::grid(grid),
    ));
    cert.push(Check::at_most(
        "uhat_derivative_consistency",
        fd_err,
        0.0,
        1e-6,
        Evidence::grid(grid),
    ));
    cert
}
