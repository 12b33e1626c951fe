//! Radial profile curves `γ = f + i g` on `[0, ρ]` for the collar of an open
//! book binding, their contact-positivity density, the first return time
//! `τ(r)`, the collar volume chain, and the final volume/systolic budget.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificate::{Certificate, Check, Evidence};
use crate::error::{Error, Result};
use crate::quadrature::integrate;

/// Values and first two derivatives of `f` and `g` at one radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveJet {
    pub f: [f64; 3],
    pub g: [f64; 3],
}

pub trait Curve: Sync {
    fn jet(&self, r: f64) -> CurveJet;
    fn rho(&self) -> f64;
    /// Limit of the contact density at `r → 0`, when known in closed form.
    fn binding_limit(&self, _n: usize) -> Option<f64> {
        None
    }
}

/// `γ` with `f = r²`, `g = 1 + δ − r²` on `[0, r₀]`; a quintic `g` on
/// `[r₀, r₁]` with `f = 1 − φ(g − δ)`, where `φ` is a C² rounding of
/// `max(x, 0)` on `[−w, w]`; and `f = 1`, `g = s(1 − r²)` on `[r₁, ρ]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileCurve {
    pub s: f64,
    pub delta: f64,
    pub rho: f64,
    pub r0: f64,
    pub r1: f64,
    pub corner_half_width: f64,
    /// Coefficients of `g` in `t = (r − r₀)/(r₁ − r₀)`.
    pub quintic: [f64; 6],
}

/// `(φ, φ', φ'')` of the rounded ramp.
fn ramp(x: f64, w: f64) -> [f64; 3] {
    if x <= -w {
        return [0.0, 0.0, 0.0];
    }
    if x >= w {
        return [x, 1.0, 0.0];
    }
    let u = x / w;
    let q = 1.0 - u * u;
    let d2 = 15.0 / (16.0 * w) * q * q;
    let d1 = 0.5 + 15.0 / 16.0 * (u - 2.0 * u.powi(3) / 3.0 + u.powi(5) / 5.0);
    let v = w * ((u + 1.0) / 2.0 + 15.0 / 16.0 * (u * u / 2.0 - u.powi(4) / 6.0 + u.powi(6) / 30.0 - 11.0 / 30.0));
    [v, d1, d2]
}

fn quintic_hermite(h: f64, a: [f64; 3], b: [f64; 3]) -> [f64; 6] {
    let c0 = a[0];
    let c1 = h * a[1];
    let c2 = h * h * a[2] / 2.0;
    let big_g = b[0] - (c0 + c1 + c2);
    let big_d = h * b[1] - (c1 + 2.0 * c2);
    let big_s = h * h * b[2] - 2.0 * c2;
    [
        c0,
        c1,
        c2,
        10.0 * big_g - 4.0 * big_d + big_s / 2.0,
        -15.0 * big_g + 7.0 * big_d - big_s,
        6.0 * big_g - 3.0 * big_d + big_s / 2.0,
    ]
}

impl ProfileCurve {
    fn g_connector(&self, r: f64) -> [f64; 3] {
        let h = self.r1 - self.r0;
        let t = (r - self.r0) / h;
        let c = &self.quintic;
        let v = c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * c[5]))));
        let d1 = c[1] + t * (2.0 * c[2] + t * (3.0 * c[3] + t * (4.0 * c[4] + t * 5.0 * c[5])));
        let d2 = 2.0 * c[2] + t * (6.0 * c[3] + t * (12.0 * c[4] + t * 20.0 * c[5]));
        [v, d1 / h, d2 / (h * h)]
    }

    /// `τ(r) = (−f'g + f g') / (g'(1 + δ))`.
    pub fn tau(&self, r: f64) -> f64 {
        if r <= self.r0 {
            return 1.0;
        }
        if r >= self.r1 {
            return 1.0 / (1.0 + self.delta);
        }
        let j = self.jet(r);
        (-j.f[1] * j.g[0] + j.f[0] * j.g[1]) / (j.g[1] * (1.0 + self.delta))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("curve serializes")
    }
}

impl Curve for ProfileCurve {
    fn jet(&self, r: f64) -> CurveJet {
        if r <= self.r0 {
            return CurveJet {
                f: [r * r, 2.0 * r, 2.0],
                g: [1.0 + self.delta - r * r, -2.0 * r, -2.0],
            };
        }
        if r >= self.r1 {
            return CurveJet {
                f: [1.0, 0.0, 0.0],
                g: [self.s * (1.0 - r * r), -2.0 * self.s * r, -2.0 * self.s],
            };
        }
        let g = self.g_connector(r);
        let p = ramp(g[0] - self.delta, self.corner_half_width);
        CurveJet {
            f: [1.0 - p[0], -p[1] * g[1], -p[2] * g[1] * g[1] - p[1] * g[2]],
            g,
        }
    }

    fn rho(&self) -> f64 {
        self.rho
    }

    fn binding_limit(&self, n: usize) -> Option<f64> {
        Some(2.0 * (n as f64 - 1.0) / ((2.0 * PI).powi(n as i32 + 1) * (1.0 + self.delta)))
    }
}

pub const GAMMA_GRID: usize = 10_000;
const RETRIES: usize = 24;

fn shape_violation(curve: &dyn Curve, grid: usize) -> (String, f64) {
    let rho = curve.rho();
    let mut worst = (String::new(), f64::NEG_INFINITY);
    for i in 1..=grid {
        let r = rho * i as f64 / grid as f64;
        let j = curve.jet(r);
        for (name, v) in [
            ("g2", j.g[1]),
            ("g4", j.g[1] * j.f[0] - j.g[0] * j.f[1]),
            (
                "g5",
                (j.g[2] * j.f[1] - j.f[2] * j.g[1]) / (j.g[1] * j.g[1] + j.f[1] * j.f[1]) - 1e-12,
            ),
        ] {
            if v > worst.1 {
                worst = (name.to_string(), v);
            }
        }
    }
    worst
}

/// Builds an admissible profile curve, or reports the inequality that cannot
/// be met.
pub fn build_gamma(s: f64, delta: f64, rho: f64) -> Result<ProfileCurve> {
    for (name, v) in [("s", s), ("delta", delta), ("rho", rho)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
        }
    }
    if rho >= 1.0 {
        return Err(Error::InvalidParameter(format!("rho must be below 1, got {rho}")));
    }
    // (g3): g(r₀) − s(1 − ρ²) ≤ 2δ with g(r₀) = 1 + δ − r₀²
    let r0_min_sq = 1.0 - delta - s * (1.0 - rho * rho);
    if r0_min_sq >= rho * rho {
        return Err(Error::NoAdmissibleCurve {
            check: "g3".into(),
            violation: r0_min_sq.sqrt() - rho,
            detail: format!(
                "the straight arc must reach r0 >= {:.6} to keep g(r0) - s(1 - rho^2) <= 2 delta, beyond rho = {rho}",
                r0_min_sq.sqrt()
            ),
        });
    }
    if s * (1.0 - rho * rho) >= delta {
        return Err(Error::NoAdmissibleCurve {
            check: "g1".into(),
            violation: s * (1.0 - rho * rho) - delta,
            detail: "the final arc s(1 - r^2) does not pass below the corner at g = delta".into(),
        });
    }
    let lo = r0_min_sq.max(0.0).sqrt();
    let mut worst = ("none".to_string(), f64::NEG_INFINITY);
    for attempt in 0..RETRIES {
        let r0 = lo + (rho - lo) * [0.02, 0.1, 0.25][attempt % 3];
        let r1 = r0 + (rho - r0) * [0.9, 0.7, 0.5, 0.3][(attempt / 3) % 4];
        let g0 = 1.0 + delta - r0 * r0;
        let g1 = s * (1.0 - r1 * r1);
        if g1 >= delta {
            continue;
        }
        let w = 0.9 * (g0 - delta).min(delta - g1) * 0.5f64.powi((attempt / 12) as i32);
        let curve = ProfileCurve {
            s,
            delta,
            rho,
            r0,
            r1,
            corner_half_width: w,
            quintic: quintic_hermite(r1 - r0, [g0, -2.0 * r0, -2.0], [g1, -2.0 * s * r1, -2.0 * s]),
        };
        let v = shape_violation(&curve, GAMMA_GRID);
        if v.1 < 0.0 {
            return Ok(curve);
        }
        if v.1 > worst.1 {
            worst = v;
        }
    }
    Err(Error::NoAdmissibleCurve {
        check: worst.0,
        violation: worst.1,
        detail: format!("no connector passed after {RETRIES} attempts"),
    })
}

/// (g2), (g4), (g5) on a grid of `(0, ρ]`, for any curve.
pub fn verify_shape(curve: &dyn Curve, grid: usize) -> Certificate {
    let rho = curve.rho();
    let rows: Vec<(f64, f64, f64, f64)> = (1..=grid)
        .into_par_iter()
        .map(|i| {
            let r = rho * i as f64 / grid as f64;
            let j = curve.jet(r);
            let g4 = (j.g[1] * j.f[0] - j.g[0] * j.f[1]) / (j.g[0] * j.g[0] + j.f[0] * j.f[0]);
            let g5 = (j.g[2] * j.f[1] - j.f[2] * j.g[1]) / (j.g[1] * j.g[1] + j.f[1] * j.f[1]);
            (r, j.g[1], g4, g5)
        })
        .collect();
    let max_at = |k: usize| {
        rows.iter()
            .map(|row| (row.0, [row.1, row.2, row.3][k]))
            .fold((0.0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
    };
    let mut cert = Certificate::new("gamma_shape");
    for (k, name) in ["g2_decreasing", "g4_turning", "g5_curvature"].iter().enumerate() {
        let (r, v) = max_at(k);
        let ev = Evidence::grid(grid).with_argmin(vec![r]);
        cert.push(if k == 2 {
            Check::at_most(*name, v, 0.0, 1e-12, ev)
        } else {
            Check::below(*name, v, 0.0, ev)
        });
    }
    cert
}

/// All five curve conditions plus a finite-difference C² check.
pub fn verify_gamma(curve: &ProfileCurve, grid: usize) -> Certificate {
    let mut cert = Certificate::new("gamma").with_params(curve);
    let rho = curve.rho;
    let pts: Vec<f64> = (0..=grid).map(|i| rho * i as f64 / grid as f64).collect();
    let mut g1 = 0.0f64;
    let mut g3 = 0.0f64;
    let mut nonneg = f64::INFINITY;
    for &r in &pts {
        let j = curve.jet(r);
        nonneg = nonneg.min(j.f[0].min(j.g[0]));
        if r >= curve.r1 {
            g1 = g1
                .max((j.f[0] - 1.0).abs())
                .max((j.g[0] - curve.s * (1.0 - r * r)).abs());
        }
        if r <= curve.r0 {
            g3 = g3
                .max((j.f[0] - r * r).abs())
                .max((j.g[0] - (1.0 + curve.delta - r * r)).abs());
        }
    }
    cert.push(Check::at_most("g1_final_arc", g1, 0.0, 0.0, Evidence::grid(grid)));
    cert.push(Check::at_most("g3_binding_arc", g3, 0.0, 0.0, Evidence::grid(grid)));
    let drop = curve.jet(curve.r0).g[0] - curve.s * (1.0 - rho * rho);
    cert.push(Check::at_most(
        "g3_drop",
        drop,
        2.0 * curve.delta,
        0.0,
        Evidence::default(),
    ));
    cert.push(Check::at_least(
        "f_g_nonnegative",
        nonneg,
        0.0,
        0.0,
        Evidence::grid(grid),
    ));
    cert.push(Check::below("r0_below_r1", curve.r0, curve.r1, Evidence::default()));
    cert.push(Check::below("r1_below_rho", curve.r1, rho, Evidence::default()));
    for c in verify_shape(curve, grid).checks {
        cert.push(c);
    }
    // C² certification: Richardson-extrapolated central differences away from
    // the arc junctions, and one-sided jets matching at the junctions
    let h = 1e-5;
    let quotient = |r: f64, step: f64| {
        let (a, b) = (curve.jet(r + step), curve.jet(r - step));
        let mut q = [0.0; 4];
        for k in 0..2 {
            q[k] = (a.f[k] - b.f[k]) / (2.0 * step);
            q[k + 2] = (a.g[k] - b.g[k]) / (2.0 * step);
        }
        q
    };
    let fd = pts
        .par_iter()
        .filter(|r| **r >= 2.0 * h && **r <= rho - 2.0 * h)
        .filter(|r| (**r - curve.r0).abs() > 2.0 * h && (**r - curve.r1).abs() > 2.0 * h)
        .map(|&r| {
            let j = curve.jet(r);
            let (c, f) = (quotient(r, h), quotient(r, 0.5 * h));
            let exact = [j.f[1], j.f[2], j.g[1], j.g[2]];
            (0..4)
                .map(|k| ((4.0 * f[k] - c[k]) / 3.0 - exact[k]).abs() / exact[k].abs().max(1.0))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    let mut jump = 0.0f64;
    for r in [curve.r0, curve.r1] {
        let (a, b) = (curve.jet(r * (1.0 - 1e-15)), curve.jet(r * (1.0 + 1e-15)));
        for k in 0..3 {
            jump = jump.max((a.f[k] - b.f[k]).abs() / a.f[k].abs().max(1.0));
            jump = jump.max((a.g[k] - b.g[k]).abs() / a.g[k].abs().max(1.0));
        }
    }
    cert.push(Check::at_most(
        "c2_junctions",
        jump,
        0.0,
        1e-8,
        Evidence::note("one-sided jets at r0 and r1"),
    ));
    cert.push(Check::at_most(
        "c2_derivative_consistency",
        fd,
        0.0,
        1e-5,
        Evidence::grid(grid),
    ));
    cert
}

/// `(n−1) g^{n−1} (f'g − f g') / (r (2π(1+δ))^{n+1})` on `(0, ρ]`, with the
/// closed-form limit at `r = 0` when the curve provides one. Returns the
/// minimum and where it occurs.
pub fn contact_positivity(curve: &dyn Curve, n: usize, delta: f64, grid: usize) -> (f64, f64) {
    let rho = curve.rho();
    let norm = (2.0 * PI * (1.0 + delta)).powi(n as i32 + 1);
    let mut best = match curve.binding_limit(n) {
        Some(v) => (v, 0.0),
        None => (f64::INFINITY, 0.0),
    };
    for i in 1..=grid {
        let r = rho * i as f64 / grid as f64;
        let v = positivity_at(curve, n, norm, r);
        if v < best.0 || v.is_nan() {
            best = (v, r);
        }
    }
    best
}

fn positivity_at(curve: &dyn Curve, n: usize, norm: f64, r: f64) -> f64 {
    let j = curve.jet(r);
    (n as f64 - 1.0) * j.g[0].powi(n as i32 - 1) * (j.f[1] * j.g[0] - j.f[0] * j.g[1]) / (r * norm)
}

/// The return time `τ` and its bounds, with the orientation convention
/// recorded: `r` is the distance from the binding, and `τ` is
/// non-increasing in `r` (from 1 at the binding to `1/(1+δ)` at `ρ`).
pub fn return_time_profile(curve: &ProfileCurve, grid: usize) -> Certificate {
    let d = curve.delta;
    let mut cert = Certificate::new("return_time").with_params(&serde_json::json!({
        "delta": d,
        "grid": grid,
        "orientation": "r increases away from the binding; d tau / dr <= 0",
    }));
    let taus: Vec<(f64, f64)> = (0..=grid)
        .map(|i| {
            let r = curve.rho * i as f64 / grid as f64;
            (r, curve.tau(r))
        })
        .collect();
    let lo = taus.iter().map(|t| t.1).fold(f64::INFINITY, f64::min);
    let hi = taus.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
    cert.push(Check::at_least(
        "tau_lower",
        lo,
        1.0 / (1.0 + d),
        1e-9,
        Evidence::grid(grid),
    ));
    cert.push(Check::at_most("tau_upper", hi, 1.0, 1e-9, Evidence::grid(grid)));
    let inner = taus
        .iter()
        .filter(|t| t.0 <= curve.r0)
        .map(|t| (t.1 - 1.0).abs())
        .fold(0.0, f64::max);
    let outer = taus
        .iter()
        .filter(|t| t.0 >= curve.r1)
        .map(|t| (t.1 - 1.0 / (1.0 + d)).abs())
        .fold(0.0, f64::max);
    cert.push(Check::at_most(
        "tau_one_near_binding",
        inner,
        0.0,
        1e-12,
        Evidence::grid(grid),
    ));
    cert.push(Check::at_most("tau_final_arc", outer, 0.0, 1e-12, Evidence::grid(grid)));
    let rise = taus
        .windows(2)
        .map(|w| w[1].1 - w[0].1)
        .fold(f64::NEG_INFINITY, f64::max);
    cert.push(Check::at_most(
        "tau_nonincreasing",
        rise,
        0.0,
        1e-12,
        Evidence::grid(grid),
    ));
    // the analytic derivative g(f'g'' − f''g') / ((g')²(1+δ)), sign fixed by (g5)
    let dmax = taus
        .iter()
        .filter(|t| t.0 > 0.0)
        .map(|t| {
            let j = curve.jet(t.0);
            j.g[0] * (j.f[1] * j.g[2] - j.f[2] * j.g[1]) / (j.g[1] * j.g[1] * (1.0 + d))
        })
        .fold(f64::NEG_INFINITY, f64::max);
    cert.push(Check::at_most("dtau_dr_sign", dmax, 0.0, 1e-12, Evidence::grid(grid)));
    cert.push(Check::at_most(
        "tau_sup_distance",
        hi.max(1.0) - lo.min(1.0),
        d,
        1e-12,
        Evidence::grid(grid),
    ));
    cert.result("tau_min", lo);
    cert.result("tau_max", hi);
    cert
}

/// The radial volume chain of the collar for page dimension `2n`, with
/// `binding_volume = vol(K, α')` and `vol(K, α₀) = (2π)^n vol(K, α')`.
pub fn collar_volume_bounds(curve: &ProfileCurve, n: usize, binding_volume: f64) -> Result<Certificate> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("n must be at least 2, got {n}")));
    }
    if !(binding_volume > 0.0) {
        return Err(Error::InvalidParameter("binding volume must be positive".into()));
    }
    let d = curve.delta;
    let nf = n as f64;
    let ni = n as i32;
    let tol = 1e-12;
    let mut cert = Certificate::new("collar_volume").with_params(&serde_json::json!({
        "n": n,
        "binding_volume": binding_volume,
    }));
    let g = |r: f64| curve.jet(r).g;
    let mut bps = vec![curve.r1];
    // corner edges of the connector, where f'' jumps
    for k in 0..=64 {
        let r = curve.r0 + (curve.r1 - curve.r0) * k as f64 / 64.0;
        bps.push(r);
    }
    let i1 = integrate(
        |r| {
            let j = g(r);
            -j[1] * j[0].powi(ni - 1)
        },
        curve.r0,
        curve.rho,
        &bps,
        tol,
    )?
    .value;
    let g_r0 = g(curve.r0)[0];
    let g_rho = g(curve.rho)[0];
    let i1_closed = (g_r0.powi(ni) - g_rho.powi(ni)) / nf;
    cert.push(Check::equal(
        "collar_integral_closed_form",
        i1,
        i1_closed,
        1e-10,
        Evidence::default(),
    ));
    let step1 = (1.0 + d).powi(ni - 1) * (g_r0 - g_rho);
    let step2 = (1.0 + d).powi(ni - 1) * 2.0 * d;
    cert.push(Check::at_most(
        "collar_integral_le_drop",
        i1,
        step1,
        tol,
        Evidence::default(),
    ));
    cert.push(Check::at_most(
        "collar_drop_le_two_delta",
        step1,
        step2,
        tol,
        Evidence::default(),
    ));
    let vol0 = (2.0 * PI).powi(ni) * binding_volume;
    let v_collar = (nf - 1.0) / ((2.0 * PI).powi(ni) * (1.0 + d).powi(ni)) * vol0 * i1;
    let v_collar_bound = (nf - 1.0) * binding_volume * 2.0 * d;
    cert.push(Check::at_most(
        "collar_volume",
        v_collar,
        v_collar_bound,
        tol,
        Evidence::default(),
    ));
    let j_int = integrate(|r| 2.0 * r * (1.0 + d - r * r).powi(ni - 1), 0.0, curve.r0, &[], tol)?.value;
    let j_closed = ((1.0 + d).powi(ni) - (1.0 + d - curve.r0 * curve.r0).powi(ni)) / nf;
    cert.push(Check::equal(
        "binding_integral_closed_form",
        j_int,
        j_closed,
        1e-10,
        Evidence::default(),
    ));
    let v_binding = (nf - 1.0) / ((2.0 * PI).powi(ni) * (1.0 + d).powi(ni)) * vol0 * j_int;
    let v_binding_mid = (nf - 1.0) / nf * binding_volume;
    cert.push(Check::at_most(
        "binding_volume_le_full",
        v_binding,
        v_binding_mid,
        tol,
        Evidence::default(),
    ));
    cert.push(Check::at_most(
        "binding_volume_le_binding",
        v_binding_mid,
        binding_volume,
        tol,
        Evidence::default(),
    ));
    cert.result("collar_integral", i1);
    cert.result("collar_volume", v_collar);
    cert.result("collar_volume_bound", v_collar_bound);
    cert.result("collar_slack", v_collar_bound - v_collar);
    cert.result("binding_piece", v_binding);
    cert.result("binding_piece_bound", binding_volume);
    Ok(cert)
}

/// Arithmetic audit of the final budget: `vol ≤ 2ε + ε'(a+1)` and
/// `ρ_sys ≥ (1/2)^{m+1} / (2ε + ε'(a+1))`. `c` is the page volume and `a` the
/// volume of the fibred region to be filled with plugs.
pub fn budget_ledger(eps: f64, eps_prime: f64, a: f64, c: f64, m: usize) -> Result<Certificate> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must lie in (0, 1/2), got {eps}"
        )));
    }
    if !(eps_prime >= 0.0 && a > 0.0 && c > 0.0) || m == 0 {
        return Err(Error::InvalidParameter(
            "epsilon' >= 0, a > 0, c > 0 and m >= 1 required".into(),
        ));
    }
    if a > c {
        return Err(Error::InvalidParameter(format!("a = {a} exceeds c = {c}")));
    }
    let mut cert = Certificate::new("budget").with_params(&serde_json::json!({
        "eps": eps, "eps_prime": eps_prime, "a": a, "c": c, "m": m,
    }));
    cert.push(Check::below("c_minus_a_below_eps", c - a, eps, Evidence::default()));
    let vol_v = c + eps;
    let complement = vol_v - (1.0 - eps_prime) * a;
    cert.push(Check::at_most(
        "complement_volume",
        complement,
        2.0 * eps + eps_prime * a,
        1e-15,
        Evidence::note("(c + eps) - (1 - eps') a = (c - a) + eps + eps' a"),
    ));
    let total = complement + eps_prime;
    let bound = 2.0 * eps + eps_prime * (a + 1.0);
    cert.push(Check::at_most("total_volume", total, bound, 1e-15, Evidence::default()));
    let t_min: f64 = 0.5;
    cert.push(Check::below(
        "eps_below_half",
        eps,
        0.5,
        Evidence::note("periods near the binding >= 1/2"),
    ));
    let ratio = t_min.powi(m as i32 + 1) / bound;
    cert.result("volume_bound", bound);
    cert.result("t_min", t_min);
    cert.result("systolic_bound", ratio);
    Ok(cert)
}

/// Empirical largest `s` (by bisection over `(0, s_max)`) for which
/// `build_gamma` and every verifier pass.
pub fn largest_passing_s(delta: f64, rho: f64, n: usize, s_max: f64, steps: usize) -> Option<f64> {
    let passes = |s: f64| -> bool {
        let Ok(c) = build_gamma(s, delta, rho) else {
            return false;
        };
        verify_gamma(&c, 2000).verdict
            && return_time_profile(&c, 2000).verdict
            && contact_positivity(&c, n, delta, 2000).0 > 0.0
    };
    let (mut lo, mut hi) = (0.0, s_max);
    if passes(hi) {
        return Some(hi);
    }
    for _ in 0..steps {
        let mid = 0.5 * (lo + hi);
        if passes(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo > 0.0).then_some(lo)
}

/// CSV rows `r,f,g,tau,positivity`.
pub fn gamma_csv(curve: &ProfileCurve, n: usize, points: usize) -> String {
    let mut out = String::from("r,f,g,tau,positivity\n");
    let norm = (2.0 * PI * (1.0 + curve.delta)).powi(n as i32 + 1);
    for i in 0..=points {
        let r = curve.rho * i as f64 / points as f64;
        let j = curve.jet(r);
        let p = if r == 0.0 {
            curve.binding_limit(n).unwrap_or(f64::NAN)
        } else {
            positivity_at(curve, n, norm, r)
        };
        let _ = writeln!(out, "{r},{},{},{},{p}", j.f[0], j.g[0], curve.tau(r));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Line<'a>(&'a ProfileCurve, f64);
    impl Curve for Line<'_> {
        fn jet(&self, r: f64) -> CurveJet {
            let g = self.0.jet(r).g;
            CurveJet {
                f: [self.1 * g[0], self.1 * g[1], self.1 * g[2]],
                g,
            }
        }
        fn rho(&self) -> f64 {
            self.0.rho
        }
    }

    #[test]
    fn ramp_is_c2() {
        let w = 0.01;
        for x in [-w, w] {
            let a = ramp(x - 1e-12, w);
            let b = ramp(x + 1e-12, w);
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-9, "{x} {k}");
            }
        }
    }

    #[test]
    fn quintic_matches_ends() {
        let c = quintic_hermite(0.3, [1.0, -2.0, -2.0], [0.1, -0.05, -0.04]);
        let curve = ProfileCurve {
            s: 0.0,
            delta: 0.0,
            rho: 1.0,
            r0: 0.2,
            r1: 0.5,
            corner_half_width: 0.1,
            quintic: c,
        };
        let a = curve.g_connector(0.2);
        let b = curve.g_connector(0.5);
        for (x, y) in a.iter().zip([1.0, -2.0, -2.0]) {
            assert!((x - y).abs() < 1e-12);
        }
        for (x, y) in b.iter().zip([0.1, -0.05, -0.04]) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn g3_infeasible_for_small_rho() {
        match build_gamma(0.02, 0.05, 0.3) {
            Err(Error::NoAdmissibleCurve { check, violation, .. }) => {
                assert_eq!(check, "g3");
                assert!(violation > 0.6);
            }
            other => panic!("expected g3 failure, got {other:?}"),
        }
    }

    #[test]
    fn feasible_curve_passes_everything() {
        for (s, d, rho) in [(0.02, 0.05, 0.99), (0.01, 0.05, 0.985), (0.02, 0.1, 0.98)] {
            let c = build_gamma(s, d, rho).unwrap();
            let v = verify_gamma(&c, GAMMA_GRID);
            assert!(v.verdict, "{:?}", v.failed_checks());
            let t = return_time_profile(&c, GAMMA_GRID);
            assert!(t.verdict, "{:?}", t.failed_checks());
            let (p, _) = contact_positivity(&c, 3, d, GAMMA_GRID);
            assert!(p > 0.0);
            let cv = collar_volume_bounds(&c, 2, 1.0).unwrap();
            assert!(cv.verdict, "{:?}", cv.failed_checks());
            let back: ProfileCurve = serde_json::from_str(&c.to_json()).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn binding_limit_and_final_arc_positivity() {
        let c = build_gamma(0.02, 0.05, 0.99).unwrap();
        let n = 2;
        let norm = (2.0 * PI * 1.05).powi(3);
        let near = positivity_at(&c, n, norm, 1e-6);
        assert!((near - c.binding_limit(n).unwrap()).abs() < 1e-12);
        let r = 0.989;
        let g = c.s * (1.0 - r * r);
        let expected = (n as f64 - 1.0) * g * 2.0 * c.s * r / (r * norm);
        assert!((positivity_at(&c, n, norm, r) - expected).abs() < 1e-15);
    }

    #[test]
    fn degenerate_line_is_flagged() {
        let c = build_gamma(0.02, 0.05, 0.99).unwrap();
        let line = Line(&c, 0.7);
        let cert = verify_shape(&line, 2000);
        assert!(!cert.check("g4_turning").unwrap().passed);
        assert!(contact_positivity(&line, 2, 0.05, 2000).0 <= 0.0);
    }

    #[test]
    fn budget_examples() {
        let b = budget_ledger(0.01, 0.01, 1.0, 1.0, 1).unwrap();
        assert!(b.verdict);
        assert!((b.results["systolic_bound"] - 6.25).abs() < 1e-12);
        let z = budget_ledger(0.01, 0.0, 1.0, 1.0, 2).unwrap();
        assert!((z.results["systolic_bound"] - 0.125 / 0.02).abs() < 1e-12);
        assert!(budget_ledger(0.01, 0.01, 2.0, 1.0, 1).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let c = build_gamma(0.02, 0.05, 0.99).unwrap();
        let csv = gamma_csv(&c, 2, 10);
        assert_eq!(csv.lines().count(), 12);
        assert!(csv.starts_with("r,f,g,tau,positivity"));
    }
}
