//! The plug map `φ^t = φ₊^t ∘ φ₋^t` on the ball of radius `r` (default 1):
//! a Hopf rotation by about `2π/n` composed with negative bumps on a packing
//! of every sector. Verification of the plug conditions, the mapping-torus
//! ledger (volume and minimal period), rescaling, and the primitive-shift
//! invariance of the volume.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bump::{unit_bump_calabi, BumpSpec, FlowAction};
use crate::certificate::{Certificate, Check, Evidence};
use crate::cutoff::{build_chi, CutoffChi};
use crate::error::{Error, Result};
use crate::geometry::{sector_membership, Point, SectorGeometry};
use crate::packing::{pack_sector, replicate_orbit, verify_packing, BallFamily, BallIndex};
use crate::quadrature::integrate;
use crate::radial::{rotation_velocity, Isotopy, RadialHamiltonian, CALABI_TOL};
use crate::sampling::{ball_mean, halton_ball, halton_shell, Estimate};

pub const DEFAULT_MAX_BALLS: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlugParams {
    pub m: usize,
    /// Period budget `L`.
    pub l: f64,
    pub n: usize,
    pub delta: f64,
    pub epsilon_chi: f64,
    pub rho_target: f64,
    /// Bump strength.
    pub c: f64,
    /// Target upper bound for the torus volume.
    pub eps_volume: f64,
    pub seed: u64,
    pub max_balls: usize,
}

impl PlugParams {
    /// Parameters with the bump strength `c = L − (L + π)/n`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        m: usize,
        l: f64,
        n: usize,
        delta: f64,
        epsilon_chi: f64,
        rho_target: f64,
        eps_volume: f64,
        seed: u64,
    ) -> Self {
        Self {
            m,
            l,
            n,
            delta,
            epsilon_chi,
            rho_target,
            c: Self::default_strength(l, n),
            eps_volume,
            seed,
            max_balls: DEFAULT_MAX_BALLS,
        }
    }

    pub fn default_strength(l: f64, n: usize) -> f64 {
        l - (l + PI) / n as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |s: String| Err(Error::InvalidParameter(s));
        if self.m == 0 {
            return bad("m must be at least 1".into());
        }
        if !(self.l > 0.0 && self.l.is_finite()) {
            return bad(format!("L must be positive, got {}", self.l));
        }
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        for (name, v) in [("delta", self.delta), ("epsilon_chi", self.epsilon_chi)] {
            if !(v > 0.0 && v < 0.5) {
                return bad(format!("{name} must lie in (0, 1/2), got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.rho_target) {
            return bad(format!("rho_target must lie in [0, 1), got {}", self.rho_target));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return bad(format!(
                "bump strength c = {} must be positive (n = {} too small for L = {})",
                self.c, self.n, self.l
            ));
        }
        if !(self.eps_volume > 0.0) {
            return bad(format!("eps_volume must be positive, got {}", self.eps_volume));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PlugDescriptor {
    pub params: PlugParams,
    /// Radius of the ball the plug lives on.
    pub scale: f64,
    pub plus: RadialHamiltonian,
    pub chi_eps: CutoffChi,
    /// Balls packed in `U_1`; the full family is their `ℤ_n` Hopf orbit.
    pub sector_family: Arc<BallFamily>,
    index: Arc<BallIndex>,
    geom: SectorGeometry,
    unit_bump_cal: f64,
}

/// Serializable summary of a plug.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlugSummary {
    pub params: PlugParams,
    pub scale: f64,
    pub balls_per_sector: usize,
    pub total_balls: usize,
    pub achieved_density: f64,
    pub density_target_met: bool,
    pub max_ball_radius: f64,
    pub calabi_plus: f64,
    pub calabi_bumps: f64,
    pub torus_volume: f64,
}

pub fn build_plug(params: &PlugParams) -> Result<PlugDescriptor> {
    params.validate()?;
    let plus = RadialHamiltonian::plus(params.m, params.n, params.delta)?;
    let family = pack_sector(
        params.m,
        params.n,
        params.rho_target,
        params.delta,
        params.max_balls,
        params.seed,
    )?;
    let index = family.index();
    Ok(PlugDescriptor {
        params: params.clone(),
        scale: 1.0,
        plus,
        chi_eps: build_chi(params.epsilon_chi)?,
        sector_family: Arc::new(family),
        index: Arc::new(index),
        geom: SectorGeometry::new(params.m, params.n)?,
        unit_bump_cal: unit_bump_calabi(params.m, params.epsilon_chi)?,
    })
}

impl PlugDescriptor {
    pub fn m(&self) -> usize {
        self.params.m
    }

    pub fn total_balls(&self) -> usize {
        self.sector_family.balls.len() * self.params.n
    }

    fn sector_angle(&self, k: usize) -> f64 {
        2.0 * PI * (k - 1) as f64 / self.params.n as f64
    }

    /// The bump whose open ball contains `w`, in the coordinates of the
    /// (rescaled) plug.
    pub fn bump_at(&self, w: &Point) -> Option<BumpSpec> {
        let z = w.scale(1.0 / self.scale);
        let k = sector_membership(&self.geom, &z)?;
        let z1 = z.rotate(-self.sector_angle(k));
        let j = self.index.containing(z1.coords())?;
        let ball = &self.sector_family.balls[j];
        Some(BumpSpec {
            center: ball.center.rotate(self.sector_angle(k)).scale(self.scale),
            radius: ball.radius * self.scale,
            strength: self.params.c * self.scale * self.scale,
            chi: self.chi_eps,
        })
    }

    /// Every bump of the full family, sector by sector.
    pub fn bumps(&self) -> impl Iterator<Item = BumpSpec> + '_ {
        (1..=self.params.n).flat_map(move |k| {
            self.sector_family.balls.iter().map(move |b| BumpSpec {
                center: b.center.rotate(self.sector_angle(k)).scale(self.scale),
                radius: b.radius * self.scale,
                strength: self.params.c * self.scale * self.scale,
                chi: self.chi_eps,
            })
        })
    }

    fn normalized(&self, w: &Point) -> f64 {
        w.norm_sqr() / (self.scale * self.scale)
    }

    pub fn plus_flow(&self, t: f64, w: &Point) -> Point {
        w.rotate(self.plus.angle(t, self.normalized(w)))
    }

    pub fn plus_action(&self, t: f64, w: &Point) -> f64 {
        t * self.scale * self.scale * self.plus.scale * self.plus.profile.legendre(self.normalized(w))
    }

    pub fn minus_flow(&self, t: f64, w: &Point) -> Point {
        match self.bump_at(w) {
            Some(b) => crate::bump::bump_flow(&b, t, w),
            None => w.clone(),
        }
    }

    pub fn minus_action(&self, t: f64, w: &Point) -> f64 {
        match self.bump_at(w) {
            Some(b) => crate::bump::bump_action(&b, t, w),
            None => 0.0,
        }
    }

    /// `φ^t(w) = φ₊^t(φ₋^t(w))`.
    pub fn flow(&self, t: f64, w: &Point) -> Point {
        self.plus_flow(t, &self.minus_flow(t, w))
    }

    /// `σ_{φ^t} = σ₊ ∘ φ₋^t + σ₋`.
    pub fn action(&self, t: f64, w: &Point) -> f64 {
        crate::bump::compose_action(&PlusPart(self), &MinusPart(self), t, w)
    }

    pub fn inverse(&self, t: f64, w: &Point) -> Point {
        self.minus_flow(-t, &self.plus_flow(-t, w))
    }

    /// Return time `τ = L + σ_{φ¹}`.
    pub fn tau(&self, w: &Point) -> f64 {
        self.params.l + self.action(1.0, w)
    }

    /// Calabi invariant of `φ₊¹`, by quadrature over `[0, r]`.
    pub fn calabi_plus(&self) -> Result<f64> {
        let m = self.m() as i32;
        let r = self.scale;
        let bps: Vec<f64> = self
            .plus
            .profile
            .breakpoints()
            .into_iter()
            .filter(|b| *b > 0.0 && *b < 1.0)
            .map(|b| r * b.sqrt())
            .collect();
        let q = integrate(
            |rho| rho.powi(2 * m - 1) * r * r * self.plus.h(rho * rho / (r * r)),
            0.0,
            r,
            &bps,
            CALABI_TOL * r.powi(2 * m + 2).max(1e-300),
        )?;
        Ok(2.0 * self.m() as f64 * (self.m() as f64 + 1.0) * PI.powi(m) * q.value)
    }

    /// `Σ_j CAL(ψ_j¹) = −c Σ_j r_j^{2m} · CAL(χ_ε(‖z‖²))` over the full family.
    pub fn calabi_bumps(&self) -> f64 {
        let e = 2 * self.m() as i32;
        let strength = self.params.c * self.scale * self.scale;
        let sum: f64 = self
            .sector_family
            .balls
            .iter()
            .map(|b| (b.radius * self.scale).powi(e))
            .sum();
        -strength * self.params.n as f64 * sum * self.unit_bump_cal
    }

    pub fn calabi(&self) -> Result<f64> {
        Ok(self.calabi_plus()? + self.calabi_bumps())
    }

    /// `L π^m r^{2m} + CAL(φ¹)`.
    pub fn torus_volume_closed(&self) -> Result<f64> {
        let m = self.m() as i32;
        Ok(self.params.l * PI.powi(m) * self.scale.powi(2 * m) + self.calabi()?)
    }

    /// `max_j r_j ‖z_j‖`, the bound on the primitive correction of a bump.
    pub fn max_correction(&self) -> f64 {
        self.sector_family
            .balls
            .iter()
            .map(|b| b.radius * b.center.norm())
            .fold(0.0, f64::max)
            * self.scale
            * self.scale
    }

    /// Certified lower bound on `σ_{φ^t}` for all `t ∈ [0, 1]`:
    /// `σ₊ ≥ 0` and `σ₋ ≥ −c(1−ε) − max_j r_j‖z_j‖`.
    pub fn sigma_lower_bound(&self) -> f64 {
        let s2 = self.scale * self.scale;
        let bumps = if self.sector_family.balls.is_empty() {
            0.0
        } else {
            self.params.c * s2 * (1.0 - self.params.epsilon_chi) + self.max_correction()
        };
        -bumps
    }

    /// Certified upper bound on `σ_{φ^t}` for all `t ∈ [0, 1]`.
    pub fn sigma_upper_bound(&self) -> f64 {
        let s2 = self.scale * self.scale;
        s2 * PI / self.params.n as f64 * (1.0 - self.params.delta) + self.max_correction()
    }

    pub fn summary(&self) -> Result<PlugSummary> {
        Ok(PlugSummary {
            params: self.params.clone(),
            scale: self.scale,
            balls_per_sector: self.sector_family.balls.len(),
            total_balls: self.total_balls(),
            achieved_density: self.sector_family.achieved_density,
            density_target_met: self.sector_family.target_met,
            max_ball_radius: self.sector_family.max_radius() * self.scale,
            calabi_plus: self.calabi_plus()?,
            calabi_bumps: self.calabi_bumps(),
            torus_volume: self.torus_volume_closed()?,
        })
    }
}

/// `φ₊` of a plug as a map with action and as an isotopy.
pub struct PlusPart<'a>(pub &'a PlugDescriptor);
/// `φ₋` of a plug as a map with action and as an isotopy.
pub struct MinusPart<'a>(pub &'a PlugDescriptor);

impl FlowAction for PlusPart<'_> {
    fn flow(&self, t: f64, z: &Point) -> Point {
        self.0.plus_flow(t, z)
    }
    fn action(&self, t: f64, z: &Point) -> f64 {
        self.0.plus_action(t, z)
    }
}

impl FlowAction for MinusPart<'_> {
    fn flow(&self, t: f64, z: &Point) -> Point {
        self.0.minus_flow(t, z)
    }
    fn action(&self, t: f64, z: &Point) -> f64 {
        self.0.minus_action(t, z)
    }
}

impl Isotopy for PlusPart<'_> {
    fn position(&self, t: f64, z: &Point) -> Point {
        self.0.plus_flow(t, z)
    }
    fn velocity(&self, t: f64, z: &Point) -> Vec<f64> {
        let w = self.0.plus.dh(self.0.normalized(z));
        rotation_velocity(self.0.plus_flow(t, z).coords(), w)
    }
    fn hamiltonian(&self, _t: f64, p: &Point) -> f64 {
        self.0.scale * self.0.scale * self.0.plus.h(self.0.normalized(p))
    }
}

impl Isotopy for MinusPart<'_> {
    fn position(&self, t: f64, z: &Point) -> Point {
        self.0.minus_flow(t, z)
    }
    fn velocity(&self, t: f64, z: &Point) -> Vec<f64> {
        match self.0.bump_at(z) {
            Some(b) => Isotopy::velocity(&b, t, z),
            None => vec![0.0; z.coords().len()],
        }
    }
    fn hamiltonian(&self, _t: f64, p: &Point) -> f64 {
        self.0.bump_at(p).map(|b| b.hamiltonian(p)).unwrap_or(0.0)
    }
}

/// Deterministic verification points of the plug's ball: quasi-random bulk
/// points, shells at the radii where the bounds are tight, probes inside a
/// spread of bumps, and the origin.
pub fn verification_points(plug: &PlugDescriptor, count: usize) -> Vec<Point> {
    let m = plug.m();
    let s = plug.scale;
    let delta = plug.params.delta;
    let chi = build_chi(delta).expect("validated delta");
    let bulk = count * 6 / 10;
    let mut pts: Vec<Point> = halton_ball(m, s, bulk);
    let radii2 = [
        1.0 - 2.0 * delta - 1e-9,
        1.0 - 2.0 * delta + 1e-9,
        chi.join,
        0.5 * (chi.join + chi.end),
        chi.end - 1e-6,
        chi.end + 1e-9,
    ];
    let shell = count / 10 / radii2.len();
    for (i, r2) in radii2.iter().enumerate() {
        pts.extend(halton_shell(m, s * r2.sqrt(), shell, (i * shell) as u64));
    }
    let probes = count.saturating_sub(pts.len() + 1);
    let total = plug.total_balls();
    if total > 0 && probes > 0 {
        let per_ball = 3;
        let wanted = (probes / per_ball).max(1);
        let stride = (total / wanted).max(1);
        let offsets = halton_shell(m, 1.0, per_ball, 7);
        for b in plug.bumps().step_by(stride).take(wanted) {
            for (j, o) in offsets.iter().enumerate() {
                let frac = [0.0, 0.5, 0.97][j % 3];
                pts.push(b.center.add(&o.scale(frac * b.radius)));
            }
        }
    }
    pts.push(Point::origin(m));
    pts.retain(|p| p.norm() < s);
    pts
}

/// The plug conditions on a `(t, z)` grid:
/// (b1) `σ_{φ^t} ≥ −L + L/n`, on the grid and by the analytic component bounds;
/// (b2) `CAL(φ¹) + Lπ^m ≤ ε`;
/// (b3) fixed points have non-negative action;
/// (b4) closed orbits other than fixed points have period at least `n`.
pub fn verify_b1_to_b4(plug: &PlugDescriptor, t_grid: usize, z_grid: usize) -> Result<Certificate> {
    let p = &plug.params;
    let mut cert = Certificate::new("plug_conditions").with_params(&serde_json::json!({
        "plug": p,
        "scale": plug.scale,
        "t_grid": t_grid,
        "z_grid": z_grid,
    }));
    let s2 = plug.scale * plug.scale;
    let pts = verification_points(plug, z_grid);
    let ts: Vec<f64> = (1..=t_grid).map(|i| i as f64 / t_grid as f64).collect();

    // (b1) and τ_t > 0
    let per_point: Vec<(f64, f64)> = pts
        .par_iter()
        .map(|z| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &t in &ts {
                let a = plug.action(t, z);
                lo = lo.min(a);
                hi = hi.max(a);
            }
            (lo, hi)
        })
        .collect();
    let (mut sigma_min, mut argmin) = (f64::INFINITY, 0usize);
    for (i, (lo, _)) in per_point.iter().enumerate() {
        if *lo < sigma_min {
            sigma_min = *lo;
            argmin = i;
        }
    }
    let sigma_max = per_point.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
    let floor = s2 * (-p.l + p.l / p.n as f64);
    let ev = Evidence::grid(pts.len() * ts.len())
        .with_argmin(pts.get(argmin).map(|z| z.coords().to_vec()).unwrap_or_default());
    cert.push(Check::at_least("b1_grid", sigma_min, floor, 1e-9, ev));
    let lower = plug.sigma_lower_bound();
    cert.push(Check::at_least(
        "b1_analytic",
        lower,
        floor,
        1e-12,
        Evidence::note("sigma_plus >= 0, sigma_minus >= -c(1-eps) - max_j r_j |z_j|"),
    ));
    cert.push(Check::at_least(
        "b1_analytic_chain",
        lower,
        -s2 * (p.c + PI / p.n as f64),
        1e-12,
        Evidence::note("r_j |z_j| <= pi/n"),
    ));
    cert.push(Check::at_most(
        "sigma_upper_chain",
        sigma_max,
        s2 * 2.0 * PI / p.n as f64,
        1e-12,
        Evidence::grid(pts.len() * ts.len()),
    ));
    cert.push(Check::above(
        "tau_positive",
        p.l + sigma_min.min(lower),
        0.0,
        Evidence::grid(pts.len() * ts.len()),
    ));
    cert.result("sigma_min_grid", sigma_min);
    cert.result("sigma_max_grid", sigma_max);
    cert.result("sigma_lower_analytic", lower);

    // (b2)
    let cal_plus = plug.calabi_plus()?;
    let cal_bumps = plug.calabi_bumps();
    let volume = plug.torus_volume_closed()?;
    cert.push(Check::at_most(
        "b2_volume",
        volume,
        p.eps_volume,
        0.0,
        Evidence::note("L pi^m r^2m + CAL(phi_plus) + sum_j CAL(psi_j)"),
    ));
    let top = s2.powi(p.m as i32 + 1) * (p.m as f64 + 1.0) * PI.powi(p.m as i32 + 1) / p.n as f64;
    cert.push(Check::at_least(
        "calabi_plus_nonnegative",
        cal_plus,
        0.0,
        0.0,
        Evidence::default(),
    ));
    cert.push(Check::at_most(
        "calabi_plus_bracket",
        cal_plus,
        top,
        0.0,
        Evidence::default(),
    ));
    cert.result("calabi_plus", cal_plus);
    cert.result("calabi_bumps", cal_bumps);
    cert.result("torus_volume", volume);

    // (b3)
    let origin = Point::origin(p.m);
    let sigma0 = plug.action(1.0, &origin);
    cert.push(Check::equal(
        "b3_origin_action",
        sigma0,
        s2 * PI / p.n as f64 * (1.0 - p.delta),
        1e-15,
        Evidence::default(),
    ));
    cert.push(Check::at_least(
        "b3_origin_nonnegative",
        sigma0,
        0.0,
        0.0,
        Evidence::default(),
    ));
    let end = plug.plus.support_end();
    let outside: Vec<&Point> = pts.iter().filter(|z| plug.normalized(z) >= end).collect();
    let outside_max = outside
        .iter()
        .map(|z| plug.action(1.0, z).abs() + plug.flow(1.0, z).distance(z))
        .fold(0.0, f64::max);
    cert.push(Check::at_most(
        "b3_boundary_fixed_zero_action",
        outside_max,
        0.0,
        0.0,
        Evidence::grid(outside.len()),
    ));
    let keep_out = 1e-3;
    let displacement = pts
        .par_iter()
        .filter(|z| z.norm() > keep_out * plug.scale && plug.normalized(z) < end - keep_out)
        .map(|z| plug.flow(1.0, z).distance(z))
        .reduce(|| f64::INFINITY, f64::min);
    cert.push(Check::above(
        "b3_displacement_floor",
        displacement,
        0.0,
        Evidence::grid(pts.len()).with_note("grid points away from the origin and the fixed collar"),
    ));
    cert.assume("fixed points of phi^1 are the origin and the collar outside the support of H_plus");

    // (b4)
    let bulk = 1.0 - 2.0 * p.delta;
    let advance_failures = pts
        .par_iter()
        .filter(|z| plug.normalized(z) <= bulk)
        .filter(|z| {
            let Some(k) = sector_membership(&plug.geom, z) else {
                return false;
            };
            let img = plug.flow(1.0, z);
            sector_membership(&plug.geom, &img) != Some(k % p.n + 1)
        })
        .count();
    cert.push(Check::equal(
        "b4_sector_advance",
        advance_failures as f64,
        0.0,
        0.0,
        Evidence::grid(pts.len()),
    ));
    let (amin, amax) = pts
        .iter()
        .filter(|z| {
            let s = plug.normalized(z);
            s > bulk && s < end
        })
        .map(|z| plug.plus.angle(1.0, plug.normalized(z)))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if amin.is_finite() {
        cert.push(Check::above(
            "b4_annulus_angle_positive",
            amin,
            0.0,
            Evidence::default(),
        ));
        cert.push(Check::at_most(
            "b4_annulus_angle_cap",
            amax,
            2.0 * PI / p.n as f64,
            1e-15,
            Evidence::default(),
        ));
    }
    cert.assume("bumps preserve each sector; phi_plus rotates the bulk by exactly 2 pi / n");

    let full = replicate_orbit(&plug.sector_family, p.n)?;
    cert.attach(verify_packing(&full));
    cert.assume("the contact isotopy rel boundary of the mapping torus exists; it carries no numeric content");
    Ok(cert)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusVolume {
    pub closed_form: f64,
    pub monte_carlo: Estimate,
    pub agree: bool,
}

/// Closed-form torus volume with the Monte-Carlo cross-check `∫ τ ω^m`.
pub fn torus_volume(plug: &PlugDescriptor, samples: usize, seed: u64) -> Result<TorusVolume> {
    let m = plug.m() as i32;
    let closed = plug.torus_volume_closed()?;
    let (mean, se) = ball_mean(|z| plug.tau(z), &vec![0.0; 2 * plug.m()], plug.scale, samples, seed);
    let k = PI.powi(m) * plug.scale.powi(2 * m);
    let mc = Estimate {
        value: k * mean,
        std_error: k * se,
        samples,
    };
    Ok(TorusVolume {
        closed_form: closed,
        monte_carlo: mc,
        agree: mc.agrees_with(closed, 3.0) || (closed - mc.value).abs() <= 1e-12 * closed.abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodBound {
    pub t_min: f64,
    pub fixed_branch: f64,
    pub iterate_branch: f64,
    pub tau_min_grid: f64,
    pub tau_min_analytic: f64,
}

/// `T_min ≥ min(min τ over fixed points, n · min τ)`, given a passing plug
/// certificate.
pub fn min_period_bound(plug: &PlugDescriptor, conditions: &Certificate) -> Result<PeriodBound> {
    for name in [
        "b1_grid",
        "b1_analytic",
        "b3_origin_nonnegative",
        "b3_boundary_fixed_zero_action",
        "b3_displacement_floor",
        "b4_sector_advance",
    ] {
        match conditions.find_check(name) {
            Some(c) if c.passed => {}
            Some(_) => return Err(Error::MissingPrerequisite(format!("{name} failed"))),
            None => return Err(Error::MissingPrerequisite(format!("{name} not present"))),
        }
    }
    let l = plug.params.l;
    let origin = plug.tau(&Point::origin(plug.m()));
    let fixed_branch = origin.min(l);
    let tau_min_grid = l + conditions
        .results
        .get("sigma_min_grid")
        .copied()
        .unwrap_or(0.0)
        .min(0.0);
    let tau_min_analytic = l + plug.sigma_lower_bound();
    let tau_min = tau_min_grid.min(tau_min_analytic);
    let iterate_branch = plug.params.n as f64 * tau_min;
    Ok(PeriodBound {
        t_min: fixed_branch.min(iterate_branch),
        fixed_branch,
        iterate_branch,
        tau_min_grid,
        tau_min_analytic,
    })
}

/// The plug conjugated by `z ↦ r z`: `φ_r(z) = r φ(z/r)`, with all
/// Hamiltonians rescaled by `r²`.
pub fn rescale_plug(plug: &PlugDescriptor, r: f64) -> Result<PlugDescriptor> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidParameter(format!("scale must be positive, got {r}")));
    }
    let mut out = plug.clone();
    out.scale = plug.scale * r;
    Ok(out)
}

/// Checks `σ_{φ_r}(r z) = r² σ_φ(z)` at the given points, the Calabi law
/// `CAL(φ_r) = r^{2m+2} CAL(φ)`, and the rescaled torus volume formula.
pub fn verify_scaling(plug: &PlugDescriptor, r: f64, points: &[Point]) -> Result<Certificate> {
    let scaled = rescale_plug(plug, r)?;
    let mut cert = Certificate::new("scaling").with_params(&serde_json::json!({ "r": r }));
    let worst = points
        .iter()
        .map(|z| {
            let a = scaled.action(1.0, &z.scale(r));
            let b = r * r * plug.action(1.0, z);
            (a - b).abs() / (r * r).max(1.0)
        })
        .fold(0.0, f64::max);
    cert.push(Check::at_most(
        "action_scaling",
        worst,
        0.0,
        1e-12,
        Evidence::grid(points.len()),
    ));
    let m = plug.m() as i32;
    let c1 = plug.calabi()?;
    let cr = scaled.calabi()?;
    let rel = (cr - r.powi(2 * m + 2) * c1).abs() / (r.powi(2 * m + 2) * c1.abs()).max(1e-300);
    cert.push(Check::at_most("calabi_scaling", rel, 0.0, 1e-9, Evidence::default()));
    let vol = scaled.torus_volume_closed()?;
    let expected = plug.params.l * PI.powi(m) * (plug.scale * r).powi(2 * m) + cr;
    cert.push(Check::equal(
        "volume_formula",
        vol,
        expected,
        1e-12 * expected.abs(),
        Evidence::default(),
    ));
    Ok(cert)
}

/// Radial cutoff in `|z|`: zero up to `inner`, one from `outer` on, a quintic
/// smoothstep in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothStep {
    pub inner: f64,
    pub outer: f64,
}

impl SmoothStep {
    /// `(χ(|z|), ∇χ)`.
    pub fn eval(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let r = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        let w = self.outer - self.inner;
        let x = ((r - self.inner) / w).clamp(0.0, 1.0);
        let v = x * x * x * (10.0 - 15.0 * x + 6.0 * x * x);
        let dv = 30.0 * x * x * (1.0 - x) * (1.0 - x) / w;
        let grad = if r > 0.0 {
            z.iter().map(|c| dv * c / r).collect()
        } else {
            vec![0.0; z.len()]
        };
        (v, grad)
    }
}

fn pfaffian(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    if n == 0 {
        return 1.0;
    }
    let mut total = 0.0;
    for j in 1..n {
        let keep: Vec<usize> = (1..n).filter(|&k| k != j).collect();
        let minor: Vec<Vec<f64>> = keep.iter().map(|&r| keep.iter().map(|&c| a[r][c]).collect()).collect();
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        total += sign * a[0][j] * pfaffian(&minor);
    }
    total
}

/// Density of `β ∧ (dβ)^m` for `β = ds + Σ a_i dx_i` with `a` independent of
/// `s`: `m! · Pf(∂_i a_j − ∂_j a_i)`, by Richardson-extrapolated central
/// differences.
fn volume_density(a: &dyn Fn(&[f64]) -> Vec<f64>, z: &[f64], h: f64) -> f64 {
    let d = z.len();
    let mut jac = vec![vec![0.0; d]; d];
    let mut zp = z.to_vec();
    let mut central = |i: usize, step: f64| {
        zp[i] = z[i] + step;
        let up = a(&zp);
        zp[i] = z[i] - step;
        let dn = a(&zp);
        zp[i] = z[i];
        up.iter()
            .zip(&dn)
            .map(|(u, v)| (u - v) / (2.0 * step))
            .collect::<Vec<f64>>()
    };
    for (i, row) in jac.iter_mut().enumerate() {
        let coarse = central(i, h);
        let fine = central(i, 0.5 * h);
        for (j, entry) in row.iter_mut().enumerate() {
            *entry = (4.0 * fine[j] - coarse[j]) / 3.0;
        }
    }
    let f: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| jac[i][j] - jac[j][i]).collect())
        .collect();
    let m = d / 2;
    let fact: f64 = (1..=m).map(|k| k as f64).product();
    fact * pfaffian(&f)
}

/// A function with its gradient.
pub type ValueAndGradient = dyn Fn(&[f64]) -> (f64, Vec<f64>) + Sync;

/// Compares the volume densities of `β = ds + λ` and `β' = β + d(χu)` at
/// sample points of the collar `{|z|² ≥ support end}` of the plug, where the
/// plug is the identity. Also checks `β' = λ + du + ds` wherever `χ = 1`.
pub fn primitive_shift_check(
    plug: &PlugDescriptor,
    u: &ValueAndGradient,
    chi_cut: &SmoothStep,
    samples: usize,
) -> Result<Certificate> {
    let m = plug.m();
    let r = plug.scale;
    let inner = r * plug.plus.support_end().sqrt();
    let mut cert = Certificate::new("primitive_shift").with_params(&serde_json::json!({
        "cut": chi_cut,
        "samples": samples,
    }));
    let lambda = |z: &[f64]| -> Vec<f64> {
        let mut a = vec![0.0; z.len()];
        for k in 0..z.len() / 2 {
            a[2 * k] = -0.5 * z[2 * k + 1];
            a[2 * k + 1] = 0.5 * z[2 * k];
        }
        a
    };
    let shifted = |z: &[f64]| -> Vec<f64> {
        let (c, dc) = chi_cut.eval(z);
        let (uv, du) = u(z);
        let mut a = lambda(z);
        for i in 0..a.len() {
            a[i] += c * du[i] + uv * dc[i];
        }
        a
    };
    let mut worst = 0.0f64;
    let mut worst_exact = 0.0f64;
    let mut identity = 0.0f64;
    let dirs = halton_shell(m, 1.0, samples, 3);
    for (i, dir) in dirs.iter().enumerate() {
        let frac = (i as f64 + 0.5) / samples as f64;
        let rad = inner + (r - inner) * frac * 0.999;
        let z = dir.scale(rad);
        identity = identity.max(plug.flow(1.0, &z).distance(&z) + plug.action(1.0, &z).abs());
        let h = 2e-6 * r;
        let d0 = volume_density(&lambda, z.coords(), h);
        let d1 = volume_density(&shifted, z.coords(), h);
        worst = worst.max((d0 - d1).abs());
        let (c, _) = chi_cut.eval(z.coords());
        if c == 1.0 {
            let (_, du) = u(z.coords());
            let lam = lambda(z.coords());
            let a = shifted(z.coords());
            let diff = a
                .iter()
                .zip(lam.iter().zip(&du))
                .map(|(x, (l, d))| (x - l - d).abs())
                .fold(0.0, f64::max);
            worst_exact = worst_exact.max(diff);
        }
    }
    cert.push(Check::at_most(
        "collar_is_fixed",
        identity,
        0.0,
        0.0,
        Evidence::grid(samples),
    ));
    cert.push(Check::at_most(
        "volume_density_equal",
        worst,
        0.0,
        1e-6,
        Evidence::grid(samples),
    ));
    cert.push(Check::at_most(
        "shifted_primitive_exact",
        worst_exact,
        0.0,
        1e-15,
        Evidence::grid(samples),
    ));
    cert.assume("where the cutoff equals one, beta' = lambda' + ds, so its Reeb field is d/ds like that of beta");
    Ok(cert)
}

/// CSV rows `x1,y1,...,xm,ym,sigma,tau` at the given points.
pub fn samples_csv(plug: &PlugDescriptor, points: &[Point]) -> String {
    let mut out = String::new();
    for i in 1..=plug.m() {
        let _ = write!(out, "x{i},y{i},");
    }
    out.push_str("sigma,tau\n");
    for z in points {
        for c in z.coords() {
            let _ = write!(out, "{c},");
        }
        let s = plug.action(1.0, z);
        let _ = writeln!(out, "{s},{}", plug.params.l + s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial::{action_oracle, Concatenation};
    use crate::sampling::{chunk_rng, uniform_in_ball};

    fn small(rho: f64) -> PlugParams {
        PlugParams::new(1, PI, 16, 0.05, 0.05, rho, 100.0, 5)
    }

    #[test]
    fn guards() {
        let mut p = small(0.3);
        p.n = 1;
        assert!(build_plug(&p).is_err());
        let mut p = small(0.3);
        p.c = PlugParams::default_strength(PI, 1);
        assert!(build_plug(&p).is_err());
    }

    #[test]
    fn no_bumps_is_a_rotation_family() {
        let plug = build_plug(&small(0.0)).unwrap();
        let z = Point::new(vec![0.3, 0.2]).unwrap();
        assert_eq!(plug.flow(1.0, &z), plug.plus_flow(1.0, &z));
        assert_eq!(plug.total_balls(), 0);
        let v = torus_volume(&plug, 100_000, 1).unwrap();
        assert!(v.closed_form >= PI * PI);
        assert!(v.closed_form <= PI * PI + 2.0 * PI * PI / 16.0);
        assert!(v.agree);
    }

    #[test]
    fn compose_matches_concatenated_oracle() {
        let plug = build_plug(&small(0.5)).unwrap();
        let mut rng = chunk_rng(2, 0);
        let mut probes: Vec<Point> = plug
            .bumps()
            .step_by(97)
            .take(6)
            .map(|b| b.center.add(&Point::new(vec![0.3 * b.radius, 0.1 * b.radius]).unwrap()))
            .collect();
        probes.extend((0..6).map(|_| uniform_in_ball(&mut rng, &[0.0, 0.0], 1.0)));
        for z in probes {
            let iso = Concatenation {
                first: &MinusPart(&plug),
                second: &PlusPart(&plug),
            };
            let o = action_oracle(&iso, 2.0, &z, 200_000).unwrap();
            let c = plug.action(1.0, &z);
            assert!((o - c).abs() < 1e-5, "{o} vs {c}");
        }
    }

    #[test]
    fn inverse_round_trip() {
        let plug = build_plug(&small(0.5)).unwrap();
        for b in plug.bumps().step_by(31).take(10) {
            let z = b.center.add(&Point::new(vec![0.2 * b.radius, 0.0]).unwrap());
            let back = plug.inverse(0.6, &plug.flow(0.6, &z));
            assert!(back.distance(&z) < 1e-12);
        }
    }

    #[test]
    fn conditions_pass_and_negative_control() {
        let plug = build_plug(&small(0.5)).unwrap();
        let cert = verify_b1_to_b4(&plug, 20, 2000).unwrap();
        assert!(cert.verdict, "{:?}", cert.failed_checks());
        let pb = min_period_bound(&plug, &cert).unwrap();
        assert!(pb.t_min >= PI - 1e-12);

        let mut p = small(0.5);
        p.c = p.l;
        let bad = build_plug(&p).unwrap();
        let cert = verify_b1_to_b4(&bad, 20, 2000).unwrap();
        assert!(!cert.check("b1_analytic").unwrap().passed);
        assert!(min_period_bound(&bad, &cert).is_err());
    }

    #[test]
    fn identity_plug_period() {
        let mut p = small(0.0);
        p.delta = 0.49;
        let plug = build_plug(&p).unwrap();
        let cert = verify_b1_to_b4(&plug, 10, 1000).unwrap();
        let pb = min_period_bound(&plug, &cert).unwrap();
        assert!((pb.t_min - PI).abs() < 1e-12);
    }

    #[test]
    fn scaling_laws() {
        let plug = build_plug(&small(0.5)).unwrap();
        let mut rng = chunk_rng(8, 0);
        let pts: Vec<Point> = (0..50).map(|_| uniform_in_ball(&mut rng, &[0.0, 0.0], 1.0)).collect();
        for r in [0.3, 0.5, 1.0, 2.0] {
            let cert = verify_scaling(&plug, r, &pts).unwrap();
            assert!(cert.verdict, "{r}: {:?}", cert.failed_checks());
        }
    }

    #[test]
    fn primitive_shift() {
        let plug = build_plug(&small(0.3)).unwrap();
        let cut = SmoothStep {
            inner: 0.985,
            outer: 0.995,
        };
        let zero = |z: &[f64]| (0.0, vec![0.0; z.len()]);
        assert!(primitive_shift_check(&plug, &zero, &cut, 200).unwrap().verdict);
        let zj = [0.3, -0.2];
        let linear = move |z: &[f64]| (0.5 * (zj[0] * z[1] - zj[1] * z[0]), vec![-0.5 * zj[1], 0.5 * zj[0]]);
        let c = primitive_shift_check(&plug, &linear, &cut, 200).unwrap();
        assert!(c.verdict, "{:?}", c.failed_checks());
        let quad = |z: &[f64]| (z[0] * z[0] * z[1], vec![2.0 * z[0] * z[1], z[0] * z[0]]);
        let all = SmoothStep {
            inner: -2.0,
            outer: -1.0,
        };
        assert!(primitive_shift_check(&plug, &quad, &all, 200).unwrap().verdict);
    }
}
