//! The standard contact sphere `S^{2m+1} ⊂ ℂ^{m+1}`, its Hopf chart
//! `f(s, z) = (e^{2is} z, e^{2is} √(1 − ‖z‖²))` over `ℝ/πℤ × 𝔹`, and the
//! systolic-ratio certificate obtained by inserting a plug into the chart.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::certificate::{Certificate, Check, Evidence};
use crate::error::{Error, Result};
use crate::geometry::{lambda_unchecked, Point};
use crate::plug::{build_plug, min_period_bound, torus_volume, verify_b1_to_b4, PlugParams};
use crate::sampling::{chunk_rng, uniform_in_ball};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SphereChart {
    pub m: usize,
}

impl SphereChart {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("m must be at least 1".into()));
        }
        Ok(Self { m })
    }

    /// `f(s, z)` as interleaved real coordinates of `ℂ^{m+1}`.
    pub fn map(&self, s: f64, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != 2 * self.m {
            return Err(Error::DimensionMismatch {
                expected: 2 * self.m,
                found: z.len(),
            });
        }
        let r2: f64 = z.iter().map(|x| x * x).sum();
        if r2 >= 1.0 {
            return Err(Error::OutOfDomain(format!("|z|^2 = {r2} is not in the open unit ball")));
        }
        let mut w = z.to_vec();
        w.push((1.0 - r2).sqrt());
        w.push(0.0);
        Ok(Point::new(w)?.rotate(2.0 * s).coords().to_vec())
    }

    /// `df_{(s,z)}(v_s, v_z)` by central differences with the given step.
    pub fn differential(&self, s: f64, z: &[f64], v_s: f64, v_z: &[f64], step: f64) -> Result<Vec<f64>> {
        let shifted = |k: f64| -> Result<Vec<f64>> {
            let zz: Vec<f64> = z.iter().zip(v_z).map(|(a, b)| a + k * b).collect();
            self.map(s + k * v_s, &zz)
        };
        let up = shifted(step)?;
        let dn = shifted(-step)?;
        Ok(up.iter().zip(&dn).map(|(a, b)| (a - b) / (2.0 * step)).collect())
    }
}

/// `α₀ = ½ Σ (u_i dv_i − v_i du_i)` at a point of the unit sphere.
pub fn standard_alpha_eval(p: &[f64], v: &[f64]) -> Result<f64> {
    if p.len() != v.len() || !p.len().is_multiple_of(2) {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            found: v.len(),
        });
    }
    let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::OutOfDomain(format!("point has norm {norm}, not 1")));
    }
    let radial: f64 = p.iter().zip(v).map(|(a, b)| a * b).sum();
    if radial.abs() > 1e-10 {
        return Err(Error::OutOfDomain(format!("vector is not tangent: <p, v> = {radial}")));
    }
    Ok(lambda_unchecked(p, v))
}

fn pullback_errors(chart: &SphereChart, samples: &[(f64, Vec<f64>, f64, Vec<f64>)], step: f64) -> Result<f64> {
    let mut worst = 0.0f64;
    for (s, z, vs, vz) in samples {
        let p = chart.map(*s, z)?;
        let dv = chart.differential(*s, z, *vs, vz, step)?;
        let lhs = lambda_unchecked(&p, &dv);
        let rhs = vs + lambda_unchecked(z, vz);
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

/// Compares `α₀(df(v))` with `(ds + λ)(v)` at random `(s, z, v)`, with `df` by
/// central differences at step `1e−6`, and confirms second-order convergence
/// of the difference quotient between steps `1e−2` and `5e−3`.
pub fn verify_pullback(m: usize, sample_count: usize, seed: u64) -> Result<Certificate> {
    if sample_count < 1000 {
        return Err(Error::InvalidParameter(format!(
            "pullback check needs at least 1000 samples, got {sample_count}"
        )));
    }
    let chart = SphereChart::new(m)?;
    let mut rng = chunk_rng(seed, 0);
    let zero = vec![0.0; 2 * m];
    let samples: Vec<(f64, Vec<f64>, f64, Vec<f64>)> = (0..sample_count)
        .map(|_| {
            let s = rng.random_range(0.0..PI);
            let z = uniform_in_ball(&mut rng, &zero, 0.9).coords().to_vec();
            let vs = rng.random_range(-1.0..1.0);
            let vz = uniform_in_ball(&mut rng, &zero, 1.0).coords().to_vec();
            (s, z, vs, vz)
        })
        .collect();
    let mut cert = Certificate::new("pullback").with_params(&serde_json::json!({
        "m": m,
        "samples": sample_count,
        "seed": seed,
        "chart_radius": 0.9,
    }));
    let fine = pullback_errors(&chart, &samples, 1e-6)?;
    cert.push(Check::at_most(
        "pullback_max_error",
        fine,
        0.0,
        1e-5,
        Evidence::samples(sample_count, seed).with_note("central differences, step 1e-6"),
    ));
    // the checked evaluation, after removing the O(step²) radial part of the quotient
    let mut tangent = 0.0f64;
    for (s, z, vs, vz) in samples.iter().take(100) {
        let p = chart.map(*s, z)?;
        let mut dv = chart.differential(*s, z, *vs, vz, 1e-6)?;
        let radial: f64 = p.iter().zip(&dv).map(|(a, b)| a * b).sum();
        dv.iter_mut().zip(&p).for_each(|(d, q)| *d -= radial * q);
        let a = standard_alpha_eval(&p, &dv)?;
        tangent = tangent.max((a - vs - lambda_unchecked(z, vz)).abs());
    }
    cert.push(Check::at_most(
        "pullback_checked_eval",
        tangent,
        0.0,
        1e-5,
        Evidence::grid(100),
    ));
    let coarse = pullback_errors(&chart, &samples, 1e-2)?;
    let half = pullback_errors(&chart, &samples, 5e-3)?;
    let ratio = coarse / half;
    cert.push(Check::equal(
        "richardson_ratio",
        ratio,
        4.0,
        0.5,
        Evidence::samples(sample_count, seed).with_note("steps 1e-2 and 5e-3"),
    ));
    cert.result("max_error_fine", fine);
    cert.result("max_error_coarse", coarse);
    cert.result("max_error_half", half);
    Ok(cert)
}

/// Systolic ratio of the standard form: `T_min = π`, `vol = π^{m+1}`.
pub fn zoll_baseline(m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    let t_min = PI;
    let vol = PI.powi(m as i32 + 1);
    Ok(t_min.powi(m as i32 + 1) / vol)
}

/// Plug parameters that the sphere certificate does not fix itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SphereOverrides {
    pub n: Option<usize>,
    pub delta: Option<f64>,
    pub epsilon_chi: Option<f64>,
    pub rho: Option<f64>,
    /// Raise the packing density target to what the volume budget needs.
    pub auto_density: bool,
    pub seed: u64,
    pub max_balls: Option<usize>,
    pub t_grid: usize,
    pub z_grid: usize,
    pub mc_samples: usize,
    pub pullback_samples: usize,
}

impl Default for SphereOverrides {
    fn default() -> Self {
        Self {
            n: None,
            delta: None,
            epsilon_chi: None,
            rho: None,
            auto_density: true,
            seed: 7,
            max_balls: None,
            t_grid: 100,
            z_grid: 10_000,
            mc_samples: 1_000_000,
            pullback_samples: 1000,
        }
    }
}

/// Defaults by dimension: `(n, δ = ε_χ, ρ)`.
pub fn default_plug_shape(m: usize) -> (usize, f64, f64) {
    match m {
        1 => (64, 0.05, 0.6),
        2 => (32, 0.01, 0.25),
        _ => (32, 0.01, 0.1),
    }
}

/// Lowest packing density for which the closed-form torus volume of the plug
/// fits in `eps_volume`; `None` if even a full packing would not suffice.
pub fn density_needed(params: &PlugParams) -> Result<Option<f64>> {
    let mut bare = params.clone();
    bare.rho_target = 0.0;
    let plug = build_plug(&bare)?;
    let m = params.m as i32;
    let base = params.l * PI.powi(m) + plug.calabi_plus()?;
    let unit = crate::bump::unit_bump_calabi(params.m, params.epsilon_chi)?;
    let r0 = (1.0 - 2.0 * params.delta).powi(m);
    let rho = (base - params.eps_volume) / (params.c * unit * r0);
    Ok(if rho < 1.0 { Some(rho.max(0.0)) } else { None })
}

const DENSITY_MARGIN: f64 = 0.01;

/// Certified lower bound on the systolic ratio of a contact form on
/// `S^{2m+1}` defining the standard structure, with `L = π` and
/// `ε = π^{m+1}/C`.
pub fn sphere_certificate(m: usize, c_target: f64, overrides: &SphereOverrides) -> Result<Certificate> {
    if !(c_target > 0.0 && c_target.is_finite()) {
        return Err(Error::InvalidParameter(format!("C must be positive, got {c_target}")));
    }
    SphereChart::new(m)?;
    let (n0, d0, rho0) = default_plug_shape(m);
    let n = overrides.n.unwrap_or(n0);
    let delta = overrides.delta.unwrap_or(d0);
    let eps_chi = overrides.epsilon_chi.unwrap_or(delta);
    let rho_requested = overrides.rho.unwrap_or(rho0);
    let eps = PI.powi(m as i32 + 1) / c_target;
    let mut params = PlugParams::new(m, PI, n, delta, eps_chi, rho_requested, eps, overrides.seed);
    if let Some(mb) = overrides.max_balls {
        params.max_balls = mb;
    }
    params.validate()?;
    let needed = density_needed(&params)?;
    let mut rho_used = rho_requested;
    if overrides.auto_density {
        match needed {
            Some(r) if r + DENSITY_MARGIN > rho_requested => rho_used = (r + DENSITY_MARGIN).min(0.95),
            None => rho_used = rho_requested.max(0.95),
            _ => {}
        }
    }
    params.rho_target = rho_used;

    let mut cert = Certificate::new("sphere_systolic").with_params(&serde_json::json!({
        "m": m,
        "C_target": c_target,
        "overrides": overrides,
        "plug": params,
    }));
    cert.result("rho_requested", rho_requested);
    if let Some(r) = needed {
        cert.result("rho_needed", r);
    }
    cert.result("rho_target_used", rho_used);
    cert.result("eps_volume", eps);

    let plug = build_plug(&params)?;
    cert.result("achieved_density", plug.sector_family.achieved_density);
    cert.result("balls_total", plug.total_balls() as f64);
    cert.push(Check::at_least(
        "packing_density",
        plug.sector_family.achieved_density,
        rho_requested,
        0.0,
        Evidence::note("density of the replicated family in the bulk ball"),
    ));

    let conditions = verify_b1_to_b4(&plug, overrides.t_grid, overrides.z_grid)?;
    let vol = plug.torus_volume_closed()?;
    cert.result("torus_volume", vol);
    cert.push(Check::at_most(
        "volume_within_budget",
        vol,
        eps,
        0.0,
        Evidence::default(),
    ));
    if overrides.mc_samples > 0 {
        let tv = torus_volume(&plug, overrides.mc_samples, overrides.seed)?;
        cert.result("torus_volume_mc", tv.monte_carlo.value);
        cert.result("torus_volume_mc_se", tv.monte_carlo.std_error);
        cert.push(Check::at_most(
            "volume_two_routes",
            (tv.monte_carlo.value - vol).abs(),
            3.0 * tv.monte_carlo.std_error,
            1e-12 * vol,
            Evidence::samples(overrides.mc_samples, overrides.seed),
        ));
    }

    let plug_t_min = match min_period_bound(&plug, &conditions) {
        Ok(pb) => {
            cert.result("plug_t_min", pb.t_min);
            Some(pb.t_min)
        }
        Err(e) => {
            cert.push(Check::at_least(
                "period_prerequisites",
                0.0,
                1.0,
                0.0,
                Evidence::note(e.to_string()),
            ));
            None
        }
    };
    let t_min = plug_t_min.map_or(0.0, |t| t.min(PI));
    cert.push(Check::at_least(
        "t_min_at_least_pi",
        t_min,
        PI,
        1e-12,
        Evidence::note("closed Hopf orbits outside the chart have period pi"),
    ));
    let achieved = PI.powi(m as i32 + 1) / vol;
    let certified = t_min.min(PI).powi(m as i32 + 1) / vol;
    cert.result("C_achieved", achieved);
    cert.result("rho_sys_lower_bound", certified);
    let zoll = zoll_baseline(m)?;
    cert.result("zoll_baseline", zoll);
    cert.push(Check::at_least(
        "systolic_ratio",
        certified,
        c_target,
        0.0,
        Evidence::default(),
    ));
    cert.push(Check::above("beats_zoll", certified, zoll, Evidence::default()));
    cert.assume("the chart misses a codimension-two set, which carries no volume");
    cert.assume("Gray stability supplies the diffeomorphism to the standard structure; no numeric content");
    cert.attach(conditions);
    cert.attach(verify_pullback(
        m,
        overrides.pullback_samples.max(1000),
        overrides.seed,
    )?);
    Ok(cert)
}
