//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if any
//! criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use plug_core::bump::{bump_calabi, BumpSpec};
use plug_core::collar::{
    build_gamma, collar_volume_bounds, contact_positivity, return_time_profile, verify_gamma, verify_shape, Curve,
    CurveJet, GAMMA_GRID,
};
use plug_core::cutoff::{build_chi, chi_violations, verify_chi, verify_chi_profile, CutoffChi, RadialProfile};
use plug_core::packing::{pack_sector, verify_packing, Ball};
use plug_core::plug::{build_plug, min_period_bound, torus_volume, verify_b1_to_b4, verify_scaling, PlugParams};
use plug_core::radial::{action_oracle, calabi_oracle, calabi_radial, radial_action_t, RadialHamiltonian};
use plug_core::sampling::{chunk_rng, uniform_in_ball};
use plug_core::sphere::{sphere_certificate, verify_pullback, zoll_baseline, SphereOverrides};
use plug_core::Point;

type Outcome = Result<(bool, String), String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn random_points(m: usize, count: usize, seed: u64) -> Vec<Point> {
    let mut rng = chunk_rng(seed, 0);
    let zero = vec![0.0; 2 * m];
    (0..count).map(|_| uniform_in_ball(&mut rng, &zero, 1.0)).collect()
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn action_vs_oracle() -> Outcome {
    let mut worst = 0.0f64;
    for m in [1, 2] {
        let hp = RadialHamiltonian::plus(m, 8, 0.1).map_err(err)?;
        for z in random_points(m, 200, 11 + m as u64) {
            let o = action_oracle(&hp, 1.0, &z, 10_000).map_err(err)?;
            let c = radial_action_t(&hp, 1.0, &z).map_err(err)?;
            worst = worst.max((o - c).abs());
        }
    }
    Ok((
        worst <= 1e-6,
        format!("max |oracle - closed form| = {worst:.3e} (bound 1e-6)"),
    ))
}

fn calabi_cross_check() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for m in [1, 2] {
        let n = 8;
        let hp = RadialHamiltonian::plus(m, n, 0.1).map_err(err)?;
        let cal = calabi_radial(&hp).map_err(err)?;
        let top = (m as f64 + 1.0) * PI.powi(m as i32 + 1) / n as f64;
        let est = calabi_oracle(|p| hp.eval(p), m, 1_000_000, 21 + m as u64);
        let z = (est.value - cal) / est.std_error;
        ok &= est.agrees_with(cal, 3.0) && cal >= 0.0 && cal <= top;
        notes.push(format!(
            "H+ m={m}: {cal:.6} vs {:.6} ({z:+.2} SE), bracket [0, {top:.4}]",
            est.value
        ));

        let mut c = vec![0.1; 2 * m];
        c[0] = 0.3;
        let bump = BumpSpec::new(Point::new(c).map_err(err)?, 0.2, 2.0, 0.1).map_err(err)?;
        let bc = bump_calabi(&bump).map_err(err)?;
        let be = calabi_oracle(|p| bump.hamiltonian(p), m, 1_000_000, 31 + m as u64);
        ok &= be.agrees_with(bc, 3.0);
        notes.push(format!(
            "bump m={m}: {bc:.6} vs {:.6} ({:+.2} SE)",
            be.value,
            (be.value - bc) / be.std_error
        ));
    }
    Ok((ok, notes.join("; ")))
}

fn scaling_laws() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for (m, n, rho) in [(1, 64, 0.6), (2, 8, 0.1)] {
        let plug = build_plug(&PlugParams::new(m, PI, n, 0.05, 0.05, rho, 100.0, 3)).map_err(err)?;
        let pts: Vec<Point> = random_points(m, 100, 41).into_iter().map(|p| p.scale(0.999)).collect();
        for r in [0.3, 0.5, 2.0] {
            let cert = verify_scaling(&plug, r, &pts).map_err(err)?;
            ok &= cert.verdict;
            let a = cert.check("action_scaling").map(|c| c.measured).unwrap_or(f64::NAN);
            let c = cert.check("calabi_scaling").map(|c| c.measured).unwrap_or(f64::NAN);
            notes.push(format!("m={m} r={r}: action {a:.1e}, calabi rel {c:.1e}"));
        }
    }
    Ok((ok, notes.join("; ")))
}

fn chi_suite() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for delta in [0.05, 0.1, 0.3, 0.45] {
        let chi = build_chi(delta).map_err(err)?;
        let cert = verify_chi(&chi, 10_000);
        let (v, _) = chi_violations(&chi, delta, 10_000);
        ok &= cert.verdict;
        notes.push(format!(
            "delta={delta}: {} ({:?})",
            if cert.verdict { "clean" } else { "violated" },
            v
        ));
    }
    Ok((ok, notes.join("; ")))
}

fn sphere(m: usize, c: f64, n: usize, rho: f64) -> Result<plug_core::Certificate, String> {
    let o = SphereOverrides {
        n: Some(n),
        rho: Some(rho),
        seed: 7,
        ..SphereOverrides::default()
    };
    sphere_certificate(m, c, &o).map_err(err)
}

fn flagship_m1() -> Outcome {
    let cert = sphere(1, 2.0, 64, 0.6)?;
    let plug_ok = cert.sub("plug_conditions").map(|c| c.verdict).unwrap_or(false);
    let vol = cert.results["torus_volume"];
    let ratio = cert.results["rho_sys_lower_bound"];
    let density = cert.results["achieved_density"];
    let ok = cert.verdict && plug_ok && vol <= PI * PI * 0.5 && ratio >= 2.0 && density >= 0.6;
    Ok((
        ok,
        format!(
            "density {density:.4} (target raised from 0.6 to {:.4}), vol {vol:.5} <= {:.5}, certified rho(S^3) >= {ratio:.4}",
            cert.results["rho_target_used"],
            PI * PI * 0.5
        ),
    ))
}

fn flagship_m2() -> Outcome {
    let cert = sphere(2, 1.2, 32, 0.25)?;
    let density = cert.results["achieved_density"];
    let ratio = cert.results["rho_sys_lower_bound"];
    let ok = cert.verdict && density >= 0.25 && ratio >= 1.2;
    Ok((
        ok,
        format!(
            "density {density:.4}, {} balls, vol {:.4}, certified rho(S^5) >= {ratio:.4}",
            cert.results["balls_total"], cert.results["torus_volume"]
        ),
    ))
}

fn zoll() -> Outcome {
    let vals: Vec<f64> = (1..=3).map(zoll_baseline).collect::<Result<_, _>>().map_err(err)?;
    Ok((vals.iter().all(|v| *v == 1.0), format!("{vals:?}")))
}

fn pullback() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for m in [1, 2] {
        let cert = verify_pullback(m, 1000, 5).map_err(err)?;
        ok &= cert.verdict;
        notes.push(format!(
            "m={m}: max err {:.2e}, Richardson ratio {:.3}",
            cert.results["max_error_fine"],
            cert.check("richardson_ratio").map(|c| c.measured).unwrap_or(f64::NAN)
        ));
    }
    Ok((ok, notes.join("; ")))
}

fn torus_two_routes() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for rho in [0.6, 0.0] {
        let plug = build_plug(&PlugParams::new(1, PI, 64, 0.05, 0.05, rho, 100.0, 7)).map_err(err)?;
        let tv = torus_volume(&plug, 1_000_000, 9).map_err(err)?;
        ok &= tv.agree;
        let base = PI * PI;
        if rho == 0.0 {
            ok &= tv.closed_form >= base && tv.closed_form <= base + 2.0 * PI * PI / 64.0;
        }
        notes.push(format!(
            "rho={rho}: closed {:.6} vs MC {:.6} +- {:.6}",
            tv.closed_form, tv.monte_carlo.value, tv.monte_carlo.std_error
        ));
    }
    Ok((ok, notes.join("; ")))
}

fn gamma_case(s: f64, delta: f64, rho: f64) -> Result<String, String> {
    let curve = build_gamma(s, delta, rho).map_err(err)?;
    let shape = verify_gamma(&curve, GAMMA_GRID);
    let tau = return_time_profile(&curve, GAMMA_GRID);
    let (pos, _) = contact_positivity(&curve, 2, delta, GAMMA_GRID);
    let vol = collar_volume_bounds(&curve, 2, 1.0).map_err(err)?;
    if shape.verdict && tau.verdict && pos > 0.0 && vol.verdict {
        Ok(format!("r0={:.4} r1={:.4}", curve.r0, curve.r1))
    } else {
        let failed: Vec<String> = shape
            .failed_checks()
            .into_iter()
            .chain(tau.failed_checks())
            .chain(vol.failed_checks())
            .map(|c| c.name.clone())
            .collect();
        Err(format!("checks failed: {failed:?}, positivity {pos:.3e}"))
    }
}

fn gamma_suite() -> Outcome {
    let mut failures = Vec::new();
    let mut passes = 0;
    for ks in [0.9, 1.0, 1.1] {
        for kd in [0.9, 1.0, 1.1] {
            for kr in [0.9, 1.0, 1.1] {
                let (s, d, r) = (0.02 * ks, 0.05 * kd, 0.3 * kr);
                match gamma_case(s, d, r) {
                    Ok(_) => passes += 1,
                    Err(e) => failures.push(format!("({s:.3}, {d:.3}, {r:.3}): {e}")),
                }
            }
        }
    }
    let control = gamma_case(0.02, 0.05, 0.99)
        .map(|s| format!("passes ({s})"))
        .unwrap_or_else(|e| format!("fails: {e}"));
    Ok((
        failures.is_empty(),
        format!(
            "{passes}/27 requested curves admissible; first failure {}; control rho=0.99 {control}",
            failures.first().cloned().unwrap_or_default()
        ),
    ))
}

fn determinism() -> Outcome {
    let o = SphereOverrides {
        z_grid: 2000,
        t_grid: 20,
        mc_samples: 200_000,
        ..SphereOverrides::default()
    };
    let a = sphere_certificate(1, 2.0, &o).map_err(err)?.payload_json();
    let b = sphere_certificate(1, 2.0, &o).map_err(err)?.payload_json();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(err)?;
    let c = pool
        .install(|| sphere_certificate(1, 2.0, &o))
        .map_err(err)?
        .payload_json();
    let f1 = pack_sector(2, 16, 0.1, 0.05, 100_000, 4).map_err(err)?.to_json();
    let f2 = pack_sector(2, 16, 0.1, 0.05, 100_000, 4).map_err(err)?.to_json();
    let ok = a == b && a == c && f1 == f2;
    Ok((
        ok,
        format!(
            "sphere payload {} bytes, identical across runs and thread counts: {}",
            a.len(),
            a == b && a == c
        ),
    ))
}

struct SteepChi(CutoffChi);

impl RadialProfile for SteepChi {
    fn value(&self, s: f64) -> f64 {
        let a = self.0.join;
        self.0.value(s) - 0.5 * s.min(a)
    }
    fn deriv(&self, s: f64) -> f64 {
        self.0.deriv(s) - if s < self.0.join { 0.5 } else { 0.0 }
    }
    fn second(&self, s: f64) -> f64 {
        self.0.second(s)
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.0.breakpoints()
    }
}

struct RadialLine<'a>(&'a plug_core::collar::ProfileCurve);

impl Curve for RadialLine<'_> {
    fn jet(&self, r: f64) -> CurveJet {
        let g = self.0.jet(r).g;
        CurveJet {
            f: [0.5 * g[0], 0.5 * g[1], 0.5 * g[2]],
            g,
        }
    }
    fn rho(&self) -> f64 {
        self.0.rho
    }
}

fn negative_controls() -> Outcome {
    let chi = build_chi(0.1).map_err(err)?;
    let steep = verify_chi_profile(&SteepChi(chi), 0.1, 10_000);
    let chi_caught = !steep.verdict;

    let mut family = pack_sector(1, 8, 0.3, 0.05, 10_000, 2).map_err(err)?;
    let first = family.balls[0].clone();
    family.balls.push(Ball {
        center: first
            .center
            .add(&Point::new(vec![0.1 * first.radius, 0.0]).map_err(err)?),
        radius: 0.5 * first.radius,
    });
    let overlap_caught = !verify_packing(&family)
        .check("disjoint")
        .map(|c| c.passed)
        .unwrap_or(true);

    let mut p = PlugParams::new(1, PI, 16, 0.05, 0.05, 0.5, 100.0, 5);
    p.c = p.l;
    let bad = build_plug(&p).map_err(err)?;
    let cert = verify_b1_to_b4(&bad, 20, 2000).map_err(err)?;
    let plug_caught =
        !cert.check("b1_analytic").map(|c| c.passed).unwrap_or(true) && min_period_bound(&bad, &cert).is_err();

    let curve = build_gamma(0.02, 0.05, 0.99).map_err(err)?;
    let line = RadialLine(&curve);
    let g4_caught = !verify_shape(&line, 2000)
        .check("g4_turning")
        .map(|c| c.passed)
        .unwrap_or(true)
        && contact_positivity(&line, 2, 0.05, 2000).0 <= 0.0;

    Ok((
        chi_caught && overlap_caught && plug_caught && g4_caught,
        format!(
            "steep chi {chi_caught}, overlapping balls {overlap_caught}, c = L plug {plug_caught}, (g4)-violating curve {g4_caught}"
        ),
    ))
}

fn main() -> ExitCode {
    let criteria: Vec<Criterion> = vec![
        (
            "action closed form vs oracle",
            Duration::from_secs(30),
            action_vs_oracle,
        ),
        ("Calabi cross-check", Duration::from_secs(120), calabi_cross_check),
        ("scaling laws", Duration::MAX, scaling_laws),
        ("chi suite", Duration::MAX, chi_suite),
        ("plug certificate m=1", Duration::from_secs(600), flagship_m1),
        ("plug certificate m=2", Duration::from_secs(1800), flagship_m2),
        ("Zoll baseline", Duration::MAX, zoll),
        ("pullback identity", Duration::MAX, pullback),
        ("torus volume two routes", Duration::MAX, torus_two_routes),
        ("gamma suite", Duration::from_secs(27 * 60), gamma_suite),
        ("determinism", Duration::MAX, determinism),
        ("negative controls", Duration::MAX, negative_controls),
    ];
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        let (ok, detail) = match outcome {
            Ok((ok, d)) => (ok && took <= budget, d),
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} {name}: {detail} [{:.1} s]",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            took.as_secs_f64()
        );
    }
    println!("acceptance: {} of 12 criteria pass", 12 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
