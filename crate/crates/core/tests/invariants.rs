//! Property tests for the structural invariants of each module.

use std::f64::consts::PI;
use std::sync::OnceLock;

use plug_core::bump::{bump_action, bump_flow, BumpSpec};
use plug_core::collar::build_gamma;
use plug_core::geometry::{ball_in_sector_margin, lambda_eval, omega_pair, sector_membership, SectorGeometry};
use plug_core::packing::{pack_sector, BallFamily};
use plug_core::plug::{build_plug, PlugDescriptor, PlugParams};
use plug_core::radial::{radial_action, radial_flow, RadialHamiltonian};
use plug_core::sampling::{chunk_rng, uniform_in_ball};
use plug_core::sphere::{sphere_certificate, SphereOverrides};
use plug_core::Point;
use proptest::prelude::*;
use rand::Rng;

fn point_in_ball(m: usize) -> impl Strategy<Value = Point> {
    prop::collection::vec(-1.0f64..1.0, 2 * m)
        .prop_filter("inside the unit ball", |v| v.iter().map(|x| x * x).sum::<f64>() < 0.999)
        .prop_map(|v| Point::new(v).unwrap())
}

fn vector(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 2 * m)
}

fn small_plug() -> &'static PlugDescriptor {
    static PLUG: OnceLock<PlugDescriptor> = OnceLock::new();
    PLUG.get_or_init(|| build_plug(&PlugParams::new(1, PI, 16, 0.05, 0.05, 0.5, 100.0, 5)).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lambda_is_linear_and_differentiates_to_omega(
        z in point_in_ball(2), u in vector(2), v in vector(2), a in -2.0f64..2.0,
    ) {
        let w: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + y).collect();
        let lin = a * lambda_eval(&z, &u).unwrap() + lambda_eval(&z, &v).unwrap();
        prop_assert!((lambda_eval(&z, &w).unwrap() - lin).abs() < 1e-12);

        let h = 1e-5;
        let shifted = |dir: &[f64], k: f64| Point::new(z.coords().iter().zip(dir).map(|(c, d)| c + k * d).collect()).unwrap();
        let d_dir = |dir: &[f64], arg: &[f64]| {
            (lambda_eval(&shifted(dir, h), arg).unwrap() - lambda_eval(&shifted(dir, -h), arg).unwrap()) / (2.0 * h)
        };
        let d_lambda = d_dir(&u, &v) - d_dir(&v, &u);
        prop_assert!((d_lambda - omega_pair(&u, &v).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn sectors_rotate_into_each_other(z in point_in_ball(2), n in 2usize..40) {
        let geom = SectorGeometry::new(2, n).unwrap();
        let pos = z.last().arg().rem_euclid(2.0 * PI) / geom.width();
        prop_assume!(z.last().norm() > 1e-6 && (pos - pos.round()).abs() > 1e-9);
        let k = sector_membership(&geom, &z).unwrap();
        let next = sector_membership(&geom, &z.rotate(geom.width())).unwrap();
        prop_assert_eq!(next, k % n + 1);
    }

    #[test]
    fn positive_margin_means_contained_ball(
        c in point_in_ball(2), r in 0.001f64..0.3, n in 2usize..16, seed in any::<u64>(),
    ) {
        let geom = SectorGeometry::new(2, n).unwrap();
        let Ok(margin) = ball_in_sector_margin(&geom, &c, r) else { return Ok(()) };
        prop_assume!(margin > 0.0);
        let k = sector_membership(&geom, &c).unwrap();
        let mut rng = chunk_rng(seed, 0);
        for _ in 0..1000 {
            let dir: Vec<f64> = (0..4).map(|_| rng.random::<f64>() - 0.5).collect();
            let len = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            let p = Point::new(c.coords().iter().zip(&dir).map(|(a, d)| a + r * d / len).collect()).unwrap();
            prop_assert_eq!(sector_membership(&geom, &p), Some(k));
            prop_assert!(p.norm() < 1.0);
        }
    }

    #[test]
    fn radial_flow_preserves_norm_and_action_range(
        m in 1usize..=3, n in 2usize..64, delta in 0.01f64..0.49, t in -3.0f64..3.0, seed in any::<u64>(),
    ) {
        let h = RadialHamiltonian::plus(m, n, delta).unwrap();
        let mut rng = chunk_rng(seed, 0);
        for _ in 0..50 {
            let z = uniform_in_ball(&mut rng, &vec![0.0; 2 * m], 1.0);
            let moved = radial_flow(&h, t, &z).unwrap();
            prop_assert!((moved.norm() - z.norm()).abs() <= 1e-15 * (1.0 + z.norm()));
            let s = radial_action(&h, &z).unwrap();
            prop_assert!(s >= 0.0 && s <= PI / n as f64 * (1.0 - delta), "{}", s);
        }
    }

    #[test]
    fn bumps_vanish_outside_their_ball(
        cx in -0.3f64..0.3, cy in -0.3f64..0.3, r in 0.05f64..0.5, strength in 0.1f64..3.0,
        eps in 0.01f64..0.45, t in 0.0f64..1.0, seed in any::<u64>(),
    ) {
        let spec = BumpSpec::new(Point::new(vec![cx, cy]).unwrap(), r, strength, eps).unwrap();
        let mut rng = chunk_rng(seed, 0);
        for _ in 0..50 {
            let a: f64 = rng.random::<f64>() * 2.0 * PI;
            let rr = r * (1.0 + 1e-9 + rng.random::<f64>() * 0.5);
            let z = Point::new(vec![cx + rr * a.cos(), cy + rr * a.sin()]).unwrap();
            let moved = bump_flow(&spec, t, &z);
            prop_assert_eq!(moved.coords(), z.coords());
            prop_assert_eq!(bump_action(&spec, t, &z), 0.0);
        }
    }

    #[test]
    fn plug_actions_stay_within_their_bounds(z in point_in_ball(1), t in 0.0f64..=1.0) {
        let plug = small_plug();
        let n = plug.params.n as f64;
        let minus = plug.minus_action(t, &z);
        prop_assert!(minus >= -plug.params.c - PI / n && minus <= PI / n, "{}", minus);
        let s = plug.action(t, &z);
        prop_assert!(s >= plug.sigma_lower_bound() - 1e-12 && s <= plug.sigma_upper_bound() + 1e-12);
        prop_assert!(plug.tau(&z) > 0.0);
    }

    #[test]
    fn feasible_collar_curves_have_flat_return_time_ends(s in 0.005f64..0.04, delta in 0.03f64..0.1) {
        let Ok(curve) = build_gamma(s, delta, 0.99) else { return Ok(()) };
        for i in 0..=100 {
            let r = curve.r0 * i as f64 / 100.0;
            prop_assert!((curve.tau(r) - 1.0).abs() <= 1e-12);
            let q = curve.r1 + (curve.rho - curve.r1) * i as f64 / 100.0;
            prop_assert!((curve.tau(q) - 1.0 / (1.0 + delta)).abs() <= 1e-12);
        }
    }
}

#[test]
fn ball_family_json_round_trips() {
    let family = pack_sector(2, 16, 0.1, 0.05, 10_000, 3).unwrap();
    let back = BallFamily::from_json(&family.to_json()).unwrap();
    assert_eq!(back.to_json(), family.to_json());
}

#[test]
fn certified_ratio_grows_with_packing_density() {
    let mut last = 0.0;
    for rho in [0.2, 0.4, 0.6] {
        let o = SphereOverrides {
            rho: Some(rho),
            auto_density: false,
            z_grid: 2000,
            t_grid: 20,
            mc_samples: 100_000,
            ..SphereOverrides::default()
        };
        let cert = sphere_certificate(1, 1.0, &o).unwrap();
        let c = cert.results["C_achieved"];
        assert!(c >= last, "rho = {rho}: {c} < {last}");
        assert!(c > 1.0);
        last = c;
    }
}
