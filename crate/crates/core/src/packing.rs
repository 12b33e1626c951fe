//! Packings of disjoint closed balls into the sector `U_1` of the ball
//! `B(0, √(1−2δ))`, their replication over the `ℤ_n` Hopf rotation, and an
//! exhaustive re-verification of the packing invariants.
//!
//! Balls are stored in a multi-scale spatial hash: a ball of radius in
//! `(R/2, R]` with `R = cap/2^s` lives in grid `s`, whose cells have side
//! `2R`, and is registered in every cell its bounding box meets.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificate::{Certificate, Check, Evidence};
use crate::error::{Error, Result};
use crate::geometry::{ball_in_sector_margin_within, wall_clearance, Point, SectorGeometry};
use crate::sampling::{ball_mean, chunk_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Point,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallFamily {
    pub m: usize,
    pub n: usize,
    pub delta: f64,
    /// Number of sectors the family covers: 1 for a packing of `U_1`, `n` after
    /// replication.
    pub sectors: usize,
    pub rho_target: f64,
    pub achieved_density: f64,
    pub target_met: bool,
    pub seed: u64,
    pub balls: Vec<Ball>,
}

impl BallFamily {
    pub fn outer_radius(&self) -> f64 {
        (1.0 - 2.0 * self.delta).sqrt()
    }

    pub fn cap(&self) -> f64 {
        PI / self.n as f64
    }

    /// Σ V(B_j) / (sectors · V(B(0, √(1−2δ))) / n).
    pub fn density(&self) -> f64 {
        density_of(self.m, self.n, self.delta, self.sectors, &self.balls)
    }

    /// Σ r_j^{2m}.
    pub fn radius_power_sum(&self) -> f64 {
        let e = 2 * self.m as i32;
        self.balls.iter().map(|b| b.radius.powi(e)).sum()
    }

    pub fn index(&self) -> BallIndex {
        let mut idx = BallIndex::new(2 * self.m, self.cap().max(self.max_radius()));
        for (i, b) in self.balls.iter().enumerate() {
            idx.insert(i, b);
        }
        idx
    }

    pub fn max_radius(&self) -> f64 {
        self.balls.iter().map(|b| b.radius).fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("family serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn density_of(m: usize, n: usize, delta: f64, sectors: usize, balls: &[Ball]) -> f64 {
    let e = 2 * m as i32;
    let outer = (1.0 - 2.0 * delta).powi(m as i32);
    let sum: f64 = balls.iter().map(|b| b.radius.powi(e)).sum();
    sum / (outer * sectors as f64 / n as f64)
}

fn cell_hash(cells: &[i64], scale: usize) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64 ^ scale as u64;
    for &c in cells {
        h ^= c as u64;
        h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 31;
    }
    h
}

/// Calls `f` on every integer vector in the box `lo..=hi`.
fn for_each_cell(lo: &[i64], hi: &[i64], mut f: impl FnMut(&[i64])) {
    let d = lo.len();
    let mut cur = lo.to_vec();
    loop {
        f(&cur);
        let mut k = 0;
        loop {
            if k == d {
                return;
            }
            if cur[k] < hi[k] {
                cur[k] += 1;
                break;
            }
            cur[k] = lo[k];
            k += 1;
        }
    }
}

/// Multi-scale spatial hash over a set of balls.
#[derive(Debug, Clone)]
pub struct BallIndex {
    dim: usize,
    cap: f64,
    grids: Vec<HashMap<u64, Vec<u32>>>,
    centers: Vec<f64>,
    radii: Vec<f64>,
    scales: Vec<usize>,
}

const MAX_SCALES: usize = 48;

impl BallIndex {
    pub fn new(dim: usize, cap: f64) -> Self {
        Self {
            dim,
            cap,
            grids: Vec::new(),
            centers: Vec::new(),
            radii: Vec::new(),
            scales: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    fn scale_of(&self, r: f64) -> usize {
        let s = (self.cap / r).log2().floor();
        if s.is_finite() && s > 0.0 {
            (s as usize).min(MAX_SCALES - 1)
        } else {
            0
        }
    }

    fn cell_side(&self, s: usize) -> f64 {
        2.0 * self.cap / (1u64 << s) as f64
    }

    fn cell_box(&self, s: usize, center: &[f64], reach: f64) -> (Vec<i64>, Vec<i64>) {
        let side = self.cell_side(s);
        let lo = center.iter().map(|c| ((c - reach) / side).floor() as i64).collect();
        let hi = center.iter().map(|c| ((c + reach) / side).floor() as i64).collect();
        (lo, hi)
    }

    fn center(&self, i: usize) -> &[f64] {
        &self.centers[i * self.dim..(i + 1) * self.dim]
    }

    /// Registers ball `id`; ids must be inserted in increasing order from 0.
    pub fn insert(&mut self, id: usize, ball: &Ball) {
        debug_assert_eq!(id, self.radii.len());
        let s = self.scale_of(ball.radius);
        while self.grids.len() <= s {
            self.grids.push(HashMap::new());
        }
        self.centers.extend_from_slice(ball.center.coords());
        self.radii.push(ball.radius);
        self.scales.push(s);
        let (lo, hi) = self.cell_box(s, ball.center.coords(), ball.radius);
        let grid = &mut self.grids[s];
        for_each_cell(&lo, &hi, |cell| {
            grid.entry(cell_hash(cell, s)).or_default().push(id as u32);
        });
    }

    fn dist(&self, i: usize, p: &[f64]) -> f64 {
        self.center(i)
            .iter()
            .zip(p)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Index of the open ball containing `p`, if any.
    pub fn containing(&self, p: &[f64]) -> Option<usize> {
        for (s, grid) in self.grids.iter().enumerate() {
            let side = self.cell_side(s);
            let cell: Vec<i64> = p.iter().map(|c| (c / side).floor() as i64).collect();
            if let Some(ids) = grid.get(&cell_hash(&cell, s)) {
                for &id in ids {
                    let id = id as usize;
                    if self.dist(id, p) < self.radii[id] {
                        return Some(id);
                    }
                }
            }
        }
        None
    }

    /// `min_j (‖p − c_j‖ − r_j)` over balls whose surface is within `reach`
    /// of `p`; `+∞` when there are none.
    pub fn nearest_gap(&self, p: &[f64], reach: f64) -> f64 {
        let mut best = f64::INFINITY;
        for (s, grid) in self.grids.iter().enumerate() {
            if grid.is_empty() {
                continue;
            }
            let (lo, hi) = self.cell_box(s, p, reach);
            for_each_cell(&lo, &hi, |cell| {
                if let Some(ids) = grid.get(&cell_hash(cell, s)) {
                    for &id in ids {
                        let id = id as usize;
                        let g = self.dist(id, p) - self.radii[id];
                        if g < best {
                            best = g;
                        }
                    }
                }
            });
        }
        best
    }

    /// All pairs `(i, j)`, `i < j`, with `‖c_i − c_j‖ ≤ r_i + r_j`, and the
    /// smallest gap `‖c_i − c_j‖ − r_i − r_j` among candidate pairs.
    pub fn overlaps(&self) -> (Vec<(usize, usize)>, f64) {
        let per_ball: Vec<(Vec<(usize, usize)>, f64)> = (0..self.len())
            .into_par_iter()
            .map(|a| {
                let mut bad = Vec::new();
                let mut gap = f64::INFINITY;
                let ca = self.center(a);
                let ra = self.radii[a];
                for s in 0..=self.scales[a] {
                    let Some(grid) = self.grids.get(s) else { break };
                    let (lo, hi) = self.cell_box(s, ca, ra);
                    for_each_cell(&lo, &hi, |cell| {
                        if let Some(ids) = grid.get(&cell_hash(cell, s)) {
                            for &b in ids {
                                let b = b as usize;
                                if b == a || (self.scales[b] == self.scales[a] && b < a) {
                                    continue;
                                }
                                let g = self.dist(b, ca) - ra - self.radii[b];
                                gap = gap.min(g);
                                if g <= 0.0 {
                                    bad.push((a.min(b), a.max(b)));
                                }
                            }
                        }
                    });
                }
                (bad, gap)
            })
            .collect();
        let mut bad: Vec<(usize, usize)> = per_ball.iter().flat_map(|(b, _)| b.iter().copied()).collect();
        bad.sort_unstable();
        bad.dedup();
        let gap = per_ball.iter().map(|(_, g)| *g).fold(f64::INFINITY, f64::min);
        (bad, gap)
    }
}

/// Axis-aligned bounding box of the sector `U_1 ∩ B(0, outer)`.
fn sector_box(m: usize, n: usize, outer: f64) -> (Vec<f64>, Vec<f64>) {
    let d = 2 * m;
    let mut lo = vec![-outer; d];
    let mut hi = vec![outer; d];
    let w = 2.0 * PI / n as f64;
    let mut xs = vec![0.0, outer, outer * w.cos()];
    let mut ys = vec![0.0, 0.0, outer * w.sin()];
    for (k, (cx, cy)) in [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)].iter().enumerate() {
        let a = k as f64 * PI / 2.0;
        if a > 0.0 && a < w {
            xs.push(outer * cx);
            ys.push(outer * cy);
        }
    }
    lo[d - 2] = xs.iter().copied().fold(f64::INFINITY, f64::min);
    hi[d - 2] = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    lo[d - 1] = ys.iter().copied().fold(f64::INFINITY, f64::min);
    hi[d - 1] = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Lattice points `origin + k·h` of the box `[lo, hi]` (per axis).
fn axis_points(lo: f64, hi: f64, origin: f64, h: f64) -> Vec<f64> {
    let k0 = ((lo - origin) / h).ceil() as i64;
    let k1 = ((hi - origin) / h).floor() as i64;
    (k0..=k1).map(|k| origin + k as f64 * h).collect()
}

const MAX_LEVELS: usize = 24;
/// Lattice spacing at level `k` in units of the level radius `cap/2^k`.
const SPACING: f64 = 1.5;

/// Greedy multi-scale packing of `U_1 ∩ B(0, √(1−2δ))`.
///
/// Level `k` sweeps a randomly offset cubic lattice of spacing
/// `1.5·cap/2^k`; a lattice point whose free radius (distance to the sector
/// walls, the outer sphere and every placed ball) is at least `cap/2^k`
/// receives a ball of radius `min(free, 2·cap/2^k, cap)` shrunk by a relative
/// `1e−9`. The sweep stops at the first ball that lifts the density to
/// `rho_target`, or when `max_balls` is reached.
pub fn pack_sector(m: usize, n: usize, rho_target: f64, delta: f64, max_balls: usize, seed: u64) -> Result<BallFamily> {
    let geom = SectorGeometry::new(m, n)?;
    if n < 2 {
        return Err(Error::InvalidParameter("packing needs n >= 2".into()));
    }
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "delta must lie in (0, 1/2), got {delta}"
        )));
    }
    if !(0.0..1.0).contains(&rho_target) {
        return Err(Error::InvalidParameter(format!(
            "rho_target must lie in [0, 1), got {rho_target}"
        )));
    }
    let mut family = BallFamily {
        m,
        n,
        delta,
        sectors: 1,
        rho_target,
        achieved_density: 0.0,
        target_met: rho_target <= 0.0,
        seed,
        balls: Vec::new(),
    };
    if family.target_met {
        return Ok(family);
    }
    let d = 2 * m;
    let outer = family.outer_radius();
    let cap = family.cap();
    let unit = outer.powi(2 * m as i32) / n as f64;
    let mut power_sum = 0.0;
    let mut index = BallIndex::new(d, cap);
    let mut rng = chunk_rng(seed, u64::MAX);
    let (lo, hi) = sector_box(m, n, outer);

    'levels: for level in 0..MAX_LEVELS {
        let r_k = cap / (1u64 << level) as f64;
        let h = SPACING * r_k;
        let origin: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * h).collect();
        let xs = axis_points(lo[d - 2], hi[d - 2], origin[d - 2], h);
        let ys = axis_points(lo[d - 1], hi[d - 1], origin[d - 1], h);
        let mut p = vec![0.0; d];
        for &x in &xs {
            for &y in &ys {
                let w2 = x * x + y * y;
                let room = outer - r_k;
                if w2 >= room * room {
                    continue;
                }
                p[d - 2] = x;
                p[d - 1] = y;
                let probe = Point::new(p.clone())?;
                let wall = match wall_clearance(&geom, &probe) {
                    Ok((1, wall)) if wall >= r_k => wall,
                    _ => continue,
                };
                // remaining coordinates range over a ball of radius √(room² − |w|²)
                let rest = (room * room - w2).sqrt();
                let mut done = false;
                sweep_ball(&mut p[..d - 2], rest, &origin[..d - 2], h, &mut |q: &[f64]| {
                    if done {
                        return;
                    }
                    let mut full = q.to_vec();
                    full.push(x);
                    full.push(y);
                    let norm = full.iter().map(|c| c * c).sum::<f64>().sqrt();
                    let free_outer = outer - norm;
                    if free_outer < r_k {
                        return;
                    }
                    let limit = free_outer.min(wall).min(2.0 * r_k).min(cap);
                    let gap = index.nearest_gap(&full, limit);
                    let free = limit.min(gap);
                    if free < r_k {
                        return;
                    }
                    let ball = Ball {
                        center: Point::new(full).expect("finite lattice point"),
                        radius: free * (1.0 - 1e-9),
                    };
                    index.insert(family.balls.len(), &ball);
                    power_sum += ball.radius.powi(d as i32);
                    family.balls.push(ball);
                    if power_sum / unit >= rho_target || family.balls.len() >= max_balls {
                        done = true;
                    }
                });
                if done {
                    break 'levels;
                }
            }
        }
    }
    family.achieved_density = power_sum / unit;
    family.target_met = family.achieved_density >= rho_target;
    Ok(family)
}

/// Visits the lattice points `origin + k·h` of the closed ball `B(0, radius)`
/// in the first `p.len()` coordinates.
fn sweep_ball(p: &mut [f64], radius: f64, origin: &[f64], h: f64, f: &mut dyn FnMut(&[f64])) {
    fn rec(p: &mut [f64], k: usize, left: f64, origin: &[f64], h: f64, f: &mut dyn FnMut(&[f64])) {
        if k == p.len() {
            f(p);
            return;
        }
        let r = left.max(0.0).sqrt();
        for x in axis_points(-r, r, origin[k], h) {
            p[k] = x;
            rec(p, k + 1, left - x * x, origin, h, f);
        }
    }
    rec(p, 0, radius * radius, origin, h, f);
}

/// Applies the Hopf rotations `z ↦ e^{2πik/n} z`, `k = 0..n`, to a family
/// packed in `U_1`.
pub fn replicate_orbit(family: &BallFamily, n: usize) -> Result<BallFamily> {
    if family.sectors != 1 {
        return Err(Error::InvalidParameter(
            "replication expects a single-sector family".into(),
        ));
    }
    if n != family.n {
        return Err(Error::InvalidParameter(format!(
            "family was packed for n = {}, asked to replicate with n = {n}",
            family.n
        )));
    }
    let mut balls = Vec::with_capacity(family.balls.len() * n);
    for k in 0..n {
        let angle = 2.0 * PI * k as f64 / n as f64;
        balls.extend(family.balls.iter().map(|b| Ball {
            center: b.center.rotate(angle),
            radius: b.radius,
        }));
    }
    let mut out = BallFamily {
        sectors: n,
        balls,
        ..family.clone()
    };
    out.achieved_density = out.density();
    Ok(out)
}

/// Re-checks every packing invariant: radii positive and at most `π/n`,
/// containment in a sector of `B(0, √(1−2δ))` with positive margin, pairwise
/// disjointness, equal ball counts per sector, and the recorded density.
///
/// Disjointness uses the spatial index, which returns every pair of balls
/// with intersecting bounding boxes; all other pairs are disjoint a priori.
pub fn verify_packing(family: &BallFamily) -> Certificate {
    let mut cert = Certificate::new("packing").with_params(&serde_json::json!({
        "m": family.m,
        "n": family.n,
        "delta": family.delta,
        "sectors": family.sectors,
        "balls": family.balls.len(),
        "rho_target": family.rho_target,
        "seed": family.seed,
    }));
    let cap = family.cap();
    let outer = family.outer_radius();
    let count = family.balls.len();
    let ev = Evidence::grid(count);

    let max_r = family.max_radius();
    cert.push(Check::at_most("radius_cap", max_r, cap, 0.0, ev.clone()));
    let min_r = family.balls.iter().map(|b| b.radius).fold(f64::INFINITY, f64::min);
    if count > 0 {
        cert.push(Check::above("radius_positive", min_r, 0.0, ev.clone()));
    }

    let geom = SectorGeometry::new(family.m, family.n.max(1));
    let (margin, per_sector) = match geom {
        Ok(geom) => {
            let results: Vec<(f64, usize)> = family
                .balls
                .par_iter()
                .map(|b| {
                    let margin =
                        ball_in_sector_margin_within(&geom, &b.center, b.radius, outer).unwrap_or(f64::NEG_INFINITY);
                    let k = wall_clearance(&geom, &b.center).map(|(k, _)| k).unwrap_or(0);
                    (margin, k)
                })
                .collect();
            let margin = results.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
            let mut per_sector = vec![0usize; family.n + 1];
            for (_, k) in &results {
                per_sector[*k] += 1;
            }
            (margin, per_sector)
        }
        Err(_) => (f64::NEG_INFINITY, vec![0]),
    };
    if count > 0 {
        cert.push(Check::above("sector_margin", margin, 0.0, ev.clone()));
    }
    let occupied: Vec<usize> = per_sector.iter().skip(1).copied().collect();
    let uniform = if family.sectors == family.n {
        occupied.iter().all(|&c| c == occupied[0])
    } else {
        occupied.iter().skip(1).all(|&c| c == 0)
    };
    cert.push(Check::equal(
        "sector_counts",
        if uniform { 1.0 } else { 0.0 },
        1.0,
        0.0,
        Evidence::note(format!(
            "balls per sector: first={} ",
            occupied.first().copied().unwrap_or(0)
        )),
    ));

    let index = family.index();
    let (bad, gap) = index.overlaps();
    let note = match bad.first() {
        Some((i, j)) => format!("{} overlapping pairs, first ({i}, {j})", bad.len()),
        None => "no overlapping pairs".to_string(),
    };
    cert.push(Check::equal(
        "disjoint",
        bad.len() as f64,
        0.0,
        0.0,
        Evidence::note(note),
    ));
    cert.result("min_pair_gap", gap);

    let density = family.density();
    cert.push(Check::equal(
        "density_recomputed",
        density,
        family.achieved_density,
        1e-12 * density.max(1.0),
        ev.clone(),
    ));
    cert.push(Check::at_least("density_target", density, family.rho_target, 0.0, ev).optional());
    cert.result("density", density);
    cert
}

/// Monte-Carlo estimate of the covered fraction of the packed region, with
/// standard error.
pub fn covered_fraction_mc(family: &BallFamily, samples: usize, seed: u64) -> (f64, f64) {
    let index = family.index();
    let outer = family.outer_radius();
    let geom = SectorGeometry::new(family.m, family.n).expect("valid family geometry");
    let d = 2 * family.m;
    let sectors = family.sectors;
    // sample B(0, outer) uniformly and weight by sector membership
    let (mean, se) = ball_mean(
        |p| {
            let in_region = if sectors == family.n {
                true
            } else {
                crate::geometry::sector_membership(&geom, p) == Some(1)
            };
            if in_region && index.containing(p.coords()).is_some() {
                1.0
            } else {
                0.0
            }
        },
        &vec![0.0; d],
        outer,
        samples,
        seed,
    );
    let scale = family.n as f64 / sectors as f64;
    (mean * scale, se * scale)
}
