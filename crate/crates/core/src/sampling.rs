//! Sampling utilities: uniform points in balls, Monte-Carlo means with
//! standard errors, and a Halton low-discrepancy sequence.
//!
//! Monte-Carlo runs are split into fixed-size chunks, each drawing from its
//! own ChaCha stream derived from the seed, and the per-chunk partial sums are
//! combined in chunk order. The result is therefore bitwise identical for any
//! number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::Point;

pub const CHUNK: usize = 4096;

/// A Monte-Carlo estimate of an integral with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl Estimate {
    /// Whether `x` lies within `k` standard errors of the estimate.
    pub fn agrees_with(&self, x: f64, k: f64) -> bool {
        (self.value - x).abs() <= k * self.std_error
    }
}

pub fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// Uniform point in the ball `B(center, radius)` of ℝ^{2m}.
pub fn uniform_in_ball<R: Rng + ?Sized>(rng: &mut R, center: &[f64], radius: f64) -> Point {
    let d = center.len();
    let mut g: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / d as f64);
    for (gi, ci) in g.iter_mut().zip(center) {
        *gi = ci + r * *gi / norm;
    }
    Point::new(g).expect("finite sample")
}

/// Monte-Carlo mean of `f` over the uniform distribution on `B(center, radius)`.
///
/// Returns `(mean, standard error of the mean)`.
pub fn ball_mean<F>(f: F, center: &[f64], radius: f64, samples: usize, seed: u64) -> (f64, f64)
where
    F: Fn(&Point) -> f64 + Sync,
{
    if samples == 0 {
        return (0.0, 0.0);
    }
    let chunks = samples.div_ceil(CHUNK);
    let partial: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c as u64);
            let count = CHUNK.min(samples - c * CHUNK);
            let mut s = 0.0;
            let mut s2 = 0.0;
            for _ in 0..count {
                let p = uniform_in_ball(&mut rng, center, radius);
                let v = f(&p);
                s += v;
                s2 += v * v;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = partial.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let n = samples as f64;
    let mean = s / n;
    let var = if samples > 1 {
        ((s2 - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    (mean, (var / n).sqrt())
}

const PRIMES: [u32; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % b) as f64;
        i /= b;
        f *= inv;
    }
    r
}

/// The `i`-th point of the Halton sequence in `[0,1)^dim`.
pub fn halton(i: u64, dim: usize) -> Vec<f64> {
    assert!(
        dim <= PRIMES.len(),
        "Halton sequence supports up to {} dimensions",
        PRIMES.len()
    );
    PRIMES[..dim].iter().map(|&p| radical_inverse(i, p)).collect()
}

/// `count` deterministic quasi-random points of the open ball `B(0, radius)`
/// in ℝ^{2m}, by rejection of Halton points of the cube.
pub fn halton_ball(m: usize, radius: f64, count: usize) -> Vec<Point> {
    let d = 2 * m;
    let mut out = Vec::with_capacity(count);
    let mut i = 1u64;
    while out.len() < count {
        let h = halton(i, d);
        i += 1;
        let c: Vec<f64> = h.iter().map(|u| radius * (2.0 * u - 1.0)).collect();
        if c.iter().map(|x| x * x).sum::<f64>() < radius * radius {
            out.push(Point::new(c).expect("finite"));
        }
    }
    out
}

/// Quasi-random points on the sphere of radius `r` (Halton points pushed
/// through Box–Muller, then normalized).
pub fn halton_shell(m: usize, r: f64, count: usize, offset: u64) -> Vec<Point> {
    let d = 2 * m;
    (0..count as u64)
        .map(|i| {
            let h = halton(i + 1 + offset, d);
            let mut g = Vec::with_capacity(d);
            for pair in h.chunks(2) {
                let u1 = pair[0].max(1e-12);
                let u2 = pair.get(1).copied().unwrap_or(0.5);
                let rad = (-2.0 * u1.ln()).sqrt();
                let a = 2.0 * std::f64::consts::PI * u2;
                g.push(rad * a.cos());
                g.push(rad * a.sin());
            }
            g.truncate(d);
            let n = g.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
            Point::new(g.into_iter().map(|x| r * x / n).collect()).expect("finite")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_samples_are_inside() {
        let mut rng = chunk_rng(1, 0);
        for _ in 0..1000 {
            let p = uniform_in_ball(&mut rng, &[0.1, 0.2, 0.0, 0.0], 0.5);
            assert!(p.sub(&Point::new(vec![0.1, 0.2, 0.0, 0.0]).unwrap()).norm() <= 0.5);
        }
    }

    #[test]
    fn mean_of_radius_squared() {
        // E|x|² over the unit 4-ball is 4/6
        let (mean, se) = ball_mean(|p| p.norm_sqr(), &[0.0; 4], 1.0, 200_000, 9);
        assert!((mean - 4.0 / 6.0).abs() < 4.0 * se, "{mean} ± {se}");
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let f = |p: &Point| p.coords()[0].powi(2);
        let a = ball_mean(f, &[0.0; 2], 1.0, 50_000, 3);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| ball_mean(f, &[0.0; 2], 1.0, 50_000, 3));
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1.to_bits(), b.1.to_bits());
    }

    #[test]
    fn halton_first_points() {
        assert_eq!(halton(1, 2), vec![0.5, 1.0 / 3.0]);
        assert_eq!(halton(2, 2), vec![0.25, 2.0 / 3.0]);
        let pts = halton_ball(2, 0.9, 500);
        assert!(pts.iter().all(|p| p.norm() < 0.9));
    }
}
