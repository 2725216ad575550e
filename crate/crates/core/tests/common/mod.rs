//! Shared fixtures for the integration suites: an independent subgradient
//! oracle for the ranking QP, random problem generators, and synthetic
//! textures for the flow tests. Everything here stays deliberately naive so
//! it cannot share a failure mode with the library's solver.

use dynaflow::rankpool::RankingProblem;
use dynaflow::GrayFrame;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Primal objective evaluated from materialized difference vectors.
pub fn objective_direct(diffs: &[Vec<f64>], c: f64, weights: &[f64]) -> f64 {
    let reg: f64 = weights.iter().map(|w| w * w).sum();
    let hinge: f64 = diffs
        .iter()
        .map(|x| {
            let score: f64 = weights.iter().zip(x).map(|(a, b)| a * b).sum();
            (1.0 - score).max(0.0)
        })
        .sum();
    reg + c * hinge
}

/// Long-horizon subgradient descent with the diminishing schedule
/// `eta_t = 1 / (2 t)` (the objective is 2-strongly convex), tracking the
/// best objective seen. Slow and simple on purpose.
pub fn subgradient_oracle(diffs: &[Vec<f64>], c: f64, iterations: usize) -> (Vec<f64>, f64) {
    let dim = diffs.first().map(Vec::len).unwrap_or(0);
    let mut f = vec![0.0f64; dim];
    let mut best_obj = objective_direct(diffs, c, &f);
    let mut best_f = f.clone();
    for t in 1..=iterations {
        let mut grad: Vec<f64> = f.iter().map(|x| 2.0 * x).collect();
        let mut obj: f64 = f.iter().map(|x| x * x).sum();
        for x in diffs {
            let score: f64 = f.iter().zip(x).map(|(a, b)| a * b).sum();
            if score < 1.0 {
                obj += c * (1.0 - score);
                for (g, xi) in grad.iter_mut().zip(x) {
                    *g -= c * xi;
                }
            }
        }
        if obj < best_obj {
            best_obj = obj;
            best_f = f.clone();
        }
        let eta = 1.0 / (2.0 * t as f64);
        for (fi, gi) in f.iter_mut().zip(&grad) {
            *fi -= eta * gi;
        }
    }
    let final_obj = objective_direct(diffs, c, &f);
    if final_obj < best_obj {
        best_obj = final_obj;
        best_f = f;
    }
    (best_f, best_obj)
}

/// Materializes every difference vector of a problem.
pub fn materialize_diffs(problem: &RankingProblem) -> Vec<Vec<f64>> {
    problem.diffs().collect()
}

/// Random flattened frames with entries in [-1, 1].
pub fn random_frames(rng: &mut ChaCha8Rng, t: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..t)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect())
        .collect()
}

/// Smooth random texture for flow tests: seeded noise softened by box blurs
/// so pyramid downsampling keeps usable structure.
pub fn smooth_texture(w: usize, h: usize, seed: u64) -> GrayFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vals: Vec<f32> = (0..w * h).map(|_| rng.random_range(0.0..255.0)).collect();
    for _ in 0..2 {
        let mut next = vals.clone();
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for dy in -1i32..=1 {
                    for dx in -1i32..=1 {
                        let sx = (x as i32 + dx).rem_euclid(w as i32) as usize;
                        let sy = (y as i32 + dy).rem_euclid(h as i32) as usize;
                        acc += vals[sy * w + sx];
                    }
                }
                next[y * w + x] = acc / 9.0;
            }
        }
        vals = next;
    }
    let min = vals.iter().copied().fold(f32::INFINITY, f32::min);
    let max = vals.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let scale = 255.0 / (max - min);
    GrayFrame::new(
        w,
        h,
        vals.iter().map(|v| ((v - min) * scale) as u8).collect(),
    )
    .unwrap()
}

/// Torus shift: `next(x, y) = frame(x - dx, y - dy)`, so the recovered flow
/// should be `(dx, dy)`.
pub fn shift_wrap(frame: &GrayFrame, dx: i32, dy: i32) -> GrayFrame {
    let (w, h) = (frame.width(), frame.height());
    let mut vals = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let sx = (x as i32 - dx).rem_euclid(w as i32) as usize;
            let sy = (y as i32 - dy).rem_euclid(h as i32) as usize;
            vals[y * w + x] = frame.get(sx, sy);
        }
    }
    GrayFrame::new(w, h, vals).unwrap()
}
