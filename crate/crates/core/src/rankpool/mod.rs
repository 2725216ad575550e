//! Rank pooling: summarizing an ordered window of frames by the weights of a
//! linear function trained to score them in temporal order.
//!
//! The pipeline is running-average smoothing, pairwise difference
//! construction, and a ranking QP solved by [`solve`]. Two-channel flow
//! windows pool into [`DynamicFlowImage`]; the RGB baseline pools into
//! [`DynamicImage`]. [`approximate_pool`] provides the closed-form fast path
//! with harmonic-number coefficients.

mod render;
mod solver;

pub use render::{render_flow, render_flow_color, render_plane, render_rgb};
pub use solver::{objective, solve, Solution};

use crate::error::{Error, Result};
use crate::flow::RgbFrame;
use crate::preprocess::QuantizedFlowFrame;

/// Two real-valued planes solving the pooling QP over a flow window.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicFlowImage {
    width: usize,
    height: usize,
    fu: Vec<f64>,
    fv: Vec<f64>,
}

impl DynamicFlowImage {
    pub fn new(width: usize, height: usize, fu: Vec<f64>, fv: Vec<f64>) -> Result<Self> {
        let n = width * height;
        if width == 0 || height == 0 || fu.len() != n || fv.len() != n {
            return Err(Error::Dimension(format!(
                "dynamic flow image planes must hold {n} samples, got fu={} fv={}",
                fu.len(),
                fv.len()
            )));
        }
        if fu.iter().chain(fv.iter()).any(|s| !s.is_finite()) {
            return Err(Error::Contract("non-finite pooled sample".into()));
        }
        Ok(DynamicFlowImage {
            width,
            height,
            fu,
            fv,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn fu(&self) -> &[f64] {
        &self.fu
    }

    pub fn fv(&self) -> &[f64] {
        &self.fv
    }

    /// Both planes concatenated, u first: the feature layout used downstream.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.fu.len() * 2);
        out.extend_from_slice(&self.fu);
        out.extend_from_slice(&self.fv);
        out
    }
}

/// Three real-valued planes from pooling RGB frames (the baseline summary).
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicImage {
    width: usize,
    height: usize,
    planes: [Vec<f64>; 3],
}

impl DynamicImage {
    pub fn new(width: usize, height: usize, planes: [Vec<f64>; 3]) -> Result<Self> {
        let n = width * height;
        if width == 0 || height == 0 || planes.iter().any(|p| p.len() != n) {
            return Err(Error::Dimension(format!(
                "dynamic image planes must hold {n} samples each"
            )));
        }
        if planes.iter().flatten().any(|s| !s.is_finite()) {
            return Err(Error::Contract("non-finite pooled sample".into()));
        }
        Ok(DynamicImage {
            width,
            height,
            planes,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        &self.planes[c]
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.planes[0].len() * 3);
        for p in &self.planes {
            out.extend_from_slice(p);
        }
        out
    }
}

/// Ranking problem over a window: smoothed flattened frames, the canonical
/// pair enumeration `(i, j), i < j`, and the regularization weight.
///
/// The difference vectors `x_ij = f_j - f_i` are exposed through
/// [`RankingProblem::diff`] and materialized on demand; there are always
/// exactly `T (T - 1) / 2` of them.
#[derive(Debug, Clone)]
pub struct RankingProblem {
    dim: usize,
    c: f64,
    frames: Vec<Vec<f64>>,
    pairs: Vec<(usize, usize)>,
}

impl RankingProblem {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Number of frames T.
    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.frames[t]
    }

    /// Materializes the difference vector of pair `p`.
    pub fn diff(&self, p: usize) -> Vec<f64> {
        let (i, j) = self.pairs[p];
        self.frames[j]
            .iter()
            .zip(&self.frames[i])
            .map(|(a, b)| a - b)
            .collect()
    }

    /// All difference vectors in canonical pair order.
    pub fn diffs(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.pairs.len()).map(|p| self.diff(p))
    }
}

/// Running-average smoothing: output `t` is the mean of inputs `1..=t`.
/// Flow is signed, so the averaging cancels white noise in the estimates.
pub fn smooth(frames: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let first = frames
        .first()
        .ok_or_else(|| Error::EmptyInput("cannot smooth an empty sequence".into()))?;
    let dim = first.len();
    let mut out = Vec::with_capacity(frames.len());
    let mut acc = vec![0.0f64; dim];
    for (t, frame) in frames.iter().enumerate() {
        if frame.len() != dim {
            return Err(Error::Dimension(format!(
                "frame {t} has length {}, expected {dim}",
                frame.len()
            )));
        }
        for (a, x) in acc.iter_mut().zip(frame) {
            *a += x;
        }
        let inv = 1.0 / (t as f64 + 1.0);
        out.push(acc.iter().map(|a| a * inv).collect());
    }
    Ok(out)
}

/// Builds the ranking problem from already-smoothed frames.
pub fn build_problem(smoothed: &[Vec<f64>], c: f64) -> Result<RankingProblem> {
    let first = smoothed
        .first()
        .ok_or_else(|| Error::EmptyInput("ranking problem needs at least one frame".into()))?;
    let dim = first.len();
    for (t, frame) in smoothed.iter().enumerate() {
        if frame.len() != dim {
            return Err(Error::Dimension(format!(
                "frame {t} has length {}, expected {dim}",
                frame.len()
            )));
        }
    }
    if c <= 0.0 || !c.is_finite() {
        return Err(Error::Config(format!(
            "regularization weight must be positive, got {c}"
        )));
    }
    let t = smoothed.len();
    let mut pairs = Vec::with_capacity(t * (t - 1) / 2);
    for i in 0..t {
        for j in (i + 1)..t {
            pairs.push((i, j));
        }
    }
    Ok(RankingProblem {
        dim,
        c,
        frames: smoothed.to_vec(),
        pairs,
    })
}

/// Smoothing, problem construction and solve settings for one pooling run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_epochs: usize,
    /// Relative objective-change threshold between epochs.
    pub tolerance: f64,
    /// Seed for the shuffled pair order; fixes the solve bit-for-bit.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_epochs: 2000,
            tolerance: 1e-10,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if self.tolerance <= 0.0 || self.tolerance.is_nan() {
            return Err(Error::Config(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

fn pool(frames: Vec<Vec<f64>>, c: f64, cfg: &SolverConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let smoothed = smooth(&frames)?;
    let problem = build_problem(&smoothed, c)?;
    Ok(solve(&problem, cfg).weights)
}

/// Pools a window of conditioned flow frames into a dynamic flow image.
/// Quantized gray values enter the QP as raw floats in `[0, 255]`; the two
/// channels are concatenated into one vector, which is equivalent to summing
/// the per-channel norms and inner products.
pub fn pool_flow(
    conditioned: &[QuantizedFlowFrame],
    c: f64,
    cfg: &SolverConfig,
) -> Result<DynamicFlowImage> {
    let first = conditioned
        .first()
        .ok_or_else(|| Error::EmptyInput("cannot pool an empty window".into()))?;
    let (w, h) = (first.width(), first.height());
    let n = w * h;
    let mut frames = Vec::with_capacity(conditioned.len());
    for (t, q) in conditioned.iter().enumerate() {
        if q.width() != w || q.height() != h {
            return Err(Error::Dimension(format!(
                "frame {t} is {}x{}, expected {w}x{h}",
                q.width(),
                q.height()
            )));
        }
        let mut flat = Vec::with_capacity(n * 2);
        flat.extend(q.u_gray.values().iter().map(|&x| f64::from(x)));
        flat.extend(q.v_gray.values().iter().map(|&x| f64::from(x)));
        frames.push(flat);
    }
    let weights = pool(frames, c, cfg)?;
    DynamicFlowImage::new(w, h, weights[..n].to_vec(), weights[n..].to_vec())
}

/// Pools a window of RGB frames into a dynamic image; identical machinery to
/// [`pool_flow`] over three concatenated channels.
pub fn pool_rgb(frames: &[RgbFrame], c: f64, cfg: &SolverConfig) -> Result<DynamicImage> {
    let first = frames
        .first()
        .ok_or_else(|| Error::EmptyInput("cannot pool an empty window".into()))?;
    let (w, h) = (first.width(), first.height());
    let n = w * h;
    let mut flat_frames = Vec::with_capacity(frames.len());
    for (t, f) in frames.iter().enumerate() {
        if f.width() != w || f.height() != h {
            return Err(Error::Dimension(format!(
                "frame {t} is {}x{}, expected {w}x{h}",
                f.width(),
                f.height()
            )));
        }
        let mut flat = Vec::with_capacity(n * 3);
        flat.extend(f.r().iter().map(|&x| f64::from(x)));
        flat.extend(f.g().iter().map(|&x| f64::from(x)));
        flat.extend(f.b().iter().map(|&x| f64::from(x)));
        flat_frames.push(flat);
    }
    let weights = pool(flat_frames, c, cfg)?;
    DynamicImage::new(
        w,
        h,
        [
            weights[..n].to_vec(),
            weights[n..2 * n].to_vec(),
            weights[2 * n..].to_vec(),
        ],
    )
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

/// Closed-form pooling coefficients with harmonic numbers:
/// `alpha_t = 2 (T - t + 1) - (T + 1) (H_T - H_{t-1})` for `t = 1..=T`.
/// They internalize the running-average smoothing, so they apply to the raw
/// frames, and they always sum to zero.
pub fn pool_coefficients(t: usize) -> Vec<f64> {
    // The sum-to-zero identity cancels terms of size O(T), so the harmonic
    // tails H_T - H_{t-1} = sum_{i=t}^{T} 1/i and the final combination run
    // in double-double arithmetic to keep each coefficient correctly
    // rounded; plain f64 here leaves residues of a few 1e-12.
    let mut tails = vec![(0.0f64, 0.0f64); t + 2];
    for i in (1..=t).rev() {
        let (hi, lo) = tails[i + 1];
        let (s, e) = two_sum(hi, 1.0 / i as f64);
        let lo = lo + e;
        let (hi2, lo2) = two_sum(s, lo);
        tails[i] = (hi2, lo2);
    }
    let m = t as f64 + 1.0;
    (1..=t)
        .map(|k| {
            let (hi, lo) = tails[k];
            let p_hi = m * hi;
            let p_err = m.mul_add(hi, -p_hi);
            let p_lo = m.mul_add(lo, p_err);
            let lead = 2.0 * (t - k + 1) as f64;
            let (s, e) = two_sum(lead, -p_hi);
            s + (e - p_lo)
        })
        .collect()
}

/// Fast approximate pooling: `sum_t alpha_t * frame_t` over the raw frames.
pub fn approximate_pool(frames: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = frames
        .first()
        .ok_or_else(|| Error::EmptyInput("cannot pool an empty sequence".into()))?;
    let dim = first.len();
    let coeffs = pool_coefficients(frames.len());
    let mut out = vec![0.0f64; dim];
    for (t, frame) in frames.iter().enumerate() {
        if frame.len() != dim {
            return Err(Error::Dimension(format!(
                "frame {t} has length {}, expected {dim}",
                frame.len()
            )));
        }
        let a = coeffs[t];
        for (o, x) in out.iter_mut().zip(frame) {
            *o += a * x;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::GrayFrame;

    fn quantized(width: usize, height: usize, u: u8, v: u8) -> QuantizedFlowFrame {
        QuantizedFlowFrame {
            u_gray: GrayFrame::constant(width, height, u).unwrap(),
            v_gray: GrayFrame::constant(width, height, v).unwrap(),
        }
    }

    #[test]
    fn smooth_constant_sequence_is_fixed_point() {
        let seq = vec![vec![4.0, -2.0]; 3];
        assert_eq!(smooth(&seq).unwrap(), seq);
    }

    #[test]
    fn smooth_prefix_means() {
        let out = smooth(&[vec![2.0], vec![4.0]]).unwrap();
        assert_eq!(out, vec![vec![2.0], vec![3.0]]);
        let out = smooth(&[vec![1.0], vec![2.0], vec![6.0]]).unwrap();
        assert_eq!(out, vec![vec![1.0], vec![1.5], vec![3.0]]);
    }

    #[test]
    fn smooth_rejects_empty() {
        assert_eq!(smooth(&[]).unwrap_err().kind(), "empty-input");
    }

    #[test]
    fn build_problem_pair_counts() {
        let frames = vec![vec![0.0]; 3];
        let p = build_problem(&frames, 1.0).unwrap();
        assert_eq!(p.pairs(), &[(0, 1), (0, 2), (1, 2)]);

        let frames = vec![vec![0.0]; 25];
        assert_eq!(build_problem(&frames, 1.0).unwrap().num_pairs(), 300);

        let frames = vec![vec![0.0]; 1];
        assert_eq!(build_problem(&frames, 1.0).unwrap().num_pairs(), 0);
    }

    #[test]
    fn build_problem_constant_frames_have_zero_diffs() {
        let p = build_problem(&vec![vec![5.0, 1.0]; 4], 1.0).unwrap();
        assert!(p.diffs().all(|d| d.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn build_problem_rejects_ragged_frames() {
        let err = build_problem(&[vec![0.0], vec![0.0, 1.0]], 1.0).unwrap_err();
        assert_eq!(err.kind(), "dimension");
    }

    #[test]
    fn pool_flow_identical_frames_gives_zero_image() {
        let window: Vec<_> = (0..5).map(|_| quantized(3, 2, 140, 100)).collect();
        let img = pool_flow(&window, 1.0, &SolverConfig::default()).unwrap();
        assert!(img.fu().iter().all(|&x| x == 0.0));
        assert!(img.fv().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn pool_flow_concentrates_on_the_moving_pixel() {
        // one pixel's u channel increases monotonically, everything else is
        // constant: the pooled energy must concentrate there
        let mut window = Vec::new();
        for t in 0..5u8 {
            let mut u = vec![128u8; 9];
            u[4] = 128 + 10 * t;
            window.push(QuantizedFlowFrame {
                u_gray: GrayFrame::new(3, 3, u).unwrap(),
                v_gray: GrayFrame::constant(3, 3, 128).unwrap(),
            });
        }
        let img = pool_flow(
            &window,
            100.0,
            &SolverConfig {
                max_epochs: 100_000,
                tolerance: 1e-14,
                seed: 0,
            },
        )
        .unwrap();
        let peak = img.fu()[4].abs();
        for (px, x) in img.fu().iter().enumerate() {
            if px != 4 {
                assert!(peak > x.abs(), "pixel {px}: {} vs peak {peak}", x.abs());
            }
        }
    }

    #[test]
    fn pool_rgb_identical_frames_gives_zero_image() {
        let frame = RgbFrame::new(2, 2, vec![9; 4], vec![8; 4], vec![7; 4]).unwrap();
        let img = pool_rgb(&[frame.clone(), frame], 1.0, &SolverConfig::default()).unwrap();
        for c in 0..3 {
            assert!(img.plane(c).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn pool_rgb_brightness_ramp_contaminates_background() {
        // pixel value = t * k on every background pixel: the pooled response
        // is nonzero across the whole background
        let frames: Vec<RgbFrame> = (0..6u8)
            .map(|t| {
                let v = vec![t * 20; 16];
                RgbFrame::new(4, 4, v.clone(), v.clone(), v).unwrap()
            })
            .collect();
        let img = pool_rgb(&frames, 1.0, &SolverConfig::default()).unwrap();
        let norm: f64 = img.flatten().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm > 1e-3, "ramp response should be clearly nonzero: {norm}");
        assert!(img.plane(0).iter().all(|&x| x > 0.0));
    }

    #[test]
    fn pool_rgb_two_frame_reversal_negates_result() {
        // For two-frame windows smoothing commutes with reversal, so the
        // pooled image flips sign exactly (within solver tolerance).
        let a = RgbFrame::new(2, 2, vec![10, 40, 90, 5], vec![0; 4], vec![200; 4]).unwrap();
        let b = RgbFrame::new(2, 2, vec![90, 10, 40, 80], vec![30; 4], vec![100; 4]).unwrap();
        let cfg = SolverConfig {
            max_epochs: 100_000,
            tolerance: 1e-15,
            seed: 3,
        };
        let fwd = pool_rgb(&[a.clone(), b.clone()], 1.0, &cfg).unwrap();
        let rev = pool_rgb(&[b, a], 1.0, &cfg).unwrap();
        for (x, y) in fwd.flatten().iter().zip(rev.flatten()) {
            assert!((x + y).abs() < 1e-8, "{x} vs {y}");
        }
    }

    #[test]
    fn approximate_pool_known_coefficients() {
        assert_eq!(pool_coefficients(1), vec![0.0]);
        let c2 = pool_coefficients(2);
        assert_eq!(c2, vec![-0.5, 0.5]);

        // single frame pools to zero
        let out = approximate_pool(&[vec![3.0, 9.0]]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn approximate_pool_kills_constant_sequences() {
        for t in [1usize, 2, 5, 40] {
            let frames = vec![vec![7.0, -3.0]; t];
            let out = approximate_pool(&frames).unwrap();
            for x in out {
                assert!(x.abs() < 1e-10, "T={t}: {x}");
            }
        }
    }

    #[test]
    fn coefficient_sums_vanish() {
        for t in 1..=100 {
            let sum: f64 = pool_coefficients(t).iter().sum();
            assert!(sum.abs() <= 1e-12, "T={t}: sum {sum}");
        }
    }
}
