//! Flow conditioning ahead of pooling: per-channel median subtraction,
//! magnitude thresholding, and quantization to 8-bit grayscale.
//!
//! The three steps run in that fixed order; conditioning is independent per
//! frame, so sequences parallelize trivially.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::{FlowField, FlowSequence, GrayFrame};

/// Default clip bound in pixels for [`threshold_flow`] and [`quantize_flow`].
pub const DEFAULT_CLIP_BOUND: f32 = 20.0;

/// One flow frame quantized to two grayscale planes. Sample 128 corresponds
/// to zero flow; the endpoints map to the +/- clip bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedFlowFrame {
    pub u_gray: GrayFrame,
    pub v_gray: GrayFrame,
}

impl QuantizedFlowFrame {
    pub fn width(&self) -> usize {
        self.u_gray.width()
    }

    pub fn height(&self) -> usize {
        self.u_gray.height()
    }
}

/// Median over a plane; even counts average the two central order statistics.
fn plane_median(values: &[f32]) -> f32 {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(f32::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Removes the per-channel scalar median, the cheap camera-motion
/// compensation applied before thresholding.
pub fn subtract_median(field: &FlowField) -> FlowField {
    let mu = plane_median(field.u());
    let mv = plane_median(field.v());
    let u = field.u().iter().map(|s| s - mu).collect();
    let v = field.v().iter().map(|s| s - mv).collect();
    FlowField::new(field.width(), field.height(), u, v)
        .expect("median subtraction preserves shape and finiteness")
}

/// Zeroes every flow vector whose u or v magnitude leaves `[-bound, bound]`.
/// The whole vector is zeroed, not just the offending component; in-range
/// vectors pass through unchanged.
pub fn threshold_flow(field: &FlowField, bound: f32) -> Result<FlowField> {
    if bound <= 0.0 || bound.is_nan() {
        return Err(Error::Config(format!(
            "clip bound must be positive, got {bound}"
        )));
    }
    let mut u = field.u().to_vec();
    let mut v = field.v().to_vec();
    for px in 0..u.len() {
        if u[px].abs() > bound || v[px].abs() > bound {
            u[px] = 0.0;
            v[px] = 0.0;
        }
    }
    FlowField::new(field.width(), field.height(), u, v)
}

/// Affine map of one sample into the discrete range: `-bound -> 0`,
/// `0 -> 128`, `+bound -> 255`, rounding half away from zero.
fn quantize_sample(x: f32, bound: f32) -> u8 {
    let q = (f64::from(x) + f64::from(bound)) / (2.0 * f64::from(bound)) * 255.0;
    q.round() as u8
}

/// Quantizes both channels into grayscale planes. All samples must already
/// lie within `[-bound, bound]`; run [`threshold_flow`] first.
pub fn quantize_flow(field: &FlowField, bound: f32) -> Result<QuantizedFlowFrame> {
    if bound <= 0.0 || bound.is_nan() {
        return Err(Error::Config(format!(
            "clip bound must be positive, got {bound}"
        )));
    }
    let width = field.width();
    for (name, plane) in [("u", field.u()), ("v", field.v())] {
        if let Some(px) = plane.iter().position(|s| s.abs() > bound) {
            return Err(Error::Contract(format!(
                "{name} sample {} at pixel ({}, {}) exceeds clip bound {bound}",
                plane[px],
                px % width,
                px / width
            )));
        }
    }
    let u = field.u().iter().map(|&s| quantize_sample(s, bound)).collect();
    let v = field.v().iter().map(|&s| quantize_sample(s, bound)).collect();
    Ok(QuantizedFlowFrame {
        u_gray: GrayFrame::new(width, field.height(), u)?,
        v_gray: GrayFrame::new(width, field.height(), v)?,
    })
}

/// Full conditioning chain applied to one frame.
pub fn condition_frame(field: &FlowField, bound: f32) -> Result<QuantizedFlowFrame> {
    let centered = subtract_median(field);
    let clipped = threshold_flow(&centered, bound)?;
    quantize_flow(&clipped, bound)
}

/// Applies median subtraction, thresholding and quantization to every frame
/// independently, preserving order.
pub fn condition_sequence(seq: &FlowSequence, bound: f32) -> Result<Vec<QuantizedFlowFrame>> {
    seq.frames()
        .par_iter()
        .map(|f| condition_frame(f, bound))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field_1xn(u: Vec<f32>, v: Vec<f32>) -> FlowField {
        FlowField::new(u.len(), 1, u, v).unwrap()
    }

    #[test]
    fn uniform_field_is_annihilated() {
        let field = FlowField::constant(4, 3, 3.0, -1.5).unwrap();
        let out = subtract_median(&field);
        assert!(out.u().iter().all(|&s| s == 0.0));
        assert!(out.v().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn even_count_median_averages_central_pair() {
        let field = field_1xn(vec![1.0, 2.0, 3.0, 100.0], vec![0.0; 4]);
        let out = subtract_median(&field);
        assert_eq!(out.u(), &[-1.5, -0.5, 0.5, 97.5]);
    }

    #[test]
    fn centered_field_is_fixed_point() {
        let field = field_1xn(vec![-1.0, 0.0, 2.0], vec![-3.0, 0.0, 5.0]);
        let once = subtract_median(&field);
        let twice = subtract_median(&once);
        assert_eq!(once, twice);
    }

    #[test]
    fn threshold_zeroes_whole_vector() {
        let field = field_1xn(vec![25.0], vec![3.0]);
        let out = threshold_flow(&field, 20.0).unwrap();
        assert_eq!((out.u()[0], out.v()[0]), (0.0, 0.0));
    }

    #[test]
    fn threshold_interval_is_closed() {
        let field = field_1xn(vec![20.0], vec![-20.0]);
        let out = threshold_flow(&field, 20.0).unwrap();
        assert_eq!((out.u()[0], out.v()[0]), (20.0, -20.0));
    }

    #[test]
    fn threshold_zero_field_unchanged() {
        let field = FlowField::constant(3, 3, 0.0, 0.0).unwrap();
        let out = threshold_flow(&field, 20.0).unwrap();
        assert_eq!(out, field);
    }

    #[test]
    fn threshold_rejects_nonpositive_bound() {
        let field = FlowField::constant(1, 1, 0.0, 0.0).unwrap();
        assert_eq!(threshold_flow(&field, 0.0).unwrap_err().kind(), "configuration");
    }

    #[test]
    fn quantize_endpoints_and_center() {
        assert_eq!(quantize_sample(-20.0, 20.0), 0);
        assert_eq!(quantize_sample(20.0, 20.0), 255);
        // 127.5 rounds half away from zero
        assert_eq!(quantize_sample(0.0, 20.0), 128);
        // (10 + 20) / 40 * 255 = 191.25
        assert_eq!(quantize_sample(10.0, 20.0), 191);
    }

    #[test]
    fn quantize_rejects_out_of_range_naming_pixel() {
        let field = FlowField::new(2, 1, vec![0.0, 30.0], vec![0.0, 0.0]).unwrap();
        let err = quantize_flow(&field, 20.0).unwrap_err();
        assert_eq!(err.kind(), "contract");
        assert!(err.to_string().contains("(1, 0)"), "{err}");
    }

    #[test]
    fn condition_uniform_frame_gives_all_128() {
        let seq = FlowSequence::new(vec![FlowField::constant(3, 2, 7.0, -4.0).unwrap()]).unwrap();
        let out = condition_sequence(&seq, 20.0).unwrap();
        assert_eq!(out.len(), 1);
        assert!(out[0].u_gray.values().iter().all(|&q| q == 128));
        assert!(out[0].v_gray.values().iter().all(|&q| q == 128));
    }

    #[test]
    fn condition_preserves_length() {
        let frames = (0..5)
            .map(|i| FlowField::constant(2, 2, i as f32, 0.0).unwrap())
            .collect();
        let seq = FlowSequence::new(frames).unwrap();
        assert_eq!(condition_sequence(&seq, 20.0).unwrap().len(), 5);
    }

    #[test]
    fn outlier_vector_quantizes_to_center() {
        // zero-median small flow plus one outlier: the outlier is zeroed by
        // the threshold and lands exactly on the 128 center.
        let mut u = vec![0.0f32; 9];
        let mut v = vec![0.0f32; 9];
        u[1] = 0.5;
        u[2] = -0.5;
        u[4] = 100.0;
        v[4] = 0.0;
        let field = FlowField::new(3, 3, u, v).unwrap();
        let out = condition_frame(&field, 20.0).unwrap();
        assert_eq!(out.u_gray.values()[4], 128);
        assert_eq!(out.v_gray.values()[4], 128);
    }
}
