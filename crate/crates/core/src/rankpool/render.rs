//! 8-bit visualization of pooled images: per-plane min-max normalization
//! plus an HSV-style composite for two-channel flow (angle to hue, magnitude
//! to value).

use crate::flow::{GrayFrame, RgbFrame};

use super::{DynamicFlowImage, DynamicImage};

/// Min-max normalizes one plane to `[0, 255]`; a constant plane maps to 128.
pub fn render_plane(plane: &[f64], width: usize, height: usize) -> GrayFrame {
    debug_assert_eq!(plane.len(), width * height);
    let min = plane.iter().copied().fold(f64::INFINITY, f64::min);
    let max = plane.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let values = if max > min {
        let scale = 255.0 / (max - min);
        plane.iter().map(|x| ((x - min) * scale).round() as u8).collect()
    } else {
        vec![128u8; plane.len()]
    };
    GrayFrame::new(width, height, values).expect("plane length was checked")
}

/// Renders the two flow channels as separate grayscale images.
pub fn render_flow(img: &DynamicFlowImage) -> (GrayFrame, GrayFrame) {
    (
        render_plane(img.fu(), img.width(), img.height()),
        render_plane(img.fv(), img.width(), img.height()),
    )
}

/// HSV-style composite of a two-channel image: direction becomes hue, the
/// magnitude relative to the field maximum becomes value.
pub fn render_flow_color(img: &DynamicFlowImage) -> RgbFrame {
    let n = img.width() * img.height();
    let mut max_mag = 0.0f64;
    for px in 0..n {
        let mag = img.fu()[px].hypot(img.fv()[px]);
        if mag > max_mag {
            max_mag = mag;
        }
    }
    let mut r = vec![0u8; n];
    let mut g = vec![0u8; n];
    let mut b = vec![0u8; n];
    if max_mag > 0.0 {
        for px in 0..n {
            let (u, v) = (img.fu()[px], img.fv()[px]);
            let mag = u.hypot(v) / max_mag;
            let mut hue = v.atan2(u).to_degrees();
            if hue < 0.0 {
                hue += 360.0;
            }
            let (cr, cg, cb) = hsv_to_rgb(hue, 1.0, mag);
            r[px] = cr;
            g[px] = cg;
            b[px] = cb;
        }
    }
    RgbFrame::new(img.width(), img.height(), r, g, b).expect("plane sizes match")
}

/// Renders the three pooled RGB planes, each normalized independently.
pub fn render_rgb(img: &DynamicImage) -> RgbFrame {
    let planes: Vec<GrayFrame> = (0..3)
        .map(|c| render_plane(img.plane(c), img.width(), img.height()))
        .collect();
    RgbFrame::new(
        img.width(),
        img.height(),
        planes[0].values().to_vec(),
        planes[1].values().to_vec(),
        planes[2].values().to_vec(),
    )
    .expect("plane sizes match")
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (u8, u8, u8) {
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r1, g1, b1) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    (
        ((r1 + m) * 255.0).round() as u8,
        ((g1 + m) * 255.0).round() as u8,
        ((b1 + m) * 255.0).round() as u8,
    )
}
