//! Core raster types: dense flow fields, flow sequences, and 8-bit frames.
//!
//! All types are immutable after construction and validate their invariants
//! in the constructor, so downstream code can assume consistent dimensions
//! and finite samples.

use crate::error::{Error, Result};

/// Dense 2D field of (u, v) velocity vectors in pixels/frame.
///
/// Planes are row-major with `width * height` samples each. Construction
/// rejects non-finite samples; use [`FlowField::sanitized`] to repair
/// untrusted input instead.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f32>,
    v: Vec<f32>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, u: Vec<f32>, v: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "flow field dimensions must be positive, got {width}x{height}"
            )));
        }
        let expect = width * height;
        if u.len() != expect || v.len() != expect {
            return Err(Error::Dimension(format!(
                "flow planes must hold {expect} samples, got u={} v={}",
                u.len(),
                v.len()
            )));
        }
        if let Some(idx) = u.iter().chain(v.iter()).position(|s| !s.is_finite()) {
            return Err(Error::Contract(format!(
                "non-finite flow sample at flat index {idx}"
            )));
        }
        Ok(FlowField {
            width,
            height,
            u,
            v,
        })
    }

    /// Builds a field from untrusted planes, replacing NaN/inf samples with 0.
    /// Returns the field together with the number of samples replaced.
    pub fn sanitized(
        width: usize,
        height: usize,
        mut u: Vec<f32>,
        mut v: Vec<f32>,
    ) -> Result<(Self, usize)> {
        let mut replaced = 0usize;
        for s in u.iter_mut().chain(v.iter_mut()) {
            if !s.is_finite() {
                *s = 0.0;
                replaced += 1;
            }
        }
        Ok((Self::new(width, height, u, v)?, replaced))
    }

    /// Constant-valued field, mostly useful in tests and synthetic data.
    pub fn constant(width: usize, height: usize, u: f32, v: f32) -> Result<Self> {
        let n = width * height;
        Self::new(width, height, vec![u; n], vec![v; n])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of pixels per plane.
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn u(&self) -> &[f32] {
        &self.u
    }

    pub fn v(&self) -> &[f32] {
        &self.v
    }

    pub fn into_planes(self) -> (Vec<f32>, Vec<f32>) {
        (self.u, self.v)
    }
}

/// Temporally ordered list of same-shape flow fields.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSequence {
    frames: Vec<FlowField>,
}

impl FlowSequence {
    pub fn new(frames: Vec<FlowField>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::EmptyInput("flow sequence needs at least one frame".into()))?;
        let (w, h) = (first.width(), first.height());
        for (i, f) in frames.iter().enumerate() {
            if f.width() != w || f.height() != h {
                return Err(Error::Dimension(format!(
                    "frame {i} is {}x{}, expected {w}x{h}",
                    f.width(),
                    f.height()
                )));
            }
        }
        Ok(FlowSequence { frames })
    }

    pub fn frames(&self) -> &[FlowField] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }

    /// Sub-sequence view over `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> &[FlowField] {
        &self.frames[start..end]
    }

    pub fn into_frames(self) -> Vec<FlowField> {
        self.frames
    }
}

/// 8-bit grayscale frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    values: Vec<u8>,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, values: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "frame dimensions must be positive, got {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::Dimension(format!(
                "frame must hold {} samples, got {}",
                width * height,
                values.len()
            )));
        }
        Ok(GrayFrame {
            width,
            height,
            values,
        })
    }

    pub fn constant(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.values[y * self.width + x]
    }
}

/// 8-bit RGB frame stored as three planes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbFrame {
    width: usize,
    height: usize,
    r: Vec<u8>,
    g: Vec<u8>,
    b: Vec<u8>,
}

impl RgbFrame {
    pub fn new(width: usize, height: usize, r: Vec<u8>, g: Vec<u8>, b: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "frame dimensions must be positive, got {width}x{height}"
            )));
        }
        let expect = width * height;
        for (name, plane) in [("r", &r), ("g", &g), ("b", &b)] {
            if plane.len() != expect {
                return Err(Error::Dimension(format!(
                    "{name} plane must hold {expect} samples, got {}",
                    plane.len()
                )));
            }
        }
        Ok(RgbFrame {
            width,
            height,
            r,
            g,
            b,
        })
    }

    /// Replicates a grayscale frame into all three channels.
    pub fn from_gray(gray: &GrayFrame) -> Self {
        RgbFrame {
            width: gray.width(),
            height: gray.height(),
            r: gray.values().to_vec(),
            g: gray.values().to_vec(),
            b: gray.values().to_vec(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn r(&self) -> &[u8] {
        &self.r
    }

    pub fn g(&self) -> &[u8] {
        &self.g
    }

    pub fn b(&self) -> &[u8] {
        &self.b
    }
}
