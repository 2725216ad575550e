//! Sliding-window extraction over flow sequences, per-window pooling, batch
//! manifests, and feature-vector assembly for fusion.
//!
//! Windows index flow frames, not source frames: a clip with `m` source
//! frames has `m - 1` flow frames. Partial tail windows are dropped; clips
//! shorter than one window produce a single full-span window instead of
//! nothing.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::FlowSequence;
use crate::preprocess::condition_sequence;
use crate::rankpool::{pool_flow, DynamicFlowImage, SolverConfig};

/// Window length and temporal stride for subsequence extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub window: usize,
    pub stride: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            window: 25,
            stride: 5,
        }
    }
}

impl WindowSpec {
    pub fn new(window: usize, stride: usize) -> Result<Self> {
        let spec = WindowSpec { window, stride };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.stride == 0 {
            return Err(Error::Config(format!(
                "window and stride must be at least 1, got w={} s={}",
                self.window, self.stride
            )));
        }
        Ok(())
    }
}

/// Half-open windows `[k*s, k*s + w)` for `k = 0..=floor((n-w)/s)`. Clips
/// shorter than `w` fall back to the single window `[0, n)`.
pub fn make_windows(n: usize, spec: &WindowSpec) -> Vec<(usize, usize)> {
    if n == 0 {
        return Vec::new();
    }
    if n < spec.window {
        return vec![(0, n)];
    }
    let last = (n - spec.window) / spec.stride;
    (0..=last)
        .map(|k| (k * spec.stride, k * spec.stride + spec.window))
        .collect()
}

/// Dataset expansion factor of the windowing: the exact window count, which
/// approaches `n / s` for clips much longer than one window.
pub fn expansion_factor(n: usize, spec: &WindowSpec) -> usize {
    make_windows(n, spec).len()
}

/// Canonical output name of one pooled window.
pub fn window_output_name(clip_id: &str, start: usize, ext: &str) -> String {
    format!("{clip_id}_w{start}.{ext}")
}

/// One pooled window in a manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowRecord {
    pub start: usize,
    pub end: usize,
    pub path: String,
}

/// Provenance of a processed clip: which windows were pooled and where the
/// outputs went. Every window carries the clip's label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClipManifest {
    clip_id: String,
    label: String,
    n_frames: usize,
    windows: Vec<WindowRecord>,
}

impl ClipManifest {
    pub fn new(
        clip_id: String,
        label: String,
        n_frames: usize,
        windows: Vec<WindowRecord>,
    ) -> Result<Self> {
        for field in [&clip_id, &label] {
            if field.is_empty() || field.contains(['\t', '\n', '\r']) {
                return Err(Error::Config(format!(
                    "manifest fields must be nonempty and free of tabs/newlines: {field:?}"
                )));
            }
        }
        let mut seen_starts = Vec::new();
        for w in &windows {
            if w.start >= w.end || w.end > n_frames {
                return Err(Error::Contract(format!(
                    "window [{}, {}) escapes clip of {n_frames} frames",
                    w.start, w.end
                )));
            }
            if seen_starts.contains(&w.start) {
                return Err(Error::Contract(format!(
                    "duplicate window start {}",
                    w.start
                )));
            }
            seen_starts.push(w.start);
            if w.path.contains(['\t', '\n', '\r']) {
                return Err(Error::Config(format!(
                    "window path must be free of tabs/newlines: {:?}",
                    w.path
                )));
            }
        }
        Ok(ClipManifest {
            clip_id,
            label,
            n_frames,
            windows,
        })
    }

    pub fn clip_id(&self) -> &str {
        &self.clip_id
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn windows(&self) -> &[WindowRecord] {
        &self.windows
    }

    /// Line-delimited serialization: a header line with the clip identity
    /// and frame count, then one tab-separated record per window with fixed
    /// field order (clip_id, label, start, end, path).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{}\t{}\t{}", self.clip_id, self.label, self.n_frames).unwrap();
        for w in &self.windows {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                self.clip_id, self.label, w.start, w.end, w.path
            )
            .unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("manifest is empty".into()))?;
        let parts: Vec<&str> = header.split('\t').collect();
        let [clip_id, label, n_frames] = parts[..] else {
            return Err(Error::Format(format!(
                "manifest header needs 3 fields, got {}",
                parts.len()
            )));
        };
        let n_frames: usize = n_frames
            .parse()
            .map_err(|_| Error::Format(format!("bad frame count {n_frames:?}")))?;
        let mut windows = Vec::new();
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            let [rec_clip, rec_label, start, end, path] = parts[..] else {
                return Err(Error::Format(format!(
                    "manifest record needs 5 fields, got {}",
                    parts.len()
                )));
            };
            if rec_clip != clip_id || rec_label != label {
                return Err(Error::Format(
                    "manifest record does not match its header".into(),
                ));
            }
            windows.push(WindowRecord {
                start: start
                    .parse()
                    .map_err(|_| Error::Format(format!("bad window start {start:?}")))?,
                end: end
                    .parse()
                    .map_err(|_| Error::Format(format!("bad window end {end:?}")))?,
                path: path.to_string(),
            });
        }
        ClipManifest::new(clip_id.to_string(), label.to_string(), n_frames, windows)
    }
}

/// Identity attached to a clip's outputs.
#[derive(Debug, Clone)]
pub struct ClipSpec {
    pub clip_id: String,
    pub label: String,
}

/// Conditions a clip's flow and pools every window, in window order. A
/// failing window aborts the whole clip with its index in the error.
pub fn run_clip(
    flow: &FlowSequence,
    spec: &WindowSpec,
    bound: f32,
    c: f64,
    solver: &SolverConfig,
    clip: &ClipSpec,
) -> Result<(Vec<DynamicFlowImage>, ClipManifest)> {
    spec.validate()?;
    let conditioned = condition_sequence(flow, bound)?;
    let windows = make_windows(flow.len(), spec);

    // Pool in parallel but scan results in order, so the reported failure
    // index and the output order do not depend on scheduling.
    let pooled: Vec<Result<DynamicFlowImage>> = windows
        .par_iter()
        .map(|&(start, end)| pool_flow(&conditioned[start..end], c, solver))
        .collect();

    let mut images = Vec::with_capacity(pooled.len());
    let mut records = Vec::with_capacity(pooled.len());
    for (idx, (result, &(start, end))) in pooled.into_iter().zip(&windows).enumerate() {
        let image = result.map_err(|e| {
            Error::Contract(format!(
                "window {idx} [{start}, {end}) of clip {} failed: {e}",
                clip.clip_id
            ))
        })?;
        images.push(image);
        records.push(WindowRecord {
            start,
            end,
            path: window_output_name(&clip.clip_id, start, "dynf"),
        });
    }
    let manifest = ClipManifest::new(clip.clip_id.clone(), clip.label.clone(), flow.len(), records)?;
    Ok((images, manifest))
}

/// Concatenates feature parts in order, optionally L2-normalizing each part
/// first. The output length is the sum of the part lengths.
pub fn assemble_feature(parts: &[Vec<f64>], l2_normalize: bool) -> Result<Vec<f64>> {
    if parts.is_empty() {
        return Err(Error::EmptyInput("no feature parts to assemble".into()));
    }
    let mut out = Vec::with_capacity(parts.iter().map(Vec::len).sum());
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::Dimension(format!("feature part {i} is empty")));
        }
        if l2_normalize {
            let norm = part.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                out.extend(part.iter().map(|x| x / norm));
            } else {
                out.extend_from_slice(part);
            }
        } else {
            out.extend_from_slice(part);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FlowField;

    #[test]
    fn exact_single_window() {
        assert_eq!(make_windows(25, &WindowSpec::default()), vec![(0, 25)]);
    }

    #[test]
    fn window_enumeration_for_100_frames() {
        let windows = make_windows(100, &WindowSpec::default());
        assert_eq!(windows.len(), 16);
        assert_eq!(windows[0], (0, 25));
        assert_eq!(windows[15], (75, 100));
        for (k, w) in windows.iter().enumerate() {
            assert_eq!(w.0, 5 * k);
            assert_eq!(w.1 - w.0, 25);
        }
    }

    #[test]
    fn short_clip_falls_back_to_full_span() {
        assert_eq!(make_windows(10, &WindowSpec::default()), vec![(0, 10)]);
    }

    #[test]
    fn expansion_factor_counts() {
        let spec = WindowSpec::default();
        assert_eq!(expansion_factor(100, &spec), 16);
        assert_eq!(expansion_factor(25, &spec), 1);
        assert_eq!(expansion_factor(1000, &spec), 196);
    }

    #[test]
    fn manifest_round_trips() {
        let manifest = ClipManifest::new(
            "clip7".into(),
            "wave".into(),
            100,
            vec![
                WindowRecord {
                    start: 0,
                    end: 25,
                    path: "clip7_w0.dynf".into(),
                },
                WindowRecord {
                    start: 5,
                    end: 30,
                    path: "clip7_w5.dynf".into(),
                },
            ],
        )
        .unwrap();
        let text = manifest.to_text();
        assert_eq!(ClipManifest::from_text(&text).unwrap(), manifest);
    }

    #[test]
    fn manifest_rejects_escaping_window() {
        let err = ClipManifest::new(
            "c".into(),
            "l".into(),
            10,
            vec![WindowRecord {
                start: 5,
                end: 12,
                path: "p".into(),
            }],
        )
        .unwrap_err();
        assert_eq!(err.kind(), "contract");
    }

    #[test]
    fn run_clip_counts_and_zero_inputs() {
        let frames = vec![FlowField::constant(4, 4, 1.0, -1.0).unwrap(); 50];
        let flow = FlowSequence::new(frames).unwrap();
        let clip = ClipSpec {
            clip_id: "clip".into(),
            label: "none".into(),
        };
        let (images, manifest) = run_clip(
            &flow,
            &WindowSpec::default(),
            20.0,
            1.0,
            &SolverConfig::default(),
            &clip,
        )
        .unwrap();
        assert_eq!(images.len(), 6); // floor((50-25)/5) + 1
        assert_eq!(manifest.windows().len(), 6);
        assert_eq!(manifest.windows()[0].path, "clip_w0.dynf");
        // identical flow in every frame pools to zero images
        for img in &images {
            assert!(img.fu().iter().all(|&x| x == 0.0));
            assert!(img.fv().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn run_clip_single_window_for_exact_length() {
        let frames = vec![FlowField::constant(3, 3, 0.5, 0.0).unwrap(); 25];
        let flow = FlowSequence::new(frames).unwrap();
        let clip = ClipSpec {
            clip_id: "c".into(),
            label: "l".into(),
        };
        let (images, _) = run_clip(
            &flow,
            &WindowSpec::default(),
            20.0,
            1.0,
            &SolverConfig::default(),
            &clip,
        )
        .unwrap();
        assert_eq!(images.len(), 1);
    }

    #[test]
    fn assemble_feature_lengths_and_normalization() {
        let out = assemble_feature(&[vec![1.0; 4], vec![2.0; 6]], false).unwrap();
        assert_eq!(out.len(), 10);

        let single = assemble_feature(&[vec![3.0, -4.0]], false).unwrap();
        assert_eq!(single, vec![3.0, -4.0]);

        let normed = assemble_feature(&[vec![3.0, 4.0]], true).unwrap();
        assert_eq!(normed, vec![0.6, 0.8]);

        assert_eq!(
            assemble_feature(&[], false).unwrap_err().kind(),
            "empty-input"
        );
        assert_eq!(
            assemble_feature(&[vec![1.0], vec![]], false)
                .unwrap_err()
                .kind(),
            "dimension"
        );
    }
}
