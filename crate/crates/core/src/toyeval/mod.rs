//! Desk-scale comparison of dynamic-flow against dynamic-image pooling on
//! synthetic clips: a bright square moves in one of four directions while the
//! background brightness drifts. The drift contaminates pooled RGB features
//! but never touches the flow, which is the effect under test.

mod classifier;

pub use classifier::{train_linear, LinearModel};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::flow::{FlowField, FlowSequence, GrayFrame, RgbFrame};
use crate::pipeline::assemble_feature;
use crate::preprocess::{condition_sequence, DEFAULT_CLIP_BOUND};
use crate::rankpool::{pool_flow, pool_rgb, SolverConfig};
use crate::tvl1::{sequence_flow, Tvl1Params};

/// Background base intensity; per-frame ramp is added on top.
const BASE_BRIGHTNESS: f32 = 40.0;
/// Intensity of the moving square.
const SQUARE_BRIGHTNESS: f32 = 160.0;

/// The four motion directions of the toy task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionClass {
    Up,
    Down,
    Left,
    Right,
}

impl MotionClass {
    pub const ALL: [MotionClass; 4] = [
        MotionClass::Up,
        MotionClass::Down,
        MotionClass::Left,
        MotionClass::Right,
    ];

    /// Unit direction in image coordinates (y grows downward).
    pub fn delta(self) -> (f32, f32) {
        match self {
            MotionClass::Up => (0.0, -1.0),
            MotionClass::Down => (0.0, 1.0),
            MotionClass::Left => (-1.0, 0.0),
            MotionClass::Right => (1.0, 0.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MotionClass::Up => "up",
            MotionClass::Down => "down",
            MotionClass::Left => "left",
            MotionClass::Right => "right",
        }
    }

    pub fn index(self) -> usize {
        match self {
            MotionClass::Up => 0,
            MotionClass::Down => 1,
            MotionClass::Left => 2,
            MotionClass::Right => 3,
        }
    }
}

/// One synthetic clip: a square of side `square_side` starting at
/// `(start_x, start_y)` translating at `speed` pixels/frame in the class
/// direction; background brightness rises by `background_ramp` per frame and
/// every pixel carries zero-mean Gaussian noise of `noise_sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticClipConfig {
    pub size: usize,
    pub n_frames: usize,
    pub motion_class: MotionClass,
    pub square_side: usize,
    pub speed: f32,
    pub background_ramp: f32,
    pub noise_sigma: f32,
    pub start_x: f32,
    pub start_y: f32,
    pub seed: u64,
}

impl SyntheticClipConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 || self.n_frames == 0 || self.square_side == 0 {
            return Err(Error::Config(
                "size, n_frames and square_side must be positive".into(),
            ));
        }
        if self.speed < 0.0 || self.speed.is_nan() || self.noise_sigma < 0.0 || self.noise_sigma.is_nan() {
            return Err(Error::Config(
                "speed and noise_sigma must be nonnegative".into(),
            ));
        }
        let limit = (self.size - self.square_side) as f32;
        let (dx, dy) = self.motion_class.delta();
        for t in [0, self.n_frames - 1] {
            let x = self.start_x + dx * self.speed * t as f32;
            let y = self.start_y + dy * self.speed * t as f32;
            if !(0.0..=limit).contains(&x) || !(0.0..=limit).contains(&y) {
                return Err(Error::Config(format!(
                    "square escapes the {s}x{s} frame at t={t}: ({x}, {y})",
                    s = self.size
                )));
            }
        }
        Ok(())
    }

    fn position(&self, t: usize) -> (f32, f32) {
        let (dx, dy) = self.motion_class.delta();
        (
            self.start_x + dx * self.speed * t as f32,
            self.start_y + dy * self.speed * t as f32,
        )
    }
}

/// Frames plus the exact flow they were generated from.
#[derive(Debug, Clone)]
pub struct ToyClip {
    pub frames: Vec<GrayFrame>,
    pub true_flow: FlowSequence,
}

/// Zero-mean unit-variance Gaussian draw (Box-Muller over the seeded stream).
fn gaussian(rng: &mut ChaCha8Rng) -> f32 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    ((-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()) as f32
}

/// Fraction of pixel `(px, py)` covered by the square at `(x, y)`; integer
/// positions degenerate to crisp 0/1 coverage.
fn coverage(px: usize, py: usize, x: f32, y: f32, side: f32) -> f32 {
    let ox = (px as f32 + 1.0).min(x + side) - (px as f32).max(x);
    let oy = (py as f32 + 1.0).min(y + side) - (py as f32).max(y);
    ox.max(0.0) * oy.max(0.0)
}

/// Renders the clip and its ground-truth flow. Flow field `t` maps frame `t`
/// onto frame `t + 1`: `speed` in the class direction inside the square
/// (pixels covered more than half), zero elsewhere.
pub fn generate_clip(cfg: &SyntheticClipConfig) -> Result<ToyClip> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.size * cfg.size;
    let side = cfg.square_side as f32;
    let (dx, dy) = cfg.motion_class.delta();

    let mut frames = Vec::with_capacity(cfg.n_frames);
    for t in 0..cfg.n_frames {
        let (x, y) = cfg.position(t);
        let background = BASE_BRIGHTNESS + cfg.background_ramp * t as f32;
        let mut values = Vec::with_capacity(n);
        for py in 0..cfg.size {
            for px in 0..cfg.size {
                let cov = coverage(px, py, x, y, side);
                let mut value = background * (1.0 - cov) + SQUARE_BRIGHTNESS * cov;
                if cfg.noise_sigma > 0.0 {
                    value += cfg.noise_sigma * gaussian(&mut rng);
                }
                values.push(value.round().clamp(0.0, 255.0) as u8);
            }
        }
        frames.push(GrayFrame::new(cfg.size, cfg.size, values)?);
    }

    let mut fields = Vec::with_capacity(cfg.n_frames.saturating_sub(1));
    for t in 0..cfg.n_frames.saturating_sub(1) {
        let (x, y) = cfg.position(t);
        let mut u = vec![0.0f32; n];
        let mut v = vec![0.0f32; n];
        for py in 0..cfg.size {
            for px in 0..cfg.size {
                if coverage(px, py, x, y, side) > 0.5 {
                    u[py * cfg.size + px] = dx * cfg.speed;
                    v[py * cfg.size + px] = dy * cfg.speed;
                }
            }
        }
        fields.push(FlowField::new(cfg.size, cfg.size, u, v)?);
    }
    // a single-frame clip has no flow; keep the sequence type honest
    let true_flow = if fields.is_empty() {
        FlowSequence::new(vec![FlowField::constant(cfg.size, cfg.size, 0.0, 0.0)?])?
    } else {
        FlowSequence::new(fields)?
    };

    Ok(ToyClip { frames, true_flow })
}

/// Which pooled representation to extract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMode {
    DynamicFlow,
    DynamicImage,
}

/// Knobs shared by both featurization paths.
#[derive(Debug, Clone, Copy)]
pub struct FeaturizeParams {
    pub bound: f32,
    pub svm_c: f64,
    pub solver: SolverConfig,
    pub tvl1: Tvl1Params,
}

impl Default for FeaturizeParams {
    fn default() -> Self {
        FeaturizeParams {
            bound: DEFAULT_CLIP_BOUND,
            svm_c: 1.0,
            solver: SolverConfig::default(),
            tvl1: Tvl1Params::default(),
        }
    }
}

/// Pools one clip into a flattened feature vector. Dynamic-flow mode pools
/// conditioned flow (ground-truth or TV-L1); dynamic-image mode pools the
/// grayscale frames promoted to three identical channels.
pub fn featurize(
    clip: &ToyClip,
    mode: FeatureMode,
    use_true_flow: bool,
    params: &FeaturizeParams,
) -> Result<Vec<f64>> {
    match mode {
        FeatureMode::DynamicFlow => {
            let flow = if use_true_flow {
                clip.true_flow.clone()
            } else {
                sequence_flow(&clip.frames, &params.tvl1)?
            };
            let conditioned = condition_sequence(&flow, params.bound)?;
            let pooled = pool_flow(&conditioned, params.svm_c, &params.solver)?;
            Ok(pooled.flatten())
        }
        FeatureMode::DynamicImage => {
            let rgb: Vec<RgbFrame> = clip.frames.iter().map(RgbFrame::from_gray).collect();
            let pooled = pool_rgb(&rgb, params.svm_c, &params.solver)?;
            Ok(pooled.flatten())
        }
    }
}

/// Feature vectors with labels and a fixed train/test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyDataset {
    items: Vec<(Vec<f64>, usize)>,
    train: Vec<usize>,
    test: Vec<usize>,
}

impl ToyDataset {
    pub fn new(items: Vec<(Vec<f64>, usize)>, train: Vec<usize>, test: Vec<usize>) -> Result<Self> {
        for &i in train.iter().chain(&test) {
            if i >= items.len() {
                return Err(Error::Config(format!(
                    "split index {i} out of range for {} items",
                    items.len()
                )));
            }
        }
        Ok(ToyDataset { items, train, test })
    }

    pub fn items(&self) -> &[(Vec<f64>, usize)] {
        &self.items
    }

    pub fn train_indices(&self) -> &[usize] {
        &self.train
    }

    pub fn test_indices(&self) -> &[usize] {
        &self.test
    }
}

/// Configuration of one full comparison run. Per-clip nuisance parameters
/// (ramp, noise, start position) are sampled from `seed`.
#[derive(Debug, Clone, Copy)]
pub struct ComparisonConfig {
    pub n_clips_per_class: usize,
    pub frame_size: usize,
    pub n_frames: usize,
    pub square_side: usize,
    pub speed: f32,
    pub ramp_range: (f32, f32),
    pub noise_range: (f32, f32),
    pub train_fraction: f64,
    pub use_true_flow: bool,
    pub featurize: FeaturizeParams,
    pub classifier_c: f64,
    pub classifier_epochs: usize,
    pub seed: u64,
}

impl ComparisonConfig {
    /// The contaminated regime: background drift and noise vary per clip,
    /// uncorrelated with the motion class.
    pub fn contaminated(seed: u64) -> Self {
        ComparisonConfig {
            n_clips_per_class: 50,
            frame_size: 32,
            n_frames: 30,
            // a square wide enough that trails overlap across random start
            // positions, at a speed that keeps it in frame for 30 frames
            square_side: 8,
            speed: 0.75,
            // drifts strong enough to cross the square's own brightness,
            // inverting its contrast mid-clip for the larger ramps
            ramp_range: (3.0, 10.0),
            noise_range: (1.0, 4.0),
            train_fraction: 0.7,
            use_true_flow: true,
            featurize: FeaturizeParams::default(),
            // pooled-flow classes separate with small margins, so the
            // classifier runs long and lightly regularized
            classifier_c: 100.0,
            classifier_epochs: 2000,
            seed,
        }
    }

    /// Drift-free sanity regime where both representations should excel.
    pub fn easy(seed: u64) -> Self {
        ComparisonConfig {
            ramp_range: (0.0, 0.0),
            noise_range: (0.0, 0.0),
            ..ComparisonConfig::contaminated(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_clips_per_class < 2 {
            return Err(Error::Config(
                "need at least 2 clips per class to split".into(),
            ));
        }
        if self.train_fraction <= 0.0 || self.train_fraction >= 1.0 || self.train_fraction.is_nan() {
            return Err(Error::Config(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

/// Per-class accuracy row of the comparison report.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassAccuracy {
    pub class_name: &'static str,
    pub df_correct: usize,
    pub di_correct: usize,
    pub total: usize,
}

/// Aggregate and per-class accuracies of both representations.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub accuracy_df: f64,
    pub accuracy_di: f64,
    pub per_class: Vec<ClassAccuracy>,
    pub n_train: usize,
    pub n_test: usize,
}

impl ComparisonReport {
    /// Accuracy advantage of dynamic flow in percentage points.
    pub fn gap_points(&self) -> f64 {
        (self.accuracy_df - self.accuracy_di) * 100.0
    }

    pub fn text_table(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{:<10} {:>8} {:>8}", "class", "DF", "DI").unwrap();
        for row in &self.per_class {
            writeln!(
                out,
                "{:<10} {:>7.1}% {:>7.1}%",
                row.class_name,
                100.0 * row.df_correct as f64 / row.total as f64,
                100.0 * row.di_correct as f64 / row.total as f64,
            )
            .unwrap();
        }
        writeln!(
            out,
            "{:<10} {:>7.1}% {:>7.1}%",
            "overall",
            100.0 * self.accuracy_df,
            100.0 * self.accuracy_di
        )
        .unwrap();
        writeln!(out, "gap: {:.1} points (DF - DI)", self.gap_points()).unwrap();
        out
    }

    /// Tab-separated records mirroring the table for machine consumption.
    pub fn records(&self) -> String {
        let mut out = String::from("class\tdf_accuracy\tdi_accuracy\tn_test\n");
        for row in &self.per_class {
            writeln!(
                out,
                "{}\t{:.6}\t{:.6}\t{}",
                row.class_name,
                row.df_correct as f64 / row.total as f64,
                row.di_correct as f64 / row.total as f64,
                row.total
            )
            .unwrap();
        }
        writeln!(
            out,
            "overall\t{:.6}\t{:.6}\t{}",
            self.accuracy_df, self.accuracy_di, self.n_test
        )
        .unwrap();
        out
    }
}

/// Draws the per-clip configuration. All draws happen unconditionally so the
/// random stream stays aligned across classes.
fn sample_clip_config(
    cfg: &ComparisonConfig,
    class: MotionClass,
    rng: &mut ChaCha8Rng,
) -> SyntheticClipConfig {
    let ramp = rng.random_range(cfg.ramp_range.0..=cfg.ramp_range.1);
    let noise = rng.random_range(cfg.noise_range.0..=cfg.noise_range.1);
    let axis_u: f32 = rng.random();
    let ortho_u: f32 = rng.random();
    let clip_seed: u64 = rng.random();

    let travel = cfg.speed * (cfg.n_frames - 1) as f32;
    let limit = (cfg.frame_size - cfg.square_side) as f32;
    // start range along the motion axis shrinks by the travel distance
    let axis_lo = if matches!(class, MotionClass::Left | MotionClass::Up) {
        travel
    } else {
        0.0
    };
    let axis_hi = if matches!(class, MotionClass::Left | MotionClass::Up) {
        limit
    } else {
        limit - travel
    };
    let axis = (axis_lo + axis_u * (axis_hi - axis_lo)).round();
    let ortho = (ortho_u * limit).round();
    let (start_x, start_y) = match class {
        MotionClass::Left | MotionClass::Right => (axis, ortho),
        MotionClass::Up | MotionClass::Down => (ortho, axis),
    };

    SyntheticClipConfig {
        size: cfg.frame_size,
        n_frames: cfg.n_frames,
        motion_class: class,
        square_side: cfg.square_side,
        speed: cfg.speed,
        background_ramp: ramp,
        noise_sigma: noise,
        start_x,
        start_y,
        seed: clip_seed,
    }
}

/// Generates the dataset, featurizes every clip in both modes, trains one
/// classifier per mode and reports per-class plus aggregate accuracies.
/// Feature vectors are L2-normalized before training. The whole run is a
/// pure function of the config and its seed.
pub fn run_comparison(cfg: &ComparisonConfig) -> Result<ComparisonReport> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut clip_configs = Vec::new();
    for class in MotionClass::ALL {
        for _ in 0..cfg.n_clips_per_class {
            clip_configs.push(sample_clip_config(cfg, class, &mut rng));
        }
    }

    type LabeledPair = (Vec<f64>, Vec<f64>, usize);
    let features: Result<Vec<LabeledPair>> = clip_configs
        .par_iter()
        .map(|clip_cfg| {
            let clip = generate_clip(clip_cfg)?;
            let df = featurize(
                &clip,
                FeatureMode::DynamicFlow,
                cfg.use_true_flow,
                &cfg.featurize,
            )?;
            let di = featurize(&clip, FeatureMode::DynamicImage, false, &cfg.featurize)?;
            Ok((
                assemble_feature(&[df], true)?,
                assemble_feature(&[di], true)?,
                clip_cfg.motion_class.index(),
            ))
        })
        .collect();
    let features = features?;

    // stratified split: the first train_fraction of each class's clips train
    let per_class_train = (cfg.n_clips_per_class as f64 * cfg.train_fraction).floor() as usize;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class_idx in 0..MotionClass::ALL.len() {
        for clip_idx in 0..cfg.n_clips_per_class {
            let global = class_idx * cfg.n_clips_per_class + clip_idx;
            if clip_idx < per_class_train {
                train.push(global);
            } else {
                test.push(global);
            }
        }
    }

    let df_items: Vec<(Vec<f64>, usize)> = features
        .iter()
        .map(|(df, _, label)| (df.clone(), *label))
        .collect();
    let di_items: Vec<(Vec<f64>, usize)> = features
        .iter()
        .map(|(_, di, label)| (di.clone(), *label))
        .collect();
    let df_dataset = ToyDataset::new(df_items, train.clone(), test.clone())?;
    let di_dataset = ToyDataset::new(di_items, train.clone(), test.clone())?;

    let classes = MotionClass::ALL.len();
    let df_model = train_linear(
        &df_dataset,
        classes,
        cfg.classifier_c,
        cfg.classifier_epochs,
        cfg.seed,
    )?;
    let di_model = train_linear(
        &di_dataset,
        classes,
        cfg.classifier_c,
        cfg.classifier_epochs,
        cfg.seed,
    )?;

    let mut per_class: Vec<ClassAccuracy> = MotionClass::ALL
        .iter()
        .map(|c| ClassAccuracy {
            class_name: c.name(),
            df_correct: 0,
            di_correct: 0,
            total: 0,
        })
        .collect();
    let mut df_correct = 0usize;
    let mut di_correct = 0usize;
    for &idx in df_dataset.test_indices() {
        let (df_x, label) = &df_dataset.items()[idx];
        let (di_x, _) = &di_dataset.items()[idx];
        let row = &mut per_class[*label];
        row.total += 1;
        if df_model.predict(df_x) == *label {
            row.df_correct += 1;
            df_correct += 1;
        }
        if di_model.predict(di_x) == *label {
            row.di_correct += 1;
            di_correct += 1;
        }
    }

    let n_test = test.len();
    Ok(ComparisonReport {
        accuracy_df: df_correct as f64 / n_test as f64,
        accuracy_di: di_correct as f64 / n_test as f64,
        per_class,
        n_train: train.len(),
        n_test,
    })
}
