//! Fixture builders shared by the benchmarks.

use dynaflow::preprocess::QuantizedFlowFrame;
use dynaflow::toyeval::{generate_clip, MotionClass, SyntheticClipConfig, ToyClip};
use dynaflow::GrayFrame;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A window of pseudo-random conditioned flow frames at the given size.
pub fn random_window(frames: usize, side: usize, seed: u64) -> Vec<QuantizedFlowFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..frames)
        .map(|_| {
            let u: Vec<u8> = (0..side * side).map(|_| rng.random()).collect();
            let v: Vec<u8> = (0..side * side).map(|_| rng.random()).collect();
            QuantizedFlowFrame {
                u_gray: GrayFrame::new(side, side, u).unwrap(),
                v_gray: GrayFrame::new(side, side, v).unwrap(),
            }
        })
        .collect()
}

/// A textured frame pair offset by one pixel, for the flow benchmark.
pub fn textured_pair(side: usize, seed: u64) -> (GrayFrame, GrayFrame) {
    let clip = moving_square_clip(side, 2, seed);
    (clip.frames[0].clone(), clip.frames[1].clone())
}

/// Synthetic moving-square clip with mild noise.
pub fn moving_square_clip(side: usize, n_frames: usize, seed: u64) -> ToyClip {
    let cfg = SyntheticClipConfig {
        size: side,
        n_frames,
        motion_class: MotionClass::Right,
        square_side: side / 4,
        speed: 1.0,
        background_ramp: 0.0,
        noise_sigma: 2.0,
        start_x: 1.0,
        start_y: (side / 3) as f32,
        seed,
    };
    generate_clip(&cfg).expect("valid benchmark clip")
}
