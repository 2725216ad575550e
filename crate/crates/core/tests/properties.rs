//! Property tests for the conditioning chain, the windowing arithmetic and
//! the serialized formats.

use dynaflow::pipeline::{make_windows, ClipManifest, WindowRecord, WindowSpec};
use dynaflow::preprocess::{
    condition_frame, quantize_flow, subtract_median, threshold_flow,
};
use dynaflow::rankpool::{approximate_pool, build_problem, smooth};
use dynaflow::{FlowField, FlowSequence};
use proptest::prelude::*;

fn arb_field(max_side: usize, amp: f32) -> impl Strategy<Value = FlowField> {
    (1..=max_side, 1..=max_side).prop_flat_map(move |(w, h)| {
        let n = w * h;
        (
            prop::collection::vec(-amp..amp, n),
            prop::collection::vec(-amp..amp, n),
        )
            .prop_map(move |(u, v)| FlowField::new(w, h, u, v).unwrap())
    })
}

proptest! {
    #[test]
    fn flo_round_trip_is_bit_exact(field in arb_field(12, 1000.0)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.flo");
        dynaflow::io::write_flo(&field, &path).unwrap();
        let back = dynaflow::io::read_flo(&path).unwrap();
        let bits = |p: &[f32]| p.iter().map(|s| s.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(back.u()), bits(field.u()));
        prop_assert_eq!(bits(back.v()), bits(field.v()));
    }

    #[test]
    fn threshold_never_increases_magnitudes(field in arb_field(10, 60.0), bound in 1.0f32..40.0) {
        let out = threshold_flow(&field, bound).unwrap();
        for px in 0..field.len() {
            prop_assert!(out.u()[px].abs() <= field.u()[px].abs());
            prop_assert!(out.v()[px].abs() <= field.v()[px].abs());
            prop_assert!(out.u()[px].abs() <= bound);
            prop_assert!(out.v()[px].abs() <= bound);
        }
    }

    #[test]
    fn quantization_is_monotone_and_invertible_within_slack(
        mut xs in prop::collection::vec(-20.0f32..=20.0, 2..64),
        bound in proptest::sample::select(vec![20.0f32, 10.0, 35.0]),
    ) {
        for x in &mut xs {
            *x = x.clamp(-bound, bound);
        }
        let n = xs.len();
        let field = FlowField::new(n, 1, xs.clone(), vec![0.0; n]).unwrap();
        let q = quantize_flow(&field, bound).unwrap();
        let levels = q.u_gray.values();
        // monotone: sort the samples, quantized values must follow
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
        for pair in order.windows(2) {
            prop_assert!(levels[pair[0]] <= levels[pair[1]]);
        }
        // dequantization error within bound/255 plus rounding slack
        let slack = f64::from(bound) / 255.0 * 2.0 + 1e-9;
        for px in 0..n {
            let back = f64::from(levels[px]) / 255.0 * 2.0 * f64::from(bound) - f64::from(bound);
            prop_assert!((back - f64::from(xs[px])).abs() <= slack);
        }
    }

    #[test]
    fn median_subtraction_centers_each_channel(field in arb_field(9, 30.0)) {
        let out = subtract_median(&field);
        for plane in [out.u(), out.v()] {
            let mut sorted = plane.to_vec();
            sorted.sort_by(f32::total_cmp);
            let n = sorted.len();
            let median = if n % 2 == 1 {
                sorted[n / 2]
            } else {
                (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
            };
            if n % 2 == 1 {
                prop_assert_eq!(median, 0.0);
            } else {
                prop_assert!(median.abs() <= 1e-3);
            }
        }
    }

    #[test]
    fn conditioning_is_frame_wise_independent(
        fields in prop::collection::vec(arb_field(4, 30.0), 2..6),
        seed in 0u64..1000,
    ) {
        // force equal dimensions by cropping to the smallest field
        let w = fields.iter().map(|f| f.width()).min().unwrap();
        let h = fields.iter().map(|f| f.height()).min().unwrap();
        let cropped: Vec<FlowField> = fields
            .iter()
            .map(|f| {
                let mut u = Vec::new();
                let mut v = Vec::new();
                for y in 0..h {
                    for x in 0..w {
                        u.push(f.u()[y * f.width() + x]);
                        v.push(f.v()[y * f.width() + x]);
                    }
                }
                FlowField::new(w, h, u, v).unwrap()
            })
            .collect();
        let n = cropped.len();
        let mut perm: Vec<usize> = (0..n).collect();
        // cheap deterministic shuffle
        for i in (1..n).rev() {
            perm.swap(i, (seed as usize + i * 7) % (i + 1));
        }
        let permuted: Vec<FlowField> = perm.iter().map(|&i| cropped[i].clone()).collect();

        let base = dynaflow::preprocess::condition_sequence(
            &FlowSequence::new(cropped).unwrap(), 20.0).unwrap();
        let shuffled = dynaflow::preprocess::condition_sequence(
            &FlowSequence::new(permuted).unwrap(), 20.0).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            prop_assert_eq!(&shuffled[k], &base[i]);
        }
    }

    #[test]
    fn windows_are_regular(n in 1usize..400, window in 1usize..50, stride in 1usize..20) {
        let spec = WindowSpec { window, stride };
        let windows = make_windows(n, &spec);
        prop_assert!(!windows.is_empty());
        if n >= window {
            for (k, (s, e)) in windows.iter().enumerate() {
                prop_assert_eq!(*s, k * stride);
                prop_assert_eq!(e - s, window);
                prop_assert!(*e <= n);
            }
            // no further full window fits past the last start
            let last = windows.last().unwrap().0;
            prop_assert!(last + stride + window > n);
        } else {
            prop_assert_eq!(&windows, &vec![(0, n)]);
        }
    }

    #[test]
    fn manifest_round_trips(
        clip in "[a-z][a-z0-9_]{0,12}",
        label in "[a-z][a-z0-9_]{0,8}",
        starts in prop::collection::btree_set(0usize..50, 1..6),
    ) {
        let n_frames = 80usize;
        let windows: Vec<WindowRecord> = starts
            .iter()
            .map(|&s| WindowRecord {
                start: s,
                end: (s + 25).min(n_frames),
                path: format!("{clip}_w{s}.dynf"),
            })
            .collect();
        let manifest = ClipManifest::new(clip, label, n_frames, windows).unwrap();
        let parsed = ClipManifest::from_text(&manifest.to_text()).unwrap();
        prop_assert_eq!(parsed, manifest);
    }

    #[test]
    fn smooth_is_linear(
        x in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 6), 1..8),
        a in -3.0f64..3.0,
    ) {
        let scaled: Vec<Vec<f64>> = x
            .iter()
            .map(|f| f.iter().map(|v| a * v).collect())
            .collect();
        let lhs = smooth(&scaled).unwrap();
        let rhs = smooth(&x).unwrap();
        for (lf, rf) in lhs.iter().zip(&rhs) {
            for (l, r) in lf.iter().zip(rf) {
                prop_assert!((l - a * r).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn approximate_pool_of_constants_vanishes(
        value in -100.0f64..100.0,
        t in 1usize..60,
        dim in 1usize..6,
    ) {
        let frames = vec![vec![value; dim]; t];
        let pooled = approximate_pool(&frames).unwrap();
        for x in pooled {
            prop_assert!(x.abs() <= 1e-9);
        }
    }

    #[test]
    fn pair_count_is_quadratic(t in 1usize..30) {
        let frames = vec![vec![1.0, 2.0]; t];
        let problem = build_problem(&frames, 1.0).unwrap();
        prop_assert_eq!(problem.num_pairs(), t * (t - 1) / 2);
        let diffs: Vec<Vec<f64>> = problem.diffs().collect();
        prop_assert_eq!(diffs.len(), t * (t - 1) / 2);
        for d in diffs {
            prop_assert_eq!(d.len(), 2);
        }
    }
}

#[test]
fn conditioned_outlier_lands_on_center() {
    let mut u = vec![0.0f32; 25];
    u[7] = 300.0;
    let field = FlowField::new(5, 5, u, vec![0.0; 25]).unwrap();
    let q = condition_frame(&field, 20.0).unwrap();
    assert_eq!(q.u_gray.values()[7], 128);
}
