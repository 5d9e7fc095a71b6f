mod common;

use common::*;
use dance_core::render::{composite_residual, face_box, render_stick_figure};
use dance_core::{Frame, Keypoint};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn face_box_fits_and_keeps_its_size(nx in -100.0f64..700.0, ny in -100.0f64..400.0, size in 1u32..256) {
        let mut p = full_pose(&mut ChaCha8Rng::seed_from_u64(0));
        p.keypoints[0] = Keypoint::new(nx, ny, 1.0);
        let b = face_box(&p, size, 512, 256).unwrap();
        prop_assert_eq!((b.width(), b.height()), (size, size));
        prop_assert!(b.x1 <= 512 && b.y1 <= 256);
    }

    #[test]
    fn compositing_only_touches_the_box(seed in any::<u64>(), size in 1u32..32) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (48, 40);
        let data = (0..3 * w * h).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let frame = Frame::from_data(w, h, data).unwrap();
        let mut p = full_pose(&mut rng);
        p.keypoints[0] = Keypoint::new(rng.gen_range(0.0..48.0), rng.gen_range(0.0..40.0), 1.0);
        let b = face_box(&p, size, w, h).unwrap();
        let residual = Frame::from_data(size, size, (0..3 * size * size).map(|_| rng.gen_range(-2.0f32..2.0)).collect()).unwrap();
        let out = composite_residual(&frame, &residual, &b).unwrap();
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    if b.contains(x, y) {
                        let want = (frame.get(c, x, y) + residual.get(c, x - b.x0, y - b.y0)).clamp(-1.0, 1.0);
                        prop_assert_eq!(out.get(c, x, y), want);
                    } else {
                        prop_assert_eq!(out.get(c, x, y).to_bits(), frame.get(c, x, y).to_bits());
                    }
                }
            }
        }
        prop_assert_eq!(composite_residual(&frame, &Frame::zeros(size, size), &b).unwrap(), frame);
    }

    #[test]
    fn rendering_is_repeatable_with_black_background(seed in any::<u64>()) {
        let p = full_pose(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = render_stick_figure(&p, 512, 256);
        prop_assert_eq!(&a, &render_stick_figure(&p, 512, 256));
        prop_assert!(!a.non_black_pixels().is_empty());
    }
}
