#![allow(dead_code)]

use dance_core::normalize::SubjectStats;
use dance_core::{Keypoint, Pose, SkeletonTopology};
use rand::Rng;

pub fn random_stats(rng: &mut impl Rng, id: &str) -> SubjectStats {
    let far_y = rng.gen_range(50.0..400.0);
    let close_y = far_y + rng.gen_range(1.0..300.0);
    SubjectStats {
        subject_id: id.into(),
        close_y,
        far_y,
        height_close: rng.gen_range(50.0..500.0),
        height_far: rng.gen_range(20.0..300.0),
        median_y: (close_y + far_y) / 2.0,
        alpha: 0.7,
    }
}

/// Body-25 pose with every joint present.
pub fn full_pose(rng: &mut impl Rng) -> Pose {
    let kps = (0..25)
        .map(|_| Keypoint::new(rng.gen_range(0.0..512.0), rng.gen_range(0.0..256.0), rng.gen_range(0.1..1.0)))
        .collect();
    Pose::new(SkeletonTopology::body25(), kps).unwrap()
}

/// Deterministic uniform samples in [0, 1) shared with external reference scripts.
pub fn splitmix_unit(seed: u64, i: u64) -> f64 {
    let mut z = (seed.wrapping_mul(1_000_003).wrapping_add(i)).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}
