mod common;

use common::*;
use dance_core::pose::pose_distance;
use dance_core::{Keypoint, Pose, SkeletonTopology};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn metric_axioms_over_random_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let (p, q, r) = (full_pose(&mut rng), full_pose(&mut rng), full_pose(&mut rng));
        assert_eq!(pose_distance(&p, &p).unwrap(), 0.0);
        let pq = pose_distance(&p, &q).unwrap();
        assert!(pq >= 0.0);
        assert_eq!(pq, pose_distance(&q, &p).unwrap());
        let via = pose_distance(&p, &r).unwrap() + pose_distance(&r, &q).unwrap();
        assert!(pq <= via + 1e-9);
    }
}

#[test]
fn three_four_five() {
    let topo = SkeletonTopology::custom("pair", vec!["a".into(), "b".into()], vec![(0, 1)], 0, 0, 1).unwrap();
    let p = Pose::new(topo.clone(), vec![Keypoint::new(0.0, 0.0, 1.0); 2]).unwrap();
    let q = Pose::new(topo, vec![Keypoint::new(3.0, 4.0, 1.0), Keypoint::new(0.0, 0.0, 1.0)]).unwrap();
    assert_eq!(pose_distance(&p, &q).unwrap(), 2.5);
}

proptest! {
    #[test]
    fn axis_shift_moves_distance_by_its_length(seed in any::<u64>(), t in -200.0f64..200.0, vertical in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = full_pose(&mut rng);
        let q = p.map_present(|x, y| if vertical { (x, y + t) } else { (x + t, y) });
        prop_assert!((pose_distance(&p, &q).unwrap() - t.abs()).abs() < 1e-9);
    }

    #[test]
    fn missing_joints_are_excluded(seed in any::<u64>(), drop in 0usize..25) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = full_pose(&mut rng);
        let mut q = full_pose(&mut rng);
        q.keypoints[drop] = Keypoint::new(rng.gen_range(-1e6..1e6), 0.0, 0.0);
        let oracle: f64 = (0..25)
            .filter(|&k| k != drop)
            .map(|k| (p.keypoints[k].x - q.keypoints[k].x).hypot(p.keypoints[k].y - q.keypoints[k].y))
            .sum::<f64>()
            / 24.0;
        prop_assert!((pose_distance(&p, &q).unwrap() - oracle).abs() < 1e-9);
    }
}
