//! Pose data model and scalar pose measurements.
//!
//! Coordinates are image pixels with y growing downward. A keypoint whose
//! confidence is below [`MISSING_THRESHOLD`] is treated as missing and its
//! coordinates are never read.

use std::sync::{Arc, OnceLock};

use serde_json::Value;

use crate::error::{Error, Result};

/// Confidence below which a keypoint counts as undetected.
pub const MISSING_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl Keypoint {
    pub const MISSING: Keypoint = Keypoint {
        x: 0.0,
        y: 0.0,
        confidence: 0.0,
    };

    pub fn new(x: f64, y: f64, confidence: f64) -> Self {
        Self { x, y, confidence }
    }

    pub fn is_present(&self) -> bool {
        self.confidence >= MISSING_THRESHOLD
    }

    pub fn point(&self) -> Option<(f64, f64)> {
        self.is_present().then_some((self.x, self.y))
    }
}

/// Joint connectivity, limb palette and the named joints other modules rely on.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonTopology {
    pub name: String,
    pub joint_names: Vec<String>,
    pub limbs: Vec<(usize, usize)>,
    pub limb_colors: Vec<[u8; 3]>,
    pub joint_colors: Vec<[u8; 3]>,
    pub nose: usize,
    pub left_ankle: usize,
    pub right_ankle: usize,
}

const BODY25_JOINTS: [&str; 25] = [
    "Nose", "Neck", "RShoulder", "RElbow", "RWrist", "LShoulder", "LElbow", "LWrist", "MidHip",
    "RHip", "RKnee", "RAnkle", "LHip", "LKnee", "LAnkle", "REye", "LEye", "REar", "LEar",
    "LBigToe", "LSmallToe", "LHeel", "RBigToe", "RSmallToe", "RHeel",
];

const BODY25_LIMBS: [(usize, usize); 24] = [
    (1, 8),
    (1, 2),
    (1, 5),
    (2, 3),
    (3, 4),
    (5, 6),
    (6, 7),
    (8, 9),
    (9, 10),
    (10, 11),
    (8, 12),
    (12, 13),
    (13, 14),
    (1, 0),
    (0, 15),
    (15, 17),
    (0, 16),
    (16, 18),
    (14, 19),
    (19, 20),
    (14, 21),
    (11, 22),
    (22, 23),
    (11, 24),
];

/// `n` colors with evenly spaced hues at full saturation and value.
pub fn hue_palette(n: usize) -> Vec<[u8; 3]> {
    (0..n)
        .map(|i| {
            let h = 6.0 * i as f64 / n.max(1) as f64;
            let sector = h.floor() as u32 % 6;
            let f = h - h.floor();
            let (r, g, b) = match sector {
                0 => (1.0, f, 0.0),
                1 => (1.0 - f, 1.0, 0.0),
                2 => (0.0, 1.0, f),
                3 => (0.0, 1.0 - f, 1.0),
                4 => (f, 0.0, 1.0),
                _ => (1.0, 0.0, 1.0 - f),
            };
            [
                (r * 255.0f64).round() as u8,
                (g * 255.0f64).round() as u8,
                (b * 255.0f64).round() as u8,
            ]
        })
        .collect()
}

impl SkeletonTopology {
    /// The 25-joint body layout emitted by the common open-source detector.
    pub fn body25() -> Arc<SkeletonTopology> {
        static BODY25: OnceLock<Arc<SkeletonTopology>> = OnceLock::new();
        BODY25
            .get_or_init(|| {
                Arc::new(SkeletonTopology {
                    name: "body25".into(),
                    joint_names: BODY25_JOINTS.iter().map(|s| s.to_string()).collect(),
                    limbs: BODY25_LIMBS.to_vec(),
                    limb_colors: hue_palette(BODY25_LIMBS.len()),
                    joint_colors: hue_palette(BODY25_JOINTS.len()),
                    nose: 0,
                    left_ankle: 14,
                    right_ankle: 11,
                })
            })
            .clone()
    }

    /// Builds a custom topology, validating limb endpoints and named indices.
    pub fn custom(
        name: impl Into<String>,
        joint_names: Vec<String>,
        limbs: Vec<(usize, usize)>,
        nose: usize,
        left_ankle: usize,
        right_ankle: usize,
    ) -> Result<Arc<SkeletonTopology>> {
        let n = joint_names.len();
        if limbs.iter().any(|&(a, b)| a >= n || b >= n) {
            return Err(Error::InvalidConfig("limb endpoint out of range".into()));
        }
        if nose >= n || left_ankle >= n || right_ankle >= n {
            return Err(Error::InvalidConfig("named joint out of range".into()));
        }
        let limb_colors = hue_palette(limbs.len());
        Ok(Arc::new(SkeletonTopology {
            name: name.into(),
            joint_colors: hue_palette(n),
            joint_names,
            limbs,
            limb_colors,
            nose,
            left_ankle,
            right_ankle,
        }))
    }

    pub fn joint_count(&self) -> usize {
        self.joint_names.len()
    }
}

#[derive(Debug, Clone)]
pub struct Pose {
    pub topology: Arc<SkeletonTopology>,
    pub keypoints: Vec<Keypoint>,
}

impl PartialEq for Pose {
    fn eq(&self, other: &Self) -> bool {
        self.topology.name == other.topology.name && self.keypoints == other.keypoints
    }
}

impl Pose {
    pub fn new(topology: Arc<SkeletonTopology>, keypoints: Vec<Keypoint>) -> Result<Self> {
        if keypoints.len() != topology.joint_count() {
            return Err(Error::TopologyMismatch {
                expected: format!("{} ({} joints)", topology.name, topology.joint_count()),
                found: format!("{} keypoints", keypoints.len()),
            });
        }
        Ok(Self {
            topology,
            keypoints,
        })
    }

    /// A pose of the given topology with every joint missing.
    pub fn empty(topology: Arc<SkeletonTopology>) -> Self {
        let keypoints = vec![Keypoint::MISSING; topology.joint_count()];
        Self {
            topology,
            keypoints,
        }
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    pub fn joint(&self, index: usize) -> Option<(f64, f64)> {
        self.keypoints.get(index).and_then(Keypoint::point)
    }

    pub fn nose(&self) -> Option<(f64, f64)> {
        self.joint(self.topology.nose)
    }

    fn ensure_same_topology(&self, other: &Pose) -> Result<()> {
        if self.topology.name != other.topology.name || self.len() != other.len() {
            return Err(Error::TopologyMismatch {
                expected: self.topology.name.clone(),
                found: other.topology.name.clone(),
            });
        }
        Ok(())
    }

    /// Average of the two ankle points.
    pub fn avg_ankle_point(&self) -> Result<(f64, f64)> {
        let l = self
            .joint(self.topology.left_ankle)
            .ok_or(Error::MissingJoint("left ankle"))?;
        let r = self
            .joint(self.topology.right_ankle)
            .ok_or(Error::MissingJoint("right ankle"))?;
        Ok(((l.0 + r.0) / 2.0, (l.1 + r.1) / 2.0))
    }

    /// Applies `f` to every present keypoint; missing joints are untouched.
    pub fn map_present(&self, mut f: impl FnMut(f64, f64) -> (f64, f64)) -> Pose {
        let keypoints = self
            .keypoints
            .iter()
            .map(|k| {
                if k.is_present() {
                    let (x, y) = f(k.x, k.y);
                    Keypoint::new(x, y, k.confidence)
                } else {
                    *k
                }
            })
            .collect();
        Pose {
            topology: self.topology.clone(),
            keypoints,
        }
    }

    /// Serializes this pose as a single-person detector frame.
    pub fn to_detector_json(&self) -> String {
        let flat: Vec<f64> = self
            .keypoints
            .iter()
            .flat_map(|k| [k.x, k.y, k.confidence])
            .collect();
        serde_json::json!({
            "version": 1.3,
            "people": [{ "pose_keypoints_2d": flat }],
        })
        .to_string()
    }
}

#[derive(Debug, Clone)]
pub struct PoseSequence {
    pub poses: Vec<Pose>,
    pub frame_indices: Vec<u64>,
    pub fps: f64,
}

impl PoseSequence {
    pub fn new(poses: Vec<Pose>, frame_indices: Vec<u64>, fps: f64) -> Result<Self> {
        if poses.len() != frame_indices.len() {
            return Err(Error::LengthMismatch(format!(
                "{} poses vs {} indices",
                poses.len(),
                frame_indices.len()
            )));
        }
        if frame_indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation(
                "frame indices must be strictly increasing".into(),
            ));
        }
        if let Some(first) = poses.first() {
            for p in &poses[1..] {
                first.ensure_same_topology(p)?;
            }
        }
        Ok(Self {
            poses,
            frame_indices,
            fps,
        })
    }

    /// Consecutive indices starting at zero.
    pub fn from_poses(poses: Vec<Pose>, fps: f64) -> Result<Self> {
        let idx = (0..poses.len() as u64).collect();
        Self::new(poses, idx, fps)
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

/// How to pick one person out of a multi-person detector frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelectionPolicy {
    #[default]
    MaxConfidenceSum,
    Index(usize),
}

/// Parses one detector JSON frame into the pose of the selected person.
pub fn parse_detector_frame(
    json_text: &str,
    topology: &Arc<SkeletonTopology>,
    policy: SelectionPolicy,
) -> Result<Pose> {
    let value: Value =
        serde_json::from_str(json_text).map_err(|e| Error::MalformedInput(e.to_string()))?;
    let people = value
        .get("people")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::MalformedInput("missing \"people\" array".into()))?;
    if people.is_empty() {
        return Err(Error::NoPersonDetected);
    }

    let mut candidates = Vec::with_capacity(people.len());
    for person in people {
        let flat = person
            .get("pose_keypoints_2d")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::MalformedInput("missing \"pose_keypoints_2d\"".into()))?;
        if flat.len() % 3 != 0 {
            return Err(Error::MalformedInput(format!(
                "keypoint list length {} is not a multiple of 3",
                flat.len()
            )));
        }
        let nums = flat
            .iter()
            .map(|v| {
                v.as_f64()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::MalformedInput("non-numeric keypoint value".into()))
            })
            .collect::<Result<Vec<f64>>>()?;
        let keypoints: Vec<Keypoint> = nums
            .chunks_exact(3)
            .map(|c| Keypoint::new(c[0], c[1], c[2]))
            .collect();
        if keypoints
            .iter()
            .any(|k| !(0.0..=1.0).contains(&k.confidence))
        {
            return Err(Error::MalformedInput("confidence outside [0,1]".into()));
        }
        candidates.push(Pose::new(topology.clone(), keypoints)?);
    }

    match policy {
        SelectionPolicy::Index(i) => candidates
            .into_iter()
            .nth(i)
            .ok_or(Error::NoPersonDetected),
        SelectionPolicy::MaxConfidenceSum => {
            let mut best: Option<(f64, Pose)> = None;
            for pose in candidates {
                let sum: f64 = pose.keypoints.iter().map(|k| k.confidence).sum();
                // strict comparison keeps the first person on ties
                if best.as_ref().is_none_or(|(b, _)| sum > *b) {
                    best = Some((sum, pose));
                }
            }
            Ok(best.expect("non-empty").1)
        }
    }
}

/// Mean per-joint L2 distance over joints present in both poses.
pub fn pose_distance(p: &Pose, q: &Pose) -> Result<f64> {
    p.ensure_same_topology(q)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (a, b) in p.keypoints.iter().zip(&q.keypoints) {
        if a.is_present() && b.is_present() {
            sum += (a.x - b.x).hypot(a.y - b.y);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::NoCommonJoints);
    }
    Ok(sum / n as f64)
}

pub fn avg_ankle_y(pose: &Pose) -> Result<f64> {
    Ok(pose.avg_ankle_point()?.1)
}

/// Distance from the average ankle point to the nose.
pub fn subject_height(pose: &Pose) -> Result<f64> {
    let nose = pose.nose().ok_or(Error::MissingJoint("nose"))?;
    let ankle = pose.avg_ankle_point()?;
    Ok((ankle.0 - nose.0).hypot(ankle.1 - nose.1))
}
