//! Per-subject pose statistics and source-to-target global pose normalization.
//!
//! A source pose whose average ankle height is `y` is shifted vertically so
//! its ankles land on the linearly mapped target position, then scaled about
//! that ankle anchor by a factor interpolated between the close and far
//! height ratios of the two subjects.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::pose::{avg_ankle_y, subject_height, Pose, PoseSequence};

pub const DEFAULT_ALPHA: f64 = 0.7;

/// Fraction of the close/far span defining the neighbourhood used for heights.
pub const HEIGHT_BAND: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectStats {
    pub subject_id: String,
    pub close_y: f64,
    pub far_y: f64,
    pub height_close: f64,
    pub height_far: f64,
    pub median_y: f64,
    pub alpha: f64,
}

/// Selection rule for the far ankle position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FarRule {
    /// Largest `S` above the median whose distance to the median is at least
    /// `alpha` times the close position's distance to it.
    #[default]
    DistanceFromMedian,
    /// The set formula read literally: `|S - med| < alpha |close - med|`, `S < med`.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatsOptions {
    pub alpha: f64,
    pub far_rule: FarRule,
    pub height_band: f64,
}

impl Default for StatsOptions {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            far_rule: FarRule::default(),
            height_band: HEIGHT_BAND,
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Close, median and far ankle positions from a set of average ankle ys.
pub fn close_far_positions(ankle_ys: &[f64], alpha: f64, rule: FarRule) -> (f64, f64, f64) {
    let close = ankle_ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let med = median(ankle_ys);
    let reach = alpha * (close - med).abs();
    let candidates = ankle_ys.iter().copied().filter(|&s| {
        s < med
            && match rule {
                FarRule::DistanceFromMedian => med - s >= reach,
                FarRule::Literal => (s - med).abs() < reach,
            }
    });
    let far = candidates
        .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.max(s))))
        .unwrap_or_else(|| ankle_ys.iter().copied().fold(f64::INFINITY, f64::min));
    (close, med, far)
}

pub fn compute_subject_stats(seq: &PoseSequence, alpha: f64) -> Result<SubjectStats> {
    compute_subject_stats_with(
        seq,
        StatsOptions {
            alpha,
            ..Default::default()
        },
    )
}

/// Frames lacking either ankle or the nose are skipped.
pub fn compute_subject_stats_with(seq: &PoseSequence, opts: StatsOptions) -> Result<SubjectStats> {
    let usable: Vec<(f64, f64)> = seq
        .poses
        .iter()
        .filter_map(|p| Some((avg_ankle_y(p).ok()?, subject_height(p).ok()?)))
        .collect();
    if usable.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} frames with ankles and nose, need at least 2",
            usable.len()
        )));
    }
    let ys: Vec<f64> = usable.iter().map(|u| u.0).collect();
    let (close_y, median_y, far_y) = close_far_positions(&ys, opts.alpha, opts.far_rule);
    if close_y == far_y {
        return Err(Error::DegenerateRange);
    }
    let band = opts.height_band * (close_y - far_y);
    let height_near = |pos: f64| {
        let hs: Vec<f64> = usable
            .iter()
            .filter(|(y, _)| (y - pos).abs() <= band)
            .map(|u| u.1)
            .collect();
        median(&hs)
    };
    Ok(SubjectStats {
        subject_id: String::new(),
        close_y,
        far_y,
        height_close: height_near(close_y),
        height_far: height_near(far_y),
        median_y,
        alpha: opts.alpha,
    })
}

/// Fraction of the way from the far to the close position.
fn position_fraction(y: f64, src: &SubjectStats) -> Result<f64> {
    let span = src.close_y - src.far_y;
    if span == 0.0 || !span.is_finite() {
        return Err(Error::DegenerateRange);
    }
    Ok((y - src.far_y) / span)
}

/// The target-frame ankle y that a source ankle y maps to.
pub fn translation_for(y: f64, src: &SubjectStats, tgt: &SubjectStats) -> Result<f64> {
    Ok(tgt.far_y + position_fraction(y, src)? * (tgt.close_y - tgt.far_y))
}

pub fn scale_for(y: f64, src: &SubjectStats, tgt: &SubjectStats) -> Result<f64> {
    let heights = [
        src.height_close,
        src.height_far,
        tgt.height_close,
        tgt.height_far,
    ];
    if heights.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::NonPositiveHeight);
    }
    let c_close = tgt.height_close / src.height_close;
    let c_far = tgt.height_far / src.height_far;
    Ok(c_far + position_fraction(y, src)? * (c_close - c_far))
}

/// Vertical shift followed by a uniform scale about `(anchor_x, anchor_y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormTransform {
    pub shift_y: f64,
    pub scale: f64,
    pub anchor_x: f64,
    pub anchor_y: f64,
}

impl NormTransform {
    pub const IDENTITY: NormTransform = NormTransform {
        shift_y: 0.0,
        scale: 1.0,
        anchor_x: 0.0,
        anchor_y: 0.0,
    };

    pub fn for_pose(pose: &Pose, src: &SubjectStats, tgt: &SubjectStats) -> Result<Self> {
        let (ax, ay) = pose.avg_ankle_point()?;
        let mapped = translation_for(ay, src, tgt)?;
        Ok(Self {
            shift_y: mapped - ay,
            scale: scale_for(ay, src, tgt)?,
            anchor_x: ax,
            anchor_y: mapped,
        })
    }

    pub fn apply(&self, pose: &Pose) -> Pose {
        pose.map_present(|x, y| {
            let ty = y + self.shift_y;
            (
                self.anchor_x + self.scale * (x - self.anchor_x),
                self.anchor_y + self.scale * (ty - self.anchor_y),
            )
        })
    }
}

pub fn normalize_pose(pose: &Pose, src: &SubjectStats, tgt: &SubjectStats) -> Result<Pose> {
    Ok(NormTransform::for_pose(pose, src, tgt)?.apply(pose))
}

/// Normalizes a whole sequence. Frames without both ankles reuse the most
/// recent transform (or the next available one for a leading run); a sequence
/// with no usable frame is returned unchanged.
pub fn normalize_sequence(
    poses: &[Pose],
    src: &SubjectStats,
    tgt: &SubjectStats,
) -> Result<Vec<Pose>> {
    let transforms: Vec<Option<NormTransform>> = poses
        .iter()
        .map(|p| match NormTransform::for_pose(p, src, tgt) {
            Ok(t) => Ok(Some(t)),
            Err(Error::MissingJoint(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let first = transforms.iter().flatten().next().copied();
    let mut current = first.unwrap_or(NormTransform::IDENTITY);
    Ok(poses
        .iter()
        .zip(transforms)
        .map(|(p, t)| {
            if let Some(t) = t {
                current = t;
            }
            current.apply(p)
        })
        .collect())
}

impl SubjectStats {
    pub fn to_text(&self) -> String {
        let mut s = String::from("# subject stats v1\n");
        let _ = writeln!(s, "subject_id = {}", self.subject_id);
        for (k, v) in [
            ("close_y", self.close_y),
            ("far_y", self.far_y),
            ("height_close", self.height_close),
            ("height_far", self.height_far),
            ("median_y", self.median_y),
            ("alpha", self.alpha),
        ] {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut stats = SubjectStats {
            subject_id: String::new(),
            close_y: f64::NAN,
            far_y: f64::NAN,
            height_close: f64::NAN,
            height_far: f64::NAN,
            median_y: f64::NAN,
            alpha: DEFAULT_ALPHA,
        };
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::MalformedInput(format!("bad stats line: {line}")))?;
            let (k, v) = (k.trim(), v.trim());
            if k == "subject_id" {
                stats.subject_id = v.to_string();
                continue;
            }
            let num: f64 = v
                .parse()
                .map_err(|_| Error::MalformedInput(format!("bad number for {k}: {v}")))?;
            match k {
                "close_y" => stats.close_y = num,
                "far_y" => stats.far_y = num,
                "height_close" => stats.height_close = num,
                "height_far" => stats.height_far = num,
                "median_y" => stats.median_y = num,
                "alpha" => stats.alpha = num,
                _ => return Err(Error::MalformedInput(format!("unknown stats key {k}"))),
            }
        }
        let required = [
            stats.close_y,
            stats.far_y,
            stats.height_close,
            stats.height_far,
        ];
        if required.iter().any(|v| v.is_nan()) {
            return Err(Error::MalformedInput("stats file missing fields".into()));
        }
        if stats.median_y.is_nan() {
            stats.median_y = (stats.close_y + stats.far_y) / 2.0;
        }
        Ok(stats)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::atomic_write(path.as_ref(), self.to_text().as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}
