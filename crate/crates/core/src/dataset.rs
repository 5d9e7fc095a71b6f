//! Dataset manifests: ingestion of frame/pose directories, persistence,
//! temporal splits and consecutive-frame pairing.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::pose::{parse_detector_frame, Pose, PoseSequence, SelectionPolicy, SkeletonTopology};

pub const MANIFEST_HEADER: &str = "dance-manifest v1";

/// Training footage comes first; the remainder is held out.
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Unassigned,
    Train,
    Test,
}

impl Split {
    fn as_str(self) -> &'static str {
        match self {
            Split::Unassigned => "none",
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Split::Unassigned),
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::MalformedInput(format!("unknown split {s}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub frame_index: u64,
    pub frame_path: PathBuf,
    pub pose_path: PathBuf,
    pub split: Split,
    /// False when the pose file is absent or unparseable.
    pub usable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub subject_id: String,
    pub fps: f64,
    pub resolution: (u32, u32),
    /// Difference between consecutive frame indices after downsampling.
    pub index_step: u64,
    pub entries: Vec<ManifestEntry>,
}

/// Last run of ASCII digits in a file stem, e.g. `frame_000123_keypoints` → 123.
pub fn index_from_name(path: &Path) -> Option<u64> {
    let stem = path.file_name()?.to_str()?;
    let stem = stem.split('.').next()?;
    let bytes = stem.as_bytes();
    let end = bytes.iter().rposition(u8::is_ascii_digit)? + 1;
    let start = bytes[..end]
        .iter()
        .rposition(|b| !b.is_ascii_digit())
        .map_or(0, |p| p + 1);
    stem[start..end].parse().ok()
}

fn indexed_files(dir: &Path, accept: impl Fn(&str) -> bool) -> Result<BTreeMap<u64, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if !path.is_file() || !accept(name) {
            continue;
        }
        if let Some(i) = index_from_name(&path) {
            if let Some(prev) = out.insert(i, path.clone()) {
                return Err(Error::IndexMismatch(format!(
                    "index {i} used by both {} and {}",
                    prev.display(),
                    path.display()
                )));
            }
        }
    }
    Ok(out)
}

/// Canonical frame and pose file names for a frame index.
pub fn frame_file_name(index: u64) -> String {
    format!("frame_{index:06}.png")
}

pub fn pose_file_name(index: u64) -> String {
    format!("frame_{index:06}_keypoints.json")
}

/// Pairs index-aligned frame images and detector JSON files.
pub fn ingest_dataset(
    subject_id: &str,
    frames_dir: &Path,
    poses_dir: &Path,
    fps: f64,
    downsample: u64,
) -> Result<DatasetManifest> {
    if downsample == 0 {
        return Err(Error::InvalidConfig("downsample factor must be >= 1".into()));
    }
    let frames = indexed_files(frames_dir, |n| n.to_ascii_lowercase().ends_with(".png"))?;
    if frames.is_empty() {
        return Err(Error::NoFrames(frames_dir.to_path_buf()));
    }
    let poses = indexed_files(poses_dir, |n| n.ends_with(".json"))?;
    if let Some(orphan) = poses.keys().find(|i| !frames.contains_key(i)) {
        return Err(Error::IndexMismatch(format!(
            "pose file for index {orphan} has no matching frame"
        )));
    }
    let first = frames.values().next().expect("non-empty");
    let resolution = image::image_dimensions(first)?;
    let topology = SkeletonTopology::body25();

    let mut entries = Vec::new();
    for (pos, (&index, frame_path)) in frames.iter().enumerate() {
        if pos as u64 % downsample != 0 {
            continue;
        }
        if image::image_dimensions(frame_path)? != resolution {
            return Err(Error::Validation(format!(
                "{} differs from resolution {:?}",
                frame_path.display(),
                resolution
            )));
        }
        let (pose_path, usable) = match poses.get(&index) {
            Some(p) => {
                let ok = std::fs::read_to_string(p)
                    .ok()
                    .map(|t| parse_detector_frame(&t, &topology, SelectionPolicy::default()).is_ok())
                    .unwrap_or(false);
                (p.clone(), ok)
            }
            None => (poses_dir.join(pose_file_name(index)), false),
        };
        entries.push(ManifestEntry {
            frame_index: index,
            frame_path: frame_path.clone(),
            pose_path,
            split: Split::Unassigned,
            usable,
        });
    }
    let index_step = match (entries.first(), entries.get(1)) {
        (Some(a), Some(b)) => b.frame_index - a.frame_index,
        _ => downsample,
    };
    Ok(DatasetManifest {
        subject_id: subject_id.to_string(),
        fps: fps / downsample as f64,
        resolution,
        index_step,
        entries,
    })
}

/// Marks the first `⌊N·fraction⌋` entries as training and the rest as test.
pub fn split_dataset(manifest: &DatasetManifest, train_fraction: f64) -> Result<DatasetManifest> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidFraction(train_fraction));
    }
    let n_train = (manifest.entries.len() as f64 * train_fraction).floor() as usize;
    let mut out = manifest.clone();
    for (i, e) in out.entries.iter_mut().enumerate() {
        e.split = if i < n_train { Split::Train } else { Split::Test };
    }
    Ok(out)
}

fn check_field(s: &str) -> Result<&str> {
    if s.contains(['\t', '\n', '\r']) {
        return Err(Error::MalformedInput(format!(
            "field {s:?} contains a tab or newline"
        )));
    }
    Ok(s)
}

fn path_field(p: &Path) -> Result<String> {
    let s = p
        .to_str()
        .ok_or_else(|| Error::MalformedInput(format!("non-UTF-8 path {}", p.display())))?;
    Ok(check_field(s)?.to_string())
}

impl DatasetManifest {
    pub fn usable_entries(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.usable)
    }

    pub fn entries_in(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Tab-separated text with a versioned header; one `entry` line per frame.
    pub fn to_text(&self) -> Result<String> {
        let mut s = String::new();
        let _ = writeln!(s, "{MANIFEST_HEADER}");
        let _ = writeln!(s, "subject\t{}", check_field(&self.subject_id)?);
        let _ = writeln!(s, "fps\t{}", self.fps);
        let _ = writeln!(s, "resolution\t{}\t{}", self.resolution.0, self.resolution.1);
        let _ = writeln!(s, "index_step\t{}", self.index_step);
        let _ = writeln!(s, "entries\t{}", self.entries.len());
        for e in &self.entries {
            let _ = writeln!(
                s,
                "entry\t{}\t{}\t{}\t{}\t{}",
                e.frame_index,
                e.split.as_str(),
                u8::from(e.usable),
                path_field(&e.frame_path)?,
                path_field(&e.pose_path)?
            );
        }
        Ok(s)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::MalformedInput(msg);
        let mut lines = text.lines();
        if lines.next() != Some(MANIFEST_HEADER) {
            return Err(bad("missing manifest header".into()));
        }
        let mut subject_id = None;
        let mut fps = None;
        let mut resolution = None;
        let mut index_step = None;
        let mut declared = None;
        let mut entries = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let fields: Vec<&str> = line.split('\t').collect();
            let num = |s: &str| -> Result<u64> {
                s.parse().map_err(|_| bad(format!("bad integer {s:?}")))
            };
            match fields.as_slice() {
                ["subject", id] => subject_id = Some(id.to_string()),
                ["fps", v] => {
                    fps = Some(v.parse::<f64>().map_err(|_| bad(format!("bad fps {v:?}")))?)
                }
                ["resolution", w, h] => resolution = Some((num(w)? as u32, num(h)? as u32)),
                ["index_step", v] => index_step = Some(num(v)?),
                ["entries", v] => declared = Some(num(v)? as usize),
                ["entry", idx, split, usable, frame, pose] => entries.push(ManifestEntry {
                    frame_index: num(idx)?,
                    frame_path: PathBuf::from(frame),
                    pose_path: PathBuf::from(pose),
                    split: Split::parse(split)?,
                    usable: match *usable {
                        "1" => true,
                        "0" => false,
                        other => return Err(bad(format!("bad usable flag {other:?}"))),
                    },
                }),
                _ => return Err(bad(format!("unrecognized line {line:?}"))),
            }
        }
        if declared != Some(entries.len()) {
            return Err(bad("entry count does not match header".into()));
        }
        Ok(Self {
            subject_id: subject_id.ok_or_else(|| bad("missing subject".into()))?,
            fps: fps.ok_or_else(|| bad("missing fps".into()))?,
            resolution: resolution.ok_or_else(|| bad("missing resolution".into()))?,
            index_step: index_step.ok_or_else(|| bad("missing index_step".into()))?,
            entries,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::atomic_write(path.as_ref(), self.to_text()?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Structural checks; with `check_files`, also requires every referenced
    /// frame (and the pose of every usable entry) to exist.
    pub fn validate(&self, check_files: bool) -> Result<()> {
        if self.entries.windows(2).any(|w| w[0].frame_index >= w[1].frame_index) {
            return Err(Error::Validation("frame indices not strictly increasing".into()));
        }
        // assigned splits must read train* test*
        let assigned: Vec<Split> = self
            .entries
            .iter()
            .map(|e| e.split)
            .filter(|s| *s != Split::Unassigned)
            .collect();
        if !assigned.is_empty() && assigned.len() != self.entries.len() {
            return Err(Error::Validation("split assigned to only some entries".into()));
        }
        if assigned.windows(2).any(|w| w[0] == Split::Test && w[1] == Split::Train) {
            return Err(Error::Validation("train entries must precede test entries".into()));
        }
        if check_files {
            for e in &self.entries {
                if !e.frame_path.is_file() {
                    return Err(Error::Validation(format!(
                        "missing frame {}",
                        e.frame_path.display()
                    )));
                }
                if e.usable && !e.pose_path.is_file() {
                    return Err(Error::Validation(format!(
                        "missing pose {}",
                        e.pose_path.display()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Parses the poses of the given entries; unusable entries yield an empty pose.
    pub fn load_poses<'a>(
        &self,
        entries: impl IntoIterator<Item = &'a ManifestEntry>,
    ) -> Result<PoseSequence> {
        let topology = SkeletonTopology::body25();
        let mut poses = Vec::new();
        let mut indices = Vec::new();
        for e in entries {
            let pose = if e.usable {
                parse_detector_frame(
                    &std::fs::read_to_string(&e.pose_path)?,
                    &topology,
                    SelectionPolicy::default(),
                )?
            } else {
                Pose::empty(topology.clone())
            };
            poses.push(pose);
            indices.push(e.frame_index);
        }
        PoseSequence::new(poses, indices, self.fps)
    }
}

/// Positions `(a, b)` into `entries` with `index(b) = index(a) + stride·step`,
/// both usable. Pairs across gaps are dropped.
pub fn temporal_index_pairs(
    entries: &[&ManifestEntry],
    index_step: u64,
    stride: u64,
) -> Result<Vec<(usize, usize)>> {
    if stride == 0 {
        return Err(Error::InvalidConfig("stride must be >= 1".into()));
    }
    let by_index: BTreeMap<u64, usize> = entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.usable)
        .map(|(i, e)| (e.frame_index, i))
        .collect();
    let delta = stride * index_step.max(1);
    let pairs: Vec<(usize, usize)> = by_index
        .iter()
        .filter_map(|(&idx, &a)| by_index.get(&(idx + delta)).map(|&b| (a, b)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(pairs)
}
