//! Motion transfer: normalize source poses, render, generate frame by frame and
//! composite the face residual. Also the nearest-neighbour baseline video.

use std::path::{Path, PathBuf};

use candle_core::{DType, Tensor};
use dance_core::baseline::{gather, nn_baseline, NnMatch};
use dance_core::dataset::frame_file_name;
use dance_core::normalize::{normalize_sequence, SubjectStats};
use dance_core::render::{composite_residual, face_box, render_stick_figure};
use dance_core::{Frame, Pose, PoseSequence};
use serde::{Deserialize, Serialize};

use crate::arch::Mode;
use crate::bundle::ModelBundle;
use crate::error::{Error, Result};
use crate::tensor::{frame_to_tensor, tensor_to_frame};

pub fn transfer_video(
    source: &PoseSequence,
    src_stats: &SubjectStats,
    tgt_stats: &SubjectStats,
    bundle: &ModelBundle,
    mode: Mode,
) -> Result<Vec<Frame>> {
    if source.is_empty() {
        return Err(Error::EmptySequence);
    }
    let poses = normalize_sequence(&source.poses, src_stats, tgt_stats)?;
    transfer_poses(&poses, bundle, mode, &mut |_, _, _| {})
}

/// Generates one frame per pose, which are already in the target's frame.
/// `hook(t, pose, prev)` sees every full-image generator call.
pub fn transfer_poses(
    poses: &[Pose],
    bundle: &ModelBundle,
    mode: Mode,
    hook: &mut dyn FnMut(usize, &Tensor, &Tensor),
) -> Result<Vec<Frame>> {
    if poses.is_empty() {
        return Err(Error::EmptySequence);
    }
    bundle.ensure_trained_for(mode)?;
    let (w, h) = bundle.arch.image_size;
    let mut prev: Option<Tensor> = None;
    let mut out = Vec::with_capacity(poses.len());
    for (t, pose) in poses.iter().enumerate() {
        let stick = frame_to_tensor(&render_stick_figure(pose, w, h).to_frame(), DType::F32)?;
        let cond = match (&prev, mode.temporal()) {
            (Some(p), true) => p.clone(),
            _ => stick.zeros_like()?,
        };
        hook(t, &stick, &cond);
        let g = bundle.generator.forward(&stick, &cond)?;
        let mut frame = tensor_to_frame(&g)?;
        if mode.face() {
            frame = refine_face(bundle, pose, &stick, &g, &frame)?;
        }
        out.push(frame);
        prev = Some(g);
    }
    Ok(out)
}

/// Adds the face residual; frames without a nose are returned unchanged.
fn refine_face(bundle: &ModelBundle, pose: &Pose, stick: &Tensor, g: &Tensor, frame: &Frame) -> Result<Frame> {
    let face = bundle
        .face
        .as_ref()
        .ok_or_else(|| Error::UntrainedModel("bundle has no face networks".into()))?;
    let (w, h) = bundle.arch.image_size;
    let Ok(b) = face_box(pose, bundle.arch.face_size, w, h) else {
        return Ok(frame.clone());
    };
    let crop = |t: &Tensor| -> Result<Tensor> {
        Ok(t.narrow(2, b.y0 as usize, b.height() as usize)?
            .narrow(3, b.x0 as usize, b.width() as usize)?
            .contiguous()?)
    };
    let residual = face.generator.forward(&crop(stick)?, &crop(g)?)?;
    Ok(composite_residual(frame, &tensor_to_frame(&residual)?, &b)?)
}

/// Closest target training frame for every source pose, after normalization
/// when `normalization = Some((src, tgt))`.
pub fn nn_baseline_video(
    source: &PoseSequence,
    target_poses: &[Pose],
    target_frames: &[Frame],
    normalization: Option<(&SubjectStats, &SubjectStats)>,
) -> Result<(Vec<Frame>, Vec<NnMatch>)> {
    if target_poses.len() != target_frames.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} target poses vs {} frames",
            target_poses.len(),
            target_frames.len()
        )));
    }
    if target_poses.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if source.is_empty() {
        return Err(Error::EmptySequence);
    }
    let matches = nn_baseline(&source.poses, target_poses, normalization)?;
    Ok((gather(target_frames, &matches), matches))
}

/// Provenance of a rendered output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferManifest {
    pub source_clip: String,
    pub source_stats: Option<PathBuf>,
    pub target_stats: Option<PathBuf>,
    pub checkpoint: Option<String>,
    pub mode: Option<Mode>,
    pub frames: Vec<String>,
    /// Matched target indices for baseline outputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matches: Option<Vec<usize>>,
}

pub const TRANSFER_MANIFEST: &str = "transfer.json";

/// Writes numbered PNG frames plus [`TRANSFER_MANIFEST`] into `dir`.
pub fn write_output(dir: impl AsRef<Path>, frames: &[Frame], mut manifest: TransferManifest) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    manifest.frames.clear();
    for (i, f) in frames.iter().enumerate() {
        let name = frame_file_name(i as u64);
        f.save(dir.join(&name))?;
        manifest.frames.push(name);
    }
    dance_core::atomic_write(&dir.join(TRANSFER_MANIFEST), &serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}
