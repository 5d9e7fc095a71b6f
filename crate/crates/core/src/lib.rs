//! Pose handling, global pose normalization, stick-figure rendering,
//! dataset manifests, the nearest-neighbour baseline and image metrics for
//! pose-conditioned motion transfer.

pub mod baseline;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod frame;
pub mod normalize;
pub mod pose;
pub mod render;
pub mod synth;

use std::io::Write;
use std::path::Path;

pub use error::{Error, Result};
pub use frame::{Frame, PixelBox};
pub use pose::{Keypoint, Pose, PoseSequence, SkeletonTopology};

/// Writes to a sibling temporary file and renames it over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::InvalidConfig(format!("bad output path {}", path.display())))?;
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
