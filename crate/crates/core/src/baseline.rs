//! Nearest-neighbour retrieval baseline over target training poses.

use crate::error::{Error, Result};
use crate::normalize::{normalize_sequence, SubjectStats};
use crate::pose::{pose_distance, Pose};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NnMatch {
    pub index: usize,
    /// Infinite when no target pose shares a present joint with the query.
    pub distance: f64,
}

/// Index of the closest target pose; ties resolve to the lowest index.
pub fn nearest_pose(query: &Pose, targets: &[Pose]) -> Result<Option<NnMatch>> {
    let mut best: Option<NnMatch> = None;
    for (index, t) in targets.iter().enumerate() {
        let distance = match pose_distance(query, t) {
            Ok(d) => d,
            Err(Error::NoCommonJoints) => continue,
            Err(e) => return Err(e),
        };
        if best.is_none_or(|b| distance < b.distance) {
            best = Some(NnMatch { index, distance });
        }
    }
    Ok(best)
}

/// Matches every source pose against the target training poses. With
/// `normalization = Some((src, tgt))` source poses are first mapped into the
/// target's frame. A query with no comparable target reuses the previous match.
pub fn nn_baseline(
    source: &[Pose],
    targets: &[Pose],
    normalization: Option<(&SubjectStats, &SubjectStats)>,
) -> Result<Vec<NnMatch>> {
    if targets.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let queries = match normalization {
        Some((src, tgt)) => normalize_sequence(source, src, tgt)?,
        None => source.to_vec(),
    };
    let mut out = Vec::with_capacity(queries.len());
    let mut last = 0;
    for q in &queries {
        let m = nearest_pose(q, targets)?.unwrap_or(NnMatch {
            index: last,
            distance: f64::INFINITY,
        });
        last = m.index;
        out.push(m);
    }
    Ok(out)
}

/// Concatenates the matched target items into the baseline sequence.
pub fn gather<T: Clone>(items: &[T], matches: &[NnMatch]) -> Vec<T> {
    matches.iter().map(|m| items[m.index].clone()).collect()
}
