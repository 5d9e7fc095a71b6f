//! Frame metrics: windowed SSIM, pluggable pairwise distances, and the
//! face/body region protocol.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::frame::{Frame, PixelBox};
use crate::pose::Pose;
use crate::render::face_box;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian filter keeping only fully covered ("valid") positions.
fn filter_valid(img: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let line = &img[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = k.iter().zip(&line[x..x + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM of two single-channel images with values in [0, 1].
pub fn ssim_gray(a: &[f64], b: &[f64], width: usize, height: usize) -> Result<f64> {
    if a.len() != b.len() || a.len() != width * height {
        return Err(Error::SizeMismatch(format!(
            "{} vs {} samples for {width}x{height}",
            a.len(),
            b.len()
        )));
    }
    if width < SSIM_WINDOW || height < SSIM_WINDOW {
        return Err(Error::InvalidConfig(format!(
            "{width}x{height} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )));
    }
    let k = gaussian_kernel();
    let c1 = K1 * K1;
    let c2 = K2 * K2;
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let mu_a = filter_valid(a, width, height, &k);
    let mu_b = filter_valid(b, width, height, &k);
    let e_aa = filter_valid(&aa, width, height, &k);
    let e_bb = filter_valid(&bb, width, height, &k);
    let e_ab = filter_valid(&ab, width, height, &k);
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = e_aa[i] - ma * ma;
        let var_b = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
        let den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
        total += num / den;
    }
    Ok(total / n as f64)
}

/// SSIM on the luma of two frames (11×11 Gaussian window, σ = 1.5, unit data range).
pub fn ssim(a: &Frame, b: &Frame) -> Result<f64> {
    if !a.same_size(b) {
        return Err(Error::SizeMismatch(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    ssim_gray(&a.to_gray(), &b.to_gray(), a.width as usize, a.height as usize)
}

/// A learned or external image distance (for example LPIPS) registered with
/// the evaluator.
pub trait PairwiseDistance: Send + Sync {
    fn name(&self) -> &str;
    fn distance(&self, a: &Frame, b: &Frame) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSet {
    pub ssim: f64,
    pub extra: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionScores {
    pub face: Option<MetricSet>,
    pub body: Option<MetricSet>,
    pub face_box: Option<PixelBox>,
    pub body_box: Option<PixelBox>,
}

/// Bounding box of the present keypoints, padded by 10% of its size per side
/// and grown to at least the SSIM window.
pub fn body_box(pose: &Pose, width: u32, height: u32) -> Option<PixelBox> {
    let pts: Vec<(f64, f64)> = pose.keypoints.iter().filter_map(|k| k.point()).collect();
    if pts.is_empty() {
        return None;
    }
    let (mut x_lo, mut y_lo) = (f64::INFINITY, f64::INFINITY);
    let (mut x_hi, mut y_hi) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (x, y) in pts {
        x_lo = x_lo.min(x);
        x_hi = x_hi.max(x);
        y_lo = y_lo.min(y);
        y_hi = y_hi.max(y);
    }
    let px = 0.1 * (x_hi - x_lo);
    let py = 0.1 * (y_hi - y_lo);
    let span = |lo: f64, hi: f64, pad: f64, side: u32| -> Option<(u32, u32)> {
        let mut a = (lo - pad).floor().max(0.0) as i64;
        let mut b = ((hi + pad).ceil() as i64 + 1).min(side as i64);
        if b <= 0 || a >= side as i64 {
            return None;
        }
        let min = SSIM_WINDOW as i64;
        if side as i64 >= min && b - a < min {
            let grow = min - (b - a);
            a = (a - grow / 2).max(0);
            b = (a + min).min(side as i64);
            a = b - min;
        }
        Some((a as u32, b as u32))
    };
    let (x0, x1) = span(x_lo, x_hi, px, width)?;
    let (y0, y1) = span(y_lo, y_hi, py, height)?;
    Some(PixelBox { x0, y0, x1, y1 })
}

#[derive(Default)]
pub struct Evaluator {
    pub face_size: u32,
    plugins: Vec<Box<dyn PairwiseDistance>>,
}

impl Evaluator {
    pub fn new(face_size: u32) -> Self {
        Self {
            face_size,
            plugins: Vec::new(),
        }
    }

    pub fn register(&mut self, plugin: Box<dyn PairwiseDistance>) {
        self.plugins.push(plugin);
    }

    pub fn plugin_names(&self) -> Vec<String> {
        self.plugins.iter().map(|p| p.name().to_string()).collect()
    }

    fn score(&self, pred: &Frame, gt: &Frame, b: &PixelBox) -> Result<MetricSet> {
        let p = pred.crop(b)?;
        let g = gt.crop(b)?;
        let mut extra = BTreeMap::new();
        for plugin in &self.plugins {
            extra.insert(plugin.name().to_string(), plugin.distance(&p, &g)?);
        }
        Ok(MetricSet {
            ssim: ssim(&p, &g)?,
            extra,
        })
    }

    pub fn region_metrics(&self, pred: &Frame, gt: &Frame, pose: &Pose) -> Result<RegionScores> {
        if !pred.same_size(gt) {
            return Err(Error::SizeMismatch(format!(
                "{}x{} vs {}x{}",
                pred.width, pred.height, gt.width, gt.height
            )));
        }
        let fbox = match face_box(pose, self.face_size, pred.width, pred.height) {
            Ok(b) => Some(b),
            Err(Error::MissingJoint(_)) => None,
            Err(e) => return Err(e),
        };
        let bbox = body_box(pose, pred.width, pred.height);
        Ok(RegionScores {
            face: fbox.map(|b| self.score(pred, gt, &b)).transpose()?,
            body: bbox.map(|b| self.score(pred, gt, &b)).transpose()?,
            face_box: fbox,
            body_box: bbox,
        })
    }

    pub fn evaluate_sequence(
        &self,
        pred: &[Frame],
        gt: &[Frame],
        poses: &[Pose],
    ) -> Result<SequenceReport> {
        if pred.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if pred.len() != gt.len() || pred.len() != poses.len() {
            return Err(Error::LengthMismatch(format!(
                "{} predicted, {} ground truth, {} poses",
                pred.len(),
                gt.len(),
                poses.len()
            )));
        }
        let rows = pred
            .iter()
            .zip(gt)
            .zip(poses)
            .enumerate()
            .map(|(i, ((p, g), pose))| {
                Ok(FrameRow {
                    frame: i,
                    scores: self.region_metrics(p, g, pose)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SequenceReport::from_rows(rows, self.plugin_names()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRow {
    pub frame: usize,
    pub scores: RegionScores,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceReport {
    pub rows: Vec<FrameRow>,
    pub plugins: Vec<String>,
    pub mean_face_ssim: Option<f64>,
    pub mean_body_ssim: Option<f64>,
    pub mean_face_extra: BTreeMap<String, f64>,
    pub mean_body_extra: BTreeMap<String, f64>,
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"))
}

impl SequenceReport {
    fn from_rows(rows: Vec<FrameRow>, plugins: Vec<String>) -> Self {
        let face = |r: &FrameRow| r.scores.face.clone();
        let body = |r: &FrameRow| r.scores.body.clone();
        let mean_face_ssim = mean_of(rows.iter().filter_map(face).map(|m| m.ssim));
        let mean_body_ssim = mean_of(rows.iter().filter_map(body).map(|m| m.ssim));
        let mut mean_face_extra = BTreeMap::new();
        let mut mean_body_extra = BTreeMap::new();
        for name in &plugins {
            if let Some(v) = mean_of(rows.iter().filter_map(face).filter_map(|m| m.extra.get(name).copied())) {
                mean_face_extra.insert(name.clone(), v);
            }
            if let Some(v) = mean_of(rows.iter().filter_map(body).filter_map(|m| m.extra.get(name).copied())) {
                mean_body_extra.insert(name.clone(), v);
            }
        }
        Self {
            rows,
            plugins,
            mean_face_ssim,
            mean_body_ssim,
            mean_face_extra,
            mean_body_extra,
        }
    }

    /// Comma-separated rows (`frame,face_ssim,body_ssim[,face_<p>,body_<p>]...`)
    /// followed by a `mean` footer row. Missing values are written as `NA`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame,face_ssim,body_ssim");
        for p in &self.plugins {
            let _ = write!(out, ",face_{p},body_{p}");
        }
        out.push('\n');
        for row in &self.rows {
            let s = &row.scores;
            let _ = write!(
                out,
                "{},{},{}",
                row.frame,
                fmt_opt(s.face.as_ref().map(|m| m.ssim)),
                fmt_opt(s.body.as_ref().map(|m| m.ssim))
            );
            for p in &self.plugins {
                let _ = write!(
                    out,
                    ",{},{}",
                    fmt_opt(s.face.as_ref().and_then(|m| m.extra.get(p).copied())),
                    fmt_opt(s.body.as_ref().and_then(|m| m.extra.get(p).copied()))
                );
            }
            out.push('\n');
        }
        let _ = write!(
            out,
            "mean,{},{}",
            fmt_opt(self.mean_face_ssim),
            fmt_opt(self.mean_body_ssim)
        );
        for p in &self.plugins {
            let _ = write!(
                out,
                ",{},{}",
                fmt_opt(self.mean_face_extra.get(p).copied()),
                fmt_opt(self.mean_body_extra.get(p).copied())
            );
        }
        out.push('\n');
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::atomic_write(path.as_ref(), self.to_csv().as_bytes())
    }
}
