//! Pose stick-figure rasterization and face-region geometry.

use image::RgbImage;

use crate::error::{Error, Result};
use crate::frame::{Frame, PixelBox};
use crate::pose::Pose;

pub type FaceBox = PixelBox;

/// Stroke parameters. Constant between training and transfer for a given width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderStyle {
    pub thickness: f64,
    pub joint_radius: f64,
}

impl RenderStyle {
    /// 4 px at a 512-wide canvas, scaled with the width; discs match the thickness.
    pub fn for_width(width: u32) -> Self {
        let thickness = (4.0 * width as f64 / 512.0).max(1.0);
        Self {
            thickness,
            joint_radius: thickness,
        }
    }
}

/// Colored skeleton on an exactly black background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StickFigureImage {
    pub image: RgbImage,
}

impl StickFigureImage {
    pub fn width(&self) -> u32 {
        self.image.width()
    }

    pub fn height(&self) -> u32 {
        self.image.height()
    }

    pub fn to_frame(&self) -> Frame {
        Frame::from_rgb8(&self.image)
    }

    pub fn non_black_pixels(&self) -> Vec<(u32, u32)> {
        self.image
            .enumerate_pixels()
            .filter(|(_, _, p)| p.0 != [0, 0, 0])
            .map(|(x, y, _)| (x, y))
            .collect()
    }
}

fn segment_distance(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    (px - (a.0 + t * dx)).hypot(py - (a.1 + t * dy))
}

/// Paints every pixel center within `radius` of segment `a`–`b`, clipped to the canvas.
fn stamp_segment(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), radius: f64, color: [u8; 3]) {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let x_lo = (a.0.min(b.0) - radius).floor().max(0.0);
    let x_hi = (a.0.max(b.0) + radius).ceil().min(w - 1.0);
    let y_lo = (a.1.min(b.1) - radius).floor().max(0.0);
    let y_hi = (a.1.max(b.1) + radius).ceil().min(h - 1.0);
    if x_lo > x_hi || y_lo > y_hi {
        return;
    }
    for y in y_lo as u32..=y_hi as u32 {
        for x in x_lo as u32..=x_hi as u32 {
            if segment_distance(x as f64, y as f64, a, b) <= radius {
                img.put_pixel(x, y, image::Rgb(color));
            }
        }
    }
}

pub fn render_stick_figure(pose: &Pose, width: u32, height: u32) -> StickFigureImage {
    render_stick_figure_with(pose, width, height, RenderStyle::for_width(width))
}

/// Limbs (both endpoints present) first, then joint discs on top.
pub fn render_stick_figure_with(
    pose: &Pose,
    width: u32,
    height: u32,
    style: RenderStyle,
) -> StickFigureImage {
    let mut image = RgbImage::new(width, height);
    let topo = &pose.topology;
    for (limb, &(a, b)) in topo.limbs.iter().enumerate() {
        if let (Some(pa), Some(pb)) = (pose.joint(a), pose.joint(b)) {
            stamp_segment(&mut image, pa, pb, style.thickness / 2.0, topo.limb_colors[limb]);
        }
    }
    for (j, kp) in pose.keypoints.iter().enumerate() {
        if let Some(p) = kp.point() {
            stamp_segment(&mut image, p, p, style.joint_radius, topo.joint_colors[j]);
        }
    }
    StickFigureImage { image }
}

/// Square of side `face_size` centered on the nose, translated to fit the canvas.
pub fn face_box(pose: &Pose, face_size: u32, width: u32, height: u32) -> Result<FaceBox> {
    if face_size == 0 || face_size > width || face_size > height {
        return Err(Error::InvalidConfig(format!(
            "face size {face_size} does not fit a {width}x{height} canvas"
        )));
    }
    let (nx, ny) = pose.nose().ok_or(Error::MissingJoint("nose"))?;
    let half = face_size as f64 / 2.0;
    let place = |center: f64, side: u32| -> u32 {
        let max = (side - face_size) as f64;
        (center - half).round().clamp(0.0, max) as u32
    };
    let x0 = place(nx, width);
    let y0 = place(ny, height);
    Ok(PixelBox {
        x0,
        y0,
        x1: x0 + face_size,
        y1: y0 + face_size,
    })
}

pub fn crop_region(image: &Frame, b: &FaceBox) -> Result<Frame> {
    image.crop(b)
}

/// Adds `residual` inside the box, clipping to [-1, 1]; pixels outside are copied.
pub fn composite_residual(frame: &Frame, residual: &Frame, b: &FaceBox) -> Result<Frame> {
    if residual.width != b.width() || residual.height != b.height() {
        return Err(Error::SizeMismatch(format!(
            "residual {}x{} vs box {}x{}",
            residual.width,
            residual.height,
            b.width(),
            b.height()
        )));
    }
    let region = frame.crop(b)?;
    let data = region
        .data
        .iter()
        .zip(&residual.data)
        .map(|(f, r)| (f + r).clamp(-1.0, 1.0))
        .collect();
    frame.paste(&Frame::from_data(b.width(), b.height(), data)?, b)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::pose::{Keypoint, SkeletonTopology};

    fn nose_pose(x: f64, y: f64) -> Pose {
        let mut p = Pose::empty(SkeletonTopology::body25());
        p.keypoints[0] = Keypoint::new(x, y, 1.0);
        p
    }

    #[test]
    fn empty_pose_renders_black() {
        let img = render_stick_figure(&Pose::empty(SkeletonTopology::body25()), 64, 32);
        assert!(img.non_black_pixels().is_empty());
    }

    #[test]
    fn rendering_is_deterministic() {
        let mut p = Pose::empty(SkeletonTopology::body25());
        for (i, k) in p.keypoints.iter_mut().enumerate() {
            *k = Keypoint::new(10.0 + 3.7 * i as f64, 5.0 + 1.9 * i as f64, 0.8);
        }
        assert_eq!(render_stick_figure(&p, 128, 64), render_stick_figure(&p, 128, 64));
    }

    /// Row spans of each shape computed independently: a horizontal bar and discs.
    fn scanline_oracle(
        segment: ((i64, i64), (i64, i64)),
        discs: &[(i64, i64)],
        radius: f64,
    ) -> BTreeSet<(u32, u32)> {
        let mut set = BTreeSet::new();
        let ((x0, y), (x1, _)) = segment;
        for x in x0..=x1 {
            set.insert((x as u32, y as u32));
        }
        for &(cx, cy) in discs {
            let r = radius.floor() as i64;
            for dy in -r..=r {
                let half = ((radius * radius - (dy * dy) as f64).sqrt()).floor() as i64;
                for dx in -half..=half {
                    set.insert(((cx + dx) as u32, (cy + dy) as u32));
                }
            }
        }
        set
    }

    #[test]
    fn two_joint_segment_matches_scanline_oracle() {
        let topo = SkeletonTopology::custom(
            "pair",
            vec!["a".into(), "b".into()],
            vec![(0, 1)],
            0,
            0,
            1,
        )
        .unwrap();
        let pose = Pose::new(
            topo,
            vec![Keypoint::new(10.0, 10.0, 1.0), Keypoint::new(20.0, 10.0, 1.0)],
        )
        .unwrap();
        let style = RenderStyle {
            thickness: 1.0,
            joint_radius: 1.0,
        };
        let img = render_stick_figure_with(&pose, 40, 30, style);
        let got: BTreeSet<_> = img.non_black_pixels().into_iter().collect();
        let want = scanline_oracle(((10, 10), (20, 10)), &[(10, 10), (20, 10)], 1.0);
        assert_eq!(got, want);
    }

    #[test]
    fn thickness_scales_with_width() {
        assert_eq!(RenderStyle::for_width(512).thickness, 4.0);
        assert_eq!(RenderStyle::for_width(1024).thickness, 8.0);
        assert_eq!(RenderStyle::for_width(128).thickness, 1.0);
    }

    #[test]
    fn off_canvas_pose_is_clipped() {
        let mut p = Pose::empty(SkeletonTopology::body25());
        p.keypoints[1] = Keypoint::new(-50.0, -50.0, 1.0);
        p.keypoints[8] = Keypoint::new(500.0, 500.0, 1.0);
        let img = render_stick_figure(&p, 64, 64);
        assert!(!img.non_black_pixels().is_empty());
    }

    #[test]
    fn face_box_centered() {
        let b = face_box(&nose_pose(500.0, 100.0), 128, 1024, 512).unwrap();
        assert_eq!((b.x0, b.y0, b.x1, b.y1), (436, 36, 564, 164));
    }

    #[test]
    fn face_box_clamps_to_origin() {
        let b = face_box(&nose_pose(10.0, 10.0), 128, 1024, 512).unwrap();
        assert_eq!((b.x0, b.y0, b.x1, b.y1), (0, 0, 128, 128));
        let b = face_box(&nose_pose(1020.0, 510.0), 128, 1024, 512).unwrap();
        assert_eq!((b.x0, b.y0, b.x1, b.y1), (896, 384, 1024, 512));
    }

    #[test]
    fn face_box_errors() {
        assert!(matches!(
            face_box(&nose_pose(10.0, 10.0), 600, 1024, 512),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            face_box(&Pose::empty(SkeletonTopology::body25()), 32, 128, 64),
            Err(Error::MissingJoint("nose"))
        ));
    }

    #[test]
    fn zero_residual_is_identity() {
        let f = Frame::filled(32, 16, [0.1, -0.2, 0.3]);
        let b = PixelBox {
            x0: 4,
            y0: 2,
            x1: 12,
            y1: 10,
        };
        let out = composite_residual(&f, &Frame::zeros(8, 8), &b).unwrap();
        assert_eq!(out, f);
    }

    #[test]
    fn composite_clips_inside_box() {
        let f = Frame::filled(16, 16, [0.9; 3]);
        let b = PixelBox {
            x0: 0,
            y0: 0,
            x1: 4,
            y1: 4,
        };
        let out = composite_residual(&f, &Frame::filled(4, 4, [0.3; 3]), &b).unwrap();
        assert_eq!(out.get(0, 1, 1), 1.0);
        assert_eq!(out.get(0, 8, 8), 0.9);
    }

    #[test]
    fn composite_size_mismatch() {
        let f = Frame::zeros(16, 16);
        let b = PixelBox {
            x0: 0,
            y0: 0,
            x1: 4,
            y1: 4,
        };
        assert!(matches!(
            composite_residual(&f, &Frame::zeros(5, 4), &b),
            Err(Error::SizeMismatch(_))
        ));
    }
}
