//! Procedural toy subjects: a dancing figure with a seed-dependent look and
//! motion, rendered over a static background. Used for desk-scale runs and
//! tests where real footage is unavailable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::frame::Frame;
use crate::pose::{Keypoint, Pose, PoseSequence, SkeletonTopology};

#[derive(Debug, Clone, PartialEq)]
pub struct Appearance {
    pub sky: [f32; 3],
    pub wall: [f32; 3],
    pub floor: [f32; 3],
    pub prop: [f32; 3],
    pub shirt: [f32; 3],
    pub pants: [f32; 3],
    pub skin: [f32; 3],
    pub hair: [f32; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToySubject {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub appearance: Appearance,
    stature: f64,
    phases: [f64; 6],
    tempo: f64,
    horizon: f64,
    prop_x: f64,
}

fn color(rng: &mut ChaCha8Rng, lo: f32, hi: f32) -> [f32; 3] {
    [
        rng.gen_range(lo..hi),
        rng.gen_range(lo..hi),
        rng.gen_range(lo..hi),
    ]
}

#[derive(Clone, Copy)]
struct Pt(f64, f64);

fn seg_dist(p: Pt, a: Pt, b: Pt) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let l2 = dx * dx + dy * dy;
    let t = if l2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / l2).clamp(0.0, 1.0)
    };
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy)
}

fn fill_capsule(frame: &mut Frame, a: Pt, b: Pt, r: f64, rgb: [f32; 3]) {
    let x0 = (a.0.min(b.0) - r).floor().max(0.0) as i64;
    let x1 = ((a.0.max(b.0) + r).ceil() as i64).min(frame.width as i64 - 1);
    let y0 = (a.1.min(b.1) - r).floor().max(0.0) as i64;
    let y1 = ((a.1.max(b.1) + r).ceil() as i64).min(frame.height as i64 - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            if seg_dist(Pt(x as f64, y as f64), a, b) <= r {
                for (c, v) in rgb.iter().enumerate() {
                    frame.set(c, x as u32, y as u32, v * 2.0 - 1.0);
                }
            }
        }
    }
}

impl ToySubject {
    pub fn new(seed: u64, width: u32, height: u32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_d00d);
        let appearance = Appearance {
            sky: color(&mut rng, 0.55, 0.9),
            wall: color(&mut rng, 0.35, 0.75),
            floor: color(&mut rng, 0.15, 0.45),
            prop: color(&mut rng, 0.1, 0.9),
            shirt: color(&mut rng, 0.05, 0.95),
            pants: color(&mut rng, 0.05, 0.6),
            skin: {
                let t = rng.gen_range(0.35..0.95f32);
                [t, t * 0.78, t * 0.62]
            },
            hair: color(&mut rng, 0.02, 0.3),
        };
        let mut phases = [0.0; 6];
        for p in &mut phases {
            *p = rng.gen_range(0.0..std::f64::consts::TAU);
        }
        Self {
            id: format!("toy{seed}"),
            width,
            height,
            appearance,
            stature: rng.gen_range(0.85..1.1),
            phases,
            tempo: rng.gen_range(0.8..1.25),
            horizon: rng.gen_range(0.45..0.6),
            prop_x: rng.gen_range(0.15..0.85),
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Body-25 pose at time step `t`.
    pub fn pose_at(&self, t: usize) -> Pose {
        let (w, h) = (self.width as f64, self.height as f64);
        let tt = t as f64 * 0.21 * self.tempo;
        let ph = &self.phases;
        let depth = 0.5 + 0.5 * (0.37 * tt + ph[0]).sin();
        let ground = h * (0.78 + 0.17 * depth);
        let body = h * (0.42 + 0.28 * depth) * self.stature;
        let cx = w * (0.5 + 0.28 * (0.53 * tt + ph[1]).sin());

        let arm_l = 0.5 + 1.1 * (tt + ph[2]).sin().abs();
        let arm_r = 0.5 + 1.1 * (1.3 * tt + ph[3]).sin().abs();
        let leg_swing = 0.35 * (1.7 * tt + ph[4]).sin();
        let lift = (0.05 * body * (2.1 * tt + ph[5]).sin()).max(0.0);

        let nose = Pt(cx, ground - body);
        let neck = Pt(cx, ground - 0.86 * body);
        let mid_hip = Pt(cx, ground - 0.5 * body);
        let shoulder = |s: f64| Pt(cx + s * 0.12 * body, neck.1 + 0.02 * body);
        let limb = |from: Pt, angle: f64, len: f64| Pt(from.0 + angle.sin() * len, from.1 + angle.cos() * len);
        let r_sh = shoulder(-1.0);
        let l_sh = shoulder(1.0);
        let r_el = limb(r_sh, -arm_r, 0.17 * body);
        let r_wr = limb(r_el, -arm_r * 1.4, 0.15 * body);
        let l_el = limb(l_sh, arm_l, 0.17 * body);
        let l_wr = limb(l_el, arm_l * 1.4, 0.15 * body);
        let r_hip = Pt(cx - 0.07 * body, mid_hip.1);
        let l_hip = Pt(cx + 0.07 * body, mid_hip.1);
        let r_an = Pt(r_hip.0 - leg_swing * 0.25 * body - 0.02 * body, ground - lift);
        let l_an = Pt(l_hip.0 + leg_swing * 0.25 * body + 0.02 * body, ground);
        let knee = |hip: Pt, an: Pt, out: f64| {
            Pt((hip.0 + an.0) / 2.0 + out * 0.03 * body, (hip.1 + an.1) / 2.0)
        };
        let r_kn = knee(r_hip, r_an, -1.0);
        let l_kn = knee(l_hip, l_an, 1.0);
        let eye = |s: f64| Pt(nose.0 + s * 0.025 * body, nose.1 - 0.02 * body);
        let ear = |s: f64| Pt(nose.0 + s * 0.05 * body, nose.1 - 0.01 * body);
        let toe = |an: Pt, s: f64, d: f64| Pt(an.0 + s * d * body, an.1 + 0.01 * body);

        let pts = [
            nose,
            neck,
            r_sh,
            r_el,
            r_wr,
            l_sh,
            l_el,
            l_wr,
            mid_hip,
            r_hip,
            r_kn,
            r_an,
            l_hip,
            l_kn,
            l_an,
            eye(-1.0),
            eye(1.0),
            ear(-1.0),
            ear(1.0),
            toe(l_an, 1.0, 0.05),
            toe(l_an, 1.0, 0.03),
            toe(l_an, -1.0, 0.02),
            toe(r_an, -1.0, 0.05),
            toe(r_an, -1.0, 0.03),
            toe(r_an, 1.0, 0.02),
        ];
        let keypoints = pts.iter().map(|p| Keypoint::new(p.0, p.1, 0.9)).collect();
        Pose::new(SkeletonTopology::body25(), keypoints).expect("25 joints")
    }

    /// The static scene without the subject.
    pub fn background(&self) -> Frame {
        let a = &self.appearance;
        let (w, h) = (self.width, self.height);
        let horizon = (self.horizon * h as f64) as u32;
        let mut f = Frame::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                let rgb = if y < horizon {
                    let t = y as f32 / horizon.max(1) as f32;
                    [0, 1, 2].map(|c| a.sky[c] * (1.0 - t) + a.wall[c] * t)
                } else {
                    let t = (y - horizon) as f32 / (h - horizon).max(1) as f32;
                    [0, 1, 2].map(|c| a.floor[c] * (0.8 + 0.4 * t))
                };
                for (c, v) in rgb.iter().enumerate() {
                    f.set(c, x, y, v.clamp(0.0, 1.0) * 2.0 - 1.0);
                }
            }
        }
        let px = self.prop_x * w as f64;
        let top = horizon as f64 * 0.35;
        fill_capsule(
            &mut f,
            Pt(px, top),
            Pt(px, horizon as f64),
            0.05 * w as f64,
            a.prop,
        );
        f
    }

    /// Renders the subject performing `pose` over the background.
    pub fn render(&self, pose: &Pose) -> Frame {
        let a = &self.appearance;
        let mut f = self.background();
        let j = |i: usize| pose.joint(i).map(|(x, y)| Pt(x, y));
        let body = match (j(0), pose.avg_ankle_point().ok()) {
            (Some(n), Some((ax, ay))) => (n.0 - ax).hypot(n.1 - ay),
            _ => self.height as f64 * 0.5,
        };
        let mut draw = |from: usize, to: usize, r: f64, rgb: [f32; 3]| {
            if let (Some(p), Some(q)) = (j(from), j(to)) {
                fill_capsule(&mut f, p, q, r, rgb);
            }
        };
        for (hip, knee, ankle, toe) in [(9, 10, 11, 22), (12, 13, 14, 19)] {
            draw(hip, knee, 0.05 * body, a.pants);
            draw(knee, ankle, 0.045 * body, a.pants);
            draw(ankle, toe, 0.03 * body, a.hair);
        }
        draw(1, 8, 0.1 * body, a.shirt);
        draw(9, 12, 0.07 * body, a.pants);
        for (sh, el, wr) in [(2, 3, 4), (5, 6, 7)] {
            draw(1, sh, 0.05 * body, a.shirt);
            draw(sh, el, 0.04 * body, a.shirt);
            draw(el, wr, 0.033 * body, a.skin);
            draw(wr, wr, 0.04 * body, a.skin);
        }
        draw(1, 0, 0.03 * body, a.skin);
        if let Some(n) = j(0) {
            let head = Pt(n.0, n.1 - 0.02 * body);
            fill_capsule(&mut f, head, head, 0.08 * body, a.skin);
            fill_capsule(
                &mut f,
                Pt(head.0 - 0.04 * body, head.1 - 0.06 * body),
                Pt(head.0 + 0.04 * body, head.1 - 0.06 * body),
                0.035 * body,
                a.hair,
            );
            let mouth = Pt(n.0, n.1 + 0.03 * body);
            fill_capsule(
                &mut f,
                Pt(mouth.0 - 0.02 * body, mouth.1),
                Pt(mouth.0 + 0.02 * body, mouth.1),
                0.008 * body,
                [0.55, 0.1, 0.1],
            );
        }
        for eye in [15, 16] {
            if let Some(e) = j(eye) {
                fill_capsule(&mut f, e, e, (0.012 * body).max(0.5), [0.05, 0.05, 0.1]);
            }
        }
        f
    }

    /// Poses and frames for time steps `0..n`.
    pub fn clip(&self, n: usize, fps: f64) -> (PoseSequence, Vec<Frame>) {
        let poses: Vec<Pose> = (0..n).map(|t| self.pose_at(t)).collect();
        let frames = poses.iter().map(|p| self.render(p)).collect();
        (
            PoseSequence::from_poses(poses, fps).expect("consecutive indices"),
            frames,
        )
    }
}
