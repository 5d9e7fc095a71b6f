use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use candle_core::DType;
use dance_core::dataset::{frame_file_name, ingest_dataset, split_dataset, DatasetManifest, ManifestEntry, Split};
use dance_core::evaluation::Evaluator;
use dance_core::normalize::{compute_subject_stats, normalize_sequence, SubjectStats};
use dance_core::render::render_stick_figure;
use dance_core::{Frame, PoseSequence};
use dance_nets::checkpoint::{load_bundle, save_bundle};
use dance_nets::fakedet::{
    build_fake_dataset, classify_video, subject_disjoint_split, train_fake_detector, BalanceOptions, Detector, Label,
    VideoClip,
};
use dance_nets::perceptual::{FeatureExtractor, Vgg19};
use dance_nets::training::{run_schedule, NoObserver, TrainingClip};
use dance_nets::transfer::{nn_baseline_video, transfer_poses, write_output, TransferManifest};
use dance_nets::ModelBundle;
use serde::{Deserialize, Serialize};

use crate::config::{Config, Overrides, Resolved};
use crate::{Cli, Command, Invalid, SplitArg, TrainArgs, TransferArgs};

pub fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let flags = Overrides {
        seed: cli.seed,
        toy: cli.toy,
        mode: cli.mode,
    };
    let cfg = file.resolve(&flags);
    match cli.command {
        Command::Ingest {
            subject,
            frames,
            poses,
            fps,
            downsample,
            out,
        } => {
            let fps = fps.unwrap_or(cfg.file.data.fps);
            let step = downsample.unwrap_or(cfg.file.data.downsample);
            let m = ingest_dataset(&subject, &frames, &poses, fps, step)?;
            m.save(&out)?;
            let usable = m.usable_entries().count();
            println!("{}: {} entries ({usable} usable) -> {}", subject, m.entries.len(), out.display());
        }
        Command::Split { manifest, fraction, out } => {
            let m = DatasetManifest::load(&manifest)?;
            let m = split_dataset(&m, fraction.unwrap_or(cfg.file.data.train_fraction))?;
            let out = out.unwrap_or(manifest);
            m.save(&out)?;
            let (train, test) = (m.entries_in(Split::Train).count(), m.entries_in(Split::Test).count());
            println!("train {train}, test {test} -> {}", out.display());
        }
        Command::Stats {
            manifest,
            split,
            alpha,
            out,
        } => {
            let m = DatasetManifest::load(&manifest)?;
            let stats = subject_stats(&m, split, alpha.unwrap_or(cfg.file.data.alpha))?;
            print!("{}", stats.to_text());
            if let Some(out) = out {
                stats.save(out)?;
            }
        }
        Command::RenderPoses {
            manifest,
            out,
            width,
            height,
        } => {
            let m = DatasetManifest::load(&manifest)?;
            let (w, h) = (width.unwrap_or(m.resolution.0), height.unwrap_or(m.resolution.1));
            let (sx, sy) = (w as f64 / m.resolution.0 as f64, h as f64 / m.resolution.1 as f64);
            let seq = m.load_poses(&m.entries)?;
            std::fs::create_dir_all(&out)?;
            for (pose, &i) in seq.poses.iter().zip(&seq.frame_indices) {
                let pose = pose.map_present(|x, y| (x * sx, y * sy));
                render_stick_figure(&pose, w, h).to_frame().save(out.join(frame_file_name(i)))?;
            }
            println!("{} stick figures -> {}", seq.len(), out.display());
        }
        Command::Train(args) => train(&cfg, &cli.home, args)?,
        Command::Transfer(args) => transfer(&cfg, cli.mode, args)?,
        Command::NnBaseline {
            source,
            source_split,
            target,
            normalize,
            out,
        } => {
            let src = DatasetManifest::load(&source)?;
            let tgt = DatasetManifest::load(&target)?;
            let seq = src.load_poses(entries(&src, source_split.split()))?;
            let train: Vec<&ManifestEntry> = tgt.entries_in(Split::Train).filter(|e| e.usable).collect();
            let target_poses = tgt.load_poses(train.iter().copied())?.poses;
            let target_frames = train.iter().map(|e| Frame::load(&e.frame_path)).collect::<Result<Vec<_>, _>>()?;
            let stats = if normalize {
                let alpha = cfg.file.data.alpha;
                Some((subject_stats(&src, source_split, alpha)?, subject_stats(&tgt, SplitArg::Train, alpha)?))
            } else {
                None
            };
            let (frames, matches) =
                nn_baseline_video(&seq, &target_poses, &target_frames, stats.as_ref().map(|(s, t)| (s, t)))?;
            let manifest = TransferManifest {
                source_clip: source.display().to_string(),
                source_stats: None,
                target_stats: None,
                checkpoint: None,
                mode: None,
                frames: Vec::new(),
                matches: Some(matches.iter().map(|m| m.index).collect()),
            };
            write_output(&out, &frames, manifest)?;
            println!("{} baseline frames -> {}", frames.len(), out.display());
        }
        Command::Evaluate {
            pred,
            manifest,
            split,
            out,
        } => {
            let m = DatasetManifest::load(&manifest)?;
            let chosen: Vec<&ManifestEntry> = entries(&m, split.split()).collect();
            let poses = m.load_poses(chosen.iter().copied())?.poses;
            let gt = chosen.iter().map(|e| Frame::load(&e.frame_path)).collect::<Result<Vec<_>, _>>()?;
            let (w, h) = m.resolution;
            let pred = VideoClip::from_dir("pred", &pred)?
                .frames
                .into_iter()
                .map(|f| f.resized(w, h))
                .collect::<Result<Vec<_>, _>>()?;
            let report = Evaluator::new(face_size(&cfg, m.resolution)).evaluate_sequence(&pred, &gt, &poses)?;
            report.save(&out)?;
            let fmt = |v: Option<f64>| v.map_or("NA".into(), |v| format!("{v:.4}"));
            println!(
                "frames {}, face SSIM {}, body SSIM {} -> {}",
                report.rows.len(),
                fmt(report.mean_face_ssim),
                fmt(report.mean_body_ssim),
                out.display()
            );
        }
        Command::FakedetBuild { real, fake, out } => {
            let mut clips = Vec::new();
            for (specs, label) in [(&real, Label::Real), (&fake, Label::Fake)] {
                for s in specs {
                    let (subject, path) = s
                        .split_once('=')
                        .ok_or_else(|| Invalid(format!("expected SUBJECT=PATH, got {s:?}")))?;
                    clips.push(ClipSpec {
                        subject: subject.into(),
                        label,
                        path: path.into(),
                    });
                }
            }
            let spec = FakedetSpec {
                stride: cfg.file.fakedet.stride,
                balance: cfg.balance(),
                clips,
            };
            let data = spec.build()?;
            std::fs::write(&out, serde_json::to_string_pretty(&spec)?)?;
            println!(
                "{} real + {} fake pairs from {} subjects -> {}",
                data.count(Label::Real),
                data.count(Label::Fake),
                data.subjects().len(),
                out.display()
            );
        }
        Command::FakedetTrain { dataset, out } => {
            let spec: FakedetSpec = serde_json::from_str(&std::fs::read_to_string(&dataset)?)
                .map_err(|e| Invalid(format!("{}: {e}", dataset.display())))?;
            let data = spec.build()?;
            let (train, test) = if data.subjects().len() >= 2 {
                let (a, b) = subject_disjoint_split(&data, cfg.file.fakedet.test_fraction, cfg.seed)?;
                (a, Some(b))
            } else {
                log::warn!("one subject only: no held-out evaluation");
                (data, None)
            };
            let (det, metrics) = train_fake_detector(&train, test.as_ref(), &cfg.arch(), &cfg.detector())?;
            det.save(&out)?;
            println!("{}", serde_json::to_string(&metrics)?);
        }
        Command::FakedetClassify { detector, frames } => {
            let det = Detector::load(&detector)?;
            let clip = load_clip("clip", &frames)?;
            let verdict = classify_video(&clip.frames, &det)?;
            println!("{}", serde_json::to_string(&verdict)?);
        }
    }
    Ok(())
}

fn entries(m: &DatasetManifest, split: Option<Split>) -> impl Iterator<Item = &ManifestEntry> {
    m.entries.iter().filter(move |e| split.is_none_or(|s| e.split == s))
}

fn subject_stats(m: &DatasetManifest, split: SplitArg, alpha: f64) -> Result<SubjectStats> {
    let seq = m.load_poses(entries(m, split.split()))?;
    let mut stats = compute_subject_stats(&seq, alpha)?;
    stats.subject_id = m.subject_id.clone();
    Ok(stats)
}

/// Face crop side scaled from the network's image size to `resolution`.
fn face_size(cfg: &Resolved, resolution: (u32, u32)) -> u32 {
    let arch = cfg.arch();
    let scale = resolution.0 as f64 / arch.image_size.0 as f64;
    ((arch.face_size as f64 * scale).round() as u32).clamp(1, resolution.0.min(resolution.1))
}

fn extractor(cfg: &Resolved) -> Result<Box<dyn FeatureExtractor>> {
    Ok(match &cfg.file.vgg_weights {
        Some(p) => Box::new(Vgg19::pretrained(p, DType::F32)?),
        None => Box::new(Vgg19::random(cfg.seed, cfg.arch().vgg_width_divisor, DType::F32)?),
    })
}

fn train(cfg: &Resolved, home: &Path, args: TrainArgs) -> Result<()> {
    let m = DatasetManifest::load(&args.manifest)?;
    let clip = TrainingClip::from_manifest(&m, args.split.split())?;
    let run_name = format!("{}-{}", m.subject_id, cfg.mode);
    let run_dir = home.join("runs").join(&run_name);
    let schedule: Vec<_> = cfg
        .schedule()
        .into_iter()
        .map(|mut c| {
            c.checkpoint_dir = Some(run_dir.clone());
            c.metrics_path = Some(run_dir.join("metrics.csv"));
            c
        })
        .collect();
    let mut arch = cfg.arch();
    arch.image_size = schedule[0].resolution;
    let bundle = ModelBundle::new(arch, cfg.mode, cfg.seed)?;
    let (bundle, log) = run_schedule(bundle, &clip, &schedule, extractor(cfg)?.as_ref(), &mut NoObserver)?;
    let out = args
        .out
        .unwrap_or_else(|| home.join("checkpoints").join(format!("{run_name}.safetensors")));
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    save_bundle(&bundle, &out)?;
    for c in &schedule {
        let means = log.epoch_means(c.stage);
        if let (Some(first), Some(last)) = (means.first(), means.last()) {
            println!("{}: total {:.4} -> {:.4} over {} epochs", c.stage, first.total, last.total, means.len());
        }
    }
    println!("checkpoint -> {}", out.display());
    Ok(())
}

fn transfer(cfg: &Resolved, mode_flag: Option<dance_nets::Mode>, args: TransferArgs) -> Result<()> {
    let bundle = load_bundle(&args.checkpoint)?;
    let mode = mode_flag.or(cfg.file.mode).unwrap_or(bundle.mode);
    let src = DatasetManifest::load(&args.source)?;
    let tgt = DatasetManifest::load(&args.target)?;
    let alpha = cfg.file.data.alpha;
    let src_stats = match &args.source_stats {
        Some(p) => SubjectStats::load(p)?,
        None => subject_stats(&src, args.source_split, alpha)?,
    };
    let tgt_stats = match &args.target_stats {
        Some(p) => SubjectStats::load(p)?,
        None => subject_stats(&tgt, SplitArg::Train, alpha)?,
    };
    let seq: PoseSequence = src.load_poses(entries(&src, args.source_split.split()))?;
    if seq.is_empty() {
        bail!(Invalid("source split has no entries".into()));
    }
    let (w, h) = bundle.arch.image_size;
    let (sx, sy) = (w as f64 / tgt.resolution.0 as f64, h as f64 / tgt.resolution.1 as f64);
    let poses: Vec<_> = normalize_sequence(&seq.poses, &src_stats, &tgt_stats)?
        .iter()
        .map(|p| p.map_present(|x, y| (x * sx, y * sy)))
        .collect();
    let frames = transfer_poses(&poses, &bundle, mode, &mut |_, _, _| {})?;
    let manifest = TransferManifest {
        source_clip: args.source.display().to_string(),
        source_stats: args.source_stats.clone(),
        target_stats: args.target_stats.clone(),
        checkpoint: Some(args.checkpoint.display().to_string()),
        mode: Some(mode),
        frames: Vec::new(),
        matches: None,
    };
    write_output(&args.out, &frames, manifest)?;
    println!("{} frames ({mode}) -> {}", frames.len(), args.out.display());
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ClipSpec {
    subject: String,
    label: Label,
    path: PathBuf,
}

/// On-disk description of a detector dataset; frames are read on demand.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct FakedetSpec {
    stride: u64,
    balance: BalanceOptions,
    clips: Vec<ClipSpec>,
}

impl FakedetSpec {
    fn build(&self) -> Result<dance_nets::fakedet::FakeDataset> {
        let mut real = Vec::new();
        let mut fake = Vec::new();
        for c in &self.clips {
            let clip = load_clip(&c.subject, &c.path)?;
            match c.label {
                Label::Real => real.push(clip),
                Label::Fake => fake.push(clip),
            }
        }
        Ok(build_fake_dataset(&real, &fake, self.stride, self.balance)?)
    }
}

/// A numbered-frame directory, or the usable frames of a manifest file.
fn load_clip(subject: &str, path: &Path) -> Result<VideoClip> {
    if path.is_dir() {
        return VideoClip::from_dir(subject, path).with_context(|| format!("reading {}", path.display()));
    }
    let m = DatasetManifest::load(path).with_context(|| format!("reading {}", path.display()))?;
    let mut clip = VideoClip::from_manifest(&m, None)?;
    clip.subject_id = subject.into();
    Ok(clip)
}
