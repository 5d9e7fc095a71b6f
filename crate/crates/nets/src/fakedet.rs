//! Real-versus-synthesized detection on consecutive frame pairs.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use candle_core::{DType, Tensor};
use dance_core::dataset::{index_from_name, DatasetManifest, Split};
use dance_core::Frame;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::ArchConfig;
use crate::checkpoint::{fill_store, read_file, write_store, CheckpointMeta};
use crate::discriminator::FakeDetector;
use crate::error::{Error, Result};
use crate::layers::softplus;
use crate::params::ParamStore;
use crate::tensor::{frames_to_tensor, scalar};
use crate::training::OptimizerConfig;

use candle_nn::Optimizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    fn target(self) -> f32 {
        match self {
            Label::Real => 1.0,
            Label::Fake => 0.0,
        }
    }
}

/// Ordered frames of one video with their frame indices.
#[derive(Debug, Clone)]
pub struct VideoClip {
    pub subject_id: String,
    pub frame_indices: Vec<u64>,
    pub frames: Vec<Frame>,
}

impl VideoClip {
    pub fn new(subject_id: impl Into<String>, frames: Vec<Frame>) -> Self {
        Self {
            subject_id: subject_id.into(),
            frame_indices: (0..frames.len() as u64).collect(),
            frames,
        }
    }

    /// Usable frames of a manifest, optionally restricted to one split.
    pub fn from_manifest(manifest: &DatasetManifest, split: Option<Split>) -> Result<Self> {
        let step = manifest.index_step.max(1);
        let mut frame_indices = Vec::new();
        let mut frames = Vec::new();
        for e in manifest.usable_entries().filter(|e| split.is_none_or(|s| e.split == s)) {
            frame_indices.push(e.frame_index / step);
            frames.push(Frame::load(&e.frame_path)?);
        }
        Ok(Self {
            subject_id: manifest.subject_id.clone(),
            frame_indices,
            frames,
        })
    }

    /// Numbered image files in `dir`, in index order.
    pub fn from_dir(subject_id: impl Into<String>, dir: impl AsRef<Path>) -> Result<Self> {
        let mut found = BTreeMap::new();
        for entry in std::fs::read_dir(dir.as_ref())? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("png") {
                continue;
            }
            if let Some(i) = index_from_name(&path) {
                found.insert(i, path);
            }
        }
        let mut frame_indices = Vec::with_capacity(found.len());
        let mut frames = Vec::with_capacity(found.len());
        for (i, path) in found {
            frame_indices.push(i);
            frames.push(Frame::load(&path)?);
        }
        Ok(Self {
            subject_id: subject_id.into(),
            frame_indices,
            frames,
        })
    }

    /// Positions `(a, b)` whose indices differ by exactly `stride`.
    pub fn pairs(&self, stride: u64) -> Vec<(usize, usize)> {
        let by_index: BTreeMap<u64, usize> =
            self.frame_indices.iter().enumerate().map(|(p, &i)| (i, p)).collect();
        by_index
            .iter()
            .filter_map(|(&i, &a)| by_index.get(&(i + stride)).map(|&b| (a, b)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPair {
    pub subject_id: String,
    pub first: Frame,
    pub second: Frame,
    pub label: Label,
}

#[derive(Debug, Clone, Default)]
pub struct FakeDataset {
    pub pairs: Vec<LabeledPair>,
}

impl FakeDataset {
    pub fn count(&self, label: Label) -> usize {
        self.pairs.iter().filter(|p| p.label == label).count()
    }

    pub fn subjects(&self) -> BTreeSet<String> {
        self.pairs.iter().map(|p| p.subject_id.clone()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceOptions {
    /// Randomly drop pairs of the larger class down to a 1:1 ratio.
    pub balance: bool,
    /// Largest accepted majority:minority ratio when not balancing.
    pub max_ratio: f64,
    pub seed: u64,
}

impl Default for BalanceOptions {
    fn default() -> Self {
        Self {
            balance: true,
            max_ratio: 1.5,
            seed: 0,
        }
    }
}

fn labeled_pairs(clips: &[VideoClip], label: Label, stride: u64) -> Vec<LabeledPair> {
    clips
        .iter()
        .flat_map(|c| {
            c.pairs(stride).into_iter().map(move |(a, b)| LabeledPair {
                subject_id: c.subject_id.clone(),
                first: c.frames[a].clone(),
                second: c.frames[b].clone(),
                label,
            })
        })
        .collect()
}

pub fn build_fake_dataset(
    real: &[VideoClip],
    synthesized: &[VideoClip],
    stride: u64,
    opts: BalanceOptions,
) -> Result<FakeDataset> {
    if stride == 0 {
        return Err(Error::InvalidConfig("stride must be >= 1".into()));
    }
    let mut real_pairs = labeled_pairs(real, Label::Real, stride);
    let mut fake_pairs = labeled_pairs(synthesized, Label::Fake, stride);
    if real_pairs.is_empty() || fake_pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (r, f) = (real_pairs.len(), fake_pairs.len());
    if opts.balance {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let keep = r.min(f);
        for pool in [&mut real_pairs, &mut fake_pairs] {
            if pool.len() > keep {
                let mut idx: Vec<usize> = (0..pool.len()).collect();
                idx.shuffle(&mut rng);
                let mut chosen = idx[..keep].to_vec();
                chosen.sort_unstable();
                *pool = chosen.into_iter().map(|i| pool[i].clone()).collect();
            }
        }
    } else if r.max(f) as f64 > opts.max_ratio * r.min(f) as f64 {
        return Err(Error::LabelImbalance {
            real: r,
            fake: f,
            max_ratio: opts.max_ratio,
        });
    }
    real_pairs.extend(fake_pairs);
    Ok(FakeDataset { pairs: real_pairs })
}

/// Moves every pair of the listed subjects into the second (test) set.
pub fn split_by_subject(dataset: &FakeDataset, test_subjects: &[&str]) -> (FakeDataset, FakeDataset) {
    let (test, train): (Vec<_>, Vec<_>) = dataset
        .pairs
        .iter()
        .cloned()
        .partition(|p| test_subjects.contains(&p.subject_id.as_str()));
    (FakeDataset { pairs: train }, FakeDataset { pairs: test })
}

/// Holds out `ceil(fraction · subjects)` randomly chosen subjects (at least one,
/// and never all of them).
pub fn subject_disjoint_split(dataset: &FakeDataset, test_fraction: f64, seed: u64) -> Result<(FakeDataset, FakeDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    let mut subjects: Vec<String> = dataset.subjects().into_iter().collect();
    if subjects.len() < 2 {
        return Err(Error::InvalidConfig("a subject-disjoint split needs two subjects".into()));
    }
    subjects.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((subjects.len() as f64 * test_fraction).ceil() as usize).clamp(1, subjects.len() - 1);
    let test: Vec<&str> = subjects[..n_test].iter().map(|s| s.as_str()).collect();
    Ok(split_by_subject(dataset, &test))
}

/// Detector network with its own parameters.
pub struct Detector {
    pub arch: ArchConfig,
    pub seed: u64,
    pub store: ParamStore,
    pub net: FakeDetector,
    pub epoch: usize,
}

impl Detector {
    pub fn new(arch: ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut store = ParamStore::new(seed, DType::F32);
        let net = FakeDetector::new(&mut store, &arch)?;
        Ok(Self {
            arch,
            seed,
            store,
            net,
            epoch: 0,
        })
    }

    /// Probability that `first → second` is real footage.
    pub fn probability(&self, first: &Frame, second: &Frame) -> Result<f64> {
        let a = frames_to_tensor(&[first], DType::F32)?;
        let b = frames_to_tensor(&[second], DType::F32)?;
        scalar(&self.net.forward(&a, &b)?.flatten_all()?.get(0)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let meta = CheckpointMeta {
            kind: "detector".into(),
            arch: self.arch.clone(),
            mode: None,
            stages: Vec::new(),
            epoch: self.epoch,
            seed: self.seed,
        };
        write_store(path, &self.store, &meta)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (meta, tensors) = read_file(path)?;
        if meta.kind != "detector" {
            return Err(Error::Checkpoint(format!("expected a detector checkpoint, found {}", meta.kind)));
        }
        let mut d = Detector::new(meta.arch, meta.seed)?;
        fill_store(&d.store, &tensors)?;
        d.epoch = meta.epoch;
        Ok(d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 8,
            seed: 0,
            optimizer: OptimizerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectorMetrics {
    /// Mean cross-entropy per epoch.
    pub epoch_losses: Vec<f64>,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

fn batch_tensors(pairs: &[&LabeledPair]) -> Result<(Tensor, Tensor, Tensor)> {
    let first: Vec<&Frame> = pairs.iter().map(|p| &p.first).collect();
    let second: Vec<&Frame> = pairs.iter().map(|p| &p.second).collect();
    let targets: Vec<f32> = pairs.iter().map(|p| p.label.target()).collect();
    let n = targets.len();
    Ok((
        frames_to_tensor(&first, DType::F32)?,
        frames_to_tensor(&second, DType::F32)?,
        Tensor::from_vec(targets, n, &candle_core::Device::Cpu)?,
    ))
}

/// Mean binary cross-entropy on logits.
pub fn bce_with_logits(logits: &Tensor, targets: &Tensor) -> Result<Tensor> {
    let pos = (targets * softplus(&logits.neg()?)?)?;
    let neg = ((1.0 - targets)? * softplus(logits)?)?;
    Ok((pos + neg)?.mean_all()?)
}

/// Share of pairs whose thresholded probability (0.5) matches the label.
pub fn pair_accuracy(detector: &Detector, dataset: &FakeDataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut correct = 0usize;
    for chunk in dataset.pairs.chunks(16) {
        let refs: Vec<&LabeledPair> = chunk.iter().collect();
        let (a, b, _) = batch_tensors(&refs)?;
        let p: Vec<f32> = detector.net.forward(&a, &b)?.flatten_all()?.to_vec1()?;
        correct += p
            .iter()
            .zip(chunk)
            .filter(|(p, pair)| (**p > 0.5) == (pair.label == Label::Real))
            .count();
    }
    Ok(correct as f64 / dataset.len() as f64)
}

pub fn train_fake_detector(
    train: &FakeDataset,
    test: Option<&FakeDataset>,
    arch: &ArchConfig,
    cfg: &DetectorConfig,
) -> Result<(Detector, DetectorMetrics)> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if train.count(Label::Real) == 0 || train.count(Label::Fake) == 0 {
        return Err(Error::SingleLabel);
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::InvalidConfig("epochs and batch_size must be >= 1".into()));
    }
    let mut det = Detector::new(arch.clone(), cfg.seed)?;
    let p = cfg.optimizer;
    let mut opt = candle_nn::AdamW::new(
        det.store.vars_with_prefix("det."),
        candle_nn::ParamsAdamW {
            lr: p.lr,
            beta1: p.beta1,
            beta2: p.beta2,
            eps: p.eps,
            weight_decay: p.weight_decay,
        },
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut metrics = DetectorMetrics::default();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut steps = 0usize;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let refs: Vec<&LabeledPair> = chunk.iter().map(|&i| &train.pairs[i]).collect();
            let (a, b, y) = batch_tensors(&refs)?;
            let loss = bce_with_logits(&det.net.logits(&a, &b)?, &y)?;
            let v = scalar(&loss)?;
            if !v.is_finite() {
                let dump = std::env::temp_dir().join(format!("nonfinite-detector-e{epoch}-s{step}.json"));
                std::fs::write(
                    &dump,
                    serde_json::to_vec_pretty(&serde_json::json!({"epoch": epoch, "step": step, "loss": v.to_string()}))?,
                )?;
                return Err(Error::NonFiniteLoss {
                    term: "detector".into(),
                    epoch,
                    step,
                    dump,
                });
            }
            opt.backward_step(&loss)?;
            sum += v;
            steps += 1;
        }
        metrics.epoch_losses.push(sum / steps as f64);
        det.epoch = epoch;
    }
    metrics.train_accuracy = pair_accuracy(&det, train)?;
    metrics.test_accuracy = match test {
        Some(t) if !t.is_empty() => Some(pair_accuracy(&det, t)?),
        _ => None,
    };
    Ok((det, metrics))
}

pub const PROBABILITY_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoVerdict {
    /// p(real) of every consecutive pair.
    pub pair_probabilities: Vec<f64>,
    /// Π p(real).
    pub video_probability: f64,
    pub log_real: f64,
    /// Σ log p(fake) with p(fake) = 1 − p(real).
    pub log_fake: f64,
    pub label: Label,
}

/// Product rule in log space. Each factor is floored at [`PROBABILITY_FLOOR`]
/// before the log, so certain pairs still multiply to exactly 1.
pub fn combine_pair_probabilities(probs: &[f64]) -> Result<VideoVerdict> {
    if probs.is_empty() {
        return Err(Error::TooFewFrames(probs.len() + 1));
    }
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidConfig("pair probabilities must lie in [0, 1]".into()));
    }
    let log_real: f64 = probs.iter().map(|p| p.max(PROBABILITY_FLOOR).ln()).sum();
    let log_fake: f64 = probs.iter().map(|p| (1.0 - p).max(PROBABILITY_FLOOR).ln()).sum();
    Ok(VideoVerdict {
        pair_probabilities: probs.to_vec(),
        video_probability: log_real.exp(),
        log_real,
        log_fake,
        label: if log_real > log_fake { Label::Real } else { Label::Fake },
    })
}

pub fn classify_video(frames: &[Frame], detector: &Detector) -> Result<VideoVerdict> {
    if frames.len() < 2 {
        return Err(Error::TooFewFrames(frames.len()));
    }
    let probs = frames
        .windows(2)
        .map(|w| detector.probability(&w[0], &w[1]))
        .collect::<Result<Vec<_>>>()?;
    combine_pair_probabilities(&probs)
}
