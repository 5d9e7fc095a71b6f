//! Staged adversarial training: temporal pairs, alternating discriminator and
//! generator updates, per-epoch checkpoints and metrics.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use candle_core::{DType, Tensor, Var};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use dance_core::dataset::{temporal_index_pairs, DatasetManifest, ManifestEntry, Split};
use dance_core::render::{face_box, render_stick_figure};
use dance_core::synth::ToySubject;
use dance_core::{Frame, PixelBox, Pose};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::{ArchStage, Mode, Stage};
use crate::bundle::ModelBundle;
use crate::checkpoint::save_bundle;
use crate::error::{Error, Result};
use crate::losses::{
    disc_input, discriminator_objective, face_discriminator_objective, face_objective, generator_objective,
    FaceBatch, GanMode, GeneratorBreakdown, GeneratorTerms, LossWeights,
};
use crate::perceptual::FeatureExtractor;
use crate::tensor::{frame_to_tensor, scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl OptimizerConfig {
    fn build(&self, vars: Vec<Var>) -> Result<AdamW> {
        Ok(AdamW::new(
            vars,
            ParamsAdamW {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.eps,
                weight_decay: self.weight_decay,
            },
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub stage: Stage,
    pub epochs: usize,
    pub resolution: (u32, u32),
    pub batch_size: usize,
    pub seed: u64,
    pub mode: Mode,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub weights: LossWeights,
    /// Frame distance between the two frames of a pair, in manifest steps.
    #[serde(default = "one")]
    pub stride: u64,
    #[serde(default)]
    pub checkpoint_dir: Option<PathBuf>,
    #[serde(default)]
    pub metrics_path: Option<PathBuf>,
}

fn one() -> u64 {
    1
}

impl TrainConfig {
    pub fn new(stage: Stage, epochs: usize, resolution: (u32, u32), mode: Mode) -> Self {
        Self {
            stage,
            epochs,
            resolution,
            batch_size: 1,
            seed: 0,
            mode,
            optimizer: OptimizerConfig::default(),
            weights: LossWeights::default(),
            stride: 1,
            checkpoint_dir: None,
            metrics_path: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.stride == 0 {
            return Err(Error::InvalidConfig("epochs, batch_size and stride must be >= 1".into()));
        }
        if self.stage == Stage::Face && !self.mode.face() {
            return Err(Error::InvalidConfig(format!("mode {} has no face stage", self.mode)));
        }
        if !(self.optimizer.lr.is_finite() && self.optimizer.lr > 0.0) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        self.weights.validate()
    }

    fn lambda_p(&self) -> f64 {
        match self.stage {
            Stage::Global => self.weights.lambda_p_global,
            Stage::Local => self.weights.lambda_p_local,
            Stage::Face => self.weights.lambda_p_face,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Full,
    Toy,
}

pub const TOY_GLOBAL_EPOCHS: usize = 8;
pub const TOY_FACE_EPOCHS: usize = 16;

/// Stage configs in training order for a tier.
pub fn stage_schedule(tier: Tier) -> Vec<TrainConfig> {
    let mode = Mode::FbfTsFg;
    match tier {
        Tier::Full => vec![
            TrainConfig::new(Stage::Global, 5, (512, 256), mode),
            TrainConfig::new(Stage::Local, 30, (1024, 512), mode),
            TrainConfig::new(Stage::Face, 5, (1024, 512), mode),
        ],
        // The log-likelihood generator term keeps growing while the tiny toy
        // discriminator saturates; the bounded least-squares form does not.
        Tier::Toy => [(Stage::Global, TOY_GLOBAL_EPOCHS), (Stage::Face, TOY_FACE_EPOCHS)]
            .into_iter()
            .map(|(stage, epochs)| {
                let mut c = TrainConfig::new(stage, epochs, (128, 64), mode);
                c.weights.gan_mode = GanMode::LeastSquares;
                c
            })
            .collect(),
    }
}

/// [`stage_schedule`] specialised to one mode and seed; modes without the
/// face GAN drop the face stage.
pub fn schedule_for(tier: Tier, mode: Mode, seed: u64) -> Vec<TrainConfig> {
    stage_schedule(tier)
        .into_iter()
        .filter(|c| c.stage != Stage::Face || mode.face())
        .map(|mut c| {
            c.mode = mode;
            c.seed = seed;
            c
        })
        .collect()
}

/// Two manifest positions `stride` steps apart, both usable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TemporalPair {
    pub positions: (usize, usize),
    pub frame_indices: (u64, u64),
}

fn pairs_of(entries: &[ManifestEntry], index_step: u64, stride: u64) -> Result<Vec<TemporalPair>> {
    let refs: Vec<&ManifestEntry> = entries.iter().collect();
    let pairs = temporal_index_pairs(&refs, index_step, stride).map_err(|e| match e {
        dance_core::Error::EmptyDataset => Error::EmptyDataset,
        e => e.into(),
    })?;
    Ok(pairs
        .into_iter()
        .map(|(a, b)| TemporalPair {
            positions: (a, b),
            frame_indices: (entries[a].frame_index, entries[b].frame_index),
        })
        .collect())
}

pub fn make_temporal_pairs(manifest: &DatasetManifest, stride: u64) -> Result<Vec<TemporalPair>> {
    pairs_of(&manifest.entries, manifest.index_step, stride)
}

/// Frames and poses of one subject held in memory.
#[derive(Debug, Clone)]
pub struct TrainingClip {
    pub subject_id: String,
    pub resolution: (u32, u32),
    pub entries: Vec<ManifestEntry>,
    pub index_step: u64,
    /// Unusable entries hold a blank frame.
    pub frames: Vec<Frame>,
    pub poses: Vec<Pose>,
}

impl TrainingClip {
    /// Loads the entries of `split` (all entries when `None`).
    pub fn from_manifest(manifest: &DatasetManifest, split: Option<Split>) -> Result<Self> {
        let entries: Vec<ManifestEntry> = manifest
            .entries
            .iter()
            .filter(|e| split.is_none_or(|s| e.split == s))
            .cloned()
            .collect();
        let (w, h) = manifest.resolution;
        let mut frames = Vec::with_capacity(entries.len());
        for e in &entries {
            frames.push(if e.usable { Frame::load(&e.frame_path)? } else { Frame::zeros(w, h) });
        }
        let poses = manifest.load_poses(&entries)?.poses;
        Self::assemble(manifest.subject_id.clone(), manifest.resolution, entries, manifest.index_step, frames, poses)
    }

    /// First `n` frames of a synthetic subject.
    pub fn synthetic(subject: &ToySubject, n: usize) -> Result<Self> {
        let (seq, frames) = subject.clip(n, 30.0);
        let entries = (0..n as u64)
            .map(|i| ManifestEntry {
                frame_index: i,
                frame_path: PathBuf::new(),
                pose_path: PathBuf::new(),
                split: Split::Train,
                usable: true,
            })
            .collect();
        Self::assemble(subject.id.clone(), (subject.width, subject.height), entries, 1, frames, seq.poses)
    }

    fn assemble(
        subject_id: String,
        resolution: (u32, u32),
        entries: Vec<ManifestEntry>,
        index_step: u64,
        frames: Vec<Frame>,
        poses: Vec<Pose>,
    ) -> Result<Self> {
        if entries.iter().all(|e| !e.usable) {
            return Err(Error::EmptyDataset);
        }
        for f in &frames {
            if (f.width, f.height) != resolution {
                return Err(Error::ShapeMismatch(format!(
                    "frame {}x{} in a {}x{} clip",
                    f.width, f.height, resolution.0, resolution.1
                )));
            }
        }
        Ok(Self {
            subject_id,
            resolution,
            entries,
            index_step,
            frames,
            poses,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Resampled frames with poses scaled to match.
    pub fn at_resolution(&self, width: u32, height: u32) -> Result<Self> {
        let sx = width as f64 / self.resolution.0 as f64;
        let sy = height as f64 / self.resolution.1 as f64;
        Ok(Self {
            subject_id: self.subject_id.clone(),
            resolution: (width, height),
            entries: self.entries.clone(),
            index_step: self.index_step,
            frames: self
                .frames
                .iter()
                .map(|f| f.resized(width, height))
                .collect::<dance_core::Result<_>>()?,
            poses: self.poses.iter().map(|p| p.map_present(|x, y| (x * sx, y * sy))).collect(),
        })
    }

    pub fn pairs(&self, stride: u64) -> Result<Vec<TemporalPair>> {
        pairs_of(&self.entries, self.index_step, stride)
    }

    pub fn usable_positions(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.entries[i].usable).collect()
    }

    pub fn stick_figures(&self) -> Vec<Frame> {
        let (w, h) = self.resolution;
        self.poses.iter().map(|p| render_stick_figure(p, w, h).to_frame()).collect()
    }
}

/// Instrumentation points inside the training loop.
pub trait TrainObserver {
    /// Every full-image generator call; `slot` is the frame's position within its pair.
    fn generator_call(&mut self, _slot: usize, _pose: &Tensor, _prev: &Tensor) {}
    fn discriminator_input(&mut self, _input: &Tensor) {}
    fn step_end(&mut self, _row: &MetricsRow) {}
}

pub struct NoObserver;

impl TrainObserver for NoObserver {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub stage: Stage,
    pub epoch: usize,
    pub step: usize,
    pub discriminator: f64,
    pub gan: f64,
    pub feature_matching: f64,
    pub perceptual: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub rows: Vec<MetricsRow>,
}

impl TrainLog {
    /// Mean of every term over the steps of each epoch, in epoch order.
    pub fn epoch_means(&self, stage: Stage) -> Vec<MetricsRow> {
        let mut out: Vec<(MetricsRow, usize)> = Vec::new();
        for r in self.rows.iter().filter(|r| r.stage == stage) {
            match out.last_mut() {
                Some((m, n)) if m.epoch == r.epoch => {
                    m.discriminator += r.discriminator;
                    m.gan += r.gan;
                    m.feature_matching += r.feature_matching;
                    m.perceptual += r.perceptual;
                    m.total += r.total;
                    *n += 1;
                }
                _ => out.push((MetricsRow { step: 0, ..r.clone() }, 1)),
            }
        }
        out.into_iter()
            .map(|(mut m, n)| {
                let k = n as f64;
                m.discriminator /= k;
                m.gan /= k;
                m.feature_matching /= k;
                m.perceptual /= k;
                m.total /= k;
                m.step = n;
                m
            })
            .collect()
    }

    pub fn extend(&mut self, other: TrainLog) {
        self.rows.extend(other.rows);
    }
}

fn append_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let exists = path.exists() && std::fs::metadata(path)?.len() > 0;
    let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(!exists).from_writer(file);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

fn check_finite(
    cfg: &TrainConfig,
    epoch: usize,
    step: usize,
    terms: &[(&'static str, f64)],
) -> Result<()> {
    let Some(&(term, _)) = terms.iter().find(|(_, v)| !v.is_finite()) else {
        return Ok(());
    };
    let dir = cfg.checkpoint_dir.clone().unwrap_or_else(std::env::temp_dir);
    std::fs::create_dir_all(&dir)?;
    let dump = dir.join(format!("nonfinite-{}-e{epoch}-s{step}.json", cfg.stage));
    let values: HashMap<&str, String> = terms.iter().map(|(k, v)| (*k, v.to_string())).collect();
    let report = serde_json::json!({
        "stage": cfg.stage.as_str(),
        "mode": cfg.mode.as_str(),
        "seed": cfg.seed,
        "epoch": epoch,
        "step": step,
        "terms": values,
    });
    std::fs::write(&dump, serde_json::to_vec_pretty(&report)?)?;
    Err(Error::NonFiniteLoss {
        term: term.to_string(),
        epoch,
        step,
        dump,
    })
}

fn check_stage_order(bundle: &ModelBundle, cfg: &TrainConfig) -> Result<()> {
    let violation = |m: &str| Err(Error::StageOrderViolation(m.into()));
    if bundle.mode != cfg.mode {
        return Err(Error::InvalidConfig(format!(
            "bundle built for {} but config trains {}",
            bundle.mode, cfg.mode
        )));
    }
    if cfg.resolution != bundle.arch.image_size {
        return Err(Error::InvalidConfig(format!(
            "config resolution {:?} differs from the network's {:?}",
            cfg.resolution, bundle.arch.image_size
        )));
    }
    let local_arch = bundle.arch.stage == ArchStage::Local;
    match cfg.stage {
        Stage::Global if local_arch => violation("global stage on a local-stage network"),
        Stage::Global if bundle.has_stage(Stage::Face) => violation("global stage after the face stage"),
        Stage::Local if !local_arch => violation("local stage needs the upsampled network"),
        Stage::Local if !bundle.has_stage(Stage::Global) => violation("local stage before the global stage"),
        Stage::Local if bundle.has_stage(Stage::Face) => violation("local stage after the face stage"),
        Stage::Face if !bundle.has_stage(Stage::Global) => violation("face stage before the global stage"),
        Stage::Face if local_arch && !bundle.has_stage(Stage::Local) => violation("face stage before the local stage"),
        _ => Ok(()),
    }
}

/// Target features of ground-truth frames, cached while they fit the budget.
struct TargetFeatures<'a> {
    extractor: &'a dyn FeatureExtractor,
    cache: HashMap<usize, Vec<Tensor>>,
    budget: usize,
}

const FEATURE_CACHE_FLOATS: usize = 64 << 20;

impl<'a> TargetFeatures<'a> {
    fn new(extractor: &'a dyn FeatureExtractor) -> Self {
        Self {
            extractor,
            cache: HashMap::new(),
            budget: FEATURE_CACHE_FLOATS,
        }
    }

    fn get(&mut self, pos: usize, y: &Tensor) -> Result<Vec<Tensor>> {
        if let Some(f) = self.cache.get(&pos) {
            return Ok(f.clone());
        }
        let f: Vec<Tensor> = self.extractor.features(y)?.iter().map(|t| t.detach()).collect();
        let size: usize = f.iter().map(|t| t.elem_count()).sum();
        if size <= self.budget {
            self.budget -= size;
            self.cache.insert(pos, f.clone());
        }
        Ok(f)
    }

    /// Features of a batch, batch-stacked per tap.
    fn batch(&mut self, positions: &[usize], ys: &[Tensor]) -> Result<Vec<Tensor>> {
        let per: Vec<Vec<Tensor>> = positions
            .iter()
            .zip(ys)
            .map(|(&p, y)| self.get(p, y))
            .collect::<Result<_>>()?;
        (0..per[0].len())
            .map(|k| Ok(Tensor::cat(&per.iter().map(|f| &f[k]).collect::<Vec<_>>(), 0)?))
            .collect()
    }
}

fn stack(items: &[Tensor], positions: &[usize]) -> Result<Tensor> {
    let picked: Vec<&Tensor> = positions.iter().map(|&p| &items[p]).collect();
    Ok(Tensor::cat(&picked, 0)?)
}

fn to_tensors(frames: &[Frame]) -> Result<Vec<Tensor>> {
    frames.iter().map(|f| frame_to_tensor(f, DType::F32)).collect()
}

/// Runs one stage on `clip`; the bundle comes back with the stage marked done.
pub fn train(
    mut bundle: ModelBundle,
    clip: &TrainingClip,
    cfg: &TrainConfig,
    extractor: &dyn FeatureExtractor,
    observer: &mut dyn TrainObserver,
) -> Result<(ModelBundle, TrainLog)> {
    cfg.validate()?;
    check_stage_order(&bundle, cfg)?;
    if clip.resolution != cfg.resolution {
        return Err(Error::InvalidConfig(format!(
            "clip is {:?}, config trains at {:?}",
            clip.resolution, cfg.resolution
        )));
    }
    let log = match cfg.stage {
        Stage::Global | Stage::Local => train_full(&mut bundle, clip, cfg, extractor, observer)?,
        Stage::Face => train_face(&mut bundle, clip, cfg, extractor, observer)?,
    };
    bundle.mark_stage(cfg.stage);
    Ok((bundle, log))
}

fn end_epoch(bundle: &mut ModelBundle, cfg: &TrainConfig, epoch: usize, rows: &[MetricsRow]) -> Result<()> {
    bundle.epoch = epoch;
    if let Some(dir) = &cfg.checkpoint_dir {
        std::fs::create_dir_all(dir)?;
        save_bundle(bundle, dir.join(format!("{}-epoch{epoch:03}.safetensors", cfg.stage)))?;
    }
    if let Some(path) = &cfg.metrics_path {
        append_metrics(path, rows)?;
    }
    if let Some(last) = rows.last() {
        log::info!("{} epoch {epoch}: last total {:.4}", cfg.stage, last.total);
    }
    Ok(())
}

fn train_full(
    bundle: &mut ModelBundle,
    clip: &TrainingClip,
    cfg: &TrainConfig,
    extractor: &dyn FeatureExtractor,
    observer: &mut dyn TrainObserver,
) -> Result<TrainLog> {
    let samples: Vec<Vec<usize>> = if cfg.mode.temporal() {
        clip.pairs(cfg.stride)?
            .into_iter()
            .map(|p| vec![p.positions.0, p.positions.1])
            .collect()
    } else {
        clip.usable_positions().into_iter().map(|p| vec![p]).collect()
    };
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let xs = to_tensors(&clip.stick_figures())?;
    let ys = to_tensors(&clip.frames)?;
    let mut targets = TargetFeatures::new(extractor);
    let mut opt_g = cfg.optimizer.build(bundle.store.vars_with_prefix("g."))?;
    let mut opt_d = cfg.optimizer.build(bundle.store.vars_with_prefix("d."))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lambda_p = cfg.lambda_p();
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut rows = Vec::new();
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let arity = samples[chunk[0]].len();
            let slot_positions: Vec<Vec<usize>> =
                (0..arity).map(|k| chunk.iter().map(|&s| samples[s][k]).collect()).collect();
            let x: Vec<Tensor> = slot_positions.iter().map(|p| stack(&xs, p)).collect::<Result<_>>()?;
            let y: Vec<Tensor> = slot_positions.iter().map(|p| stack(&ys, p)).collect::<Result<_>>()?;
            let mut fakes: Vec<Tensor> = Vec::with_capacity(arity);
            let mut prev = x[0].zeros_like()?;
            for (k, xk) in x.iter().enumerate() {
                observer.generator_call(k, xk, &prev);
                let f = bundle.generator.forward(xk, &prev)?;
                prev = f.clone();
                fakes.push(f);
            }
            let real_in = disc_input(&x, &y)?;
            observer.discriminator_input(&real_in);
            let d_real = bundle.discriminator.forward(&real_in)?;
            let detached: Vec<Tensor> = fakes.iter().map(|f| f.detach()).collect();
            let d_fake_detached = bundle.discriminator.forward(&disc_input(&x, &detached)?)?;
            let loss_d = discriminator_objective(&d_real, &d_fake_detached, cfg.weights.gan_mode)?;
            let d_fake = bundle.discriminator.forward(&disc_input(&x, &fakes)?)?;
            let d_real_const: Vec<_> = d_real.iter().map(|o| o.detach()).collect();
            let target_features = slot_positions
                .iter()
                .zip(&y)
                .map(|(p, yk)| targets.batch(p, &yk.chunk(p.len(), 0)?))
                .collect::<Result<Vec<_>>>()?;
            let (loss_g, b) = generator_objective(
                &GeneratorTerms {
                    d_real: &d_real_const,
                    d_fake: &d_fake,
                    pred: &fakes,
                    target_features: &target_features,
                },
                &cfg.weights,
                lambda_p,
                extractor,
            )?;
            let row = step_update(cfg, epoch, step, &loss_d, &loss_g, b, &mut opt_d, &mut opt_g)?;
            observer.step_end(&row);
            rows.push(row);
        }
        end_epoch(bundle, cfg, epoch, &rows)?;
        log.rows.extend(rows);
    }
    Ok(log)
}

#[allow(clippy::too_many_arguments)]
fn step_update(
    cfg: &TrainConfig,
    epoch: usize,
    step: usize,
    loss_d: &Tensor,
    loss_g: &Tensor,
    b: GeneratorBreakdown,
    opt_d: &mut AdamW,
    opt_g: &mut AdamW,
) -> Result<MetricsRow> {
    let d = scalar(loss_d)?;
    check_finite(
        cfg,
        epoch,
        step,
        &[
            ("discriminator", d),
            ("gan", b.gan),
            ("feature_matching", b.feature_matching),
            ("perceptual", b.perceptual),
        ],
    )?;
    // Both gradients come from the same parameter values.
    let grads_d = loss_d.backward()?;
    let grads_g = loss_g.backward()?;
    opt_d.step(&grads_d)?;
    opt_g.step(&grads_g)?;
    Ok(MetricsRow {
        stage: cfg.stage,
        epoch,
        step,
        discriminator: d,
        gan: b.gan,
        feature_matching: b.feature_matching,
        perceptual: b.perceptual,
        total: b.total,
    })
}

/// Full-image generator outputs over the clip in order, each frame conditioned on
/// the previous output when the two are consecutive (temporal modes only).
pub fn generate_clip(bundle: &ModelBundle, clip: &TrainingClip, xs: &[Tensor]) -> Result<Vec<Option<Tensor>>> {
    let step = clip.index_step.max(1);
    let mut out: Vec<Option<Tensor>> = Vec::with_capacity(clip.len());
    for (i, e) in clip.entries.iter().enumerate() {
        if !e.usable {
            out.push(None);
            continue;
        }
        let prev = match (i.checked_sub(1), bundle.mode.temporal()) {
            (Some(j), true) if clip.entries[j].frame_index + step == e.frame_index => out[j].clone(),
            _ => None,
        };
        let prev = match prev {
            Some(p) => p,
            None => xs[i].zeros_like()?,
        };
        out.push(Some(bundle.generator.forward(&xs[i], &prev)?.detach()));
    }
    Ok(out)
}

struct FaceSample {
    x: Tensor,
    y: Tensor,
    generated: Tensor,
}

fn crop(t: &Tensor, b: &PixelBox) -> Result<Tensor> {
    Ok(t
        .narrow(2, b.y0 as usize, b.height() as usize)?
        .narrow(3, b.x0 as usize, b.width() as usize)?
        .contiguous()?)
}

fn train_face(
    bundle: &mut ModelBundle,
    clip: &TrainingClip,
    cfg: &TrainConfig,
    extractor: &dyn FeatureExtractor,
    observer: &mut dyn TrainObserver,
) -> Result<TrainLog> {
    let xs = to_tensors(&clip.stick_figures())?;
    let ys = to_tensors(&clip.frames)?;
    let generated = generate_clip(bundle, clip, &xs)?;
    let (w, h) = clip.resolution;
    let mut samples = Vec::new();
    for (i, g) in generated.iter().enumerate() {
        let (Some(g), Ok(b)) = (g, face_box(&clip.poses[i], bundle.arch.face_size, w, h)) else {
            continue;
        };
        samples.push(FaceSample {
            x: crop(&xs[i], &b)?,
            y: crop(&ys[i], &b)?,
            generated: crop(g, &b)?,
        });
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if bundle.face.is_none() {
        return Err(Error::InvalidConfig("bundle has no face networks".into()));
    }
    let mut opt_g = cfg.optimizer.build(bundle.store.vars_with_prefix("gf."))?;
    let mut opt_d = cfg.optimizer.build(bundle.store.vars_with_prefix("df."))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut rows = Vec::new();
        let face = bundle.face.as_ref().expect("checked above");
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let cat = |f: fn(&FaceSample) -> &Tensor| -> Result<Tensor> {
                Ok(Tensor::cat(&chunk.iter().map(|&s| f(&samples[s])).collect::<Vec<_>>(), 0)?)
            };
            let (x, y, generated) = (cat(|s| &s.x)?, cat(|s| &s.y)?, cat(|s| &s.generated)?);
            let residual = face.generator.forward(&x, &generated)?;
            let batch = FaceBatch {
                x,
                y,
                generated,
                residual,
            };
            let loss_d = face_discriminator_objective(&face.discriminator, &batch, cfg.weights.gan_mode)?;
            let (loss_g, b) = face_objective(&face.discriminator, &batch, &cfg.weights, extractor)?;
            let row = step_update(cfg, epoch, step, &loss_d, &loss_g, b, &mut opt_d, &mut opt_g)?;
            observer.step_end(&row);
            rows.push(row);
        }
        end_epoch(bundle, cfg, epoch, &rows)?;
        log.rows.extend(rows);
    }
    Ok(log)
}

/// Runs a schedule from scratch, upsampling the network and data when the
/// local stage begins.
pub fn run_schedule(
    mut bundle: ModelBundle,
    clip: &TrainingClip,
    schedule: &[TrainConfig],
    extractor: &dyn FeatureExtractor,
    observer: &mut dyn TrainObserver,
) -> Result<(ModelBundle, TrainLog)> {
    let mut log = TrainLog::default();
    for cfg in schedule {
        if cfg.stage == Stage::Local && bundle.arch.stage == ArchStage::Global {
            bundle = bundle.into_local(cfg.seed)?;
        }
        let data = if clip.resolution == cfg.resolution {
            clip.clone()
        } else {
            clip.at_resolution(cfg.resolution.0, cfg.resolution.1)?
        };
        let (b, l) = train(bundle, &data, cfg, extractor, observer)?;
        bundle = b;
        log.extend(l);
    }
    Ok((bundle, log))
}
