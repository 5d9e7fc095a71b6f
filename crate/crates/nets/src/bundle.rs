//! All networks of one trained subject model plus their provenance.

use candle_core::DType;

use crate::arch::{ArchConfig, Mode, Stage};
use crate::discriminator::{MultiscaleDiscriminator, NLayerDiscriminator};
use crate::error::{Error, Result};
use crate::generator::{FaceGenerator, Generator};
use crate::params::ParamStore;

pub const FACE_DISC_CHANNELS: usize = 6;

pub struct FaceNets {
    pub generator: FaceGenerator,
    pub discriminator: NLayerDiscriminator,
}

/// Parameters live in `store` under the prefixes `g.`, `d.`, `gf.` and `df.`.
pub struct ModelBundle {
    pub arch: ArchConfig,
    pub mode: Mode,
    pub seed: u64,
    pub store: ParamStore,
    pub generator: Generator,
    pub discriminator: MultiscaleDiscriminator,
    pub face: Option<FaceNets>,
    pub stages_done: Vec<Stage>,
    pub epoch: usize,
}

impl ModelBundle {
    pub fn new(arch: ArchConfig, mode: Mode, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut store = ParamStore::new(seed, DType::F32);
        let generator = Generator::new(&mut store, &arch)?;
        let discriminator = MultiscaleDiscriminator::new(&mut store, &arch, mode.disc_channels())?;
        let face = if mode.face() {
            Some(FaceNets {
                generator: FaceGenerator::new(&mut store, &arch)?,
                discriminator: NLayerDiscriminator::new(
                    &mut store,
                    "df",
                    FACE_DISC_CHANNELS,
                    arch.disc_base_width,
                    arch.disc_layers,
                )?,
            })
        } else {
            None
        };
        Ok(Self {
            arch,
            mode,
            seed,
            store,
            generator,
            discriminator,
            face,
            stages_done: Vec::new(),
            epoch: 0,
        })
    }

    pub fn has_stage(&self, s: Stage) -> bool {
        self.stages_done.contains(&s)
    }

    pub fn mark_stage(&mut self, s: Stage) {
        if !self.has_stage(s) {
            self.stages_done.push(s);
        }
    }

    /// Stages that must finish before inference in `mode`.
    pub fn required_stages(&self, mode: Mode) -> Vec<Stage> {
        let mut v = vec![Stage::Global];
        if self.arch.stage == crate::arch::ArchStage::Local {
            v.push(Stage::Local);
        }
        if mode.face() {
            v.push(Stage::Face);
        }
        v
    }

    /// The generator input layout is the same in every mode, so only the
    /// trained stages and the presence of the face networks matter.
    pub fn ensure_trained_for(&self, mode: Mode) -> Result<()> {
        if mode.face() && self.face.is_none() {
            return Err(Error::UntrainedModel("bundle has no face networks".into()));
        }
        for s in self.required_stages(mode) {
            if !self.has_stage(s) {
                return Err(Error::UntrainedModel(format!("stage {s} not trained")));
            }
        }
        Ok(())
    }

    /// Builds the second-stage bundle: the global generator and every discriminator
    /// are carried over (discriminator `k` becomes scale `k + 1`), the local branch
    /// and the new finest discriminator start fresh.
    pub fn into_local(self, seed: u64) -> Result<Self> {
        if !self.has_stage(Stage::Global) {
            return Err(Error::StageOrderViolation("local stage needs a trained global stage".into()));
        }
        if self.has_stage(Stage::Face) {
            return Err(Error::StageOrderViolation("face stage already trained".into()));
        }
        let arch = self.arch.to_local()?;
        let mut next = ModelBundle::new(arch, self.mode, seed)?;
        for (name, var) in self.store.iter() {
            let target = match name.strip_prefix("d.s") {
                Some(rest) => {
                    let (k, tail) = rest.split_once('.').ok_or_else(|| Error::Checkpoint(name.clone()))?;
                    let k: usize = k.parse().map_err(|_| Error::Checkpoint(name.clone()))?;
                    format!("d.s{}.{tail}", k + 1)
                }
                None => name.clone(),
            };
            if next.store.get(&target).is_some() {
                next.store.assign(&target, var.as_tensor())?;
            }
        }
        next.stages_done = self.stages_done.clone();
        next.epoch = 0;
        Ok(next)
    }
}
