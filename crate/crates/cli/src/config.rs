//! TOML run configuration. Every field is optional; command-line flags win
//! over the file, and the file wins over the toy or full preset.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use dance_core::dataset::DEFAULT_TRAIN_FRACTION;
use dance_core::normalize::DEFAULT_ALPHA;
use dance_nets::fakedet::{BalanceOptions, DetectorConfig};
use dance_nets::losses::{GanMode, LossWeights};
use dance_nets::training::{schedule_for, OptimizerConfig, Tier, TrainConfig};
use dance_nets::{ArchConfig, Mode, Stage};
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub toy: Option<bool>,
    pub mode: Option<Mode>,
    /// Pretrained VGG-19 safetensors; a seeded random extractor otherwise.
    pub vgg_weights: Option<PathBuf>,
    pub arch: Option<ArchConfig>,
    pub data: DataConfig,
    pub train: TrainSection,
    pub fakedet: FakedetSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub fps: f64,
    pub downsample: u64,
    pub train_fraction: f64,
    pub alpha: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            fps: 30.0,
            downsample: 1,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            alpha: DEFAULT_ALPHA,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// Epochs per stage, e.g. `{ global = 2, face = 1 }`.
    pub epochs: BTreeMap<Stage, usize>,
    pub batch_size: Option<usize>,
    pub stride: Option<u64>,
    pub gan_mode: Option<GanMode>,
    pub optimizer: Option<OptimizerConfig>,
    pub weights: WeightOverrides,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightOverrides {
    pub lambda_gan: Option<f64>,
    pub lambda_fm: Option<f64>,
    pub lambda_p_global: Option<f64>,
    pub lambda_p_local: Option<f64>,
    pub lambda_p_face: Option<f64>,
}

impl WeightOverrides {
    fn apply(&self, w: &mut LossWeights) {
        let fields = [
            (self.lambda_gan, &mut w.lambda_gan),
            (self.lambda_fm, &mut w.lambda_fm),
            (self.lambda_p_global, &mut w.lambda_p_global),
            (self.lambda_p_local, &mut w.lambda_p_local),
            (self.lambda_p_face, &mut w.lambda_p_face),
        ];
        for (v, slot) in fields {
            if let Some(v) = v {
                *slot = v;
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FakedetSection {
    pub stride: u64,
    pub test_fraction: f64,
    pub balance: bool,
    pub max_ratio: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Option<OptimizerConfig>,
}

impl Default for FakedetSection {
    fn default() -> Self {
        let d = DetectorConfig::default();
        Self {
            stride: 1,
            test_fraction: 0.25,
            balance: true,
            max_ratio: BalanceOptions::default().max_ratio,
            epochs: d.epochs,
            batch_size: d.batch_size,
            optimizer: None,
        }
    }
}

/// Global flags as given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub toy: bool,
    pub mode: Option<Mode>,
}

/// Configuration after applying flags.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub file: Config,
    pub seed: u64,
    pub toy: bool,
    pub mode: Mode,
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).map_err(|e| crate::Invalid(format!("{}: {e}", path.display())).into())
    }

    pub fn resolve(self, flags: &Overrides) -> Resolved {
        Resolved {
            seed: flags.seed.or(self.seed).unwrap_or(0),
            toy: flags.toy || self.toy.unwrap_or(false),
            mode: flags.mode.or(self.mode).unwrap_or(Mode::FbfTsFg),
            file: self,
        }
    }
}

impl Resolved {
    pub fn tier(&self) -> Tier {
        if self.toy {
            Tier::Toy
        } else {
            Tier::Full
        }
    }

    pub fn arch(&self) -> ArchConfig {
        match (&self.file.arch, self.toy) {
            (Some(a), _) => a.clone(),
            (None, true) => ArchConfig::toy(),
            (None, false) => ArchConfig::full(),
        }
    }

    pub fn schedule(&self) -> Vec<TrainConfig> {
        let t = &self.file.train;
        schedule_for(self.tier(), self.mode, self.seed)
            .into_iter()
            .map(|mut c| {
                if let Some(&e) = t.epochs.get(&c.stage) {
                    c.epochs = e;
                }
                if let Some(b) = t.batch_size {
                    c.batch_size = b;
                }
                if let Some(s) = t.stride {
                    c.stride = s;
                }
                if let Some(g) = t.gan_mode {
                    c.weights.gan_mode = g;
                }
                if let Some(o) = t.optimizer {
                    c.optimizer = o;
                }
                t.weights.apply(&mut c.weights);
                c
            })
            .collect()
    }

    pub fn detector(&self) -> DetectorConfig {
        let f = &self.file.fakedet;
        DetectorConfig {
            epochs: f.epochs,
            batch_size: f.batch_size,
            seed: self.seed,
            optimizer: f.optimizer.unwrap_or_default(),
        }
    }

    pub fn balance(&self) -> BalanceOptions {
        BalanceOptions {
            balance: self.file.fakedet.balance,
            max_ratio: self.file.fakedet.max_ratio,
            seed: self.seed,
        }
    }
}
