//! Patch discriminators and the pair classifier built on the same trunk.

use candle_core::Tensor;

use crate::arch::ArchConfig;
use crate::error::{Error, Result};
use crate::layers::{instance_norm, leaky_relu, Conv2d, ConvSpec, Linear, INIT_STD};
use crate::params::ParamStore;

const MAX_FILTERS: usize = 512;

/// Logit map of one scale and the activations of each block before it.
#[derive(Debug, Clone)]
pub struct DiscOutput {
    pub logits: Tensor,
    pub features: Vec<Tensor>,
}

impl DiscOutput {
    pub fn detach(&self) -> DiscOutput {
        DiscOutput {
            logits: self.logits.detach(),
            features: self.features.iter().map(|f| f.detach()).collect(),
        }
    }
}

#[derive(Debug, Clone)]
struct Trunk {
    blocks: Vec<Conv2d>,
}

impl Trunk {
    fn new(store: &mut ParamStore, name: &str, cin: usize, ndf: usize, n_layers: usize) -> Result<(Self, usize)> {
        let mut blocks = Vec::new();
        let mut nf = ndf;
        blocks.push(Conv2d::new(
            store,
            &format!("{name}.b0"),
            ConvSpec::new(cin, nf, 4).stride(2).pad(2),
            INIT_STD,
        )?);
        for i in 1..=n_layers {
            let prev = nf;
            nf = (nf * 2).min(MAX_FILTERS);
            let stride = if i < n_layers { 2 } else { 1 };
            blocks.push(Conv2d::new(
                store,
                &format!("{name}.b{i}"),
                ConvSpec::new(prev, nf, 4).stride(stride).pad(2),
                INIT_STD,
            )?);
        }
        Ok((Self { blocks }, nf))
    }

    fn forward(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let mut feats = Vec::with_capacity(self.blocks.len());
        let mut h = x.clone();
        for (i, b) in self.blocks.iter().enumerate() {
            h = b.forward(&h)?;
            if i > 0 {
                h = instance_norm(&h)?;
            }
            h = leaky_relu(&h)?;
            feats.push(h.clone());
        }
        Ok(feats)
    }
}

/// Fully convolutional patch discriminator; with three layers each logit sees a 70×70 window.
#[derive(Debug, Clone)]
pub struct NLayerDiscriminator {
    trunk: Trunk,
    out: Conv2d,
    in_channels: usize,
}

impl NLayerDiscriminator {
    pub fn new(store: &mut ParamStore, name: &str, cin: usize, ndf: usize, n_layers: usize) -> Result<Self> {
        let (trunk, nf) = Trunk::new(store, name, cin, ndf, n_layers)?;
        let out = Conv2d::new(store, &format!("{name}.out"), ConvSpec::new(nf, 1, 4).pad(2), INIT_STD)?;
        Ok(Self {
            trunk,
            out,
            in_channels: cin,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn forward(&self, x: &Tensor) -> Result<DiscOutput> {
        check_channels(x, self.in_channels)?;
        let features = self.trunk.forward(x)?;
        let logits = self.out.forward(features.last().expect("trunk has blocks"))?;
        Ok(DiscOutput { logits, features })
    }
}

fn check_channels(x: &Tensor, c: usize) -> Result<()> {
    let dims = x.dims();
    if dims.len() != 4 || dims[1] != c {
        return Err(Error::ShapeMismatch(format!("discriminator expects N×{c}×H×W, got {dims:?}")));
    }
    Ok(())
}

/// Discriminators applied to successively 2×-downsampled copies of the input.
#[derive(Debug, Clone)]
pub struct MultiscaleDiscriminator {
    scales: Vec<NLayerDiscriminator>,
}

impl MultiscaleDiscriminator {
    pub fn new(store: &mut ParamStore, arch: &ArchConfig, cin: usize) -> Result<Self> {
        let scales = (0..arch.n_discriminator_scales)
            .map(|k| NLayerDiscriminator::new(store, &format!("d.s{k}"), cin, arch.disc_base_width, arch.disc_layers))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { scales })
    }

    pub fn n_scales(&self) -> usize {
        self.scales.len()
    }

    pub fn in_channels(&self) -> usize {
        self.scales[0].in_channels()
    }

    /// Outputs ordered finest scale first.
    pub fn forward(&self, x: &Tensor) -> Result<Vec<DiscOutput>> {
        check_channels(x, self.in_channels())?;
        let mut out = Vec::with_capacity(self.scales.len());
        let mut h = x.clone();
        for (k, d) in self.scales.iter().enumerate() {
            if k > 0 {
                h = h.avg_pool2d(2)?;
            }
            out.push(d.forward(&h)?);
        }
        Ok(out)
    }
}

/// Real-vs-synthesized classifier over channel-stacked frame pairs.
#[derive(Debug, Clone)]
pub struct FakeDetector {
    trunk: Trunk,
    fc: Linear,
}

pub const DETECTOR_IN_CHANNELS: usize = 6;

impl FakeDetector {
    pub fn new(store: &mut ParamStore, arch: &ArchConfig) -> Result<Self> {
        let (trunk, nf) = Trunk::new(
            store,
            "det.trunk",
            DETECTOR_IN_CHANNELS,
            arch.detector_base_width,
            arch.detector_layers,
        )?;
        let fc = Linear::new(store, "det.fc", nf, 1, INIT_STD)?;
        Ok(Self { trunk, fc })
    }

    /// One logit per pair; positive means real.
    pub fn logits(&self, first: &Tensor, second: &Tensor) -> Result<Tensor> {
        let x = Tensor::cat(&[first, second], 1)?;
        check_channels(&x, DETECTOR_IN_CHANNELS)?;
        let feats = self.trunk.forward(&x)?;
        let pooled = feats.last().expect("trunk has blocks").mean((2, 3))?;
        Ok(self.fc.forward(&pooled)?.squeeze(1)?)
    }

    /// Probability that each pair is real.
    pub fn forward(&self, first: &Tensor, second: &Tensor) -> Result<Tensor> {
        Ok(candle_nn::ops::sigmoid(&self.logits(first, second)?)?)
    }
}
