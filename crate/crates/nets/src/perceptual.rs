//! VGG-19 feature taps for the perceptual reconstruction loss.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor};

use crate::error::{Error, Result};
use crate::layers::{max_pool2x2, Conv2d, ConvSpec};
use crate::params::ParamStore;

pub const TAP_NAMES: [&str; 5] = ["conv1_1", "conv2_1", "conv3_1", "conv4_1", "conv5_1"];

const BLOCK_WIDTHS: [usize; 5] = [64, 128, 256, 512, 512];
/// Convolutions per block up to and including conv5_1.
const BLOCK_DEPTHS: [usize; 5] = [2, 2, 4, 4, 1];
/// Positions of those convolutions in the torchvision `features` sequence.
const TORCHVISION_INDICES: [usize; 13] = [0, 2, 5, 7, 10, 12, 14, 16, 19, 21, 23, 25, 28];
const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

/// Anything exposing the five tap activations of an image batch in [-1, 1].
pub trait FeatureExtractor: Send + Sync {
    fn features(&self, x: &Tensor) -> Result<Vec<Tensor>>;
}

pub struct Vgg19 {
    store: ParamStore,
    convs: Vec<Vec<Conv2d>>,
    mean: Tensor,
    std: Tensor,
}

impl Vgg19 {
    /// Fixed He-initialized weights; `divisor` thins every layer for fast runs.
    pub fn random(seed: u64, divisor: usize, dtype: DType) -> Result<Self> {
        if divisor == 0 {
            return Err(Error::InvalidConfig("vgg divisor must be >= 1".into()));
        }
        let mut store = ParamStore::new(seed, dtype);
        let mut convs = Vec::new();
        let mut cin = 3;
        let mut k = 0;
        for (&width, &depth) in BLOCK_WIDTHS.iter().zip(&BLOCK_DEPTHS) {
            let cout = (width / divisor).max(1);
            let mut block = Vec::new();
            for _ in 0..depth {
                let std = (2.0 / (cin * 9) as f64).sqrt();
                let name = format!("features.{}", TORCHVISION_INDICES[k]);
                block.push(Conv2d::new(&mut store, &name, ConvSpec::new(cin, cout, 3), std)?);
                cin = cout;
                k += 1;
            }
            convs.push(block);
        }
        let dev = Device::Cpu;
        let mean = Tensor::new(&IMAGENET_MEAN, &dev)?.reshape((1, 3, 1, 1))?.to_dtype(dtype)?;
        let std = Tensor::new(&IMAGENET_STD, &dev)?.reshape((1, 3, 1, 1))?.to_dtype(dtype)?;
        Ok(Self {
            store,
            convs,
            mean,
            std,
        })
    }

    /// Loads ImageNet-trained weights stored under torchvision names (`features.{i}.weight`).
    pub fn pretrained(path: impl AsRef<Path>, dtype: DType) -> Result<Self> {
        let vgg = Self::random(0, 1, dtype)?;
        let tensors: HashMap<String, Tensor> = candle_core::safetensors::load(path.as_ref(), &Device::Cpu)?;
        for i in TORCHVISION_INDICES {
            for part in ["weight", "bias"] {
                let name = format!("features.{i}.{part}");
                let t = tensors
                    .get(&name)
                    .ok_or_else(|| Error::Checkpoint(format!("{} lacks {name}", path.as_ref().display())))?;
                vgg.store.assign(&name, t)?;
            }
        }
        Ok(vgg)
    }

    pub fn param_count(&self) -> usize {
        self.store.count("")
    }
}

impl FeatureExtractor for Vgg19 {
    fn features(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let x01 = x.affine(0.5, 0.5)?;
        let mut h = x01.broadcast_sub(&self.mean)?.broadcast_div(&self.std)?;
        let mut taps = Vec::with_capacity(TAP_NAMES.len());
        for (b, block) in self.convs.iter().enumerate() {
            if b > 0 {
                h = max_pool2x2(&h)?;
            }
            for (i, conv) in block.iter().enumerate() {
                let pre = conv.forward(&h)?;
                if i == 0 {
                    taps.push(pre.clone());
                }
                h = pre.relu()?;
            }
        }
        Ok(taps)
    }
}
