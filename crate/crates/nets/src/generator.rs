//! Coarse-to-fine image generators.

use candle_core::Tensor;

use crate::arch::{ArchConfig, ArchStage};
use crate::error::{Error, Result};
use crate::layers::{instance_norm, Conv2d, ConvSpec, ResBlock, INIT_STD};
use crate::params::ParamStore;
use crate::tensor::expect_image;

/// Channels of the conditioning input: stick figure plus previous frame.
pub const GEN_IN_CHANNELS: usize = 6;

#[derive(Debug, Clone)]
pub struct GlobalGenerator {
    front: Conv2d,
    downs: Vec<Conv2d>,
    blocks: Vec<ResBlock>,
    ups: Vec<Conv2d>,
    head: Option<Conv2d>,
}

impl GlobalGenerator {
    /// `with_head = false` drops the output layer so the features can feed a local enhancer.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        ngf: usize,
        n_down: usize,
        n_blocks: usize,
        with_head: bool,
    ) -> Result<Self> {
        let front = Conv2d::new(store, &format!("{name}.front"), ConvSpec::new(cin, ngf, 7).reflect(), INIT_STD)?;
        let mut downs = Vec::new();
        for i in 0..n_down {
            let c = ngf << i;
            downs.push(Conv2d::new(
                store,
                &format!("{name}.down{i}"),
                ConvSpec::new(c, c * 2, 3).stride(2),
                INIT_STD,
            )?);
        }
        let inner = ngf << n_down;
        let blocks = (0..n_blocks)
            .map(|i| ResBlock::new(store, &format!("{name}.res{i}"), inner))
            .collect::<Result<Vec<_>>>()?;
        let mut ups = Vec::new();
        for i in 0..n_down {
            let c = ngf << (n_down - i);
            ups.push(Conv2d::new(store, &format!("{name}.up{i}"), ConvSpec::new(c, c / 2, 3), INIT_STD)?);
        }
        let head = if with_head {
            Some(Conv2d::new(store, &format!("{name}.head"), ConvSpec::new(ngf, cout, 7).reflect(), INIT_STD)?)
        } else {
            None
        };
        Ok(Self {
            front,
            downs,
            blocks,
            ups,
            head,
        })
    }

    /// Activations before the output layer, at input resolution.
    pub fn features(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = instance_norm(&self.front.forward(x)?)?.relu()?;
        for d in &self.downs {
            h = instance_norm(&d.forward(&h)?)?.relu()?;
        }
        for b in &self.blocks {
            h = b.forward(&h)?;
        }
        for u in &self.ups {
            h = upsample2(&h)?;
            h = instance_norm(&u.forward(&h)?)?.relu()?;
        }
        Ok(h)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let head = self
            .head
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("generator built without an output layer".into()))?;
        Ok(head.forward(&self.features(x)?)?.tanh()?)
    }
}

/// Nearest-neighbour 2× upsampling through index gathers, whose gradients accumulate.
pub(crate) fn upsample2(x: &Tensor) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    let rep = |n: usize| Tensor::new((0..2 * n as u32).map(|i| i / 2).collect::<Vec<u32>>(), x.device());
    Ok(x.index_select(&rep(w)?, 3)?.index_select(&rep(h)?, 2)?)
}

/// Full-resolution branch wrapped around a global generator.
#[derive(Debug, Clone)]
pub struct LocalEnhancer {
    front: Conv2d,
    down: Conv2d,
    blocks: Vec<ResBlock>,
    up: Conv2d,
    head: Conv2d,
}

impl LocalEnhancer {
    fn new(store: &mut ParamStore, name: &str, cin: usize, cout: usize, ngf: usize, n_blocks: usize) -> Result<Self> {
        Ok(Self {
            front: Conv2d::new(store, &format!("{name}.front"), ConvSpec::new(cin, ngf, 7).reflect(), INIT_STD)?,
            down: Conv2d::new(store, &format!("{name}.down"), ConvSpec::new(ngf, ngf * 2, 3).stride(2), INIT_STD)?,
            blocks: (0..n_blocks)
                .map(|i| ResBlock::new(store, &format!("{name}.res{i}"), ngf * 2))
                .collect::<Result<Vec<_>>>()?,
            up: Conv2d::new(store, &format!("{name}.up"), ConvSpec::new(ngf * 2, ngf, 3), INIT_STD)?,
            head: Conv2d::new(store, &format!("{name}.head"), ConvSpec::new(ngf, cout, 7).reflect(), INIT_STD)?,
        })
    }
}

/// The full-image generator `G`: a global network, optionally wrapped by a local enhancer.
#[derive(Debug, Clone)]
pub struct Generator {
    global: GlobalGenerator,
    local: Option<LocalEnhancer>,
    size: (u32, u32),
}

impl Generator {
    pub fn new(store: &mut ParamStore, arch: &ArchConfig) -> Result<Self> {
        arch.validate()?;
        let local_stage = arch.stage == ArchStage::Local;
        let global = GlobalGenerator::new(
            store,
            "g.global",
            GEN_IN_CHANNELS,
            3,
            arch.base_width,
            arch.n_downsamples,
            arch.n_residual_blocks,
            !local_stage,
        )?;
        let local = if local_stage {
            Some(LocalEnhancer::new(
                store,
                "g.local",
                GEN_IN_CHANNELS,
                3,
                arch.base_width / 2,
                arch.n_local_residual_blocks,
            )?)
        } else {
            None
        };
        Ok(Self {
            global,
            local,
            size: arch.image_size,
        })
    }

    pub fn image_size(&self) -> (u32, u32) {
        self.size
    }

    /// Maps a stick figure and the previous output (zeros for the first frame) to a frame in [-1, 1].
    pub fn forward(&self, pose: &Tensor, prev: &Tensor) -> Result<Tensor> {
        expect_image(pose, 3, self.size, "pose image")?;
        expect_image(prev, 3, self.size, "previous frame")?;
        if pose.dims()[0] != prev.dims()[0] {
            return Err(Error::ShapeMismatch("pose and previous frame batch sizes differ".into()));
        }
        let x = Tensor::cat(&[pose, prev], 1)?;
        match &self.local {
            None => self.global.forward(&x),
            Some(l) => {
                let coarse = self.global.features(&x.avg_pool2d(2)?)?;
                let h = instance_norm(&l.front.forward(&x)?)?.relu()?;
                let mut h = (instance_norm(&l.down.forward(&h)?)?.relu()? + coarse)?;
                for b in &l.blocks {
                    h = b.forward(&h)?;
                }
                let h = instance_norm(&l.up.forward(&upsample2(&h)?)?)?.relu()?;
                Ok(l.head.forward(&h)?.tanh()?)
            }
        }
    }
}

/// Face residual generator `G_f`.
#[derive(Debug, Clone)]
pub struct FaceGenerator {
    net: GlobalGenerator,
    size: u32,
}

impl FaceGenerator {
    pub fn new(store: &mut ParamStore, arch: &ArchConfig) -> Result<Self> {
        Ok(Self {
            net: GlobalGenerator::new(
                store,
                "gf",
                6,
                3,
                arch.face_base_width,
                arch.face_downsamples,
                arch.face_residual_blocks,
                true,
            )?,
            size: arch.face_size,
        })
    }

    /// Residual for the face crop of the generated frame.
    pub fn forward(&self, pose_patch: &Tensor, face_patch: &Tensor) -> Result<Tensor> {
        let s = (self.size, self.size);
        expect_image(pose_patch, 3, s, "pose patch")?;
        expect_image(face_patch, 3, s, "face patch")?;
        self.net.forward(&Tensor::cat(&[pose_patch, face_patch], 1)?)
    }
}
