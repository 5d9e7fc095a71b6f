//! Convolution blocks shared by the generators and discriminators.

use candle_core::{DType, Device, Tensor, D};

use crate::error::Result;
use crate::params::ParamStore;

/// Standard deviation of the normal initializer for adversarial networks.
pub const INIT_STD: f64 = 0.02;
const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Zero,
    Reflect,
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    weight: Tensor,
    bias: Tensor,
    stride: usize,
    padding: usize,
    mode: Padding,
}

pub struct ConvSpec {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub mode: Padding,
}

impl ConvSpec {
    pub fn new(cin: usize, cout: usize, kernel: usize) -> Self {
        Self {
            cin,
            cout,
            kernel,
            stride: 1,
            padding: kernel / 2,
            mode: Padding::Zero,
        }
    }

    pub fn stride(mut self, s: usize) -> Self {
        self.stride = s;
        self
    }

    pub fn pad(mut self, p: usize) -> Self {
        self.padding = p;
        self
    }

    pub fn reflect(mut self) -> Self {
        self.mode = Padding::Reflect;
        self
    }
}

impl Conv2d {
    pub fn new(store: &mut ParamStore, name: &str, spec: ConvSpec, std: f64) -> Result<Self> {
        let weight = store.normal(
            &format!("{name}.weight"),
            &[spec.cout, spec.cin, spec.kernel, spec.kernel],
            std,
        )?;
        let bias = store.zeros(&format!("{name}.bias"), &[spec.cout])?;
        Ok(Self {
            weight,
            bias,
            stride: spec.stride,
            padding: spec.padding,
            mode: spec.mode,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (x, pad) = match self.mode {
            Padding::Reflect if self.padding > 0 => (reflect_pad(x, self.padding)?, 0),
            _ => (x.clone(), self.padding),
        };
        let y = crate::ops::conv2d(&x, &self.weight, self.stride, pad)?;
        let c = self.bias.dims()[0];
        Ok(y.broadcast_add(&self.bias.reshape((1, c, 1, 1))?)?)
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    weight: Tensor,
    bias: Tensor,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, din: usize, dout: usize, std: f64) -> Result<Self> {
        Ok(Self {
            weight: store.normal(&format!("{name}.weight"), &[dout, din], std)?,
            bias: store.zeros(&format!("{name}.bias"), &[dout])?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.matmul(&self.weight.t()?)?.broadcast_add(&self.bias)?)
    }
}

fn reflect_indices(n: usize, p: usize) -> Vec<u32> {
    let n = n as i64;
    (-(p as i64)..n + p as i64)
        .map(|i| {
            let r = if i < 0 { -i } else if i >= n { 2 * (n - 1) - i } else { i };
            r as u32
        })
        .collect()
}

/// Mirror padding of the two spatial dimensions, excluding the edge sample.
pub fn reflect_pad(x: &Tensor, p: usize) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    let iw = Tensor::new(reflect_indices(w, p), &Device::Cpu)?;
    let ih = Tensor::new(reflect_indices(h, p), &Device::Cpu)?;
    Ok(x.index_select(&iw, 3)?.index_select(&ih, 2)?)
}

/// Per-sample, per-channel normalization without learned affine terms.
pub fn instance_norm(x: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    let flat = x.reshape((n, c, h * w))?;
    let mean = flat.mean_keepdim(D::Minus1)?;
    let centered = flat.broadcast_sub(&mean)?;
    let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
    let y = centered.broadcast_div(&(var + NORM_EPS)?.sqrt()?)?;
    Ok(y.reshape((n, c, h, w))?)
}

pub fn leaky_relu(x: &Tensor) -> Result<Tensor> {
    Ok(candle_nn::ops::leaky_relu(x, 0.2)?)
}

/// `log(1 + e^x)` evaluated without overflow.
pub fn softplus(x: &Tensor) -> Result<Tensor> {
    let pos = x.relu()?;
    let tail = (x.abs()?.neg()?.exp()? + 1.0)?.log()?;
    Ok((pos + tail)?)
}

/// 2×2 max pooling with stride 2, flooring odd sizes. candle's own max-pool
/// backward scales unique maxima by 1/4, so this goes through `max` reductions.
pub fn max_pool2x2(x: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    let (ho, wo) = (h / 2, w / 2);
    let x = x.narrow(2, 0, 2 * ho)?.narrow(3, 0, 2 * wo)?;
    Ok(x.reshape((n, c, ho, 2, wo, 2))?.max(5)?.max(3)?)
}

pub fn zeros_like_image(n: usize, h: usize, w: usize, dtype: DType) -> Result<Tensor> {
    Ok(Tensor::zeros((n, 3, h, w), dtype, &Device::Cpu)?)
}

/// Two 3×3 convolutions with a skip connection.
#[derive(Debug, Clone)]
pub struct ResBlock {
    a: Conv2d,
    b: Conv2d,
}

impl ResBlock {
    pub fn new(store: &mut ParamStore, name: &str, ch: usize) -> Result<Self> {
        Ok(Self {
            a: Conv2d::new(store, &format!("{name}.a"), ConvSpec::new(ch, ch, 3).reflect(), INIT_STD)?,
            b: Conv2d::new(store, &format!("{name}.b"), ConvSpec::new(ch, ch, 3).reflect(), INIT_STD)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = instance_norm(&self.a.forward(x)?)?.relu()?;
        let h = instance_norm(&self.b.forward(&h)?)?;
        Ok((x + h)?)
    }
}
