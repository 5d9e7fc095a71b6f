//! Conversion between [`Frame`]s and `N × 3 × H × W` tensors.

use candle_core::{DType, Device, Tensor};
use dance_core::Frame;

use crate::error::{Error, Result};

pub fn frame_to_tensor(frame: &Frame, dtype: DType) -> Result<Tensor> {
    frames_to_tensor(&[frame], dtype)
}

pub fn frames_to_tensor(frames: &[&Frame], dtype: DType) -> Result<Tensor> {
    let first = frames
        .first()
        .ok_or_else(|| Error::ShapeMismatch("no frames to stack".into()))?;
    let (w, h) = (first.width as usize, first.height as usize);
    let mut data = Vec::with_capacity(frames.len() * 3 * w * h);
    for f in frames {
        if !f.same_size(first) {
            return Err(Error::ShapeMismatch(format!(
                "frame {}x{} in a {}x{} batch",
                f.width, f.height, w, h
            )));
        }
        data.extend_from_slice(&f.data);
    }
    Ok(Tensor::from_vec(data, (frames.len(), 3, h, w), &Device::Cpu)?.to_dtype(dtype)?)
}

/// Splits an `N × 3 × H × W` tensor into frames.
pub fn tensor_to_frames(t: &Tensor) -> Result<Vec<Frame>> {
    let (n, c, h, w) = t.dims4()?;
    if c != 3 {
        return Err(Error::ShapeMismatch(format!("expected 3 channels, got {c}")));
    }
    let flat: Vec<f32> = t.to_dtype(DType::F32)?.flatten_all()?.to_vec1()?;
    let per = 3 * h * w;
    (0..n)
        .map(|i| Frame::from_data(w as u32, h as u32, flat[i * per..(i + 1) * per].to_vec()).map_err(Error::from))
        .collect()
}

pub fn tensor_to_frame(t: &Tensor) -> Result<Frame> {
    let t = if t.rank() == 3 { t.unsqueeze(0)? } else { t.clone() };
    let mut frames = tensor_to_frames(&t)?;
    if frames.len() != 1 {
        return Err(Error::ShapeMismatch(format!("expected one frame, got {}", frames.len())));
    }
    Ok(frames.remove(0))
}

pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

/// Checks `x` is `N × c × H × W` at the given spatial size.
pub fn expect_image(x: &Tensor, c: usize, size: (u32, u32), what: &str) -> Result<()> {
    let dims = x.dims();
    let ok = dims.len() == 4 && dims[1] == c && dims[2] == size.1 as usize && dims[3] == size.0 as usize;
    if ok {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(format!(
            "{what}: expected N×{c}×{}×{}, got {dims:?}",
            size.1, size.0
        )))
    }
}
