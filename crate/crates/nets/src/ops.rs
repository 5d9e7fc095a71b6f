//! Patch extraction kernels backing the convolutions.
//!
//! A convolution is `W · im2col(x)` per image; both gradients are computed
//! from the same unfolded patches without materializing any transposes.

use candle_core::{CpuStorage, CustomOp2, Layout, Shape, Tensor, WithDType};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Geometry {
    pub fn out_size(&self) -> (usize, usize) {
        (
            (self.height + 2 * self.pad - self.kernel) / self.stride + 1,
            (self.width + 2 * self.pad - self.kernel) / self.stride + 1,
        )
    }

    fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }
}

/// Output positions `[lo, hi)` whose tap `t` lands inside an axis of length `n`.
#[inline]
fn valid(t: usize, g: &Geometry, n: usize, out: usize) -> (usize, usize) {
    let (p, s) = (g.pad as isize, g.stride as isize);
    let first = p - t as isize;
    let lo = if first > 0 { (first + s - 1) / s } else { 0 };
    let last = n as isize - 1 + p - t as isize;
    let hi = if last < 0 { 0 } else { (last / s + 1).min(out as isize) };
    (lo as usize, (hi.max(lo as isize)) as usize)
}

pub trait Elem: Copy + Default + std::ops::AddAssign + WithDType + 'static {
    const ONE: Self;
}

impl Elem for f32 {
    const ONE: Self = 1.0;
}

impl Elem for f64 {
    const ONE: Self = 1.0;
}

/// Patches of one `C×H×W` image into `dst`, laid out `(C·k·k)×(Ho·Wo)`.
fn unfold_into<T: Elem>(x: &[T], g: &Geometry, dst: &mut [T]) {
    let (ho, wo) = g.out_size();
    let plane = g.height * g.width;
    let zero = T::default();
    let mut row = 0;
    for c in 0..g.channels {
        let xin = &x[c * plane..][..plane];
        for ky in 0..g.kernel {
            let (ylo, yhi) = valid(ky, g, g.height, ho);
            for kx in 0..g.kernel {
                let (xlo, xhi) = valid(kx, g, g.width, wo);
                let d = &mut dst[row * ho * wo..][..ho * wo];
                d[..ylo * wo].fill(zero);
                d[yhi * wo..].fill(zero);
                for oy in ylo..yhi {
                    let iy = oy * g.stride + ky - g.pad;
                    let line = &xin[iy * g.width..][..g.width];
                    let out = &mut d[oy * wo..][..wo];
                    out[..xlo].fill(zero);
                    out[xhi..].fill(zero);
                    if xlo < xhi {
                        let ix0 = xlo * g.stride + kx - g.pad;
                        if g.stride == 1 {
                            out[xlo..xhi].copy_from_slice(&line[ix0..ix0 + (xhi - xlo)]);
                        } else {
                            for (v, &src) in out[xlo..xhi].iter_mut().zip(line[ix0..].iter().step_by(g.stride)) {
                                *v = src;
                            }
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`unfold_into`]: adds every patch entry back to its pixel.
fn fold_into<T: Elem>(cols: &[T], g: &Geometry, out: &mut [T]) {
    let (ho, wo) = g.out_size();
    let plane = g.height * g.width;
    let mut row = 0;
    for c in 0..g.channels {
        let xout = &mut out[c * plane..][..plane];
        for ky in 0..g.kernel {
            let (ylo, yhi) = valid(ky, g, g.height, ho);
            for kx in 0..g.kernel {
                let (xlo, xhi) = valid(kx, g, g.width, wo);
                let s = &cols[row * ho * wo..][..ho * wo];
                if xlo < xhi {
                    let ix0 = xlo * g.stride + kx - g.pad;
                    for oy in ylo..yhi {
                        let iy = oy * g.stride + ky - g.pad;
                        let line = &mut xout[iy * g.width..][..g.width];
                        let src = &s[oy * wo + xlo..oy * wo + xhi];
                        for (v, &d) in line[ix0..].iter_mut().step_by(g.stride).zip(src) {
                            *v += d;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Row-major view of a matrix slice: `(data, row stride, column stride)`.
type View<'a, T> = (&'a [T], isize, isize);

/// `dst (+)= a · b` with `a` `m×k`, `b` `k×n`, `dst` `m×n` at row stride `dst_rs`.
#[allow(clippy::too_many_arguments)]
fn gemm_into<T: Elem>(dst: &mut [T], dst_rs: usize, a: View<T>, b: View<T>, m: usize, n: usize, k: usize, acc: bool) {
    let span = |rs: isize, cs: isize, r: usize, c: usize| (r.max(1) - 1) * rs as usize + (c.max(1) - 1) * cs as usize + 1;
    assert!(dst.len() >= span(dst_rs as isize, 1, m, n));
    assert!(a.0.len() >= span(a.1, a.2, m, k) && b.0.len() >= span(b.1, b.2, k, n));
    // SAFETY: the assertions bound every element addressed through these strides.
    unsafe {
        gemm::gemm(
            m,
            n,
            k,
            dst.as_mut_ptr(),
            1,
            dst_rs as isize,
            acc,
            a.0.as_ptr(),
            a.2,
            a.1,
            b.0.as_ptr(),
            b.2,
            b.1,
            T::ONE,
            T::ONE,
            false,
            false,
            false,
            gemm::Parallelism::None,
        )
    }
}

/// Column block width for products with a short inner dimension, which the
/// GEMM kernels handle poorly on wide outputs.
const PANEL: usize = 256;

fn contiguous<'a, T: WithDType>(s: &'a [T], l: &Layout) -> candle_core::Result<&'a [T]> {
    match l.contiguous_offsets() {
        Some((a, b)) => Ok(&s[a..b]),
        None => candle_core::bail!("convolution kernels need contiguous input"),
    }
}

fn conv_fwd<T: Elem>(x: &[T], w: &[T], n: usize, cout: usize, g: &Geometry) -> Vec<T> {
    let (ho, wo) = g.out_size();
    let hw = ho * wo;
    let plane = g.channels * g.height * g.width;
    let mut cols = vec![T::default(); g.rows() * hw];
    let mut out = vec![T::default(); n * cout * hw];
    for b in 0..n {
        unfold_into(&x[b * plane..][..plane], g, &mut cols);
        let r = g.rows() as isize;
        gemm_into(&mut out[b * cout * hw..][..cout * hw], hw, (w, r, 1), (&cols, hw as isize, 1), cout, hw, g.rows(), false);
    }
    out
}

fn conv_grad_input<T: Elem>(grad: &[T], w: &[T], n: usize, cout: usize, g: &Geometry) -> Vec<T> {
    let (ho, wo) = g.out_size();
    let hw = ho * wo;
    let plane = g.channels * g.height * g.width;
    let mut cols = vec![T::default(); g.rows() * hw];
    let mut out = vec![T::default(); n * plane];
    for b in 0..n {
        let gb = &grad[b * cout * hw..][..cout * hw];
        for j0 in (0..hw).step_by(PANEL) {
            let n = PANEL.min(hw - j0);
            gemm_into(&mut cols[j0..], hw, (w, 1, g.rows() as isize), (&gb[j0..], hw as isize, 1), g.rows(), n, cout, false);
        }
        fold_into(&cols, g, &mut out[b * plane..][..plane]);
    }
    out
}

fn conv_grad_weight<T: Elem>(x: &[T], grad: &[T], n: usize, cout: usize, g: &Geometry) -> Vec<T> {
    let (ho, wo) = g.out_size();
    let hw = ho * wo;
    let plane = g.channels * g.height * g.width;
    let mut cols = vec![T::default(); g.rows() * hw];
    let mut out = vec![T::default(); cout * g.rows()];
    for b in 0..n {
        unfold_into(&x[b * plane..][..plane], g, &mut cols);
        let gb = &grad[b * cout * hw..][..cout * hw];
        gemm_into(&mut out, g.rows(), (gb, hw as isize, 1), (&cols, 1, hw as isize), cout, g.rows(), hw, b > 0);
    }
    out
}

fn dispatch<F32, F64>(
    s1: &CpuStorage,
    l1: &Layout,
    s2: &CpuStorage,
    l2: &Layout,
    f32_fn: F32,
    f64_fn: F64,
) -> candle_core::Result<CpuStorage>
where
    F32: FnOnce(&[f32], &[f32]) -> Vec<f32>,
    F64: FnOnce(&[f64], &[f64]) -> Vec<f64>,
{
    match (s1, s2) {
        (CpuStorage::F32(a), CpuStorage::F32(b)) => Ok(CpuStorage::F32(f32_fn(contiguous(a, l1)?, contiguous(b, l2)?))),
        (CpuStorage::F64(a), CpuStorage::F64(b)) => Ok(CpuStorage::F64(f64_fn(contiguous(a, l1)?, contiguous(b, l2)?))),
        _ => candle_core::bail!("convolution supports matching f32 or f64 operands"),
    }
}

/// `(x, w) → y`.
struct Conv(Geometry);
/// `(∂y, w) → ∂x`.
struct ConvGradInput(Geometry);
/// `(x, ∂y) → ∂w`.
struct ConvGradWeight(Geometry);

impl CustomOp2 for Conv {
    fn name(&self) -> &'static str {
        "conv"
    }

    fn cpu_fwd(&self, s1: &CpuStorage, l1: &Layout, s2: &CpuStorage, l2: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let g = &self.0;
        let (n, c, h, w) = l1.shape().dims4()?;
        let (cout, cin, k, k2) = l2.shape().dims4()?;
        if (c, h, w) != (g.channels, g.height, g.width) || cin != c || k != g.kernel || k2 != k {
            candle_core::bail!("conv geometry {g:?} does not match {:?} * {:?}", l1.shape(), l2.shape());
        }
        let (ho, wo) = g.out_size();
        let out = dispatch(s1, l1, s2, l2, |x, wt| conv_fwd(x, wt, n, cout, g), |x, wt| conv_fwd(x, wt, n, cout, g))?;
        Ok((out, Shape::from((n, cout, ho, wo))))
    }

    fn bwd(&self, x: &Tensor, w: &Tensor, _res: &Tensor, grad: &Tensor) -> candle_core::Result<(Option<Tensor>, Option<Tensor>)> {
        let grad = grad.contiguous()?;
        let gx = grad.apply_op2_no_bwd(w, &ConvGradInput(self.0))?;
        let gw = x.apply_op2_no_bwd(&grad, &ConvGradWeight(self.0))?;
        Ok((Some(gx), Some(gw)))
    }
}

impl CustomOp2 for ConvGradInput {
    fn name(&self) -> &'static str {
        "conv-grad-input"
    }

    fn cpu_fwd(&self, s1: &CpuStorage, l1: &Layout, s2: &CpuStorage, l2: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let g = &self.0;
        let (n, cout, _, _) = l1.shape().dims4()?;
        let out = dispatch(
            s1,
            l1,
            s2,
            l2,
            |gr, wt| conv_grad_input(gr, wt, n, cout, g),
            |gr, wt| conv_grad_input(gr, wt, n, cout, g),
        )?;
        Ok((out, Shape::from((n, g.channels, g.height, g.width))))
    }
}

impl CustomOp2 for ConvGradWeight {
    fn name(&self) -> &'static str {
        "conv-grad-weight"
    }

    fn cpu_fwd(&self, s1: &CpuStorage, l1: &Layout, s2: &CpuStorage, l2: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let g = &self.0;
        let (n, cout, _, _) = l2.shape().dims4()?;
        let out = dispatch(
            s1,
            l1,
            s2,
            l2,
            |x, gr| conv_grad_weight(x, gr, n, cout, g),
            |x, gr| conv_grad_weight(x, gr, n, cout, g),
        )?;
        Ok((out, Shape::from((cout, g.channels, g.kernel, g.kernel))))
    }
}

/// Zero-padded 2-D cross-correlation, `weight` shaped `Cout×C×k×k`.
pub fn conv2d(x: &Tensor, weight: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    let (_, c, h, w) = x.dims4()?;
    let (_, _, k, _) = weight.dims4()?;
    if h + 2 * pad < k || w + 2 * pad < k {
        return Err(crate::error::Error::ShapeMismatch(format!("{h}×{w} input smaller than a {k}×{k} kernel")));
    }
    let g = Geometry {
        channels: c,
        height: h,
        width: w,
        kernel: k,
        stride,
        pad,
    };
    Ok(x.contiguous()?.apply_op2(&weight.contiguous()?, Conv(g))?)
}
