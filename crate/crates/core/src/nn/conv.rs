//! Zero-padded volumetric cross-correlation and its adjoints.
//!
//! Every convolution here is one routine parameterized by the kernel's tap
//! extent along each axis: a full 3x3x3 kernel, an axis-aligned 1D kernel
//! (`[3,1,1]` for x) or a planar 2D kernel (`[1,3,3]` for the plane normal to
//! x). Padding is `taps / 2` on each axis, so stride 1 preserves the spatial
//! shape and stride `s` yields `ceil(n / s)` outputs.
//!
//! All three products (forward, input adjoint, weight gradient) are matrix
//! multiplications against the unfolded input (`im2col`); the GEMM runs on
//! one thread with a fixed blocking order, so results are reproducible.

use rayon::prelude::*;

use super::tensor::{Axis, Shape, Tensor};
use crate::error::{Error, Result};

/// Weight-array layout `c_out x c_in x taps[0] x taps[1] x taps[2]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct KernelShape {
    pub c_out: usize,
    pub c_in: usize,
    pub taps: [usize; 3],
}

impl KernelShape {
    pub fn full(c_out: usize, c_in: usize, k: usize) -> Self {
        KernelShape { c_out, c_in, taps: [k; 3] }
    }

    pub fn pointwise(c_out: usize, c_in: usize) -> Self {
        KernelShape::full(c_out, c_in, 1)
    }

    /// 1D kernel of length `k` along `axis`.
    pub fn axis(c_out: usize, c_in: usize, axis: Axis, k: usize) -> Self {
        let mut taps = [1; 3];
        taps[axis.index()] = k;
        KernelShape { c_out, c_in, taps }
    }

    /// `k x k` kernel spanning the plane orthogonal to `normal`.
    pub fn plane(c_out: usize, c_in: usize, normal: Axis, k: usize) -> Self {
        let mut taps = [k; 3];
        taps[normal.index()] = 1;
        KernelShape { c_out, c_in, taps }
    }

    pub fn taps_len(&self) -> usize {
        self.taps.iter().product()
    }

    pub fn len(&self) -> usize {
        self.c_out * self.c_in * self.taps_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, co: usize, ci: usize, t: [usize; 3]) -> usize {
        (((co * self.c_in + ci) * self.taps[0] + t[0]) * self.taps[1] + t[1]) * self.taps[2] + t[2]
    }

    fn pad(&self) -> [usize; 3] {
        [self.taps[0] / 2, self.taps[1] / 2, self.taps[2] / 2]
    }
}

pub fn strided_dims(dims: [usize; 3], stride: usize) -> [usize; 3] {
    dims.map(|n| n.div_ceil(stride))
}

/// Output indices `o` with `0 <= o*stride + t - pad < n_in`.
#[inline]
fn valid_range(n_in: usize, n_out: usize, stride: usize, t: usize, pad: usize) -> (usize, usize) {
    let lo = if t >= pad { 0 } else { (pad - t).div_ceil(stride) };
    let reach = n_in as isize - 1 + pad as isize - t as isize;
    let hi = if reach < 0 { 0 } else { (reach as usize / stride + 1).min(n_out) };
    (lo, hi.max(lo))
}

struct Plan {
    kernel: KernelShape,
    stride: usize,
    in_dims: [usize; 3],
    out_dims: [usize; 3],
}

impl Plan {
    fn new(kernel: KernelShape, stride: usize, in_dims: [usize; 3], out_dims: [usize; 3]) -> Result<Plan> {
        if stride == 0 {
            return Err(Error::Shape("stride must be positive".into()));
        }
        if strided_dims(in_dims, stride) != out_dims {
            return Err(Error::Shape(format!(
                "input {in_dims:?} does not map to output {out_dims:?} at stride {stride}"
            )));
        }
        Ok(Plan { kernel, stride, in_dims, out_dims })
    }

    /// Visits every tap with its valid output ranges.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut([usize; 3], [(usize, usize); 3])) {
        let pad = self.kernel.pad();
        for tx in 0..self.kernel.taps[0] {
            let rx = valid_range(self.in_dims[0], self.out_dims[0], self.stride, tx, pad[0]);
            for ty in 0..self.kernel.taps[1] {
                let ry = valid_range(self.in_dims[1], self.out_dims[1], self.stride, ty, pad[1]);
                for tz in 0..self.kernel.taps[2] {
                    let rz = valid_range(self.in_dims[2], self.out_dims[2], self.stride, tz, pad[2]);
                    f([tx, ty, tz], [rx, ry, rz]);
                }
            }
        }
    }
}

/// Unfolds `input` into a `(c_in * taps) x out_voxels` matrix whose row
/// `(ci, t)` holds `inp[ci][o*s + t - pad]` (zero outside the grid).
fn im2col(input: &Tensor, plan: &Plan) -> Vec<f64> {
    let s = plan.stride;
    let pad = plan.kernel.pad();
    let [_, oy_n, oz_n] = plan.out_dims;
    let [_, iy_n, iz_n] = plan.in_dims;
    let n_out = Shape::new(1, plan.out_dims).voxels();
    let taps = plan.kernel.taps_len();
    let mut col = vec![0.0; plan.kernel.c_in * taps * n_out];
    col.par_chunks_mut(taps * n_out).enumerate().for_each(|(ci, block)| {
        let inp = input.channel(ci);
        let mut ti = 0;
        plan.for_each_tap(|t, r| {
            let row = &mut block[ti * n_out..(ti + 1) * n_out];
            ti += 1;
            for ox in r[0].0..r[0].1 {
                let ix = ox * s + t[0] - pad[0];
                for oy in r[1].0..r[1].1 {
                    let iy = oy * s + t[1] - pad[1];
                    let orow = &mut row[(ox * oy_n + oy) * oz_n..(ox * oy_n + oy + 1) * oz_n];
                    let irow = &inp[(ix * iy_n + iy) * iz_n..(ix * iy_n + iy + 1) * iz_n];
                    for oz in r[2].0..r[2].1 {
                        orow[oz] = irow[oz * s + t[2] - pad[2]];
                    }
                }
            }
        });
    });
    col
}

/// Adjoint of [`im2col`]: scatter-adds every column entry back onto the
/// input grid.
fn col2im(col: &[f64], plan: &Plan) -> Tensor {
    let s = plan.stride;
    let pad = plan.kernel.pad();
    let [_, oy_n, oz_n] = plan.out_dims;
    let [_, iy_n, iz_n] = plan.in_dims;
    let n_out = Shape::new(1, plan.out_dims).voxels();
    let taps = plan.kernel.taps_len();
    let mut out = Tensor::zeros(Shape::new(plan.kernel.c_in, plan.in_dims));
    let nv_in = Shape::new(1, plan.in_dims).voxels();
    out.data_mut().par_chunks_mut(nv_in).enumerate().for_each(|(ci, inp)| {
        let block = &col[ci * taps * n_out..(ci + 1) * taps * n_out];
        let mut ti = 0;
        plan.for_each_tap(|t, r| {
            let row = &block[ti * n_out..(ti + 1) * n_out];
            ti += 1;
            for ox in r[0].0..r[0].1 {
                let ix = ox * s + t[0] - pad[0];
                for oy in r[1].0..r[1].1 {
                    let iy = oy * s + t[1] - pad[1];
                    let orow = &row[(ox * oy_n + oy) * oz_n..(ox * oy_n + oy + 1) * oz_n];
                    let irow = &mut inp[(ix * iy_n + iy) * iz_n..(ix * iy_n + iy + 1) * iz_n];
                    for oz in r[2].0..r[2].1 {
                        irow[oz * s + t[2] - pad[2]] += orow[oz];
                    }
                }
            }
        });
    });
    out
}

/// Row-major `c (m x n) = a (m x k) * b (k x n)`, with either operand
/// optionally read transposed from its stored row-major form.
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices have exactly the extents described by the strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn check_weights(kernel: &KernelShape, weights: &[f64], bias: Option<&[f64]>) -> Result<()> {
    if weights.len() != kernel.len() {
        return Err(Error::Shape(format!(
            "{} weights for kernel {:?} ({} expected)",
            weights.len(),
            kernel,
            kernel.len()
        )));
    }
    if let Some(b) = bias {
        if b.len() != kernel.c_out {
            return Err(Error::Shape(format!("bias of {} for {} outputs", b.len(), kernel.c_out)));
        }
    }
    Ok(())
}

/// Forward correlation with any kernel extent. `input` must have
/// `kernel.c_in` channels.
pub fn conv3d(
    input: &Tensor,
    weights: &[f64],
    kernel: KernelShape,
    bias: Option<&[f64]>,
    stride: usize,
) -> Result<Tensor> {
    check_weights(&kernel, weights, bias)?;
    if input.channels() != kernel.c_in {
        return Err(Error::Shape(format!(
            "conv expects {} input channels, got {}",
            kernel.c_in,
            input.channels()
        )));
    }
    let plan = Plan::new(kernel, stride, input.dims(), strided_dims(input.dims(), stride))?;
    let n_out = Shape::new(1, plan.out_dims).voxels();
    let col = im2col(input, &plan);
    let mut out = Tensor::zeros(Shape::new(kernel.c_out, plan.out_dims));
    gemm(kernel.c_out, kernel.c_in * kernel.taps_len(), n_out, weights, false, &col, false, out.data_mut());
    if let Some(b) = bias {
        out.data_mut().chunks_mut(n_out).zip(b).for_each(|(c, &b)| c.iter_mut().for_each(|v| *v += b));
    }
    Ok(out)
}

/// Applies the adjoint of the stride-`stride` correlation: maps a tensor on
/// the coarse grid (`kernel.c_out` channels) back to `in_dims` with
/// `kernel.c_in` channels.
fn correlate_adjoint(
    grad_out: &Tensor,
    weights: &[f64],
    kernel: KernelShape,
    stride: usize,
    in_dims: [usize; 3],
) -> Result<Tensor> {
    if grad_out.channels() != kernel.c_out {
        return Err(Error::Shape(format!(
            "adjoint expects {} channels, got {}",
            kernel.c_out,
            grad_out.channels()
        )));
    }
    let plan = Plan::new(kernel, stride, in_dims, grad_out.dims())?;
    let n_out = Shape::new(1, plan.out_dims).voxels();
    let rows = kernel.c_in * kernel.taps_len();
    let mut col = vec![0.0; rows * n_out];
    gemm(rows, kernel.c_out, n_out, weights, true, grad_out.data(), false, &mut col);
    Ok(col2im(&col, &plan))
}

fn correlate_weight_grad(grad_out: &Tensor, input: &Tensor, kernel: KernelShape, stride: usize) -> Result<Vec<f64>> {
    let plan = Plan::new(kernel, stride, input.dims(), grad_out.dims())?;
    let n_out = Shape::new(1, plan.out_dims).voxels();
    let col = im2col(input, &plan);
    let mut gw = vec![0.0; kernel.len()];
    gemm(kernel.c_out, n_out, kernel.c_in * kernel.taps_len(), grad_out.data(), false, &col, true, &mut gw);
    Ok(gw)
}

fn channel_sums(t: &Tensor) -> Vec<f64> {
    (0..t.channels()).map(|c| t.channel(c).iter().sum()).collect()
}

/// Gradients of a convolution with respect to its three inputs.
#[derive(Clone, Debug)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

pub fn conv3d_backward(
    input: &Tensor,
    grad_out: &Tensor,
    weights: &[f64],
    kernel: KernelShape,
    stride: usize,
) -> Result<ConvGrads> {
    check_weights(&kernel, weights, None)?;
    Ok(ConvGrads {
        input: correlate_adjoint(grad_out, weights, kernel, stride, input.dims())?,
        weights: correlate_weight_grad(grad_out, input, kernel, stride)?,
        bias: channel_sums(grad_out),
    })
}

/// Transposed convolution: the exact adjoint of [`conv3d`] at the same
/// stride, plus a bias. `kernel` describes the forward (downsampling)
/// correlation, so the input here has `kernel.c_out` channels and the output
/// `kernel.c_in`. `out_dims` defaults to `dims * stride`; any size that
/// strides back down to the input's dims is accepted.
pub fn conv3d_transposed(
    input: &Tensor,
    weights: &[f64],
    kernel: KernelShape,
    bias: Option<&[f64]>,
    stride: usize,
    out_dims: Option<[usize; 3]>,
) -> Result<Tensor> {
    check_weights(&kernel, weights, None)?;
    if let Some(b) = bias {
        if b.len() != kernel.c_in {
            return Err(Error::Shape(format!("bias of {} for {} outputs", b.len(), kernel.c_in)));
        }
    }
    let out_dims = out_dims.unwrap_or(input.dims().map(|n| n * stride));
    let mut out = correlate_adjoint(input, weights, kernel, stride, out_dims)?;
    if let Some(b) = bias {
        let nv = Shape::new(1, out_dims).voxels();
        for (c, chunk) in out.data_mut().chunks_mut(nv).enumerate() {
            chunk.iter_mut().for_each(|v| *v += b[c]);
        }
    }
    Ok(out)
}

pub fn conv3d_transposed_backward(
    input: &Tensor,
    grad_out: &Tensor,
    weights: &[f64],
    kernel: KernelShape,
    stride: usize,
) -> Result<ConvGrads> {
    check_weights(&kernel, weights, None)?;
    Ok(ConvGrads {
        input: conv3d(grad_out, weights, kernel, None, stride)?,
        weights: correlate_weight_grad(input, grad_out, kernel, stride)?,
        bias: channel_sums(grad_out),
    })
}

/// Stride-1 convolution along one axis; `weights` is `c_out x c_in x k`.
pub fn conv1d_axis(
    input: &Tensor,
    axis: Axis,
    weights: &[f64],
    c_out: usize,
    k: usize,
    bias: Option<&[f64]>,
) -> Result<Tensor> {
    conv3d(input, weights, KernelShape::axis(c_out, input.channels(), axis, k), bias, 1)
}

/// Stride-1 `k x k` convolution in the plane orthogonal to `normal`;
/// `weights` is `c_out x c_in x k x k` with the two in-plane axes in x, y, z
/// order.
pub fn conv2d_plane(
    input: &Tensor,
    normal: Axis,
    weights: &[f64],
    c_out: usize,
    k: usize,
    bias: Option<&[f64]>,
) -> Result<Tensor> {
    conv3d(input, weights, KernelShape::plane(c_out, input.channels(), normal, k), bias, 1)
}
