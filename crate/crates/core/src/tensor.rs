//! Dense `channels × height × width` tensors and the differentiable
//! primitives the segmentation network is built from.
//!
//! Every forward op has a matching backward op returning exact gradients.
//! Convolution is cross-correlation with zero "same" padding, lowered to
//! matrix products over horizontal bands of the image so the im2col buffer
//! stays small for full-size frames.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::gemm::{gemm, MatMut, MatRef};
use crate::math;
use crate::{Error, Result};

/// Dense 3-D array, channel-major then row-major.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape())
            .finish_non_exhaustive()
    }
}

/// `(channels, height, width)`.
pub type Shape = (usize, usize, usize);

struct ShapeDisplay(Shape);

impl fmt::Display for ShapeDisplay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}×{}×{}", self.0 .0, self.0 .1, self.0 .2)
    }
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Tensor {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(Error::shape(
                "Tensor::from_vec",
                format_args!("{expected} elements"),
                format_args!("{}", data.len()),
            ));
        }
        Ok(Tensor {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        Tensor {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        (self.channels, self.height, self.width)
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    /// Pixels per channel.
    #[inline]
    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, value: f64) {
        self.data[(c * self.height + y) * self.width + x] = value;
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn expect_shape(&self, op: &'static str, shape: Shape) -> Result<()> {
        if self.shape() != shape {
            return Err(Error::shape(
                op,
                ShapeDisplay(shape),
                ShapeDisplay(self.shape()),
            ));
        }
        Ok(())
    }
}

/// Geometry of a square same-padded convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Result<Self> {
        if kernel != 1 && kernel != 3 {
            return Err(Error::Config(alloc::format!(
                "kernel size must be 1 or 3, got {kernel}"
            )));
        }
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::Config(
                "convolution needs at least one channel".into(),
            ));
        }
        Ok(ConvSpec {
            in_channels,
            out_channels,
            kernel,
        })
    }

    /// Inputs feeding one output element.
    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn weights_len(&self) -> usize {
        self.out_channels * self.fan_in()
    }

    fn check(&self, op: &'static str, weights: &[f64], bias: Option<&[f64]>) -> Result<()> {
        if self.kernel != 1 && self.kernel != 3 {
            return Err(Error::Config(alloc::format!(
                "kernel size must be 1 or 3, got {}",
                self.kernel
            )));
        }
        if weights.len() != self.weights_len() {
            return Err(Error::shape(
                op,
                format_args!(
                    "{}×{}×{k}×{k} weights",
                    self.out_channels,
                    self.in_channels,
                    k = self.kernel
                ),
                format_args!("{} weights", weights.len()),
            ));
        }
        if let Some(bias) = bias {
            if bias.len() != self.out_channels {
                return Err(Error::shape(
                    op,
                    format_args!("{} biases", self.out_channels),
                    format_args!("{}", bias.len()),
                ));
            }
        }
        Ok(())
    }
}

/// Gradients of a convolution with respect to its input and parameters.
#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

// Upper bound on im2col buffer elements per band (2 MiB of f64).
const BAND_BUDGET: usize = 1 << 18;

fn band_rows(spec: &ConvSpec, height: usize, width: usize) -> usize {
    let per_row = spec.fan_in() * width.max(1);
    (BAND_BUDGET / per_row).clamp(1, height.max(1))
}

/// Fills `cols` (fan_in × rows·width) with the zero-padded 3×3 neighbourhoods
/// of rows `y0..y0+rows`.
fn im2col3(input: &Tensor, y0: usize, rows: usize, cols: &mut [f64]) {
    let (c_in, h, w) = input.shape();
    let n = rows * w;
    for ci in 0..c_in {
        let plane = input.channel(ci);
        for ky in 0..3 {
            for kx in 0..3 {
                let r = (ci * 3 + ky) * 3 + kx;
                let dst_row = &mut cols[r * n..(r + 1) * n];
                for yy in 0..rows {
                    let dst = &mut dst_row[yy * w..(yy + 1) * w];
                    let sy = (y0 + yy + ky) as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            dst[0] = 0.0;
                            dst[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => dst.copy_from_slice(src),
                        _ => {
                            dst[..w - 1].copy_from_slice(&src[1..]);
                            dst[w - 1] = 0.0;
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col3`]: scatters `cols` back onto `grad` rows `y0..y0+rows`.
fn col2im3(cols: &[f64], y0: usize, rows: usize, grad: &mut Tensor) {
    let (c_in, h, w) = grad.shape();
    let n = rows * w;
    for ci in 0..c_in {
        let plane = grad.channel_mut(ci);
        for ky in 0..3 {
            for kx in 0..3 {
                let r = (ci * 3 + ky) * 3 + kx;
                let src_row = &cols[r * n..(r + 1) * n];
                for yy in 0..rows {
                    let sy = (y0 + yy + ky) as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &src_row[yy * w..(yy + 1) * w];
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => dst[..w - 1]
                            .iter_mut()
                            .zip(&src[1..])
                            .for_each(|(d, s)| *d += s),
                        1 => dst.iter_mut().zip(src).for_each(|(d, s)| *d += s),
                        _ => dst[1..]
                            .iter_mut()
                            .zip(&src[..w - 1])
                            .for_each(|(d, s)| *d += s),
                    }
                }
            }
        }
    }
}

/// Same-padded cross-correlation plus bias.
///
/// `weights` is laid out `[out][in][ky][kx]`.
pub fn conv2d_forward(
    input: &Tensor,
    weights: &[f64],
    bias: &[f64],
    spec: &ConvSpec,
) -> Result<Tensor> {
    spec.check("conv2d_forward", weights, Some(bias))?;
    let (_, h, w) = input.shape();
    input.expect_shape("conv2d_forward", (spec.in_channels, h, w))?;
    let hw = h * w;
    let mut out = Tensor::zeros(spec.out_channels, h, w);
    for (o, &b) in bias.iter().enumerate() {
        out.channel_mut(o).fill(b);
    }
    if hw == 0 {
        return Ok(out);
    }
    let w_mat = MatRef::row_major(weights, spec.out_channels, spec.fan_in());

    if spec.kernel == 1 {
        gemm(
            1.0,
            w_mat,
            MatRef::row_major(input.data(), spec.in_channels, hw),
            1.0,
            MatMut::row_major(out.data_mut(), spec.out_channels, hw),
        );
        return Ok(out);
    }

    let band = band_rows(spec, h, w);
    let mut cols = vec![0.0; spec.fan_in() * band * w];
    let mut y0 = 0;
    while y0 < h {
        let rows = band.min(h - y0);
        let n = rows * w;
        let cols = &mut cols[..spec.fan_in() * n];
        im2col3(input, y0, rows, cols);
        gemm(
            1.0,
            w_mat,
            MatRef::row_major(cols, spec.fan_in(), n),
            1.0,
            MatMut {
                data: &mut out.data_mut()[y0 * w..],
                rows: spec.out_channels,
                cols: n,
                row_stride: hw,
                col_stride: 1,
            },
        );
        y0 += rows;
    }
    Ok(out)
}

/// Backward pass of [`conv2d_forward`].
pub fn conv2d_backward(
    grad_out: &Tensor,
    cached_input: &Tensor,
    weights: &[f64],
    spec: &ConvSpec,
) -> Result<ConvGrads> {
    spec.check("conv2d_backward", weights, None)?;
    let (_, h, w) = cached_input.shape();
    cached_input.expect_shape("conv2d_backward", (spec.in_channels, h, w))?;
    grad_out.expect_shape("conv2d_backward", (spec.out_channels, h, w))?;
    let hw = h * w;
    let fan_in = spec.fan_in();

    let bias: Vec<f64> = (0..spec.out_channels)
        .map(|o| grad_out.channel(o).iter().sum())
        .collect();
    let mut grad_w = vec![0.0; spec.weights_len()];
    let mut grad_in = Tensor::zeros(spec.in_channels, h, w);
    if hw == 0 {
        return Ok(ConvGrads {
            input: grad_in,
            weights: grad_w,
            bias,
        });
    }
    let w_mat = MatRef::row_major(weights, spec.out_channels, fan_in);

    if spec.kernel == 1 {
        let g = MatRef::row_major(grad_out.data(), spec.out_channels, hw);
        gemm(
            1.0,
            g,
            MatRef::row_major(cached_input.data(), spec.in_channels, hw).t(),
            0.0,
            MatMut::row_major(&mut grad_w, spec.out_channels, fan_in),
        );
        gemm(
            1.0,
            w_mat.t(),
            g,
            0.0,
            MatMut::row_major(grad_in.data_mut(), spec.in_channels, hw),
        );
        return Ok(ConvGrads {
            input: grad_in,
            weights: grad_w,
            bias,
        });
    }

    let band = band_rows(spec, h, w);
    let mut cols = vec![0.0; fan_in * band * w];
    let mut grad_cols = vec![0.0; fan_in * band * w];
    let mut y0 = 0;
    while y0 < h {
        let rows = band.min(h - y0);
        let n = rows * w;
        let cols = &mut cols[..fan_in * n];
        let grad_cols = &mut grad_cols[..fan_in * n];
        im2col3(cached_input, y0, rows, cols);
        let g_band = MatRef {
            data: &grad_out.data()[y0 * w..],
            rows: spec.out_channels,
            cols: n,
            row_stride: hw,
            col_stride: 1,
        };
        gemm(
            1.0,
            g_band,
            MatRef::row_major(cols, fan_in, n).t(),
            1.0,
            MatMut::row_major(&mut grad_w, spec.out_channels, fan_in),
        );
        gemm(
            1.0,
            w_mat.t(),
            g_band,
            0.0,
            MatMut::row_major(grad_cols, fan_in, n),
        );
        col2im3(grad_cols, y0, rows, &mut grad_in);
        y0 += rows;
    }
    Ok(ConvGrads {
        input: grad_in,
        weights: grad_w,
        bias,
    })
}

pub fn relu_forward(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

/// Passes gradient only where the cached input was strictly positive.
pub fn relu_backward(grad_out: &Tensor, cached_input: &Tensor) -> Result<Tensor> {
    grad_out.expect_shape("relu_backward", cached_input.shape())?;
    let mut grad = grad_out.clone();
    grad.data_mut()
        .iter_mut()
        .zip(cached_input.data())
        .for_each(|(g, &x)| {
            if x <= 0.0 {
                *g = 0.0;
            }
        });
    Ok(grad)
}

/// Default variance guard for [`channelnorm_forward`].
pub const NORM_EPS: f64 = 1e-5;

/// State kept by [`channelnorm_forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct NormCache {
    normalized: Tensor,
    inv_std: Vec<f64>,
    floored: Vec<bool>,
}

impl NormCache {
    pub fn output(&self) -> &Tensor {
        &self.normalized
    }

    pub fn inv_std(&self) -> &[f64] {
        &self.inv_std
    }
}

/// Normalizes each channel over its pixels to zero mean and unit
/// (population) variance: `(x − μ) / sqrt(max(σ², eps))`.
///
/// Channels with σ² ≥ eps come out with variance 1 to rounding; flatter
/// channels are only centred and scaled by `1/sqrt(eps)`.
pub fn channelnorm_forward(input: &Tensor, eps: f64) -> (Tensor, NormCache) {
    let mut out = input.clone();
    let n = input.plane_len();
    let mut inv_std = Vec::with_capacity(input.channels());
    let mut floored = Vec::with_capacity(input.channels());
    for c in 0..input.channels() {
        let plane = out.channel_mut(c);
        if n == 0 {
            inv_std.push(0.0);
            floored.push(true);
            continue;
        }
        let mean = plane.iter().sum::<f64>() / n as f64;
        let var = plane.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let s = 1.0 / math::sqrt(var.max(eps));
        plane.iter_mut().for_each(|v| *v = (*v - mean) * s);
        inv_std.push(s);
        floored.push(var < eps);
    }
    let cache = NormCache {
        normalized: out.clone(),
        inv_std,
        floored,
    };
    (out, cache)
}

/// Exact Jacobian-transpose of [`channelnorm_forward`]:
/// `dx = s · (g − mean(g) − y · mean(g·y))` per channel, without the last
/// term where the variance floor was active.
pub fn channelnorm_backward(grad_out: &Tensor, cache: &NormCache) -> Result<Tensor> {
    grad_out.expect_shape("channelnorm_backward", cache.normalized.shape())?;
    let n = grad_out.plane_len();
    let mut grad = grad_out.clone();
    if n == 0 {
        return Ok(grad);
    }
    for (c, (&s, &floored)) in cache.inv_std.iter().zip(&cache.floored).enumerate() {
        let y = cache.normalized.channel(c);
        let g = grad.channel_mut(c);
        let mean_g = g.iter().sum::<f64>() / n as f64;
        let mean_gy = if floored {
            0.0
        } else {
            g.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / n as f64
        };
        g.iter_mut()
            .zip(y)
            .for_each(|(gi, &yi)| *gi = s * (*gi - mean_g - yi * mean_gy));
    }
    Ok(grad)
}
