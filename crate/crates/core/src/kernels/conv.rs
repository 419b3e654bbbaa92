//! 2-D convolution via banded im2col and a single-precision GEMM.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Convolution weights laid out `[out_channels][in_channels][kh][kw]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvKernel {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kh: usize,
    pub kw: usize,
    pub data: Vec<f32>,
}

impl ConvKernel {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kh: usize,
        kw: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        if data.len() != out_channels * in_channels * kh * kw {
            return Err(Error::shape(
                "ConvKernel::new",
                format!(
                    "[{out_channels},{in_channels},{kh},{kw}] needs {} values, got {}",
                    out_channels * in_channels * kh * kw,
                    data.len()
                ),
            ));
        }
        Ok(Self {
            out_channels,
            in_channels,
            kh,
            kw,
            data,
        })
    }

    pub fn zeros(out_channels: usize, in_channels: usize, kh: usize, kw: usize) -> Self {
        Self {
            out_channels,
            in_channels,
            kh,
            kw,
            data: vec![0.0; out_channels * in_channels * kh * kw],
        }
    }

    #[inline]
    pub fn at(&self, o: usize, i: usize, ky: usize, kx: usize) -> f32 {
        self.data[((o * self.in_channels + i) * self.kh + ky) * self.kw + kx]
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kh, self.kw]
    }

    /// Multiply-accumulates needed to produce an `out_h × out_w` output.
    pub fn macs(&self, out_h: usize, out_w: usize) -> u64 {
        (self.out_channels * self.in_channels * self.kh * self.kw) as u64 * (out_h * out_w) as u64
    }
}

/// Output length along one axis, or `None` when the kernel does not fit.
pub fn conv_output_len(len: usize, k: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = len + 2 * padding;
    if stride == 0 || padded < k {
        return None;
    }
    Some((padded - k) / stride + 1)
}

// Upper bound on im2col scratch per band, in floats.
const BAND_BUDGET: usize = 1 << 20;

pub fn conv2d(
    input: &Tensor,
    kernel: &ConvKernel,
    bias: &[f32],
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let (c, h, w) = input.dims();
    if kernel.in_channels != c {
        return Err(Error::shape(
            "conv2d",
            format!(
                "kernel expects {} input channels but input {:?} has {c}",
                kernel.in_channels, input
            ),
        ));
    }
    if kernel.kh.is_multiple_of(2) || kernel.kw.is_multiple_of(2) {
        return Err(Error::shape(
            "conv2d",
            format!("kernel size {}x{} must be odd", kernel.kh, kernel.kw),
        ));
    }
    if stride == 0 {
        return Err(Error::invalid("conv2d stride must be >= 1"));
    }
    if bias.len() != kernel.out_channels {
        return Err(Error::shape(
            "conv2d",
            format!(
                "bias has {} entries for {} output channels",
                bias.len(),
                kernel.out_channels
            ),
        ));
    }
    let (oh, ow) = match (
        conv_output_len(h, kernel.kh, stride, padding),
        conv_output_len(w, kernel.kw, stride, padding),
    ) {
        (Some(oh), Some(ow)) => (oh, ow),
        _ => {
            return Err(Error::shape(
                "conv2d",
                format!(
                    "{}x{} kernel does not fit {h}x{w} input with padding {padding}",
                    kernel.kh, kernel.kw
                ),
            ))
        }
    };

    let k_len = c * kernel.kh * kernel.kw;
    let rows_per_band = (BAND_BUDGET / (k_len * ow).max(1)).clamp(1, oh);
    let bands: Vec<(usize, usize)> = (0..oh)
        .step_by(rows_per_band)
        .map(|r0| (r0, (r0 + rows_per_band).min(oh)))
        .collect();

    let oc = kernel.out_channels;
    let band_outputs: Vec<Vec<f32>> = bands
        .par_iter()
        .map(|&(r0, r1)| {
            let cols = im2col_band(input, kernel, stride, padding, r0, r1, ow);
            let n = (r1 - r0) * ow;
            let mut out = vec![0.0f32; oc * n];
            // SAFETY: all pointers address live buffers sized for the
            // row-major [oc, k_len] x [k_len, n] -> [oc, n] product.
            unsafe {
                matrixmultiply::sgemm(
                    oc,
                    k_len,
                    n,
                    1.0,
                    kernel.data.as_ptr(),
                    k_len as isize,
                    1,
                    cols.as_ptr(),
                    n as isize,
                    1,
                    0.0,
                    out.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
            out
        })
        .collect();

    let mut out = Tensor::zeros(oc, oh, ow);
    for (&(r0, r1), band) in bands.iter().zip(&band_outputs) {
        let n = (r1 - r0) * ow;
        for o in 0..oc {
            let dst = &mut out.channel_mut(o)[r0 * ow..r1 * ow];
            let b = bias[o];
            for (d, s) in dst.iter_mut().zip(&band[o * n..(o + 1) * n]) {
                *d = s + b;
            }
        }
    }
    Ok(out)
}

fn im2col_band(
    input: &Tensor,
    kernel: &ConvKernel,
    stride: usize,
    padding: usize,
    r0: usize,
    r1: usize,
    ow: usize,
) -> Vec<f32> {
    let (c, h, w) = input.dims();
    let n = (r1 - r0) * ow;
    let mut cols = vec![0.0f32; c * kernel.kh * kernel.kw * n];
    let mut row = 0;
    for ic in 0..c {
        let plane = input.channel(ic);
        for ky in 0..kernel.kh {
            for kx in 0..kernel.kw {
                let dst = &mut cols[row * n..(row + 1) * n];
                for (bi, oy) in (r0..r1).enumerate() {
                    let iy = (oy * stride + ky) as isize - padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    let dst_row = &mut dst[bi * ow..(bi + 1) * ow];
                    for (ox, d) in dst_row.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - padding as isize;
                        if ix >= 0 && ix < w as isize {
                            *d = src[ix as usize];
                        }
                    }
                }
                row += 1;
            }
        }
    }
    cols
}
