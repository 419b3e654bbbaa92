//! Pooling and interpolation on the half-texel (align-corners-false) grid.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpsampleMode {
    Nearest,
    Bilinear,
}

/// 2×2 average pooling.
pub fn avgpool2(input: &Tensor) -> Result<Tensor> {
    let (c, h, w) = input.dims();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(
            "avgpool2",
            format!("spatial size {h}x{w} is not even"),
        ));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(c, oh, ow);
    for ch in 0..c {
        let src = input.channel(ch);
        let dst = out.channel_mut(ch);
        for y in 0..oh {
            let r0 = &src[2 * y * w..(2 * y + 1) * w];
            let r1 = &src[(2 * y + 1) * w..(2 * y + 2) * w];
            for x in 0..ow {
                dst[y * ow + x] = (r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1]) * 0.25;
            }
        }
    }
    Ok(out)
}

pub fn upsample2(input: &Tensor, mode: UpsampleMode) -> Tensor {
    let (c, h, w) = input.dims();
    match mode {
        UpsampleMode::Nearest => {
            let mut out = Tensor::zeros(c, 2 * h, 2 * w);
            for ch in 0..c {
                let src = input.channel(ch);
                let dst = out.channel_mut(ch);
                for y in 0..2 * h {
                    let row = &src[(y / 2) * w..(y / 2 + 1) * w];
                    for x in 0..2 * w {
                        dst[y * 2 * w + x] = row[x / 2];
                    }
                }
            }
            out
        }
        UpsampleMode::Bilinear => resize_bilinear(input, 2 * h, 2 * w),
    }
}

/// Source taps and weights for one output coordinate of a bilinear resize.
#[derive(Clone, Copy)]
struct Tap {
    i0: usize,
    i1: usize,
    frac: f32,
}

fn taps(out_len: usize, in_len: usize) -> Vec<Tap> {
    let scale = in_len as f32 / out_len as f32;
    (0..out_len)
        .map(|o| {
            let src = ((o as f32 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f32);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(in_len - 1);
            Tap {
                i0,
                i1,
                frac: src - i0 as f32,
            }
        })
        .collect()
}

/// Bilinear resize with half-texel centres and edge clamping.
pub fn resize_bilinear(input: &Tensor, out_h: usize, out_w: usize) -> Tensor {
    let (c, h, w) = input.dims();
    if (h, w) == (out_h, out_w) {
        return input.clone();
    }
    let ty = taps(out_h, h);
    let tx = taps(out_w, w);
    let mut out = Tensor::zeros(c, out_h, out_w);
    for ch in 0..c {
        let src = input.channel(ch);
        let dst = out.channel_mut(ch);
        for (y, t) in ty.iter().enumerate() {
            let r0 = &src[t.i0 * w..(t.i0 + 1) * w];
            let r1 = &src[t.i1 * w..(t.i1 + 1) * w];
            for (x, s) in tx.iter().enumerate() {
                let top = r0[s.i0] + (r0[s.i1] - r0[s.i0]) * s.frac;
                let bot = r1[s.i0] + (r1[s.i1] - r1[s.i0]) * s.frac;
                dst[y * out_w + x] = top + (bot - top) * t.frac;
            }
        }
    }
    out
}

/// Box (area-average) reduction by an integer factor.
pub fn box_downsample(input: &Tensor, factor: usize) -> Result<Tensor> {
    let (c, h, w) = input.dims();
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(Error::shape(
            "box_downsample",
            format!("{h}x{w} is not divisible by {factor}"),
        ));
    }
    if factor == 1 {
        return Ok(input.clone());
    }
    let (oh, ow) = (h / factor, w / factor);
    let norm = 1.0 / (factor * factor) as f32;
    let mut out = Tensor::zeros(c, oh, ow);
    let mut acc = vec![0.0f32; ow];
    for ch in 0..c {
        let src = input.channel(ch);
        let dst = out.channel_mut(ch);
        for y in 0..oh {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for row in src[y * factor * w..(y + 1) * factor * w].chunks_exact(w) {
                for (x, a) in acc.iter_mut().enumerate() {
                    *a += row[x * factor..(x + 1) * factor].iter().sum::<f32>();
                }
            }
            for (d, a) in dst[y * ow..(y + 1) * ow].iter_mut().zip(&acc) {
                *d = a * norm;
            }
        }
    }
    Ok(out)
}
