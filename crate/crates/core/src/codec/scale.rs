//! Resolution changes around the codec: box downsampling for the PF stream
//! and the upsampling baselines.

use crate::error::{Error, Result};
use crate::kernels::box_downsample;
use crate::tensor::{Frame, Tensor};

/// Area-average reduction of a square frame to `to × to`.
pub fn downsample(frame: &Frame, to: usize) -> Result<Frame> {
    let (_, h, w) = frame.dims();
    if h != w {
        return Err(Error::shape("downsample", format!("expected a square frame, got {h}x{w}")));
    }
    if to == 0 || to > h {
        return Err(Error::invalid(format!("cannot downsample {h} to {to}")));
    }
    if h % to != 0 || !(h / to).is_power_of_two() {
        return Err(Error::invalid(format!("{h} -> {to} is not a power-of-two reduction")));
    }
    if to == h {
        return Ok(frame.clone());
    }
    box_downsample(frame, h / to)
}

/// Keys cubic convolution weight.
pub fn cubic_weight(t: f32, a: f32) -> f32 {
    let t = t.abs();
    if t <= 1.0 {
        ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a
    } else {
        0.0
    }
}

const BICUBIC_A: f32 = -0.5;

struct Taps {
    index: Vec<[usize; 4]>,
    weight: Vec<[f32; 4]>,
}

fn cubic_taps(src: usize, dst: usize) -> Taps {
    let scale = src as f32 / dst as f32;
    let mut index = Vec::with_capacity(dst);
    let mut weight = Vec::with_capacity(dst);
    for d in 0..dst {
        let s = (d as f32 + 0.5) * scale - 0.5;
        let base = s.floor();
        let t = s - base;
        let mut ix = [0usize; 4];
        let mut wt = [0f32; 4];
        for k in 0..4 {
            let off = k as f32 - 1.0;
            ix[k] = (base as i64 + k as i64 - 1).clamp(0, src as i64 - 1) as usize;
            wt[k] = cubic_weight(t - off, BICUBIC_A);
        }
        index.push(ix);
        weight.push(wt);
    }
    Taps { index, weight }
}

/// Separable bicubic resize with half-texel alignment and clamped borders.
/// The result is clamped to `[0, 1]`.
pub fn resize_bicubic(frame: &Frame, out_h: usize, out_w: usize) -> Frame {
    let (c, h, w) = frame.dims();
    let tx = cubic_taps(w, out_w);
    let ty = cubic_taps(h, out_h);
    let mut rows = Tensor::zeros(c, h, out_w);
    for ch in 0..c {
        let src = frame.channel(ch);
        let dst = rows.channel_mut(ch);
        for y in 0..h {
            let srow = &src[y * w..(y + 1) * w];
            for x in 0..out_w {
                let (ix, wt) = (&tx.index[x], &tx.weight[x]);
                dst[y * out_w + x] = (0..4).map(|k| wt[k] * srow[ix[k]]).sum();
            }
        }
    }
    let mut out = Tensor::zeros(c, out_h, out_w);
    for ch in 0..c {
        let src = rows.channel(ch);
        let dst = out.channel_mut(ch);
        for y in 0..out_h {
            let (iy, wt) = (&ty.index[y], &ty.weight[y]);
            for x in 0..out_w {
                let v: f32 = (0..4).map(|k| wt[k] * src[iy[k] * out_w + x]).sum();
                dst[y * out_w + x] = v.clamp(0.0, 1.0);
            }
        }
    }
    out
}

/// Bicubic upsampling of a square frame to `to × to`.
pub fn bicubic_upsample(frame: &Frame, to: usize) -> Result<Frame> {
    let (_, h, w) = frame.dims();
    if to < h || to < w {
        return Err(Error::invalid(format!("bicubic_upsample cannot shrink {h}x{w} to {to}")));
    }
    Ok(resize_bicubic(frame, to, to))
}

/// Pixel replication to `to × to`; `to` must be an integer multiple of the source size.
pub fn nearest_upsample(frame: &Frame, to: usize) -> Result<Frame> {
    let (c, h, w) = frame.dims();
    if to < h || !to.is_multiple_of(h) || !to.is_multiple_of(w) {
        return Err(Error::invalid(format!("nearest_upsample needs an integer factor, {h}x{w} -> {to}")));
    }
    let (fy, fx) = (to / h, to / w);
    Ok(Tensor::from_fn(c, to, to, |ch, y, x| frame.at(ch, y / fy, x / fx)))
}
