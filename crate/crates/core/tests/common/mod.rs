//! Naive reference implementations, written loop-by-loop in f64 and kept
//! independent of the library kernels.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use refsr::kernels::ConvKernel;
use refsr::Tensor;

pub fn random_tensor(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize, scale: f32) -> Tensor {
    let data = (0..c * h * w).map(|_| rng.gen_range(-scale..scale)).collect();
    Tensor::from_vec(c, h, w, data).unwrap()
}

pub fn max_abs_diff(a: &[f32], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y).abs()).fold(0.0, f64::max)
}

fn at(t: &Tensor, c: usize, y: usize, x: usize) -> f64 {
    t.data()[(c * t.height() + y) * t.width() + x] as f64
}

/// Zero-padded cross-correlation.
pub fn conv2d(input: &Tensor, k: &ConvKernel, bias: &[f32], stride: usize, pad: usize) -> (usize, usize, Vec<f64>) {
    let (c, h, w) = input.dims();
    let [o, ci, kh, kw] = k.shape();
    assert_eq!(ci, c);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; o * oh * ow];
    for oc in 0..o {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias[oc] as f64;
                for ic in 0..c {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            acc += k.at(oc, ic, ky, kx) as f64 * at(input, ic, iy as usize, ix as usize);
                        }
                    }
                }
                out[(oc * oh + oy) * ow + ox] = acc;
            }
        }
    }
    (oh, ow, out)
}

pub fn avgpool2(input: &Tensor) -> Vec<f64> {
    let (c, h, w) = input.dims();
    let mut out = Vec::new();
    for ch in 0..c {
        for y in 0..h / 2 {
            for x in 0..w / 2 {
                let mut s = 0.0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        s += at(input, ch, 2 * y + dy, 2 * x + dx);
                    }
                }
                out.push(s / 4.0);
            }
        }
    }
    out
}

/// Bilinear sample at continuous pixel coordinates, border-clamped.
fn bilinear(t: &Tensor, c: usize, py: f64, px: f64) -> f64 {
    let (_, h, w) = t.dims();
    let py = py.clamp(0.0, (h - 1) as f64);
    let px = px.clamp(0.0, (w - 1) as f64);
    let (y0, x0) = (py.floor(), px.floor());
    let (fy, fx) = (py - y0, px - x0);
    let mut s = 0.0;
    for (dy, wy) in [(0usize, 1.0 - fy), (1, fy)] {
        for (dx, wx) in [(0usize, 1.0 - fx), (1, fx)] {
            let y = (y0 as usize + dy).min(h - 1);
            let x = (x0 as usize + dx).min(w - 1);
            s += wy * wx * at(t, c, y, x);
        }
    }
    s
}

pub fn upsample2_nearest(input: &Tensor) -> Vec<f64> {
    let (c, h, w) = input.dims();
    let mut out = Vec::new();
    for ch in 0..c {
        for y in 0..2 * h {
            for x in 0..2 * w {
                out.push(at(input, ch, y / 2, x / 2));
            }
        }
    }
    out
}

/// Output pixel `o` of a ×2 enlargement sits at source coordinate `(o + 0.5) / 2 - 0.5`.
pub fn upsample2_bilinear(input: &Tensor) -> Vec<f64> {
    let (c, h, w) = input.dims();
    let mut out = Vec::new();
    for ch in 0..c {
        for y in 0..2 * h {
            for x in 0..2 * w {
                let sy = (y as f64 + 0.5) / 2.0 - 0.5;
                let sx = (x as f64 + 0.5) / 2.0 - 0.5;
                out.push(bilinear(input, ch, sy, sx));
            }
        }
    }
    out
}

/// `coords[i] = (gx, gy)` in `[-1, 1]`, pixel centres at `(2i + 1) / n - 1`.
pub fn grid_sample(input: &Tensor, oh: usize, ow: usize, coords: &[[f32; 2]]) -> Vec<f64> {
    let (c, h, w) = input.dims();
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        for (i, &[gx, gy]) in coords.iter().enumerate() {
            let px = ((gx as f64 + 1.0) * w as f64 - 1.0) / 2.0;
            let py = ((gy as f64 + 1.0) * h as f64 - 1.0) / 2.0;
            out[ch * oh * ow + i] = bilinear(input, ch, py, px);
        }
    }
    out
}

pub fn softmax_channels(input: &Tensor) -> Vec<f64> {
    let (c, h, w) = input.dims();
    let mut out = vec![0.0; c * h * w];
    for y in 0..h {
        for x in 0..w {
            let z: f64 = (0..c).map(|ch| at(input, ch, y, x).exp()).sum();
            for ch in 0..c {
                out[(ch * h + y) * w + x] = at(input, ch, y, x).exp() / z;
            }
        }
    }
    out
}

pub fn softmax_spatial(input: &Tensor) -> Vec<f64> {
    let (c, h, w) = input.dims();
    let mut out = Vec::new();
    for ch in 0..c {
        let z: f64 = (0..h * w).map(|i| at(input, ch, i / w, i % w).exp()).sum();
        out.extend((0..h * w).map(|i| at(input, ch, i / w, i % w).exp() / z));
    }
    out
}
