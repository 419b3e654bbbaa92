//! 8×8 DCT plane coding: per-frequency power-of-two quantization, zigzag
//! run-length symbols, adaptive range coding.
//!
//! Every coefficient class (plane kind × frequency) has step `2^e` where
//! `e = floor((quality + offset) / 12)`. The exponent never decreases with
//! quality, so each coarser grid is a subset of the finer one and the
//! per-coefficient reconstruction error cannot shrink as quality coarsens.
//! Offsets grow with frequency and are jittered so that each quality level
//! doubles the step of roughly a twelfth of the classes.

use std::sync::OnceLock;

use super::range::{BitTree, Decoder, Encoder};
use crate::error::{Error, Result};

const N: usize = 8;
const MAX_LEVEL: i32 = (1 << 14) - 1;
/// DC steps stop growing here; coarser DC grids start toggling between
/// neighbouring levels across smooth regions and cost more bits, not fewer.
const MAX_DC_EXPONENT: usize = 7;
const EOB: u32 = 0x00;
const ZRL: u32 = 0xF0;

#[rustfmt::skip]
const ZIGZAG: [usize; 64] = [
     0,  1,  8, 16,  9,  2,  3, 10,
    17, 24, 32, 25, 18, 11,  4,  5,
    12, 19, 26, 33, 40, 48, 41, 34,
    27, 20, 13,  6,  7, 14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36,
    29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46,
    53, 60, 61, 54, 47, 55, 62, 63,
];

fn basis() -> &'static [[f32; N]; N] {
    static B: OnceLock<[[f32; N]; N]> = OnceLock::new();
    B.get_or_init(|| {
        let mut b = [[0f32; N]; N];
        for (u, row) in b.iter_mut().enumerate() {
            let a = if u == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
            for (x, v) in row.iter_mut().enumerate() {
                *v = (a * ((2 * x + 1) as f64 * u as f64 * std::f64::consts::PI / 16.0).cos()) as f32;
            }
        }
        b
    })
}

/// Orthonormal 2-D DCT-II of a row-major 8×8 block.
pub(crate) fn fdct(block: &[f32; 64]) -> [f32; 64] {
    let c = basis();
    let mut tmp = [0f32; 64];
    for y in 0..N {
        for u in 0..N {
            tmp[y * N + u] = (0..N).map(|x| c[u][x] * block[y * N + x]).sum();
        }
    }
    let mut out = [0f32; 64];
    for v in 0..N {
        for u in 0..N {
            out[v * N + u] = (0..N).map(|y| c[v][y] * tmp[y * N + u]).sum();
        }
    }
    out
}

pub(crate) fn idct(coef: &[f32; 64]) -> [f32; 64] {
    let c = basis();
    let mut tmp = [0f32; 64];
    for y in 0..N {
        for u in 0..N {
            tmp[y * N + u] = (0..N).map(|v| c[v][y] * coef[v * N + u]).sum();
        }
    }
    let mut out = [0f32; 64];
    for y in 0..N {
        for x in 0..N {
            out[y * N + x] = (0..N).map(|u| c[u][x] * tmp[y * N + u]).sum();
        }
    }
    out
}

/// Quantizer steps in row-major coefficient order for one plane kind
/// (0 luma, 1 and 2 chroma).
pub(crate) fn steps(quality: u8, kind: usize) -> [f32; 64] {
    let mut out = [0f32; 64];
    for v in 0..N {
        for u in 0..N {
            let freq = 18 * (u + v) / 14;
            let chroma = if kind == 0 { 0 } else { 6 };
            let jitter = (7 * u + 5 * v + 3 * kind) % 12;
            let mut e = (usize::from(quality) + freq + chroma + jitter) / 12;
            if u == 0 && v == 0 {
                e = e.min(MAX_DC_EXPONENT);
            }
            out[v * N + u] = (1u32 << e) as f32;
        }
    }
    out
}

fn category(v: i32) -> u32 {
    32 - v.unsigned_abs().leading_zeros()
}

fn extra_bits(v: i32, cat: u32) -> u32 {
    if v >= 0 {
        v as u32
    } else {
        (v + (1 << cat) - 1) as u32
    }
}

fn from_extra(bits: u32, cat: u32) -> i32 {
    if cat == 0 {
        0
    } else if bits >> (cat - 1) == 1 {
        bits as i32
    } else {
        bits as i32 - (1 << cat) + 1
    }
}

struct Models {
    dc: BitTree,
    ac_first: BitTree,
    ac_rest: BitTree,
}

impl Models {
    fn new() -> Self {
        Self {
            dc: BitTree::new(4),
            ac_first: BitTree::new(8),
            ac_rest: BitTree::new(8),
        }
    }
}

fn padded(n: usize) -> usize {
    n.div_ceil(N) * N
}

fn load_block(plane: &[f32], width: usize, height: usize, bx: usize, by: usize) -> [f32; 64] {
    let mut b = [0f32; 64];
    for y in 0..N {
        let sy = (by * N + y).min(height - 1);
        for x in 0..N {
            let sx = (bx * N + x).min(width - 1);
            b[y * N + x] = plane[sy * width + sx];
        }
    }
    b
}

/// Codes one zero-centred plane on the 0..255 sample scale.
pub(crate) fn encode_plane(plane: &[f32], width: usize, height: usize, step: &[f32; 64]) -> Vec<u8> {
    let mut enc = Encoder::new();
    let mut m = Models::new();
    let mut prev_dc = 0i32;
    for by in 0..padded(height) / N {
        for bx in 0..padded(width) / N {
            let coef = fdct(&load_block(plane, width, height, bx, by));
            let q: Vec<i32> = ZIGZAG
                .iter()
                .map(|&k| ((coef[k] / step[k]).round() as i32).clamp(-MAX_LEVEL, MAX_LEVEL))
                .collect();

            let diff = q[0] - prev_dc;
            prev_dc = q[0];
            let cat = category(diff);
            enc.tree(&mut m.dc, cat);
            enc.direct(extra_bits(diff, cat), cat);

            let mut run = 0u32;
            let mut first = true;
            for &v in &q[1..] {
                if v == 0 {
                    run += 1;
                    continue;
                }
                while run > 15 {
                    let model = if first { &mut m.ac_first } else { &mut m.ac_rest };
                    first = false;
                    enc.tree(model, ZRL);
                    run -= 16;
                }
                let model = if first { &mut m.ac_first } else { &mut m.ac_rest };
                first = false;
                let size = category(v);
                enc.tree(model, (run << 4) | size);
                enc.direct(extra_bits(v, size), size);
                run = 0;
            }
            if run > 0 {
                let model = if first { &mut m.ac_first } else { &mut m.ac_rest };
                enc.tree(model, EOB);
            }
        }
    }
    enc.finish()
}

/// Inverse of [`encode_plane`], returning dequantized reconstructed samples.
pub(crate) fn decode_plane(data: &[u8], width: usize, height: usize, step: &[f32; 64]) -> Result<Vec<f32>> {
    let mut dec = Decoder::new(data);
    let mut m = Models::new();
    let mut out = vec![0f32; width * height];
    let mut prev_dc = 0i32;
    let corrupt = |what: &str| Error::Codec(format!("corrupt plane payload: {what}"));
    for by in 0..padded(height) / N {
        for bx in 0..padded(width) / N {
            let mut q = [0i32; 64];
            let cat = dec.tree(&mut m.dc);
            prev_dc += from_extra(dec.direct(cat), cat);
            q[0] = prev_dc;

            let mut k = 1usize;
            let mut first = true;
            while k < 64 {
                let model = if first { &mut m.ac_first } else { &mut m.ac_rest };
                first = false;
                let sym = dec.tree(model);
                let (run, size) = ((sym >> 4) as usize, sym & 0x0F);
                if size == 0 {
                    match sym {
                        EOB => break,
                        ZRL => {
                            k += 16;
                            if k >= 64 {
                                return Err(corrupt("zero run past block end"));
                            }
                            continue;
                        }
                        _ => return Err(corrupt("invalid run/size symbol")),
                    }
                }
                k += run;
                if k >= 64 {
                    return Err(corrupt("coefficient index past block end"));
                }
                q[k] = from_extra(dec.direct(size), size);
                k += 1;
            }
            if dec.overrun() {
                return Err(corrupt("truncated"));
            }

            let mut coef = [0f32; 64];
            for (i, &zz) in ZIGZAG.iter().enumerate() {
                coef[zz] = q[i] as f32 * step[zz];
            }
            let px = idct(&coef);
            for y in 0..N {
                let oy = by * N + y;
                if oy >= height {
                    break;
                }
                for x in 0..N {
                    let ox = bx * N + x;
                    if ox < width {
                        out[oy * width + ox] = px[y * N + x];
                    }
                }
            }
        }
    }
    Ok(out)
}
