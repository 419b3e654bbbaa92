//! Intra-only block-DCT frame codec with rate control and rate profiling.
//!
//! Byte layout of an encoded frame (all integers little-endian):
//!
//! | bytes | field |
//! |---|---|
//! | 4 | magic `TVC1` |
//! | 1 | resolution id: index into `RESOLUTIONS`, `0xFF` for other sizes |
//! | 1 | quality, 0 (finest) ..= 127 (coarsest) |
//! | 1 | flags, bit 0 = key frame |
//! | 2 | width |
//! | 2 | height |
//! | 3 × (4 + n) | luma and two chroma plane payloads, each prefixed by its u32 length |
//! | 4 | CRC-32 of everything above |

mod block;
mod range;
mod scale;

use serde::{Deserialize, Serialize};

pub use scale::{bicubic_upsample, cubic_weight, downsample, nearest_upsample, resize_bicubic};

use crate::error::{Error, Result};
use crate::tensor::{Frame, Tensor};

pub const RESOLUTIONS: [usize; 5] = [64, 128, 256, 512, 1024];
pub const FINEST_QUALITY: u8 = 0;
pub const COARSEST_QUALITY: u8 = 127;
pub const UNLISTED_RESOLUTION: u8 = 0xFF;
const MAGIC: &[u8; 4] = b"TVC1";
const HEADER_LEN: usize = 11;

pub fn resolution_id(resolution: usize) -> Option<u8> {
    RESOLUTIONS.iter().position(|&r| r == resolution).map(|i| i as u8)
}

pub fn resolution_from_id(id: u8) -> Option<usize> {
    RESOLUTIONS.get(id as usize).copied()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedFrame {
    pub resolution_id: u8,
    pub quality: u8,
    pub is_key: bool,
    pub width: u16,
    pub height: u16,
    pub planes: [Vec<u8>; 3],
}

impl EncodedFrame {
    pub fn byte_len(&self) -> usize {
        HEADER_LEN + self.planes.iter().map(|p| 4 + p.len()).sum::<usize>() + 4
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_len());
        out.extend_from_slice(MAGIC);
        out.push(self.resolution_id);
        out.push(self.quality);
        out.push(self.is_key as u8);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        for p in &self.planes {
            out.extend_from_slice(&(p.len() as u32).to_le_bytes());
            out.extend_from_slice(p);
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Codec(m.to_string());
        if bytes.len() < HEADER_LEN + 12 + 4 {
            return Err(bad("frame shorter than the fixed header"));
        }
        let (body, crc) = bytes.split_at(bytes.len() - 4);
        if crc32fast::hash(body) != u32::from_le_bytes(crc.try_into().unwrap()) {
            return Err(bad("checksum mismatch"));
        }
        if &body[..4] != MAGIC {
            return Err(bad("bad magic"));
        }
        let quality = body[5];
        if quality > COARSEST_QUALITY {
            return Err(Error::Codec(format!("quality {quality} out of range")));
        }
        let mut pos = HEADER_LEN;
        let mut planes: [Vec<u8>; 3] = Default::default();
        for p in &mut planes {
            let len = body
                .get(pos..pos + 4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
                .ok_or_else(|| bad("truncated plane length"))?;
            pos += 4;
            *p = body.get(pos..pos + len).ok_or_else(|| bad("truncated plane payload"))?.to_vec();
            pos += len;
        }
        if pos != body.len() {
            return Err(bad("trailing bytes after planes"));
        }
        let enc = Self {
            resolution_id: body[4],
            quality,
            is_key: body[6] & 1 == 1,
            width: u16::from_le_bytes([body[7], body[8]]),
            height: u16::from_le_bytes([body[9], body[10]]),
            planes,
        };
        enc.check_dims()?;
        Ok(enc)
    }

    fn check_dims(&self) -> Result<()> {
        let (w, h) = (self.width as usize, self.height as usize);
        if w == 0 || h == 0 || w % 8 != 0 || h % 8 != 0 {
            return Err(Error::Codec(format!("invalid frame size {w}x{h}")));
        }
        let expect = if w == h { resolution_id(w) } else { None }.unwrap_or(UNLISTED_RESOLUTION);
        if self.resolution_id != expect {
            return Err(Error::Codec(format!(
                "resolution id {} does not match {w}x{h}",
                self.resolution_id
            )));
        }
        Ok(())
    }
}

const SQRT2: f32 = std::f32::consts::SQRT_2;
const SQRT3: f32 = 1.732_050_8;
const SQRT6: f32 = 2.449_489_7;
/// Luma offset that centres mid-grey at zero.
const LUMA_SHIFT: f32 = 127.5 * SQRT3;

/// Orthonormal opponent transform on the 0..255 scale: one luma axis and
/// two chroma axes, all zero for mid-grey.
fn to_opponent(frame: &Frame) -> [Vec<f32>; 3] {
    let (r, g, b) = (frame.channel(0), frame.channel(1), frame.channel(2));
    let n = r.len();
    let (mut y, mut c1, mut c2) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let (r, g, b) = (r[i] * 255.0, g[i] * 255.0, b[i] * 255.0);
        y.push((r + g + b) / SQRT3 - LUMA_SHIFT);
        c1.push((r - b) / SQRT2);
        c2.push((r - 2.0 * g + b) / SQRT6);
    }
    [y, c1, c2]
}

fn subsample_chroma(plane: &[f32], w: usize, h: usize) -> Vec<f32> {
    let (cw, ch) = (w / 2, h / 2);
    let mut out = Vec::with_capacity(cw * ch);
    for y in 0..ch {
        for x in 0..cw {
            let i = 2 * y * w + 2 * x;
            out.push(0.25 * (plane[i] + plane[i + 1] + plane[i + w] + plane[i + w + 1]));
        }
    }
    out
}

pub fn encode(frame: &Frame, quality: u8) -> Result<EncodedFrame> {
    let (c, h, w) = frame.dims();
    if c != 3 {
        return Err(Error::Codec(format!("expected 3 channels, got {c}")));
    }
    if h == 0 || w == 0 || h % 8 != 0 || w % 8 != 0 || h > u16::MAX as usize || w > u16::MAX as usize {
        return Err(Error::Codec(format!("frame size {w}x{h} is not a positive multiple of 8")));
    }
    if quality > COARSEST_QUALITY {
        return Err(Error::Codec(format!("quality {quality} out of range 0..=127")));
    }
    if !frame.is_finite() {
        return Err(Error::Codec("frame contains non-finite samples".into()));
    }
    let [y, c1, c2] = to_opponent(frame);
    let (cw, chh) = (w / 2, h / 2);
    let planes = [
        block::encode_plane(&y, w, h, &block::steps(quality, 0)),
        block::encode_plane(&subsample_chroma(&c1, w, h), cw, chh, &block::steps(quality, 1)),
        block::encode_plane(&subsample_chroma(&c2, w, h), cw, chh, &block::steps(quality, 2)),
    ];
    Ok(EncodedFrame {
        resolution_id: if w == h { resolution_id(w) } else { None }.unwrap_or(UNLISTED_RESOLUTION),
        quality,
        is_key: true,
        width: w as u16,
        height: h as u16,
        planes,
    })
}

/// Reconstructs the quantized frame. Samples are not clamped, so a decoded
/// frame re-encodes to exactly the same coefficients.
pub fn decode(enc: &EncodedFrame) -> Result<Frame> {
    enc.check_dims()?;
    let (w, h) = (enc.width as usize, enc.height as usize);
    let y = block::decode_plane(&enc.planes[0], w, h, &block::steps(enc.quality, 0))?;
    let c1 = block::decode_plane(&enc.planes[1], w / 2, h / 2, &block::steps(enc.quality, 1))?;
    let c2 = block::decode_plane(&enc.planes[2], w / 2, h / 2, &block::steps(enc.quality, 2))?;
    let cw = w / 2;
    let mut out = Tensor::zeros(3, h, w);
    let data = out.data_mut();
    let n = w * h;
    for py in 0..h {
        for px in 0..w {
            let i = py * w + px;
            let ci = (py / 2) * cw + px / 2;
            let l = (y[i] + LUMA_SHIFT) / SQRT3;
            let (a, b) = (c1[ci] / SQRT2, c2[ci] / SQRT6);
            data[i] = (l + a + b) / 255.0;
            data[n + i] = (l - 2.0 * b) / 255.0;
            data[2 * n + i] = (l - a + b) / 255.0;
        }
    }
    Ok(out)
}

pub fn decode_bytes(bytes: &[u8]) -> Result<Frame> {
    decode(&EncodedFrame::from_bytes(bytes)?)
}

/// Whole-frame byte budget for a bitrate and frame rate.
pub fn frame_budget_bytes(target_kbps: f64, fps: f64) -> usize {
    (target_kbps * 1000.0 / 8.0 / fps).floor().max(0.0) as usize
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RateControlled {
    pub frame: EncodedFrame,
    pub budget_bytes: usize,
    /// The coarsest quality still exceeded the budget.
    pub overshoot: bool,
}

/// Finest quality whose serialized size fits `target_kbps / fps`.
pub fn encode_at_bitrate(frame: &Frame, target_kbps: f64, fps: f64) -> Result<RateControlled> {
    if !(target_kbps > 0.0) || !(fps > 0.0) {
        return Err(Error::invalid(format!("bitrate {target_kbps} kbps at {fps} fps")));
    }
    let budget = frame_budget_bytes(target_kbps, fps);
    let coarsest = encode(frame, COARSEST_QUALITY)?;
    if coarsest.byte_len() > budget {
        return Ok(RateControlled {
            frame: coarsest,
            budget_bytes: budget,
            overshoot: true,
        });
    }
    let (mut lo, mut hi) = (FINEST_QUALITY, COARSEST_QUALITY);
    let mut best = coarsest;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        let enc = encode(frame, mid)?;
        if enc.byte_len() <= budget {
            hi = mid;
            best = enc;
        } else {
            lo = mid + 1;
        }
    }
    Ok(RateControlled {
        frame: best,
        budget_bytes: budget,
        overshoot: false,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRange {
    pub resolution: usize,
    pub min_kbps: f64,
    pub max_kbps: f64,
}

impl RateRange {
    pub fn contains(&self, kbps: f64) -> bool {
        kbps >= self.min_kbps && kbps <= self.max_kbps
    }

    pub fn clamp(&self, kbps: f64) -> f64 {
        kbps.clamp(self.min_kbps, self.max_kbps)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateProfile {
    pub fps: f64,
    pub ranges: Vec<RateRange>,
}

impl RateProfile {
    pub fn range(&self, resolution: usize) -> Option<&RateRange> {
        self.ranges.iter().find(|r| r.resolution == resolution)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Mean bitrate at the coarsest and finest quality for every listed
/// resolution the corpus can be reduced to.
pub fn profile(corpus: &[Vec<Frame>], fps: f64) -> Result<RateProfile> {
    let frames: Vec<&Frame> = corpus.iter().flatten().collect();
    let first = frames.first().ok_or_else(|| Error::invalid("empty profiling corpus"))?;
    let source = first.height();
    if frames.iter().any(|f| f.dims() != (3, source, source)) {
        return Err(Error::invalid("profiling corpus frames must share one square 3-channel size"));
    }
    if !(fps > 0.0) {
        return Err(Error::invalid(format!("fps {fps}")));
    }
    let mut ranges = Vec::new();
    for &res in RESOLUTIONS.iter().filter(|&&r| r <= source && source % r == 0) {
        let (mut lo_bytes, mut hi_bytes) = (0usize, 0usize);
        for f in &frames {
            let small = downsample(f, res)?;
            lo_bytes += encode(&small, COARSEST_QUALITY)?.byte_len();
            hi_bytes += encode(&small, FINEST_QUALITY)?.byte_len();
        }
        let kbps = |b: usize| b as f64 * 8.0 * fps / 1000.0 / frames.len() as f64;
        ranges.push(RateRange {
            resolution: res,
            min_kbps: kbps(lo_bytes),
            max_kbps: kbps(hi_bytes),
        });
    }
    Ok(RateProfile { fps, ranges })
}
