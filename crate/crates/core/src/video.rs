//! Raw video files and synthetic test clips.
//!
//! A raw video is a file of interleaved 8-bit RGB frames, row-major, with no
//! header, next to a JSON sidecar at `<file>.json` holding `width`, `height`,
//! `fps` and `frame_count`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Frame, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub frame_count: usize,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn frame_to_rgb8(frame: &Frame) -> Vec<u8> {
    let (_, h, w) = frame.dims();
    let mut out = Vec::with_capacity(3 * h * w);
    for i in 0..h * w {
        for c in 0..3 {
            out.push((frame.channel(c)[i].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    out
}

pub fn rgb8_to_frame(bytes: &[u8], width: usize, height: usize) -> Result<Frame> {
    if bytes.len() != 3 * width * height {
        return Err(Error::InputFormat(format!(
            "{} bytes do not hold one {width}x{height} RGB frame",
            bytes.len()
        )));
    }
    Ok(Tensor::from_fn(3, height, width, |c, y, x| {
        f32::from(bytes[3 * (y * width + x) + c]) / 255.0
    }))
}

pub fn write_raw(path: &Path, frames: &[Frame], fps: f64) -> Result<VideoMeta> {
    let first = frames.first().ok_or_else(|| Error::invalid("no frames to write"))?;
    let (_, height, width) = first.dims();
    let mut bytes = Vec::with_capacity(frames.len() * 3 * width * height);
    for f in frames {
        if f.dims() != (3, height, width) {
            return Err(Error::shape("write_raw", format!("frame {:?} differs from {width}x{height}", f)));
        }
        bytes.extend(frame_to_rgb8(f));
    }
    let meta = VideoMeta {
        width,
        height,
        fps,
        frame_count: frames.len(),
    };
    fs::write(path, bytes)?;
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)?)?;
    Ok(meta)
}

pub fn read_meta(path: &Path) -> Result<VideoMeta> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side)
        .map_err(|e| Error::InputFormat(format!("cannot read sidecar {}: {e}", side.display())))?;
    let meta: VideoMeta = serde_json::from_str(&text)
        .map_err(|e| Error::InputFormat(format!("bad sidecar {}: {e}", side.display())))?;
    if meta.width == 0 || meta.height == 0 || !(meta.fps > 0.0) {
        return Err(Error::InputFormat(format!("degenerate video metadata {meta:?}")));
    }
    Ok(meta)
}

pub fn read_raw(path: &Path) -> Result<(VideoMeta, Vec<Frame>)> {
    let meta = read_meta(path)?;
    let bytes = fs::read(path).map_err(|e| Error::InputFormat(format!("cannot read {}: {e}", path.display())))?;
    let frame_len = 3 * meta.width * meta.height;
    if bytes.len() != frame_len * meta.frame_count {
        return Err(Error::InputFormat(format!(
            "{} holds {} bytes, expected {} frames of {frame_len}",
            path.display(),
            bytes.len(),
            meta.frame_count
        )));
    }
    let frames = bytes
        .chunks_exact(frame_len)
        .map(|c| rgb8_to_frame(c, meta.width, meta.height))
        .collect::<Result<_>>()?;
    Ok((meta, frames))
}

/// Random-access frames, so long clips need not be held in memory.
pub trait FrameSource: Sync {
    fn len(&self) -> usize;

    fn frame(&self, index: usize) -> Result<Frame>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl FrameSource for [Frame] {
    fn len(&self) -> usize {
        <[Frame]>::len(self)
    }

    fn frame(&self, index: usize) -> Result<Frame> {
        self.get(index)
            .cloned()
            .ok_or_else(|| Error::invalid(format!("frame {index} out of range")))
    }
}

impl FrameSource for Vec<Frame> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn frame(&self, index: usize) -> Result<Frame> {
        self.as_slice().frame(index)
    }
}

/// Frames read on demand from a raw video file.
#[derive(Debug)]
pub struct RawVideoReader {
    path: PathBuf,
    meta: VideoMeta,
}

impl RawVideoReader {
    pub fn open(path: &Path) -> Result<Self> {
        let meta = read_meta(path)?;
        let len = fs::metadata(path)
            .map_err(|e| Error::InputFormat(format!("cannot stat {}: {e}", path.display())))?
            .len();
        let expect = (3 * meta.width * meta.height * meta.frame_count) as u64;
        if len != expect {
            return Err(Error::InputFormat(format!(
                "{} holds {len} bytes, sidecar implies {expect}",
                path.display()
            )));
        }
        Ok(Self {
            path: path.to_path_buf(),
            meta,
        })
    }

    pub fn meta(&self) -> &VideoMeta {
        &self.meta
    }
}

impl FrameSource for RawVideoReader {
    fn len(&self) -> usize {
        self.meta.frame_count
    }

    fn frame(&self, index: usize) -> Result<Frame> {
        use std::io::{Read, Seek, SeekFrom};
        if index >= self.meta.frame_count {
            return Err(Error::invalid(format!("frame {index} out of range")));
        }
        let frame_len = 3 * self.meta.width * self.meta.height;
        let mut f = fs::File::open(&self.path)?;
        f.seek(SeekFrom::Start((index * frame_len) as u64))?;
        let mut buf = vec![0u8; frame_len];
        f.read_exact(&mut buf)?;
        rgb8_to_frame(&buf, self.meta.width, self.meta.height)
    }
}

/// The first `count` frames of a synthetic clip.
#[derive(Clone, Debug)]
pub struct ClipSource {
    pub clip: SyntheticClip,
    pub count: usize,
}

impl FrameSource for ClipSource {
    fn len(&self) -> usize {
        self.count
    }

    fn frame(&self, index: usize) -> Result<Frame> {
        if index >= self.count {
            return Err(Error::invalid(format!("frame {index} out of range")));
        }
        Ok(self.clip.frame(index))
    }
}

/// A head-and-shoulders stand-in: a lit background gradient, a textured
/// ellipse that drifts and nods, and a little sensor noise.
#[derive(Clone, Debug)]
pub struct SyntheticClip {
    pub size: usize,
    pub seed: u64,
    pub noise: f32,
    texture: Vec<f32>,
    palette: [[f32; 3]; 3],
}

const TEXTURE: usize = 64;

impl SyntheticClip {
    pub fn new(size: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let texture = (0..TEXTURE * TEXTURE).map(|_| rng.gen::<f32>()).collect();
        let mut color = || [rng.gen_range(0.2..0.9), rng.gen_range(0.2..0.9), rng.gen_range(0.2..0.9)];
        Self {
            size,
            seed,
            noise: 0.01,
            texture,
            palette: [color(), color(), color()],
        }
    }

    fn texture_at(&self, u: f32, v: f32) -> f32 {
        let x = (u.rem_euclid(1.0) * TEXTURE as f32) as usize % TEXTURE;
        let y = (v.rem_euclid(1.0) * TEXTURE as f32) as usize % TEXTURE;
        self.texture[y * TEXTURE + x]
    }

    pub fn frame(&self, index: usize) -> Frame {
        let s = self.size as f32;
        let t = index as f32 / 30.0;
        let (cx, cy) = (0.5 + 0.08 * (1.3 * t).sin(), 0.48 + 0.04 * (2.1 * t).sin());
        let (rx, ry) = (0.22, 0.3 + 0.01 * (3.0 * t).cos());
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let noise: Vec<f32> = (0..self.size * self.size)
            .map(|_| (rng.gen::<f32>() - 0.5) * 2.0 * self.noise)
            .collect();
        let [bg0, bg1, face] = self.palette;
        Tensor::from_fn(3, self.size, self.size, |c, y, x| {
            let (u, v) = ((x as f32 + 0.5) / s, (y as f32 + 0.5) / s);
            let mut val = bg0[c] * (1.0 - v) + bg1[c] * v;
            let d = ((u - cx) / rx).powi(2) + ((v - cy) / ry).powi(2);
            if d < 1.0 {
                let shade = 0.75 + 0.25 * (1.0 - d).sqrt();
                let detail = self.texture_at((u - cx) * 3.0, (v - cy) * 3.0);
                val = face[c] * shade + 0.08 * (detail - 0.5);
                let eye = |ex: f32| ((u - cx - ex) / 0.04).powi(2) + ((v - cy + 0.08) / 0.025).powi(2) < 1.0;
                if eye(-0.08) || eye(0.08) {
                    val *= 0.2;
                }
            }
            (val + noise[y * self.size + x]).clamp(0.0, 1.0)
        })
    }

    pub fn frames(&self, count: usize) -> Vec<Frame> {
        (0..count).map(|i| self.frame(i)).collect()
    }
}

/// A noiseless smooth frame: a diagonal color ramp with a slow sinusoidal ripple.
pub fn smooth_gradient(size: usize, phase: f32) -> Frame {
    let s = size as f32;
    Tensor::from_fn(3, size, size, |c, y, x| {
        let (u, v) = ((x as f32 + 0.5) / s, (y as f32 + 0.5) / s);
        let ripple = 0.1 * ((u * 3.0 + v * 2.0 + phase + c as f32) * std::f32::consts::PI).sin();
        (0.2 + 0.3 * u + 0.3 * v + ripple).clamp(0.0, 1.0)
    })
}
