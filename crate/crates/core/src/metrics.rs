//! Frame quality metrics and per-session accounting.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Frame;

pub const DB_CAP: f64 = 100.0;
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn same_dims(op: &'static str, a: &Frame, b: &Frame) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

/// Peak signal-to-noise ratio over all samples with peak 1, in `[0, 100]` dB.
pub fn psnr(a: &Frame, b: &Frame) -> Result<f64> {
    same_dims("psnr", a, b)?;
    let n = a.data().len().max(1) as f64;
    let mse = a.data().iter().zip(b.data()).map(|(x, y)| (f64::from(*x) - f64::from(*y)).powi(2)).sum::<f64>() / n;
    if mse == 0.0 {
        return Ok(DB_CAP);
    }
    Ok((-10.0 * mse.log10()).clamp(0.0, DB_CAP))
}

/// BT.601 luma plane as f64.
pub fn luma(frame: &Frame) -> Vec<f64> {
    if frame.channels() == 1 {
        return frame.data().iter().map(|&v| f64::from(v)).collect();
    }
    let (r, g, b) = (frame.channel(0), frame.channel(1), frame.channel(2));
    (0..r.len())
        .map(|i| 0.299 * f64::from(r[i]) + 0.587 * f64::from(g[i]) + 0.114 * f64::from(b[i]))
        .collect()
}

pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0f64; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        *v = (-(i as f64 - c).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable valid-mode filtering.
fn filter_valid(img: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w - SSIM_WINDOW + 1, h - SSIM_WINDOW + 1);
    let mut rows = vec![0f64; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * img[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0f64; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean structural similarity of the luma planes, 11×11 Gaussian window,
/// valid positions only, clamped to `[0, 1]`.
pub fn ssim(a: &Frame, b: &Frame) -> Result<f64> {
    same_dims("ssim", a, b)?;
    let (_, h, w) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid(format!("ssim needs frames of at least 11x11, got {h}x{w}")));
    }
    if a == b {
        return Ok(1.0);
    }
    let (x, y) = (luma(a), luma(b));
    let k = gaussian_window();
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<_>>();
    let mx = filter_valid(&x, w, h, &k);
    let my = filter_valid(&y, w, h, &k);
    let mxx = filter_valid(&prod(&x, &x), w, h, &k);
    let myy = filter_valid(&prod(&y, &y), w, h, &k);
    let mxy = filter_valid(&prod(&x, &y), w, h, &k);
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (ux, uy) = (mx[i], my[i]);
        let (vx, vy, cxy) = (mxx[i] - ux * ux, myy[i] - uy * uy, mxy[i] - ux * uy);
        total += ((2.0 * ux * uy + SSIM_C1) * (2.0 * cxy + SSIM_C2))
            / ((ux * ux + uy * uy + SSIM_C1) * (vx + vy + SSIM_C2));
    }
    Ok((total / mx.len() as f64).clamp(0.0, 1.0))
}

/// `-10 log10(1 - s)`, capped at 100 dB.
pub fn ssim_to_db(s: f64) -> f64 {
    if s >= 1.0 {
        return DB_CAP;
    }
    (-10.0 * (1.0 - s).log10()).min(DB_CAP)
}

pub fn ssim_db(a: &Frame, b: &Frame) -> Result<f64> {
    Ok(ssim_to_db(ssim(a, b)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Neural,
    Fallback,
    KeypointsOnly,
    Bicubic,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Neural => "neural",
            Mode::Fallback => "fallback",
            Mode::KeypointsOnly => "keypoints_only",
            Mode::Bicubic => "bicubic",
        }
    }
}

/// One row of the per-frame metrics CSV, in column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub frame_id: u32,
    pub psnr_db: f64,
    pub ssim: f64,
    pub ssim_db: f64,
    pub bytes_on_wire: usize,
    pub latency_ms: f64,
    pub resolution_id: u8,
    pub mode: Mode,
}

/// `(psnr_db, ssim, ssim_db)` of a reconstruction against ground truth.
pub fn quality(reconstructed: &Frame, truth: &Frame) -> Result<(f64, f64, f64)> {
    let s = ssim(reconstructed, truth)?;
    Ok((psnr(reconstructed, truth)?, s, ssim_to_db(s)))
}

/// Sorted samples with interpolated quantiles.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cdf {
    pub values: Vec<f64>,
    pub p10: f64,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
}

/// Linear interpolation between closest ranks over sorted `values`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        }
    }
}

impl Cdf {
    pub fn new(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        Self {
            p10: quantile(&values, 0.1),
            p50: quantile(&values, 0.5),
            p90: quantile(&values, 0.9),
            p99: quantile(&values, 0.99),
            values,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub frames: usize,
    pub duration_s: f64,
    pub total_bytes: u64,
    pub mean_kbps: f64,
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
    pub mean_ssim_db: f64,
    pub mean_latency_ms: f64,
    pub cdfs: BTreeMap<String, Cdf>,
}

/// Bitrate is total bytes × 8 over `duration_s`.
pub fn account(records: &[MetricsRecord], duration_s: f64) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::invalid("no records to account"));
    }
    if !(duration_s > 0.0) {
        return Err(Error::invalid(format!("duration {duration_s} s")));
    }
    let n = records.len() as f64;
    let mean = |f: fn(&MetricsRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    let total_bytes: u64 = records.iter().map(|r| r.bytes_on_wire as u64).sum();
    let mut cdfs = BTreeMap::new();
    let columns: [(&str, fn(&MetricsRecord) -> f64); 5] = [
        ("psnr_db", |r| r.psnr_db),
        ("ssim", |r| r.ssim),
        ("ssim_db", |r| r.ssim_db),
        ("latency_ms", |r| r.latency_ms),
        ("bytes_on_wire", |r| r.bytes_on_wire as f64),
    ];
    for (name, f) in columns {
        cdfs.insert(name.to_string(), Cdf::new(records.iter().map(f).collect()));
    }
    Ok(Summary {
        frames: records.len(),
        duration_s,
        total_bytes,
        mean_kbps: total_bytes as f64 * 8.0 / duration_s / 1000.0,
        mean_psnr_db: mean(|r| r.psnr_db),
        mean_ssim: mean(|r| r.ssim),
        mean_ssim_db: mean(|r| r.ssim_db),
        mean_latency_ms: mean(|r| r.latency_ms),
        cdfs,
    })
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}
