//! Bitrate ladder and the memoryless operating-point controller.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::RateProfile;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PfMode {
    /// Downsampled PF stream, synthesized at the receiver.
    Neural,
    /// Full-resolution PF stream shown as decoded.
    Fallback,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OperatingPoint {
    pub resolution: usize,
    pub mode: PfMode,
}

/// Rows `[thresholds[i-1], thresholds[i])` map to `resolutions[i]`; a value
/// equal to a threshold belongs to the higher row. The top row is fallback.
#[derive(Clone, Debug, PartialEq)]
pub struct BitrateLadder {
    thresholds_kbps: Vec<f64>,
    resolutions: Vec<usize>,
}

impl Default for BitrateLadder {
    fn default() -> Self {
        Self::new(vec![30.0, 180.0, 550.0], vec![128, 256, 512, 1024]).expect("static ladder is valid")
    }
}

impl BitrateLadder {
    pub fn new(thresholds_kbps: Vec<f64>, resolutions: Vec<usize>) -> Result<Self> {
        if resolutions.len() != thresholds_kbps.len() + 1 || resolutions.len() < 2 {
            return Err(Error::invalid("ladder needs one more resolution than thresholds, and at least two rows"));
        }
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if !increasing(&thresholds_kbps) || thresholds_kbps.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::invalid("ladder thresholds must be positive and strictly increasing"));
        }
        if !resolutions.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid("ladder resolutions must be strictly increasing"));
        }
        Ok(Self {
            thresholds_kbps,
            resolutions,
        })
    }

    pub fn thresholds_kbps(&self) -> &[f64] {
        &self.thresholds_kbps
    }

    pub fn resolutions(&self) -> &[usize] {
        &self.resolutions
    }

    pub fn fallback_resolution(&self) -> usize {
        *self.resolutions.last().unwrap()
    }

    pub fn resolution_for_bitrate(&self, target_kbps: f64) -> OperatingPoint {
        let row = self.thresholds_kbps.iter().take_while(|&&t| target_kbps >= t).count();
        OperatingPoint {
            resolution: self.resolutions[row],
            mode: if row + 1 == self.resolutions.len() {
                PfMode::Fallback
            } else {
                PfMode::Neural
            },
        }
    }

    /// Weight-set name for a PF resolution; `None` for the fallback row.
    pub fn model_selector(&self, resolution: usize) -> Result<Option<String>> {
        match self.resolutions.iter().position(|&r| r == resolution) {
            None => Err(Error::invalid(format!("resolution {resolution} is not on the ladder"))),
            Some(i) if i + 1 == self.resolutions.len() => Ok(None),
            Some(_) => Ok(Some(format!("p{resolution}"))),
        }
    }
}

/// Step-interpolated `(time_s, target_kbps)` schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetTrace {
    points: Vec<(f64, f64)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    time_s: f64,
    target_kbps: f64,
}

impl TargetTrace {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("empty trace"));
        }
        if !points.windows(2).all(|w| w[0].0 < w[1].0) {
            return Err(Error::invalid("trace times must be strictly increasing"));
        }
        if points.iter().any(|&(t, k)| !t.is_finite() || !(k > 0.0) || !k.is_finite()) {
            return Err(Error::invalid("trace entries must be finite with positive bitrates"));
        }
        Ok(Self { points })
    }

    pub fn constant(kbps: f64) -> Result<Self> {
        Self::new(vec![(0.0, kbps)])
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn start(&self) -> f64 {
        self.points[0].0
    }

    pub fn end(&self) -> f64 {
        self.points[self.points.len() - 1].0
    }

    /// Target in force at `t`; `None` before the first breakpoint.
    pub fn at(&self, t: f64) -> Option<f64> {
        let idx = self.points.partition_point(|&(pt, _)| pt <= t);
        idx.checked_sub(1).map(|i| self.points[i].1)
    }

    /// Two-column CSV with a `time_s,target_kbps` header.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)
            .map_err(|e| Error::InputFormat(format!("cannot open trace {}: {e}", path.display())))?;
        let headers = rdr.headers().map_err(|e| Error::InputFormat(e.to_string()))?.clone();
        if headers.len() != 2 || &headers[0] != "time_s" || &headers[1] != "target_kbps" {
            return Err(Error::InputFormat(format!(
                "trace {} must have the header time_s,target_kbps",
                path.display()
            )));
        }
        let points = rdr
            .deserialize::<TraceRow>()
            .map(|r| {
                r.map(|r| (r.time_s, r.target_kbps))
                    .map_err(|e| Error::InputFormat(format!("trace {}: {e}", path.display())))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(points).map_err(|e| Error::InputFormat(e.to_string()))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for &(time_s, target_kbps) in &self.points {
            w.serialize(TraceRow { time_s, target_kbps })?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControllerDecision {
    pub target_kbps: f64,
    pub resolution: usize,
    pub mode: PfMode,
    /// Target clamped into the profiled range of `resolution`.
    pub codec_target_kbps: f64,
}

pub fn controller_step(
    ladder: &BitrateLadder,
    trace: &TargetTrace,
    now_s: f64,
    profile: &RateProfile,
) -> Result<ControllerDecision> {
    let target = trace
        .at(now_s)
        .ok_or_else(|| Error::invalid(format!("trace starts at {} s, after {now_s} s", trace.start())))?;
    let op = ladder.resolution_for_bitrate(target);
    let range = profile
        .range(op.resolution)
        .ok_or_else(|| Error::invalid(format!("rate profile has no entry for {}", op.resolution)))?;
    Ok(ControllerDecision {
        target_kbps: target,
        resolution: op.resolution,
        mode: op.mode,
        codec_target_kbps: range.clamp(target),
    })
}
