//! End-to-end drivers behind the command-line subcommands.
//!
//! Files written under the output directory:
//!
//! | command | files |
//! |---|---|
//! | profile | `profile.json` |
//! | run | `metrics.csv`, `summary.json`, `reconstructed.rgb` (+ `.json` sidecar) |
//! | adapt | as run, plus `adapt.csv` |
//! | rd-curve | `rd_curve.csv` |

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::adaptation::{controller_step, BitrateLadder, PfMode, TargetTrace};
use crate::codec::{self, resolution_id, RateProfile, COARSEST_QUALITY};
use crate::error::{Error, Result};
use crate::metrics::{self, account, MetricsRecord, Mode, Summary};
use crate::model::{ModelBank, WeightSource, KEYPOINT_BASELINE};
use crate::streaming::{
    channel_run, ComputeModel, LinkTrace, Receiver, ReceiverConfig, SendMode, Sender, SenderConfig, Upsampler,
    DEFAULT_MTU,
};
use crate::synth::MotionScale;
use crate::video::{frame_to_rgb8, sidecar_path, ClipSource, FrameSource, RawVideoReader, SyntheticClip, VideoMeta};

pub const DEFAULT_FPS: f64 = 30.0;
const PROFILE_FRAMES: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub enum VideoInput {
    Raw(PathBuf),
    Synthetic { size: usize, frames: usize, seed: u64 },
}

impl VideoInput {
    fn open(&self) -> Result<(Box<dyn FrameSource>, f64, usize)> {
        match self {
            VideoInput::Raw(path) => {
                let r = RawVideoReader::open(path)?;
                let VideoMeta { width, height, fps, .. } = *r.meta();
                if width != height || resolution_id(width).is_none() {
                    return Err(Error::InputFormat(format!(
                        "{}: frames must be square with a side in {:?}, got {width}x{height}",
                        path.display(),
                        codec::RESOLUTIONS
                    )));
                }
                Ok((Box::new(r), fps, width))
            }
            VideoInput::Synthetic { size, frames, seed } => {
                if resolution_id(*size).is_none() {
                    return Err(Error::invalid(format!("synthetic size {size} not in {:?}", codec::RESOLUTIONS)));
                }
                let src = ClipSource {
                    clip: SyntheticClip::new(*size, *seed),
                    count: *frames,
                };
                Ok((Box::new(src), DEFAULT_FPS, *size))
            }
        }
    }
}

/// `SIZE:FRAMES[:SEED]`.
impl FromStr for VideoInput {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |p: &str| p.parse::<u64>().map_err(|_| Error::invalid(format!("bad synthetic spec `{s}`")));
        match parts.as_slice() {
            [size, frames] => Ok(VideoInput::Synthetic {
                size: num(size)? as usize,
                frames: num(frames)? as usize,
                seed: 0,
            }),
            [size, frames, seed] => Ok(VideoInput::Synthetic {
                size: num(size)? as usize,
                frames: num(frames)? as usize,
                seed: num(seed)?,
            }),
            _ => Err(Error::invalid(format!("synthetic spec `{s}` is not SIZE:FRAMES[:SEED]"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunMode {
    Neural { resolution: usize, kbps: f64 },
    Bicubic { resolution: usize, kbps: f64 },
    Fallback { kbps: f64 },
    KeypointsOnly,
    Adaptive { trace: TargetTrace, upsampler: Upsampler },
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub input: VideoInput,
    /// Weight-set directory; seeded random weights when absent.
    pub weights: Option<PathBuf>,
    pub ladder: BitrateLadder,
    pub mode: RunMode,
    /// Overrides the input's frame rate.
    pub fps: Option<f64>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub mtu: usize,
    pub link: LinkTrace,
    pub compute: ComputeModel,
    pub motion_scale: MotionScale,
    pub max_frames: Option<usize>,
    /// Rate profile for adaptive runs; measured on the input when absent.
    pub profile: Option<RateProfile>,
}

impl RunConfig {
    pub fn new(input: VideoInput, mode: RunMode, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            input,
            weights: None,
            ladder: BitrateLadder::default(),
            mode,
            fps: None,
            seed: 0,
            out_dir: out_dir.into(),
            mtu: DEFAULT_MTU,
            link: LinkTrace::unlimited(),
            compute: ComputeModel::default(),
            motion_scale: MotionScale::Low,
            max_frames: None,
            profile: None,
        }
    }
}

/// One row of `adapt.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdaptRow {
    pub time_s: f64,
    pub target_kbps: f64,
    pub codec_target_kbps: f64,
    pub achieved_kbps: f64,
    pub resolution: usize,
    pub mode: Mode,
    pub quality: u8,
    pub overshoot: bool,
    pub ssim_db: f64,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub records: Vec<MetricsRecord>,
    pub adapt: Vec<AdaptRow>,
    pub summary: Summary,
    /// Mean codec payload rate of the PF (or keypoint) stream.
    pub payload_kbps: f64,
    pub profile: Option<RateProfile>,
}

struct Sink {
    video: Option<BufWriter<File>>,
}

fn execute(cfg: &RunConfig, video_out: Option<&Path>) -> Result<RunReport> {
    let (source, input_fps, output) = cfg.input.open()?;
    let fps = cfg.fps.unwrap_or(input_fps);
    if !(fps > 0.0) {
        return Err(Error::invalid(format!("fps {fps}")));
    }
    let count = cfg.max_frames.map_or(source.len(), |m| m.min(source.len()));
    if count == 0 {
        return Err(Error::InputFormat("input has no frames".into()));
    }
    let source = Prefix { inner: source.as_ref(), count };

    let weight_source = match &cfg.weights {
        Some(dir) => WeightSource::Directory(dir.clone()),
        None => WeightSource::Random { seed: cfg.seed },
    };
    let needs_models = match &cfg.mode {
        RunMode::Neural { .. } | RunMode::KeypointsOnly => true,
        RunMode::Adaptive { upsampler, .. } => *upsampler == Upsampler::Neural,
        _ => false,
    };
    let mut bank = if needs_models {
        Some(ModelBank::new(output, weight_source.clone())?)
    } else {
        None
    };

    let mut sender_cfg = SenderConfig::new(output, fps);
    sender_cfg.mtu = cfg.mtu;
    let mut sender = Sender::new(sender_cfg)?;
    if matches!(cfg.mode, RunMode::KeypointsOnly) {
        let model = bank.as_mut().expect("models for keypoint mode").get(KEYPOINT_BASELINE)?;
        sender = sender.with_keypoint_model(model);
    }
    let mut recv_cfg = ReceiverConfig::new(output);
    recv_cfg.motion_scale = cfg.motion_scale;
    recv_cfg.upsampler = match &cfg.mode {
        RunMode::Bicubic { .. } => Upsampler::Bicubic,
        RunMode::Adaptive { upsampler, .. } => *upsampler,
        _ => Upsampler::Neural,
    };
    let mut receiver = Receiver::new(recv_cfg, bank)?;

    let profile = match (&cfg.mode, &cfg.profile) {
        (RunMode::Adaptive { .. }, Some(p)) => Some(p.clone()),
        (RunMode::Adaptive { .. }, None) => {
            let frames = (0..PROFILE_FRAMES.min(count)).map(|i| source.frame(i)).collect::<Result<Vec<_>>>()?;
            Some(codec::profile(&[frames], fps)?)
        }
        _ => None,
    };

    let ladder = &cfg.ladder;
    let mode = cfg.mode.clone();
    let profile_ref = profile.as_ref();
    let decisions = std::sync::Mutex::new(Vec::new());
    let plan = |index: usize, t: f64| -> Result<SendMode> {
        Ok(match &mode {
            RunMode::Neural { resolution, kbps } | RunMode::Bicubic { resolution, kbps } => SendMode::Neural {
                resolution: *resolution,
                target_kbps: *kbps,
            },
            RunMode::Fallback { kbps } => SendMode::Fallback { target_kbps: *kbps },
            RunMode::KeypointsOnly => SendMode::KeypointsOnly,
            RunMode::Adaptive { trace, .. } => {
                let d = controller_step(ladder, trace, t, profile_ref.expect("adaptive profile"))?;
                decisions.lock().unwrap().push((index, d));
                match d.mode {
                    PfMode::Fallback => SendMode::Fallback {
                        target_kbps: d.codec_target_kbps,
                    },
                    PfMode::Neural if d.resolution >= output => {
                        return Err(Error::invalid(format!(
                            "ladder picks {} for a {output} input",
                            d.resolution
                        )))
                    }
                    PfMode::Neural => SendMode::Neural {
                        resolution: d.resolution,
                        target_kbps: d.codec_target_kbps,
                    },
                }
            }
        })
    };

    let mut sink = Sink {
        video: match video_out {
            Some(p) => Some(BufWriter::new(File::create(p)?)),
            None => None,
        },
    };
    let mut records = Vec::with_capacity(count);
    let mut payload = Vec::with_capacity(count);
    let consume = |sent: &crate::streaming::SendRecord,
                   rx: &crate::streaming::ReceivedFrame,
                   timing: &crate::streaming::FrameTiming|
     -> Result<()> {
        let truth = source.frame(sent.index)?;
        let (psnr_db, ssim, ssim_db) = metrics::quality(&rx.frame, &truth)?;
        if let Some(v) = sink.video.as_mut() {
            v.write_all(&frame_to_rgb8(&rx.frame))?;
        }
        records.push(MetricsRecord {
            frame_id: rx.frame_id,
            psnr_db,
            ssim,
            ssim_db,
            bytes_on_wire: rx.bytes_on_wire,
            latency_ms: timing.latency_ms,
            resolution_id: rx.resolution_id,
            mode: rx.mode,
        });
        payload.push((sent.payload_bytes, sent.quality, sent.overshoot, sent.resolution));
        Ok(())
    };
    channel_run(&mut sender, &mut receiver, &source, &cfg.link, cfg.compute, plan, consume)?;
    if let Some(mut v) = sink.video.take() {
        v.flush()?;
    }

    let duration = count as f64 / fps;
    let summary = account(&records, duration)?;
    let kbps = |bytes: usize| bytes as f64 * 8.0 * fps / 1000.0;
    let payload_kbps = payload.iter().map(|p| kbps(p.0)).sum::<f64>() / count as f64;

    let mut adapt = Vec::new();
    for (index, d) in decisions.into_inner().unwrap() {
        let (bytes, quality, overshoot, resolution) = payload[index];
        adapt.push(AdaptRow {
            time_s: index as f64 / fps,
            target_kbps: d.target_kbps,
            codec_target_kbps: d.codec_target_kbps,
            achieved_kbps: kbps(bytes),
            resolution,
            mode: records[index].mode,
            quality: quality.unwrap_or(COARSEST_QUALITY),
            overshoot,
            ssim_db: records[index].ssim_db,
        });
    }
    Ok(RunReport {
        records,
        adapt,
        summary,
        payload_kbps,
        profile,
    })
}

struct Prefix<'a> {
    inner: &'a dyn FrameSource,
    count: usize,
}

impl FrameSource for Prefix<'_> {
    fn len(&self) -> usize {
        self.count
    }

    fn frame(&self, index: usize) -> Result<crate::tensor::Frame> {
        if index >= self.count {
            return Err(Error::invalid(format!("frame {index} out of range")));
        }
        self.inner.frame(index)
    }
}

fn write_outputs(cfg: &RunConfig, report: &RunReport, video: &Path) -> Result<()> {
    metrics::write_csv(&cfg.out_dir.join("metrics.csv"), &report.records)?;
    metrics::write_json(&cfg.out_dir.join("summary.json"), &report.summary)?;
    let (_, fps, size) = cfg.input.open()?;
    let meta = VideoMeta {
        width: size,
        height: size,
        fps: cfg.fps.unwrap_or(fps),
        frame_count: report.records.len(),
    };
    fs::write(sidecar_path(video), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

/// Streams the input through one sender/receiver pair and writes per-frame
/// metrics, a summary and the reconstructed video.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunReport> {
    fs::create_dir_all(&cfg.out_dir)?;
    let video = cfg.out_dir.join("reconstructed.rgb");
    let report = execute(cfg, Some(&video))?;
    write_outputs(cfg, &report, &video)?;
    if !report.adapt.is_empty() {
        metrics::write_csv(&cfg.out_dir.join("adapt.csv"), &report.adapt)?;
    }
    Ok(report)
}

/// An adaptive run; additionally writes the `adapt.csv` time series.
pub fn cmd_adapt(cfg: &RunConfig) -> Result<RunReport> {
    if !matches!(cfg.mode, RunMode::Adaptive { .. }) {
        return Err(Error::invalid("adapt needs a target-bitrate trace"));
    }
    cmd_run(cfg)
}

/// Measures the rate range of every resolution on a corpus and writes `profile.json`.
pub fn cmd_profile(corpus: &[VideoInput], fps: f64, max_frames: usize, out_dir: &Path) -> Result<RateProfile> {
    if corpus.is_empty() {
        return Err(Error::invalid("profile needs at least one input"));
    }
    let mut sequences = Vec::new();
    for input in corpus {
        let (src, _, _) = input.open()?;
        let n = src.len().min(max_frames.max(1));
        sequences.push((0..n).map(|i| src.frame(i)).collect::<Result<Vec<_>>>()?);
    }
    let profile = codec::profile(&sequences, fps)?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("profile.json"), profile.to_json()?)?;
    Ok(profile)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RdPoint {
    pub mode: Mode,
    pub resolution: usize,
    pub kbps: f64,
}

/// `MODE:RESOLUTION:KBPS`, where MODE is neural, bicubic, fallback or keypoints.
impl FromStr for RdPoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("operating point `{s}` is not MODE:RESOLUTION:KBPS"));
        let parts: Vec<&str> = s.split(':').collect();
        let [mode, res, kbps] = parts.as_slice() else {
            return Err(bad());
        };
        let mode = match *mode {
            "neural" => Mode::Neural,
            "bicubic" => Mode::Bicubic,
            "fallback" => Mode::Fallback,
            "keypoints" => Mode::KeypointsOnly,
            _ => return Err(bad()),
        };
        Ok(RdPoint {
            mode,
            resolution: res.parse().map_err(|_| bad())?,
            kbps: kbps.parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RdRow {
    pub mode: Mode,
    pub resolution: usize,
    pub target_kbps: f64,
    pub bitrate_kbps: f64,
    pub psnr_db: f64,
    pub ssim_db: f64,
}

/// Runs each operating point on the same input and writes `rd_curve.csv`,
/// sorted by achieved bitrate.
pub fn cmd_rd_curve(base: &RunConfig, points: &[RdPoint]) -> Result<Vec<RdRow>> {
    if points.is_empty() {
        return Err(Error::invalid("rd-curve needs at least one operating point"));
    }
    let mut rows = Vec::new();
    for p in points {
        let mut cfg = base.clone();
        cfg.mode = match p.mode {
            Mode::Neural => RunMode::Neural {
                resolution: p.resolution,
                kbps: p.kbps,
            },
            Mode::Bicubic => RunMode::Bicubic {
                resolution: p.resolution,
                kbps: p.kbps,
            },
            Mode::Fallback => RunMode::Fallback { kbps: p.kbps },
            Mode::KeypointsOnly => RunMode::KeypointsOnly,
        };
        let r = execute(&cfg, None)?;
        rows.push(RdRow {
            mode: p.mode,
            resolution: p.resolution,
            target_kbps: p.kbps,
            bitrate_kbps: r.payload_kbps,
            psnr_db: r.summary.mean_psnr_db,
            ssim_db: r.summary.mean_ssim_db,
        });
    }
    rows.sort_by(|a, b| a.bitrate_kbps.total_cmp(&b.bitrate_kbps));
    fs::create_dir_all(&base.out_dir)?;
    metrics::write_csv(&base.out_dir.join("rd_curve.csv"), &rows)?;
    Ok(rows)
}
