use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use refsr::adaptation::{BitrateLadder, TargetTrace};
use refsr::codec::RateProfile;
use refsr::experiments::{self, RdPoint, RunConfig, RunMode, VideoInput};
use refsr::streaming::{ComputeModel, LinkTrace, Upsampler};
use refsr::synth::MotionScale;
use refsr::Error;

#[derive(Parser)]
#[command(name = "refsr", version, about = "Low-bitrate video call replay and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measure per-resolution codec bitrate ranges; writes profile.json.
    Profile {
        /// Raw videos (.rgb with .json sidecar).
        #[arg(long = "input")]
        inputs: Vec<PathBuf>,
        /// Synthetic clips, SIZE:FRAMES[:SEED].
        #[arg(long = "synthetic")]
        synthetic: Vec<String>,
        #[arg(long, default_value_t = experiments::DEFAULT_FPS)]
        fps: f64,
        #[arg(long, default_value_t = 10)]
        max_frames: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a video at one operating point; writes metrics.csv, summary.json, reconstructed.rgb.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = ModeArg::Neural)]
        mode: ModeArg,
        /// Low-resolution side for neural and bicubic modes.
        #[arg(long, default_value_t = 256)]
        resolution: usize,
        #[arg(long, default_value_t = 200.0)]
        kbps: f64,
    },
    /// Sweep operating points; writes rd_curve.csv.
    RdCurve {
        #[command(flatten)]
        common: Common,
        /// MODE:RESOLUTION:KBPS, repeatable.
        #[arg(long = "point", required = true)]
        points: Vec<String>,
    },
    /// Follow a target-bitrate trace; also writes adapt.csv.
    Adapt {
        #[command(flatten)]
        common: Common,
        /// CSV with header time_s,target_kbps.
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_enum, default_value_t = UpsamplerArg::Neural)]
        upsampler: UpsamplerArg,
    },
}

#[derive(Args)]
struct Common {
    /// Raw video (.rgb with .json sidecar).
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    input: Option<PathBuf>,
    /// Synthetic clip, SIZE:FRAMES[:SEED].
    #[arg(long)]
    synthetic: Option<String>,
    /// Weight directory; random weights from --seed when absent.
    #[arg(long, env = "REFSR_WEIGHTS_DIR")]
    weights: Option<PathBuf>,
    /// Ladder thresholds in Kbps, ascending.
    #[arg(long, value_delimiter = ',', default_values_t = [30.0, 180.0, 550.0])]
    ladder_kbps: Vec<f64>,
    /// Ladder resolutions, one more than thresholds.
    #[arg(long, value_delimiter = ',', default_values_t = [128, 256, 512, 1024])]
    ladder_resolutions: Vec<usize>,
    /// Overrides the input frame rate.
    #[arg(long)]
    fps: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = refsr::streaming::DEFAULT_MTU)]
    mtu: usize,
    /// Link bandwidth; unlimited when absent.
    #[arg(long)]
    link_kbps: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    delay_ms: f64,
    /// Use measured compute time in latency (not reproducible).
    #[arg(long)]
    measured_compute: bool,
    /// Run motion estimation at output resolution.
    #[arg(long)]
    full_res_motion: bool,
    #[arg(long)]
    max_frames: Option<usize>,
    /// profile.json for adaptive runs.
    #[arg(long)]
    profile: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Neural,
    Bicubic,
    Fallback,
    Keypoints,
}

#[derive(Clone, Copy, ValueEnum)]
enum UpsamplerArg {
    Neural,
    Bicubic,
}

impl Common {
    fn config(self, mode: RunMode) -> refsr::Result<RunConfig> {
        let input = match (self.input, self.synthetic) {
            (Some(p), _) => VideoInput::Raw(p),
            (None, Some(s)) => s.parse()?,
            (None, None) => unreachable!("clap requires one input"),
        };
        let mut cfg = RunConfig::new(input, mode, self.out);
        cfg.weights = self.weights;
        cfg.ladder = BitrateLadder::new(self.ladder_kbps, self.ladder_resolutions)?;
        cfg.fps = self.fps;
        cfg.seed = self.seed;
        cfg.mtu = self.mtu;
        cfg.link = match self.link_kbps {
            Some(k) => LinkTrace::constant(k * 1000.0 / 8.0, self.delay_ms / 1000.0)?,
            None => LinkTrace::unlimited(),
        };
        if self.measured_compute {
            cfg.compute = ComputeModel::Measured;
        }
        if self.full_res_motion {
            cfg.motion_scale = MotionScale::Full;
        }
        cfg.max_frames = self.max_frames;
        cfg.profile = match self.profile {
            Some(p) => Some(RateProfile::from_json(&std::fs::read_to_string(p)?)?),
            None => None,
        };
        Ok(cfg)
    }
}

fn run(cli: Cli) -> refsr::Result<()> {
    match cli.command {
        Command::Profile {
            inputs,
            synthetic,
            fps,
            max_frames,
            out,
        } => {
            let mut corpus: Vec<VideoInput> = inputs.into_iter().map(VideoInput::Raw).collect();
            for s in synthetic {
                corpus.push(s.parse()?);
            }
            let p = experiments::cmd_profile(&corpus, fps, max_frames, &out)?;
            for r in &p.ranges {
                println!("{:>5}  {:>10.1} .. {:>10.1} kbps", r.resolution, r.min_kbps, r.max_kbps);
            }
        }
        Command::Run {
            common,
            mode,
            resolution,
            kbps,
        } => {
            let mode = match mode {
                ModeArg::Neural => RunMode::Neural { resolution, kbps },
                ModeArg::Bicubic => RunMode::Bicubic { resolution, kbps },
                ModeArg::Fallback => RunMode::Fallback { kbps },
                ModeArg::Keypoints => RunMode::KeypointsOnly,
            };
            let r = experiments::cmd_run(&common.config(mode)?)?;
            print_summary(&r.summary);
        }
        Command::RdCurve { common, points } => {
            let points = points.iter().map(|p| p.parse()).collect::<refsr::Result<Vec<RdPoint>>>()?;
            let cfg = common.config(RunMode::KeypointsOnly)?;
            for row in experiments::cmd_rd_curve(&cfg, &points)? {
                println!(
                    "{:<10} {:>5} {:>9.1} kbps  psnr {:>6.2}  ssim {:>6.2} dB",
                    row.mode.as_str(),
                    row.resolution,
                    row.bitrate_kbps,
                    row.psnr_db,
                    row.ssim_db
                );
            }
        }
        Command::Adapt {
            common,
            trace,
            upsampler,
        } => {
            let trace = TargetTrace::load_csv(&trace)?;
            let upsampler = match upsampler {
                UpsamplerArg::Neural => Upsampler::Neural,
                UpsamplerArg::Bicubic => Upsampler::Bicubic,
            };
            let r = experiments::cmd_adapt(&common.config(RunMode::Adaptive { trace, upsampler })?)?;
            print_summary(&r.summary);
        }
    }
    Ok(())
}

fn print_summary(s: &refsr::metrics::Summary) {
    println!(
        "{} frames, {:.1} kbps, psnr {:.2} dB, ssim {:.2} dB, latency {:.1} ms",
        s.frames, s.mean_kbps, s.mean_psnr_db, s.mean_ssim_db, s.mean_latency_ms
    );
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Stage { source, .. } => exit_code(source),
        Error::InvalidArgument(_) => 2,
        Error::InputFormat(_) | Error::WeightFormat(_) | Error::Csv(_) | Error::Json(_) => 3,
        Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
