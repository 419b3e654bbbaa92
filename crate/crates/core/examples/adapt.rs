//! Follow a falling target bitrate: the controller walks down the
//! resolution ladder and the CSV shows where each switch happened.
//!
//!     cargo run --example adapt

use refsr::adaptation::TargetTrace;
use refsr::experiments::{cmd_adapt, RunConfig, RunMode, VideoInput};
use refsr::streaming::Upsampler;

fn main() -> refsr::Result<()> {
    // Stepwise targets, one per frame: 800 kbps down to 20 kbps in 10 kbps steps.
    let trace = TargetTrace::new((0..79).map(|k| (k as f64 / 30.0, 800.0 - 10.0 * k as f64)).collect())?;
    let input = VideoInput::Synthetic {
        size: 1024,
        frames: 79,
        seed: 0,
    };
    let out = std::env::temp_dir().join("refsr-adapt");
    let cfg = RunConfig::new(
        input,
        RunMode::Adaptive {
            trace,
            upsampler: Upsampler::Bicubic,
        },
        &out,
    );
    let report = cmd_adapt(&cfg)?;

    let mut last = 0;
    for row in &report.adapt {
        if row.resolution != last {
            println!(
                "t={:.3}s target {:>6.1} kbps -> {} ({})",
                row.time_s,
                row.target_kbps,
                row.resolution,
                row.mode.as_str()
            );
            last = row.resolution;
        }
    }
    println!("wrote {}", out.join("adapt.csv").display());
    Ok(())
}
