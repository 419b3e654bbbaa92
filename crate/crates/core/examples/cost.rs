//! Compare the multiply-accumulate cost of running motion estimation at
//! 64×64 against running it at the output resolution.
//!
//!     cargo run --example cost

use refsr::synth::{multiscale_cost_report, SynthesizerConfig};

fn main() -> refsr::Result<()> {
    for (out, lr) in [(256, 64), (512, 128), (1024, 256)] {
        let r = multiscale_cost_report(&SynthesizerConfig::for_output(out)?, lr);
        println!(
            "{out:>4} from {lr:>3}: motion {:>6.1} vs {:>8.1} GMAC ({:.0}x), pipeline {:.2}x cheaper",
            r.motion_macs_low as f64 / 1e9,
            r.motion_macs_full as f64 / 1e9,
            r.motion_ratio(),
            r.pipeline_ratio()
        );
    }
    Ok(())
}
