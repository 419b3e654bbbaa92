//! Reconstruct a 256×256 frame from a 64×64 low-resolution target and a
//! full-resolution reference, using randomly initialized weights.
//!
//!     cargo run --example reconstruct

use std::time::Instant;

use refsr::codec::{bicubic_upsample, downsample};
use refsr::metrics::psnr;
use refsr::model::Model;
use refsr::synth::{PredictOptions, SynthesizerConfig};
use refsr::video::SyntheticClip;

fn main() -> refsr::Result<()> {
    let cfg = SynthesizerConfig::for_output(256)?;
    let model = Model::random(cfg, 7)?;
    let clip = SyntheticClip::new(256, 1);

    let reference = model.prepare_reference(&clip.frame(0))?;
    let truth = clip.frame(5);
    let lr = downsample(&truth, 64)?;

    let t = Instant::now();
    let out = model.reconstruct(&reference, &lr, &PredictOptions::default())?;
    println!("reconstructed {:?} in {:.2?}", out.dims(), t.elapsed());

    // Random weights: the output only has the right shape and range.
    let (lo, hi) = out.data().iter().fold((f32::MAX, f32::MIN), |(l, h), &v| (l.min(v), h.max(v)));
    println!("output range [{lo:.3}, {hi:.3}]");
    println!("psnr neural  {:.2} dB", psnr(&out, &truth)?);
    println!("psnr bicubic {:.2} dB", psnr(&bicubic_upsample(&lr, 256)?, &truth)?);
    Ok(())
}
