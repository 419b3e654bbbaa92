//! Replay a clip through sender, a bandwidth-limited link and receiver,
//! printing per-frame bytes and latency.
//!
//!     cargo run --example stream

use refsr::streaming::{
    channel_run, ComputeModel, LinkTrace, Receiver, ReceiverConfig, SendMode, Sender, SenderConfig, Upsampler,
};
use refsr::video::SyntheticClip;

fn main() -> refsr::Result<()> {
    let frames = SyntheticClip::new(256, 4).frames(12);
    let mut sender = Sender::new(SenderConfig::new(256, 30.0))?;
    let mut rcfg = ReceiverConfig::new(256);
    rcfg.upsampler = Upsampler::Bicubic;
    let mut receiver = Receiver::new(rcfg, None)?;

    // 300 kbps, 20 ms one-way; the first frame also carries the reference.
    let link = LinkTrace::constant(300_000.0 / 8.0, 0.020)?;
    let compute = ComputeModel::Fixed {
        sender_s: 0.005,
        receiver_s: 0.010,
    };
    let plan = |_: usize, _: f64| {
        Ok(SendMode::Neural {
            resolution: 128,
            target_kbps: 150.0,
        })
    };
    let consume = |sent: &refsr::streaming::SendRecord, rx: &refsr::streaming::ReceivedFrame, t: &refsr::streaming::FrameTiming| {
        println!(
            "frame {:>2}: {:>6} B ({:>5} reference), {:>7.1} ms, {}",
            t.frame_id,
            sent.bytes_on_wire,
            sent.reference_bytes,
            t.latency_ms,
            rx.mode.as_str()
        );
        Ok(())
    };
    channel_run(&mut sender, &mut receiver, &frames, &link, compute, plan, consume)?;
    Ok(())
}
