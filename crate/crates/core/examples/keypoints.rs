//! Detect keypoints and pack them into the fixed-size wire payload.
//!
//!     cargo run --example keypoints

use refsr::model::Model;
use refsr::streaming::{decode_keypoints, encode_keypoints, packetize, StreamId, DEFAULT_MTU, HEADER_LEN};
use refsr::synth::{MotionScale, SynthesizerConfig};
use refsr::video::SyntheticClip;

fn main() -> refsr::Result<()> {
    let model = Model::random(SynthesizerConfig::for_output(256)?, 3)?;
    let frame = SyntheticClip::new(256, 0).frame(0);
    let kp = model.keypoints(&frame, MotionScale::Low)?;

    let payload = encode_keypoints(&kp)?;
    let back = decode_keypoints(&payload)?;
    let err = kp
        .locations
        .iter()
        .zip(&back.locations)
        .flat_map(|(a, b)| [(a[0] - b[0]).abs(), (a[1] - b[1]).abs()])
        .fold(0.0f32, f32::max);
    println!("payload {} bytes, max location error {err:.5}", payload.len());

    let packets = packetize(StreamId::Keypoints, 0, 0, &payload, DEFAULT_MTU)?;
    let wire: usize = packets.iter().map(|p| p.wire_len()).sum();
    println!(
        "{} packet(s), {wire} bytes with {HEADER_LEN}-byte headers: {:.1} kbps at 30 fps",
        packets.len(),
        wire as f64 * 8.0 * 30.0 / 1000.0
    );
    Ok(())
}
