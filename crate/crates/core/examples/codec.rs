//! Encode a frame across the quality range, serialize it, and hit a bitrate
//! target with rate control.
//!
//!     cargo run --example codec

use refsr::codec::{self, decode, decode_bytes, encode, encode_at_bitrate};
use refsr::metrics::psnr;
use refsr::video::SyntheticClip;

fn main() -> refsr::Result<()> {
    let frame = SyntheticClip::new(256, 3).frame(0);

    println!("quality    bytes   psnr");
    for q in [0u8, 16, 32, 48, 64, 96, 127] {
        let enc = encode(&frame, q)?;
        println!("{q:>7} {:>8} {:>6.2}", enc.byte_len(), psnr(&decode(&enc)?, &frame)?);
    }

    let enc = encode(&frame, 40)?;
    let bytes = enc.to_bytes();
    let again = decode_bytes(&bytes)?;
    assert_eq!(again.data(), decode(&enc)?.data());
    println!("serialized {} bytes, round trip exact", bytes.len());

    for kbps in [50.0, 200.0, 800.0] {
        let rc = encode_at_bitrate(&frame, kbps, 30.0)?;
        println!(
            "{kbps:>5} kbps: budget {:>5} B, used {:>5} B at q{}{}",
            rc.budget_bytes,
            rc.frame.byte_len(),
            rc.frame.quality,
            if rc.overshoot { " (overshoot)" } else { "" }
        );
    }
    println!("resolutions with ids: {:?}", codec::RESOLUTIONS);
    Ok(())
}
