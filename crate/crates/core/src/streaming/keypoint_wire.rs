//! 100-byte keypoint payload: per keypoint, x and y as u8 grid indices over
//! `[-1, 1]`, then the four jacobian entries (row-major) as little-endian
//! half floats.

use half::f16;

use crate::error::{Error, Result};
use crate::keypoints::{KeypointSet, NUM_KEYPOINTS};

pub const BYTES_PER_KEYPOINT: usize = 2 + 4 * 2;
pub const KEYPOINT_PAYLOAD_LEN: usize = NUM_KEYPOINTS * BYTES_PER_KEYPOINT;

fn quantize(v: f32) -> u8 {
    ((v + 1.0) * 0.5 * 255.0).round().clamp(0.0, 255.0) as u8
}

fn dequantize(b: u8) -> f32 {
    (f64::from(b) / 127.5 - 1.0) as f32
}

pub fn encode_keypoints(kp: &KeypointSet) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(KEYPOINT_PAYLOAD_LEN);
    for (loc, jac) in kp.locations.iter().zip(&kp.jacobians) {
        if loc.iter().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!("keypoint location {loc:?} outside [-1, 1]")));
        }
        out.push(quantize(loc[0]));
        out.push(quantize(loc[1]));
        for v in jac.iter().flatten() {
            out.extend_from_slice(&f16::from_f32(*v).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_keypoints(bytes: &[u8]) -> Result<KeypointSet> {
    if bytes.len() != KEYPOINT_PAYLOAD_LEN {
        return Err(Error::Packet(format!(
            "keypoint payload is {} bytes, expected {KEYPOINT_PAYLOAD_LEN}",
            bytes.len()
        )));
    }
    let mut locations = [[0f32; 2]; NUM_KEYPOINTS];
    let mut jacobians = [[[0f32; 2]; 2]; NUM_KEYPOINTS];
    for (k, chunk) in bytes.chunks_exact(BYTES_PER_KEYPOINT).enumerate() {
        locations[k] = [dequantize(chunk[0]), dequantize(chunk[1])];
        for i in 0..4 {
            let h = f16::from_le_bytes([chunk[2 + 2 * i], chunk[3 + 2 * i]]);
            jacobians[k][i / 2][i % 2] = h.to_f32();
        }
    }
    Ok(KeypointSet::new(locations, jacobians))
}
