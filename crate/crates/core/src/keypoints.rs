//! Keypoint and jacobian extraction from 64×64 frames.

use crate::error::{Error, Result};
use crate::kernels::{pixel_to_normalized, softmax_spatial, Mat2, MAT2_IDENTITY};
use crate::layers::{conv_macs, Conv};
use crate::tensor::{Frame, Tensor};
use crate::unet::{UNetSpec, UNetTrunk};
use crate::weights::{ArchitectureSpec, Init, WeightStore};

pub const NUM_KEYPOINTS: usize = 10;
/// Side length of the frames the detector and motion estimator operate on.
pub const MOTION_RESOLUTION: usize = 64;
const HEAD_KERNEL: usize = 7;

/// Ten normalized keypoint locations with a 2×2 local jacobian each.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KeypointSet {
    /// `(x, y)` in `[-1, 1]`.
    pub locations: [[f32; 2]; NUM_KEYPOINTS],
    pub jacobians: [Mat2; NUM_KEYPOINTS],
}

impl KeypointSet {
    pub fn new(locations: [[f32; 2]; NUM_KEYPOINTS], jacobians: [Mat2; NUM_KEYPOINTS]) -> Self {
        Self {
            locations,
            jacobians,
        }
    }

    /// All keypoints at `locations` with identity jacobians.
    pub fn with_identity_jacobians(locations: [[f32; 2]; NUM_KEYPOINTS]) -> Self {
        Self::new(locations, [MAT2_IDENTITY; NUM_KEYPOINTS])
    }
}

/// Probability-weighted centroid and jacobian of each keypoint channel.
///
/// `logits` holds one channel per keypoint; `jacobian_maps` holds four
/// channels per keypoint in row-major `[j00, j01, j10, j11]` order. Returns
/// the keypoints and the per-keypoint probability maps.
pub fn keypoints_from_maps(logits: &Tensor, jacobian_maps: &Tensor) -> Result<(KeypointSet, Tensor)> {
    let (c, h, w) = logits.dims();
    if c != NUM_KEYPOINTS || jacobian_maps.dims() != (4 * NUM_KEYPOINTS, h, w) {
        return Err(Error::shape(
            "keypoints_from_maps",
            format!("logits {:?}, jacobian maps {:?}", logits, jacobian_maps),
        ));
    }
    let probs = softmax_spatial(logits);
    let gx: Vec<f64> = (0..w).map(|x| pixel_to_normalized(x, w) as f64).collect();
    let gy: Vec<f64> = (0..h).map(|y| pixel_to_normalized(y, h) as f64).collect();
    let mut locations = [[0.0f32; 2]; NUM_KEYPOINTS];
    let mut jacobians = [MAT2_IDENTITY; NUM_KEYPOINTS];
    for k in 0..NUM_KEYPOINTS {
        let p = probs.channel(k);
        let (mut sx, mut sy) = (0.0f64, 0.0f64);
        let mut jac = [0.0f64; 4];
        let maps: Vec<&[f32]> = (0..4).map(|e| jacobian_maps.channel(4 * k + e)).collect();
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let pi = p[i] as f64;
                sx += pi * gx[x];
                sy += pi * gy[y];
                for (acc, m) in jac.iter_mut().zip(&maps) {
                    *acc += pi * m[i] as f64;
                }
            }
        }
        // A convex combination of in-range grid points; clamp away rounding.
        locations[k] = [(sx as f32).clamp(-1.0, 1.0), (sy as f32).clamp(-1.0, 1.0)];
        jacobians[k] = [[jac[0] as f32, jac[1] as f32], [jac[2] as f32, jac[3] as f32]];
    }
    Ok((KeypointSet::new(locations, jacobians), probs))
}

/// UNet trunk plus the 7×7 location and jacobian heads.
///
/// Parameters: `{prefix}.unet.*`, `{prefix}.kp_head.*` (10 channels) and
/// `{prefix}.jacobian_head.*` (40 channels).
#[derive(Clone, Debug)]
pub struct KeypointDetector {
    trunk: UNetTrunk,
    kp_head: Conv,
    jacobian_head: Conv,
}

impl KeypointDetector {
    pub fn unet_spec() -> UNetSpec {
        UNetSpec::new(3)
    }

    pub fn architecture(prefix: &str) -> ArchitectureSpec {
        let spec = Self::unet_spec();
        let mut arch = spec.architecture(&format!("{prefix}.unet"));
        let f = spec.out_channels();
        arch.conv(&format!("{prefix}.kp_head"), NUM_KEYPOINTS, f, HEAD_KERNEL);
        let fan_in = f * HEAD_KERNEL * HEAD_KERNEL;
        arch.push(
            format!("{prefix}.jacobian_head.weight"),
            vec![4 * NUM_KEYPOINTS, f, HEAD_KERNEL, HEAD_KERNEL],
            Init::FanInUniform { fan_in },
        );
        // Identity jacobians before any learned offset.
        arch.push(
            format!("{prefix}.jacobian_head.bias"),
            vec![4 * NUM_KEYPOINTS],
            Init::Pattern(vec![1.0, 0.0, 0.0, 1.0]),
        );
        arch
    }

    pub fn build(store: &WeightStore, prefix: &str) -> Result<Self> {
        let spec = Self::unet_spec();
        let f = spec.out_channels();
        Ok(Self {
            trunk: UNetTrunk::build(store, &format!("{prefix}.unet"), spec)?,
            kp_head: Conv::load(store, &format!("{prefix}.kp_head"), NUM_KEYPOINTS, f, HEAD_KERNEL)?,
            jacobian_head: Conv::load(store, &format!("{prefix}.jacobian_head"), 4 * NUM_KEYPOINTS, f, HEAD_KERNEL)?,
        })
    }

    pub fn detect(&self, frame64: &Frame) -> Result<KeypointSet> {
        if frame64.dims() != (3, MOTION_RESOLUTION, MOTION_RESOLUTION) {
            return Err(Error::shape(
                "detect_keypoints",
                format!("expected 3x64x64 frame, got {:?}", frame64),
            ));
        }
        self.detect_at(frame64)
    }

    /// Detection on any square frame whose side is a multiple of 32. Only
    /// the 64×64 path is part of the normal pipeline; larger inputs serve
    /// the full-resolution cost baseline.
    pub fn detect_at(&self, frame: &Frame) -> Result<KeypointSet> {
        let (c, h, w) = frame.dims();
        if c != 3 || h != w || h == 0 || h % 32 != 0 {
            return Err(Error::shape(
                "detect_keypoints",
                format!("expected a square 3-channel frame with side divisible by 32, got {:?}", frame),
            ));
        }
        let features = self.trunk.forward(frame)?;
        let logits = self.kp_head.forward(&features)?;
        let jac = self.jacobian_head.forward(&features)?;
        Ok(keypoints_from_maps(&logits, &jac)?.0)
    }

    /// MACs of one detection on an `s × s` frame.
    pub fn macs(s: usize) -> u64 {
        let spec = Self::unet_spec();
        let f = spec.out_channels();
        spec.macs(s, s)
            + conv_macs(NUM_KEYPOINTS, f, HEAD_KERNEL, s, s)
            + conv_macs(4 * NUM_KEYPOINTS, f, HEAD_KERNEL, s, s)
    }
}
