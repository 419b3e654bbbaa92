//! Dense motion from keypoints: heatmaps, local affine sparse motion,
//! deformed references, and the learned warping field and occlusion masks.
//!
//! Channel `k < 10` of every per-keypoint stack belongs to keypoint `k`;
//! index [`BACKGROUND`] is the static background.

use crate::error::{Error, Result};
use crate::keypoints::{KeypointSet, NUM_KEYPOINTS};
use crate::kernels::{
    grid_sample, mat2_apply, mat2_inverse, mat2_mul, pixel_to_normalized, resize_bilinear, sigmoid, softmax_channels,
    WarpField, DEFAULT_SINGULAR_EPS,
};
use crate::layers::{conv_macs, Conv};
use crate::tensor::{Frame, Tensor};
use crate::unet::{UNetSpec, UNetTrunk};
use crate::weights::{ArchitectureSpec, WeightStore};

pub const NUM_MOTIONS: usize = NUM_KEYPOINTS + 1;
pub const BACKGROUND: usize = NUM_KEYPOINTS;
/// Heatmaps + deformed RGB references + the low-resolution target.
pub const MOTION_INPUT_CHANNELS: usize = NUM_MOTIONS * (1 + 3) + 3;
pub const DEFAULT_HEATMAP_VARIANCE: f32 = 0.01;
const HEAD_KERNEL: usize = 7;

/// Target-minus-reference Gaussian bumps per keypoint plus a zero background map.
pub fn gaussian_heatmaps(
    ref_kp: &KeypointSet,
    tgt_kp: &KeypointSet,
    sigma2: f32,
    height: usize,
    width: usize,
) -> Result<Tensor> {
    if !(sigma2 > 0.0) {
        return Err(Error::invalid(format!("heatmap variance must be > 0, got {sigma2}")));
    }
    let gauss = |p: [f32; 2], gx: f32, gy: f32| {
        let (dx, dy) = (gx - p[0], gy - p[1]);
        (-0.5 * (dx * dx + dy * dy) / sigma2).exp()
    };
    let mut out = Tensor::zeros(NUM_MOTIONS, height, width);
    for k in 0..NUM_KEYPOINTS {
        let plane = out.channel_mut(k);
        for y in 0..height {
            let gy = pixel_to_normalized(y, height);
            for x in 0..width {
                let gx = pixel_to_normalized(x, width);
                plane[y * width + x] = gauss(tgt_kp.locations[k], gx, gy) - gauss(ref_kp.locations[k], gx, gy);
            }
        }
    }
    Ok(out)
}

/// The eleven candidate target→reference coordinate maps.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMotion {
    pub maps: Vec<WarpField>,
    /// Keypoints whose target jacobian was singular and fell back to identity.
    pub degenerate: [bool; NUM_KEYPOINTS],
}

/// Local affine motion around each keypoint:
/// `z ↦ p_ref + J_ref · J_tgt⁻¹ · (z − p_tgt)`, plus the identity for the background.
pub fn sparse_motion(ref_kp: &KeypointSet, tgt_kp: &KeypointSet, height: usize, width: usize) -> SparseMotion {
    let mut maps = Vec::with_capacity(NUM_MOTIONS);
    let mut degenerate = [false; NUM_KEYPOINTS];
    for k in 0..NUM_KEYPOINTS {
        let inv = mat2_inverse(&tgt_kp.jacobians[k], DEFAULT_SINGULAR_EPS);
        degenerate[k] = inv.degenerate;
        let jac = mat2_mul(&ref_kp.jacobians[k], &inv.inverse);
        let (p_ref, p_tgt) = (ref_kp.locations[k], tgt_kp.locations[k]);
        maps.push(WarpField::from_fn(height, width, |y, x| {
            let z = [pixel_to_normalized(x, width), pixel_to_normalized(y, height)];
            let d = mat2_apply(&jac, [z[0] - p_tgt[0], z[1] - p_tgt[1]]);
            [p_ref[0] + d[0], p_ref[1] + d[1]]
        }));
    }
    maps.push(WarpField::identity(height, width));
    SparseMotion { maps, degenerate }
}

/// The reference warped by each sparse-motion candidate, stacked `k`-major.
pub fn deformed_references(reference: &Frame, motion: &SparseMotion) -> Result<Tensor> {
    let warped: Vec<Tensor> = motion.maps.iter().map(|m| grid_sample(reference, m)).collect();
    Tensor::concat_channels(&warped.iter().collect::<Vec<_>>())
}

/// Interleaves `[heatmap_k, deformed_k (RGB)]` for every motion, then
/// appends the low-resolution target.
pub fn assemble_motion_input(heatmaps: &Tensor, deformed: &Tensor, target: &Frame) -> Result<Tensor> {
    let (_, h, w) = heatmaps.dims();
    if heatmaps.channels() != NUM_MOTIONS
        || deformed.dims() != (3 * NUM_MOTIONS, h, w)
        || target.dims() != (3, h, w)
    {
        return Err(Error::shape(
            "assemble_motion_input",
            format!("heatmaps {:?}, deformed {:?}, target {:?}", heatmaps, deformed, target),
        ));
    }
    let mut parts = Vec::with_capacity(2 * NUM_MOTIONS + 1);
    for k in 0..NUM_MOTIONS {
        parts.push(heatmaps.slice_channels(k, k + 1)?);
        parts.push(deformed.slice_channels(3 * k, 3 * k + 3)?);
    }
    parts.push(target.clone());
    Tensor::concat_channels(&parts.iter().collect::<Vec<_>>())
}

/// Per-pixel convex combination of the sparse-motion candidates.
pub fn combine_sparse_motion(motion: &SparseMotion, weights: &Tensor) -> Result<WarpField> {
    let first = &motion.maps[0];
    let (h, w) = (first.height(), first.width());
    if weights.dims() != (NUM_MOTIONS, h, w) || motion.maps.len() != NUM_MOTIONS {
        return Err(Error::shape(
            "combine_sparse_motion",
            format!("weights {:?} for {} maps of {h}x{w}", weights, motion.maps.len()),
        ));
    }
    let n = h * w;
    let mut coords = vec![[0.0f32; 2]; n];
    for (k, map) in motion.maps.iter().enumerate() {
        let wk = weights.channel(k);
        for ((c, m), &wv) in coords.iter_mut().zip(map.coords()).zip(wk) {
            c[0] += wv * m[0];
            c[1] += wv * m[1];
        }
    }
    WarpField::from_coords(h, w, coords)
}

/// Pixelwise weights for the warped-HR (A), unwarped-HR (B) and
/// low-resolution (C) pathways, summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct OcclusionMasks {
    masks: Tensor,
}

impl OcclusionMasks {
    pub fn from_tensor(masks: Tensor) -> Result<Self> {
        if masks.channels() != 3 {
            return Err(Error::shape("OcclusionMasks", format!("need 3 channels, got {:?}", masks)));
        }
        Ok(Self { masks })
    }

    /// Constant masks; the weights are normalized to sum to one.
    pub fn constant(a: f32, b: f32, c: f32, height: usize, width: usize) -> Result<Self> {
        let s = a + b + c;
        if !(s > 0.0) || a < 0.0 || b < 0.0 || c < 0.0 {
            return Err(Error::invalid(format!("mask weights ({a}, {b}, {c}) must be >= 0 with a positive sum")));
        }
        let vals = [a / s, b / s, c / s];
        Ok(Self {
            masks: Tensor::from_fn(3, height, width, |ch, _, _| vals[ch]),
        })
    }

    pub fn tensor(&self) -> &Tensor {
        &self.masks
    }

    pub fn height(&self) -> usize {
        self.masks.height()
    }

    pub fn width(&self) -> usize {
        self.masks.width()
    }

    pub fn warped(&self) -> Tensor {
        self.masks.slice_channels(0, 1).expect("3 channels")
    }

    pub fn unwarped(&self) -> Tensor {
        self.masks.slice_channels(1, 2).expect("3 channels")
    }

    pub fn lowres(&self) -> Tensor {
        self.masks.slice_channels(2, 3).expect("3 channels")
    }

    /// `A + B`: how much of each pixel comes from the high-resolution reference.
    pub fn hr_visibility(&self) -> Tensor {
        self.warped().add(&self.unwarped()).expect("same dims")
    }

    /// Drops the low-resolution pathway and renormalizes A and B.
    pub fn without_lowres(&self) -> Self {
        let n = self.masks.plane_len();
        let d = self.masks.data();
        let mut out = Tensor::zeros(3, self.height(), self.width());
        let o = out.data_mut();
        for i in 0..n {
            let (a, b) = (d[i], d[n + i]);
            let s = a + b;
            let (a, b) = if s > 0.0 { (a / s, b / s) } else { (0.5, 0.5) };
            o[i] = a;
            o[n + i] = b;
        }
        Self { masks: out }
    }

    pub fn resize(&self, height: usize, width: usize) -> Self {
        Self {
            masks: resize_bilinear(&self.masks, height, width),
        }
    }

    /// Largest deviation of `A + B + C` from one.
    pub fn max_sum_error(&self) -> f32 {
        let n = self.masks.plane_len();
        let d = self.masks.data();
        (0..n)
            .map(|i| (d[i] + d[n + i] + d[2 * n + i] - 1.0).abs())
            .fold(0.0, f32::max)
    }
}

#[derive(Clone, Debug)]
pub struct MotionOutput {
    pub warp: WarpField,
    pub masks: OcclusionMasks,
    /// Softmaxed per-pixel weights over the eleven candidates.
    pub deformation: Tensor,
    pub sparse: SparseMotion,
}

/// UNet over the 47-channel motion input, followed by the deformation head
/// and three occlusion heads.
///
/// Parameters: `{prefix}.unet.*`, `{prefix}.deformation_head.*` and
/// `{prefix}.occlusion_head{0,1,2}.*` (A, B, C).
#[derive(Clone, Debug)]
pub struct MotionEstimator {
    trunk: UNetTrunk,
    deformation_head: Conv,
    occlusion_heads: [Conv; 3],
    heatmap_variance: f32,
}

impl MotionEstimator {
    pub fn unet_spec() -> UNetSpec {
        UNetSpec::new(MOTION_INPUT_CHANNELS)
    }

    pub fn architecture(prefix: &str) -> ArchitectureSpec {
        let spec = Self::unet_spec();
        let f = spec.out_channels();
        let mut arch = spec.architecture(&format!("{prefix}.unet"));
        arch.conv(&format!("{prefix}.deformation_head"), NUM_MOTIONS, f, HEAD_KERNEL);
        for i in 0..3 {
            arch.conv(&format!("{prefix}.occlusion_head{i}"), 1, f, HEAD_KERNEL);
        }
        arch
    }

    pub fn build(store: &WeightStore, prefix: &str) -> Result<Self> {
        let spec = Self::unet_spec();
        let f = spec.out_channels();
        let head = |i: usize| Conv::load(store, &format!("{prefix}.occlusion_head{i}"), 1, f, HEAD_KERNEL);
        Ok(Self {
            trunk: UNetTrunk::build(store, &format!("{prefix}.unet"), spec)?,
            deformation_head: Conv::load(store, &format!("{prefix}.deformation_head"), NUM_MOTIONS, f, HEAD_KERNEL)?,
            occlusion_heads: [head(0)?, head(1)?, head(2)?],
            heatmap_variance: DEFAULT_HEATMAP_VARIANCE,
        })
    }

    pub fn heatmap_variance(&self) -> f32 {
        self.heatmap_variance
    }

    /// Builds the UNet input for a reference/target pair of equal size.
    pub fn motion_input(
        &self,
        reference: &Frame,
        target: &Frame,
        ref_kp: &KeypointSet,
        tgt_kp: &KeypointSet,
    ) -> Result<(Tensor, SparseMotion)> {
        let (c, h, w) = reference.dims();
        if c != 3 || target.dims() != reference.dims() {
            return Err(Error::shape(
                "estimate_motion",
                format!("reference {:?} and target {:?} must both be 3xHxW", reference, target),
            ));
        }
        let heat = gaussian_heatmaps(ref_kp, tgt_kp, self.heatmap_variance, h, w)?;
        let sparse = sparse_motion(ref_kp, tgt_kp, h, w);
        let deformed = deformed_references(reference, &sparse)?;
        Ok((assemble_motion_input(&heat, &deformed, target)?, sparse))
    }

    pub fn estimate(
        &self,
        reference: &Frame,
        target: &Frame,
        ref_kp: &KeypointSet,
        tgt_kp: &KeypointSet,
    ) -> Result<MotionOutput> {
        let (input, sparse) = self.motion_input(reference, target, ref_kp, tgt_kp)?;
        let features = self.trunk.forward(&input)?;

        let deformation = softmax_channels(&self.deformation_head.forward(&features)?);
        let warp = combine_sparse_motion(&sparse, &deformation)?;

        let gated = self
            .occlusion_heads
            .iter()
            .map(|h| Ok(sigmoid(&h.forward(&features)?)))
            .collect::<Result<Vec<_>>>()?;
        let masks = OcclusionMasks::from_tensor(softmax_channels(&Tensor::concat_channels(&[
            &gated[0], &gated[1], &gated[2],
        ])?))?;

        Ok(MotionOutput {
            warp,
            masks,
            deformation,
            sparse,
        })
    }

    /// MACs of one estimate at `s × s` (heatmaps and warps excluded).
    pub fn macs(s: usize) -> u64 {
        let spec = Self::unet_spec();
        let f = spec.out_channels();
        spec.macs(s, s) + conv_macs(NUM_MOTIONS, f, HEAD_KERNEL, s, s) + 3 * conv_macs(1, f, HEAD_KERNEL, s, s)
    }
}
