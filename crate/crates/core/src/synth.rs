//! Full-resolution frame synthesis from a high-resolution reference and a
//! low-resolution target.
//!
//! The reference is encoded down to a 64×64 bottleneck. One copy is warped
//! by the motion field, both copies are refined by separate residual
//! stacks, and the results are blended with features of the low-resolution
//! target using the three occlusion masks. The decoder then upsamples back
//! to the output resolution, taking warped and visibility-weighted skip
//! features from the first two encoder blocks.
//!
//! Parameters live under `{prefix}.`: `stem`, `down{i}` (i = 1..=n),
//! `res_warped{r}`, `res_unwarped{r}`, `lr_stem`, `up{j}` (j = n..=1) and
//! `final`.

use crate::error::{Error, Result, StageExt};
use crate::keypoints::{KeypointSet, MOTION_RESOLUTION};
use crate::kernels::{box_downsample, grid_sample, resize_bilinear, WarpField};
use crate::layers::{conv_macs, Conv, DownBlock, ResBlock, UpBlock};
use crate::motion::{MotionEstimator, MotionOutput, OcclusionMasks};
use crate::tensor::{Frame, Tensor};
use crate::weights::{ArchitectureSpec, WeightStore};

/// Spatial size of the bottleneck where the three pathways meet.
pub const BOTTLENECK_RESOLUTION: usize = 64;
const MAX_CHANNELS: usize = 256;
const STEM_KERNEL: usize = 7;
const BLOCK_KERNEL: usize = 3;

/// Which resolution the dense motion network runs at.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MotionScale {
    /// 64×64, independent of the output resolution.
    #[default]
    Low,
    /// The output resolution. Only useful as a cost baseline.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SynthesizerConfig {
    pub output_resolution: usize,
    pub n_blocks: usize,
    pub bottleneck_channels: usize,
    pub stem_channels: usize,
    pub residual_blocks: usize,
    pub skip_blocks: usize,
}

impl SynthesizerConfig {
    pub const SUPPORTED_OUTPUTS: [usize; 3] = [256, 512, 1024];

    pub fn for_output(output_resolution: usize) -> Result<Self> {
        if !Self::SUPPORTED_OUTPUTS.contains(&output_resolution) {
            return Err(Error::invalid(format!(
                "output resolution {output_resolution} not in {:?}",
                Self::SUPPORTED_OUTPUTS
            )));
        }
        let n_blocks = (output_resolution / BOTTLENECK_RESOLUTION).trailing_zeros() as usize;
        let stem_channels = 32;
        Ok(Self {
            output_resolution,
            n_blocks,
            bottleneck_channels: (stem_channels << n_blocks).min(MAX_CHANNELS),
            stem_channels,
            residual_blocks: 5,
            skip_blocks: 2,
        })
    }

    /// Width after encoder block `level` (`0` is the stem).
    pub fn level_channels(&self, level: usize) -> usize {
        (self.stem_channels << level).min(MAX_CHANNELS)
    }

    /// Spatial size after encoder block `level`.
    pub fn level_resolution(&self, level: usize) -> usize {
        self.output_resolution >> level
    }

    pub fn has_skip(&self, level: usize) -> bool {
        level >= 1 && level <= self.skip_blocks.min(self.n_blocks)
    }

    /// `(in, out)` channels of decoder block `j` (`n_blocks` runs first).
    pub fn up_channels(&self, j: usize) -> (usize, usize) {
        let c = self.level_channels(j);
        let inp = if self.has_skip(j) { 2 * c } else { c };
        (inp, self.level_channels(j - 1))
    }

    pub fn supports_lowres(&self, lr: usize) -> bool {
        [64, 128, 256, 512].contains(&lr) && lr < self.output_resolution
    }

    pub fn architecture(&self, prefix: &str) -> ArchitectureSpec {
        let mut arch = ArchitectureSpec::new();
        arch.conv(&format!("{prefix}.stem"), self.stem_channels, 3, STEM_KERNEL);
        for i in 1..=self.n_blocks {
            DownBlock::spec(
                &mut arch,
                &format!("{prefix}.down{i}"),
                self.level_channels(i - 1),
                self.level_channels(i),
                BLOCK_KERNEL,
            );
        }
        for branch in ["res_warped", "res_unwarped"] {
            for r in 0..self.residual_blocks {
                ResBlock::spec(&mut arch, &format!("{prefix}.{branch}{r}"), self.bottleneck_channels, BLOCK_KERNEL);
            }
        }
        arch.conv(&format!("{prefix}.lr_stem"), self.bottleneck_channels, 3, STEM_KERNEL);
        for j in (1..=self.n_blocks).rev() {
            let (inp, out) = self.up_channels(j);
            UpBlock::spec(&mut arch, &format!("{prefix}.up{j}"), inp, out, BLOCK_KERNEL);
        }
        arch.conv(&format!("{prefix}.final"), 3, self.stem_channels, STEM_KERNEL);
        arch
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Warped,
    Unwarped,
}

/// Encoder output for one reference frame, reusable across target frames.
#[derive(Clone, Debug)]
pub struct EncodedReference {
    pub bottleneck: Tensor,
    /// Outputs of encoder blocks `1..=skip_blocks`.
    pub skips: Vec<Tensor>,
}

#[derive(Clone, Debug)]
pub struct Synthesizer {
    cfg: SynthesizerConfig,
    stem: Conv,
    down: Vec<DownBlock>,
    res_warped: Vec<ResBlock>,
    res_unwarped: Vec<ResBlock>,
    lr_stem: Conv,
    /// `up[j - 1]` is decoder block `j`.
    up: Vec<UpBlock>,
    final_conv: Conv,
}

impl Synthesizer {
    pub fn build(store: &WeightStore, prefix: &str, cfg: SynthesizerConfig) -> Result<Self> {
        let res = |branch: &str| {
            (0..cfg.residual_blocks)
                .map(|r| ResBlock::load(store, &format!("{prefix}.{branch}{r}"), cfg.bottleneck_channels, BLOCK_KERNEL))
                .collect::<Result<Vec<_>>>()
        };
        Ok(Self {
            cfg,
            stem: Conv::load(store, &format!("{prefix}.stem"), cfg.stem_channels, 3, STEM_KERNEL)?,
            down: (1..=cfg.n_blocks)
                .map(|i| {
                    DownBlock::load(
                        store,
                        &format!("{prefix}.down{i}"),
                        cfg.level_channels(i - 1),
                        cfg.level_channels(i),
                        BLOCK_KERNEL,
                    )
                })
                .collect::<Result<_>>()?,
            res_warped: res("res_warped")?,
            res_unwarped: res("res_unwarped")?,
            lr_stem: Conv::load(store, &format!("{prefix}.lr_stem"), cfg.bottleneck_channels, 3, STEM_KERNEL)?,
            up: (1..=cfg.n_blocks)
                .map(|j| {
                    let (inp, out) = cfg.up_channels(j);
                    UpBlock::load(store, &format!("{prefix}.up{j}"), inp, out, BLOCK_KERNEL)
                })
                .collect::<Result<_>>()?,
            final_conv: Conv::load(store, &format!("{prefix}.final"), 3, cfg.stem_channels, STEM_KERNEL)?,
        })
    }

    pub fn config(&self) -> &SynthesizerConfig {
        &self.cfg
    }

    pub fn encode_reference(&self, reference: &Frame) -> Result<EncodedReference> {
        let r = self.cfg.output_resolution;
        if reference.dims() != (3, r, r) {
            return Err(Error::shape(
                "encode_reference",
                format!("expected 3x{r}x{r} reference, got {:?}", reference),
            ));
        }
        let mut x = self.stem.forward(reference)?;
        let mut skips = Vec::new();
        for (i, block) in self.down.iter().enumerate() {
            x = block.forward(&x)?;
            if self.cfg.has_skip(i + 1) {
                skips.push(x.clone());
            }
        }
        Ok(EncodedReference { bottleneck: x, skips })
    }

    /// One 7×7 convolution on the low-resolution target, resampled to the bottleneck grid.
    pub fn lr_features(&self, target_lr: &Frame) -> Result<Tensor> {
        let (c, h, w) = target_lr.dims();
        if c != 3 || h != w || !self.cfg.supports_lowres(h) {
            return Err(Error::shape(
                "lr_features",
                format!(
                    "unsupported low-resolution input {:?} for {} output",
                    target_lr, self.cfg.output_resolution
                ),
            ));
        }
        let f = self.lr_stem.forward(target_lr)?;
        Ok(resize_bilinear(&f, BOTTLENECK_RESOLUTION, BOTTLENECK_RESOLUTION))
    }

    pub fn refine(&self, features: &Tensor, branch: Branch) -> Result<Tensor> {
        let expect = (self.cfg.bottleneck_channels, BOTTLENECK_RESOLUTION, BOTTLENECK_RESOLUTION);
        if features.dims() != expect {
            return Err(Error::shape("refine", format!("expected {expect:?}, got {:?}", features)));
        }
        let blocks = match branch {
            Branch::Warped => &self.res_warped,
            Branch::Unwarped => &self.res_unwarped,
        };
        let mut x = features.clone();
        for b in blocks {
            x = b.forward(&x)?;
        }
        Ok(x)
    }

    /// Warps skip features and weights them by `A + B` at their own resolution.
    pub fn combine_skips(&self, encoded: &EncodedReference, warp: &WarpField, masks: &OcclusionMasks) -> Result<Vec<Tensor>> {
        encoded
            .skips
            .iter()
            .map(|s| {
                let (h, w) = (s.height(), s.width());
                let warped = grid_sample(s, &warp.resample(h, w));
                warped.mul_plane(&masks.resize(h, w).hr_visibility())
            })
            .collect()
    }

    /// Runs the decoder on blended bottleneck features and prepared skips,
    /// returning the clamped RGB prediction.
    pub fn decode(&self, combined: &Tensor, skips: &[Tensor]) -> Result<Frame> {
        let mut x = combined.clone();
        for j in (1..=self.cfg.n_blocks).rev() {
            if self.cfg.has_skip(j) {
                let skip = skips
                    .get(j - 1)
                    .ok_or_else(|| Error::invalid(format!("decoder block {j} needs a skip tensor")))?;
                x = Tensor::concat_channels(&[&x, skip])?;
            }
            x = self.up[j - 1].forward(&x)?;
        }
        Ok(self.final_conv.forward(&x)?.clamp(0.0, 1.0))
    }

    /// Blends the refined pathways at the bottleneck and decodes.
    pub fn synthesize(
        &self,
        encoded: &EncodedReference,
        target_lr: Option<&Frame>,
        motion: &MotionOutput,
        masks: &OcclusionMasks,
    ) -> Result<Frame> {
        let b = BOTTLENECK_RESOLUTION;
        let warp_b = motion.warp.resample(b, b);
        let masks_b = masks.resize(b, b);

        let warped = grid_sample(&encoded.bottleneck, &warp_b);
        let refined_a = self.refine(&warped, Branch::Warped).stage("refine warped")?;
        let refined_b = self.refine(&encoded.bottleneck, Branch::Unwarped).stage("refine unwarped")?;
        let mut combined = refined_a
            .mul_plane(&masks_b.warped())?
            .add(&refined_b.mul_plane(&masks_b.unwarped())?)?;
        if let Some(lr) = target_lr {
            let lr_feat = self.lr_features(lr).stage("lr features")?;
            combined = combined.add(&lr_feat.mul_plane(&masks_b.lowres())?)?;
        }
        let skips = self.combine_skips(encoded, &motion.warp, masks).stage("skips")?;
        self.decode(&combined, &skips).stage("decode")
    }
}

/// How the occlusion masks used for blending are chosen.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum MaskPolicy {
    #[default]
    Learned,
    /// Keypoint-only reconstruction: no low-resolution pathway, A and B renormalized.
    NoLowRes,
    Forced(OcclusionMasks),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PredictOptions {
    pub masks: MaskPolicy,
    pub motion_scale: MotionScale,
}

/// Motion estimator and synthesizer for one output resolution.
#[derive(Clone, Debug)]
pub struct Generator {
    pub motion: MotionEstimator,
    pub synthesizer: Synthesizer,
}

/// Motion-resolution views of the reference frame, cached per session.
#[derive(Clone, Debug)]
pub struct PreparedReference {
    pub frame: Frame,
    pub frame64: Frame,
    pub encoded: EncodedReference,
}

impl Generator {
    pub fn architecture(cfg: &SynthesizerConfig) -> ArchitectureSpec {
        let mut arch = MotionEstimator::architecture("motion");
        arch.extend(cfg.architecture("gen"));
        arch
    }

    pub fn build(store: &WeightStore, cfg: SynthesizerConfig) -> Result<Self> {
        Ok(Self {
            motion: MotionEstimator::build(store, "motion").stage("motion estimator")?,
            synthesizer: Synthesizer::build(store, "gen", cfg).stage("synthesizer")?,
        })
    }

    pub fn config(&self) -> &SynthesizerConfig {
        self.synthesizer.config()
    }

    pub fn prepare_reference(&self, reference: &Frame) -> Result<PreparedReference> {
        let encoded = self.synthesizer.encode_reference(reference).stage("encode reference")?;
        let r = self.config().output_resolution;
        Ok(PreparedReference {
            frame: reference.clone(),
            frame64: box_downsample(reference, r / MOTION_RESOLUTION).stage("downsample reference")?,
            encoded,
        })
    }

    /// Runs motion estimation for a prepared reference and a decoded low-resolution target.
    pub fn estimate_motion(
        &self,
        reference: &PreparedReference,
        target_lr: Option<&Frame>,
        ref_kp: &KeypointSet,
        tgt_kp: &KeypointSet,
        scale: MotionScale,
    ) -> Result<MotionOutput> {
        let (ref_m, size) = match scale {
            MotionScale::Low => (reference.frame64.clone(), MOTION_RESOLUTION),
            MotionScale::Full => (reference.frame.clone(), self.config().output_resolution),
        };
        let tgt_m = match target_lr {
            Some(t) => resample_square(t, size)?,
            None => Tensor::zeros(3, size, size),
        };
        self.motion.estimate(&ref_m, &tgt_m, ref_kp, tgt_kp).stage("estimate motion")
    }

    pub fn predict_with_reference(
        &self,
        reference: &PreparedReference,
        target_lr: Option<&Frame>,
        ref_kp: &KeypointSet,
        tgt_kp: &KeypointSet,
        opts: &PredictOptions,
    ) -> Result<Frame> {
        let use_lr = !matches!(opts.masks, MaskPolicy::NoLowRes);
        let target_lr = if use_lr { target_lr } else { None };
        if use_lr && target_lr.is_none() {
            return Err(Error::invalid("prediction needs a low-resolution target unless the LR pathway is disabled"));
        }
        let motion = self.estimate_motion(reference, target_lr, ref_kp, tgt_kp, opts.motion_scale)?;
        let masks = match &opts.masks {
            MaskPolicy::Learned => motion.masks.clone(),
            MaskPolicy::NoLowRes => motion.masks.without_lowres(),
            MaskPolicy::Forced(m) => m.clone(),
        };
        self.synthesizer.synthesize(&reference.encoded, target_lr, &motion, &masks)
    }

    /// Encodes the reference and predicts one frame.
    pub fn predict(
        &self,
        reference: &Frame,
        target_lr: &Frame,
        ref_kp: &KeypointSet,
        tgt_kp: &KeypointSet,
        opts: &PredictOptions,
    ) -> Result<Frame> {
        let prepared = self.prepare_reference(reference)?;
        self.predict_with_reference(&prepared, Some(target_lr), ref_kp, tgt_kp, opts)
    }
}

/// Box-reduces or bilinearly enlarges a square frame to `size × size`.
pub(crate) fn resample_square(frame: &Frame, size: usize) -> Result<Frame> {
    let s = frame.height();
    if s == size {
        Ok(frame.clone())
    } else if s > size && s.is_multiple_of(size) {
        box_downsample(frame, s / size)
    } else {
        Ok(resize_bilinear(frame, size, size))
    }
}

/// Analytic multiply-accumulate counts for one predicted frame.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct CostReport {
    pub output_resolution: usize,
    pub lowres_resolution: usize,
    /// Keypoint detection on reference and target plus dense motion, at 64×64.
    pub motion_macs_low: u64,
    /// The same stage run at the output resolution.
    pub motion_macs_full: u64,
    pub encoder_macs: u64,
    pub refine_macs: u64,
    pub lr_macs: u64,
    pub decoder_macs: u64,
}

impl CostReport {
    pub fn synthesis_macs(&self) -> u64 {
        self.encoder_macs + self.refine_macs + self.lr_macs + self.decoder_macs
    }

    pub fn motion_ratio(&self) -> f64 {
        self.motion_macs_full as f64 / self.motion_macs_low as f64
    }

    /// Whole-pipeline cost with full-resolution motion over the multi-scale cost.
    pub fn pipeline_ratio(&self) -> f64 {
        let s = self.synthesis_macs() as f64;
        (s + self.motion_macs_full as f64) / (s + self.motion_macs_low as f64)
    }
}

pub fn multiscale_cost_report(cfg: &SynthesizerConfig, lowres_resolution: usize) -> CostReport {
    use crate::keypoints::KeypointDetector;

    let motion_at = |s: usize| 2 * KeypointDetector::macs(s) + MotionEstimator::macs(s);
    let r = cfg.output_resolution;
    let mut encoder = conv_macs(cfg.stem_channels, 3, STEM_KERNEL, r, r);
    for i in 1..=cfg.n_blocks {
        let s = cfg.level_resolution(i - 1);
        encoder += DownBlock::macs(cfg.level_channels(i - 1), cfg.level_channels(i), BLOCK_KERNEL, s, s);
    }
    let b = BOTTLENECK_RESOLUTION;
    let c = cfg.bottleneck_channels;
    let refine = 2 * cfg.residual_blocks as u64 * conv_macs(c, c, BLOCK_KERNEL, b, b);
    let lr = conv_macs(c, 3, STEM_KERNEL, lowres_resolution, lowres_resolution);
    let mut decoder = conv_macs(3, cfg.stem_channels, STEM_KERNEL, r, r);
    for j in 1..=cfg.n_blocks {
        let (inp, out) = cfg.up_channels(j);
        let s = cfg.level_resolution(j);
        decoder += UpBlock::macs(inp, out, BLOCK_KERNEL, s, s);
    }
    CostReport {
        output_resolution: r,
        lowres_resolution,
        motion_macs_low: motion_at(MOTION_RESOLUTION),
        motion_macs_full: motion_at(r),
        encoder_macs: encoder,
        refine_macs: refine,
        lr_macs: lr,
        decoder_macs: decoder,
    }
}
