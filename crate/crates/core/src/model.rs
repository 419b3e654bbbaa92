//! A complete per-resolution model (keypoint detector, motion estimator,
//! synthesizer) and the bank that hands them out by weight-set name.
//!
//! On disk, a weights directory holds one subdirectory per weight set
//! (`p128`, `p256`, `p512`, `kp_baseline`), each a manifest/blob pair.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use crate::error::{Error, Result, StageExt};
use crate::keypoints::{KeypointDetector, KeypointSet, MOTION_RESOLUTION};
use crate::synth::{resample_square, Generator, MaskPolicy, MotionScale, PredictOptions, PreparedReference, SynthesizerConfig};
use crate::tensor::Frame;
use crate::weights::{random_init, ArchitectureSpec, WeightStore};

pub const KEYPOINT_PREFIX: &str = "kp";
/// Weight set used for keypoint-only reconstruction.
pub const KEYPOINT_BASELINE: &str = "kp_baseline";

#[derive(Clone, Debug)]
pub struct Model {
    pub detector: KeypointDetector,
    pub generator: Generator,
}

/// A decoded reference frame prepared for one model.
#[derive(Clone, Debug)]
pub struct ReferenceState {
    pub prepared: PreparedReference,
    pub keypoints: KeypointSet,
}

impl Model {
    pub fn architecture(cfg: &SynthesizerConfig) -> ArchitectureSpec {
        let mut arch = KeypointDetector::architecture(KEYPOINT_PREFIX);
        arch.extend(Generator::architecture(cfg));
        arch
    }

    pub fn build(store: &WeightStore, cfg: SynthesizerConfig) -> Result<Self> {
        Ok(Self {
            detector: KeypointDetector::build(store, KEYPOINT_PREFIX).stage("keypoint detector")?,
            generator: Generator::build(store, cfg)?,
        })
    }

    pub fn random(cfg: SynthesizerConfig, seed: u64) -> Result<Self> {
        Self::build(&random_init(&Self::architecture(&cfg), seed)?, cfg)
    }

    pub fn config(&self) -> &SynthesizerConfig {
        self.generator.config()
    }

    /// Keypoints of `frame` after resampling it to the motion grid.
    pub fn keypoints(&self, frame: &Frame, scale: MotionScale) -> Result<KeypointSet> {
        let size = match scale {
            MotionScale::Low => MOTION_RESOLUTION,
            MotionScale::Full => self.config().output_resolution,
        };
        self.detector.detect_at(&resample_square(frame, size)?).stage("keypoints")
    }

    pub fn prepare_reference(&self, reference: &Frame) -> Result<ReferenceState> {
        let prepared = self.generator.prepare_reference(reference)?;
        let keypoints = self.detector.detect(&prepared.frame64).stage("reference keypoints")?;
        Ok(ReferenceState { prepared, keypoints })
    }

    /// Full-resolution frame from the cached reference and a decoded
    /// low-resolution target; target keypoints come from the target itself.
    pub fn reconstruct(&self, reference: &ReferenceState, target_lr: &Frame, opts: &PredictOptions) -> Result<Frame> {
        let (ref_kp, tgt_kp) = match opts.motion_scale {
            MotionScale::Low => (reference.keypoints, self.keypoints(target_lr, MotionScale::Low)?),
            MotionScale::Full => (
                self.keypoints(&reference.prepared.frame, MotionScale::Full)?,
                self.keypoints(target_lr, MotionScale::Full)?,
            ),
        };
        self.generator
            .predict_with_reference(&reference.prepared, Some(target_lr), &ref_kp, &tgt_kp, opts)
    }

    /// Reconstruction from transmitted keypoints alone.
    pub fn reconstruct_from_keypoints(&self, reference: &ReferenceState, target_kp: &KeypointSet) -> Result<Frame> {
        let opts = PredictOptions {
            masks: MaskPolicy::NoLowRes,
            motion_scale: MotionScale::Low,
        };
        self.generator
            .predict_with_reference(&reference.prepared, None, &reference.keypoints, target_kp, &opts)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WeightSource {
    Directory(PathBuf),
    /// Seeded random weights; each weight set gets its own derived seed.
    Random { seed: u64 },
}

fn name_seed(seed: u64, name: &str) -> u64 {
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
        ^ seed
}

/// Lazily built models for one output resolution.
#[derive(Debug)]
pub struct ModelBank {
    cfg: SynthesizerConfig,
    source: WeightSource,
    cache: BTreeMap<String, Arc<Model>>,
}

impl ModelBank {
    pub fn new(output_resolution: usize, source: WeightSource) -> Result<Self> {
        Ok(Self {
            cfg: SynthesizerConfig::for_output(output_resolution)?,
            source,
            cache: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &SynthesizerConfig {
        &self.cfg
    }

    pub fn get(&mut self, name: &str) -> Result<Arc<Model>> {
        if let Some(m) = self.cache.get(name) {
            return Ok(m.clone());
        }
        let model = match &self.source {
            WeightSource::Directory(dir) => {
                let path = dir.join(name);
                let store = WeightStore::load(&path).map_err(|e| {
                    Error::WeightFormat(format!("weight set `{name}` in {}: {e}", dir.display()))
                })?;
                Model::build(&store, self.cfg)?
            }
            WeightSource::Random { seed } => Model::random(self.cfg, name_seed(*seed, name))?,
        };
        let model = Arc::new(model);
        self.cache.insert(name.to_string(), model.clone());
        Ok(model)
    }
}
