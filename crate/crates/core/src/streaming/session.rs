//! Sender and receiver halves of a call: a per-frame (PF) stream of coded
//! frames at the operating resolution, a sparse reference stream, and an
//! optional keypoint stream.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::keypoint_wire::{decode_keypoints, encode_keypoints};
use super::packet::{packetize, reassemble, Packet, StreamId, DEFAULT_MTU};
use crate::codec::{self, resolution_from_id, resolution_id, RESOLUTIONS};
use crate::error::{Error, Result, StageExt};
use crate::metrics::Mode;
use crate::model::{Model, ModelBank, ReferenceState, KEYPOINT_BASELINE};
use crate::synth::{MotionScale, PredictOptions};
use crate::tensor::Frame;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SendMode {
    /// Downsample to `resolution` and code at `target_kbps`.
    Neural { resolution: usize, target_kbps: f64 },
    /// Code the full-resolution frame at `target_kbps`.
    Fallback { target_kbps: f64 },
    KeypointsOnly,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RefreshPolicy {
    #[default]
    Never,
    /// Resend the reference every `n` frames.
    Every(u32),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SenderConfig {
    pub output_resolution: usize,
    pub fps: f64,
    pub mtu: usize,
    pub refresh: RefreshPolicy,
    pub reference_quality: u8,
}

impl SenderConfig {
    pub fn new(output_resolution: usize, fps: f64) -> Self {
        Self {
            output_resolution,
            fps,
            mtu: DEFAULT_MTU,
            refresh: RefreshPolicy::Never,
            reference_quality: 12,
        }
    }
}

/// Per-resolution codec state. The codec is intra-only, so the context only
/// tracks usage.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CodecContext {
    pub resolution: usize,
    pub frames: u64,
    pub bytes: u64,
}

impl CodecContext {
    fn touch(&mut self, bytes: usize) {
        self.frames += 1;
        self.bytes += bytes as u64;
    }
}

fn contexts_up_to(output: usize) -> BTreeMap<usize, CodecContext> {
    RESOLUTIONS
        .iter()
        .filter(|&&r| r <= output)
        .map(|&r| (r, CodecContext { resolution: r, ..Default::default() }))
        .collect()
}

fn check_output(output: usize) -> Result<u8> {
    resolution_id(output)
        .filter(|_| output >= 128)
        .ok_or_else(|| Error::Session(format!("unsupported output resolution {output}")))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SentFrame {
    pub frame_id: u32,
    pub packets: Vec<Packet>,
    pub bytes_on_wire: usize,
    pub reference_bytes: usize,
    /// Codec (or keypoint) payload of this frame's own stream, without headers.
    pub payload_bytes: usize,
    pub resolution: usize,
    pub quality: Option<u8>,
    pub overshoot: bool,
}

#[derive(Debug)]
pub struct Sender {
    cfg: SenderConfig,
    output_id: u8,
    contexts: BTreeMap<usize, CodecContext>,
    reference_context: CodecContext,
    next_frame: u32,
    keypoint_model: Option<Arc<Model>>,
}

impl Sender {
    pub fn new(cfg: SenderConfig) -> Result<Self> {
        let output_id = check_output(cfg.output_resolution)?;
        if !(cfg.fps > 0.0) {
            return Err(Error::Session(format!("fps {}", cfg.fps)));
        }
        Ok(Self {
            contexts: contexts_up_to(cfg.output_resolution),
            reference_context: CodecContext {
                resolution: cfg.output_resolution,
                ..Default::default()
            },
            output_id,
            cfg,
            next_frame: 0,
            keypoint_model: None,
        })
    }

    /// Model whose detector extracts keypoints in keypoint-only mode.
    pub fn with_keypoint_model(mut self, model: Arc<Model>) -> Self {
        self.keypoint_model = Some(model);
        self
    }

    pub fn config(&self) -> &SenderConfig {
        &self.cfg
    }

    pub fn contexts(&self) -> &BTreeMap<usize, CodecContext> {
        &self.contexts
    }

    fn wants_reference(&self, frame_id: u32) -> bool {
        match self.cfg.refresh {
            _ if frame_id == 0 => true,
            RefreshPolicy::Never => false,
            RefreshPolicy::Every(n) => n > 0 && frame_id.is_multiple_of(n),
        }
    }

    fn send_pf(
        &mut self,
        frame: &Frame,
        frame_id: u32,
        resolution: usize,
        target_kbps: f64,
        packets: &mut Vec<Packet>,
    ) -> Result<(usize, usize, Option<u8>, bool)> {
        let ctx = self
            .contexts
            .get_mut(&resolution)
            .ok_or_else(|| Error::Session(format!("no codec context for resolution {resolution}")))?;
        let small = codec::downsample(frame, resolution).stage("downsample")?;
        let rc = codec::encode_at_bitrate(&small, target_kbps, self.cfg.fps).stage("pf encode")?;
        let bytes = rc.frame.to_bytes();
        ctx.touch(bytes.len());
        packets.extend(packetize(StreamId::PerFrame, frame_id, rc.frame.resolution_id, &bytes, self.cfg.mtu)?);
        Ok((resolution, bytes.len(), Some(rc.frame.quality), rc.overshoot))
    }

    pub fn send_frame(&mut self, frame: &Frame, mode: SendMode) -> Result<SentFrame> {
        let out = self.cfg.output_resolution;
        if frame.dims() != (3, out, out) {
            return Err(Error::Session(format!("sender expects 3x{out}x{out} frames, got {:?}", frame)));
        }
        let frame_id = self.next_frame;
        let mut packets = Vec::new();
        let mut reference_bytes = 0;
        if self.wants_reference(frame_id) {
            let enc = codec::encode(frame, self.cfg.reference_quality).stage("reference encode")?.to_bytes();
            self.reference_context.touch(enc.len());
            let ps = packetize(StreamId::Reference, frame_id, self.output_id, &enc, self.cfg.mtu)?;
            reference_bytes = ps.iter().map(Packet::wire_len).sum();
            packets.extend(ps);
        }

        let (resolution, payload_bytes, quality, overshoot) = match mode {
            SendMode::Neural { resolution, target_kbps } => {
                if resolution >= out {
                    return Err(Error::Session(format!(
                        "neural mode needs a PF resolution below the {out} output, got {resolution}"
                    )));
                }
                self.send_pf(frame, frame_id, resolution, target_kbps, &mut packets)?
            }
            SendMode::Fallback { target_kbps } => self.send_pf(frame, frame_id, out, target_kbps, &mut packets)?,
            SendMode::KeypointsOnly => {
                let model = self
                    .keypoint_model
                    .as_ref()
                    .ok_or_else(|| Error::Session("keypoint-only mode needs a keypoint model at the sender".into()))?;
                let kp = model.keypoints(frame, MotionScale::Low)?;
                let payload = encode_keypoints(&kp)?;
                packets.extend(packetize(StreamId::Keypoints, frame_id, self.output_id, &payload, self.cfg.mtu)?);
                (out, payload.len(), None, false)
            }
        };
        self.next_frame += 1;
        Ok(SentFrame {
            frame_id,
            bytes_on_wire: packets.iter().map(Packet::wire_len).sum(),
            packets,
            reference_bytes,
            payload_bytes,
            resolution,
            quality,
            overshoot,
        })
    }
}

/// How the receiver turns a low-resolution PF frame into an output frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Upsampler {
    #[default]
    Neural,
    Bicubic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReceiverConfig {
    pub output_resolution: usize,
    pub upsampler: Upsampler,
    pub motion_scale: MotionScale,
}

impl ReceiverConfig {
    pub fn new(output_resolution: usize) -> Self {
        Self {
            output_resolution,
            upsampler: Upsampler::Neural,
            motion_scale: MotionScale::Low,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReceivedFrame {
    pub frame_id: u32,
    pub frame: Frame,
    pub mode: Mode,
    pub resolution_id: u8,
    pub bytes_on_wire: usize,
}

#[derive(Debug)]
pub struct Receiver {
    cfg: ReceiverConfig,
    contexts: BTreeMap<usize, CodecContext>,
    reference_context: CodecContext,
    reference: Option<Frame>,
    prepared: BTreeMap<String, ReferenceState>,
    bank: Option<ModelBank>,
}

impl Receiver {
    /// `bank` may be omitted when no frame will need synthesis.
    pub fn new(cfg: ReceiverConfig, bank: Option<ModelBank>) -> Result<Self> {
        check_output(cfg.output_resolution)?;
        if let Some(b) = &bank {
            if b.config().output_resolution != cfg.output_resolution {
                return Err(Error::Session("model bank output resolution differs from the session".into()));
            }
        }
        Ok(Self {
            contexts: contexts_up_to(cfg.output_resolution),
            reference_context: CodecContext {
                resolution: cfg.output_resolution,
                ..Default::default()
            },
            cfg,
            reference: None,
            prepared: BTreeMap::new(),
            bank,
        })
    }

    pub fn contexts(&self) -> &BTreeMap<usize, CodecContext> {
        &self.contexts
    }

    pub fn reference(&self) -> Option<&Frame> {
        self.reference.as_ref()
    }

    fn model_and_reference(&mut self, name: &str) -> Result<(Arc<Model>, &ReferenceState)> {
        let reference = self
            .reference
            .as_ref()
            .ok_or_else(|| Error::Session("no reference frame received before the first synthesized frame".into()))?;
        let bank = self
            .bank
            .as_mut()
            .ok_or_else(|| Error::Session("synthesis requested but the receiver has no models".into()))?;
        let model = bank.get(name)?;
        if !self.prepared.contains_key(name) {
            let state = model.prepare_reference(reference)?;
            self.prepared.insert(name.to_string(), state);
        }
        Ok((model, &self.prepared[name]))
    }

    pub fn receive_frame(&mut self, packets: &[Packet]) -> Result<ReceivedFrame> {
        let first = packets.first().ok_or_else(|| Error::Session("empty packet set".into()))?;
        let frame_id = first.frame_id;
        let mut streams: BTreeMap<StreamId, Vec<Packet>> = BTreeMap::new();
        for p in packets {
            if p.frame_id != frame_id {
                return Err(Error::Packet(format!("frame {frame_id}: packet for frame {} mixed in", p.frame_id)));
            }
            streams.entry(p.stream_id).or_default().push(p.clone());
        }
        let bytes_on_wire = packets.iter().map(Packet::wire_len).sum();

        if let Some(ps) = streams.get(&StreamId::Reference) {
            let payload = reassemble(ps)?;
            let decoded = codec::decode_bytes(&payload).stage("reference decode")?;
            let r = self.cfg.output_resolution;
            if decoded.dims() != (3, r, r) {
                return Err(Error::Session(format!("reference is {:?}, session output is {r}", decoded.dims())));
            }
            self.reference_context.touch(payload.len());
            self.reference = Some(decoded.clamp(0.0, 1.0));
            self.prepared.clear();
        }
        if self.reference.is_none() {
            return Err(Error::Session(format!("frame {frame_id}: no reference received yet")));
        }

        let output = self.cfg.output_resolution;
        let (frame, mode, resolution_id) = if let Some(ps) = streams.get(&StreamId::PerFrame) {
            let rid = ps[0].resolution_id;
            let res = resolution_from_id(rid)
                .filter(|r| self.contexts.contains_key(r))
                .ok_or_else(|| Error::Session(format!("frame {frame_id}: unknown resolution id {rid}")))?;
            let payload = reassemble(ps)?;
            let enc = codec::EncodedFrame::from_bytes(&payload)?;
            if enc.resolution_id != rid {
                return Err(Error::Session(format!("frame {frame_id}: packet tag and payload resolution differ")));
            }
            let decoded = codec::decode(&enc).stage("pf decode")?;
            self.contexts.get_mut(&res).unwrap().touch(payload.len());
            if res == output {
                (decoded, Mode::Fallback, rid)
            } else {
                let lr = decoded.clamp(0.0, 1.0);
                match self.cfg.upsampler {
                    Upsampler::Bicubic => (codec::bicubic_upsample(&lr, output)?, Mode::Bicubic, rid),
                    Upsampler::Neural => {
                        let opts = PredictOptions {
                            motion_scale: self.cfg.motion_scale,
                            ..Default::default()
                        };
                        let (model, state) = self.model_and_reference(&format!("p{res}"))?;
                        (model.reconstruct(state, &lr, &opts)?, Mode::Neural, rid)
                    }
                }
            }
        } else if let Some(ps) = streams.get(&StreamId::Keypoints) {
            let kp = decode_keypoints(&reassemble(ps)?)?;
            let (model, state) = self.model_and_reference(KEYPOINT_BASELINE)?;
            (model.reconstruct_from_keypoints(state, &kp)?, Mode::KeypointsOnly, ps[0].resolution_id)
        } else {
            return Err(Error::Session(format!("frame {frame_id}: no PF or keypoint payload")));
        };
        Ok(ReceivedFrame {
            frame_id,
            frame,
            mode,
            resolution_id,
            bytes_on_wire,
        })
    }
}
