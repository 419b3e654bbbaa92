//! Virtual-time link between a sender and a receiver running on separate
//! threads.
//!
//! Frame `i` is captured at `i / fps`. Its packets enter the link once the
//! sender has finished with it, are serialized back to back at the link
//! bandwidth in force when transmission starts, and arrive one propagation
//! delay later. The receiver handles frames in order as they arrive.

use std::time::Instant;

use super::packet::Packet;
use super::session::{ReceivedFrame, Receiver, SendMode, SentFrame, Sender};
use crate::error::{Error, Result};
use crate::video::FrameSource;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkState {
    pub time_s: f64,
    pub bytes_per_s: f64,
    pub delay_s: f64,
}

/// Step-interpolated link schedule; the first entry also covers earlier times.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkTrace {
    states: Vec<LinkState>,
}

impl LinkTrace {
    pub fn new(states: Vec<LinkState>) -> Result<Self> {
        if states.is_empty() || !states.windows(2).all(|w| w[0].time_s < w[1].time_s) {
            return Err(Error::invalid("link trace needs strictly increasing times"));
        }
        if states.iter().any(|s| !(s.bytes_per_s > 0.0) || !(s.delay_s >= 0.0)) {
            return Err(Error::invalid("link bandwidth must be positive and delay non-negative"));
        }
        Ok(Self { states })
    }

    pub fn constant(bytes_per_s: f64, delay_s: f64) -> Result<Self> {
        Self::new(vec![LinkState {
            time_s: 0.0,
            bytes_per_s,
            delay_s,
        }])
    }

    pub fn unlimited() -> Self {
        Self {
            states: vec![LinkState {
                time_s: 0.0,
                bytes_per_s: f64::INFINITY,
                delay_s: 0.0,
            }],
        }
    }

    pub fn at(&self, t: f64) -> LinkState {
        let i = self.states.partition_point(|s| s.time_s <= t);
        self.states[i.saturating_sub(1)]
    }
}

/// Where per-frame compute time comes from. Fixed times keep logs reproducible.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ComputeModel {
    Fixed { sender_s: f64, receiver_s: f64 },
    Measured,
}

impl Default for ComputeModel {
    fn default() -> Self {
        ComputeModel::Fixed {
            sender_s: 0.0,
            receiver_s: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameTiming {
    pub frame_id: u32,
    pub capture_s: f64,
    pub sent_s: f64,
    pub arrival_s: f64,
    pub done_s: f64,
    pub latency_ms: f64,
}

/// What the sender did with a frame, minus the packets.
#[derive(Clone, Debug, PartialEq)]
pub struct SendRecord {
    pub index: usize,
    pub mode: SendMode,
    pub frame_id: u32,
    pub bytes_on_wire: usize,
    pub reference_bytes: usize,
    pub payload_bytes: usize,
    pub resolution: usize,
    pub quality: Option<u8>,
    pub overshoot: bool,
}

impl SendRecord {
    fn new(index: usize, mode: SendMode, s: &SentFrame) -> Self {
        Self {
            index,
            mode,
            frame_id: s.frame_id,
            bytes_on_wire: s.bytes_on_wire,
            reference_bytes: s.reference_bytes,
            payload_bytes: s.payload_bytes,
            resolution: s.resolution,
            quality: s.quality,
            overshoot: s.overshoot,
        }
    }
}

struct InFlight {
    record: SendRecord,
    packets: Vec<Packet>,
    sent_s: f64,
    arrival_s: f64,
}

/// Streams every frame of `source` through the link. `plan` picks the send
/// mode per frame on the sender thread; `consume` sees each reconstruction
/// on the receiver thread, in order.
#[allow(clippy::too_many_arguments)]
pub fn channel_run<S, P, C>(
    sender: &mut Sender,
    receiver: &mut Receiver,
    source: &S,
    link: &LinkTrace,
    compute: ComputeModel,
    mut plan: P,
    mut consume: C,
) -> Result<Vec<FrameTiming>>
where
    S: FrameSource + ?Sized,
    P: FnMut(usize, f64) -> Result<SendMode> + Send,
    C: FnMut(&SendRecord, &ReceivedFrame, &FrameTiming) -> Result<()> + Send,
{
    let fps = sender.config().fps;
    let (tx, rx) = crossbeam_channel::bounded::<InFlight>(2);
    std::thread::scope(|scope| {
        let send_side = scope.spawn(move || -> Result<()> {
            let mut link_free = 0.0f64;
            let mut sender_free = 0.0f64;
            for index in 0..source.len() {
                let capture = index as f64 / fps;
                let frame = source.frame(index)?;
                let mode = plan(index, capture)?;
                let t0 = Instant::now();
                let sent = sender.send_frame(&frame, mode)?;
                let work = match compute {
                    ComputeModel::Fixed { sender_s, .. } => sender_s,
                    ComputeModel::Measured => t0.elapsed().as_secs_f64(),
                };
                let ready = capture.max(sender_free) + work;
                sender_free = ready;
                let state = link.at(ready);
                let start = ready.max(link_free);
                link_free = start + sent.bytes_on_wire as f64 / state.bytes_per_s;
                let msg = InFlight {
                    record: SendRecord::new(index, mode, &sent),
                    packets: sent.packets,
                    sent_s: ready,
                    arrival_s: link_free + state.delay_s,
                };
                if tx.send(msg).is_err() {
                    // Receiver stopped; its error is reported instead.
                    break;
                }
            }
            Ok(())
        });

        let recv_side = scope.spawn(move || -> Result<Vec<FrameTiming>> {
            let mut timings = Vec::new();
            let mut busy_until = 0.0f64;
            for msg in rx {
                let t0 = Instant::now();
                let received = receiver.receive_frame(&msg.packets)?;
                let work = match compute {
                    ComputeModel::Fixed { receiver_s, .. } => receiver_s,
                    ComputeModel::Measured => t0.elapsed().as_secs_f64(),
                };
                let capture = msg.record.index as f64 / fps;
                let done = msg.arrival_s.max(busy_until) + work;
                busy_until = done;
                let timing = FrameTiming {
                    frame_id: received.frame_id,
                    capture_s: capture,
                    sent_s: msg.sent_s,
                    arrival_s: msg.arrival_s,
                    done_s: done,
                    latency_ms: (done - capture) * 1000.0,
                };
                consume(&msg.record, &received, &timing)?;
                timings.push(timing);
            }
            Ok(timings)
        });

        let sent = send_side.join().map_err(|_| Error::Session("sender thread panicked".into()))?;
        let received = recv_side.join().map_err(|_| Error::Session("receiver thread panicked".into()))?;
        match (sent, received) {
            (Err(e), _) => Err(e.at("sender")),
            (_, Err(e)) => Err(e.at("receiver")),
            (Ok(()), Ok(t)) => Ok(t),
        }
    })
}
