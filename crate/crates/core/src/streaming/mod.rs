//! Dual-stream transport: packets, keypoint payloads, sessions and the link simulator.

mod channel;
mod keypoint_wire;
mod packet;
mod session;

pub use channel::{channel_run, ComputeModel, FrameTiming, LinkState, LinkTrace, SendRecord};
pub use keypoint_wire::{decode_keypoints, encode_keypoints, BYTES_PER_KEYPOINT, KEYPOINT_PAYLOAD_LEN};
pub use packet::{packetize, reassemble, Packet, StreamId, DEFAULT_MTU, HEADER_LEN};
pub use session::{
    CodecContext, ReceivedFrame, Receiver, ReceiverConfig, RefreshPolicy, SendMode, SenderConfig, SentFrame, Sender,
    Upsampler,
};
