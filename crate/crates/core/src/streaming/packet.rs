//! Fragmentation of stream payloads into MTU-sized packets.
//!
//! Header, 12 bytes, little-endian, in order: stream_id u8, resolution_id
//! u8, frame_id u32, frag_index u16, frag_count u16, payload_len u16.

use crate::error::{Error, Result};

pub const HEADER_LEN: usize = 12;
pub const DEFAULT_MTU: usize = 1200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum StreamId {
    PerFrame = 1,
    Reference = 2,
    Keypoints = 3,
}

impl StreamId {
    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            1 => Ok(StreamId::PerFrame),
            2 => Ok(StreamId::Reference),
            3 => Ok(StreamId::Keypoints),
            _ => Err(Error::Packet(format!("unknown stream id {v}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Packet {
    pub stream_id: StreamId,
    pub resolution_id: u8,
    pub frame_id: u32,
    pub frag_index: u16,
    pub frag_count: u16,
    pub payload: Vec<u8>,
}

impl Packet {
    pub fn wire_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.wire_len());
        out.push(self.stream_id as u8);
        out.push(self.resolution_id);
        out.extend_from_slice(&self.frame_id.to_le_bytes());
        out.extend_from_slice(&self.frag_index.to_le_bytes());
        out.extend_from_slice(&self.frag_count.to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u16).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Packet(format!("{} bytes is shorter than the header", bytes.len())));
        }
        let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
        let frame_id = u32::from_le_bytes(bytes[2..6].try_into().unwrap());
        let len = u16_at(10) as usize;
        if bytes.len() != HEADER_LEN + len {
            return Err(Error::Packet(format!(
                "frame {frame_id}: payload length {len} disagrees with {} received bytes",
                bytes.len()
            )));
        }
        let p = Packet {
            stream_id: StreamId::from_u8(bytes[0])?,
            resolution_id: bytes[1],
            frame_id,
            frag_index: u16_at(6),
            frag_count: u16_at(8),
            payload: bytes[HEADER_LEN..].to_vec(),
        };
        if p.frag_index >= p.frag_count {
            return Err(Error::Packet(format!(
                "frame {frame_id}: fragment {} of {}",
                p.frag_index, p.frag_count
            )));
        }
        Ok(p)
    }
}

pub fn packetize(stream_id: StreamId, frame_id: u32, resolution_id: u8, payload: &[u8], mtu: usize) -> Result<Vec<Packet>> {
    if mtu <= HEADER_LEN {
        return Err(Error::invalid(format!("mtu {mtu} leaves no room after the {HEADER_LEN}-byte header")));
    }
    let chunk = (mtu - HEADER_LEN).min(u16::MAX as usize);
    let count = payload.len().div_ceil(chunk).max(1);
    let frag_count = u16::try_from(count)
        .map_err(|_| Error::Packet(format!("frame {frame_id}: {count} fragments exceed the 16-bit counter")))?;
    let mut chunks: Vec<&[u8]> = payload.chunks(chunk).collect();
    if chunks.is_empty() {
        chunks.push(&[]);
    }
    Ok(chunks
        .into_iter()
        .enumerate()
        .map(|(i, c)| Packet {
            stream_id,
            resolution_id,
            frame_id,
            frag_index: i as u16,
            frag_count,
            payload: c.to_vec(),
        })
        .collect())
}

/// Payload of one complete fragment set, in any arrival order.
pub fn reassemble(packets: &[Packet]) -> Result<Vec<u8>> {
    let first = packets.first().ok_or_else(|| Error::Packet("no fragments to reassemble".into()))?;
    let fid = first.frame_id;
    let mut slots: Vec<Option<&Packet>> = vec![None; first.frag_count as usize];
    for p in packets {
        if p.frame_id != fid {
            return Err(Error::Packet(format!(
                "frame {fid}: fragment from frame {} mixed in",
                p.frame_id
            )));
        }
        if p.stream_id != first.stream_id || p.resolution_id != first.resolution_id || p.frag_count != first.frag_count {
            return Err(Error::Packet(format!("frame {fid}: fragments disagree on stream, resolution or count")));
        }
        let slot = slots
            .get_mut(p.frag_index as usize)
            .ok_or_else(|| Error::Packet(format!("frame {fid}: fragment index {} out of range", p.frag_index)))?;
        if slot.is_some() {
            return Err(Error::Packet(format!("frame {fid}: duplicate fragment {}", p.frag_index)));
        }
        *slot = Some(p);
    }
    let mut out = Vec::new();
    for (i, s) in slots.iter().enumerate() {
        let p = s.ok_or_else(|| Error::Packet(format!("frame {fid}: missing fragment {i}")))?;
        out.extend_from_slice(&p.payload);
    }
    Ok(out)
}
