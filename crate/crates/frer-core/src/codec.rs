//! Ethernet/VLAN/R-tag frame codec.
//!
//! Octet layout (all 16-bit fields in network byte order):
//!
//! ```text
//! offset  0..6    destination MAC
//! offset  6..12   source MAC
//! offset 12..14   ethertype, 0x8100 when VLAN-tagged
//! offset 14..16   VLAN TCI (pcp:3, dei:1, vid:12)
//! offset 16..22   R-tag, when present: 0xF1C1, reserved 0x0000, sequence
//! next 2 octets   inner ethertype
//! then            payload (opaque)
//! ```
//!
//! The R-tag is only recognised directly after a single VLAN tag; stacked
//! tags (QinQ) are out of scope.

use crate::PortId;

pub const ETHERTYPE_VLAN: u16 = 0x8100;
pub const ETHERTYPE_RTAG: u16 = 0xF1C1;

/// Minimal Ethernet header: two MACs plus ethertype.
pub const MIN_FRAME_LEN: usize = 14;
/// Encoded R-tag width: ethertype + reserved + sequence.
pub const RTAG_LEN: usize = 6;
/// MTU cap on accepted frames.
pub const DEFAULT_MTU: usize = 2048;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("frame truncated: {len} octets, header needs {need}")]
    TruncatedFrame { len: usize, need: usize },
    #[error("VLAN TPID present but fewer than 4 tag octets follow")]
    MalformedVlan,
    #[error("frame of {len} octets exceeds the {mtu}-octet MTU cap")]
    OversizedFrame { len: usize, mtu: usize },
    #[error("frame already carries an R-tag")]
    AlreadyTagged,
    #[error("frame carries no VLAN tag")]
    NoVlan,
    #[error("frame carries no R-tag")]
    NoRtag,
}

/// A raw frame plus ingress metadata. Frames are immutable values; every
/// rewrite returns a new frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub octets: Vec<u8>,
    pub ingress_port: Option<PortId>,
    pub arrival_time: Option<u64>,
}

impl Frame {
    pub fn new(octets: Vec<u8>) -> Self {
        Frame {
            octets,
            ingress_port: None,
            arrival_time: None,
        }
    }

    pub fn len(&self) -> usize {
        self.octets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.octets.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VlanTag {
    pub pcp: u8,
    pub dei: bool,
    pub vid: u16,
}

impl VlanTag {
    fn from_tci(tci: u16) -> Self {
        VlanTag {
            pcp: (tci >> 13) as u8,
            dei: (tci >> 12) & 1 == 1,
            vid: tci & 0x0fff,
        }
    }

    pub fn tci(&self) -> u16 {
        ((self.pcp as u16) << 13) | ((self.dei as u16) << 12) | (self.vid & 0x0fff)
    }
}

/// Decoded R-tag. The ethertype (0xF1C1) and the 16 reserved bits are fixed
/// on encode and ignored on decode; only the sequence is carried.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RTag {
    pub sequence: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedHeaders {
    pub dst_mac: [u8; 6],
    pub src_mac: [u8; 6],
    pub vlan: Option<VlanTag>,
    pub rtag: Option<RTag>,
    pub inner_ethertype: u16,
    pub payload_offset: usize,
}

fn be16(octets: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([octets[at], octets[at + 1]])
}

/// Parse Ethernet, optional VLAN tag and optional R-tag. Never mutates the
/// input; payload octets are not inspected.
pub fn parse_frame(octets: &[u8]) -> Result<ParsedHeaders, CodecError> {
    if octets.len() < MIN_FRAME_LEN {
        return Err(CodecError::TruncatedFrame {
            len: octets.len(),
            need: MIN_FRAME_LEN,
        });
    }
    if octets.len() > DEFAULT_MTU {
        return Err(CodecError::OversizedFrame {
            len: octets.len(),
            mtu: DEFAULT_MTU,
        });
    }

    let mut dst_mac = [0u8; 6];
    let mut src_mac = [0u8; 6];
    dst_mac.copy_from_slice(&octets[0..6]);
    src_mac.copy_from_slice(&octets[6..12]);

    let ethertype = be16(octets, 12);
    if ethertype != ETHERTYPE_VLAN {
        return Ok(ParsedHeaders {
            dst_mac,
            src_mac,
            vlan: None,
            rtag: None,
            inner_ethertype: ethertype,
            payload_offset: MIN_FRAME_LEN,
        });
    }

    // TPID + TCI + inner ethertype
    if octets.len() < 18 {
        return Err(CodecError::MalformedVlan);
    }
    let vlan = VlanTag::from_tci(be16(octets, 14));

    if be16(octets, 16) != ETHERTYPE_RTAG {
        return Ok(ParsedHeaders {
            dst_mac,
            src_mac,
            vlan: Some(vlan),
            rtag: None,
            inner_ethertype: be16(octets, 16),
            payload_offset: 18,
        });
    }

    // R-tag (6 octets) + inner ethertype
    if octets.len() < 24 {
        return Err(CodecError::TruncatedFrame {
            len: octets.len(),
            need: 24,
        });
    }
    Ok(ParsedHeaders {
        dst_mac,
        src_mac,
        vlan: Some(vlan),
        rtag: Some(RTag {
            sequence: be16(octets, 20),
        }),
        inner_ethertype: be16(octets, 22),
        payload_offset: 24,
    })
}

/// Insert an R-tag carrying `seq` directly after the VLAN tag. The first 16
/// octets and everything from the original offset 16 onward are preserved.
pub fn push_rtag(frame: &Frame, seq: u16) -> Result<Frame, CodecError> {
    let headers = parse_frame(&frame.octets)?;
    if headers.vlan.is_none() {
        return Err(CodecError::NoVlan);
    }
    if headers.rtag.is_some() {
        return Err(CodecError::AlreadyTagged);
    }
    if frame.octets.len() + RTAG_LEN > DEFAULT_MTU {
        return Err(CodecError::OversizedFrame {
            len: frame.octets.len() + RTAG_LEN,
            mtu: DEFAULT_MTU,
        });
    }

    let mut octets = Vec::with_capacity(frame.octets.len() + RTAG_LEN);
    octets.extend_from_slice(&frame.octets[..16]);
    octets.extend_from_slice(&ETHERTYPE_RTAG.to_be_bytes());
    octets.extend_from_slice(&[0, 0]);
    octets.extend_from_slice(&seq.to_be_bytes());
    octets.extend_from_slice(&frame.octets[16..]);

    Ok(Frame {
        octets,
        ingress_port: frame.ingress_port.clone(),
        arrival_time: frame.arrival_time,
    })
}

/// Remove the R-tag and return the restored frame together with the carried
/// sequence number. Exact inverse of [`push_rtag`].
pub fn pop_rtag(frame: &Frame) -> Result<(Frame, u16), CodecError> {
    let headers = parse_frame(&frame.octets)?;
    let rtag = headers.rtag.ok_or(CodecError::NoRtag)?;

    let mut octets = Vec::with_capacity(frame.octets.len() - RTAG_LEN);
    octets.extend_from_slice(&frame.octets[..16]);
    octets.extend_from_slice(&frame.octets[16 + RTAG_LEN..]);

    Ok((
        Frame {
            octets,
            ingress_port: frame.ingress_port.clone(),
            arrival_time: frame.arrival_time,
        },
        rtag.sequence,
    ))
}

/// True iff the frame parses and the 16-bit value after the VLAN TCI is the
/// R-tag ethertype. Malformed frames report false.
pub fn has_rtag(frame: &Frame) -> bool {
    matches!(parse_frame(&frame.octets), Ok(h) if h.rtag.is_some())
}
