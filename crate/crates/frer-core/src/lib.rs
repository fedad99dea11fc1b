//! Frame Replication and Elimination for Reliability (FRER) building blocks.
//!
//! `codec` handles the Ethernet/VLAN/R-tag octet layout, `frer` is the
//! protocol machine (stream identification, sequence generation, replication
//! and vector-recovery elimination), and `oracle` is a brute-force reference
//! model used to validate the recovery algorithm.

pub mod codec;
pub mod frer;
pub mod oracle;

pub use codec::{has_rtag, parse_frame, pop_rtag, push_rtag, CodecError, Frame, ParsedHeaders, RTag, VlanTag};
pub use frer::{
    identify_stream, Counters, Decision, EliminateOutcome, ReplicationEntry, SequenceGenerator,
    SequenceRecovery, StreamHandle,
};

/// Identifier of a node port, e.g. `"A.ab0"`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PortId(pub String);

impl PortId {
    pub fn new(id: impl Into<String>) -> Self {
        PortId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for PortId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PortId {
    fn from(s: &str) -> Self {
        PortId(s.to_owned())
    }
}
