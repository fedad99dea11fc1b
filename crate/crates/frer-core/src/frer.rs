//! The FRER protocol machine: stream identification, sequence generation,
//! replication and elimination with the vector recovery algorithm.
//!
//! State objects ([`SequenceGenerator`], [`SequenceRecovery`]) perform no
//! internal locking; callers must guarantee exclusive access per state object
//! per call. States of different streams are independent.

use std::collections::BTreeSet;

use crate::codec::{self, CodecError, Frame, ParsedHeaders};
use crate::PortId;

pub const SEQ_SPACE: u32 = 1 << 16;
pub const DEFAULT_HISTORY_LENGTH: usize = 64;
pub const MIN_HISTORY_LENGTH: usize = 2;
pub const MAX_HISTORY_LENGTH: usize = 4096;
/// Quiet interval after which recovery state resets to take-any.
pub const DEFAULT_RESET_TIMEOUT_NS: u64 = 2_000_000_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FrerError {
    #[error("VLAN ID {0} out of the [1, 4094] stream range")]
    InvalidVid(u16),
    #[error("history length {0} out of [{MIN_HISTORY_LENGTH}, {MAX_HISTORY_LENGTH}]")]
    InvalidHistoryLength(usize),
    #[error("egress port set empty or containing duplicates")]
    BadEgressSet,
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// A protected stream, identified by its VLAN ID.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StreamHandle {
    vid: u16,
}

impl StreamHandle {
    pub fn new(vid: u16) -> Result<Self, FrerError> {
        if (1..=4094).contains(&vid) {
            Ok(StreamHandle { vid })
        } else {
            Err(FrerError::InvalidVid(vid))
        }
    }

    pub fn vid(&self) -> u16 {
        self.vid
    }
}

/// Returns the stream a parsed frame belongs to, if its VLAN ID is one of the
/// configured stream VIDs. Anything else is background traffic.
pub fn identify_stream(headers: &ParsedHeaders, configured: &BTreeSet<u16>) -> Option<StreamHandle> {
    let vid = headers.vlan?.vid;
    if configured.contains(&vid) {
        StreamHandle::new(vid).ok()
    } else {
        None
    }
}

/// Per-stream monotone sequence source, wrapping at 2^16.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceGenerator {
    stream: StreamHandle,
    next_seq: u16,
}

impl SequenceGenerator {
    pub fn new(stream: StreamHandle) -> Self {
        SequenceGenerator { stream, next_seq: 0 }
    }

    pub fn stream(&self) -> StreamHandle {
        self.stream
    }

    pub fn peek(&self) -> u16 {
        self.next_seq
    }

    /// Returns the current sequence number and advances modulo 2^16.
    pub fn next_sequence(&mut self) -> u16 {
        let seq = self.next_seq;
        self.next_seq = self.next_seq.wrapping_add(1);
        seq
    }
}

/// Per-stream replication: sequence generator plus egress port set.
#[derive(Debug, Clone)]
pub struct ReplicationEntry {
    stream: StreamHandle,
    egress_ports: Vec<PortId>,
    generator: SequenceGenerator,
    /// Forward frames that already carry an R-tag unmodified instead of
    /// failing; sequence generation is skipped for them.
    pub skip_if_tagged: bool,
}

impl ReplicationEntry {
    pub fn new(
        stream: StreamHandle,
        egress_ports: Vec<PortId>,
        skip_if_tagged: bool,
    ) -> Result<Self, FrerError> {
        if egress_ports.is_empty() {
            return Err(FrerError::BadEgressSet);
        }
        let unique: BTreeSet<&PortId> = egress_ports.iter().collect();
        if unique.len() != egress_ports.len() {
            return Err(FrerError::BadEgressSet);
        }
        Ok(ReplicationEntry {
            stream,
            egress_ports,
            generator: SequenceGenerator::new(stream),
            skip_if_tagged,
        })
    }

    pub fn stream(&self) -> StreamHandle {
        self.stream
    }

    pub fn egress_ports(&self) -> &[PortId] {
        &self.egress_ports
    }

    pub fn generator(&self) -> &SequenceGenerator {
        &self.generator
    }
}

/// Tags a frame with the next sequence number (unless it already carries an
/// R-tag and `skip_if_tagged` is set) and emits one identical copy per
/// egress port.
pub fn replicate(
    frame: &Frame,
    entry: &mut ReplicationEntry,
) -> Result<Vec<(PortId, Frame)>, FrerError> {
    let out = if codec::has_rtag(frame) {
        if !entry.skip_if_tagged {
            return Err(FrerError::Codec(CodecError::AlreadyTagged));
        }
        frame.clone()
    } else {
        let seq = entry.generator.next_sequence();
        codec::push_rtag(frame, seq)?
    };
    Ok(entry
        .egress_ports
        .iter()
        .map(|p| (p.clone(), out.clone()))
        .collect())
}

/// Elimination outcome of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Pass,
    DiscardDuplicate,
    DiscardRogue,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub passed: u64,
    pub discarded_duplicate: u64,
    pub discarded_rogue: u64,
    pub tagless: u64,
    pub resets: u64,
}

/// History bit window. Bit `i` set means sequence `(recov_seq - i) mod 2^16`
/// has already been accepted.
#[derive(Debug, Clone, PartialEq, Eq)]
struct BitWindow {
    words: Vec<u64>,
    len: usize,
}

impl BitWindow {
    fn new(len: usize) -> Self {
        BitWindow {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    fn set(&mut self, i: usize) {
        debug_assert!(i < self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    fn clear_all(&mut self) {
        self.words.fill(0);
    }

    #[cfg(test)]
    fn any_set(&self) -> bool {
        self.words.iter().any(|w| *w != 0)
    }

    /// Shift every bit toward higher indices by `k`; bits shifted past
    /// `len - 1` are forgotten.
    fn shift_up(&mut self, k: usize) {
        if k >= self.len {
            self.clear_all();
            return;
        }
        let word_shift = k / 64;
        let bit_shift = k % 64;
        for i in (0..self.words.len()).rev() {
            let mut v = if i >= word_shift {
                self.words[i - word_shift] << bit_shift
            } else {
                0
            };
            if bit_shift > 0 && i > word_shift {
                v |= self.words[i - word_shift - 1] >> (64 - bit_shift);
            }
            self.words[i] = v;
        }
        // mask bits at and above len in the top word
        let top_bits = self.len % 64;
        if top_bits != 0 {
            let last = self.words.len() - 1;
            self.words[last] &= (1u64 << top_bits) - 1;
        }
    }
}

/// Per-stream elimination state for the vector recovery algorithm.
#[derive(Debug, Clone)]
pub struct SequenceRecovery {
    stream: StreamHandle,
    take_any: bool,
    recov_seq: u16,
    history: BitWindow,
    pub last_packet_time: u64,
    pub reset_timeout: u64,
    counters: Counters,
}

impl SequenceRecovery {
    pub fn new(
        stream: StreamHandle,
        history_length: usize,
        reset_timeout: u64,
    ) -> Result<Self, FrerError> {
        if !(MIN_HISTORY_LENGTH..=MAX_HISTORY_LENGTH).contains(&history_length) {
            return Err(FrerError::InvalidHistoryLength(history_length));
        }
        Ok(SequenceRecovery {
            stream,
            take_any: true,
            recov_seq: 0,
            history: BitWindow::new(history_length),
            last_packet_time: 0,
            reset_timeout,
            counters: Counters::default(),
        })
    }

    pub fn stream(&self) -> StreamHandle {
        self.stream
    }

    pub fn take_any(&self) -> bool {
        self.take_any
    }

    pub fn recov_seq(&self) -> u16 {
        self.recov_seq
    }

    pub fn history_length(&self) -> usize {
        self.history.len
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    /// Decide the fate of sequence number `seq` observed at time `now` and
    /// update the recovery state (vector recovery algorithm).
    pub fn recover(&mut self, seq: u16, now: u64) -> Decision {
        self.last_packet_time = now;

        if self.take_any {
            self.take_any = false;
            self.recov_seq = seq;
            self.history.clear_all();
            self.history.set(0);
            self.counters.passed += 1;
            return Decision::Pass;
        }

        let h = self.history.len as i32;
        let raw = seq.wrapping_sub(self.recov_seq) as i32; // 0..65535
        let delta = (raw + 32768) % SEQ_SPACE as i32 - 32768; // [-32768, 32767]

        if delta >= h || delta <= -h {
            self.counters.discarded_rogue += 1;
            return Decision::DiscardRogue;
        }

        if delta <= 0 {
            // within the window behind the highest accepted sequence
            let d = (-delta) as usize;
            if self.history.get(d) {
                self.counters.discarded_duplicate += 1;
                Decision::DiscardDuplicate
            } else {
                self.history.set(d);
                self.counters.passed += 1;
                Decision::Pass
            }
        } else {
            // forward jump: new highest accepted sequence
            self.history.shift_up(delta as usize);
            self.history.set(0);
            self.recov_seq = seq;
            self.counters.passed += 1;
            Decision::Pass
        }
    }

    /// Reset to take-any if nothing has been received for `reset_timeout`.
    /// Returns whether a reset occurred; idempotent while already take-any.
    pub fn check_reset(&mut self, now: u64) -> bool {
        if !self.take_any && now.saturating_sub(self.last_packet_time) >= self.reset_timeout {
            self.take_any = true;
            self.history.clear_all();
            self.counters.resets += 1;
            true
        } else {
            false
        }
    }

    #[cfg(test)]
    fn history_bits_set(&self) -> bool {
        self.history.any_set()
    }
}

/// Result of presenting a frame to the elimination function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EliminateOutcome {
    Pass(Frame),
    Drop(Decision),
}

/// Elimination: read the R-tag sequence, run recovery, and forward the first
/// copy (stripping the R-tag when `strip_rtag`). Frames of the protected
/// stream that carry no R-tag pass unchanged and are counted as tagless.
pub fn eliminate(
    frame: &Frame,
    state: &mut SequenceRecovery,
    now: u64,
    strip_rtag: bool,
) -> EliminateOutcome {
    if !codec::has_rtag(frame) {
        state.counters.tagless += 1;
        return EliminateOutcome::Pass(frame.clone());
    }
    let (stripped, seq) = codec::pop_rtag(frame).expect("has_rtag checked");
    match state.recover(seq, now) {
        Decision::Pass => EliminateOutcome::Pass(if strip_rtag { stripped } else { frame.clone() }),
        drop => EliminateOutcome::Drop(drop),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::push_rtag;

    fn stream(vid: u16) -> StreamHandle {
        StreamHandle::new(vid).unwrap()
    }

    fn vlan_frame(vid: u16) -> Frame {
        let mut octets = Vec::new();
        octets.extend_from_slice(&[2, 0, 0, 0, 0, 1]);
        octets.extend_from_slice(&[2, 0, 0, 0, 0, 2]);
        octets.extend_from_slice(&[0x81, 0x00]);
        octets.extend_from_slice(&vid.to_be_bytes());
        octets.extend_from_slice(&[0x08, 0x00]);
        octets.extend_from_slice(&[0u8; 46]);
        Frame::new(octets)
    }

    fn recovery(h: usize) -> SequenceRecovery {
        SequenceRecovery::new(stream(100), h, DEFAULT_RESET_TIMEOUT_NS).unwrap()
    }

    #[test]
    fn stream_handle_vid_range() {
        assert!(StreamHandle::new(0).is_err());
        assert!(StreamHandle::new(4095).is_err());
        assert!(StreamHandle::new(1).is_ok());
        assert!(StreamHandle::new(4094).is_ok());
    }

    #[test]
    fn identify_configured_stream() {
        let configured: BTreeSet<u16> = [100].into();
        let h = codec::parse_frame(&vlan_frame(100).octets).unwrap();
        assert_eq!(identify_stream(&h, &configured), Some(stream(100)));
        let h = codec::parse_frame(&vlan_frame(200).octets).unwrap();
        assert_eq!(identify_stream(&h, &configured), None);
        let mut untagged = vec![0u8; 60];
        untagged[12] = 0x08;
        let h = codec::parse_frame(&untagged).unwrap();
        assert_eq!(identify_stream(&h, &configured), None);
    }

    #[test]
    fn sequence_generator_advances_and_wraps() {
        let mut g = SequenceGenerator::new(stream(1));
        assert_eq!(g.next_sequence(), 0);
        assert_eq!(g.next_sequence(), 1);
        g.next_seq = 7;
        assert_eq!(g.next_sequence(), 7);
        assert_eq!(g.peek(), 8);
        g.next_seq = 65535;
        assert_eq!(g.next_sequence(), 65535);
        assert_eq!(g.peek(), 0);
    }

    #[test]
    fn replicate_tags_and_fans_out() {
        let mut entry = ReplicationEntry::new(
            stream(100),
            vec![PortId::new("A.ab0"), PortId::new("A.ab1")],
            false,
        )
        .unwrap();
        let out = replicate(&vlan_frame(100), &mut entry).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].1, out[1].1);
        let (_, seq) = codec::pop_rtag(&out[0].1).unwrap();
        assert_eq!(seq, 0);
        assert_eq!(entry.generator().peek(), 1);
    }

    #[test]
    fn replicate_skips_generation_when_tagged() {
        let mut entry = ReplicationEntry::new(
            stream(100),
            vec![PortId::new("p0"), PortId::new("p1")],
            true,
        )
        .unwrap();
        let tagged = push_rtag(&vlan_frame(100), 9).unwrap();
        let out = replicate(&tagged, &mut entry).unwrap();
        assert_eq!(out.len(), 2);
        for (_, f) in &out {
            assert_eq!(codec::pop_rtag(f).unwrap().1, 9);
        }
        assert_eq!(entry.generator().peek(), 0);
    }

    #[test]
    fn replicate_rejects_tagged_without_skip() {
        let mut entry =
            ReplicationEntry::new(stream(100), vec![PortId::new("p0")], false).unwrap();
        let tagged = push_rtag(&vlan_frame(100), 9).unwrap();
        assert_eq!(
            replicate(&tagged, &mut entry).unwrap_err(),
            FrerError::Codec(CodecError::AlreadyTagged)
        );
    }

    #[test]
    fn replicate_single_port_degenerate() {
        let mut entry =
            ReplicationEntry::new(stream(100), vec![PortId::new("p0")], false).unwrap();
        assert_eq!(replicate(&vlan_frame(100), &mut entry).unwrap().len(), 1);
    }

    #[test]
    fn egress_set_validated() {
        assert!(ReplicationEntry::new(stream(1), vec![], false).is_err());
        assert!(ReplicationEntry::new(
            stream(1),
            vec![PortId::new("p"), PortId::new("p")],
            false
        )
        .is_err());
    }

    #[test]
    fn recover_take_any_accepts_anything() {
        let mut r = recovery(64);
        assert!(r.take_any());
        assert_eq!(r.recover(12345, 0), Decision::Pass);
        assert!(!r.take_any());
        assert_eq!(r.recov_seq(), 12345);
    }

    #[test]
    fn recover_duplicate_and_successor() {
        let mut r = recovery(64);
        r.recover(10, 0);
        assert_eq!(r.recover(10, 1), Decision::DiscardDuplicate);
        assert_eq!(r.recover(11, 2), Decision::Pass);
        assert_eq!(r.recov_seq(), 11);
    }

    #[test]
    fn recover_rogue_beyond_window() {
        let mut r = recovery(64);
        r.recover(10, 0);
        assert_eq!(r.recover(200, 1), Decision::DiscardRogue);
        // state unchanged apart from counters and timestamp
        assert_eq!(r.recov_seq(), 10);
        assert_eq!(r.recover(11, 2), Decision::Pass);
    }

    #[test]
    fn recover_across_wraparound() {
        let mut r = recovery(64);
        r.recover(65535, 0);
        assert_eq!(r.recover(0, 1), Decision::Pass);
        assert_eq!(r.recov_seq(), 0);
    }

    #[test]
    fn recover_late_first_copy_behind_wrap() {
        let mut r = recovery(64);
        r.recover(5, 0);
        // delta -11, bit unset: out-of-order first copy
        assert_eq!(r.recover(65530, 1), Decision::Pass);
        assert_eq!(r.recov_seq(), 5);
        assert_eq!(r.recover(65530, 2), Decision::DiscardDuplicate);
    }

    #[test]
    fn recover_forward_jump_shifts_history() {
        let mut r = recovery(8);
        r.recover(0, 0);
        r.recover(5, 1);
        // 0 shifted to bit 5, still remembered
        assert_eq!(r.recover(0, 2), Decision::DiscardDuplicate);
        // 1..4 never seen
        assert_eq!(r.recover(3, 3), Decision::Pass);
        // jump large enough to forget everything
        assert_eq!(r.recover(12, 4), Decision::Pass);
        assert_eq!(r.recover(5, 5), Decision::DiscardDuplicate);
        assert_eq!(r.recover(6, 6), Decision::Pass);
    }

    #[test]
    fn check_reset_thresholds() {
        let mut r = recovery(64);
        r.recover(1, 0);
        assert!(!r.check_reset(1_900_000_000));
        assert!(!r.take_any());
        assert!(r.check_reset(2_500_000_000));
        assert!(r.take_any());
        assert!(!r.history_bits_set());
        assert_eq!(r.counters().resets, 1);
        // idempotent while take_any
        assert!(!r.check_reset(9_000_000_000));
        assert_eq!(r.counters().resets, 1);
        // next packet accepted regardless of sequence
        assert_eq!(r.recover(40000, 9_000_000_001), Decision::Pass);
    }

    #[test]
    fn eliminate_first_copy_wins() {
        let mut r = recovery(64);
        let tagged = push_rtag(&vlan_frame(100), 3).unwrap();
        match eliminate(&tagged, &mut r, 0, true) {
            EliminateOutcome::Pass(f) => assert_eq!(f, vlan_frame(100)),
            other => panic!("expected pass, got {other:?}"),
        }
        assert_eq!(
            eliminate(&tagged, &mut r, 1, true),
            EliminateOutcome::Drop(Decision::DiscardDuplicate)
        );
        assert_eq!(r.counters().passed, 1);
        assert_eq!(r.counters().discarded_duplicate, 1);
    }

    #[test]
    fn eliminate_keeps_rtag_when_configured() {
        let mut r = recovery(64);
        let tagged = push_rtag(&vlan_frame(100), 3).unwrap();
        match eliminate(&tagged, &mut r, 0, false) {
            EliminateOutcome::Pass(f) => assert!(codec::has_rtag(&f)),
            other => panic!("expected pass, got {other:?}"),
        }
    }

    #[test]
    fn eliminate_tagless_passes_unchanged() {
        let mut r = recovery(64);
        let plain = vlan_frame(100);
        assert_eq!(
            eliminate(&plain, &mut r, 0, true),
            EliminateOutcome::Pass(plain.clone())
        );
        assert_eq!(r.counters().tagless, 1);
        assert_eq!(r.counters().passed, 0);
    }

    #[test]
    fn counter_conservation() {
        let mut r = recovery(16);
        let seqs = [0u16, 0, 1, 5, 3, 3, 200, 65535, 4];
        for (i, s) in seqs.iter().enumerate() {
            r.recover(*s, i as u64);
        }
        let c = r.counters();
        assert_eq!(
            c.passed + c.discarded_duplicate + c.discarded_rogue,
            seqs.len() as u64
        );
    }

    #[test]
    fn history_length_bounds() {
        assert!(SequenceRecovery::new(stream(1), 1, 0).is_err());
        assert!(SequenceRecovery::new(stream(1), 4097, 0).is_err());
        assert!(SequenceRecovery::new(stream(1), 2, 0).is_ok());
        assert!(SequenceRecovery::new(stream(1), 4096, 0).is_ok());
    }

    #[test]
    fn bit_window_shift_across_words() {
        let mut w = BitWindow::new(130);
        w.set(0);
        w.set(63);
        w.set(64);
        w.shift_up(65);
        assert!(w.get(65));
        assert!(w.get(128));
        assert!(w.get(129));
        assert!(!w.get(0));
        w.shift_up(130);
        assert!(!w.any_set());
    }
}
