//! Property tests: codec round-trips and recovery/oracle equivalence.

use std::collections::BTreeSet;

use proptest::prelude::*;

use frer_core::codec::{self, Frame};
use frer_core::frer::{replicate, Decision, ReplicationEntry, SequenceRecovery, StreamHandle};
use frer_core::oracle::{check_equivalence, OracleState, PerturbedStream};
use frer_core::PortId;

fn vlan_frame(vid: u16, pcp: u8, dei: bool, payload: Vec<u8>) -> Frame {
    let mut octets = Vec::new();
    octets.extend_from_slice(&[2, 0, 0, 0, 0, 1]);
    octets.extend_from_slice(&[2, 0, 0, 0, 0, 2]);
    octets.extend_from_slice(&0x8100u16.to_be_bytes());
    let tci = ((pcp as u16) << 13) | ((dei as u16) << 12) | vid;
    octets.extend_from_slice(&tci.to_be_bytes());
    octets.extend_from_slice(&0x0800u16.to_be_bytes());
    octets.extend_from_slice(&payload);
    Frame::new(octets)
}

proptest! {
    /// push then pop restores the frame byte-exact and recovers the sequence;
    /// the length delta is exactly +6/-6 and parse agrees on the sequence.
    #[test]
    fn rtag_round_trip(
        vid in 1u16..=4094,
        pcp in 0u8..8,
        dei: bool,
        seq: u16,
        payload in proptest::collection::vec(any::<u8>(), 0..1500),
    ) {
        let frame = vlan_frame(vid, pcp, dei, payload);
        let tagged = codec::push_rtag(&frame, seq).unwrap();
        prop_assert_eq!(tagged.len(), frame.len() + 6);
        let parsed = codec::parse_frame(&tagged.octets).unwrap();
        prop_assert_eq!(parsed.rtag.unwrap().sequence, seq);
        prop_assert_eq!(parsed.vlan.unwrap().vid, vid);
        prop_assert_eq!(parsed.payload_offset, 24);
        let (restored, got) = codec::pop_rtag(&tagged).unwrap();
        prop_assert_eq!(restored, frame);
        prop_assert_eq!(got, seq);
    }

    /// Codec operations never touch payload octets.
    #[test]
    fn payload_opaque(
        vid in 1u16..=4094,
        seq: u16,
        payload in proptest::collection::vec(any::<u8>(), 1..600),
    ) {
        let frame = vlan_frame(vid, 0, false, payload.clone());
        let tagged = codec::push_rtag(&frame, seq).unwrap();
        let parsed = codec::parse_frame(&tagged.octets).unwrap();
        prop_assert_eq!(&tagged.octets[parsed.payload_offset..], &payload[..]);
    }

    /// All replicate copies are byte-identical and exactly one sequence is
    /// consumed per untagged frame.
    #[test]
    fn replication_transparency(
        vid in 1u16..=4094,
        n_ports in 1usize..5,
        n_frames in 1usize..20,
    ) {
        let stream = StreamHandle::new(vid).unwrap();
        let ports: Vec<PortId> = (0..n_ports).map(|i| PortId::new(format!("p{i}"))).collect();
        let mut entry = ReplicationEntry::new(stream, ports, false).unwrap();
        for k in 0..n_frames {
            let frame = vlan_frame(vid, 0, false, vec![k as u8; 64]);
            let out = replicate(&frame, &mut entry).unwrap();
            prop_assert_eq!(out.len(), n_ports);
            for (_, f) in &out {
                prop_assert_eq!(&f.octets, &out[0].1.octets);
                prop_assert_eq!(codec::parse_frame(&f.octets).unwrap().rtag.unwrap().sequence, k as u16);
            }
        }
        prop_assert_eq!(entry.generator().peek(), n_frames as u16);
    }

    /// For any interleaving of two replicas per sequence, exactly one passes.
    #[test]
    fn first_copy_wins(seed: u64, len in 1usize..300) {
        let stream = PerturbedStream {
            base_length: len,
            seed,
            duplication_p: 1.0,
            reorder_window: 8,
            loss_p: 0.0,
            wrap_offset: 65500,
        };
        let mut recovery = SequenceRecovery::new(
            StreamHandle::new(100).unwrap(), 64, u64::MAX).unwrap();
        let mut passes: std::collections::BTreeMap<u64, u32> = Default::default();
        for (i, (abs, wire)) in stream.generate().into_iter().enumerate() {
            if recovery.recover(wire, i as u64) == Decision::Pass {
                *passes.entry(abs).or_default() += 1;
            }
        }
        prop_assert_eq!(passes.len(), len);
        prop_assert!(passes.values().all(|&c| c == 1));
    }

    /// Decision-for-decision agreement with the brute-force oracle under
    /// random loss, duplication, reordering and wrap offsets.
    #[test]
    fn oracle_equivalence(
        seed: u64,
        h in 2usize..256,
        dup in 0.0f64..1.0,
        loss in 0.0f64..0.5,
        offset in 0u64..200_000,
    ) {
        let reorder = (h - 1) / 2;
        let stream = PerturbedStream {
            base_length: 2000,
            seed,
            duplication_p: dup,
            reorder_window: reorder,
            loss_p: loss,
            wrap_offset: offset,
        };
        let mut recovery = SequenceRecovery::new(
            StreamHandle::new(100).unwrap(), h, u64::MAX).unwrap();
        let mut oracle = OracleState::new(h);
        check_equivalence(&mut recovery, &mut oracle, &stream.generate())
            .map_err(|d| TestCaseError::fail(d.to_string()))?;
    }

    /// Counter conservation over arbitrary inputs.
    #[test]
    fn counters_conserved(seqs in proptest::collection::vec(any::<u16>(), 0..500)) {
        let mut recovery = SequenceRecovery::new(
            StreamHandle::new(100).unwrap(), 64, u64::MAX).unwrap();
        for (i, s) in seqs.iter().enumerate() {
            recovery.recover(*s, i as u64);
        }
        let c = recovery.counters();
        prop_assert_eq!(
            c.passed + c.discarded_duplicate + c.discarded_rogue,
            seqs.len() as u64
        );
    }
}

#[test]
fn wraparound_soundness_200k_in_order() {
    let mut recovery =
        SequenceRecovery::new(StreamHandle::new(100).unwrap(), 64, u64::MAX).unwrap();
    for (i, (_, wire)) in PerturbedStream::in_order(200_000, 0)
        .generate()
        .into_iter()
        .enumerate()
    {
        assert_eq!(recovery.recover(wire, i as u64), Decision::Pass, "at {i}");
    }
    let c = recovery.counters();
    assert_eq!(c.passed, 200_000);
    assert_eq!(c.discarded_duplicate + c.discarded_rogue, 0);
    assert_eq!(c.resets, 0);
}

#[test]
fn identify_stream_is_configuration_driven() {
    let configured: BTreeSet<u16> = [100, 200].into();
    let h = codec::parse_frame(&vlan_frame(100, 0, false, vec![0; 50]).octets).unwrap();
    assert_eq!(
        frer_core::identify_stream(&h, &configured).unwrap().vid(),
        100
    );
    let h = codec::parse_frame(&vlan_frame(300, 0, false, vec![0; 50]).octets).unwrap();
    assert!(frer_core::identify_stream(&h, &configured).is_none());
}
