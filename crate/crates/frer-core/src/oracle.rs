//! Brute-force reference model and randomized stream generators for
//! validating the vector recovery algorithm.
//!
//! The oracle works on unwrapped absolute sequence indices supplied by the
//! generator, which side-steps the modular ambiguity of the 16-bit wire
//! sequence and makes it a trustworthy referee for wraparound behavior.
//! Equivalence only holds while every forward jump (losses plus reordering)
//! stays below the history length; a larger jump wedges the recovery into
//! rejecting everything, and once the wire sequence wraps back into the
//! stale window the 16-bit protocol genuinely loses information.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::frer::{Decision, SequenceRecovery};

/// Reference elimination state over absolute (unwrapped) sequence indices.
#[derive(Debug, Clone)]
pub struct OracleState {
    accepted: BTreeSet<u64>,
    max_accepted: u64,
    h: u64,
    fresh: bool,
}

impl OracleState {
    pub fn new(history_length: usize) -> Self {
        OracleState {
            accepted: BTreeSet::new(),
            max_accepted: 0,
            h: history_length as u64,
            fresh: true,
        }
    }

    pub fn recover(&mut self, abs_seq: u64) -> Decision {
        if self.fresh {
            self.fresh = false;
            self.max_accepted = abs_seq;
            self.accepted.insert(abs_seq);
            return Decision::Pass;
        }
        let delta = abs_seq as i128 - self.max_accepted as i128;
        if delta >= self.h as i128 || delta <= -(self.h as i128) {
            return Decision::DiscardRogue;
        }
        if self.accepted.contains(&abs_seq) {
            return Decision::DiscardDuplicate;
        }
        self.accepted.insert(abs_seq);
        if abs_seq > self.max_accepted {
            self.max_accepted = abs_seq;
            // membership is only ever consulted inside the window
            let cutoff = self.max_accepted.saturating_sub(self.h);
            self.accepted.retain(|&s| s > cutoff);
        }
        Decision::Pass
    }
}

/// Deterministic generator of a perturbed sequence stream: in-order base
/// indices subjected to loss, duplication and bounded reordering, starting
/// at an arbitrary wrap offset.
#[derive(Debug, Clone)]
pub struct PerturbedStream {
    pub base_length: usize,
    pub seed: u64,
    pub duplication_p: f64,
    pub reorder_window: usize,
    pub loss_p: f64,
    pub wrap_offset: u64,
}

impl PerturbedStream {
    pub fn in_order(base_length: usize, wrap_offset: u64) -> Self {
        PerturbedStream {
            base_length,
            seed: 0,
            duplication_p: 0.0,
            reorder_window: 0,
            loss_p: 0.0,
            wrap_offset,
        }
    }

    /// Emit `(absolute index, 16-bit wire sequence)` pairs.
    pub fn generate(&self) -> Vec<(u64, u16)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut events: Vec<u64> = Vec::with_capacity(self.base_length);
        for i in 0..self.base_length {
            let abs = self.wrap_offset + i as u64;
            if self.loss_p > 0.0 && rng.random_bool(self.loss_p) {
                continue;
            }
            events.push(abs);
            if self.duplication_p > 0.0 && rng.random_bool(self.duplication_p) {
                events.push(abs);
            }
        }
        if self.reorder_window > 0 {
            // jittered sort key keeps each element within reorder_window of
            // its original position
            let mut keyed: Vec<(usize, u64)> = events
                .iter()
                .enumerate()
                .map(|(i, &abs)| (i + rng.random_range(0..=self.reorder_window), abs))
                .collect();
            keyed.sort_by_key(|&(key, _)| key);
            events = keyed.into_iter().map(|(_, abs)| abs).collect();
        }
        events
            .into_iter()
            .map(|abs| (abs, (abs % 65536) as u16))
            .collect()
    }
}

/// First point where implementation and oracle disagreed.
#[derive(Debug, Clone)]
pub struct Divergence {
    pub step: usize,
    pub abs_seq: u64,
    pub wire_seq: u16,
    pub impl_decision: Decision,
    pub oracle_decision: Decision,
    pub impl_state: String,
    pub oracle_state: String,
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "divergence at step {} (abs {}, wire {}): impl {:?}, oracle {:?}\nimpl state: {}\noracle state: {}",
            self.step, self.abs_seq, self.wire_seq, self.impl_decision, self.oracle_decision,
            self.impl_state, self.oracle_state
        )
    }
}

/// Run the implementation and the oracle decision-by-decision over a stream.
/// Requires reordering below the history length; outside that regime the two
/// models legitimately diverge.
pub fn check_equivalence(
    recovery: &mut SequenceRecovery,
    oracle: &mut OracleState,
    stream: &[(u64, u16)],
) -> Result<(), Box<Divergence>> {
    for (step, &(abs_seq, wire_seq)) in stream.iter().enumerate() {
        let impl_decision = recovery.recover(wire_seq, step as u64);
        let oracle_decision = oracle.recover(abs_seq);
        if impl_decision != oracle_decision {
            return Err(Box::new(Divergence {
                step,
                abs_seq,
                wire_seq,
                impl_decision,
                oracle_decision,
                impl_state: format!("{recovery:?}"),
                oracle_state: format!("{oracle:?}"),
            }));
        }
    }
    Ok(())
}
