//! Statistics over measurement records: nearest-rank percentiles, CDF
//! points and CSV/summary emission.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use frer_core::frer::Counters;

use crate::sim::MeasurementRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountersSnapshot {
    pub passed: u64,
    pub discarded_duplicate: u64,
    pub discarded_rogue: u64,
    pub tagless: u64,
    pub resets: u64,
}

impl From<Counters> for CountersSnapshot {
    fn from(c: Counters) -> Self {
        CountersSnapshot {
            passed: c.passed,
            discarded_duplicate: c.discarded_duplicate,
            discarded_rogue: c.discarded_rogue,
            tagless: c.tagless,
            resets: c.resets,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RttStats {
    pub min_ns: u64,
    pub mean_ns: u64,
    pub p50_ns: u64,
    pub p99_ns: u64,
    pub p999_ns: u64,
    pub max_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub sent: u64,
    pub received: u64,
    pub lost: u64,
    pub rtt: Option<RttStats>,
    pub eliminations: BTreeMap<String, CountersSnapshot>,
    /// One (rtt_ns, cumulative fraction) point per sample, unbinned.
    pub cdf: Vec<(u64, f64)>,
}

/// Nearest-rank percentile of a sorted list: the value at rank
/// ceil(p/100 * n), 1-based.
pub fn nearest_rank(sorted: &[u64], percentile: f64) -> u64 {
    assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = (percentile / 100.0 * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

impl StatsSummary {
    pub fn compute(
        records: &[MeasurementRecord],
        eliminations: BTreeMap<String, Counters>,
    ) -> Self {
        let sent = records.len() as u64;
        let mut rtts: Vec<u64> = records.iter().filter_map(|r| r.rtt()).collect();
        rtts.sort_unstable();
        let received = rtts.len() as u64;

        let rtt = if rtts.is_empty() {
            None
        } else {
            Some(RttStats {
                min_ns: rtts[0],
                mean_ns: (rtts.iter().map(|&v| v as u128).sum::<u128>() / rtts.len() as u128)
                    as u64,
                p50_ns: nearest_rank(&rtts, 50.0),
                p99_ns: nearest_rank(&rtts, 99.0),
                p999_ns: nearest_rank(&rtts, 99.9),
                max_ns: nearest_rank(&rtts, 100.0),
            })
        };
        let n = rtts.len();
        let cdf = rtts
            .into_iter()
            .enumerate()
            .map(|(i, v)| (v, (i + 1) as f64 / n as f64))
            .collect();

        StatsSummary {
            sent,
            received,
            lost: sent - received,
            rtt,
            eliminations: eliminations
                .into_iter()
                .map(|(k, v)| (k, v.into()))
                .collect(),
            cdf,
        }
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("summary serializes");
        out.push('\n');
        out
    }
}

/// Per-packet CSV: `index,send_ns,reply_ns,rtt_ns`, lost packets leaving the
/// reply and rtt columns empty.
pub fn records_to_csv(records: &[MeasurementRecord]) -> String {
    let mut out = String::from("index,send_ns,reply_ns,rtt_ns\n");
    for r in records {
        match r.reply_time {
            Some(reply) => out.push_str(&format!(
                "{},{},{},{}\n",
                r.request_seq,
                r.send_time,
                reply,
                reply - r.send_time
            )),
            None => out.push_str(&format!("{},{},,\n", r.request_seq, r.send_time)),
        }
    }
    out
}

#[derive(Debug, thiserror::Error)]
#[error("cannot write {path}: {source}")]
pub struct EmitError {
    pub path: String,
    pub source: std::io::Error,
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), EmitError> {
    let mut file = std::fs::File::create(path).map_err(|source| EmitError {
        path: path.display().to_string(),
        source,
    })?;
    file.write_all(contents.as_bytes()).map_err(|source| EmitError {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(i: u64, send: u64, reply: Option<u64>) -> MeasurementRecord {
        MeasurementRecord {
            traffic: 0,
            request_seq: i,
            send_time: send,
            reply_time: reply,
        }
    }

    #[test]
    fn nearest_rank_matches_hand_computation() {
        // classic nearest-rank example list
        let v = [15, 20, 35, 40, 50];
        assert_eq!(nearest_rank(&v, 5.0), 15);
        assert_eq!(nearest_rank(&v, 30.0), 20);
        assert_eq!(nearest_rank(&v, 40.0), 20);
        assert_eq!(nearest_rank(&v, 50.0), 35);
        assert_eq!(nearest_rank(&v, 100.0), 50);
    }

    #[test]
    fn summary_on_synthetic_records() {
        let records = vec![
            record(0, 0, Some(100)),
            record(1, 10, Some(210)),
            record(2, 20, None),
            record(3, 30, Some(180)),
        ];
        let s = StatsSummary::compute(&records, BTreeMap::new());
        assert_eq!((s.sent, s.received, s.lost), (4, 3, 1));
        let rtt = s.rtt.unwrap();
        assert_eq!(rtt.min_ns, 100);
        assert_eq!(rtt.max_ns, 200);
        assert_eq!(rtt.p50_ns, 150);
        assert_eq!(rtt.mean_ns, 150);
        assert_eq!(s.cdf, vec![(100, 1.0 / 3.0), (150, 2.0 / 3.0), (200, 1.0)]);
    }

    #[test]
    fn empty_records_header_only() {
        assert_eq!(records_to_csv(&[]), "index,send_ns,reply_ns,rtt_ns\n");
        let s = StatsSummary::compute(&[], BTreeMap::new());
        assert_eq!(s.sent, 0);
        assert!(s.rtt.is_none());
    }

    #[test]
    fn csv_rows() {
        let csv = records_to_csv(&[record(0, 5, Some(25)), record(1, 10, None)]);
        assert_eq!(csv, "index,send_ns,reply_ns,rtt_ns\n0,5,25,20\n1,10,,\n");
    }
}
