//! Deterministic discrete-event simulator. One event loop owns all state;
//! events at equal times are ordered by a stable counter assigned at
//! scheduling time.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use frer_core::codec::{self, Frame};
use frer_core::frer::{
    self, Counters, EliminateOutcome, ReplicationEntry, SequenceRecovery, StreamHandle,
};
use frer_core::PortId;

use crate::config::{ConfigError, LinkStateKind, NodeKind, ScenarioConfig, TrafficMode};

pub const NS_PER_S: u64 = 1_000_000_000;

/// Inner ethertype of simulator-generated traffic frames.
const ETHERTYPE_SIM: u16 = 0x88B5;
const KIND_REQUEST: u8 = 1;
const KIND_REPLY: u8 = 2;

/// Per-packet send/receive timestamps for one request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeasurementRecord {
    pub traffic: usize,
    pub request_seq: u64,
    pub send_time: u64,
    pub reply_time: Option<u64>,
}

impl MeasurementRecord {
    pub fn rtt(&self) -> Option<u64> {
        self.reply_time.map(|r| r - self.send_time)
    }
}

#[derive(Debug, Clone)]
enum EventKind {
    FrameArrival { port: usize, frame: Frame },
    LinkStateChange { link: usize, up: bool },
    GeneratorFire { traffic: usize },
    RecoveryTimer { state: usize },
    Sweep,
}

#[derive(Debug)]
struct Queued {
    time: u64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

struct Node {
    id: String,
    kind: NodeKind,
    processing_delay: u64,
}

struct Port {
    node: usize,
    /// Index of the link this port terminates, if any.
    link: Option<usize>,
}

struct Link {
    propagation_delay: u64,
    bit_rate: u64,
    endpoints: (usize, usize),
    up: bool,
}

enum Function {
    Replication(usize),
    Elimination(usize),
}

struct Replication {
    entry: ReplicationEntry,
}

struct Elimination {
    state: usize,
    strip_rtag: bool,
    forward_to: usize,
}

struct Recovery {
    name: String,
    state: SequenceRecovery,
    /// Latest time a recovery timer is already queued for, when event-time
    /// reset checking is active.
    timer_at: Option<u64>,
}

struct Traffic {
    mode: TrafficMode,
    interval: u64,
    count: u64,
    size: usize,
    stream: u16,
    reply_stream: u16,
    source: usize,
    destination: usize,
    source_port: usize,
    destination_port: usize,
    sent: u64,
    records: Vec<MeasurementRecord>,
}

pub struct Simulation {
    time: u64,
    queue: BinaryHeap<Reverse<Queued>>,
    next_event_seq: u64,
    nodes: Vec<Node>,
    ports: Vec<Port>,
    port_names: Vec<String>,
    port_index: HashMap<String, usize>,
    links: Vec<Link>,
    link_index: HashMap<String, usize>,
    /// Per-port FRER functions keyed by stream VID.
    attachments: Vec<BTreeMap<u16, Function>>,
    replications: Vec<Replication>,
    eliminations: Vec<Elimination>,
    recoveries: Vec<Recovery>,
    sweep_interval: Option<u64>,
    traffic: Vec<Traffic>,
    jitter: Option<(u64, ChaCha8Rng)>,
    t_end: u64,
}

impl Simulation {
    /// Builds a simulation at time 0 with link schedules, traffic generators
    /// and the optional reset sweep queued.
    pub fn build(config: &ScenarioConfig) -> Result<Self, ConfigError> {
        config.validate()?;

        let nodes: Vec<Node> = config
            .topology
            .nodes
            .iter()
            .map(|n| Node {
                id: n.id.clone(),
                kind: n.kind,
                processing_delay: n.processing_delay_ns,
            })
            .collect();
        let node_index: HashMap<&str, usize> = config
            .topology
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.as_str(), i))
            .collect();

        let mut ports = Vec::new();
        let mut port_names = Vec::new();
        let mut port_index = HashMap::new();
        for (ni, n) in config.topology.nodes.iter().enumerate() {
            for p in &n.ports {
                let name = format!("{}.{}", n.id, p);
                port_index.insert(name.clone(), ports.len());
                port_names.push(name);
                ports.push(Port {
                    node: ni,
                    link: None,
                });
            }
        }

        let mut links = Vec::new();
        let mut link_index = HashMap::new();
        for l in &config.topology.links {
            let a = port_index[&l.a];
            let b = port_index[&l.b];
            let idx = links.len();
            ports[a].link = Some(idx);
            ports[b].link = Some(idx);
            link_index.insert(l.id.clone(), idx);
            links.push(Link {
                propagation_delay: l.propagation_delay_ns,
                bit_rate: l.bit_rate_bps,
                endpoints: (a, b),
                up: match l.schedule.first() {
                    Some(first) if first.at_ns == 0 => first.state == LinkStateKind::Up,
                    _ => true,
                },
            });
        }

        let mut attachments: Vec<BTreeMap<u16, Function>> =
            (0..ports.len()).map(|_| BTreeMap::new()).collect();

        let mut replications = Vec::new();
        for r in &config.frer.replications {
            let stream = StreamHandle::new(r.stream).map_err(|e| ConfigError(e.to_string()))?;
            let egress: Vec<PortId> = r.egress.iter().map(|e| PortId::new(e.clone())).collect();
            let entry = ReplicationEntry::new(stream, egress, r.skip_if_tagged)
                .map_err(|e| ConfigError(e.to_string()))?;
            attachments[port_index[&r.port]]
                .insert(r.stream, Function::Replication(replications.len()));
            replications.push(Replication { entry });
        }

        let mut recoveries: Vec<Recovery> = Vec::new();
        let mut recovery_index: HashMap<&str, usize> = HashMap::new();
        let mut eliminations: Vec<Elimination> = Vec::new();
        for e in &config.frer.eliminations {
            let state = match recovery_index.get(e.state.as_str()) {
                Some(&idx) => idx,
                None => {
                    let stream =
                        StreamHandle::new(e.stream).map_err(|err| ConfigError(err.to_string()))?;
                    let h = e.history_length.unwrap_or(config.frer.history_length);
                    let timeout = e.reset_timeout_ns.unwrap_or(config.frer.reset_timeout_ns);
                    let state = SequenceRecovery::new(stream, h, timeout)
                        .map_err(|err| ConfigError(err.to_string()))?;
                    let idx = recoveries.len();
                    recoveries.push(Recovery {
                        name: e.state.clone(),
                        state,
                        timer_at: None,
                    });
                    recovery_index.insert(&e.state, idx);
                    idx
                }
            };
            attachments[port_index[&e.port]]
                .insert(e.stream, Function::Elimination(eliminations.len()));
            eliminations.push(Elimination {
                state,
                strip_rtag: e.strip_rtag,
                forward_to: port_index[&e.forward_to],
            });
        }

        let mut sim = Simulation {
            time: 0,
            queue: BinaryHeap::new(),
            next_event_seq: 0,
            nodes,
            ports,
            port_names,
            port_index,
            links,
            link_index,
            attachments,
            replications,
            eliminations,
            recoveries,
            sweep_interval: config.frer.sweep_interval_ns,
            traffic: Vec::new(),
            jitter: config
                .run
                .jitter_ns
                .map(|amp| (amp, ChaCha8Rng::seed_from_u64(config.run.seed))),
            t_end: config.run.t_end_ns,
        };

        for t in &config.traffic {
            let source = node_index[t.source.as_str()];
            let destination = node_index[t.destination.as_str()];
            let spec = Traffic {
                mode: t.mode,
                interval: t.interval_ns.unwrap_or(0),
                count: t.count,
                size: t.size,
                stream: t.stream,
                reply_stream: t.reply_stream,
                source,
                destination,
                source_port: sim.host_port(source)?,
                destination_port: sim.host_port(destination)?,
                sent: 0,
                records: Vec::new(),
            };
            sim.traffic.push(spec);
        }

        // queue link schedules
        for (li, l) in config.topology.links.iter().enumerate() {
            for entry in &l.schedule {
                if entry.at_ns == 0 {
                    continue; // applied as initial state
                }
                sim.schedule(
                    entry.at_ns,
                    EventKind::LinkStateChange {
                        link: li,
                        up: entry.state == LinkStateKind::Up,
                    },
                );
            }
        }
        // first request of every generator fires at t = 0
        for ti in 0..sim.traffic.len() {
            sim.schedule(0, EventKind::GeneratorFire { traffic: ti });
        }
        if let Some(interval) = sim.sweep_interval {
            sim.schedule(interval, EventKind::Sweep);
        }
        Ok(sim)
    }

    fn host_port(&self, node: usize) -> Result<usize, ConfigError> {
        let mut it = (0..self.ports.len()).filter(|&p| self.ports[p].node == node);
        let first = it
            .next()
            .ok_or_else(|| ConfigError(format!("host {} has no port", self.nodes[node].id)))?;
        if it.next().is_some() {
            return Err(ConfigError(format!(
                "host {} must have exactly one port",
                self.nodes[node].id
            )));
        }
        Ok(first)
    }

    pub fn now(&self) -> u64 {
        self.time
    }

    pub fn t_end(&self) -> u64 {
        self.t_end
    }

    fn schedule(&mut self, time: u64, kind: EventKind) {
        let seq = self.next_event_seq;
        self.next_event_seq += 1;
        self.queue.push(Reverse(Queued { time, seq, kind }));
    }

    /// Queue a link state change at `at` (must not be in the past).
    pub fn set_link_state(&mut self, link: &str, up: bool, at: u64) -> Result<(), ConfigError> {
        assert!(at >= self.time, "cannot schedule in the past");
        let link = *self
            .link_index
            .get(link)
            .ok_or_else(|| ConfigError(format!("unknown link {link}")))?;
        self.schedule(at, EventKind::LinkStateChange { link, up });
        Ok(())
    }

    /// Process every event with time <= t_end in deterministic order.
    pub fn run_until(&mut self, t_end: u64) {
        assert!(t_end >= self.time, "t_end is in the past");
        while let Some(Reverse(head)) = self.queue.peek() {
            if head.time > t_end {
                break;
            }
            let Reverse(event) = self.queue.pop().unwrap();
            self.time = event.time;
            self.dispatch(event.kind);
        }
        self.time = t_end;
    }

    /// Run to the configured end time.
    pub fn run(&mut self) {
        self.run_until(self.t_end);
    }

    fn dispatch(&mut self, kind: EventKind) {
        match kind {
            EventKind::FrameArrival { port, frame } => self.on_arrival(port, frame),
            EventKind::LinkStateChange { link, up } => self.links[link].up = up,
            EventKind::GeneratorFire { traffic } => self.on_generator_fire(traffic),
            EventKind::RecoveryTimer { state } => self.on_recovery_timer(state),
            EventKind::Sweep => self.on_sweep(),
        }
    }

    /// Emit a frame out of `port`. The link must be up at emission time;
    /// frames emitted on a down link are silently dropped, frames already in
    /// flight are unaffected by later failures.
    fn transmit(&mut self, port: usize, frame: Frame) {
        let Some(link_idx) = self.ports[port].link else {
            return; // unconnected port
        };
        let link = &self.links[link_idx];
        if !link.up {
            return;
        }
        let peer = if link.endpoints.0 == port {
            link.endpoints.1
        } else {
            link.endpoints.0
        };
        let serialization = 8 * frame.len() as u64 * NS_PER_S / link.bit_rate;
        let mut delay = serialization
            + link.propagation_delay
            + self.nodes[self.ports[port].node].processing_delay;
        if let Some((amp, rng)) = &mut self.jitter {
            delay += rng.random_range(0..=*amp);
        }
        let mut frame = frame;
        frame.ingress_port = Some(PortId::new(self.port_names[peer].clone()));
        let at = self.time + delay;
        frame.arrival_time = Some(at);
        self.schedule(at, EventKind::FrameArrival { port: peer, frame });
    }

    fn on_arrival(&mut self, port: usize, frame: Frame) {
        let vid = codec::parse_frame(&frame.octets)
            .ok()
            .and_then(|h| h.vlan.map(|v| v.vid));
        let function = vid.and_then(|v| match self.attachments[port].get(&v) {
            Some(Function::Replication(i)) => Some((v, true, *i)),
            Some(Function::Elimination(i)) => Some((v, false, *i)),
            None => None,
        });
        match function {
            Some((_, true, idx)) => self.on_replication(idx, frame),
            Some((_, false, idx)) => self.on_elimination(idx, frame),
            None => {
                if self.nodes[self.ports[port].node].kind == NodeKind::Host {
                    self.on_host_receive(port, frame);
                }
                // bridges drop frames they have no function for
            }
        }
    }

    fn on_replication(&mut self, idx: usize, frame: Frame) {
        let copies = match frer::replicate(&frame, &mut self.replications[idx].entry) {
            Ok(copies) => copies,
            Err(_) => return, // tagged frame at a generating replicator: drop
        };
        for (port, copy) in copies {
            let out = self.port_index[port.as_str()];
            self.transmit(out, copy);
        }
    }

    fn on_elimination(&mut self, idx: usize, frame: Frame) {
        let now = self.time;
        let (state_idx, strip, forward_to) = {
            let e = &self.eliminations[idx];
            (e.state, e.strip_rtag, e.forward_to)
        };
        let outcome = frer::eliminate(&frame, &mut self.recoveries[state_idx].state, now, strip);
        self.arm_recovery_timer(state_idx);
        if let EliminateOutcome::Pass(out) = outcome {
            self.transmit(forward_to, out);
        }
    }

    /// With event-time reset checking, keep one timer pending at
    /// `last_packet_time + reset_timeout`.
    fn arm_recovery_timer(&mut self, state_idx: usize) {
        if self.sweep_interval.is_some() {
            return;
        }
        let due = {
            let r = &self.recoveries[state_idx];
            r.state.last_packet_time + r.state.reset_timeout
        };
        if self.recoveries[state_idx].timer_at.is_none() {
            self.recoveries[state_idx].timer_at = Some(due);
            self.schedule(due, EventKind::RecoveryTimer { state: state_idx });
        }
    }

    fn on_recovery_timer(&mut self, state_idx: usize) {
        self.recoveries[state_idx].timer_at = None;
        let now = self.time;
        let r = &mut self.recoveries[state_idx];
        if !r.state.check_reset(now) && !r.state.take_any() {
            // packets arrived since the timer was armed; re-arm
            self.arm_recovery_timer(state_idx);
        }
    }

    fn on_sweep(&mut self) {
        let now = self.time;
        for r in &mut self.recoveries {
            r.state.check_reset(now);
        }
        let interval = self.sweep_interval.expect("sweep only queued when set");
        self.schedule(now + interval, EventKind::Sweep);
    }

    fn on_generator_fire(&mut self, ti: usize) {
        let (frame, source_port) = {
            let t = &mut self.traffic[ti];
            if t.sent >= t.count {
                return;
            }
            let index = t.sent;
            t.sent += 1;
            let frame = build_traffic_frame(
                t.destination,
                t.source,
                t.stream,
                t.size,
                KIND_REQUEST,
                ti as u16,
                index,
            );
            t.records.push(MeasurementRecord {
                traffic: ti,
                request_seq: index,
                send_time: self.time,
                reply_time: None,
            });
            (frame, t.source_port)
        };
        self.transmit(source_port, frame);
        let t = &self.traffic[ti];
        if t.mode == TrafficMode::Periodic && t.sent < t.count {
            let next = self.time + t.interval;
            self.schedule(next, EventKind::GeneratorFire { traffic: ti });
        }
    }

    fn on_host_receive(&mut self, port: usize, frame: Frame) {
        let node = self.ports[port].node;
        let Ok(headers) = codec::parse_frame(&frame.octets) else {
            return;
        };
        let Some(payload) = frame.octets.get(headers.payload_offset..) else {
            return;
        };
        let Some((kind, ti, index)) = decode_traffic_payload(payload) else {
            return;
        };
        let ti = ti as usize;
        if ti >= self.traffic.len() {
            return;
        }
        match kind {
            KIND_REQUEST if self.traffic[ti].destination == node => {
                // echo back on the reply stream, zero processing delay
                let t = &self.traffic[ti];
                let reply = build_traffic_frame(
                    t.source,
                    t.destination,
                    t.reply_stream,
                    t.size,
                    KIND_REPLY,
                    ti as u16,
                    index,
                );
                let out = t.destination_port;
                self.transmit(out, reply);
            }
            KIND_REPLY if self.traffic[ti].source == node => {
                let now = self.time;
                let t = &mut self.traffic[ti];
                if let Some(record) = t
                    .records
                    .iter_mut()
                    .find(|r| r.request_seq == index && r.reply_time.is_none())
                {
                    record.reply_time = Some(now);
                    if t.mode == TrafficMode::Adaptive && t.sent < t.count {
                        self.schedule(now, EventKind::GeneratorFire { traffic: ti });
                    }
                }
            }
            _ => {}
        }
    }

    /// All measurement records, grouped per traffic spec in config order.
    pub fn records(&self) -> Vec<MeasurementRecord> {
        self.traffic.iter().flat_map(|t| t.records.clone()).collect()
    }

    /// Counter snapshot of every elimination state, keyed by state name.
    pub fn counter_snapshots(&self) -> BTreeMap<String, Counters> {
        self.recoveries
            .iter()
            .map(|r| (r.name.clone(), *r.state.counters()))
            .collect()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn replication_port_count(&self) -> usize {
        self.attachments
            .iter()
            .filter(|a| a.values().any(|f| matches!(f, Function::Replication(_))))
            .count()
    }

    pub fn elimination_port_count(&self) -> usize {
        self.attachments
            .iter()
            .filter(|a| a.values().any(|f| matches!(f, Function::Elimination(_))))
            .count()
    }
}

fn build_traffic_frame(
    dst_node: usize,
    src_node: usize,
    vid: u16,
    size: usize,
    kind: u8,
    traffic: u16,
    index: u64,
) -> Frame {
    let mut octets = Vec::with_capacity(size);
    octets.extend_from_slice(&node_mac(dst_node));
    octets.extend_from_slice(&node_mac(src_node));
    octets.extend_from_slice(&codec::ETHERTYPE_VLAN.to_be_bytes());
    octets.extend_from_slice(&vid.to_be_bytes());
    octets.extend_from_slice(&ETHERTYPE_SIM.to_be_bytes());
    octets.push(kind);
    octets.extend_from_slice(&traffic.to_be_bytes());
    octets.extend_from_slice(&index.to_be_bytes());
    octets.resize(size, 0);
    Frame::new(octets)
}

fn decode_traffic_payload(payload: &[u8]) -> Option<(u8, u16, u64)> {
    if payload.len() < 11 {
        return None;
    }
    let kind = payload[0];
    let traffic = u16::from_be_bytes([payload[1], payload[2]]);
    let index = u64::from_be_bytes(payload[3..11].try_into().ok()?);
    Some((kind, traffic, index))
}

fn node_mac(node: usize) -> [u8; 6] {
    [
        0x02,
        0x00,
        0x00,
        0x00,
        (node >> 8) as u8,
        node as u8,
    ]
}
