//! Scenario configuration: versioned JSON documents describing topology,
//! FRER attachments, traffic and run parameters. Unknown keys are rejected.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;
pub const MIN_FRAME_SIZE: usize = 64;
pub const MAX_FRAME_SIZE: usize = frer_core::codec::DEFAULT_MTU;

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario: {0}")]
    Validation(#[from] ConfigError),
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

macro_rules! invalid {
    ($($arg:tt)*) => { return Err(ConfigError(format!($($arg)*))) };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    pub topology: TopologyConfig,
    pub frer: FrerConfig,
    pub traffic: Vec<TrafficConfig>,
    pub run: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub nodes: Vec<NodeConfig>,
    pub links: Vec<LinkConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Host,
    Bridge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub id: String,
    pub kind: NodeKind,
    pub ports: Vec<String>,
    /// Fixed processing delay added when the node emits a frame.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub processing_delay_ns: u64,
}

fn is_zero(v: &u64) -> bool {
    *v == 0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkStateKind {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub at_ns: u64,
    pub state: LinkStateKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub id: String,
    /// Port reference `"<node>.<port>"`.
    pub a: String,
    pub b: String,
    pub propagation_delay_ns: u64,
    pub bit_rate_bps: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub schedule: Vec<ScheduleEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrerConfig {
    #[serde(default = "default_history_length")]
    pub history_length: usize,
    #[serde(default = "default_reset_timeout")]
    pub reset_timeout_ns: u64,
    /// When set, recovery timeouts are checked by a periodic sweep at this
    /// interval instead of at exact event times.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_interval_ns: Option<u64>,
    pub streams: Vec<u16>,
    pub replications: Vec<ReplicationConfig>,
    pub eliminations: Vec<EliminationConfig>,
}

fn default_history_length() -> usize {
    frer_core::frer::DEFAULT_HISTORY_LENGTH
}

fn default_reset_timeout() -> u64 {
    frer_core::frer::DEFAULT_RESET_TIMEOUT_NS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicationConfig {
    /// Ingress port the function is attached to.
    pub port: String,
    pub stream: u16,
    pub egress: Vec<String>,
    #[serde(default)]
    pub skip_if_tagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EliminationConfig {
    /// Ingress port the function is attached to.
    pub port: String,
    pub stream: u16,
    /// Name of the shared recovery state; several ports may reference it.
    pub state: String,
    #[serde(default = "default_true")]
    pub strip_rtag: bool,
    pub forward_to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history_length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reset_timeout_ns: Option<u64>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficMode {
    Periodic,
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficConfig {
    pub mode: TrafficMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval_ns: Option<u64>,
    pub count: u64,
    /// Total frame size in octets, headers included.
    pub size: usize,
    pub stream: u16,
    pub reply_stream: u16,
    pub source: String,
    pub destination: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub t_end_ns: u64,
    #[serde(default)]
    pub seed: u64,
    /// Optional per-hop uniform jitter amplitude; off by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jitter_ns: Option<u64>,
}

/// A validated `"<node>.<port>"` reference.
pub fn split_port_ref(r: &str) -> Option<(&str, &str)> {
    let (node, port) = r.split_once('.')?;
    if node.is_empty() || port.is_empty() {
        return None;
    }
    Some((node, port))
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, LoadError> {
        let config: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| LoadError::Parse {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("config serializes");
        out.push('\n');
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.version != SCHEMA_VERSION {
            invalid!("version: expected {SCHEMA_VERSION}, got {}", self.version);
        }
        let ports = self.topology.validate()?;
        self.validate_frer(&ports)?;
        self.validate_traffic()?;
        Ok(())
    }

    fn node(&self, id: &str) -> Option<&NodeConfig> {
        self.topology.nodes.iter().find(|n| n.id == id)
    }

    fn validate_frer(&self, ports: &BTreeSet<String>) -> Result<(), ConfigError> {
        let frer = &self.frer;
        if !(frer_core::frer::MIN_HISTORY_LENGTH..=frer_core::frer::MAX_HISTORY_LENGTH)
            .contains(&frer.history_length)
        {
            invalid!("frer.history_length: {} out of [2, 4096]", frer.history_length);
        }
        let mut streams = BTreeSet::new();
        for &vid in &frer.streams {
            if !(1..=4094).contains(&vid) {
                invalid!("frer.streams: VLAN ID {vid} out of [1, 4094]");
            }
            if !streams.insert(vid) {
                invalid!("frer.streams: duplicate VLAN ID {vid}");
            }
        }
        if let Some(interval) = frer.sweep_interval_ns {
            if interval == 0 {
                invalid!("frer.sweep_interval_ns: must be positive");
            }
        }

        // at most one function per (port, stream)
        let mut attached: BTreeSet<(String, u16)> = BTreeSet::new();
        let mut port_ok = |port: &str, stream: u16, what: &str| -> Result<(), ConfigError> {
            if !ports.contains(port) {
                invalid!("{what}: unknown port {port}");
            }
            if !streams.contains(&stream) {
                invalid!("{what}: stream {stream} not in frer.streams");
            }
            if !attached.insert((port.to_owned(), stream)) {
                invalid!("{what}: port {port} already has a function for stream {stream}");
            }
            Ok(())
        };

        for (i, r) in frer.replications.iter().enumerate() {
            let what = format!("frer.replications[{i}]");
            port_ok(&r.port, r.stream, &what)?;
            if r.egress.is_empty() {
                invalid!("{what}.egress: must be non-empty");
            }
            let mut seen = BTreeSet::new();
            for e in &r.egress {
                if !ports.contains(e) {
                    invalid!("{what}.egress: unknown port {e}");
                }
                if !seen.insert(e) {
                    invalid!("{what}.egress: duplicate port {e}");
                }
                self.same_node(&r.port, e, &what)?;
            }
        }

        let mut state_streams: BTreeMap<&str, u16> = BTreeMap::new();
        for (i, e) in frer.eliminations.iter().enumerate() {
            let what = format!("frer.eliminations[{i}]");
            port_ok(&e.port, e.stream, &what)?;
            if !ports.contains(&e.forward_to) {
                invalid!("{what}.forward_to: unknown port {}", e.forward_to);
            }
            self.same_node(&e.port, &e.forward_to, &what)?;
            if let Some(h) = e.history_length {
                if !(2..=4096).contains(&h) {
                    invalid!("{what}.history_length: {h} out of [2, 4096]");
                }
            }
            match state_streams.get(e.state.as_str()) {
                Some(&vid) if vid != e.stream => {
                    invalid!("{what}.state: {} already bound to stream {vid}", e.state)
                }
                _ => {
                    state_streams.insert(&e.state, e.stream);
                }
            }
        }
        Ok(())
    }

    fn same_node(&self, a: &str, b: &str, what: &str) -> Result<(), ConfigError> {
        let na = split_port_ref(a).map(|(n, _)| n);
        let nb = split_port_ref(b).map(|(n, _)| n);
        if na != nb {
            invalid!("{what}: ports {a} and {b} belong to different nodes");
        }
        Ok(())
    }

    fn validate_traffic(&self) -> Result<(), ConfigError> {
        for (i, t) in self.traffic.iter().enumerate() {
            let what = format!("traffic[{i}]");
            match t.mode {
                TrafficMode::Periodic => match t.interval_ns {
                    None | Some(0) => invalid!("{what}.interval_ns: required and positive for periodic mode"),
                    Some(_) => {}
                },
                TrafficMode::Adaptive => {}
            }
            if t.count < 1 {
                invalid!("{what}.count: must be at least 1");
            }
            if !(MIN_FRAME_SIZE..=MAX_FRAME_SIZE).contains(&t.size) {
                invalid!("{what}.size: {} out of [{MIN_FRAME_SIZE}, {MAX_FRAME_SIZE}]", t.size);
            }
            for (field, vid) in [("stream", t.stream), ("reply_stream", t.reply_stream)] {
                if !self.frer.streams.contains(&vid) {
                    invalid!("{what}.{field}: stream {vid} not in frer.streams");
                }
            }
            if t.stream == t.reply_stream {
                invalid!("{what}: stream and reply_stream must differ");
            }
            for (field, id) in [("source", &t.source), ("destination", &t.destination)] {
                match self.node(id) {
                    None => invalid!("{what}.{field}: unknown node {id}"),
                    Some(n) if n.kind != NodeKind::Host => {
                        invalid!("{what}.{field}: node {id} is not a host")
                    }
                    Some(_) => {}
                }
            }
            if t.source == t.destination {
                invalid!("{what}: source and destination must differ");
            }
        }
        Ok(())
    }
}

impl TopologyConfig {
    /// Validates nodes and links, returning the set of all port references.
    fn validate(&self) -> Result<BTreeSet<String>, ConfigError> {
        let mut ports = BTreeSet::new();
        let mut node_ids = BTreeSet::new();
        for node in &self.nodes {
            if !node_ids.insert(&node.id) {
                invalid!("topology.nodes: duplicate node id {}", node.id);
            }
            if node.ports.is_empty() {
                invalid!("topology.nodes: node {} declares no ports", node.id);
            }
            for p in &node.ports {
                if p.contains('.') || p.is_empty() {
                    invalid!("topology.nodes: node {} has invalid port name {p:?}", node.id);
                }
                if !ports.insert(format!("{}.{}", node.id, p)) {
                    invalid!("topology.nodes: duplicate port {}.{}", node.id, p);
                }
            }
        }

        let mut link_ids = BTreeSet::new();
        let mut endpoints = BTreeSet::new();
        for link in &self.links {
            if !link_ids.insert(&link.id) {
                invalid!("topology.links: duplicate link id {}", link.id);
            }
            for end in [&link.a, &link.b] {
                if !ports.contains(end) {
                    invalid!("topology.links: link {} references unknown port {end}", link.id);
                }
                if !endpoints.insert(end.clone()) {
                    invalid!("topology.links: port {end} attached to more than one link");
                }
            }
            if link.a == link.b {
                invalid!("topology.links: link {} connects a port to itself", link.id);
            }
            if link.bit_rate_bps == 0 {
                invalid!("topology.links: link {} has zero bit rate", link.id);
            }
            let mut last: Option<u64> = None;
            for entry in &link.schedule {
                if let Some(prev) = last {
                    if entry.at_ns <= prev {
                        invalid!(
                            "topology.links: link {} schedule times not strictly increasing",
                            link.id
                        );
                    }
                }
                last = Some(entry.at_ns);
            }
        }
        Ok(ports)
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig, LoadError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ScenarioConfig::from_json(&text)
}
