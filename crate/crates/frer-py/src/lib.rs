//! Python bindings: frame codec, sequence generation/recovery and the
//! scenario runner, exposed as the `frer_py` extension module.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use frer_core::codec::{self, Frame};
use frer_core::frer::{self, Decision, StreamHandle};
use netsim::config::ScenarioConfig;

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Parse Ethernet/VLAN/R-tag headers into a dict.
#[pyfunction]
fn parse_frame<'py>(py: Python<'py>, octets: &[u8]) -> PyResult<Bound<'py, PyDict>> {
    let h = codec::parse_frame(octets).map_err(value_err)?;
    let out = PyDict::new(py);
    out.set_item("dst_mac", PyBytes::new(py, &h.dst_mac))?;
    out.set_item("src_mac", PyBytes::new(py, &h.src_mac))?;
    match h.vlan {
        Some(v) => {
            let vlan = PyDict::new(py);
            vlan.set_item("pcp", v.pcp)?;
            vlan.set_item("dei", v.dei)?;
            vlan.set_item("vid", v.vid)?;
            out.set_item("vlan", vlan)?;
        }
        None => out.set_item("vlan", py.None())?,
    }
    out.set_item("rtag_sequence", h.rtag.map(|r| r.sequence))?;
    out.set_item("inner_ethertype", h.inner_ethertype)?;
    out.set_item("payload_offset", h.payload_offset)?;
    Ok(out)
}

/// Insert an R-tag carrying `sequence` after the VLAN tag.
#[pyfunction]
fn push_rtag<'py>(py: Python<'py>, octets: &[u8], sequence: u16) -> PyResult<Bound<'py, PyBytes>> {
    let tagged = codec::push_rtag(&Frame::new(octets.to_vec()), sequence).map_err(value_err)?;
    Ok(PyBytes::new(py, &tagged.octets))
}

/// Remove the R-tag; returns `(octets, sequence)`.
#[pyfunction]
fn pop_rtag<'py>(py: Python<'py>, octets: &[u8]) -> PyResult<(Bound<'py, PyBytes>, u16)> {
    let (frame, sequence) = codec::pop_rtag(&Frame::new(octets.to_vec())).map_err(value_err)?;
    Ok((PyBytes::new(py, &frame.octets), sequence))
}

#[pyfunction]
fn has_rtag(octets: &[u8]) -> bool {
    codec::has_rtag(&Frame::new(octets.to_vec()))
}

/// Per-stream 16-bit wrapping sequence counter.
#[pyclass(name = "SequenceGenerator")]
struct PySequenceGenerator {
    inner: frer::SequenceGenerator,
}

#[pymethods]
impl PySequenceGenerator {
    #[new]
    fn new(vid: u16) -> PyResult<Self> {
        let stream = StreamHandle::new(vid).map_err(value_err)?;
        Ok(PySequenceGenerator {
            inner: frer::SequenceGenerator::new(stream),
        })
    }

    fn next_sequence(&mut self) -> u16 {
        self.inner.next_sequence()
    }

    fn peek(&self) -> u16 {
        self.inner.peek()
    }
}

/// Vector recovery elimination state.
#[pyclass(name = "SequenceRecovery")]
struct PySequenceRecovery {
    inner: frer::SequenceRecovery,
}

#[pymethods]
impl PySequenceRecovery {
    #[new]
    #[pyo3(signature = (vid, history_length = frer::DEFAULT_HISTORY_LENGTH, reset_timeout_ns = frer::DEFAULT_RESET_TIMEOUT_NS))]
    fn new(vid: u16, history_length: usize, reset_timeout_ns: u64) -> PyResult<Self> {
        let stream = StreamHandle::new(vid).map_err(value_err)?;
        let inner = frer::SequenceRecovery::new(stream, history_length, reset_timeout_ns)
            .map_err(value_err)?;
        Ok(PySequenceRecovery { inner })
    }

    /// Decide on one sequence number; returns "pass", "discard-duplicate"
    /// or "discard-rogue".
    fn recover(&mut self, sequence: u16, now_ns: u64) -> &'static str {
        match self.inner.recover(sequence, now_ns) {
            Decision::Pass => "pass",
            Decision::DiscardDuplicate => "discard-duplicate",
            Decision::DiscardRogue => "discard-rogue",
        }
    }

    /// Apply the reset timeout; returns True if the state was reset.
    fn check_reset(&mut self, now_ns: u64) -> bool {
        self.inner.check_reset(now_ns)
    }

    fn counters<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let c = self.inner.counters();
        let out = PyDict::new(py);
        out.set_item("passed", c.passed)?;
        out.set_item("discarded_duplicate", c.discarded_duplicate)?;
        out.set_item("discarded_rogue", c.discarded_rogue)?;
        out.set_item("tagless", c.tagless)?;
        out.set_item("resets", c.resets)?;
        Ok(out)
    }
}

/// Run a scenario given as JSON text; returns `(records, summary)` where
/// records is a list of `(index, send_ns, reply_ns_or_None)` and summary is
/// the same JSON document the CLI writes, as a string.
#[pyfunction]
#[pyo3(signature = (config_json, seed = None))]
fn run_scenario(config_json: &str, seed: Option<u64>) -> PyResult<(Vec<(u64, u64, Option<u64>)>, String)> {
    let config = ScenarioConfig::from_json(config_json).map_err(value_err)?;
    let (records, summary) = netsim::run(&config, seed).map_err(value_err)?;
    let rows = records
        .iter()
        .map(|r| (r.request_seq, r.send_time, r.reply_time))
        .collect();
    Ok((rows, summary.to_json()))
}

/// Names of the scenarios built into the simulator.
#[pyfunction]
fn builtin_scenarios() -> Vec<String> {
    netsim::builtin::NAMES.iter().map(|s| s.to_string()).collect()
}

/// JSON text of a builtin scenario.
#[pyfunction]
fn builtin_scenario(name: &str) -> PyResult<&'static str> {
    netsim::builtin::get(name)
        .ok_or_else(|| value_err(format!("no builtin scenario named {name}")))
}

#[pymodule]
fn frer_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(parse_frame, m)?)?;
    m.add_function(wrap_pyfunction!(push_rtag, m)?)?;
    m.add_function(wrap_pyfunction!(pop_rtag, m)?)?;
    m.add_function(wrap_pyfunction!(has_rtag, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(builtin_scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(builtin_scenario, m)?)?;
    m.add_class::<PySequenceGenerator>()?;
    m.add_class::<PySequenceRecovery>()?;
    Ok(())
}
