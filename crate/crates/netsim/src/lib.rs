//! Deterministic discrete-event network simulator hosting FRER functions:
//! links with serialization/propagation delay and failure schedules, traffic
//! generators and delivery measurement.

pub mod builtin;
pub mod config;
pub mod sim;
pub mod stats;

pub use config::{load_scenario, ConfigError, LoadError, ScenarioConfig};
pub use sim::{MeasurementRecord, Simulation};
pub use stats::{records_to_csv, StatsSummary};

/// Run a validated scenario to its configured end time. A seed override
/// replaces the config seed (only observable when jitter is enabled).
pub fn run(
    config: &ScenarioConfig,
    seed: Option<u64>,
) -> Result<(Vec<MeasurementRecord>, StatsSummary), ConfigError> {
    let mut config = config.clone();
    if let Some(seed) = seed {
        config.run.seed = seed;
    }
    let mut sim = Simulation::build(&config)?;
    sim.run();
    let records = sim.records();
    let summary = StatsSummary::compute(&records, sim.counter_snapshots());
    Ok((records, summary))
}
