//! Scenario files shipped with the simulator.

pub const RTT_BASELINE: &str = include_str!("../../../scenarios/rtt-baseline.json");
pub const FIG_ERROR_A: &str = include_str!("../../../scenarios/fig-error-a.json");
pub const FIG_ERROR_B: &str = include_str!("../../../scenarios/fig-error-b.json");
pub const EXAMPLE_NETWORK: &str = include_str!("../../../scenarios/example-network.json");

pub const NAMES: &[&str] = &[
    "rtt-baseline",
    "fig-error-a",
    "fig-error-b",
    "example-network",
];

pub fn get(name: &str) -> Option<&'static str> {
    match name {
        "rtt-baseline" => Some(RTT_BASELINE),
        "fig-error-a" => Some(FIG_ERROR_A),
        "fig-error-b" => Some(FIG_ERROR_B),
        "example-network" => Some(EXAMPLE_NETWORK),
        _ => None,
    }
}
