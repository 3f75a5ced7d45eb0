//! Demand generation per training epoch, intra-DC flow allocation, metro
//! routing-and-wavelength assignment, and failure-avoiding rerouting.

mod capacity;
mod demand;
mod fabric_alloc;
mod paths;
mod reroute;
mod rwa;

pub use capacity::{capacity_check_fabric, capacity_check_metro, Violation};
pub use demand::{generate_demands, DemandMatrix, WorkloadSpec};
pub use fabric_alloc::{
    allocate_intra_dc, needs_backbone_spectrum, Flow, FlowAllocation, DEFAULT_CAPACITY_FRACTION,
};
pub use paths::{k_shortest_paths, Exclusions, Path};
pub use reroute::{reroute_flows, reroute_lightpaths, FailedElement, ReplanResult, Rerouted};
pub use rwa::{release_lightpath, rwa_first_fit, LightpathAssignment, LightpathDemand, DEFAULT_K};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrafficError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("demand {src}->{dst} of {gbps} Gbps exceeds link capacity {capacity} Gbps")]
    InfeasibleDemand {
        src: usize,
        dst: usize,
        gbps: f64,
        capacity: f64,
    },
    #[error("demand `{0}` blocked: no free wavelength on any candidate path")]
    Blocked(String),
    #[error("invalid demand: {0}")]
    InvalidDemand(String),
    #[error("malformed demand matrix: {0}")]
    Format(String),
}
