//! Static topology and analytic physical-layer models.
//!
//! Everything here is a plain value: building a model validates its
//! configuration once, and the analytic functions are pure.

mod backbone;
mod fabric;
mod imdd;
mod metro;

pub(crate) use backbone::osnr_over;
pub use backbone::{
    build_backbone, compute_osnr, compute_power_profile, BackboneConfig, BackboneModel,
    ChannelConfig, ChannelKind, Edfa, EdfaConfig, LineElement, MonitorReading, Port, Span,
    SpanConfig, Transponder, TransponderConfig, WavelengthChannel, GRID_SPACING_GHZ, LIVE_BAUD_GBD,
    OSNR_CONSTANT_DB, POWER_FLOOR_DBM,
};
pub use fabric::{Fabric, FabricConfig, FabricLink, Server};
pub use imdd::{imdd_quality, ImddLinkState, QualityReport, DEFAULT_IMDD_BITRATE_GBPS};
pub use metro::{MetroConfig, MetroEdge, MetroEdgeConfig, MetroNode, MetroTopology, NodeIndex};

use serde::{Deserialize, Serialize};

/// Errors raised while building or evaluating physical models.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OpticalError {
    #[error("invalid configuration at `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("channel {0} does not exist")]
    NoSuchChannel(u8),
    #[error("channel {0} is not a live channel")]
    UnsupportedChannel(u8),
    #[error("channel {0} is live but carries no light")]
    DarkChannel(u8),
    #[error("invalid impairment: {0}")]
    InvalidImpairment(String),
    #[error("failed to parse configuration: {0}")]
    Parse(String),
}

impl OpticalError {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        OpticalError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

/// dB sum of linear powers. Returns `None` for an empty set.
pub fn db_sum(values_dbm: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut total = 0.0;
    let mut any = false;
    for v in values_dbm {
        total += 10f64.powf(v / 10.0);
        any = true;
    }
    any.then(|| 10.0 * total.log10())
}

/// The complete physical state of the three network tiers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub backbone: BackboneModel,
    pub metro: MetroTopology,
    pub fabric: Fabric,
    /// Failures currently injected, with the state needed to undo them.
    #[serde(default)]
    pub active_failures: Vec<crate::failure::ActiveFailure>,
}

impl Network {
    pub fn new(backbone: BackboneModel, metro: MetroTopology, fabric: Fabric) -> Self {
        Network {
            backbone,
            metro,
            fabric,
            active_failures: Vec::new(),
        }
    }

    /// Default backbone, the shipped 14-node metro and an 8x4 fabric.
    pub fn default_network() -> Self {
        Network {
            backbone: build_backbone(&BackboneConfig::default())
                .expect("default backbone config is valid"),
            metro: MetroTopology::default_metro(),
            fabric: Fabric::new(&FabricConfig::default()).expect("default fabric config is valid"),
            active_failures: Vec::new(),
        }
    }
}
