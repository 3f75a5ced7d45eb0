use serde::{Deserialize, Serialize};

use super::OpticalError;
use crate::domain::ElementId;

/// 53 Gbps PAM-4 intra-datacenter optics.
pub const DEFAULT_IMDD_BITRATE_GBPS: f64 = 53.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImddLinkState {
    pub link_id: ElementId,
    pub bitrate_gbps: f64,
    /// Reflected-to-signal power ratio of the injected multipath interference.
    pub mpi_ratio_db: Option<f64>,
}

impl ImddLinkState {
    pub fn new(link_id: impl Into<String>) -> Self {
        ImddLinkState {
            link_id: ElementId::new(link_id),
            bitrate_gbps: DEFAULT_IMDD_BITRATE_GBPS,
            mpi_ratio_db: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub link_id: ElementId,
    pub penalty_db: f64,
}

/// Worst-case interferometric eye-closure penalty of a link:
/// `10·log10((1+√r)/(1−√r))` with `r` the linear MPI ratio.
pub fn imdd_quality(link: &ImddLinkState) -> Result<QualityReport, OpticalError> {
    let penalty_db = match link.mpi_ratio_db {
        None => 0.0,
        Some(ratio_db) => {
            if !(ratio_db.is_finite() && ratio_db < 0.0) {
                return Err(OpticalError::InvalidImpairment(format!(
                    "MPI ratio must be negative dB, got {ratio_db}"
                )));
            }
            let amplitude = 10f64.powf(ratio_db / 10.0).sqrt();
            10.0 * ((1.0 + amplitude) / (1.0 - amplitude)).log10()
        }
    };
    Ok(QualityReport {
        link_id: link.link_id.clone(),
        penalty_db,
    })
}
