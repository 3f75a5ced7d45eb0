//! Inject, detect, classify and localize physical-layer failures against
//! baseline monitor profiles.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{DomainId, ElementId};
use crate::optical::{
    compute_power_profile, imdd_quality, BackboneModel, ChannelKind, Fabric, MonitorReading,
    Network, Port, QualityReport,
};

pub const DEFAULT_POWER_TOL_DB: f64 = 1.0;
pub const DEFAULT_QUALITY_TOL_DB: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FailureError {
    #[error("element `{0}` not found")]
    NotFound(String),
    #[error("element `{0}` already has an active failure")]
    Conflict(String),
    #[error("invalid failure spec: {0}")]
    InvalidSpec(String),
    #[error("invalid detection input: {0}")]
    Input(String),
    #[error("ambiguous classification, candidates {0:?}")]
    Ambiguous(Vec<FailureLabel>),
    #[error("evidence carries no failure signature")]
    Unclassifiable,
    #[error("cannot localize: {0}")]
    CannotLocalize(String),
}

/// A single physical-layer failure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FailureSpec {
    FiberAging { span_id: String, delta_db: f64 },
    Mpi { link_id: String, ratio_db: f64 },
    TransponderOutage { transponder_id: String },
}

impl FailureSpec {
    pub fn element(&self) -> &str {
        match self {
            FailureSpec::FiberAging { span_id, .. } => span_id,
            FailureSpec::Mpi { link_id, .. } => link_id,
            FailureSpec::TransponderOutage { transponder_id } => transponder_id,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, FailureError> {
        toml::from_str(text).map_err(|e| FailureError::InvalidSpec(e.to_string()))
    }
}

/// An injected failure plus the pre-injection value of the field it touched.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActiveFailure {
    pub spec: FailureSpec,
    pub restore: RestoreValue,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RestoreValue {
    ExtraLoss(f64),
    Mpi(Option<f64>),
    Enabled(bool),
}

/// Returns a copy of `network` with `spec` applied.
pub fn inject_failure(network: &Network, spec: &FailureSpec) -> Result<Network, FailureError> {
    if network
        .active_failures
        .iter()
        .any(|f| f.spec.element() == spec.element())
    {
        return Err(FailureError::Conflict(spec.element().to_string()));
    }
    let mut out = network.clone();
    let restore = match spec {
        FailureSpec::FiberAging { span_id, delta_db } => {
            if !(delta_db.is_finite() && *delta_db > 0.0) {
                return Err(FailureError::InvalidSpec(
                    "aging delta must be positive".into(),
                ));
            }
            let span = out
                .backbone
                .span_mut(span_id)
                .ok_or_else(|| FailureError::NotFound(span_id.clone()))?;
            let prev = span.extra_loss_db;
            span.extra_loss_db += delta_db;
            RestoreValue::ExtraLoss(prev)
        }
        FailureSpec::Mpi { link_id, ratio_db } => {
            if !(ratio_db.is_finite() && *ratio_db < 0.0) {
                return Err(FailureError::InvalidSpec(
                    "MPI ratio must be negative dB".into(),
                ));
            }
            let i = out
                .fabric
                .link_by_id(link_id)
                .ok_or_else(|| FailureError::NotFound(link_id.clone()))?;
            let prev = out.fabric.links[i].imdd.mpi_ratio_db;
            out.fabric.links[i].imdd.mpi_ratio_db = Some(*ratio_db);
            RestoreValue::Mpi(prev)
        }
        FailureSpec::TransponderOutage { transponder_id } => {
            let t = out
                .backbone
                .transponder_mut(transponder_id)
                .ok_or_else(|| FailureError::NotFound(transponder_id.clone()))?;
            let prev = t.enabled;
            t.enabled = false;
            out.backbone.refresh_channels();
            RestoreValue::Enabled(prev)
        }
    };
    out.active_failures.push(ActiveFailure {
        spec: spec.clone(),
        restore,
    });
    Ok(out)
}

/// Undoes a previously injected failure on `element`.
pub fn clear_failure(network: &Network, element: &str) -> Result<Network, FailureError> {
    let pos = network
        .active_failures
        .iter()
        .position(|f| f.spec.element() == element)
        .ok_or_else(|| FailureError::NotFound(element.to_string()))?;
    let mut out = network.clone();
    let active = out.active_failures.remove(pos);
    match (&active.spec, active.restore) {
        (FailureSpec::FiberAging { span_id, .. }, RestoreValue::ExtraLoss(v)) => {
            if let Some(s) = out.backbone.span_mut(span_id) {
                s.extra_loss_db = v;
            }
        }
        (FailureSpec::Mpi { link_id, .. }, RestoreValue::Mpi(v)) => {
            if let Some(i) = out.fabric.link_by_id(link_id) {
                out.fabric.links[i].imdd.mpi_ratio_db = v;
            }
        }
        (FailureSpec::TransponderOutage { transponder_id }, RestoreValue::Enabled(v)) => {
            if let Some(t) = out.backbone.transponder_mut(transponder_id) {
                t.enabled = v;
            }
            out.backbone.refresh_channels();
        }
        _ => {
            return Err(FailureError::InvalidSpec(
                "restore record does not match failure kind".into(),
            ))
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelPresence {
    pub index: u8,
    pub present: bool,
    /// Disabled transponders tuned to this slot.
    pub faulted: Vec<ElementId>,
}

/// Everything a detector can see: amplifier monitors, IMDD link quality and
/// live-channel presence.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub monitors: Vec<MonitorReading>,
    pub links: Vec<QualityReport>,
    pub channels: Vec<ChannelPresence>,
}

impl Observation {
    /// Backbone view, optionally restricted to one domain's amplifiers and
    /// transponders.
    pub fn of_backbone(model: &BackboneModel, domain: Option<DomainId>) -> Self {
        let owned = |id: &ElementId| domain.is_none() || model.owner_of(id.as_str()) == domain;
        let monitors = compute_power_profile(model)
            .into_iter()
            .filter(|r| owned(&r.element_id))
            .collect();
        let channels = model
            .channels
            .iter()
            .filter(|c| c.kind == ChannelKind::Live)
            .filter(|c| {
                domain.is_none()
                    || model
                        .transponders
                        .iter()
                        .any(|t| t.channel == Some(c.index) && Some(t.domain) == domain)
            })
            .map(|c| ChannelPresence {
                index: c.index,
                present: c.lit,
                faulted: model
                    .transponders
                    .iter()
                    .filter(|t| t.channel == Some(c.index) && !t.enabled && owned(&t.id))
                    .map(|t| t.id.clone())
                    .collect(),
            })
            .collect();
        Observation {
            monitors,
            links: Vec::new(),
            channels,
        }
    }

    pub fn of_fabric(fabric: &Fabric) -> Self {
        Observation {
            monitors: Vec::new(),
            links: fabric
                .links
                .iter()
                .map(|l| imdd_quality(&l.imdd).expect("fabric links hold validated impairments"))
                .collect(),
            channels: Vec::new(),
        }
    }

    pub fn of_network(network: &Network) -> Self {
        let mut obs = Self::of_backbone(&network.backbone, None);
        obs.links = Self::of_fabric(&network.fabric).links;
        obs
    }

    /// Adds seeded Gaussian noise (σ in dB) to every monitor reading.
    pub fn with_monitor_noise(mut self, sigma_db: f64, seed: u64) -> Self {
        if sigma_db > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let normal = Normal::new(0.0, sigma_db).expect("sigma is positive and finite");
            for r in &mut self.monitors {
                r.total_power_dbm += normal.sample(&mut rng);
            }
        }
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionTolerance {
    pub power_db: f64,
    pub quality_db: f64,
}

impl Default for DetectionTolerance {
    fn default() -> Self {
        DetectionTolerance {
            power_db: DEFAULT_POWER_TOL_DB,
            quality_db: DEFAULT_QUALITY_TOL_DB,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvidenceKind {
    MonitorPower,
    LinkPenalty,
    ChannelMissing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub element: ElementId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub port: Option<Port>,
    pub kind: EvidenceKind,
    pub observed: f64,
    pub baseline: f64,
    pub delta: f64,
    /// Position in propagation order within the observation.
    pub ordinal: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anomaly {
    pub evidence: Vec<Evidence>,
    pub first_affected: usize,
}

impl Anomaly {
    pub fn first(&self) -> Option<&Evidence> {
        self.evidence.first()
    }

    /// Merges per-domain anomalies from one line, re-sorting by `rank`, which
    /// maps an evidence item to its global propagation position.
    pub fn merge(parts: &[Anomaly], rank: impl Fn(&Evidence) -> usize) -> Option<Anomaly> {
        let mut evidence: Vec<Evidence> = parts
            .iter()
            .flat_map(|a| a.evidence.iter().cloned())
            .collect();
        if evidence.is_empty() {
            return None;
        }
        for e in &mut evidence {
            e.ordinal = rank(e);
        }
        evidence.sort_by_key(|e| e.ordinal);
        Some(Anomaly {
            first_affected: evidence[0].ordinal,
            evidence,
        })
    }
}

/// Compares an observation with its baseline and reports every deviation
/// beyond tolerance, in propagation order.
pub fn detect_anomaly(
    observed: &Observation,
    baseline: &Observation,
    tol: &DetectionTolerance,
) -> Result<Option<Anomaly>, FailureError> {
    if !(tol.power_db > 0.0 && tol.quality_db > 0.0) {
        return Err(FailureError::Input("tolerances must be positive".into()));
    }
    let same_monitors = observed.monitors.len() == baseline.monitors.len()
        && observed
            .monitors
            .iter()
            .zip(&baseline.monitors)
            .all(|(o, b)| o.element_id == b.element_id && o.port == b.port);
    if !same_monitors {
        return Err(FailureError::Input(
            "observed and baseline monitor sets differ".into(),
        ));
    }

    let mut evidence = Vec::new();
    for (i, (o, b)) in observed.monitors.iter().zip(&baseline.monitors).enumerate() {
        let delta = o.total_power_dbm - b.total_power_dbm;
        if delta.abs() > tol.power_db {
            evidence.push(Evidence {
                element: o.element_id.clone(),
                port: Some(o.port),
                kind: EvidenceKind::MonitorPower,
                observed: o.total_power_dbm,
                baseline: b.total_power_dbm,
                delta,
                ordinal: i,
            });
        }
    }
    let offset = observed.monitors.len();
    for (i, l) in observed.links.iter().enumerate() {
        let base = baseline
            .links
            .iter()
            .find(|b| b.link_id == l.link_id)
            .map_or(0.0, |b| b.penalty_db);
        if l.penalty_db > tol.quality_db {
            evidence.push(Evidence {
                element: l.link_id.clone(),
                port: None,
                kind: EvidenceKind::LinkPenalty,
                observed: l.penalty_db,
                baseline: base,
                delta: l.penalty_db - base,
                ordinal: offset + i,
            });
        }
    }
    let offset = offset + observed.links.len();
    let any_present = observed.channels.iter().any(|c| c.present);
    for (i, c) in observed.channels.iter().enumerate() {
        let was_present = baseline
            .channels
            .iter()
            .find(|b| b.index == c.index)
            .is_some_and(|b| b.present);
        if was_present && !c.present && any_present {
            let element = c
                .faulted
                .first()
                .cloned()
                .unwrap_or_else(|| ElementId::new(format!("ch{}", c.index)));
            evidence.push(Evidence {
                element,
                port: None,
                kind: EvidenceKind::ChannelMissing,
                observed: 0.0,
                baseline: 1.0,
                delta: -1.0,
                ordinal: offset + i,
            });
        }
    }

    if evidence.is_empty() {
        return Ok(None);
    }
    evidence.sort_by_key(|e| e.ordinal);
    Ok(Some(Anomaly {
        first_affected: evidence[0].ordinal,
        evidence,
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureLabel {
    PowerLoss,
    Interference,
    TransmitterFault,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureClass {
    pub label: FailureLabel,
    pub confidence: f64,
}

/// Decision table over the three failure signatures:
///
/// | power drop | penalty | channel missing | class            |
/// |------------|---------|-----------------|------------------|
/// | yes        | no      | no              | PowerLoss        |
/// | no         | yes     | no              | Interference     |
/// | any        | no      | yes             | TransmitterFault |
/// | other combinations                    || ambiguous        |
///
/// A missing channel explains the power drop it causes, so the two together
/// still classify as a transmitter fault.
pub fn classify_failure(
    anomaly: Option<&Anomaly>,
    link_reports: &[QualityReport],
    quality_tol_db: f64,
) -> Result<FailureClass, FailureError> {
    let evidence = anomaly.map(|a| a.evidence.as_slice()).unwrap_or(&[]);
    let power_drop = evidence
        .iter()
        .any(|e| e.kind == EvidenceKind::MonitorPower && e.delta < 0.0);
    let penalty = evidence.iter().any(|e| e.kind == EvidenceKind::LinkPenalty)
        || link_reports.iter().any(|r| r.penalty_db > quality_tol_db);
    let missing = evidence
        .iter()
        .any(|e| e.kind == EvidenceKind::ChannelMissing);

    let label = match (power_drop, penalty, missing) {
        (true, false, false) => FailureLabel::PowerLoss,
        (false, true, false) => FailureLabel::Interference,
        (_, false, true) => FailureLabel::TransmitterFault,
        (false, false, false) => return Err(FailureError::Unclassifiable),
        _ => {
            let mut candidates = Vec::new();
            if power_drop {
                candidates.push(FailureLabel::PowerLoss);
            }
            if penalty {
                candidates.push(FailureLabel::Interference);
            }
            if missing {
                candidates.push(FailureLabel::TransmitterFault);
            }
            return Err(FailureError::Ambiguous(candidates));
        }
    };
    Ok(FailureClass {
        label,
        confidence: 1.0,
    })
}

/// Names the failed element from the first deviating evidence item.
///
/// For monitor evidence this is the span immediately upstream of the first
/// deviating amplifier input (or the amplifier itself when only its output
/// deviates); for link and channel evidence it is the reporting element.
pub fn localize_failure(
    anomaly: &Anomaly,
    topology: &BackboneModel,
) -> Result<ElementId, FailureError> {
    let first = anomaly
        .first()
        .ok_or_else(|| FailureError::CannotLocalize("no monitor exceeds tolerance".into()))?;
    match first.kind {
        EvidenceKind::LinkPenalty | EvidenceKind::ChannelMissing => Ok(first.element.clone()),
        EvidenceKind::MonitorPower => {
            let amp_index = topology
                .amplifiers
                .iter()
                .position(|a| a.id == first.element)
                .ok_or_else(|| {
                    FailureError::CannotLocalize(format!("unknown monitor `{}`", first.element))
                })?;
            if first.port == Some(Port::Output) {
                return Ok(first.element.clone());
            }
            let pos = topology.line_position_of_amp(amp_index);
            topology
                .span_upstream_of(pos)
                .map(|s| s.id.clone())
                .ok_or_else(|| {
                    FailureError::CannotLocalize(format!("no span upstream of `{}`", first.element))
                })
        }
    }
}

/// Global propagation rank of backbone monitor evidence, used to merge
/// per-domain anomalies.
pub fn backbone_rank(topology: &BackboneModel) -> impl Fn(&Evidence) -> usize + '_ {
    move |e: &Evidence| {
        let amp = topology.amplifiers.iter().position(|a| a.id == e.element);
        match amp {
            Some(i) => 2 * i + usize::from(e.port == Some(Port::Output)),
            None => 2 * topology.amplifiers.len() + e.ordinal,
        }
    }
}
