use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Administrative slice of the network with its own controller.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DomainId {
    #[serde(rename = "backbone-A")]
    BackboneA,
    #[serde(rename = "backbone-B")]
    BackboneB,
    #[serde(rename = "dci-metro")]
    DciMetro,
    #[serde(rename = "intra-dc")]
    IntraDc,
}

impl DomainId {
    pub const ALL: [DomainId; 4] = [
        DomainId::BackboneA,
        DomainId::BackboneB,
        DomainId::DciMetro,
        DomainId::IntraDc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DomainId::BackboneA => "backbone-A",
            DomainId::BackboneB => "backbone-B",
            DomainId::DciMetro => "dci-metro",
            DomainId::IntraDc => "intra-dc",
        }
    }

    pub fn is_backbone(self) -> bool {
        matches!(self, DomainId::BackboneA | DomainId::BackboneB)
    }
}

impl fmt::Display for DomainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown domain `{0}`")]
pub struct UnknownDomain(pub String);

impl FromStr for DomainId {
    type Err = UnknownDomain;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DomainId::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| UnknownDomain(s.to_string()))
    }
}

/// Identifier of a registered agent (`planner`, `backbone-a-agent`, ...).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub String);

impl AgentId {
    pub fn new(id: impl Into<String>) -> Self {
        AgentId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<String> for AgentId {
    fn from(s: String) -> Self {
        AgentId(s)
    }
}

impl From<&str> for AgentId {
    fn from(s: &str) -> Self {
        AgentId(s.to_string())
    }
}

/// Identifier of a network element (span, amplifier, link, transponder).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ElementId(pub String);

impl ElementId {
    pub fn new(id: impl Into<String>) -> Self {
        ElementId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ElementId {
    fn from(s: &str) -> Self {
        ElementId(s.to_string())
    }
}
