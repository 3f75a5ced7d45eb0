use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::domain::{AgentId, DomainId};

/// Device domains an agent may reach. Planners hold no grants.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grant {
    pub domains: BTreeSet<DomainId>,
    #[serde(default)]
    pub planner: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsolationPolicy {
    pub grants: BTreeMap<AgentId, Grant>,
}

impl IsolationPolicy {
    pub fn grant(
        &mut self,
        agent: impl Into<AgentId>,
        domains: impl IntoIterator<Item = DomainId>,
    ) {
        self.grants.insert(
            agent.into(),
            Grant {
                domains: domains.into_iter().collect(),
                planner: false,
            },
        );
    }

    pub fn planner(&mut self, agent: impl Into<AgentId>) {
        self.grants.insert(
            agent.into(),
            Grant {
                domains: BTreeSet::new(),
                planner: true,
            },
        );
    }

    pub fn is_registered(&self, agent: &AgentId) -> bool {
        self.grants.contains_key(agent)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DenyReason {
    UnknownCaller,
    ForeignDomain,
    Planner,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Allow,
    Deny(DenyReason),
}

impl Decision {
    pub fn allowed(self) -> bool {
        self == Decision::Allow
    }
}

pub fn enforce_isolation(caller: &AgentId, domain: DomainId, policy: &IsolationPolicy) -> Decision {
    match policy.grants.get(caller) {
        None => Decision::Deny(DenyReason::UnknownCaller),
        Some(g) if g.planner => Decision::Deny(DenyReason::Planner),
        Some(g) if g.domains.contains(&domain) => Decision::Allow,
        Some(_) => Decision::Deny(DenyReason::ForeignDomain),
    }
}
