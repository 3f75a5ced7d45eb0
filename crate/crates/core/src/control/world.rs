use serde::{Deserialize, Serialize};

use crate::domain::DomainId;
use crate::failure::{inject_failure, FailureError, FailureSpec, Observation};
use crate::optical::Network;
use crate::traffic::{FlowAllocation, LightpathAssignment};

/// Mutable simulation state served by the domain controllers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub network: Network,
    /// Committed metro lightpaths.
    pub lightpaths: Vec<LightpathAssignment>,
    /// Committed intra-DC allocation; link loads mirror it.
    pub allocation: FlowAllocation,
    /// Healthy reference network used as the alarm baseline.
    pub baseline: Network,
    /// Logical clock; advances once per successful state-changing call.
    pub tick: u64,
}

impl World {
    pub fn new(network: Network) -> Self {
        let allocation = FlowAllocation::empty(&network.fabric, 0);
        World {
            baseline: network.clone(),
            network,
            lightpaths: Vec::new(),
            allocation,
            tick: 0,
        }
    }

    pub fn default_world() -> Self {
        Self::new(Network::default_network())
    }

    /// Applies a failure to the live network; the baseline is untouched.
    pub fn inject(&mut self, spec: &FailureSpec) -> Result<(), FailureError> {
        self.network = inject_failure(&self.network, spec)?;
        Ok(())
    }

    /// Commits an allocation whose loads are already consistent with its
    /// flows and checked against capacity.
    pub fn commit_allocation(&mut self, allocation: FlowAllocation) {
        for (link, load) in self.network.fabric.links.iter_mut().zip(&allocation.loads) {
            link.load_gbps = *load;
        }
        self.allocation = allocation;
    }

    /// Commits a lightpath set, rebuilding metro occupancy from it.
    pub fn commit_lightpaths(&mut self, lightpaths: Vec<LightpathAssignment>) {
        let metro = &mut self.network.metro;
        for e in &mut metro.edges {
            e.forward.iter_mut().for_each(|b| *b = false);
            e.backward.iter_mut().for_each(|b| *b = false);
        }
        for lp in &lightpaths {
            for w in lp.path.windows(2) {
                metro.set_occupied(w[0], w[1], lp.wavelength, true);
            }
        }
        self.lightpaths = lightpaths;
    }

    pub(crate) fn advance_tick(&mut self) {
        self.tick += 1;
        self.network.backbone.tick = self.tick;
    }

    /// What the controller of `domain` can observe now.
    pub fn observation(&self, domain: DomainId) -> Observation {
        observe(&self.network, domain)
    }

    pub fn baseline_observation(&self, domain: DomainId) -> Observation {
        observe(&self.baseline, domain)
    }
}

fn observe(network: &Network, domain: DomainId) -> Observation {
    match domain {
        DomainId::BackboneA | DomainId::BackboneB => {
            Observation::of_backbone(&network.backbone, Some(domain))
        }
        DomainId::IntraDc => Observation::of_fabric(&network.fabric),
        DomainId::DciMetro => Observation::default(),
    }
}
