use serde::{Deserialize, Serialize};

use super::{ImddLinkState, OpticalError};
use crate::domain::ElementId;

fn d_leaves() -> usize {
    8
}
fn d_spines() -> usize {
    4
}
fn d_servers() -> usize {
    8
}
fn d_capacity() -> f64 {
    400.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FabricConfig {
    #[serde(default = "d_leaves")]
    pub leaves: usize,
    #[serde(default = "d_spines")]
    pub spines: usize,
    #[serde(default = "d_servers")]
    pub servers_per_leaf: usize,
    #[serde(default = "d_capacity")]
    pub link_capacity_gbps: f64,
}

impl Default for FabricConfig {
    fn default() -> Self {
        FabricConfig {
            leaves: d_leaves(),
            spines: d_spines(),
            servers_per_leaf: d_servers(),
            link_capacity_gbps: d_capacity(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Server {
    pub id: String,
    pub leaf: usize,
}

/// Leaf–spine uplink. Each link is a bundle of IMDD lanes whose quality is
/// represented by a single [`ImddLinkState`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FabricLink {
    pub id: ElementId,
    pub leaf: usize,
    pub spine: usize,
    pub capacity_gbps: f64,
    pub load_gbps: f64,
    pub imdd: ImddLinkState,
}

/// Two-tier spine-leaf fabric; leaf `i` hosts server group `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fabric {
    pub leaves: usize,
    pub spines: usize,
    pub servers: Vec<Server>,
    pub links: Vec<FabricLink>,
}

impl Fabric {
    pub fn new(config: &FabricConfig) -> Result<Self, OpticalError> {
        if config.leaves < 1 {
            return Err(OpticalError::config("leaves", "must be at least 1"));
        }
        if config.spines < 1 {
            return Err(OpticalError::config("spines", "must be at least 1"));
        }
        if !(config.link_capacity_gbps.is_finite() && config.link_capacity_gbps > 0.0) {
            return Err(OpticalError::config(
                "link_capacity_gbps",
                "must be positive",
            ));
        }
        let servers = (0..config.leaves)
            .flat_map(|leaf| {
                (0..config.servers_per_leaf).map(move |k| Server {
                    id: format!("g{leaf}-s{k}"),
                    leaf,
                })
            })
            .collect();
        let mut links = Vec::with_capacity(config.leaves * config.spines);
        for leaf in 0..config.leaves {
            for spine in 0..config.spines {
                let id = format!("dc-link-{}", leaf * config.spines + spine);
                links.push(FabricLink {
                    id: ElementId::new(&id),
                    leaf,
                    spine,
                    capacity_gbps: config.link_capacity_gbps,
                    load_gbps: 0.0,
                    imdd: ImddLinkState::new(id),
                });
            }
        }
        Ok(Fabric {
            leaves: config.leaves,
            spines: config.spines,
            servers,
            links,
        })
    }

    pub fn link_index(&self, leaf: usize, spine: usize) -> usize {
        leaf * self.spines + spine
    }

    pub fn link_by_id(&self, id: &str) -> Option<usize> {
        self.links.iter().position(|l| l.id.as_str() == id)
    }

    /// Capacity across the leaf/spine cut divided by two.
    pub fn bisection_gbps(&self) -> f64 {
        self.links.iter().map(|l| l.capacity_gbps).sum::<f64>() / 2.0
    }

    pub fn max_load(&self) -> f64 {
        self.links.iter().map(|l| l.load_gbps).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_fabric_shape() {
        let f = Fabric::new(&FabricConfig::default()).unwrap();
        assert_eq!(f.servers.len(), 64);
        assert_eq!(f.links.len(), 32);
        for leaf in 0..8 {
            assert_eq!(f.servers.iter().filter(|s| s.leaf == leaf).count(), 8);
            for spine in 0..4 {
                let l = &f.links[f.link_index(leaf, spine)];
                assert_eq!((l.leaf, l.spine), (leaf, spine));
            }
        }
        assert_eq!(f.link_by_id("dc-link-5"), Some(5));
    }
}
