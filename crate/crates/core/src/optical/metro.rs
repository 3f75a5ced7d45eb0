use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::OpticalError;

pub type NodeIndex = usize;

const DEFAULT_METRO: &str = include_str!("../../assets/topologies/metro14.toml");

fn default_wavelengths() -> usize {
    30
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetroEdgeConfig {
    pub a: String,
    pub b: String,
    pub length_km: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetroConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_wavelengths")]
    pub wavelengths: usize,
    pub nodes: Vec<String>,
    pub edges: Vec<MetroEdgeConfig>,
}

impl MetroConfig {
    pub fn from_toml(text: &str) -> Result<Self, OpticalError> {
        toml::from_str(text).map_err(|e| OpticalError::Parse(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetroNode {
    pub index: NodeIndex,
    pub name: String,
}

/// Bidirectional fiber pair. `forward` flags wavelengths busy in the
/// `a → b` direction, `backward` in `b → a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetroEdge {
    pub a: NodeIndex,
    pub b: NodeIndex,
    pub length_km: f64,
    pub forward: Vec<bool>,
    pub backward: Vec<bool>,
}

impl MetroEdge {
    pub fn connects(&self, u: NodeIndex, v: NodeIndex) -> bool {
        (self.a == u && self.b == v) || (self.a == v && self.b == u)
    }

    pub fn slots(&self, from: NodeIndex) -> &[bool] {
        if from == self.a {
            &self.forward
        } else {
            &self.backward
        }
    }

    fn slots_mut(&mut self, from: NodeIndex) -> &mut Vec<bool> {
        if from == self.a {
            &mut self.forward
        } else {
            &mut self.backward
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetroTopology {
    pub name: String,
    pub wavelengths: usize,
    pub nodes: Vec<MetroNode>,
    pub edges: Vec<MetroEdge>,
}

impl MetroTopology {
    pub fn from_config(config: &MetroConfig) -> Result<Self, OpticalError> {
        if config.wavelengths == 0 {
            return Err(OpticalError::config("wavelengths", "must be at least 1"));
        }
        let mut index = BTreeMap::new();
        for (i, name) in config.nodes.iter().enumerate() {
            if index.insert(name.as_str(), i).is_some() {
                return Err(OpticalError::config(
                    format!("nodes[{i}]"),
                    "duplicate node name",
                ));
            }
        }
        let mut edges: Vec<MetroEdge> = Vec::with_capacity(config.edges.len());
        for (i, e) in config.edges.iter().enumerate() {
            let lookup = |n: &str, f: &str| {
                index.get(n).copied().ok_or_else(|| {
                    OpticalError::config(format!("edges[{i}].{f}"), format!("unknown node `{n}`"))
                })
            };
            let (a, b) = (lookup(&e.a, "a")?, lookup(&e.b, "b")?);
            if a == b {
                return Err(OpticalError::config(format!("edges[{i}]"), "self loop"));
            }
            if edges.iter().any(|x| x.connects(a, b)) {
                return Err(OpticalError::config(format!("edges[{i}]"), "parallel edge"));
            }
            if !(e.length_km.is_finite() && e.length_km > 0.0) {
                return Err(OpticalError::config(
                    format!("edges[{i}].length_km"),
                    "must be positive",
                ));
            }
            edges.push(MetroEdge {
                a,
                b,
                length_km: e.length_km,
                forward: vec![false; config.wavelengths],
                backward: vec![false; config.wavelengths],
            });
        }
        let topo = MetroTopology {
            name: config.name.clone(),
            wavelengths: config.wavelengths,
            nodes: config
                .nodes
                .iter()
                .enumerate()
                .map(|(index, name)| MetroNode {
                    index,
                    name: name.clone(),
                })
                .collect(),
            edges,
        };
        if !topo.is_connected() {
            return Err(OpticalError::config(
                "edges",
                "topology graph is not connected",
            ));
        }
        Ok(topo)
    }

    pub fn from_toml(text: &str) -> Result<Self, OpticalError> {
        Self::from_config(&MetroConfig::from_toml(text)?)
    }

    /// The shipped 14-node topology.
    pub fn default_metro() -> Self {
        Self::from_toml(DEFAULT_METRO).expect("shipped metro topology is valid")
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeIndex> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn edge_index(&self, u: NodeIndex, v: NodeIndex) -> Option<usize> {
        self.edges.iter().position(|e| e.connects(u, v))
    }

    /// Neighbours of `u` with edge lengths, ascending by node index.
    pub fn neighbors(&self, u: NodeIndex) -> Vec<(NodeIndex, f64)> {
        let mut out: Vec<_> = self
            .edges
            .iter()
            .filter_map(|e| {
                if e.a == u {
                    Some((e.b, e.length_km))
                } else if e.b == u {
                    Some((e.a, e.length_km))
                } else {
                    None
                }
            })
            .collect();
        out.sort_by_key(|&(v, _)| v);
        out
    }

    pub fn is_connected(&self) -> bool {
        if self.nodes.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for (v, _) in self.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Whether wavelength `w` is free in direction `u → v`.
    pub fn is_free(&self, u: NodeIndex, v: NodeIndex, w: usize) -> bool {
        self.edge_index(u, v)
            .map(|i| !self.edges[i].slots(u)[w])
            .unwrap_or(false)
    }

    pub fn set_occupied(&mut self, u: NodeIndex, v: NodeIndex, w: usize, busy: bool) {
        if let Some(i) = self.edge_index(u, v) {
            self.edges[i].slots_mut(u)[w] = busy;
        }
    }

    pub fn path_length(&self, path: &[NodeIndex]) -> Option<f64> {
        path.windows(2)
            .map(|p| self.edge_index(p[0], p[1]).map(|i| self.edges[i].length_km))
            .sum()
    }

    /// Busy (edge, direction-from, wavelength) triples.
    pub fn busy_slots(&self) -> Vec<(usize, NodeIndex, usize)> {
        let mut out = Vec::new();
        for (i, e) in self.edges.iter().enumerate() {
            for (w, &busy) in e.forward.iter().enumerate() {
                if busy {
                    out.push((i, e.a, w));
                }
            }
            for (w, &busy) in e.backward.iter().enumerate() {
                if busy {
                    out.push((i, e.b, w));
                }
            }
        }
        out
    }
}
