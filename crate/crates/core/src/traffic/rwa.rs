use serde::{Deserialize, Serialize};

use super::{k_shortest_paths, Exclusions, TrafficError};
use crate::optical::{MetroTopology, NodeIndex};

pub const DEFAULT_K: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightpathDemand {
    pub id: String,
    pub src: NodeIndex,
    pub dst: NodeIndex,
    pub gbps: f64,
}

/// A committed lightpath. Occupies `wavelength` in the direction of travel
/// on every hop of `path`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightpathAssignment {
    pub demand_id: String,
    pub src: NodeIndex,
    pub dst: NodeIndex,
    pub gbps: f64,
    pub path: Vec<NodeIndex>,
    pub wavelength: usize,
}

impl LightpathAssignment {
    pub fn demand(&self) -> LightpathDemand {
        LightpathDemand {
            id: self.demand_id.clone(),
            src: self.src,
            dst: self.dst,
            gbps: self.gbps,
        }
    }

    pub fn uses_edge(&self, topo: &MetroTopology, edge: usize) -> bool {
        self.path
            .windows(2)
            .any(|w| topo.edge_index(w[0], w[1]) == Some(edge))
    }
}

pub(crate) fn rwa_first_fit_excluding(
    demand: &LightpathDemand,
    metro: &mut MetroTopology,
    k: usize,
    ex: &Exclusions,
) -> Result<LightpathAssignment, TrafficError> {
    let n = metro.node_count();
    if demand.src >= n || demand.dst >= n {
        return Err(TrafficError::InvalidDemand(format!(
            "demand `{}` names an unknown node",
            demand.id
        )));
    }
    if demand.src == demand.dst {
        return Err(TrafficError::InvalidDemand(format!(
            "demand `{}` has src == dst",
            demand.id
        )));
    }
    if k == 0 {
        return Err(TrafficError::InvalidDemand("k must be at least 1".into()));
    }
    for path in k_shortest_paths(metro, demand.src, demand.dst, k, ex) {
        let free =
            (0..metro.wavelengths).find(|&w| path.hops().all(|(u, v)| metro.is_free(u, v, w)));
        if let Some(w) = free {
            for (u, v) in path.hops() {
                metro.set_occupied(u, v, w, true);
            }
            return Ok(LightpathAssignment {
                demand_id: demand.id.clone(),
                src: demand.src,
                dst: demand.dst,
                gbps: demand.gbps,
                path: path.nodes,
                wavelength: w,
            });
        }
    }
    Err(TrafficError::Blocked(demand.id.clone()))
}

/// First-fit routing and wavelength assignment over the `k` shortest paths,
/// with wavelength continuity. On success the wavelength is marked occupied.
pub fn rwa_first_fit(
    demand: &LightpathDemand,
    metro: &mut MetroTopology,
    k: usize,
) -> Result<LightpathAssignment, TrafficError> {
    rwa_first_fit_excluding(demand, metro, k, &Exclusions::none())
}

/// Free the wavelength held by `a` on each hop.
pub fn release_lightpath(a: &LightpathAssignment, metro: &mut MetroTopology) {
    for w in a.path.windows(2) {
        metro.set_occupied(w[0], w[1], a.wavelength, false);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demand(id: &str, src: usize, dst: usize) -> LightpathDemand {
        LightpathDemand {
            id: id.into(),
            src,
            dst,
            gbps: 400.0,
        }
    }

    #[test]
    fn adjacent_nodes_get_lambda_zero_then_one() {
        let mut m = MetroTopology::default_metro();
        let (u, v) = (m.edges[0].a, m.edges[0].b);
        let a = rwa_first_fit(&demand("d1", u, v), &mut m, DEFAULT_K).unwrap();
        assert_eq!(a.path, vec![u, v]);
        assert_eq!(a.wavelength, 0);
        let b = rwa_first_fit(&demand("d2", u, v), &mut m, DEFAULT_K).unwrap();
        assert_eq!(b.path, vec![u, v]);
        assert_eq!(b.wavelength, 1);
    }

    #[test]
    fn saturated_cut_blocks() {
        let mut m = MetroTopology::default_metro();
        let src = 0;
        let neighbours: Vec<_> = m.neighbors(src).into_iter().map(|(v, _)| v).collect();
        for &v in &neighbours {
            for w in 0..m.wavelengths {
                m.set_occupied(src, v, w, true);
            }
        }
        let err = rwa_first_fit(&demand("d", src, 9), &mut m, DEFAULT_K).unwrap_err();
        assert_eq!(err, TrafficError::Blocked("d".into()));
    }

    #[test]
    fn release_restores_occupancy() {
        let mut m = MetroTopology::default_metro();
        let before = m.clone();
        let a = rwa_first_fit(&demand("d", 0, 9), &mut m, DEFAULT_K).unwrap();
        assert_ne!(m, before);
        release_lightpath(&a, &mut m);
        assert_eq!(m, before);
    }

    #[test]
    fn same_node_is_invalid() {
        let mut m = MetroTopology::default_metro();
        assert!(matches!(
            rwa_first_fit(&demand("d", 3, 3), &mut m, 3),
            Err(TrafficError::InvalidDemand(_))
        ));
    }
}
