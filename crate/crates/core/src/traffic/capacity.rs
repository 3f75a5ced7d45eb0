use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{FlowAllocation, LightpathAssignment};
use crate::domain::ElementId;
use crate::optical::{MetroTopology, NodeIndex};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    LinkOverload {
        link: ElementId,
        load_gbps: f64,
        capacity_gbps: f64,
    },
    WavelengthConflict {
        edge: String,
        from: String,
        wavelength: usize,
        demands: Vec<String>,
    },
}

/// Links whose load exceeds capacity.
pub fn capacity_check_fabric(alloc: &FlowAllocation) -> Vec<Violation> {
    alloc
        .loads
        .iter()
        .zip(&alloc.capacity_gbps)
        .zip(&alloc.link_ids)
        .filter(|((load, cap), _)| load > cap)
        .map(
            |((&load_gbps, &capacity_gbps), id)| Violation::LinkOverload {
                link: id.clone(),
                load_gbps,
                capacity_gbps,
            },
        )
        .collect()
}

/// Wavelengths booked by more than one lightpath on the same edge and
/// direction.
pub fn capacity_check_metro(
    metro: &MetroTopology,
    lightpaths: &[LightpathAssignment],
) -> Vec<Violation> {
    let mut usage: BTreeMap<(usize, NodeIndex, usize), Vec<String>> = BTreeMap::new();
    for lp in lightpaths {
        for w in lp.path.windows(2) {
            if let Some(e) = metro.edge_index(w[0], w[1]) {
                usage
                    .entry((e, w[0], lp.wavelength))
                    .or_default()
                    .push(lp.demand_id.clone());
            }
        }
    }
    usage
        .into_iter()
        .filter(|(_, ids)| ids.len() > 1)
        .map(|((e, from, wavelength), demands)| {
            let edge = &metro.edges[e];
            Violation::WavelengthConflict {
                edge: format!("{}/{}", metro.nodes[edge.a].name, metro.nodes[edge.b].name),
                from: metro.nodes[from].name.clone(),
                wavelength,
                demands,
            }
        })
        .collect()
}
