use serde::{Deserialize, Serialize};

use super::fabric_alloc::pick_spine;
use super::rwa::rwa_first_fit_excluding;
use super::{
    capacity_check_fabric, release_lightpath, Exclusions, FlowAllocation, LightpathAssignment,
};
use crate::optical::{Fabric, MetroTopology, NodeIndex};

/// Element that rerouting must avoid.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "kebab-case")]
pub enum FailedElement {
    MetroEdge(usize),
    MetroNode(NodeIndex),
    FabricLink(usize),
}

impl FailedElement {
    /// Resolve an element id: `dc-link-N` for fabric links, a metro node
    /// name, or `A/B` for the metro edge between nodes `A` and `B`.
    pub fn resolve(id: &str, metro: &MetroTopology, fabric: &Fabric) -> Option<Self> {
        if let Some(i) = fabric.link_by_id(id) {
            return Some(FailedElement::FabricLink(i));
        }
        if let Some(n) = metro.node_by_name(id) {
            return Some(FailedElement::MetroNode(n));
        }
        let (a, b) = id.split_once('/')?;
        let (a, b) = (metro.node_by_name(a)?, metro.node_by_name(b)?);
        metro.edge_index(a, b).map(FailedElement::MetroEdge)
    }

    fn exclusions(&self) -> Exclusions {
        let mut ex = Exclusions::none();
        match *self {
            FailedElement::MetroEdge(e) => {
                ex.edges.insert(e);
            }
            FailedElement::MetroNode(n) => {
                ex.nodes.insert(n);
            }
            FailedElement::FabricLink(_) => {}
        }
        ex
    }

    pub fn traversed_by(&self, lp: &LightpathAssignment, metro: &MetroTopology) -> bool {
        match *self {
            FailedElement::MetroEdge(e) => lp.uses_edge(metro, e),
            FailedElement::MetroNode(n) => lp.path.contains(&n),
            FailedElement::FabricLink(_) => false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Rerouted {
    pub id: String,
    pub from: String,
    pub to: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplanResult {
    pub moved: Vec<Rerouted>,
    pub unmovable: Vec<String>,
}

impl ReplanResult {
    pub fn merge(mut self, other: ReplanResult) -> Self {
        self.moved.extend(other.moved);
        self.unmovable.extend(other.unmovable);
        self
    }
}

fn path_label(metro: &MetroTopology, path: &[NodeIndex], w: usize) -> String {
    let names: Vec<_> = path.iter().map(|&n| metro.nodes[n].name.as_str()).collect();
    format!("{} @λ{w}", names.join(">"))
}

/// Re-solve every lightpath that traverses `failed` on the topology minus
/// that element. Lightpaths that cannot be re-placed keep their original
/// assignment and are listed as unmovable. Others are left untouched.
pub fn reroute_lightpaths(
    lightpaths: &mut [LightpathAssignment],
    failed: &FailedElement,
    metro: &mut MetroTopology,
    k: usize,
) -> ReplanResult {
    let mut result = ReplanResult::default();
    let ex = failed.exclusions();
    for lp in lightpaths.iter_mut() {
        if !failed.traversed_by(lp, metro) {
            continue;
        }
        release_lightpath(lp, metro);
        match rwa_first_fit_excluding(&lp.demand(), metro, k, &ex) {
            Ok(new) => {
                result.moved.push(Rerouted {
                    id: lp.demand_id.clone(),
                    from: path_label(metro, &lp.path, lp.wavelength),
                    to: path_label(metro, &new.path, new.wavelength),
                });
                *lp = new;
            }
            Err(_) => {
                for w in lp.path.windows(2) {
                    metro.set_occupied(w[0], w[1], lp.wavelength, true);
                }
                result.unmovable.push(lp.demand_id.clone());
            }
        }
    }
    result
}

/// Move every fabric flow that crosses the failed link onto the least-loaded
/// spine whose links avoid it.
pub fn reroute_flows(
    alloc: &mut FlowAllocation,
    failed: &FailedElement,
    fabric: &Fabric,
) -> ReplanResult {
    let mut result = ReplanResult::default();
    let FailedElement::FabricLink(bad) = *failed else {
        return result;
    };
    for i in 0..alloc.flows.len() {
        if !alloc.flows[i].links.contains(&bad) {
            continue;
        }
        let flow = alloc.flows[i].clone();
        for &l in &flow.links {
            alloc.loads[l] -= flow.gbps;
        }
        match pick_spine(fabric, &alloc.loads, flow.src, flow.dst, flow.gbps, &[bad]) {
            Some((spine, links)) => {
                for &l in &links {
                    alloc.loads[l] += flow.gbps;
                }
                result.moved.push(Rerouted {
                    id: flow.id(),
                    from: format!("spine{}", flow.spine),
                    to: format!("spine{spine}"),
                });
                alloc.flows[i].spine = spine;
                alloc.flows[i].links = links;
            }
            None => {
                for &l in &flow.links {
                    alloc.loads[l] += flow.gbps;
                }
                result.unmovable.push(flow.id());
            }
        }
    }
    alloc.violations = capacity_check_fabric(alloc);
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optical::{FabricConfig, MetroConfig, MetroEdgeConfig};
    use crate::traffic::{
        allocate_intra_dc, generate_demands, rwa_first_fit, LightpathDemand, WorkloadSpec,
        DEFAULT_K,
    };

    fn line3() -> MetroTopology {
        MetroTopology::from_config(&MetroConfig {
            name: "line".into(),
            wavelengths: 3,
            nodes: vec!["a".into(), "b".into(), "c".into()],
            edges: vec![
                MetroEdgeConfig {
                    a: "a".into(),
                    b: "b".into(),
                    length_km: 1.0,
                },
                MetroEdgeConfig {
                    a: "b".into(),
                    b: "c".into(),
                    length_km: 1.0,
                },
            ],
        })
        .unwrap()
    }

    #[test]
    fn bridge_failure_is_unmovable() {
        let mut m = line3();
        let d = LightpathDemand {
            id: "d".into(),
            src: 0,
            dst: 2,
            gbps: 100.0,
        };
        let mut lps = vec![rwa_first_fit(&d, &mut m, DEFAULT_K).unwrap()];
        let before = lps.clone();
        let r = reroute_lightpaths(&mut lps, &FailedElement::MetroEdge(1), &mut m, DEFAULT_K);
        assert!(r.moved.is_empty());
        assert_eq!(r.unmovable, vec!["d".to_string()]);
        assert_eq!(lps, before);
        assert!(!m.is_free(0, 1, 0));
    }

    #[test]
    fn failure_off_path_is_noop() {
        let mut m = MetroTopology::default_metro();
        let d = LightpathDemand {
            id: "d".into(),
            src: m.edges[0].a,
            dst: m.edges[0].b,
            gbps: 100.0,
        };
        let mut lps = vec![rwa_first_fit(&d, &mut m, DEFAULT_K).unwrap()];
        let before = (lps.clone(), m.clone());
        let r = reroute_lightpaths(&mut lps, &FailedElement::MetroEdge(20), &mut m, DEFAULT_K);
        assert_eq!(r, ReplanResult::default());
        assert_eq!((lps, m), before);
    }

    #[test]
    fn resolve_ids() {
        let m = MetroTopology::default_metro();
        let f = Fabric::new(&FabricConfig::default()).unwrap();
        assert_eq!(
            FailedElement::resolve("dc-link-7", &m, &f),
            Some(FailedElement::FabricLink(7))
        );
        assert_eq!(
            FailedElement::resolve("DCI-1", &m, &f),
            Some(FailedElement::MetroNode(0))
        );
        let e = &m.edges[0];
        let id = format!("{}/{}", m.nodes[e.b].name, m.nodes[e.a].name);
        assert_eq!(
            FailedElement::resolve(&id, &m, &f),
            Some(FailedElement::MetroEdge(0))
        );
        assert_eq!(FailedElement::resolve("nope", &m, &f), None);
    }

    #[test]
    fn flows_leave_failed_link() {
        let f = Fabric::new(&FabricConfig::default()).unwrap();
        let m = generate_demands(
            &WorkloadSpec::RingAllReduce {
                payload_gbps: 100.0,
                groups: 8,
            },
            0,
            0,
        )
        .unwrap();
        let mut a = allocate_intra_dc(&m, &f).unwrap();
        let bad = a.flows[0].links[0];
        let crossing = a.flows.iter().filter(|fl| fl.links.contains(&bad)).count();
        let r = reroute_flows(&mut a, &FailedElement::FabricLink(bad), &f);
        assert_eq!(r.moved.len(), crossing);
        assert!(a.flows.iter().all(|fl| !fl.links.contains(&bad)));
        assert_eq!(a.loads[bad], 0.0);
        assert!(a.is_feasible());
        let mut check = a.clone();
        check.recompute_loads();
        assert_eq!(check.loads, a.loads);
    }
}
