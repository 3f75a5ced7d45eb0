use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::optical::{MetroTopology, NodeIndex};

const LENGTH_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub nodes: Vec<NodeIndex>,
    pub length_km: f64,
}

impl Path {
    /// Ordering used for path ranking: length, then lexicographic node list.
    pub fn rank_cmp(&self, other: &Path) -> Ordering {
        if (self.length_km - other.length_km).abs() <= LENGTH_EPS {
            self.nodes.cmp(&other.nodes)
        } else {
            self.length_km.total_cmp(&other.length_km)
        }
    }

    pub fn hops(&self) -> impl Iterator<Item = (NodeIndex, NodeIndex)> + '_ {
        self.nodes.windows(2).map(|w| (w[0], w[1]))
    }
}

/// Edges and nodes that routing must not use.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Exclusions {
    pub edges: BTreeSet<usize>,
    pub nodes: BTreeSet<NodeIndex>,
}

impl Exclusions {
    pub fn none() -> Self {
        Self::default()
    }
}

#[derive(PartialEq)]
struct QueueItem(f64, NodeIndex);

impl Eq for QueueItem {}

impl Ord for QueueItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for QueueItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra(topo: &MetroTopology, src: NodeIndex, dst: NodeIndex, ex: &Exclusions) -> Option<Path> {
    if ex.nodes.contains(&src) || ex.nodes.contains(&dst) {
        return None;
    }
    let n = topo.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut prev = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(QueueItem(0.0, src));
    while let Some(QueueItem(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        if u == dst {
            break;
        }
        for (i, e) in topo.edges.iter().enumerate() {
            let v = if e.a == u {
                e.b
            } else if e.b == u {
                e.a
            } else {
                continue;
            };
            if ex.edges.contains(&i) || ex.nodes.contains(&v) {
                continue;
            }
            let nd = d + e.length_km;
            if nd < dist[v] {
                dist[v] = nd;
                prev[v] = u;
                heap.push(QueueItem(nd, v));
            }
        }
    }
    if !dist[dst].is_finite() {
        return None;
    }
    let mut nodes = vec![dst];
    let mut cur = dst;
    while cur != src {
        cur = prev[cur];
        nodes.push(cur);
    }
    nodes.reverse();
    Some(Path {
        nodes,
        length_km: dist[dst],
    })
}

/// The `k` shortest simple paths from `src` to `dst`, ordered by length with
/// ties broken by lexicographic node order.
///
/// Yen's algorithm is run past the k-th path until the candidate length
/// strictly exceeds it, so every path tied at the cut-off is seen before
/// the final ordering is applied.
pub fn k_shortest_paths(
    topo: &MetroTopology,
    src: NodeIndex,
    dst: NodeIndex,
    k: usize,
    ex: &Exclusions,
) -> Vec<Path> {
    if k == 0 || src == dst || src >= topo.node_count() || dst >= topo.node_count() {
        return Vec::new();
    }
    let Some(first) = dijkstra(topo, src, dst, ex) else {
        return Vec::new();
    };
    let mut accepted: Vec<Path> = vec![first];
    let mut candidates: Vec<Path> = Vec::new();
    loop {
        let last = accepted.last().expect("non-empty").clone();
        for i in 0..last.nodes.len() - 1 {
            let spur = last.nodes[i];
            let root = &last.nodes[..=i];
            let mut local = ex.clone();
            for p in &accepted {
                if p.nodes.len() > i && p.nodes[..=i] == *root {
                    if let Some(e) = topo.edge_index(p.nodes[i], p.nodes[i + 1]) {
                        local.edges.insert(e);
                    }
                }
            }
            local.nodes.extend(root[..i].iter().copied());
            if let Some(tail) = dijkstra(topo, spur, dst, &local) {
                let mut nodes = root[..i].to_vec();
                nodes.extend(tail.nodes);
                let length_km = topo.path_length(&nodes).expect("path edges exist");
                let cand = Path { nodes, length_km };
                if !accepted.iter().any(|p| p.nodes == cand.nodes)
                    && !candidates.iter().any(|p| p.nodes == cand.nodes)
                {
                    candidates.push(cand);
                }
            }
        }
        if candidates.is_empty() {
            break;
        }
        let best = (0..candidates.len())
            .min_by(|&a, &b| candidates[a].rank_cmp(&candidates[b]))
            .expect("non-empty");
        if accepted.len() >= k {
            let mut by_len = accepted.clone();
            by_len.sort_by(|a, b| a.rank_cmp(b));
            let cutoff = by_len[k - 1].length_km;
            if candidates[best].length_km > cutoff + LENGTH_EPS {
                break;
            }
        }
        accepted.push(candidates.swap_remove(best));
    }
    accepted.sort_by(|a, b| a.rank_cmp(b));
    accepted.truncate(k);
    accepted
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optical::{MetroConfig, MetroEdgeConfig};

    fn topo(nodes: usize, edges: &[(usize, usize, f64)]) -> MetroTopology {
        MetroTopology::from_config(&MetroConfig {
            name: "t".into(),
            wavelengths: 3,
            nodes: (0..nodes).map(|i| format!("n{i}")).collect(),
            edges: edges
                .iter()
                .map(|&(a, b, l)| MetroEdgeConfig {
                    a: format!("n{a}"),
                    b: format!("n{b}"),
                    length_km: l,
                })
                .collect(),
        })
        .unwrap()
    }

    #[test]
    fn square_with_ties_orders_lexicographically() {
        // 0-1-3 and 0-2-3 both length 2; 0-3 direct length 5.
        let t = topo(
            4,
            &[
                (0, 1, 1.0),
                (1, 3, 1.0),
                (0, 2, 1.0),
                (2, 3, 1.0),
                (0, 3, 5.0),
            ],
        );
        let p = k_shortest_paths(&t, 0, 3, 3, &Exclusions::none());
        let nodes: Vec<_> = p.iter().map(|p| p.nodes.clone()).collect();
        assert_eq!(nodes, vec![vec![0, 1, 3], vec![0, 2, 3], vec![0, 3]]);
    }

    #[test]
    fn exclusions_are_respected() {
        let t = topo(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 3.0)]);
        let mut ex = Exclusions::none();
        ex.nodes.insert(1);
        let p = k_shortest_paths(&t, 0, 2, 3, &ex);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].nodes, vec![0, 2]);
    }

    #[test]
    fn line_has_single_path() {
        let t = topo(3, &[(0, 1, 1.0), (1, 2, 1.0)]);
        assert_eq!(k_shortest_paths(&t, 0, 2, 3, &Exclusions::none()).len(), 1);
        let mut ex = Exclusions::none();
        ex.edges.insert(1);
        assert!(k_shortest_paths(&t, 0, 2, 3, &ex).is_empty());
    }
}
