use serde::{Deserialize, Serialize};

use super::{capacity_check_fabric, DemandMatrix, TrafficError};
use crate::domain::ElementId;
use crate::optical::Fabric;

pub const DEFAULT_CAPACITY_FRACTION: f64 = 0.8;

/// One inter-group flow pinned to a spine: `leaf(src) → spine → leaf(dst)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub src: usize,
    pub dst: usize,
    pub gbps: f64,
    pub spine: usize,
    /// Fabric link indices traversed (uplink of `src`, downlink of `dst`).
    pub links: [usize; 2],
}

impl Flow {
    pub fn id(&self) -> String {
        format!("g{}->g{}", self.src, self.dst)
    }
}

/// Result of one epoch's intra-DC allocation. Link vectors are indexed like
/// [`Fabric::links`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowAllocation {
    pub epoch: u64,
    pub flows: Vec<Flow>,
    pub link_ids: Vec<ElementId>,
    pub capacity_gbps: Vec<f64>,
    pub loads: Vec<f64>,
    pub violations: Vec<super::Violation>,
}

impl FlowAllocation {
    pub fn empty(fabric: &Fabric, epoch: u64) -> Self {
        FlowAllocation {
            epoch,
            flows: Vec::new(),
            link_ids: fabric.links.iter().map(|l| l.id.clone()).collect(),
            capacity_gbps: fabric.links.iter().map(|l| l.capacity_gbps).collect(),
            loads: vec![0.0; fabric.links.len()],
            violations: Vec::new(),
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn max_load(&self) -> f64 {
        self.loads.iter().copied().fold(0.0, f64::max)
    }

    pub fn load_of(&self, link_id: &str) -> Option<f64> {
        self.link_ids
            .iter()
            .position(|l| l.as_str() == link_id)
            .map(|i| self.loads[i])
    }

    /// Recompute loads from the flow list.
    pub fn recompute_loads(&mut self) {
        self.loads.iter_mut().for_each(|l| *l = 0.0);
        for f in &self.flows {
            for &l in &f.links {
                self.loads[l] += f.gbps;
            }
        }
    }
}

/// Least-loaded spine for a flow given current loads, skipping spines whose
/// links are in `avoid`. Ties go to the lowest spine id.
pub(crate) fn pick_spine(
    fabric: &Fabric,
    loads: &[f64],
    src: usize,
    dst: usize,
    gbps: f64,
    avoid: &[usize],
) -> Option<(usize, [usize; 2])> {
    let mut best: Option<(f64, usize, [usize; 2])> = None;
    for spine in 0..fabric.spines {
        let links = [fabric.link_index(src, spine), fabric.link_index(dst, spine)];
        if links.iter().any(|l| avoid.contains(l)) {
            continue;
        }
        let peak = (loads[links[0]] + gbps).max(loads[links[1]] + gbps);
        if best.is_none_or(|(b, _, _)| peak < b) {
            best = Some((peak, spine, links));
        }
    }
    best.map(|(_, s, l)| (s, l))
}

/// Route every inter-group flow of `matrix` over the fabric, starting from
/// empty link loads. Flows are placed in row-major order.
pub fn allocate_intra_dc(
    matrix: &DemandMatrix,
    fabric: &Fabric,
) -> Result<FlowAllocation, TrafficError> {
    matrix
        .validate()
        .map_err(|e| TrafficError::InvalidDemand(e.to_string()))?;
    if matrix.size() != fabric.leaves {
        return Err(TrafficError::InvalidDemand(format!(
            "matrix is {n}x{n} but the fabric has {} leaves",
            fabric.leaves,
            n = matrix.size()
        )));
    }
    let mut alloc = FlowAllocation::empty(fabric, matrix.epoch);
    for (src, dst, gbps) in matrix.demands() {
        let (spine, links) =
            pick_spine(fabric, &alloc.loads, src, dst, gbps, &[]).expect("fabric has spines");
        let capacity = links
            .iter()
            .map(|&l| fabric.links[l].capacity_gbps)
            .fold(f64::INFINITY, f64::min);
        if gbps > capacity {
            return Err(TrafficError::InfeasibleDemand {
                src,
                dst,
                gbps,
                capacity,
            });
        }
        for &l in &links {
            alloc.loads[l] += gbps;
        }
        alloc.flows.push(Flow {
            src,
            dst,
            gbps,
            spine,
            links,
        });
    }
    alloc.violations = capacity_check_fabric(&alloc);
    Ok(alloc)
}

/// Threshold rule for escalating to the backbone: the epoch's intra-DC
/// allocation is infeasible, or aggregate demand exceeds `capacity_fraction`
/// of the fabric bisection bandwidth.
pub fn needs_backbone_spectrum(
    matrix: &DemandMatrix,
    fabric: &Fabric,
    capacity_fraction: f64,
) -> bool {
    let infeasible = match allocate_intra_dc(matrix, fabric) {
        Ok(a) => !a.is_feasible(),
        Err(_) => true,
    };
    infeasible || matrix.total_gbps() > capacity_fraction * fabric.bisection_gbps()
}
