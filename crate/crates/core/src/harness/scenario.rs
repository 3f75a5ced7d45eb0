use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{HarnessError, TaskId};
use crate::control::World;
use crate::failure::FailureSpec;
use crate::optical::Network;
use crate::traffic::{allocate_intra_dc, generate_demands, WorkloadSpec};

/// Symptom description the retriever is asked about in Task4. It describes
/// what the monitors show, never where the fault is.
pub const TASK4_QUERY: &str =
    "power loss at an amplifier input monitor: downstream monitors drop while upstream monitors stay normal";

/// Ring payload of Task1 and Task3, in Gbps per group.
const RING_GBPS: f64 = 100.0;
/// Task2 ring payload: above one fabric link, so local allocation fails.
const ESCALATION_GBPS: f64 = 600.0;
const MPI_RATIO_DB: f64 = -20.0;
const AGING_DB: f64 = 3.0;
/// Spare transponders left idle for Task2, one per backbone domain.
const SPARE_TRANSPONDERS: [&str; 2] = ["t3", "t6"];

/// A backbone wavelength request raised by the Task2 escalation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WavelengthRequest {
    pub src: String,
    pub dst: String,
    pub gbps: u32,
}

/// Everything a trial starts from, plus the ground truth its checkpoints
/// compare against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub task: TaskId,
    pub seed: u64,
    pub epoch: u64,
    pub workload: WorkloadSpec,
    pub world: World,
    pub failure: Option<FailureSpec>,
    /// Element a correct diagnosis names.
    pub truth: Option<String>,
    pub request: Option<WavelengthRequest>,
}

fn ring(payload_gbps: f64) -> WorkloadSpec {
    WorkloadSpec::RingAllReduce {
        payload_gbps,
        groups: 8,
    }
}

fn setup(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Setup(e.to_string())
}

pub fn build_scenario(task: TaskId, seed: u64) -> Result<Scenario, HarnessError> {
    let epoch = seed;
    let mut s = Scenario {
        task,
        seed,
        epoch,
        workload: ring(RING_GBPS),
        world: World::default_world(),
        failure: None,
        truth: None,
        request: None,
    };
    match task {
        TaskId::Task1 => {}
        TaskId::Task2 => {
            let mut net = Network::default_network();
            for id in SPARE_TRANSPONDERS {
                let t = net
                    .backbone
                    .transponder_mut(id)
                    .ok_or_else(|| setup(format!("transponder `{id}` missing")))?;
                t.channel = None;
                t.rate_gbps = None;
            }
            net.backbone.refresh_channels();
            s.world = World::new(net);
            s.workload = ring(ESCALATION_GBPS);
            s.request = Some(WavelengthRequest {
                src: "DCI-1".into(),
                dst: "DCI-2".into(),
                gbps: 400,
            });
        }
        TaskId::Task3 => {
            let matrix = generate_demands(&s.workload, epoch, seed).map_err(setup)?;
            let alloc = allocate_intra_dc(&matrix, &s.world.network.fabric).map_err(setup)?;
            let loaded: Vec<usize> = (0..alloc.loads.len())
                .filter(|&i| alloc.loads[i] > 0.0)
                .collect();
            if loaded.is_empty() {
                return Err(setup("the Task3 workload loads no fabric link"));
            }
            let link = alloc.link_ids[loaded[(seed % loaded.len() as u64) as usize]].to_string();
            s.world.commit_allocation(alloc);
            // Loaded but healthy is the alarm baseline.
            s.world.baseline = s.world.network.clone();
            let spec = FailureSpec::Mpi {
                link_id: link.clone(),
                ratio_db: MPI_RATIO_DB,
            };
            s.world.inject(&spec).map_err(setup)?;
            s.failure = Some(spec);
            s.truth = Some(link);
        }
        TaskId::Task4 => {
            let span = if seed.is_multiple_of(2) {
                "span3"
            } else {
                "span4"
            };
            let spec = FailureSpec::FiberAging {
                span_id: span.into(),
                delta_db: AGING_DB,
            };
            s.world.inject(&spec).map_err(setup)?;
            s.failure = Some(spec);
            s.truth = Some(span.into());
        }
    }
    Ok(s)
}

impl Scenario {
    /// Replaces the workload, e.g. for degenerate zero-payload runs.
    pub fn with_workload(mut self, workload: WorkloadSpec) -> Self {
        self.workload = workload;
        self
    }

    /// Machine-readable part of the operator's request.
    pub fn parameters(&self) -> Value {
        let mut p = json!({
            "task": self.task,
            "ticket": format!("T{}", self.seed),
            "workload": self.workload,
            "epoch": self.epoch,
            "seed": self.seed,
        });
        if let Some(r) = &self.request {
            p["src"] = json!(r.src);
            p["dst"] = json!(r.dst);
            p["gbps"] = json!(r.gbps);
        }
        p
    }

    /// The operator's request, as the root agent receives it.
    pub fn goal(&self) -> String {
        let intent = match self.task {
            TaskId::Task1 => "allocate intra-DC resources for this training epoch and commit them",
            TaskId::Task2 => "serve this epoch's training traffic; if local resources are insufficient, establish a backbone wavelength",
            TaskId::Task3 => "an intra-DC link is degraded; diagnose it and move traffic off it",
            TaskId::Task4 => "backbone monitors report abnormal power; find the failed element",
        };
        format!(
            "Ticket T{}: {}.\nParameters: {}",
            self.seed,
            intent,
            self.parameters()
        )
    }
}

/// Parameters embedded in a goal produced by [`Scenario::goal`].
pub(crate) fn goal_parameters(goal: &str) -> Option<Value> {
    goal.lines()
        .find_map(|l| l.strip_prefix("Parameters: "))
        .and_then(|p| serde_json::from_str(p).ok())
}
