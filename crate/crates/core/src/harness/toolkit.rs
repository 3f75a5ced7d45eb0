use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Map, Value};

use super::session::PlanRevision;
use crate::agent::{AgentSpec, CoiMode, ToolCall, ToolExecutor, ToolOutcome};
use crate::coi::{make_handoff_tool_result, plain_delivery, Handoff, TargetIdentity};
use crate::control::{ControlPlane, RpcError, RpcErrorCode, RpcRequest, RpcResponse, Verb};
use crate::domain::{AgentId, DomainId};
use crate::failure::{backbone_rank, classify_failure, localize_failure, Anomaly};
use crate::orchestration::{
    advance_plan, create_plan, next_action, OutcomeStatus, PlanTable, RetryPolicy, StepOutcome,
    StepSpec,
};
use crate::retriever::{retrieve, Index};
use crate::traffic::{
    allocate_intra_dc, capacity_check_fabric, generate_demands, needs_backbone_spectrum,
    reroute_flows, rwa_first_fit, DemandMatrix, FailedElement, FlowAllocation, LightpathDemand,
    TrafficError, WorkloadSpec, DEFAULT_CAPACITY_FRACTION, DEFAULT_K,
};

const DEFAULT_RETRIEVE_K: usize = 3;

/// Executes every harness tool against one trial's world.
pub struct Toolkit {
    pub plane: ControlPlane,
    pub agents: BTreeMap<AgentId, AgentSpec>,
    pub plans: BTreeMap<AgentId, PlanTable>,
    pub revisions: Vec<PlanRevision>,
    pub index: Arc<Index>,
    pub coi: CoiMode,
    pub retry: RetryPolicy,
}

fn invalid(msg: impl Into<String>) -> RpcError {
    RpcError::new(RpcErrorCode::InvalidArgs, msg)
}

fn rejected(msg: impl Into<String>) -> RpcError {
    RpcError::new(RpcErrorCode::Rejected, msg)
}

fn field<'a>(args: &'a Value, key: &str) -> Result<&'a Value, RpcError> {
    args.get(key)
        .ok_or_else(|| invalid(format!("missing argument `{key}`")))
}

fn parse<T: serde::de::DeserializeOwned>(args: &Value, key: &str) -> Result<T, RpcError> {
    serde_json::from_value(field(args, key)?.clone()).map_err(|e| invalid(format!("`{key}`: {e}")))
}

fn str_field<'a>(args: &'a Value, key: &str) -> Result<&'a str, RpcError> {
    field(args, key)?
        .as_str()
        .ok_or_else(|| invalid(format!("`{key}` must be a string")))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("tool payloads serialize")
}

fn string_map(v: Option<&Value>) -> Result<BTreeMap<String, String>, RpcError> {
    let Some(Value::Object(m)) = v else {
        return match v {
            None | Some(Value::Null) => Ok(BTreeMap::new()),
            Some(_) => Err(invalid("`params` must be an object")),
        };
    };
    Ok(m.iter()
        .map(|(k, v)| {
            let s = match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            (k.clone(), s)
        })
        .collect())
}

fn traffic_err(e: TrafficError) -> RpcError {
    invalid(e.to_string())
}

impl Toolkit {
    pub fn new(
        plane: ControlPlane,
        agents: BTreeMap<AgentId, AgentSpec>,
        index: Arc<Index>,
        coi: CoiMode,
    ) -> Self {
        Toolkit {
            plane,
            agents,
            plans: BTreeMap::new(),
            revisions: Vec::new(),
            index,
            coi,
            retry: RetryPolicy::default(),
        }
    }

    pub fn target_identity(&self, id: &AgentId) -> Option<TargetIdentity> {
        self.agents.get(id).map(|a| TargetIdentity {
            id: a.id.clone(),
            identity_name: a.identity_name.clone(),
            core_responsibility: a.core_responsibility.clone(),
        })
    }

    /// Delivery content for `h` sent by `sender`, framed when identity checks
    /// are on.
    pub fn delivery_content(&self, h: &Handoff, sender: &AgentId) -> Result<String, RpcError> {
        let target = self
            .target_identity(&h.to)
            .ok_or_else(|| RpcError::new(RpcErrorCode::NotFound, format!("no agent `{}`", h.to)))?;
        match self.coi {
            CoiMode::Off => Ok(plain_delivery(h)),
            CoiMode::Strict | CoiMode::Monitor => {
                let sender_name = self
                    .agents
                    .get(sender)
                    .map_or(sender.as_str(), |a| a.identity_name.as_str());
                make_handoff_tool_result(h, &target, sender_name)
                    .map_err(|e| invalid(e.to_string()))
            }
        }
    }

    fn record(&mut self, planner: &AgentId, table: PlanTable) {
        self.revisions.push(PlanRevision {
            planner: planner.clone(),
            tick: self.plane.world.tick,
            table: table.clone(),
        });
        self.plans.insert(planner.clone(), table);
    }

    fn rpc(&mut self, agent: &AgentSpec, verb: Verb, args: &Value) -> RpcResponse {
        let domain = match str_field(args, "domain")
            .and_then(|d| d.parse::<DomainId>().map_err(|e| invalid(e.to_string())))
        {
            Ok(d) => d,
            Err(e) => return RpcResponse::failure(e),
        };
        let mut rest: Map<String, Value> = args.as_object().cloned().unwrap_or_default();
        rest.remove("domain");
        let req = RpcRequest {
            verb: verb.as_str().to_string(),
            args: rest,
        };
        self.plane.rpc_call(domain, &agent.id, &req)
    }

    fn run_tool(
        &mut self,
        agent: &AgentSpec,
        call: &ToolCall,
    ) -> Result<(Value, Option<Handoff>), RpcError> {
        let args = &call.args;
        let out = match call.name.as_str() {
            "generate_demands" => {
                let workload =
                    WorkloadSpec::from_json(field(args, "workload")?).map_err(traffic_err)?;
                let epoch = parse::<u64>(args, "epoch")?;
                let seed = parse::<u64>(args, "seed")?;
                to_value(&generate_demands(&workload, epoch, seed).map_err(traffic_err)?)
            }
            "allocate_intra_dc" => {
                let matrix: DemandMatrix = parse(args, "matrix")?;
                matrix.validate().map_err(traffic_err)?;
                let fabric = &self.plane.world.network.fabric;
                let escalate = needs_backbone_spectrum(&matrix, fabric, DEFAULT_CAPACITY_FRACTION);
                match allocate_intra_dc(&matrix, fabric) {
                    Ok(a) => json!({
                        "feasible": a.is_feasible(),
                        "needs_backbone": escalate,
                        "demand_gbps": matrix.total_gbps(),
                        "allocation": a,
                    }),
                    Err(e @ TrafficError::InfeasibleDemand { .. }) => json!({
                        "feasible": false,
                        "needs_backbone": escalate,
                        "demand_gbps": matrix.total_gbps(),
                        "reason": e.to_string(),
                    }),
                    Err(e) => return Err(traffic_err(e)),
                }
            }
            "capacity_check" => {
                let mut alloc: FlowAllocation = parse(args, "allocation")?;
                alloc.recompute_loads();
                to_value(&json!({ "violations": capacity_check_fabric(&alloc) }))
            }
            "reroute_flows" => {
                let id = str_field(args, "failed")?;
                let world = &self.plane.world;
                let failed =
                    FailedElement::resolve(id, &world.network.metro, &world.network.fabric)
                        .ok_or_else(|| {
                            RpcError::new(RpcErrorCode::NotFound, format!("element `{id}`"))
                        })?;
                let mut alloc = world.allocation.clone();
                let result = reroute_flows(&mut alloc, &failed, &world.network.fabric);
                json!({ "allocation": alloc, "moved": result.moved, "unmovable": result.unmovable })
            }
            "plan_lightpath" => {
                let metro = &self.plane.world.network.metro;
                let node = |k: &str| -> Result<usize, RpcError> {
                    let name = str_field(args, k)?;
                    metro.node_by_name(name).ok_or_else(|| {
                        RpcError::new(RpcErrorCode::NotFound, format!("node `{name}`"))
                    })
                };
                let demand = LightpathDemand {
                    id: args
                        .get("id")
                        .and_then(Value::as_str)
                        .unwrap_or("lp")
                        .to_string(),
                    src: node("src")?,
                    dst: node("dst")?,
                    gbps: parse(args, "gbps")?,
                };
                let mut scratch = metro.clone();
                let a = rwa_first_fit(&demand, &mut scratch, DEFAULT_K)
                    .map_err(|e| rejected(e.to_string()))?;
                to_value(&a)
            }
            "classify_failure" | "localize_failure" => {
                let parts: Vec<Anomaly> = parse::<Vec<Option<Anomaly>>>(args, "anomalies")?
                    .into_iter()
                    .flatten()
                    .collect();
                let bb = &self.plane.world.network.backbone;
                let merged = Anomaly::merge(&parts, backbone_rank(bb));
                if call.name == "classify_failure" {
                    let class =
                        classify_failure(merged.as_ref(), &[], self.plane.tolerance.quality_db)
                            .map_err(|e| rejected(e.to_string()))?;
                    to_value(&class)
                } else {
                    let merged = merged.ok_or_else(|| rejected("no evidence to localize"))?;
                    let element =
                        localize_failure(&merged, bb).map_err(|e| rejected(e.to_string()))?;
                    json!({ "element": element, "first_evidence": merged.first() })
                }
            }
            "retrieve" => {
                let query = str_field(args, "query")?;
                let k = args
                    .get("k")
                    .and_then(Value::as_u64)
                    .map_or(DEFAULT_RETRIEVE_K, |k| k as usize);
                let hits: Vec<Value> = retrieve(&self.index, query, k.max(1))
                    .into_iter()
                    .map(|h| {
                        json!({
                            "doc_id": h.chunk.doc_id,
                            "heading": h.chunk.heading,
                            "score": h.score,
                            "text": h.chunk.body,
                        })
                    })
                    .collect();
                json!({ "hits": hits })
            }
            "create_plan" => {
                let goal = str_field(args, "goal")?.to_string();
                let steps = field(args, "steps")?
                    .as_array()
                    .ok_or_else(|| invalid("`steps` must be an array"))?
                    .iter()
                    .map(|s| {
                        Ok(StepSpec {
                            description: str_field(s, "description")?.to_string(),
                            assigned_agent: AgentId::new(str_field(s, "assigned_agent")?),
                            params: string_map(s.get("params"))?,
                        })
                    })
                    .collect::<Result<Vec<_>, RpcError>>()?;
                let table = create_plan(goal, steps, |a| self.agents.contains_key(a))
                    .map_err(|e| invalid(e.to_string()))?;
                self.record(&agent.id, table.clone());
                to_value(&table)
            }
            "advance_plan" => {
                let table = self
                    .plans
                    .get(&agent.id)
                    .ok_or_else(|| rejected("no plan; call create_plan first"))?;
                let step_id: u32 = parse(args, "step_id")?;
                let status: OutcomeStatus = parse(args, "status")?;
                let summary = str_field(args, "summary")?.to_string();
                let next = advance_plan(table, step_id, StepOutcome { status, summary })
                    .map_err(|e| rejected(e.to_string()))?;
                self.record(&agent.id, next.clone());
                to_value(&next)
            }
            "next_action" => {
                let table = self
                    .plans
                    .get(&agent.id)
                    .ok_or_else(|| rejected("no plan; call create_plan first"))?;
                let (next, dispatch) = next_action(table, &self.retry);
                if next != *table {
                    self.record(&agent.id, next);
                }
                to_value(&dispatch)
            }
            "handoff" => {
                let h = Handoff {
                    to: AgentId::new(str_field(args, "to")?),
                    greeting: args
                        .get("greeting")
                        .and_then(Value::as_str)
                        .unwrap_or_default()
                        .to_string(),
                    query: str_field(args, "query")?.to_string(),
                    params: string_map(args.get("params"))?,
                };
                if h.to == agent.id {
                    return Err(invalid("cannot hand off to yourself"));
                }
                let content = self.delivery_content(&h, &agent.id)?;
                return Ok((Value::String(content), Some(h)));
            }
            other => {
                let verb: Verb = other.parse().map_err(|_| {
                    RpcError::new(RpcErrorCode::UnsupportedVerb, format!("no tool `{other}`"))
                })?;
                let resp = self.rpc(agent, verb, args);
                return Ok((to_value(&resp), None));
            }
        };
        Ok((to_value(&RpcResponse::success(out)), None))
    }
}

impl ToolExecutor for Toolkit {
    fn run(&mut self, agent: &AgentSpec, call: &ToolCall) -> ToolOutcome {
        match self.run_tool(agent, call) {
            Ok((Value::String(delivery), Some(h))) => ToolOutcome {
                content: delivery,
                transfer: Some(h),
            },
            Ok((v, _)) => ToolOutcome::text(v.to_string()),
            Err(e) => ToolOutcome::text(to_value(&RpcResponse::failure(e)).to_string()),
        }
    }
}
