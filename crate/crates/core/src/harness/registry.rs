use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Value};

use super::Mode;
use crate::agent::{AgentCategory, AgentSpec, ToolSpec};
use crate::control::IsolationPolicy;
use crate::domain::{AgentId, DomainId};

/// Agent ids of the shipped organisation.
pub struct AgentIds;

impl AgentIds {
    pub const PLANNER: &'static str = "planner";
    pub const BACKBONE_PLANNER: &'static str = "backbone-planner";
    pub const RESOURCE_ALLOCATOR: &'static str = "resource-allocator";
    pub const FAILURE_HANDLER: &'static str = "failure-handler";
    pub const BACKBONE_A: &'static str = "backbone-a-agent";
    pub const BACKBONE_B: &'static str = "backbone-b-agent";
    pub const METRO: &'static str = "metro-agent";
    pub const RETRIEVER: &'static str = "knowledge-retriever";
    pub const OPERATOR: &'static str = "network-operator";
}

pub(crate) const PLAN_TOOLS: [&str; 3] = ["create_plan", "advance_plan", "next_action"];
pub(crate) const HANDOFF: &str = "handoff";

const BACKBONE_TOOLS: [&str; 7] = [
    "get_monitors",
    "list_channels",
    "set_channel",
    "configure_transponder",
    "list_alarms",
    "get_link_quality",
    "get_topology",
];

fn tools(names: &[&str], handoff: bool) -> Vec<String> {
    let mut v: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    if handoff {
        v.push(HANDOFF.to_string());
    }
    v
}

fn prompt(identity: &str, responsibility: &str, category: AgentCategory) -> String {
    let role = match category {
        AgentCategory::Planner => {
            "Decompose the request into a plan with create_plan, dispatch each step with next_action and the \
             handoff tool, and record every returned result with advance_plan."
        }
        AgentCategory::Task => "Use your tools to complete the delegated step, then answer.",
    };
    format!(
        "You are {identity}. Core responsibility: {responsibility}. {role} When you receive a handoff, open your \
         first reply with: \"I am {identity}. Handoff from <sender> received and verified.\" End your work with a \
         message that begins with \"FINAL:\" followed by your result."
    )
}

fn spec(
    id: &str,
    name: &str,
    responsibility: &str,
    category: AgentCategory,
    tool_names: Vec<String>,
) -> AgentSpec {
    AgentSpec {
        id: AgentId::new(id),
        identity_name: name.to_string(),
        core_responsibility: responsibility.to_string(),
        category,
        tool_names,
        system_prompt: prompt(name, responsibility, category),
    }
}

fn multi_agent_specs() -> Vec<AgentSpec> {
    use AgentCategory::{Planner, Task};
    let planner_tools = tools(&PLAN_TOOLS, true);
    vec![
        spec(
            AgentIds::PLANNER,
            "Planner",
            "decompose operator intents into plans and orchestrate the domain agents",
            Planner,
            planner_tools.clone(),
        ),
        spec(
            AgentIds::BACKBONE_PLANNER,
            "Backbone Planner",
            "plan wavelength services and failure management across backbone domains A and B",
            Planner,
            planner_tools,
        ),
        spec(
            AgentIds::RESOURCE_ALLOCATOR,
            "Resource-Allocator",
            "compute, check and commit intra-DC resource allocations",
            Task,
            tools(
                &[
                    "generate_demands",
                    "allocate_intra_dc",
                    "capacity_check",
                    "reroute_flows",
                    "apply_allocation",
                    "get_topology",
                    "get_link_quality",
                    "list_alarms",
                ],
                true,
            ),
        ),
        spec(
            AgentIds::FAILURE_HANDLER,
            "Failure-Handler",
            "detect, classify and localize network failures",
            Task,
            tools(
                &[
                    "list_alarms",
                    "get_link_quality",
                    "get_topology",
                    "classify_failure",
                    "localize_failure",
                ],
                true,
            ),
        ),
        spec(
            AgentIds::BACKBONE_A,
            "Backbone-A Agent",
            "operate backbone domain A through its controller",
            Task,
            tools(&BACKBONE_TOOLS, true),
        ),
        spec(
            AgentIds::BACKBONE_B,
            "Backbone-B Agent",
            "operate backbone domain B through its controller",
            Task,
            tools(&BACKBONE_TOOLS, true),
        ),
        spec(
            AgentIds::METRO,
            "DCI Metro Agent",
            "route and assign wavelengths for lightpaths between data-center sites",
            Task,
            tools(
                &[
                    "get_topology",
                    "list_alarms",
                    "apply_allocation",
                    "plan_lightpath",
                ],
                true,
            ),
        ),
        spec(
            AgentIds::RETRIEVER,
            "Knowledge Retriever",
            "retrieve device documentation and troubleshooting guidance",
            Task,
            tools(&["retrieve"], true),
        ),
    ]
}

/// Agents registered for `mode`, keyed by id.
pub fn agent_specs(mode: Mode) -> BTreeMap<AgentId, AgentSpec> {
    let specs = match mode {
        Mode::Autolight | Mode::NaiveMulti => multi_agent_specs(),
        Mode::SingleAgent => {
            // Every task agent's tool, plus the plan table; nobody to hand off to.
            let mut names: BTreeSet<String> = multi_agent_specs()
                .into_iter()
                .filter(|s| s.category == AgentCategory::Task)
                .flat_map(|s| s.tool_names)
                .filter(|t| t != HANDOFF)
                .collect();
            names.extend(PLAN_TOOLS.iter().map(|s| s.to_string()));
            vec![spec(
                AgentIds::OPERATOR,
                "Network-Operator",
                "operate every network domain end to end",
                AgentCategory::Task,
                names.into_iter().collect(),
            )]
        }
    };
    specs.into_iter().map(|s| (s.id.clone(), s)).collect()
}

/// Controller grants for the agents of `mode`.
pub fn isolation_policy(mode: Mode) -> IsolationPolicy {
    let mut p = IsolationPolicy::default();
    match mode {
        Mode::SingleAgent => p.grant(AgentIds::OPERATOR, DomainId::ALL),
        Mode::Autolight | Mode::NaiveMulti => {
            p.planner(AgentIds::PLANNER);
            p.planner(AgentIds::BACKBONE_PLANNER);
            p.grant(AgentIds::RETRIEVER, [] as [DomainId; 0]);
            p.grant(AgentIds::RESOURCE_ALLOCATOR, [DomainId::IntraDc]);
            p.grant(AgentIds::FAILURE_HANDLER, [DomainId::IntraDc]);
            p.grant(AgentIds::BACKBONE_A, [DomainId::BackboneA]);
            p.grant(AgentIds::BACKBONE_B, [DomainId::BackboneB]);
            p.grant(AgentIds::METRO, [DomainId::DciMetro]);
        }
    }
    p
}

fn domain_prop() -> Value {
    json!({"type": "string", "enum": ["backbone-A", "backbone-B", "dci-metro", "intra-dc"]})
}

fn object(props: Value, required: &[&str]) -> Value {
    json!({"type": "object", "properties": props, "required": required})
}

/// Schema and description of every tool the harness implements.
pub fn tool_specs() -> BTreeMap<String, ToolSpec> {
    let d = domain_prop();
    let any = json!({});
    let list = [
        ("get_monitors", "Amplifier input/output power monitors of a backbone domain.", object(json!({"domain": d}), &["domain"])),
        (
            "list_channels",
            "Channel grid, free channels and the domain's transponders.",
            object(json!({"domain": d}), &["domain"]),
        ),
        (
            "set_channel",
            "Switch dummy loading of a free channel on or off.",
            object(
                json!({"domain": d, "index": {"type": "integer"}, "state": {"type": "string", "enum": ["on", "off"]}}),
                &["domain", "index", "state"],
            ),
        ),
        (
            "configure_transponder",
            "Tune a transponder of the domain to a channel at 200 or 400 Gbps, or idle it with channel null.",
            object(
                json!({"domain": d, "id": {"type": "string"}, "channel": {"type": ["integer", "null"]}, "rate": {"type": "integer", "enum": [200, 400]}}),
                &["domain", "id"],
            ),
        ),
        ("list_alarms", "Deviations of the domain's observations from baseline.", object(json!({"domain": d}), &["domain"])),
        (
            "apply_allocation",
            "Commit an intra-DC flow allocation or a metro lightpath set.",
            object(json!({"domain": d, "allocation": any, "lightpaths": any}), &["domain"]),
        ),
        (
            "get_link_quality",
            "IMDD penalty of an intra-DC link, or OSNR and power of backbone channel `chN`.",
            object(json!({"domain": d, "link": {"type": "string"}}), &["domain", "link"]),
        ),
        ("get_topology", "The domain's topology and current state.", object(json!({"domain": d}), &["domain"])),
        (
            "generate_demands",
            "Inter-group demand matrix for a training epoch.",
            object(
                json!({"workload": any, "epoch": {"type": "integer"}, "seed": {"type": "integer"}}),
                &["workload", "epoch", "seed"],
            ),
        ),
        (
            "allocate_intra_dc",
            "Leaf-spine allocation of a demand matrix, with the backbone escalation verdict.",
            object(json!({"matrix": any}), &["matrix"]),
        ),
        ("capacity_check", "Capacity violations of an allocation.", object(json!({"allocation": any}), &["allocation"])),
        (
            "reroute_flows",
            "Move committed intra-DC flows off a failed link.",
            object(json!({"failed": {"type": "string"}}), &["failed"]),
        ),
        (
            "plan_lightpath",
            "First-fit route and wavelength for a metro lightpath (not committed).",
            object(
                json!({"id": {"type": "string"}, "src": {"type": "string"}, "dst": {"type": "string"}, "gbps": {"type": "number"}}),
                &["src", "dst", "gbps"],
            ),
        ),
        (
            "classify_failure",
            "Failure class of one or more anomalies.",
            object(json!({"anomalies": {"type": "array"}}), &["anomalies"]),
        ),
        (
            "localize_failure",
            "Failed element from merged anomalies in propagation order.",
            object(json!({"anomalies": {"type": "array"}}), &["anomalies"]),
        ),
        (
            "retrieve",
            "Ranked passages of the troubleshooting corpus.",
            object(json!({"query": {"type": "string"}, "k": {"type": "integer"}}), &["query"]),
        ),
        (
            "create_plan",
            "Create the plan tracking table.",
            object(
                json!({"goal": {"type": "string"}, "steps": {"type": "array", "items": {"type": "object", "properties": {
                    "assigned_agent": {"type": "string"}, "description": {"type": "string"}, "params": {"type": "object"}}}}}),
                &["goal", "steps"],
            ),
        ),
        (
            "advance_plan",
            "Record the outcome of the in-progress step.",
            object(
                json!({"step_id": {"type": "integer"}, "status": {"type": "string", "enum": ["done", "failed"]}, "summary": {"type": "string"}}),
                &["step_id", "status", "summary"],
            ),
        ),
        ("next_action", "Decide the next dispatch from the plan table.", object(json!({}), &[])),
        (
            "handoff",
            "Transfer control to another agent with a greeting naming it, a query and parameters.",
            object(
                json!({"to": {"type": "string"}, "greeting": {"type": "string"}, "query": {"type": "string"}, "params": {"type": "object"}}),
                &["to", "greeting", "query"],
            ),
        ),
    ];
    list.into_iter()
        .map(|(name, description, parameters)| {
            (
                name.to_string(),
                ToolSpec {
                    name: name.to_string(),
                    description: description.to_string(),
                    parameters,
                },
            )
        })
        .collect()
}
