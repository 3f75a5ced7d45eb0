//! Table-driven policies for every shipped agent, so that full task runs
//! need no model. Besides the cooperative set there are two adversarial
//! sets that imitate failure modes seen with real models: agents that drop
//! their identity after a handoff, and a single agent that gives up once
//! its context fills with tool output.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::checkpoints::MIN_OSNR_DB;
use super::registry::{agent_specs, AgentIds};
use super::scenario::{goal_parameters, TASK4_QUERY};
use super::session::{STATUS, SUMMARY};
use super::Mode;
use crate::agent::{Message, PolicyView, Role, ScriptedBackend, ScriptedPolicy};
use crate::coi::declaration;
use crate::orchestration::PlanTable;

/// Tool output, in characters, after which the overwhelmed single agent
/// stops investigating and answers with what it has.
pub const OVERWHELM_BUDGET_CHARS: usize = 12_000;

const WAVELENGTH_RATE_GBPS: u32 = 400;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicySet {
    Cooperative,
    /// Task agents occasionally answer a handoff as if they were its sender.
    IdentityDropping,
    /// The single agent floods its context and answers prematurely.
    Overwhelmed,
}

impl PolicySet {
    /// The set each mode is benchmarked with.
    pub fn default_for(mode: Mode) -> Self {
        match mode {
            Mode::Autolight => PolicySet::Cooperative,
            Mode::NaiveMulti => PolicySet::IdentityDropping,
            Mode::SingleAgent => PolicySet::Overwhelmed,
        }
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

type Params = BTreeMap<String, String>;
type Names = Arc<BTreeMap<String, String>>;

enum Next {
    Call(&'static str, Value),
    Final(String),
}

fn fail(what: impl std::fmt::Display) -> Next {
    Next::Final(format!("status=failed {what}"))
}

/// Payload of a `{ok, payload, error}` tool result, or its error text.
fn unwrap_result(v: Value) -> Result<Value, String> {
    if v.get("ok").and_then(Value::as_bool) == Some(true) {
        return Ok(v.get("payload").cloned().unwrap_or(Value::Null));
    }
    let err = v.get("error").cloned().unwrap_or(Value::Null);
    Err(match err {
        Value::String(s) => s,
        Value::Object(o) => o
            .get("message")
            .and_then(Value::as_str)
            .unwrap_or("error")
            .to_string(),
        other => other.to_string(),
    })
}

/// Result of this activation's latest own call to `tool` (restricted to
/// calls on `domain` when given).
fn result(v: &PolicyView, tool: &str, domain: Option<&str>) -> Option<Result<Value, String>> {
    result_since(v, tool, domain, 0)
}

/// Position in the activation of the latest own call to `tool`.
fn call_position(v: &PolicyView, tool: &str, domain: Option<&str>) -> Option<usize> {
    let me = v.agent.id.as_str();
    v.activation()
        .iter()
        .enumerate()
        .filter(|(_, m)| m.role == Role::Assistant && m.name.as_deref() == Some(me))
        .filter(|(_, m)| {
            m.tool_calls.iter().any(|c| {
                c.name == tool
                    && domain
                        .is_none_or(|d| c.args.get("domain").and_then(Value::as_str) == Some(d))
            })
        })
        .map(|(i, _)| i)
        .next_back()
}

/// Like [`result`], ignoring calls issued before message `since`.
fn result_since(
    v: &PolicyView,
    tool: &str,
    domain: Option<&str>,
    since: usize,
) -> Option<Result<Value, String>> {
    let act = v.activation();
    let me = v.agent.id.as_str();
    let call = act
        .iter()
        .skip(since)
        .filter(|m| m.role == Role::Assistant && m.name.as_deref() == Some(me))
        .flat_map(|m| &m.tool_calls)
        .filter(|c| c.name == tool)
        .rfind(|c| {
            domain.is_none_or(|d| c.args.get("domain").and_then(Value::as_str) == Some(d))
        })?;
    let reply = act
        .iter()
        .find(|m| m.role == Role::Tool && m.tool_call_id.as_deref() == Some(call.id.as_str()));
    Some(match reply {
        None => Err("no reply".into()),
        Some(m) => unwrap_result(
            serde_json::from_str(m.text()).unwrap_or(Value::String(m.text().to_string())),
        ),
    })
}

/// Binds the payload of a finished call, or issues the call.
macro_rules! need {
    ($v:expr, $tool:expr, $domain:expr, $args:expr) => {
        match result($v, $tool, $domain) {
            None => return Next::Call($tool, $args),
            Some(Err(e)) => return fail(format!("{}: {}", $tool, e)),
            Some(Ok(p)) => p,
        }
    };
}

fn emit(v: &PolicyView, decl: Option<String>, next: Next) -> Message {
    match next {
        Next::Call(name, args) => v.act(decl, name, args),
        // The declaration must open the activation on its own line; the
        // answer follows in the next message.
        Next::Final(text) => match decl {
            Some(d) => v.said(Message::assistant(Some(d), vec![])),
            None => v.finish(text),
        },
    }
}

fn opening_declaration(v: &PolicyView) -> Option<String> {
    if v.has_spoken() {
        None
    } else {
        v.canonical_declaration()
    }
}

fn str_param(p: &Value, key: &str) -> Option<String> {
    match p.get(key)? {
        Value::String(s) => Some(s.clone()),
        Value::Null => None,
        other => Some(other.to_string()),
    }
}

/// Parses a param that carries JSON text.
fn json_param(p: &Params, key: &str) -> Value {
    p.get(key)
        .and_then(|s| serde_json::from_str(s).ok())
        .unwrap_or(Value::Null)
}

fn priors(p: &Params) -> Vec<&str> {
    let mut v: Vec<(u32, &str)> = p
        .iter()
        .filter_map(|(k, s)| Some((k.strip_prefix("prior.")?.parse().ok()?, s.as_str())))
        .collect();
    v.sort_unstable();
    v.into_iter().map(|(_, s)| s).collect()
}

/// JSON value following `key=` in `text`.
fn json_after(text: &str, key: &str) -> Option<Value> {
    let i = text.find(&format!("{key}="))?;
    let rest = &text[i + key.len() + 1..];
    serde_json::Deserializer::from_str(rest)
        .into_iter::<Value>()
        .next()?
        .ok()
}

fn word_after(text: &str, key: &str) -> Option<String> {
    let i = text.find(&format!("{key}="))?;
    let w: String = text[i + key.len() + 1..]
        .chars()
        .take_while(|c| !c.is_whitespace() && *c != ',' && *c != ';')
        .collect();
    (!w.is_empty()).then_some(w)
}

// ---------------------------------------------------------------- plans --

fn step(agent: &str, description: &str, params: &[(&str, String)]) -> Value {
    let params: BTreeMap<&str, &String> = params.iter().map(|(k, v)| (*k, v)).collect();
    json!({"description": description, "assigned_agent": agent, "params": params})
}

/// Plan template for a request; `p` is the goal's parameter object or a
/// delegated handoff's params.
fn plan_for(p: &Value) -> Option<(String, Vec<Value>)> {
    let ticket = str_param(p, "ticket").unwrap_or_default();
    let t = ("ticket", ticket.clone());
    let traffic = |action: &str| {
        vec![
            ("action", action.to_string()),
            ("workload", str_param(p, "workload").unwrap_or_default()),
            ("epoch", str_param(p, "epoch").unwrap_or_default()),
            ("seed", str_param(p, "seed").unwrap_or_default()),
            t.clone(),
        ]
    };
    let act = |a: &str| vec![("action", a.to_string()), t.clone()];
    let (a, b) = (AgentIds::BACKBONE_A, AgentIds::BACKBONE_B);
    let kind = str_param(p, "plan").or_else(|| str_param(p, "task"))?;
    let steps = match kind.as_str() {
        "task1" => vec![
            step(
                AgentIds::RESOURCE_ALLOCATOR,
                "Generate and assess this epoch's demands",
                &traffic("assess"),
            ),
            step(
                AgentIds::RESOURCE_ALLOCATOR,
                "Allocate, check and commit intra-DC resources",
                &traffic("commit"),
            ),
        ],
        "task2" => {
            let mut establish = vec![("plan", "establish".to_string()), t.clone()];
            for k in ["src", "dst", "gbps"] {
                establish.push((k, str_param(p, k).unwrap_or_default()));
            }
            vec![
                step(
                    AgentIds::RESOURCE_ALLOCATOR,
                    "Check whether local resources can serve the epoch",
                    &traffic("assess"),
                ),
                step(
                    AgentIds::BACKBONE_PLANNER,
                    "Establish a backbone wavelength between the DCI sites",
                    &establish,
                ),
            ]
        }
        "establish" => vec![
            step(a, "List free channels in domain A", &act("channels")),
            step(b, "List free channels in domain B", &act("channels")),
            step(
                a,
                "Configure the domain-A end transponder",
                &act("configure"),
            ),
            step(
                b,
                "Configure the domain-B end transponder",
                &act("configure"),
            ),
            step(b, "Verify received power and OSNR", &act("verify")),
        ],
        "task3" => vec![
            step(
                AgentIds::FAILURE_HANDLER,
                "Detect, classify and localize the intra-DC failure",
                &act("diagnose"),
            ),
            step(
                AgentIds::RESOURCE_ALLOCATOR,
                "Reroute flows off the failed link and commit",
                &act("reroute"),
            ),
        ],
        "task4" => vec![
            step(
                a,
                "Collect domain-A amplifier monitors and alarms",
                &act("monitors"),
            ),
            step(
                b,
                "Collect domain-B amplifier monitors and alarms",
                &act("monitors"),
            ),
            step(
                AgentIds::RETRIEVER,
                "Retrieve troubleshooting guidance for the symptoms",
                &act("retrieve"),
            ),
            step(
                AgentIds::FAILURE_HANDLER,
                "Classify and localize the failure across domains",
                &act("localize"),
            ),
        ],
        _ => return None,
    };
    Some((format!("{kind} {ticket}").trim().to_string(), steps))
}

/// The planner's table after its latest mutation.
fn latest_table(v: &PolicyView) -> Option<PlanTable> {
    v.history
        .iter()
        .rev()
        .filter(|m| {
            m.role == Role::Tool
                && matches!(m.name.as_deref(), Some("create_plan" | "advance_plan"))
        })
        .find_map(|m| {
            let p = unwrap_result(serde_json::from_str(m.text()).ok()?).ok()?;
            serde_json::from_value(p).ok()
        })
}

/// Step id of the planner's latest `start` dispatch.
fn last_started(v: &PolicyView) -> Option<u64> {
    v.history
        .iter()
        .rev()
        .filter(|m| m.role == Role::Tool && m.name.as_deref() == Some("next_action"))
        .find_map(|m| {
            let p = unwrap_result(serde_json::from_str(m.text()).ok()?).ok()?;
            (p["action"] == "start")
                .then(|| p["step_id"].as_u64())
                .flatten()
        })
}

/// Agent that delegated this planner's request to it.
fn requester(v: &PolicyView) -> Option<String> {
    let me = &v.agent.id;
    let (i, call_id) = v.history.iter().enumerate().find_map(|(i, m)| {
        let h = crate::coi::read_delivery(m.text())
            .ok()
            .filter(|_| m.role == Role::Tool)?;
        (h.to == *me && h.param(STATUS).is_none()).then(|| (i, m.tool_call_id.clone()))
    })?;
    let call_id = call_id?;
    v.history[..i]
        .iter()
        .rev()
        .find(|m| m.tool_calls.iter().any(|c| c.id == call_id))
        .and_then(|m| m.name.clone())
}

fn planner_policy(names: Names) -> ScriptedPolicy {
    ScriptedPolicy::new("planner").rule("orchestrate", move |v| {
        let input = v.input()?;
        let decl = opening_declaration(v);
        let next = planner_next(v, input, &names);
        Some(emit(v, decl, next))
    })
}

fn planner_next(v: &PolicyView, input: &Message, names: &Names) -> Next {
    let create = |p: &Value| match plan_for(p) {
        Some((goal, steps)) => Next::Call("create_plan", json!({"goal": goal, "steps": steps})),
        None => fail("no plan template for the request"),
    };
    let Some(last) = v.last_tool() else {
        if input.role == Role::User {
            return match goal_parameters(input.text()) {
                Some(p) => create(&p),
                // A restart: carry on with the existing table.
                None => Next::Call("next_action", json!({})),
            };
        }
        let Some(h) = v.delivery() else {
            return fail("unreadable handoff");
        };
        return match h.param(STATUS) {
            Some(status) => match last_started(v) {
                Some(step_id) => Next::Call(
                    "advance_plan",
                    json!({
                        "step_id": step_id,
                        "status": if status == "done" { "done" } else { "failed" },
                        "summary": h.param(SUMMARY).unwrap_or(""),
                    }),
                ),
                None => fail("result for a step that was never started"),
            },
            None => create(&json!(h.params)),
        };
    };
    let tool = last.name.as_deref().unwrap_or("");
    let payload = match unwrap_result(serde_json::from_str(last.text()).unwrap_or(Value::Null)) {
        Ok(p) => p,
        Err(e) => return fail(format!("{tool}: {e}")),
    };
    match tool {
        "create_plan" | "advance_plan" => Next::Call("next_action", json!({})),
        "next_action" => match payload["action"].as_str() {
            Some("start") => {
                let to = payload["agent"].as_str().unwrap_or_default();
                let name = names.get(to).map_or(to, String::as_str);
                Next::Call(
                    "handoff",
                    json!({
                        "to": to,
                        "greeting": format!("Hello {name}, please take step {}.", payload["step_id"]),
                        "query": payload["description"],
                        "params": payload["params"],
                    }),
                )
            }
            Some("replan") => Next::Call("next_action", json!({})),
            Some("finish") => {
                let complete = payload["complete"].as_bool() == Some(true);
                let table = latest_table(v);
                let (done, total) = table
                    .as_ref()
                    .map_or((0, 0), |t| (t.done_count(), t.steps.len()));
                let last_summary = table
                    .as_ref()
                    .and_then(|t| t.steps.iter().rev().find_map(|s| s.result_summary.clone()))
                    .unwrap_or_default();
                let status = if complete { "done" } else { "failed" };
                let summary = format!(
                    "status={status} plan {} ({done}/{total} steps done). {last_summary}",
                    if complete { "complete" } else { "incomplete" }
                );
                if v.goal().is_some() {
                    return Next::Final(summary);
                }
                match requester(v) {
                    Some(to) => {
                        let name = names.get(&to).cloned().unwrap_or_else(|| to.clone());
                        Next::Call(
                            "handoff",
                            json!({
                                "to": to,
                                "greeting": format!("Hello {name}, your request is finished."),
                                "query": "Completion of the delegated request.",
                                "params": {STATUS: status, SUMMARY: summary},
                            }),
                        )
                    }
                    None => Next::Final(summary),
                }
            }
            _ => fail(format!("unexpected dispatch {payload}")),
        },
        other => fail(format!("unexpected result from {other}")),
    }
}

// ---------------------------------------------------------- task agents --

#[derive(Clone, Copy)]
enum Duty {
    Allocator,
    FailureHandler,
    Backbone(&'static str),
    Retriever,
    Metro,
}

fn task_next(role: Duty, v: &PolicyView, p: &Params) -> Next {
    let action = p.get("action").map_or("", String::as_str);
    match role {
        Duty::Allocator => allocator(v, p, action),
        Duty::FailureHandler => failure_handler(v, p, action),
        Duty::Backbone(domain) => backbone(v, p, action, domain),
        Duty::Retriever => {
            let r = need!(v, "retrieve", None, json!({"query": TASK4_QUERY, "k": 3}));
            let docs: Vec<&str> = r["hits"]
                .as_array()
                .map(|h| h.iter().filter_map(|h| h["doc_id"].as_str()).collect())
                .unwrap_or_default();
            if docs.is_empty() {
                return fail("no relevant documents");
            }
            Next::Final(format!("status=done docs={}", docs.join(",")))
        }
        Duty::Metro => fail(format!("no procedure for `{action}`")),
    }
}

const INTRA: Option<&str> = Some("intra-dc");

fn demands_args(p: &Params) -> Value {
    json!({
        "workload": json_param(p, "workload"),
        "epoch": json_param(p, "epoch"),
        "seed": json_param(p, "seed"),
    })
}

fn allocator(v: &PolicyView, p: &Params, action: &str) -> Next {
    let allocation = match action {
        "assess" | "commit" => {
            let matrix = need!(v, "generate_demands", None, demands_args(p));
            let a = need!(v, "allocate_intra_dc", None, json!({ "matrix": matrix }));
            let feasible = a["feasible"].as_bool() == Some(true);
            if action == "assess" {
                return Next::Final(format!(
                    "status=done demand_gbps={} feasible={feasible} needs_backbone={}",
                    a["demand_gbps"], a["needs_backbone"]
                ));
            }
            if !feasible {
                return fail("allocation infeasible");
            }
            a["allocation"].clone()
        }
        "reroute" => {
            let Some(element) = priors(p).iter().find_map(|s| word_after(s, "element")) else {
                return fail("no localized element to avoid");
            };
            let r = need!(v, "reroute_flows", None, json!({ "failed": element }));
            if r["unmovable"].as_array().is_some_and(|u| !u.is_empty()) {
                return fail(format!("flows cannot leave {element}"));
            }
            r["allocation"].clone()
        }
        other => return fail(format!("no procedure for `{other}`")),
    };
    let check = need!(
        v,
        "capacity_check",
        None,
        json!({ "allocation": allocation })
    );
    if check["violations"]
        .as_array()
        .is_some_and(|x| !x.is_empty())
    {
        return fail(format!("capacity violations {}", check["violations"]));
    }
    let applied = need!(
        v,
        "apply_allocation",
        INTRA,
        json!({"domain": "intra-dc", "allocation": allocation})
    );
    let since = call_position(v, "apply_allocation", INTRA).unwrap_or(0);
    let topo = match result_since(v, "get_topology", INTRA, since) {
        None => return Next::Call("get_topology", json!({"domain": "intra-dc"})),
        Some(Err(e)) => return fail(format!("get_topology: {e}")),
        Some(Ok(t)) => t,
    };
    if topo["allocation"]["loads"] != applied["loads"] {
        return fail("read-back differs from the applied allocation");
    }
    Next::Final(format!(
        "status=done committed_flows={} read-back verified",
        applied["committed_flows"]
    ))
}

fn failure_handler(v: &PolicyView, p: &Params, action: &str) -> Next {
    let anomalies: Vec<Value> = match action {
        "diagnose" => {
            let alarms = need!(v, "list_alarms", INTRA, json!({"domain": "intra-dc"}));
            vec![alarms["anomaly"].clone()]
        }
        "localize" => priors(p)
            .iter()
            .filter_map(|s| json_after(s, "anomaly"))
            .collect(),
        other => return fail(format!("no procedure for `{other}`")),
    };
    if anomalies.iter().all(Value::is_null) {
        return fail("no anomaly reported");
    }
    let class = need!(
        v,
        "classify_failure",
        None,
        json!({ "anomalies": anomalies })
    );
    let at = need!(
        v,
        "localize_failure",
        None,
        json!({ "anomalies": anomalies })
    );
    Next::Final(format!(
        "status=done class={} element={}",
        class["label"].as_str().unwrap_or("unknown"),
        at["element"].as_str().unwrap_or("unknown")
    ))
}

fn chosen_channel(p: &Params) -> Option<u64> {
    let priors = priors(p);
    if let Some(ch) = priors
        .iter()
        .find_map(|s| word_after(s, "channel")?.parse().ok())
    {
        return Some(ch);
    }
    let mut lists = priors.iter().filter_map(|s| json_after(s, "free"));
    let first: Vec<u64> = lists
        .next()?
        .as_array()?
        .iter()
        .filter_map(Value::as_u64)
        .collect();
    let common: Vec<u64> = lists.fold(first, |acc, l| {
        let l: Vec<u64> = l
            .as_array()
            .map(|a| a.iter().filter_map(Value::as_u64).collect())
            .unwrap_or_default();
        acc.into_iter().filter(|c| l.contains(c)).collect()
    });
    common.into_iter().min()
}

fn idle_transponders(channels: &Value) -> Vec<String> {
    channels["transponders"]
        .as_array()
        .map(|ts| {
            ts.iter()
                .filter(|t| t["channel"].is_null())
                .filter_map(|t| t["id"].as_str().map(str::to_string))
                .collect()
        })
        .unwrap_or_default()
}

fn backbone(v: &PolicyView, p: &Params, action: &str, domain: &'static str) -> Next {
    let d = Some(domain);
    match action {
        "monitors" => {
            let m = need!(v, "get_monitors", d, json!({ "domain": domain }));
            let alarms = need!(v, "list_alarms", d, json!({ "domain": domain }));
            Next::Final(format!(
                "status=done readings={} anomaly={}",
                m["readings"].as_array().map_or(0, Vec::len),
                alarms["anomaly"]
            ))
        }
        "channels" => {
            let c = need!(v, "list_channels", d, json!({ "domain": domain }));
            Next::Final(format!(
                "status=done idle={} free={}",
                json!(idle_transponders(&c)),
                c["free"]
            ))
        }
        "configure" => {
            let Some(ch) = chosen_channel(p) else {
                return fail("no channel free in every domain");
            };
            let c = need!(v, "list_channels", d, json!({ "domain": domain }));
            let Some(id) = idle_transponders(&c).into_iter().next() else {
                return fail("no idle transponder");
            };
            let t = need!(
                v,
                "configure_transponder",
                d,
                json!({"domain": domain, "id": id, "channel": ch, "rate": WAVELENGTH_RATE_GBPS})
            );
            Next::Final(format!(
                "status=done configured {} channel={ch}",
                t["id"].as_str().unwrap_or(&id)
            ))
        }
        "verify" => {
            let Some(ch) = chosen_channel(p) else {
                return fail("no configured channel to verify");
            };
            let q = need!(
                v,
                "get_link_quality",
                d,
                json!({"domain": domain, "link": format!("ch{ch}")})
            );
            need!(v, "get_monitors", d, json!({ "domain": domain }));
            let osnr = q["osnr_db"].as_f64().unwrap_or(f64::NEG_INFINITY);
            let status = if osnr >= MIN_OSNR_DB {
                "done"
            } else {
                "failed"
            };
            Next::Final(format!(
                "status={status} channel={ch} osnr_db={osnr:.2} power_dbm={:.2}",
                q["channel_power_dbm"].as_f64().unwrap_or(f64::NAN)
            ))
        }
        other => fail(format!("no procedure for `{other}`")),
    }
}

fn task_policy(role: Duty, set: PolicySet, names: Names) -> ScriptedPolicy {
    ScriptedPolicy::new("task").rule("work", move |v| {
        v.input()?;
        let delivery = v.delivery();
        let params = delivery
            .as_ref()
            .map(|h| h.params.clone())
            .unwrap_or_default();
        if set == PolicySet::IdentityDropping {
            let content = v.input().map_or("", Message::text);
            if fnv1a(content.as_bytes()).is_multiple_of(3) {
                // Answers as the agent that handed off, reaching for its tools.
                if !v.has_spoken() {
                    let sender = v
                        .sender_name()
                        .map(str::to_string)
                        .or_else(|| v.sender_id().and_then(|s| names.get(s).cloned()))
                        .unwrap_or_else(|| "Planner".into());
                    return Some(v.act(
                        Some(declaration(&sender, &sender)),
                        "create_plan",
                        json!({"goal": "handle the request", "steps": []}),
                    ));
                }
                return Some(v.finish("status=done request handled"));
            }
        }
        let decl = opening_declaration(v);
        Some(emit(v, decl, task_next(role, v, &params)))
    })
}

// --------------------------------------------------------- single agent --

fn operator_policy(set: PolicySet) -> ScriptedPolicy {
    ScriptedPolicy::new("operator").rule("operate", move |v| {
        let goal = v.goal()?;
        let p = goal_parameters(goal)?;
        let next =
            if set == PolicySet::Overwhelmed && v.tool_output_chars() > OVERWHELM_BUDGET_CHARS {
                Next::Final(format!("status=done {}", operator_conclusion(v)))
            } else {
                operator_next(v, &p, set)
            };
        Some(emit(v, None, next))
    })
}

/// What the operator can conclude from the results it has so far.
fn operator_conclusion(v: &PolicyView) -> String {
    match result(v, "localize_failure", None) {
        Some(Ok(at)) => format!("element={}", at["element"].as_str().unwrap_or("unknown")),
        _ => "investigation inconclusive".to_string(),
    }
}

fn operator_next(v: &PolicyView, p: &Value, set: PolicySet) -> Next {
    let me = v.agent.id.as_str();
    let Some((goal, steps)) = plan_for(p) else {
        return fail("no procedure for the request");
    };
    let steps: Vec<Value> = steps
        .into_iter()
        .map(|mut s| {
            s["assigned_agent"] = json!(me);
            s
        })
        .collect();
    need!(
        v,
        "create_plan",
        None,
        json!({"goal": goal, "steps": steps})
    );
    if set == PolicySet::Overwhelmed {
        // Pull every domain's full view first.
        for domain in ["backbone-A", "backbone-B", "dci-metro", "intra-dc"] {
            need!(v, "get_topology", Some(domain), json!({ "domain": domain }));
        }
    }
    let params: Params = ["workload", "epoch", "seed"]
        .into_iter()
        .filter_map(|k| Some((k.to_string(), str_param(p, k)?)))
        .collect();
    let task = str_param(p, "task").unwrap_or_default();
    match task.as_str() {
        "task1" => {
            let matrix = need!(v, "generate_demands", None, demands_args(&params));
            let a = need!(v, "allocate_intra_dc", None, json!({ "matrix": matrix }));
            if a["feasible"].as_bool() != Some(true) {
                return fail("allocation infeasible");
            }
            commit(v, &a["allocation"])
        }
        "task2" => {
            let matrix = need!(v, "generate_demands", None, demands_args(&params));
            let a = need!(v, "allocate_intra_dc", None, json!({ "matrix": matrix }));
            if a["needs_backbone"].as_bool() != Some(true) {
                return commit(v, &a["allocation"]);
            }
            let ca = need!(
                v,
                "list_channels",
                Some("backbone-A"),
                json!({"domain": "backbone-A"})
            );
            let cb = need!(
                v,
                "list_channels",
                Some("backbone-B"),
                json!({"domain": "backbone-B"})
            );
            let mut free = Params::new();
            free.insert("prior.1".into(), format!("free={}", ca["free"]));
            free.insert("prior.2".into(), format!("free={}", cb["free"]));
            let Some(ch) = chosen_channel(&free) else {
                return fail("no common free channel");
            };
            for (domain, c) in [("backbone-A", &ca), ("backbone-B", &cb)] {
                let Some(id) = idle_transponders(c).into_iter().next() else {
                    return fail(format!("no idle transponder in {domain}"));
                };
                need!(
                    v,
                    "configure_transponder",
                    Some(domain),
                    json!({"domain": domain, "id": id, "channel": ch, "rate": WAVELENGTH_RATE_GBPS})
                );
            }
            let q = need!(
                v,
                "get_link_quality",
                Some("backbone-B"),
                json!({"domain": "backbone-B", "link": format!("ch{ch}")})
            );
            Next::Final(format!(
                "status=done wavelength established channel={ch} osnr_db={:.2}",
                q["osnr_db"].as_f64().unwrap_or(f64::NAN)
            ))
        }
        "task3" => {
            let alarms = need!(v, "list_alarms", INTRA, json!({"domain": "intra-dc"}));
            let anomalies = json!([alarms["anomaly"]]);
            need!(
                v,
                "classify_failure",
                None,
                json!({ "anomalies": anomalies })
            );
            let at = need!(
                v,
                "localize_failure",
                None,
                json!({ "anomalies": anomalies })
            );
            let element = at["element"].as_str().unwrap_or_default();
            let r = need!(v, "reroute_flows", None, json!({ "failed": element }));
            commit(v, &r["allocation"])
        }
        "task4" => {
            let a = Some("backbone-A");
            let b = Some("backbone-B");
            let ma = need!(v, "get_monitors", a, json!({"domain": "backbone-A"}));
            let la = need!(v, "list_alarms", a, json!({"domain": "backbone-A"}));
            if set == PolicySet::Overwhelmed {
                // Reads the guide mid-survey and loses track of domain B:
                // concludes from domain A's evidence alone.
                need!(v, "retrieve", None, json!({"query": TASK4_QUERY, "k": 3}));
                let anomalies = json!([la["anomaly"]]);
                let class = need!(
                    v,
                    "classify_failure",
                    None,
                    json!({ "anomalies": anomalies })
                );
                let at = need!(
                    v,
                    "localize_failure",
                    None,
                    json!({ "anomalies": anomalies })
                );
                let _ = ma;
                return Next::Final(format!(
                    "status=done class={} element={}",
                    class["label"].as_str().unwrap_or("unknown"),
                    at["element"].as_str().unwrap_or("unknown")
                ));
            }
            let mb = need!(v, "get_monitors", b, json!({"domain": "backbone-B"}));
            let lb = need!(v, "list_alarms", b, json!({"domain": "backbone-B"}));
            need!(v, "retrieve", None, json!({"query": TASK4_QUERY, "k": 3}));
            let _ = (ma, mb);
            let anomalies = json!([la["anomaly"], lb["anomaly"]]);
            let class = need!(
                v,
                "classify_failure",
                None,
                json!({ "anomalies": anomalies })
            );
            let at = need!(
                v,
                "localize_failure",
                None,
                json!({ "anomalies": anomalies })
            );
            Next::Final(format!(
                "status=done class={} element={}",
                class["label"].as_str().unwrap_or("unknown"),
                at["element"].as_str().unwrap_or("unknown")
            ))
        }
        other => fail(format!("no procedure for `{other}`")),
    }
}

fn commit(v: &PolicyView, allocation: &Value) -> Next {
    let check = need!(
        v,
        "capacity_check",
        None,
        json!({ "allocation": allocation })
    );
    if check["violations"]
        .as_array()
        .is_some_and(|x| !x.is_empty())
    {
        return fail("capacity violations");
    }
    let applied = need!(
        v,
        "apply_allocation",
        INTRA,
        json!({"domain": "intra-dc", "allocation": allocation})
    );
    let since = call_position(v, "apply_allocation", INTRA).unwrap_or(0);
    let topo = match result_since(v, "get_topology", INTRA, since) {
        None => return Next::Call("get_topology", json!({"domain": "intra-dc"})),
        Some(Err(e)) => return fail(format!("get_topology: {e}")),
        Some(Ok(t)) => t,
    };
    if topo["allocation"]["loads"] != applied["loads"] {
        return fail("read-back differs from the applied allocation");
    }
    Next::Final(format!(
        "status=done committed_flows={}",
        applied["committed_flows"]
    ))
}

/// Scripted backend with one policy per agent registered in `mode`.
pub fn scripted_backend(mode: Mode, set: PolicySet) -> ScriptedBackend {
    let specs = agent_specs(mode);
    let names: Names = Arc::new(
        specs
            .values()
            .map(|s| (s.id.to_string(), s.identity_name.clone()))
            .collect(),
    );
    let mut backend = ScriptedBackend::new();
    for id in specs.keys() {
        let policy = match id.as_str() {
            AgentIds::PLANNER | AgentIds::BACKBONE_PLANNER => planner_policy(names.clone()),
            AgentIds::OPERATOR => operator_policy(set),
            AgentIds::RESOURCE_ALLOCATOR => task_policy(Duty::Allocator, set, names.clone()),
            AgentIds::FAILURE_HANDLER => task_policy(Duty::FailureHandler, set, names.clone()),
            AgentIds::BACKBONE_A => task_policy(Duty::Backbone("backbone-A"), set, names.clone()),
            AgentIds::BACKBONE_B => task_policy(Duty::Backbone("backbone-B"), set, names.clone()),
            AgentIds::RETRIEVER => task_policy(Duty::Retriever, set, names.clone()),
            _ => task_policy(Duty::Metro, set, names.clone()),
        };
        backend = backend.with(id.clone(), policy);
    }
    backend
}
