//! Post-hoc checkpoint predicates. Each is a pure function of a trial log:
//! transcripts, audit, plan revisions and the initial and final worlds.
//! Nothing an agent says about itself is taken on trust.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::registry::{isolation_policy, AgentIds};
use super::session::{SessionEnd, STATUS};
use super::trial::TrialLog;
use super::TaskId;
use crate::agent::{Role, ToolCall};
use crate::coi::read_delivery;
use crate::domain::DomainId;
use crate::optical::compute_osnr;
use crate::traffic::{capacity_check_fabric, generate_demands, DemandMatrix, FlowAllocation};

pub const MIN_OSNR_DB: f64 = 20.0;
pub const MIN_RX_POWER_DBM: f64 = -20.0;
pub const FIBER_AGING_DOC: &str = "fiber-aging-guide";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointOutcome {
    pub id: String,
    pub description: String,
    pub pass: bool,
    /// Short reason, mostly useful when the checkpoint fails.
    pub detail: String,
}

/// A tool call and its parsed reply.
struct CallRecord<'a> {
    call: &'a ToolCall,
    reply: Option<Value>,
}

impl CallRecord<'_> {
    fn payload(&self) -> Option<&Value> {
        let r = self.reply.as_ref()?;
        (r.get("ok").and_then(Value::as_bool) == Some(true)).then(|| &r["payload"])
    }

    fn domain(&self) -> Option<&str> {
        self.call.args.get("domain").and_then(Value::as_str)
    }
}

fn calls(log: &TrialLog) -> Vec<CallRecord<'_>> {
    let mut out = Vec::new();
    for a in &log.activations {
        let msgs = &a.transcript.messages;
        for m in msgs
            .iter()
            .filter(|m| m.role == Role::Assistant && m.name.as_deref() == Some(a.agent.as_str()))
        {
            for call in &m.tool_calls {
                let reply = msgs
                    .iter()
                    .find(|r| {
                        r.role == Role::Tool && r.tool_call_id.as_deref() == Some(call.id.as_str())
                    })
                    .and_then(|r| serde_json::from_str(r.text()).ok());
                out.push(CallRecord { call, reply });
            }
        }
    }
    out
}

fn ok_calls<'a>(
    records: &'a [CallRecord<'a>],
    tool: &'a str,
) -> impl Iterator<Item = (usize, &'a CallRecord<'a>)> + 'a {
    records
        .iter()
        .enumerate()
        .filter(move |(_, r)| r.call.name == tool && r.payload().is_some())
}

fn audited_ok(log: &TrialLog, domain: DomainId, verb: &str) -> bool {
    log.audit
        .iter()
        .any(|e| e.domain == domain && e.verb == verb && e.outcome == "ok")
}

fn outcome(
    id: &str,
    description: &str,
    pass: bool,
    detail: impl Into<String>,
) -> CheckpointOutcome {
    CheckpointOutcome {
        id: id.to_string(),
        description: description.to_string(),
        pass,
        detail: if pass { String::new() } else { detail.into() },
    }
}

/// Every positive demand of `matrix` is carried by a flow of equal rate.
fn covers(alloc: &FlowAllocation, matrix: &DemandMatrix) -> bool {
    matrix.demands().all(|(s, d, g)| {
        alloc
            .flows
            .iter()
            .any(|f| f.src == s && f.dst == d && (f.gbps - g).abs() <= 1e-9)
    })
}

/// Deliveries addressed to `agent`, with the activation that received them.
fn deliveries_to<'a>(
    log: &'a TrialLog,
    agent: &'a str,
) -> impl Iterator<Item = (usize, crate::coi::Handoff)> + 'a {
    log.activations
        .iter()
        .filter(move |a| a.agent.as_str() == agent)
        .filter_map(move |a| {
            let m = a
                .transcript
                .messages
                .iter()
                .find(|m| m.role == Role::Tool)?;
            let h = read_delivery(m.text()).ok()?;
            (h.to.as_str() == agent).then_some((a.index, h))
        })
}

pub fn evaluate_checkpoints(log: &TrialLog) -> Vec<CheckpointOutcome> {
    let records = calls(log);
    match log.scenario.task {
        TaskId::Task1 => task1(log, &records),
        TaskId::Task2 => task2(log),
        TaskId::Task3 => task3(log, &records),
        TaskId::Task4 => task4(log, &records),
    }
}

fn oracle_matrix(log: &TrialLog) -> Option<DemandMatrix> {
    let s = &log.scenario;
    generate_demands(&s.workload, s.epoch, s.seed).ok()
}

fn task1(log: &TrialLog, records: &[CallRecord]) -> Vec<CheckpointOutcome> {
    let oracle = oracle_matrix(log);
    let oracle_json = oracle
        .as_ref()
        .map(|m| serde_json::to_value(m).expect("matrix serializes"));
    let generated =
        ok_calls(records, "generate_demands").any(|(_, r)| r.payload() == oracle_json.as_ref());
    let ingested = ok_calls(records, "allocate_intra_dc")
        .any(|(_, r)| r.call.args.get("matrix") == oracle_json.as_ref());
    let world = &log.final_world;
    let clean = capacity_check_fabric(&world.allocation).is_empty();
    let covered = oracle
        .as_ref()
        .is_some_and(|m| covers(&world.allocation, m));
    vec![
        outcome(
            "c1",
            "epoch demands generated and ingested by the allocator",
            generated && ingested,
            format!("generated={generated} ingested={ingested}"),
        ),
        outcome(
            "c2",
            "plan created",
            !log.plan_revisions.is_empty(),
            "no plan table",
        ),
        outcome(
            "c3",
            "committed allocation carries every demand and passes capacity_check",
            clean && covered,
            format!("clean={clean} covers_demands={covered}"),
        ),
        outcome(
            "c4",
            "apply_allocation succeeded via the intra-DC controller",
            audited_ok(log, DomainId::IntraDc, "apply_allocation"),
            "no successful apply_allocation in the audit",
        ),
        readback(log, records),
    ]
}

/// A topology read after the last successful apply matches the final world.
fn readback(log: &TrialLog, records: &[CallRecord]) -> CheckpointOutcome {
    let applied = ok_calls(records, "apply_allocation")
        .filter(|(_, r)| r.domain() == Some("intra-dc"))
        .map(|(i, _)| i)
        .last();
    let expected =
        serde_json::to_value(&log.final_world.allocation).expect("allocation serializes");
    let pass = applied.is_some_and(|after| {
        ok_calls(records, "get_topology")
            .filter(|(i, r)| *i > after && r.domain() == Some("intra-dc"))
            .any(|(_, r)| r.payload().and_then(|p| p.get("allocation")) == Some(&expected))
    });
    outcome(
        "c5",
        "read-back after apply matches the committed allocation",
        pass,
        "no matching read-back",
    )
}

/// Backbone transponders that were idle initially and are tuned now.
fn new_ends(log: &TrialLog) -> Vec<(DomainId, u8, Option<u32>)> {
    let before = &log.scenario.world.network.backbone;
    log.final_world
        .network
        .backbone
        .transponders
        .iter()
        .filter(|t| t.channel.is_some())
        .filter(|t| {
            before
                .transponder(t.id.as_str())
                .is_some_and(|b| b.channel.is_none())
        })
        .map(|t| (t.domain, t.channel.expect("filtered"), t.rate_gbps))
        .collect()
}

/// Channel terminated by a newly configured transponder in both domains.
fn new_wavelength(log: &TrialLog) -> Option<u8> {
    let ends = new_ends(log);
    ends.iter()
        .filter(|(d, _, r)| *d == DomainId::BackboneA && r.is_some())
        .find(|(_, ch, _)| {
            ends.iter()
                .any(|(d, c, r)| *d == DomainId::BackboneB && c == ch && r.is_some())
        })
        .map(|(_, ch, _)| *ch)
}

fn task2(log: &TrialLog) -> Vec<CheckpointOutcome> {
    let bp = AgentIds::BACKBONE_PLANNER;
    let request = log.scenario.request.as_ref();
    let parsed = deliveries_to(log, bp).find(|(_, h)| {
        request.is_some_and(|r| {
            h.param("src") == Some(r.src.as_str())
                && h.param("dst") == Some(r.dst.as_str())
                && h.param("gbps") == Some(r.gbps.to_string().as_str())
        })
    });
    let planned = parsed.is_some() && log.plan_revisions.iter().any(|p| p.planner.as_str() == bp);

    let channel = new_wavelength(log);
    let was_free = channel.is_some_and(|ch| {
        log.scenario
            .world
            .network
            .backbone
            .free_channels()
            .contains(&ch)
    });
    let listed = audited_ok(log, DomainId::BackboneA, "list_channels")
        && audited_ok(log, DomainId::BackboneB, "list_channels");

    let bb = &log.final_world.network.backbone;
    let quality = channel.and_then(|ch| {
        let osnr = compute_osnr(bb, ch).ok()?;
        let rx = bb.channel(ch)?.launch_power_dbm + bb.net_gain_before(bb.line.len());
        Some((osnr, rx))
    });

    let returned = log.activations.iter().any(|a| {
        a.agent.as_str() == AgentIds::PLANNER
            && a.sender.as_ref().is_some_and(|s| s.as_str() == bp)
            && a.transcript
                .messages
                .iter()
                .find(|m| m.role == Role::Tool)
                .and_then(|m| read_delivery(m.text()).ok())
                .is_some_and(|h| h.param(STATUS) == Some("done"))
    });

    vec![
        outcome(
            "c1",
            "wavelength request handoff parsed by the backbone planner",
            planned,
            "no parsed request followed by a backbone plan",
        ),
        outcome(
            "c2",
            "free channel found on all four spans",
            was_free && listed,
            format!("channel={channel:?} initially_free={was_free} listed_both_domains={listed}"),
        ),
        outcome(
            "c3",
            "both end transponders configured on one channel",
            channel.is_some(),
            "no matching pair of new transponder configurations",
        ),
        outcome(
            "c4",
            "received power and OSNR meet thresholds",
            quality.is_some_and(|(osnr, rx)| osnr >= MIN_OSNR_DB && rx >= MIN_RX_POWER_DBM),
            format!("quality={quality:?}"),
        ),
        outcome(
            "c5",
            "completion handoff returned to the requester",
            returned,
            "no completion handoff",
        ),
    ]
}

fn task3(log: &TrialLog, records: &[CallRecord]) -> Vec<CheckpointOutcome> {
    let truth = log.scenario.truth.clone().unwrap_or_default();
    let link = log.final_world.network.fabric.link_by_id(&truth);
    let avoids =
        |a: &FlowAllocation| link.is_some_and(|l| a.flows.iter().all(|f| !f.links.contains(&l)));

    let detected = ok_calls(records, "list_alarms").any(|(_, r)| {
        r.domain() == Some("intra-dc") && r.payload().is_some_and(|p| !p["anomaly"].is_null())
    });
    let classified = ok_calls(records, "classify_failure")
        .any(|(_, r)| r.payload().is_some_and(|p| p["label"] == "interference"));
    let localized = ok_calls(records, "localize_failure")
        .any(|(_, r)| r.payload().is_some_and(|p| p["element"] == truth.as_str()));
    let rerouted = ok_calls(records, "reroute_flows").any(|(_, r)| {
        r.call.args.get("failed").and_then(Value::as_str) == Some(truth.as_str())
            && r.payload()
                .and_then(|p| {
                    serde_json::from_value::<FlowAllocation>(p["allocation"].clone()).ok()
                })
                .is_some_and(|a| avoids(&a))
    });

    let before = &log.scenario.world.allocation;
    let after = &log.final_world.allocation;
    let same_demands = {
        let key = |a: &FlowAllocation| -> BTreeSet<(usize, usize, u64)> {
            a.flows
                .iter()
                .map(|f| (f.src, f.dst, f.gbps.to_bits()))
                .collect()
        };
        key(before) == key(after)
    };
    let applied = audited_ok(log, DomainId::IntraDc, "apply_allocation");
    let clean = capacity_check_fabric(after).is_empty();

    vec![
        outcome(
            "c1",
            "intra-DC anomaly detected",
            detected,
            "no anomaly reported by list_alarms",
        ),
        outcome(
            "c2",
            "failure classified as interference",
            classified,
            "no interference classification",
        ),
        outcome(
            "c3",
            "failed link localized",
            localized,
            format!("expected {truth}"),
        ),
        outcome(
            "c4",
            "reroute computed avoiding the failed link",
            rerouted,
            "no reroute avoiding the link",
        ),
        outcome(
            "c5",
            "rerouted allocation applied and capacity_check clean",
            applied && clean && avoids(after) && same_demands,
            format!(
                "applied={applied} clean={clean} avoids={} all_flows_kept={same_demands}",
                avoids(after)
            ),
        ),
    ]
}

/// `spanN` tokens in `text`.
fn span_mentions(text: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut rest = text;
    while let Some(i) = rest.find("span") {
        let tail = &rest[i + 4..];
        let digits: String = tail.chars().take_while(char::is_ascii_digit).collect();
        if !digits.is_empty() {
            out.insert(format!("span{digits}"));
        }
        rest = tail;
    }
    out
}

fn task4(log: &TrialLog, records: &[CallRecord]) -> Vec<CheckpointOutcome> {
    let policy = isolation_policy(log.mode);
    let backbone = [DomainId::BackboneA, DomainId::BackboneB];
    let cross_domain = log.plan_revisions.iter().any(|rev| {
        let reach: BTreeSet<DomainId> = rev
            .table
            .steps
            .iter()
            .filter_map(|s| policy.grants.get(&s.assigned_agent))
            .flat_map(|g| g.domains.iter().copied())
            .collect();
        backbone.iter().all(|d| reach.contains(d))
    });
    let retrieved = ok_calls(records, "retrieve").any(|(_, r)| {
        r.payload()
            .and_then(|p| p["hits"].as_array())
            .is_some_and(|hits| hits.iter().any(|h| h["doc_id"] == FIBER_AGING_DOC))
    });
    let truth = log.scenario.truth.clone().unwrap_or_default();
    let named = log.final_answer.as_deref().map(span_mentions);
    let correct = log.end == SessionEnd::Final
        && named
            .as_ref()
            .is_some_and(|n| n.len() == 1 && n.contains(&truth));

    vec![
        outcome(
            "c1",
            "cross-domain plan created",
            cross_domain,
            "no plan reaching both backbone domains",
        ),
        outcome(
            "c2",
            "domain-A monitors queried",
            audited_ok(log, DomainId::BackboneA, "get_monitors"),
            "no successful get_monitors on backbone-A",
        ),
        outcome(
            "c3",
            "domain-B monitors queried",
            audited_ok(log, DomainId::BackboneB, "get_monitors"),
            "no successful get_monitors on backbone-B",
        ),
        outcome(
            "c4",
            "fiber-aging guide retrieved",
            retrieved,
            "guide not among retrieved hits",
        ),
        outcome(
            "c5",
            "FINAL answer names the aged span",
            correct,
            format!("expected {truth}, named {named:?}"),
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn span_tokens() {
        let s = span_mentions("element=span3; upstream span2 ok, spans fine, span");
        assert_eq!(
            s,
            BTreeSet::from(["span2".to_string(), "span3".to_string()])
        );
    }
}
