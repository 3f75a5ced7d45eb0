use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{
    enforce_isolation, Decision, IsolationPolicy, RpcError, RpcErrorCode, RpcRequest, RpcResponse,
    Verb, World,
};
use crate::domain::{AgentId, DomainId};
use crate::failure::{detect_anomaly, DetectionTolerance};
use crate::optical::{compute_power_profile, imdd_quality, osnr_over, ChannelKind, LineElement};
use crate::traffic::{
    capacity_check_fabric, capacity_check_metro, FlowAllocation, LightpathAssignment,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub tick: u64,
    pub caller: AgentId,
    pub domain: DomainId,
    pub verb: String,
    /// `ok` or the error code.
    pub outcome: String,
}

/// Which verbs each domain controller serves.
pub fn verb_supported(domain: DomainId, verb: Verb) -> bool {
    use Verb::*;
    match domain {
        DomainId::BackboneA | DomainId::BackboneB => !matches!(verb, ApplyAllocation),
        DomainId::DciMetro => matches!(verb, ListAlarms | ApplyAllocation | GetTopology),
        DomainId::IntraDc => matches!(
            verb,
            ListAlarms | ApplyAllocation | GetLinkQuality | GetTopology
        ),
    }
}

/// The four domain controllers over one world, plus the audit log.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ControlPlane {
    pub world: World,
    pub policy: IsolationPolicy,
    pub tolerance: DetectionTolerance,
    pub audit: Vec<AuditEntry>,
}

type RpcResult = Result<Value, RpcError>;

fn err(code: RpcErrorCode, msg: impl Into<String>) -> RpcError {
    RpcError::new(code, msg)
}

fn arg<'a>(args: &'a Map<String, Value>, key: &str) -> Result<&'a Value, RpcError> {
    args.get(key).ok_or_else(|| {
        err(
            RpcErrorCode::InvalidArgs,
            format!("missing argument `{key}`"),
        )
    })
}

fn arg_str<'a>(args: &'a Map<String, Value>, key: &str) -> Result<&'a str, RpcError> {
    arg(args, key)?.as_str().ok_or_else(|| {
        err(
            RpcErrorCode::InvalidArgs,
            format!("`{key}` must be a string"),
        )
    })
}

fn arg_u64(args: &Map<String, Value>, key: &str) -> Result<u64, RpcError> {
    arg(args, key)?.as_u64().ok_or_else(|| {
        err(
            RpcErrorCode::InvalidArgs,
            format!("`{key}` must be a non-negative integer"),
        )
    })
}

/// Channel argument given as `7` or `"ch7"`.
fn arg_channel(args: &Map<String, Value>, key: &str) -> Result<u8, RpcError> {
    let v = arg(args, key)?;
    let n = match v {
        Value::Number(n) => n.as_u64(),
        Value::String(s) => s.trim_start_matches("ch").parse().ok(),
        _ => None,
    };
    n.and_then(|n| u8::try_from(n).ok()).ok_or_else(|| {
        err(
            RpcErrorCode::InvalidArgs,
            format!("`{key}` must be a channel index"),
        )
    })
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("controller payloads serialize")
}

impl ControlPlane {
    pub fn new(world: World, policy: IsolationPolicy) -> Self {
        ControlPlane {
            world,
            policy,
            tolerance: DetectionTolerance::default(),
            audit: Vec::new(),
        }
    }

    /// Dispatches one request to the controller of `domain` on behalf of
    /// `caller`. Every call, allowed or not, is appended to the audit log.
    pub fn rpc_call(
        &mut self,
        domain: DomainId,
        caller: &AgentId,
        req: &RpcRequest,
    ) -> RpcResponse {
        let result = self.dispatch(domain, caller, req);
        let outcome = match &result {
            Ok(_) => "ok".to_string(),
            Err(e) => e.code.as_str().to_string(),
        };
        self.audit.push(AuditEntry {
            tick: self.world.tick,
            caller: caller.clone(),
            domain,
            verb: req.verb.clone(),
            outcome,
        });
        match result {
            Ok(v) => RpcResponse::success(v),
            Err(e) => RpcResponse::failure(e),
        }
    }

    fn dispatch(&mut self, domain: DomainId, caller: &AgentId, req: &RpcRequest) -> RpcResult {
        if let Decision::Deny(reason) = enforce_isolation(caller, domain, &self.policy) {
            return Err(err(
                RpcErrorCode::AccessDenied,
                format!(
                    "{caller} may not access {domain} ({})",
                    to_value(&reason).as_str().unwrap_or("")
                ),
            ));
        }
        let verb: Verb = req
            .verb
            .parse()
            .map_err(|v| err(RpcErrorCode::UnsupportedVerb, format!("unknown verb `{v}`")))?;
        if !verb_supported(domain, verb) {
            return Err(err(
                RpcErrorCode::UnsupportedVerb,
                format!("{domain} does not serve `{verb}`"),
            ));
        }
        let args = &req.args;
        let out = match verb {
            Verb::GetMonitors => self.get_monitors(domain),
            Verb::ListChannels => self.list_channels(domain),
            Verb::SetChannel => self.set_channel(args),
            Verb::ConfigureTransponder => self.configure_transponder(domain, args),
            Verb::ListAlarms => self.list_alarms(domain),
            Verb::ApplyAllocation => self.apply_allocation(domain, args),
            Verb::GetLinkQuality => self.get_link_quality(domain, args),
            Verb::GetTopology => Ok(self.get_topology(domain)),
        }?;
        if verb.is_state_changing() {
            self.world.advance_tick();
        }
        Ok(out)
    }

    fn get_monitors(&self, domain: DomainId) -> RpcResult {
        let bb = &self.world.network.backbone;
        let readings: Vec<_> = compute_power_profile(bb)
            .into_iter()
            .filter(|r| bb.owner_of(r.element_id.as_str()) == Some(domain))
            .collect();
        Ok(json!({ "domain": domain, "tick": self.world.tick, "readings": readings }))
    }

    fn list_channels(&self, domain: DomainId) -> RpcResult {
        let bb = &self.world.network.backbone;
        let channels: Vec<Value> = bb
            .channels
            .iter()
            .map(|c| {
                json!({
                    "index": c.index,
                    "kind": c.kind,
                    "bitrate_gbps": c.bitrate_gbps,
                    "baud_gbd": c.baud_gbd,
                    "lit": c.lit,
                    "launch_power_dbm": c.launch_power_dbm,
                    "dummy_loading": c.dummy_loading,
                })
            })
            .collect();
        let transponders: Vec<_> = bb
            .transponders
            .iter()
            .filter(|t| t.domain == domain)
            .collect();
        Ok(json!({
            "domain": domain,
            "channels": channels,
            "free": bb.free_channels(),
            "transponders": transponders,
        }))
    }

    fn set_channel(&mut self, args: &Map<String, Value>) -> RpcResult {
        let index = arg_channel(args, "index")?;
        let on = match arg_str(args, "state")? {
            "on" => true,
            "off" => false,
            other => {
                return Err(err(
                    RpcErrorCode::InvalidArgs,
                    format!("state must be on|off, got `{other}`"),
                ))
            }
        };
        let bb = &mut self.world.network.backbone;
        let ch = bb
            .channels
            .iter_mut()
            .find(|c| c.index == index)
            .ok_or_else(|| err(RpcErrorCode::NotFound, format!("channel {index}")))?;
        if ch.kind == ChannelKind::Live {
            return Err(err(
                RpcErrorCode::Rejected,
                format!("channel {index} is live; its power follows the transponder"),
            ));
        }
        ch.dummy_loading = on;
        bb.refresh_channels();
        Ok(to_value(bb.channel(index).expect("channel exists")))
    }

    fn configure_transponder(&mut self, domain: DomainId, args: &Map<String, Value>) -> RpcResult {
        let id = arg_str(args, "id")?;
        let channel = match args.get("channel") {
            None | Some(Value::Null) => None,
            Some(_) => Some(arg_channel(args, "channel")?),
        };
        let rate = match args.get("rate") {
            None | Some(Value::Null) => None,
            Some(_) => {
                let r = arg_u64(args, "rate")?;
                if r != 200 && r != 400 {
                    return Err(err(
                        RpcErrorCode::InvalidArgs,
                        format!("rate must be 200 or 400, got {r}"),
                    ));
                }
                Some(r as u32)
            }
        };
        if channel.is_some() && rate.is_none() {
            return Err(err(
                RpcErrorCode::InvalidArgs,
                "a tuned transponder needs a rate",
            ));
        }
        let bb = &mut self.world.network.backbone;
        let t = bb
            .transponder(id)
            .filter(|t| t.domain == domain)
            .ok_or_else(|| {
                err(
                    RpcErrorCode::NotFound,
                    format!("transponder `{id}` in {domain}"),
                )
            })?;
        let tid = t.id.clone();
        if let Some(ch) = channel {
            if bb.channel(ch).is_none() {
                return Err(err(RpcErrorCode::NotFound, format!("channel {ch}")));
            }
            if bb
                .transponders
                .iter()
                .any(|o| o.id != tid && o.domain == domain && o.channel == Some(ch))
            {
                return Err(err(
                    RpcErrorCode::Rejected,
                    format!("channel {ch} already terminates on another {domain} transponder"),
                ));
            }
        }
        let t = bb.transponder_mut(id).expect("checked above");
        t.channel = channel;
        t.rate_gbps = if channel.is_some() { rate } else { None };
        bb.refresh_channels();
        Ok(to_value(bb.transponder(id).expect("exists")))
    }

    fn list_alarms(&self, domain: DomainId) -> RpcResult {
        let anomaly = detect_anomaly(
            &self.world.observation(domain),
            &self.world.baseline_observation(domain),
            &self.tolerance,
        )
        .map_err(|e| err(RpcErrorCode::Rejected, e.to_string()))?;
        Ok(json!({ "domain": domain, "anomaly": anomaly }))
    }

    fn apply_allocation(&mut self, domain: DomainId, args: &Map<String, Value>) -> RpcResult {
        match domain {
            DomainId::IntraDc => {
                let alloc: FlowAllocation =
                    serde_json::from_value(arg(args, "allocation")?.clone())
                        .map_err(|e| err(RpcErrorCode::InvalidArgs, format!("allocation: {e}")))?;
                let alloc = self.normalize_allocation(alloc)?;
                let n = alloc.flows.len();
                self.world.commit_allocation(alloc);
                Ok(json!({ "committed_flows": n, "loads": self.world.allocation.loads }))
            }
            DomainId::DciMetro => {
                let lps: Vec<LightpathAssignment> =
                    serde_json::from_value(arg(args, "lightpaths")?.clone())
                        .map_err(|e| err(RpcErrorCode::InvalidArgs, format!("lightpaths: {e}")))?;
                self.validate_lightpaths(&lps)?;
                let n = lps.len();
                self.world.commit_lightpaths(lps);
                Ok(json!({ "committed_lightpaths": n }))
            }
            _ => unreachable!("verb support is checked before dispatch"),
        }
    }

    /// Rebuilds link vectors from the fabric and loads from the flows, and
    /// rejects anything inconsistent or over capacity.
    fn normalize_allocation(&self, mut alloc: FlowAllocation) -> Result<FlowAllocation, RpcError> {
        let fabric = &self.world.network.fabric;
        let invalid = |m: String| err(RpcErrorCode::InvalidArgs, m);
        for f in &alloc.flows {
            if f.src >= fabric.leaves
                || f.dst >= fabric.leaves
                || f.src == f.dst
                || f.spine >= fabric.spines
            {
                return Err(invalid(format!("flow {} is outside the fabric", f.id())));
            }
            if f.links
                != [
                    fabric.link_index(f.src, f.spine),
                    fabric.link_index(f.dst, f.spine),
                ]
            {
                return Err(invalid(format!(
                    "flow {} links do not match its spine",
                    f.id()
                )));
            }
            if !(f.gbps.is_finite() && f.gbps >= 0.0) {
                return Err(invalid(format!("flow {} has an invalid rate", f.id())));
            }
        }
        alloc.link_ids = fabric.links.iter().map(|l| l.id.clone()).collect();
        alloc.capacity_gbps = fabric.links.iter().map(|l| l.capacity_gbps).collect();
        alloc.loads = vec![0.0; fabric.links.len()];
        alloc.recompute_loads();
        alloc.violations = capacity_check_fabric(&alloc);
        if !alloc.violations.is_empty() {
            return Err(err(
                RpcErrorCode::Rejected,
                format!("allocation overloads {} link(s)", alloc.violations.len()),
            ));
        }
        Ok(alloc)
    }

    fn validate_lightpaths(&self, lps: &[LightpathAssignment]) -> Result<(), RpcError> {
        let metro = &self.world.network.metro;
        for lp in lps {
            let bad = |m: &str| {
                err(
                    RpcErrorCode::InvalidArgs,
                    format!("lightpath `{}`: {m}", lp.demand_id),
                )
            };
            if lp.path.len() < 2
                || lp.path.first() != Some(&lp.src)
                || lp.path.last() != Some(&lp.dst)
            {
                return Err(bad("path must run from src to dst"));
            }
            if lp.wavelength >= metro.wavelengths {
                return Err(bad("wavelength out of range"));
            }
            let mut seen = lp.path.clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != lp.path.len() {
                return Err(bad("path revisits a node"));
            }
            if lp
                .path
                .windows(2)
                .any(|w| metro.edge_index(w[0], w[1]).is_none())
            {
                return Err(bad("path uses a missing edge"));
            }
        }
        let conflicts = capacity_check_metro(metro, lps);
        if !conflicts.is_empty() {
            return Err(err(
                RpcErrorCode::Rejected,
                format!("{} wavelength conflict(s)", conflicts.len()),
            ));
        }
        Ok(())
    }

    fn get_link_quality(&self, domain: DomainId, args: &Map<String, Value>) -> RpcResult {
        match domain {
            DomainId::IntraDc => {
                let id = arg_str(args, "link")?;
                let fabric = &self.world.network.fabric;
                let i = fabric
                    .link_by_id(id)
                    .ok_or_else(|| err(RpcErrorCode::NotFound, format!("link `{id}`")))?;
                let l = &fabric.links[i];
                let q = imdd_quality(&l.imdd)
                    .map_err(|e| err(RpcErrorCode::Rejected, e.to_string()))?;
                Ok(json!({
                    "link_id": q.link_id,
                    "penalty_db": q.penalty_db,
                    "mpi_ratio_db": l.imdd.mpi_ratio_db,
                    "load_gbps": l.load_gbps,
                    "capacity_gbps": l.capacity_gbps,
                }))
            }
            _ => {
                let ch = arg_channel(args, "link")?;
                let bb = &self.world.network.backbone;
                // Domain A measures at its egress; domain B holds the receiver.
                let osnr = if domain == DomainId::BackboneA {
                    osnr_over(bb, ch, |a| a.domain == DomainId::BackboneA)
                } else {
                    osnr_over(bb, ch, |_| true)
                }
                .map_err(|e| err(RpcErrorCode::Rejected, e.to_string()))?;
                let end = bb
                    .line
                    .iter()
                    .rposition(|e| match *e {
                        LineElement::Amp(i) => bb.amplifiers[i].domain == domain,
                        LineElement::Span(i) => bb.spans[i].domain == domain,
                    })
                    .map_or(0, |p| p + 1);
                let launch = bb
                    .channel(ch)
                    .expect("osnr checked the channel")
                    .launch_power_dbm;
                Ok(json!({
                    "channel": ch,
                    "osnr_db": osnr,
                    "channel_power_dbm": launch + bb.net_gain_before(end),
                }))
            }
        }
    }

    fn get_topology(&self, domain: DomainId) -> Value {
        let net = &self.world.network;
        match domain {
            DomainId::BackboneA | DomainId::BackboneB => {
                let bb = &net.backbone;
                let line: Vec<Value> = bb
                    .line
                    .iter()
                    .filter_map(|e| match *e {
                        LineElement::Span(i) if bb.spans[i].domain == domain => {
                            Some(json!({"kind": "span", "id": bb.spans[i].id}))
                        }
                        LineElement::Amp(i) if bb.amplifiers[i].domain == domain => {
                            Some(json!({"kind": "amp", "id": bb.amplifiers[i].id}))
                        }
                        _ => None,
                    })
                    .collect();
                let spans: Vec<_> = bb.spans.iter().filter(|s| s.domain == domain).collect();
                let amps: Vec<_> = bb
                    .amplifiers
                    .iter()
                    .filter(|a| a.domain == domain)
                    .collect();
                let trx: Vec<_> = bb
                    .transponders
                    .iter()
                    .filter(|t| t.domain == domain)
                    .collect();
                json!({ "domain": domain, "line": line, "spans": spans, "amplifiers": amps, "transponders": trx })
            }
            DomainId::DciMetro => {
                let m = &net.metro;
                let edges: Vec<Value> = m
                    .edges
                    .iter()
                    .map(|e| {
                        let busy = |v: &[bool]| {
                            v.iter()
                                .enumerate()
                                .filter(|(_, b)| **b)
                                .map(|(w, _)| w)
                                .collect::<Vec<_>>()
                        };
                        json!({
                            "a": m.nodes[e.a].name,
                            "b": m.nodes[e.b].name,
                            "length_km": e.length_km,
                            "busy_forward": busy(&e.forward),
                            "busy_backward": busy(&e.backward),
                        })
                    })
                    .collect();
                let nodes: Vec<_> = m.nodes.iter().map(|n| n.name.clone()).collect();
                json!({
                    "domain": domain,
                    "name": m.name,
                    "wavelengths": m.wavelengths,
                    "nodes": nodes,
                    "edges": edges,
                    "lightpaths": self.world.lightpaths,
                })
            }
            DomainId::IntraDc => {
                let f = &net.fabric;
                let links: Vec<Value> = f
                    .links
                    .iter()
                    .map(|l| {
                        json!({
                            "id": l.id, "leaf": l.leaf, "spine": l.spine,
                            "capacity_gbps": l.capacity_gbps, "load_gbps": l.load_gbps,
                        })
                    })
                    .collect();
                json!({
                    "domain": domain,
                    "leaves": f.leaves,
                    "spines": f.spines,
                    "links": links,
                    "allocation": self.world.allocation,
                })
            }
        }
    }

    /// Writes the audit log as JSON Lines.
    pub fn write_audit_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for entry in &self.audit {
            serde_json::to_writer(&mut out, entry)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane() -> ControlPlane {
        let mut p = IsolationPolicy::default();
        p.grant("a", [DomainId::BackboneA]);
        p.grant("b", [DomainId::BackboneB]);
        p.grant("dc", [DomainId::IntraDc, DomainId::DciMetro]);
        p.planner("planner");
        ControlPlane::new(World::default_world(), p)
    }

    fn call(cp: &mut ControlPlane, d: DomainId, who: &str, verb: Verb, args: Value) -> RpcResponse {
        cp.rpc_call(d, &AgentId::new(who), &RpcRequest::new(verb, args))
    }

    #[test]
    fn monitors_are_domain_scoped() {
        let mut cp = plane();
        let r = call(
            &mut cp,
            DomainId::BackboneA,
            "a",
            Verb::GetMonitors,
            json!({}),
        );
        let readings = r.payload.unwrap()["readings"].as_array().unwrap().clone();
        let mut ids: Vec<_> = readings
            .iter()
            .map(|r| r["element_id"].as_str().unwrap().to_string())
            .collect();
        ids.dedup();
        assert_eq!(ids, ["edfa1", "edfa2", "edfa3"]);
    }

    #[test]
    fn foreign_domain_denied_and_audited() {
        let mut cp = plane();
        let r = call(
            &mut cp,
            DomainId::BackboneB,
            "a",
            Verb::GetMonitors,
            json!({}),
        );
        assert_eq!(r.error_code(), Some(RpcErrorCode::AccessDenied));
        let r = call(
            &mut cp,
            DomainId::BackboneA,
            "planner",
            Verb::GetMonitors,
            json!({}),
        );
        assert_eq!(r.error_code(), Some(RpcErrorCode::AccessDenied));
        let r = call(
            &mut cp,
            DomainId::IntraDc,
            "dc",
            Verb::GetMonitors,
            json!({}),
        );
        assert_eq!(r.error_code(), Some(RpcErrorCode::UnsupportedVerb));
        let r = cp.rpc_call(
            DomainId::IntraDc,
            &AgentId::new("dc"),
            &RpcRequest {
                verb: "reboot".into(),
                args: Map::new(),
            },
        );
        assert_eq!(r.error_code(), Some(RpcErrorCode::UnsupportedVerb));
        assert_eq!(cp.audit.len(), 4);
        assert_eq!(cp.audit[0].outcome, "access-denied");
    }

    #[test]
    fn transponder_read_back() {
        let mut cp = plane();
        let r = call(
            &mut cp,
            DomainId::BackboneA,
            "a",
            Verb::ConfigureTransponder,
            json!({"id": "t1", "channel": 4, "rate": 400}),
        );
        assert!(r.ok, "{r:?}");
        assert_eq!(cp.world.tick, 1);
        let r = call(
            &mut cp,
            DomainId::BackboneA,
            "a",
            Verb::ListChannels,
            json!({}),
        );
        let p = r.payload.unwrap();
        let ch4 = &p["channels"][4];
        assert_eq!(ch4["kind"], "live");
        assert_eq!(ch4["bitrate_gbps"], 400);
        assert_eq!(p["channels"][0]["kind"], "dummy");
    }

    #[test]
    fn foreign_transponder_is_not_found() {
        let mut cp = plane();
        let r = call(
            &mut cp,
            DomainId::BackboneA,
            "a",
            Verb::ConfigureTransponder,
            json!({"id": "t4", "channel": 4, "rate": 400}),
        );
        assert_eq!(r.error_code(), Some(RpcErrorCode::NotFound));
        assert_eq!(cp.world.tick, 0);
    }

    #[test]
    fn failing_apply_is_atomic() {
        let mut cp = plane();
        let mut alloc = FlowAllocation::empty(&cp.world.network.fabric, 0);
        alloc.flows.push(crate::traffic::Flow {
            src: 0,
            dst: 1,
            gbps: 500.0,
            spine: 0,
            links: [0, 4],
        });
        let before = cp.world.clone();
        let r = call(
            &mut cp,
            DomainId::IntraDc,
            "dc",
            Verb::ApplyAllocation,
            json!({"allocation": alloc}),
        );
        assert_eq!(r.error_code(), Some(RpcErrorCode::Rejected));
        assert_eq!(cp.world, before);
        assert!(capacity_check_fabric(&cp.world.allocation).is_empty());
    }

    #[test]
    fn mpi_raises_fabric_alarm() {
        let mut cp = plane();
        cp.world
            .inject(&crate::failure::FailureSpec::Mpi {
                link_id: "dc-link-9".into(),
                ratio_db: -20.0,
            })
            .unwrap();
        let r = call(
            &mut cp,
            DomainId::IntraDc,
            "dc",
            Verb::ListAlarms,
            json!({}),
        );
        let a = &r.payload.unwrap()["anomaly"];
        assert_eq!(a["evidence"][0]["element"], "dc-link-9");
        let r = call(
            &mut cp,
            DomainId::IntraDc,
            "dc",
            Verb::GetLinkQuality,
            json!({"link": "dc-link-9"}),
        );
        let pen = r.payload.unwrap()["penalty_db"].as_f64().unwrap();
        assert!((pen - 0.8715).abs() < 1e-3);
    }

    #[test]
    fn backbone_osnr_read() {
        let mut cp = plane();
        let r = call(
            &mut cp,
            DomainId::BackboneB,
            "b",
            Verb::GetLinkQuality,
            json!({"link": "ch0"}),
        );
        let osnr = r.payload.unwrap()["osnr_db"].as_f64().unwrap();
        assert!((osnr - 24.98).abs() < 1e-2);
    }
}
