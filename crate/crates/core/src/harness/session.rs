use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::toolkit::Toolkit;
use crate::agent::{
    run_activation, AgentSpec, Backend, CoiMode, LoopConfig, Message, Role, Termination, ToolSpec,
    Transcript,
};
use crate::coi::{ExpectedIdentity, Handoff};
use crate::domain::AgentId;
use crate::orchestration::PlanTable;

/// One agent activation within a session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Activation {
    pub index: usize,
    pub agent: AgentId,
    /// Agent whose handoff opened the activation; `None` for the operator.
    pub sender: Option<AgentId>,
    pub transcript: Transcript,
}

/// A plan table as it stood after one of its planner's mutations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanRevision {
    pub planner: AgentId,
    pub tick: u64,
    pub table: PlanTable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionEnd {
    /// The root agent answered.
    Final,
    /// The root agent ended abnormally twice.
    RootFailed,
    ActivationCap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionOutcome {
    pub activations: Vec<Activation>,
    pub final_answer: Option<String>,
    pub end: SessionEnd,
    pub restarts: u32,
}

/// Key of the status param in results returned up the delegation stack.
pub(crate) const STATUS: &str = "status";
pub(crate) const SUMMARY: &str = "summary";

struct Pending {
    agent: AgentId,
    call_id: String,
}

pub(crate) struct Session<'a> {
    pub backend: &'a dyn Backend,
    pub tools: &'a BTreeMap<String, ToolSpec>,
    pub max_steps: usize,
    pub activation_cap: usize,
}

fn failed_status(text: &str) -> bool {
    text.contains("status=failed")
}

impl Session<'_> {
    fn tools_of(&self, agent: &AgentSpec) -> Vec<ToolSpec> {
        agent
            .tool_names
            .iter()
            .filter_map(|n| self.tools.get(n).cloned())
            .collect()
    }

    /// Runs `root` on `goal` until it answers, fails twice or the activation
    /// cap is hit. Non-root agents always return control up the stack: an
    /// answer or an abnormal end becomes a result handoff to their requester.
    pub fn run(&self, root: &AgentId, goal: &str, kit: &mut Toolkit) -> SessionOutcome {
        let mut histories: BTreeMap<AgentId, Vec<Message>> = kit
            .agents
            .values()
            .map(|a| (a.id.clone(), vec![Message::system(&a.system_prompt)]))
            .collect();
        let mut stack: Vec<Pending> = Vec::new();
        let mut activations = Vec::new();
        let mut current = root.clone();
        let mut sender: Option<AgentId> = None;
        let mut input = vec![Message::user(goal)];
        let mut restarts = 0;
        let coi = kit.coi;

        let (final_answer, end) = loop {
            if activations.len() >= self.activation_cap {
                break (None, SessionEnd::ActivationCap);
            }
            let Some(agent) = kit.agents.get(&current).cloned() else {
                break (None, SessionEnd::RootFailed);
            };
            let expected = match (&sender, coi) {
                (Some(s), CoiMode::Strict | CoiMode::Monitor) => {
                    kit.agents.get(s).map(|s| ExpectedIdentity {
                        identity: agent.identity_name.clone(),
                        sender: s.identity_name.clone(),
                    })
                }
                _ => None,
            };
            let cfg = LoopConfig {
                max_steps: self.max_steps,
                coi,
                expected,
            };
            let tools = self.tools_of(&agent);
            let history = histories
                .get_mut(&current)
                .expect("every agent has a history");
            let (transcript, transfer) = run_activation(
                &agent,
                history,
                std::mem::take(&mut input),
                self.backend,
                &tools,
                kit,
                &cfg,
            );
            let termination = transcript.termination.clone();
            let answer = transcript.final_answer().map(str::to_string);
            activations.push(Activation {
                index: activations.len(),
                agent: current.clone(),
                sender: sender.take(),
                transcript,
            });

            // Route a handoff: back to the waiting requester, or down to a
            // new delegate.
            if let Some(t) = transfer {
                let call_id = t.delivery.tool_call_id.clone().unwrap_or_default();
                let history = histories.get_mut(&current).expect("history");
                if stack.last().is_some_and(|p| p.agent == t.handoff.to) {
                    let p = stack.pop().expect("checked");
                    history.push(Message::tool(&call_id, "handoff", "delivered"));
                    input = vec![Message::tool(
                        &p.call_id,
                        "handoff",
                        t.delivery.content.unwrap_or_default(),
                    )];
                } else {
                    let call = history
                        .iter()
                        .rev()
                        .find(|m| {
                            m.role == Role::Assistant
                                && m.tool_calls.iter().any(|c| c.id == call_id)
                        })
                        .cloned();
                    stack.push(Pending {
                        agent: current.clone(),
                        call_id,
                    });
                    input = call.into_iter().chain([t.delivery]).collect();
                }
                sender = Some(current.clone());
                current = t.handoff.to;
                continue;
            }

            let Some(waiting) = stack.pop() else {
                match termination {
                    Termination::FinalAnswer => break (answer, SessionEnd::Final),
                    _ if restarts == 0 => {
                        restarts += 1;
                        input = vec![Message::user(format!(
                            "Your previous activation ended without an answer ({}). Continue with the original request.",
                            termination_label(&termination)
                        ))];
                        continue;
                    }
                    _ => break (None, SessionEnd::RootFailed),
                }
            };

            // Synthesize the result handoff a delegate owes its requester.
            let (status, summary) = match (&termination, &answer) {
                (Termination::FinalAnswer, Some(a)) if !failed_status(a) => ("done", a.clone()),
                (Termination::FinalAnswer, Some(a)) => ("failed", a.clone()),
                _ => (
                    "failed",
                    format!("activation ended: {}", termination_label(&termination)),
                ),
            };
            let target_name = kit
                .agents
                .get(&waiting.agent)
                .map_or(waiting.agent.to_string(), |a| a.identity_name.clone());
            let h = Handoff::new(
                waiting.agent.clone(),
                format!("Hello {target_name}, returning the delegated step."),
                "Result of the delegated step.",
            )
            .with_param(STATUS, status)
            .with_param(SUMMARY, summary.replace('\n', " "));
            let content = kit
                .delivery_content(&h, &current)
                .unwrap_or_else(|e| format!("Result delivery failed: {e}"));
            input = vec![Message::tool(&waiting.call_id, "handoff", content)];
            sender = Some(current.clone());
            current = waiting.agent;
        };

        SessionOutcome {
            activations,
            final_answer,
            end,
            restarts,
        }
    }
}

pub(crate) fn termination_label(t: &Termination) -> &'static str {
    match t {
        Termination::FinalAnswer => "final_answer",
        Termination::StepLimit => "step_limit",
        Termination::BackendError => "backend_error",
        Termination::ValidationAbort => "validation_abort",
        Termination::Handoff { .. } => "handoff",
    }
}
