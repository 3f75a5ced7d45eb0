use serde::{Deserialize, Serialize};

use super::{AgentSpec, Backend, Message, Role, Termination, ToolCall, ToolSpec, Transcript};
use crate::coi::{validate_declaration, ExpectedIdentity, Handoff};

pub const DEFAULT_MAX_STEPS: usize = 40;

/// How identity declarations are enforced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoiMode {
    /// Abort the activation on a failed declaration.
    Strict,
    /// Record the result and continue.
    Monitor,
    Off,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub max_steps: usize,
    pub coi: CoiMode,
    /// Identity the first assistant message must declare, when the
    /// activation was opened by a handoff.
    pub expected: Option<ExpectedIdentity>,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            max_steps: DEFAULT_MAX_STEPS,
            coi: CoiMode::Off,
            expected: None,
        }
    }
}

/// A handoff that moves control to another agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transfer {
    pub handoff: Handoff,
    /// Tool message delivering the handoff to its target.
    pub delivery: Message,
}

pub struct ToolOutcome {
    pub content: String,
    pub transfer: Option<Handoff>,
}

impl ToolOutcome {
    pub fn text(content: impl Into<String>) -> Self {
        ToolOutcome {
            content: content.into(),
            transfer: None,
        }
    }
}

/// Runs tools on behalf of agents.
pub trait ToolExecutor {
    fn run(&mut self, agent: &AgentSpec, call: &ToolCall) -> ToolOutcome;
}

/// Asks the backend for the agent's next message.
pub fn run_agent_turn(
    agent: &AgentSpec,
    history: &[Message],
    backend: &dyn Backend,
    tools: &[ToolSpec],
) -> Result<Message, super::BackendError> {
    let mut m = backend.complete(agent, history, tools)?;
    m.role = Role::Assistant;
    m.name = Some(agent.id.to_string());
    Ok(m)
}

/// Runs one tool call; tools outside the agent's registry are refused with
/// a tool message rather than an error.
pub fn execute_tool(
    agent: &AgentSpec,
    call: &ToolCall,
    executor: &mut dyn ToolExecutor,
) -> (Message, Option<Handoff>) {
    if !agent.has_tool(&call.name) {
        let msg = format!(
            "{{\"ok\":false,\"error\":\"tool-not-available: `{}` is not available to {}\"}}",
            call.name, agent.id
        );
        return (Message::tool(&call.id, &call.name, msg), None);
    }
    let out = executor.run(agent, call);
    (
        Message::tool(&call.id, &call.name, out.content),
        out.transfer,
    )
}

/// Single-activation loop from a fresh history of system prompt plus goal.
pub fn run_react_loop(
    agent: &AgentSpec,
    goal: Message,
    backend: &dyn Backend,
    tools: &[ToolSpec],
    executor: &mut dyn ToolExecutor,
    cfg: &LoopConfig,
) -> Transcript {
    let mut history = vec![Message::system(&agent.system_prompt)];
    run_activation(
        agent,
        &mut history,
        vec![goal],
        backend,
        tools,
        executor,
        cfg,
    )
    .0
}

/// Appends `input` to `history` and alternates backend turns and tool runs
/// until a final answer, a handoff, a failed declaration or the step limit.
///
/// A handoff's delivery message is not appended to the sender's history; it
/// is returned for the session to route.
pub fn run_activation(
    agent: &AgentSpec,
    history: &mut Vec<Message>,
    input: Vec<Message>,
    backend: &dyn Backend,
    tools: &[ToolSpec],
    executor: &mut dyn ToolExecutor,
    cfg: &LoopConfig,
) -> (Transcript, Option<Transfer>) {
    let start = history.len();
    history.extend(input);
    let mut step_count = 0;
    let mut declaration = None;
    let mut error = None;
    let mut transfer = None;

    let termination = loop {
        if step_count >= cfg.max_steps {
            break Termination::StepLimit;
        }
        let mut msg = match run_agent_turn(agent, history, backend, tools) {
            Ok(m) => m,
            Err(e) => {
                error = Some(e.to_string());
                break Termination::BackendError;
            }
        };
        step_count += 1;

        if step_count == 1 && cfg.coi != CoiMode::Off {
            if let Some(expected) = &cfg.expected {
                let result = validate_declaration(msg.content.as_deref(), expected);
                let pass = result.pass;
                declaration = Some(result);
                if !pass && cfg.coi == CoiMode::Strict {
                    // Calls from an unverified identity are never executed.
                    msg.tool_calls.clear();
                    history.push(msg);
                    break Termination::ValidationAbort;
                }
            }
        }

        if msg.is_final() {
            msg.tool_calls.clear();
            history.push(msg);
            break Termination::FinalAnswer;
        }
        let calls = msg.tool_calls.clone();
        history.push(msg);
        for call in &calls {
            let (reply, handoff) = execute_tool(agent, call, executor);
            match handoff {
                Some(h) if transfer.is_none() => {
                    transfer = Some(Transfer {
                        handoff: h,
                        delivery: reply,
                    })
                }
                _ => history.push(reply),
            }
        }
        if let Some(t) = &transfer {
            break Termination::Handoff {
                to: t.handoff.to.clone(),
            };
        }
    };

    let transcript = Transcript {
        agent: agent.id.clone(),
        messages: history[start..].to_vec(),
        step_count,
        termination,
        declaration,
        error,
    };
    (transcript, transfer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{AgentCategory, ScriptedBackend, ScriptedPolicy};
    use crate::coi::{make_handoff_tool_result, TargetIdentity};
    use crate::domain::AgentId;
    use serde_json::json;

    fn spec(id: &str, name: &str, tools: &[&str]) -> AgentSpec {
        AgentSpec {
            id: AgentId::new(id),
            identity_name: name.into(),
            core_responsibility: "testing".into(),
            category: AgentCategory::Task,
            tool_names: tools.iter().map(|s| s.to_string()).collect(),
            system_prompt: format!("You are {name}."),
        }
    }

    struct Echo;

    impl ToolExecutor for Echo {
        fn run(&mut self, _agent: &AgentSpec, call: &ToolCall) -> ToolOutcome {
            ToolOutcome::text(call.args.to_string())
        }
    }

    #[test]
    fn final_on_first_step() {
        let a = spec("a", "Alpha", &[]);
        let backend = ScriptedBackend::new().with(
            "a",
            ScriptedPolicy::new("done").rule("f", |v| Some(v.finish("42"))),
        );
        let t = run_react_loop(
            &a,
            Message::user("go"),
            &backend,
            &[],
            &mut Echo,
            &LoopConfig::default(),
        );
        assert_eq!(t.messages.len(), 2);
        assert_eq!(t.termination, Termination::FinalAnswer);
        assert_eq!(t.final_answer(), Some("42"));
    }

    #[test]
    fn endless_tool_calls_hit_the_step_limit() {
        let a = spec("a", "Alpha", &["ping"]);
        let backend = ScriptedBackend::new().with(
            "a",
            ScriptedPolicy::new("loop").rule("ping", |v| Some(v.act(None, "ping", json!({})))),
        );
        let cfg = LoopConfig {
            max_steps: 5,
            ..LoopConfig::default()
        };
        let t = run_react_loop(&a, Message::user("go"), &backend, &[], &mut Echo, &cfg);
        assert_eq!(t.termination, Termination::StepLimit);
        assert_eq!(t.step_count, 5);
        // Every tool message answers an earlier call.
        for (i, m) in t
            .messages
            .iter()
            .enumerate()
            .filter(|(_, m)| m.role == Role::Tool)
        {
            let id = m.tool_call_id.as_deref().unwrap();
            assert!(t.messages[..i]
                .iter()
                .any(|p| p.tool_calls.iter().any(|c| c.id == id)));
        }
    }

    #[test]
    fn unknown_tool_is_reported_to_the_agent() {
        let a = spec("a", "Alpha", &[]);
        let call = ToolCall {
            id: "c1".into(),
            name: "get_monitors".into(),
            args: json!({}),
        };
        let (m, h) = execute_tool(&a, &call, &mut Echo);
        assert!(h.is_none());
        assert!(m.text().contains("tool-not-available"));
        assert_eq!(m.tool_call_id.as_deref(), Some("c1"));
    }

    #[test]
    fn scripted_turns_are_pure() {
        let a = spec("a", "Alpha", &[]);
        let backend = ScriptedBackend::new().with("a", ScriptedPolicy::echo());
        let history = vec![Message::system("s"), Message::user("hello")];
        let m1 = run_agent_turn(&a, &history, &backend, &[]).unwrap();
        let m2 = run_agent_turn(&a, &history, &backend, &[]).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(m1.text(), "FINAL: I am Alpha. Received: hello");
    }

    fn delivered(target: &AgentSpec) -> Vec<Message> {
        let h = Handoff::new(
            target.id.clone(),
            format!("Hello {}", target.identity_name),
            "do it",
        );
        let ident = TargetIdentity {
            id: target.id.clone(),
            identity_name: target.identity_name.clone(),
            core_responsibility: target.core_responsibility.clone(),
        };
        let content = make_handoff_tool_result(&h, &ident, "Planner").unwrap();
        let mut call = Message::assistant(
            None,
            vec![ToolCall {
                id: "planner-3".into(),
                name: "handoff".into(),
                args: json!({}),
            }],
        );
        call.name = Some("planner".into());
        vec![call, Message::tool("planner-3", "handoff", content)]
    }

    #[test]
    fn strict_mode_aborts_on_wrong_identity_without_running_tools() {
        let a = spec("fh", "Failure-Handler", &["ping"]);
        let liar = ScriptedPolicy::new("liar").rule("lie", |v| {
            Some(v.act(
                Some("I am Planner. Handoff from Planner received and verified.".into()),
                "ping",
                json!({}),
            ))
        });
        let backend = ScriptedBackend::new().with("fh", liar);
        let expected = ExpectedIdentity {
            identity: "Failure-Handler".into(),
            sender: "Planner".into(),
        };
        let mut history = vec![Message::system("s")];
        let cfg = LoopConfig {
            coi: CoiMode::Strict,
            expected: Some(expected.clone()),
            ..LoopConfig::default()
        };
        let (t, _) = run_activation(
            &a,
            &mut history,
            delivered(&a),
            &backend,
            &[],
            &mut Echo,
            &cfg,
        );
        assert_eq!(t.termination, Termination::ValidationAbort);
        assert!(t
            .messages
            .iter()
            .all(|m| m.tool_calls.is_empty() || m.name.as_deref() != Some("fh")));
        assert!(!t.declaration.unwrap().pass);

        let cfg = LoopConfig {
            coi: CoiMode::Monitor,
            max_steps: 2,
            expected: Some(expected),
        };
        let mut history = vec![Message::system("s")];
        let (t, _) = run_activation(
            &a,
            &mut history,
            delivered(&a),
            &backend,
            &[],
            &mut Echo,
            &cfg,
        );
        assert_eq!(t.termination, Termination::StepLimit);
        assert!(!t.declaration.unwrap().pass);
    }

    #[test]
    fn echo_policy_declares_when_framed() {
        let a = spec("fh", "Failure-Handler", &[]);
        let backend = ScriptedBackend::new().with("fh", ScriptedPolicy::echo());
        let cfg = LoopConfig {
            coi: CoiMode::Strict,
            expected: Some(ExpectedIdentity {
                identity: "Failure-Handler".into(),
                sender: "Planner".into(),
            }),
            ..LoopConfig::default()
        };
        let mut history = vec![Message::system("s")];
        let (t, _) = run_activation(
            &a,
            &mut history,
            delivered(&a),
            &backend,
            &[],
            &mut Echo,
            &cfg,
        );
        assert_eq!(t.termination, Termination::FinalAnswer);
        assert!(t.declaration.unwrap().pass);
    }
}
