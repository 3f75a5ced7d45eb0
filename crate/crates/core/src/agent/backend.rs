use std::collections::{BTreeMap, VecDeque};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{AgentSpec, Message, Role, ToolCall, ToolSpec};
use crate::coi::{declaration, read_delivery, Handoff, PSEUDO_SYSTEM_TAG};
use crate::domain::AgentId;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("http status {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("no scripted rule matched for `{0}`")]
    NoRule(AgentId),
    #[error("replay log exhausted for `{0}`")]
    Exhausted(AgentId),
}

/// Produces an agent's next assistant message from its visible history.
pub trait Backend: Send + Sync {
    fn complete(
        &self,
        agent: &AgentSpec,
        history: &[Message],
        tools: &[ToolSpec],
    ) -> Result<Message, BackendError>;
}

/// Read-only helpers over an agent's history, for scripted rules.
pub struct PolicyView<'a> {
    pub agent: &'a AgentSpec,
    pub history: &'a [Message],
}

impl<'a> PolicyView<'a> {
    pub fn new(agent: &'a AgentSpec, history: &'a [Message]) -> Self {
        PolicyView { agent, history }
    }

    fn is_input(&self, m: &Message) -> bool {
        match m.role {
            Role::User => true,
            Role::Tool => read_delivery(m.text()).is_ok_and(|h| h.to == self.agent.id),
            _ => false,
        }
    }

    /// Index of the message that opened the current activation.
    pub fn activation_start(&self) -> usize {
        self.history
            .iter()
            .rposition(|m| self.is_input(m))
            .unwrap_or(0)
    }

    /// Messages of the current activation, from its input onwards.
    pub fn activation(&self) -> &'a [Message] {
        &self.history[self.activation_start()..]
    }

    pub fn input(&self) -> Option<&'a Message> {
        self.activation().first().filter(|m| self.is_input(m))
    }

    /// The handoff that opened this activation, if any.
    pub fn delivery(&self) -> Option<Handoff> {
        self.input()
            .filter(|m| m.role == Role::Tool)
            .and_then(|m| read_delivery(m.text()).ok())
    }

    /// The delivery content when the pseudo-system framing is present.
    pub fn framed_delivery(&self) -> Option<&'a str> {
        self.input()
            .filter(|m| m.role == Role::Tool)
            .map(Message::text)
            .filter(|t| t.starts_with(PSEUDO_SYSTEM_TAG))
    }

    /// Sender name from the pseudo-system header.
    pub fn sender_name(&self) -> Option<&'a str> {
        let text = self.framed_delivery()?;
        let header = text.lines().next()?;
        let (_, rest) = header.split_once("You have received a handoff from ")?;
        rest.strip_suffix('.')
    }

    /// Sender agent id: the speaker of the message carrying the handoff call.
    pub fn sender_id(&self) -> Option<&'a str> {
        let start = self.activation_start();
        let input = self.history.get(start)?;
        let call_id = input.tool_call_id.as_deref()?;
        self.history[..start]
            .iter()
            .rev()
            .find(|m| m.tool_calls.iter().any(|c| c.id == call_id))
            .and_then(|m| m.name.as_deref())
    }

    /// The canonical declaration if the delivery was framed, for the
    /// identity named in that framing's header.
    pub fn canonical_declaration(&self) -> Option<String> {
        let sender = self.sender_name()?;
        Some(declaration(&self.agent.identity_name, sender))
    }

    /// Whether this activation has produced an assistant message yet.
    pub fn has_spoken(&self) -> bool {
        self.activation()
            .iter()
            .any(|m| m.role == Role::Assistant && m.name.as_deref() == Some(self.agent.id.as_str()))
    }

    /// Parsed JSON results of `tool` in this activation, in order.
    pub fn results(&self, tool: &str) -> Vec<Value> {
        self.activation()
            .iter()
            .filter(|m| m.role == Role::Tool && m.name.as_deref() == Some(tool))
            .map(|m| {
                serde_json::from_str(m.text())
                    .unwrap_or_else(|_| Value::String(m.text().to_string()))
            })
            .collect()
    }

    pub fn last_result(&self, tool: &str) -> Option<Value> {
        self.results(tool).pop()
    }

    pub fn called(&self, tool: &str) -> bool {
        self.activation().iter().any(|m| {
            m.tool_calls.iter().any(|c| c.name == tool)
                && m.name.as_deref() == Some(self.agent.id.as_str())
        })
    }

    /// The most recent tool result in the activation.
    pub fn last_tool(&self) -> Option<&'a Message> {
        self.activation()
            .iter()
            .skip(1)
            .rev()
            .find(|m| m.role == Role::Tool)
    }

    /// Text of the first user message (the goal).
    pub fn goal(&self) -> Option<&'a str> {
        self.history
            .iter()
            .find(|m| m.role == Role::User)
            .map(Message::text)
    }

    /// Total characters of tool output visible in the history.
    pub fn tool_output_chars(&self) -> usize {
        self.history
            .iter()
            .filter(|m| m.role == Role::Tool)
            .map(|m| m.text().len())
            .sum()
    }

    pub fn call(&self, name: &str, args: Value) -> ToolCall {
        ToolCall {
            id: format!("{}-{}", self.agent.id, self.history.len()),
            name: name.to_string(),
            args,
        }
    }

    /// An assistant message issuing one tool call.
    pub fn act(&self, content: Option<String>, name: &str, args: Value) -> Message {
        self.said(Message::assistant(content, vec![self.call(name, args)]))
    }

    /// A final-answer message.
    pub fn finish(&self, answer: impl AsRef<str>) -> Message {
        self.said(Message::assistant(
            Some(format!("{} {}", super::FINAL_MARKER, answer.as_ref())),
            vec![],
        ))
    }

    pub fn said(&self, mut m: Message) -> Message {
        m.name = Some(self.agent.id.to_string());
        m
    }
}

type RuleFn = dyn Fn(&PolicyView) -> Option<Message> + Send + Sync;

/// One row of a policy table: fires when it returns a message.
#[derive(Clone)]
pub struct Rule {
    pub name: &'static str,
    action: Arc<RuleFn>,
}

impl Rule {
    pub fn new(
        name: &'static str,
        action: impl Fn(&PolicyView) -> Option<Message> + Send + Sync + 'static,
    ) -> Self {
        Rule {
            name,
            action: Arc::new(action),
        }
    }
}

impl std::fmt::Debug for Rule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Rule").field("name", &self.name).finish()
    }
}

/// Ordered rules; the first that fires decides the message.
#[derive(Clone, Debug, Default)]
pub struct ScriptedPolicy {
    pub id: String,
    pub rules: Vec<Rule>,
}

impl ScriptedPolicy {
    pub fn new(id: impl Into<String>) -> Self {
        ScriptedPolicy {
            id: id.into(),
            rules: Vec::new(),
        }
    }

    pub fn rule(
        mut self,
        name: &'static str,
        action: impl Fn(&PolicyView) -> Option<Message> + Send + Sync + 'static,
    ) -> Self {
        self.rules.push(Rule::new(name, action));
        self
    }

    /// Declares its identity first when the delivery is framed, then
    /// finishes by restating its input.
    pub fn echo() -> Self {
        ScriptedPolicy::new("echo")
            .rule("declare", |v| {
                let d = v.canonical_declaration().filter(|_| !v.has_spoken())?;
                Some(v.said(Message::assistant(Some(d), vec![])))
            })
            .rule("echo", |v| {
                let input = v.input().map(Message::text).unwrap_or("");
                Some(v.finish(format!(
                    "I am {}. Received: {}",
                    v.agent.identity_name,
                    input.lines().next().unwrap_or("")
                )))
            })
    }

    pub fn decide(&self, view: &PolicyView) -> Option<Message> {
        self.rules.iter().find_map(|r| (r.action)(view))
    }
}

/// Deterministic, table-driven backend: one policy per agent.
#[derive(Clone, Debug, Default)]
pub struct ScriptedBackend {
    pub policies: BTreeMap<AgentId, ScriptedPolicy>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, agent: impl Into<AgentId>, policy: ScriptedPolicy) -> Self {
        self.policies.insert(agent.into(), policy);
        self
    }
}

impl Backend for ScriptedBackend {
    fn complete(
        &self,
        agent: &AgentSpec,
        history: &[Message],
        _tools: &[ToolSpec],
    ) -> Result<Message, BackendError> {
        let policy = self
            .policies
            .get(&agent.id)
            .ok_or_else(|| BackendError::NoRule(agent.id.clone()))?;
        policy
            .decide(&PolicyView::new(agent, history))
            .ok_or_else(|| BackendError::NoRule(agent.id.clone()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordedTurn {
    pub agent: AgentId,
    pub message: Message,
}

/// Wraps a backend and records every message it returns.
pub struct RecordingBackend<B> {
    inner: B,
    log: Mutex<Vec<RecordedTurn>>,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        RecordingBackend {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn turns(&self) -> Vec<RecordedTurn> {
        self.log.lock().expect("recording lock").clone()
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn complete(
        &self,
        agent: &AgentSpec,
        history: &[Message],
        tools: &[ToolSpec],
    ) -> Result<Message, BackendError> {
        let m = self.inner.complete(agent, history, tools)?;
        self.log.lock().expect("recording lock").push(RecordedTurn {
            agent: agent.id.clone(),
            message: m.clone(),
        });
        Ok(m)
    }
}

/// Replays recorded messages per agent, in order.
pub struct ReplayBackend {
    queues: Mutex<BTreeMap<AgentId, VecDeque<Message>>>,
}

impl ReplayBackend {
    pub fn new(turns: impl IntoIterator<Item = RecordedTurn>) -> Self {
        let mut queues: BTreeMap<AgentId, VecDeque<Message>> = BTreeMap::new();
        for t in turns {
            queues.entry(t.agent).or_default().push_back(t.message);
        }
        ReplayBackend {
            queues: Mutex::new(queues),
        }
    }
}

impl Backend for ReplayBackend {
    fn complete(
        &self,
        agent: &AgentSpec,
        _history: &[Message],
        _tools: &[ToolSpec],
    ) -> Result<Message, BackendError> {
        self.queues
            .lock()
            .expect("replay lock")
            .get_mut(&agent.id)
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| BackendError::Exhausted(agent.id.clone()))
    }
}
