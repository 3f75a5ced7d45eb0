//! ReAct agents: messages, decision backends and the activation loop.

mod backend;
mod remote;
mod runtime;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::coi::ValidationResult;
use crate::domain::AgentId;

pub use backend::{
    Backend, BackendError, PolicyView, RecordedTurn, RecordingBackend, ReplayBackend, Rule,
    ScriptedBackend, ScriptedPolicy,
};
pub use remote::{RemoteBackend, RemoteConfig, ENV_LLM_KEY, ENV_LLM_URL};
pub use runtime::{
    execute_tool, run_activation, run_agent_turn, run_react_loop, CoiMode, LoopConfig,
    ToolExecutor, ToolOutcome, Transfer, DEFAULT_MAX_STEPS,
};

/// Marker that ends an activation with an answer.
pub const FINAL_MARKER: &str = "FINAL:";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub id: String,
    pub name: String,
    pub args: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
    /// Speaking agent for assistant messages, tool name for tool messages.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl Message {
    fn bare(role: Role, content: Option<String>) -> Self {
        Message {
            role,
            content,
            tool_calls: Vec::new(),
            tool_call_id: None,
            name: None,
        }
    }

    pub fn system(text: impl Into<String>) -> Self {
        Self::bare(Role::System, Some(text.into()))
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self::bare(Role::User, Some(text.into()))
    }

    pub fn assistant(content: Option<String>, tool_calls: Vec<ToolCall>) -> Self {
        Message {
            tool_calls,
            ..Self::bare(Role::Assistant, content)
        }
    }

    pub fn tool(
        call_id: impl Into<String>,
        tool_name: impl Into<String>,
        content: impl Into<String>,
    ) -> Self {
        Message {
            tool_call_id: Some(call_id.into()),
            name: Some(tool_name.into()),
            ..Self::bare(Role::Tool, Some(content.into()))
        }
    }

    pub fn text(&self) -> &str {
        self.content.as_deref().unwrap_or("")
    }

    pub fn is_final(&self) -> bool {
        self.role == Role::Assistant && self.text().starts_with(FINAL_MARKER)
    }

    /// The answer after the final marker, if this is a final message.
    pub fn final_answer(&self) -> Option<&str> {
        self.is_final()
            .then(|| self.text()[FINAL_MARKER.len()..].trim())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentCategory {
    Planner,
    Task,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: AgentId,
    pub identity_name: String,
    pub core_responsibility: String,
    pub category: AgentCategory,
    pub tool_names: Vec<String>,
    pub system_prompt: String,
}

impl AgentSpec {
    pub fn has_tool(&self, name: &str) -> bool {
        self.tool_names.iter().any(|t| t == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    /// JSON Schema of the arguments object.
    pub parameters: Value,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    FinalAnswer,
    StepLimit,
    BackendError,
    ValidationAbort,
    Handoff { to: AgentId },
}

/// One agent activation: its input messages and everything it produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub agent: AgentId,
    pub messages: Vec<Message>,
    pub step_count: usize,
    pub termination: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declaration: Option<ValidationResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Transcript {
    pub fn final_answer(&self) -> Option<&str> {
        match self.termination {
            Termination::FinalAnswer => self.messages.last().and_then(Message::final_answer),
            _ => None,
        }
    }

    /// Tool results of `tool` in this activation, in order.
    pub fn tool_results<'a>(&'a self, tool: &'a str) -> impl Iterator<Item = &'a Message> + 'a {
        self.messages
            .iter()
            .filter(move |m| m.role == Role::Tool && m.name.as_deref() == Some(tool))
    }

    /// Writes one message per line.
    pub fn write_jsonl<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        for m in &self.messages {
            serde_json::to_writer(&mut out, m)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}
