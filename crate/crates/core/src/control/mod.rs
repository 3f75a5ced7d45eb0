//! Domain controllers exposing tool-style RPCs over the simulated network,
//! with strict information isolation between domains.

mod isolation;
mod plane;
mod world;

pub use isolation::{enforce_isolation, Decision, DenyReason, Grant, IsolationPolicy};
pub use plane::{verb_supported, AuditEntry, ControlPlane};
pub use world::World;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Controller verbs. The wire form is the snake_case name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verb {
    GetMonitors,
    ListChannels,
    SetChannel,
    ConfigureTransponder,
    ListAlarms,
    ApplyAllocation,
    GetLinkQuality,
    GetTopology,
}

impl Verb {
    pub const ALL: [Verb; 8] = [
        Verb::GetMonitors,
        Verb::ListChannels,
        Verb::SetChannel,
        Verb::ConfigureTransponder,
        Verb::ListAlarms,
        Verb::ApplyAllocation,
        Verb::GetLinkQuality,
        Verb::GetTopology,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Verb::GetMonitors => "get_monitors",
            Verb::ListChannels => "list_channels",
            Verb::SetChannel => "set_channel",
            Verb::ConfigureTransponder => "configure_transponder",
            Verb::ListAlarms => "list_alarms",
            Verb::ApplyAllocation => "apply_allocation",
            Verb::GetLinkQuality => "get_link_quality",
            Verb::GetTopology => "get_topology",
        }
    }

    pub fn is_state_changing(self) -> bool {
        matches!(
            self,
            Verb::SetChannel | Verb::ConfigureTransponder | Verb::ApplyAllocation
        )
    }
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verb {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Verb::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| s.to_string())
    }
}

/// `{verb, args}` request. The verb stays a string on the wire so that an
/// unknown verb reaches the controller and is answered, not dropped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RpcRequest {
    pub verb: String,
    #[serde(default)]
    pub args: Map<String, Value>,
}

impl RpcRequest {
    pub fn new(verb: Verb, args: Value) -> Self {
        RpcRequest {
            verb: verb.as_str().to_string(),
            args: match args {
                Value::Object(m) => m,
                _ => Map::new(),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RpcErrorCode {
    AccessDenied,
    UnsupportedVerb,
    NotFound,
    InvalidArgs,
    Rejected,
}

impl RpcErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            RpcErrorCode::AccessDenied => "access-denied",
            RpcErrorCode::UnsupportedVerb => "unsupported-verb",
            RpcErrorCode::NotFound => "not-found",
            RpcErrorCode::InvalidArgs => "invalid-args",
            RpcErrorCode::Rejected => "rejected",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[error("{}: {message}", code.as_str())]
pub struct RpcError {
    pub code: RpcErrorCode,
    pub message: String,
}

impl RpcError {
    pub fn new(code: RpcErrorCode, message: impl Into<String>) -> Self {
        RpcError {
            code,
            message: message.into(),
        }
    }
}

/// `{ok, payload, error}` response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RpcResponse {
    pub ok: bool,
    pub payload: Option<Value>,
    pub error: Option<RpcError>,
}

impl RpcResponse {
    pub fn success(payload: Value) -> Self {
        RpcResponse {
            ok: true,
            payload: Some(payload),
            error: None,
        }
    }

    pub fn failure(error: RpcError) -> Self {
        RpcResponse {
            ok: false,
            payload: None,
            error: Some(error),
        }
    }

    pub fn error_code(&self) -> Option<RpcErrorCode> {
        self.error.as_ref().map(|e| e.code)
    }
}
