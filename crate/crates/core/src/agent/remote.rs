use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{AgentSpec, Backend, BackendError, Message, Role, ToolCall, ToolSpec};

pub const ENV_LLM_URL: &str = "AUTONOC_LLM_URL";
pub const ENV_LLM_KEY: &str = "AUTONOC_LLM_KEY";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    /// Extra attempts after a transport failure or 5xx status.
    pub retries: u32,
    pub timeout_secs: u64,
}

impl RemoteConfig {
    /// Endpoint and key from `AUTONOC_LLM_URL` / `AUTONOC_LLM_KEY`.
    pub fn from_env(model: impl Into<String>) -> Option<Self> {
        let endpoint = std::env::var(ENV_LLM_URL).ok().filter(|s| !s.is_empty())?;
        Some(RemoteConfig {
            endpoint,
            model: model.into(),
            api_key: std::env::var(ENV_LLM_KEY).ok().filter(|s| !s.is_empty()),
            retries: 2,
            timeout_secs: 120,
        })
    }
}

/// Chat-completions client: POSTs `{model, messages, tools}` and reads back
/// `{message}` or `{choices: [{message}]}`.
pub struct RemoteBackend {
    cfg: RemoteConfig,
    client: reqwest::blocking::Client,
}

impl RemoteBackend {
    pub fn new(cfg: RemoteConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(RemoteBackend { cfg, client })
    }

    fn post(&self, body: &Value) -> Result<Value, BackendError> {
        let mut req = self.client.post(&self.cfg.endpoint).json(body);
        if let Some(key) = &self.cfg.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(BackendError::Http {
                status: status.as_u16(),
                body: text,
            });
        }
        serde_json::from_str(&text).map_err(|e| BackendError::Protocol(e.to_string()))
    }
}

fn retryable(e: &BackendError) -> bool {
    match e {
        BackendError::Transport(_) => true,
        BackendError::Http { status, .. } => *status >= 500 || *status == 429,
        _ => false,
    }
}

pub(crate) fn wire_message(m: &Message) -> Value {
    let role = match m.role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
        Role::Tool => "tool",
    };
    let mut out = json!({ "role": role, "content": m.content });
    if !m.tool_calls.is_empty() {
        out["tool_calls"] = m
            .tool_calls
            .iter()
            .map(|c| {
                json!({
                    "id": c.id,
                    "type": "function",
                    "function": { "name": c.name, "arguments": c.args.to_string() },
                })
            })
            .collect();
    }
    if let Some(id) = &m.tool_call_id {
        out["tool_call_id"] = json!(id);
    }
    out
}

pub(crate) fn request_body(model: &str, history: &[Message], tools: &[ToolSpec]) -> Value {
    let mut body = json!({
        "model": model,
        "messages": history.iter().map(wire_message).collect::<Vec<_>>(),
    });
    if !tools.is_empty() {
        body["tools"] = tools
            .iter()
            .map(|t| {
                json!({
                    "type": "function",
                    "function": { "name": t.name, "description": t.description, "parameters": t.parameters },
                })
            })
            .collect();
    }
    body
}

pub(crate) fn parse_response(body: &Value, id_prefix: &str) -> Result<Message, BackendError> {
    let msg = body
        .get("message")
        .or_else(|| body.pointer("/choices/0/message"))
        .ok_or_else(|| BackendError::Protocol("no `message` or `choices[0].message`".into()))?;
    let content = msg
        .get("content")
        .and_then(Value::as_str)
        .map(str::to_string);
    let mut calls = Vec::new();
    for (i, c) in msg
        .get("tool_calls")
        .and_then(Value::as_array)
        .map(Vec::as_slice)
        .unwrap_or_default()
        .iter()
        .enumerate()
    {
        let f = c.get("function").unwrap_or(c);
        let name = f
            .get("name")
            .and_then(Value::as_str)
            .ok_or_else(|| BackendError::Protocol("tool call without a name".into()))?;
        let args = match f.get("arguments").or_else(|| f.get("args")) {
            Some(Value::String(s)) => {
                serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.clone()))
            }
            Some(v) => v.clone(),
            None => json!({}),
        };
        let id = c
            .get("id")
            .and_then(Value::as_str)
            .map_or_else(|| format!("{id_prefix}-{i}"), str::to_string);
        calls.push(ToolCall {
            id,
            name: name.to_string(),
            args,
        });
    }
    Ok(Message::assistant(content, calls))
}

impl Backend for RemoteBackend {
    fn complete(
        &self,
        agent: &AgentSpec,
        history: &[Message],
        tools: &[ToolSpec],
    ) -> Result<Message, BackendError> {
        let body = request_body(&self.cfg.model, history, tools);
        let mut attempt = 0;
        let resp = loop {
            match self.post(&body) {
                Ok(v) => break v,
                Err(e) if attempt < self.cfg.retries && retryable(&e) => attempt += 1,
                Err(e) => return Err(e),
            }
        };
        parse_response(&resp, &format!("{}-{}", agent.id, history.len()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::AgentCategory;
    use crate::domain::AgentId;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    fn agent() -> AgentSpec {
        AgentSpec {
            id: AgentId::new("a"),
            identity_name: "Alpha".into(),
            core_responsibility: "r".into(),
            category: AgentCategory::Task,
            tool_names: vec!["get_monitors".into()],
            system_prompt: "s".into(),
        }
    }

    /// Serves one canned response and hands back the request body.
    fn serve_once(status: &'static str, body: String) -> (String, std::thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut req = vec![0; len];
            reader.read_exact(&mut req).unwrap();
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            String::from_utf8(req).unwrap()
        });
        (url, handle)
    }

    fn cfg(endpoint: String, retries: u32) -> RemoteConfig {
        RemoteConfig {
            endpoint,
            model: "test-model".into(),
            api_key: Some("k".into()),
            retries,
            timeout_secs: 5,
        }
    }

    #[test]
    fn round_trip_against_local_server() {
        let reply = json!({"choices": [{"message": {"content": null, "tool_calls": [
            {"id": "call_1", "type": "function", "function": {"name": "get_monitors", "arguments": "{\"domain\":\"backbone-A\"}"}}
        ]}}]});
        let (url, server) = serve_once("200 OK", reply.to_string());
        let backend = RemoteBackend::new(cfg(url, 0)).unwrap();
        let tools = vec![ToolSpec {
            name: "get_monitors".into(),
            description: "d".into(),
            parameters: json!({"type": "object"}),
        }];
        let history = vec![Message::system("s"), Message::user("go")];
        let m = backend.complete(&agent(), &history, &tools).unwrap();
        assert_eq!(m.tool_calls[0].name, "get_monitors");
        assert_eq!(m.tool_calls[0].args, json!({"domain": "backbone-A"}));

        let sent: Value = serde_json::from_str(&server.join().unwrap()).unwrap();
        assert_eq!(sent["model"], "test-model");
        assert_eq!(sent["messages"][1]["role"], "user");
        assert_eq!(sent["tools"][0]["function"]["name"], "get_monitors");
    }

    #[test]
    fn plain_message_shape_is_accepted() {
        let m = parse_response(&json!({"message": {"content": "FINAL: ok"}}), "p").unwrap();
        assert!(m.is_final());
        assert!(parse_response(&json!({"nothing": 1}), "p").is_err());
    }

    #[test]
    fn http_error_surfaces() {
        let (url, server) = serve_once("400 Bad Request", "{}".into());
        let backend = RemoteBackend::new(cfg(url, 0)).unwrap();
        let e = backend
            .complete(&agent(), &[Message::user("x")], &[])
            .unwrap_err();
        assert!(matches!(e, BackendError::Http { status: 400, .. }));
        server.join().unwrap();
    }

    #[test]
    fn unreachable_endpoint_is_a_backend_error() {
        let port = TcpListener::bind("127.0.0.1:0")
            .unwrap()
            .local_addr()
            .unwrap()
            .port();
        let backend = RemoteBackend::new(cfg(format!("http://127.0.0.1:{port}/"), 0)).unwrap();
        let e = backend
            .complete(&agent(), &[Message::user("x")], &[])
            .unwrap_err();
        assert!(matches!(e, BackendError::Transport(_)));
    }

    #[test]
    fn wire_messages_follow_chat_shape() {
        let call = ToolCall {
            id: "c".into(),
            name: "n".into(),
            args: json!({"x": 1}),
        };
        let w = wire_message(&Message::assistant(None, vec![call]));
        assert_eq!(w["tool_calls"][0]["function"]["arguments"], "{\"x\":1}");
        let w = wire_message(&Message::tool("c", "n", "out"));
        assert_eq!(w["tool_call_id"], "c");
        assert_eq!(w["role"], "tool");
    }
}
