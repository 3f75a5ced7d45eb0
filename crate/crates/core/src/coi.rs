//! Chain of Identity: the structured handoff block, pseudo-system injection
//! inside tool messages, and the identity declaration every activated agent
//! must open with.
//!
//! Handoff block grammar (values escape `\`, newline and carriage return as
//! `\\`, `\n`, `\r`):
//!
//! ```text
//! @handoff to=<agent-id>
//! greeting: <text>
//! query: <text>
//! params:
//!   <key>=<value>
//! @end
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::AgentId;

pub const PSEUDO_SYSTEM_TAG: &str = "[PSEUDO-SYSTEM]";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CoiError {
    #[error("invalid handoff field `{field}`: {reason}")]
    Encode { field: &'static str, reason: String },
    #[error("no @handoff block found")]
    NotAHandoff,
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("handoff addressed to `{to}` delivered to `{target}`")]
    Routing { to: AgentId, target: AgentId },
}

/// A structured transfer between agents.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Handoff {
    pub to: AgentId,
    pub greeting: String,
    pub query: String,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
}

impl Handoff {
    pub fn new(
        to: impl Into<AgentId>,
        greeting: impl Into<String>,
        query: impl Into<String>,
    ) -> Self {
        Handoff {
            to: to.into(),
            greeting: greeting.into(),
            query: query.into(),
            params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.params.insert(key.into(), value.into());
        self
    }

    pub fn param(&self, key: &str) -> Option<&str> {
        self.params.get(key).map(String::as_str)
    }
}

/// Identity facts the handoff tool needs about the receiving agent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetIdentity {
    pub id: AgentId,
    pub identity_name: String,
    pub core_responsibility: String,
}

fn valid_id(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str, line: usize) -> Result<String, CoiError> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => {
                return Err(CoiError::Parse {
                    line,
                    reason: format!(
                        "bad escape sequence `\\{}`",
                        other.map(String::from).unwrap_or_default()
                    ),
                })
            }
        }
    }
    Ok(out)
}

/// Checks the handoff invariants against the target's identity name.
pub fn validate_handoff(h: &Handoff, target_name: &str) -> Result<(), CoiError> {
    let bad = |field, reason: &str| {
        Err(CoiError::Encode {
            field,
            reason: reason.to_string(),
        })
    };
    if !valid_id(h.to.as_str()) {
        return bad("to", "agent id must match [A-Za-z0-9_.-]+");
    }
    if target_name.is_empty() || !h.greeting.contains(target_name) {
        return Err(CoiError::Encode {
            field: "greeting",
            reason: format!("must name the target `{target_name}`"),
        });
    }
    if h.query.is_empty() {
        return bad("query", "must not be empty");
    }
    if let Some(k) = h.params.keys().find(|k| !valid_id(k)) {
        return Err(CoiError::Encode {
            field: "params",
            reason: format!("key `{}` must match [A-Za-z0-9_.-]+", escape(k)),
        });
    }
    Ok(())
}

/// Renders the handoff block. `target_name` is the receiver's identity name,
/// which the greeting must contain verbatim.
pub fn encode_handoff(h: &Handoff, target_name: &str) -> Result<String, CoiError> {
    validate_handoff(h, target_name)?;
    let mut out = format!(
        "@handoff to={}\ngreeting: {}\nquery: {}\nparams:\n",
        h.to,
        escape(&h.greeting),
        escape(&h.query)
    );
    for (k, v) in &h.params {
        out.push_str(&format!("  {k}={}\n", escape(v)));
    }
    out.push_str("@end");
    Ok(out)
}

/// Extracts the first handoff block from `text`. Line numbers in errors are
/// 1-based positions within `text`.
pub fn parse_handoff(text: &str) -> Result<Handoff, CoiError> {
    let lines: Vec<&str> = text.lines().collect();
    let start = lines
        .iter()
        .position(|l| l.starts_with("@handoff "))
        .ok_or(CoiError::NotAHandoff)?;
    let err = |i: usize, reason: &str| CoiError::Parse {
        line: i + 1,
        reason: reason.to_string(),
    };
    let expect = |i: usize, prefix: &str| -> Result<&str, CoiError> {
        match lines.get(i) {
            Some(l) => l
                .strip_prefix(prefix)
                .ok_or_else(|| err(i, &format!("expected `{}`", prefix.trim_end()))),
            None => Err(err(
                i,
                &format!("unexpected end of text, expected `{}`", prefix.trim_end()),
            )),
        }
    };

    let to = expect(start, "@handoff to=")?;
    if !valid_id(to) {
        return Err(err(start, "invalid agent id"));
    }
    let greeting = unescape(expect(start + 1, "greeting: ")?, start + 2)?;
    let query = unescape(expect(start + 2, "query: ")?, start + 3)?;
    if query.is_empty() {
        return Err(err(start + 2, "query must not be empty"));
    }
    let header = start + 3;
    if lines.get(header).copied() != Some("params:") {
        return Err(err(header, "expected `params:`"));
    }
    let mut params = BTreeMap::new();
    let mut i = header + 1;
    loop {
        let Some(line) = lines.get(i) else {
            return Err(err(i, "unexpected end of text, expected `@end`"));
        };
        if *line == "@end" {
            break;
        }
        let entry = line
            .strip_prefix("  ")
            .ok_or_else(|| err(i, "expected `  key=value` or `@end`"))?;
        let (k, v) = entry
            .split_once('=')
            .ok_or_else(|| err(i, "param line lacks `=`"))?;
        if !valid_id(k) {
            return Err(err(i, "invalid param key"));
        }
        if params.insert(k.to_string(), unescape(v, i + 1)?).is_some() {
            return Err(err(i, "duplicate param key"));
        }
        i += 1;
    }
    Ok(Handoff {
        to: AgentId::new(to),
        greeting,
        query,
        params,
    })
}

/// The pseudo-system header injected at the top of a handoff tool result.
pub fn pseudo_system_header(target: &TargetIdentity, sender_name: &str) -> String {
    format!(
        "{PSEUDO_SYSTEM_TAG} You are {}. Core responsibility: {}. You have received a handoff from {}.",
        target.identity_name, target.core_responsibility, sender_name
    )
}

/// Content of the tool message that delivers `h` to `target`.
pub fn make_handoff_tool_result(
    h: &Handoff,
    target: &TargetIdentity,
    sender_name: &str,
) -> Result<String, CoiError> {
    if h.to != target.id {
        return Err(CoiError::Routing {
            to: h.to.clone(),
            target: target.id.clone(),
        });
    }
    Ok(format!(
        "{}\n{}",
        pseudo_system_header(target, sender_name),
        encode_handoff(h, &target.identity_name)?
    ))
}

/// Plain delivery used when the identity chain is disabled: same routing and
/// payload, no identity framing.
pub fn plain_delivery(h: &Handoff) -> String {
    let params = serde_json::to_string(&h.params).expect("string map serializes");
    format!(
        "Transferred to {}. Query: {} Params: {params}",
        h.to,
        escape(&h.query)
    )
}

/// Reads a delivered handoff from either delivery format.
pub fn read_delivery(content: &str) -> Result<Handoff, CoiError> {
    match parse_handoff(content) {
        Err(CoiError::NotAHandoff) => {}
        other => return other,
    }
    let rest = content
        .strip_prefix("Transferred to ")
        .ok_or(CoiError::NotAHandoff)?;
    let (to, rest) = rest.split_once(". Query: ").ok_or(CoiError::NotAHandoff)?;
    let (query, params) = rest.rsplit_once(" Params: ").ok_or(CoiError::NotAHandoff)?;
    let params: BTreeMap<String, String> =
        serde_json::from_str(params).map_err(|e| CoiError::Parse {
            line: 1,
            reason: e.to_string(),
        })?;
    Ok(Handoff {
        to: AgentId::new(to),
        greeting: String::new(),
        query: unescape(query, 1)?,
        params,
    })
}

/// A parsed identity declaration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Declaration {
    pub declared_identity: String,
    pub acknowledged_sender: Option<String>,
    pub acknowledged_instructions: bool,
    pub planned_action: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum DeclarationFailure {
    MissingDeclaration,
    IdentityMismatch { expected: String, found: String },
    SenderMismatch { expected: String, found: String },
    MissingAcknowledgement,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedIdentity {
    pub identity: String,
    pub sender: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationResult {
    pub pass: bool,
    pub reasons: Vec<DeclarationFailure>,
}

/// Canonical declaration sentence.
pub fn declaration(identity: &str, sender: &str) -> String {
    format!("I am {identity}. Handoff from {sender} received and verified.")
}

const ACK_PREFIX: &str = " Handoff from ";
const ACK_SUFFIX: &str = " received and verified.";

/// Parses the declaration at the start of `content`, if there is one.
pub fn parse_declaration(content: &str) -> Option<Declaration> {
    let rest = content.strip_prefix("I am ")?;
    let (identity, rest) = match rest.find(ACK_PREFIX) {
        Some(i) if rest[..i].ends_with('.') => (&rest[..i - 1], &rest[i..]),
        _ => {
            let end = rest.find('.').unwrap_or(rest.len());
            (&rest[..end], rest.get(end + 1..).unwrap_or(""))
        }
    };
    let ack = rest.strip_prefix(ACK_PREFIX).and_then(|r| {
        r.find(ACK_SUFFIX)
            .map(|i| (&r[..i], &r[i + ACK_SUFFIX.len()..]))
    });
    let (sender, tail) = match ack {
        Some((s, tail)) => (Some(s.to_string()), tail),
        None => (None, rest),
    };
    Some(Declaration {
        declared_identity: identity.to_string(),
        acknowledged_instructions: sender.is_some(),
        acknowledged_sender: sender,
        planned_action: tail.trim().to_string(),
    })
}

/// Checks the opening of the first assistant message after a delivery.
pub fn validate_declaration(
    content: Option<&str>,
    expected: &ExpectedIdentity,
) -> ValidationResult {
    let mut reasons = Vec::new();
    match content.and_then(parse_declaration) {
        None => reasons.push(DeclarationFailure::MissingDeclaration),
        Some(d) => {
            if d.declared_identity != expected.identity {
                reasons.push(DeclarationFailure::IdentityMismatch {
                    expected: expected.identity.clone(),
                    found: d.declared_identity,
                });
            }
            match d.acknowledged_sender {
                None => reasons.push(DeclarationFailure::MissingAcknowledgement),
                Some(s) if s != expected.sender => {
                    reasons.push(DeclarationFailure::SenderMismatch {
                        expected: expected.sender.clone(),
                        found: s,
                    })
                }
                Some(_) => {}
            }
        }
    }
    ValidationResult {
        pass: reasons.is_empty(),
        reasons,
    }
}
