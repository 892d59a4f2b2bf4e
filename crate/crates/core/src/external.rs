//! Chat-completion adapter for an external language-model commander.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::commander::{Commander, CommanderError, CommanderOutput, DecisionInput, WirePlan};

pub const PROMPT_VERSION: &str = "tactical-commander/1";

pub const SYSTEM_PROMPT: &str = "\
You command one team of ground robots in a 2D arena. Coordinates are meters, origin at the bottom-left corner.
The user message is a JSON battlefield report (schema_version 1) with keys: units, interactions, regions, tick, arena, side.
Issue exactly one instruction for every alive unit of your side (units whose team equals `side`).
Allowed actions: Attack, Support, Retreat, Intercept, Lure, Cooperate, Contain.
Attack, Contain, Lure, Intercept and Cooperate need a target (team-local index of an opposing unit).
Support and Cooperate may name a partner (team-local index of a friendly unit).
Reply with a single JSON document and nothing else:
{\"instructions\":[{\"agent\":0,\"action\":\"Attack\",\"waypoint\":[x,y],\"target\":0,\"partner\":null}]}";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExternalConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(skip)]
    pub api_key: Option<String>,
    pub timeout_secs: f64,
    pub temperature: f64,
}

impl ExternalConfig {
    /// Endpoint from `ENDPOINT_URL` and key from `API_KEY`.
    pub fn from_env(model: &str, timeout_secs: f64) -> Option<Self> {
        let endpoint = std::env::var("ENDPOINT_URL").ok()?;
        Some(Self { endpoint, model: model.to_string(), api_key: std::env::var("API_KEY").ok(), timeout_secs, temperature: 0.0 })
    }
}

pub struct ExternalCommander {
    config: ExternalConfig,
    agent: ureq::Agent,
}

impl ExternalCommander {
    pub fn new(config: ExternalConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    fn post(&self, messages: &[Value]) -> Result<String, CommanderError> {
        let body = json!({ "model": self.config.model, "messages": messages, "temperature": self.config.temperature });
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(map_transport)?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(CommanderError::HttpStatus(status));
        }
        let text = resp.body_mut().read_to_string().map_err(map_transport)?;
        let v: Value = serde_json::from_str(&text).map_err(|e| CommanderError::MalformedReply(format!("response is not JSON: {e}")))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| CommanderError::MalformedReply("response has no choices[0].message.content".into()))
    }
}

fn map_transport(e: ureq::Error) -> CommanderError {
    match e {
        ureq::Error::Timeout(t) => CommanderError::Timeout(t.to_string()),
        ureq::Error::Io(io) if matches!(io.kind(), std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock) => CommanderError::Timeout(io.to_string()),
        ureq::Error::StatusCode(code) => CommanderError::HttpStatus(code),
        other => CommanderError::Transport(other.to_string()),
    }
}

impl Commander for ExternalCommander {
    fn name(&self) -> &str {
        "external"
    }

    fn decide(&mut self, input: &DecisionInput) -> Result<CommanderOutput, CommanderError> {
        let report = serde_json::to_string(input.report).map_err(|e| CommanderError::Internal(e.to_string()))?;
        let mut messages = vec![json!({"role": "system", "content": SYSTEM_PROMPT}), json!({"role": "user", "content": report})];
        let reply = self.post(&messages)?;
        match parse_plan(&reply) {
            Ok(plan) => Ok(CommanderOutput { instructions: plan.instructions, traces: Vec::new() }),
            Err(first) => {
                log::warn!("external commander reply rejected, retrying once: {first}");
                messages.push(json!({"role": "assistant", "content": reply}));
                messages.push(json!({
                    "role": "user",
                    "content": format!("Your reply could not be used: {first}. Reply with only the JSON document described in the system prompt."),
                }));
                let retry = self.post(&messages)?;
                let plan = parse_plan(&retry)?;
                Ok(CommanderOutput { instructions: plan.instructions, traces: Vec::new() })
            }
        }
    }
}

/// Extracts and decodes the instruction document from a model reply.
pub fn parse_plan(reply: &str) -> Result<WirePlan, CommanderError> {
    let value = extract_json(reply).ok_or_else(|| CommanderError::MalformedReply("no JSON object with an \"instructions\" key found".into()))?;
    serde_json::from_value(value).map_err(|e| CommanderError::MalformedReply(format!("instruction schema mismatch: {e}")))
}

fn with_instructions(text: &str) -> Option<Value> {
    let v: Value = serde_json::from_str(text.trim()).ok()?;
    v.get("instructions").is_some().then_some(v)
}

/// Finds a JSON object with an `instructions` key: the whole reply, then
/// any fenced code block, then any balanced `{...}` span.
pub fn extract_json(reply: &str) -> Option<Value> {
    if let Some(v) = with_instructions(reply) {
        return Some(v);
    }
    let mut rest = reply;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let body_start = after.find('\n').map_or(0, |n| n + 1);
        let Some(close) = after[body_start..].find("```") else { break };
        if let Some(v) = with_instructions(&after[body_start..body_start + close]) {
            return Some(v);
        }
        rest = &after[body_start + close + 3..];
    }
    for (start, _) in reply.match_indices('{') {
        if let Some(end) = balanced_end(&reply[start..]) {
            if let Some(v) = with_instructions(&reply[start..start + end]) {
                return Some(v);
            }
        }
    }
    None
}

/// Byte length of the balanced object starting at `s[0] == '{'`, skipping
/// braces inside strings.
fn balanced_end(s: &str) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}
