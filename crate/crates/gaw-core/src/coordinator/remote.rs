//! Remote coordinator: one chat-completion-compatible HTTPS endpoint, prompt
//! templates shipped as versioned assets, exactly one retry when a reply
//! fails schema validation.
//!
//! The endpoint and model come from config; the API key comes from an
//! environment variable only and is never written to disk or logs.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    enforce_budget, validate_response, Coordinator, CoordinatorError, CoordinatorRequest,
    CoordinatorResponse, Role, DEFAULT_CONTEXT_BUDGET,
};

const PLAN_PROMPT: &str = include_str!("prompts/plan_v1.txt");
const SCHEMA_PROMPT: &str = include_str!("prompts/schema_v1.txt");
const REFINE_PROMPT: &str = include_str!("prompts/refine_v1.txt");
const REPORT_PROMPT: &str = include_str!("prompts/report_v1.txt");

pub fn prompt_for(role: Role) -> &'static str {
    match role {
        Role::Plan => PLAN_PROMPT,
        Role::Schema => SCHEMA_PROMPT,
        Role::Refine => REFINE_PROMPT,
        Role::Report => REPORT_PROMPT,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    /// Endpoint base, e.g. "https://api.example.com/v1"; the client appends
    /// /chat/completions.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token. The key
    /// itself is read from the environment and never persisted.
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_budget_chars")]
    pub budget_chars: usize,
}

fn default_api_key_env() -> String {
    "GAW_API_KEY".to_string()
}

fn default_timeout_secs() -> u64 {
    30
}

fn default_budget_chars() -> usize {
    DEFAULT_CONTEXT_BUDGET
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            base_url: String::new(),
            model: String::new(),
            api_key_env: "GAW_API_KEY".to_string(),
            timeout_secs: 30,
            budget_chars: DEFAULT_CONTEXT_BUDGET,
        }
    }
}

pub struct RemoteCoordinator {
    config: RemoteConfig,
    api_key: String,
    agent: ureq::Agent,
}

impl RemoteCoordinator {
    pub fn new(config: RemoteConfig) -> Result<Self, CoordinatorError> {
        if config.base_url.is_empty() {
            return Err(CoordinatorError::TransportError(
                "remote coordinator needs a base_url".into(),
            ));
        }
        if config.model.is_empty() {
            return Err(CoordinatorError::TransportError(
                "remote coordinator needs a model name".into(),
            ));
        }
        let api_key = std::env::var(&config.api_key_env).map_err(|_| {
            CoordinatorError::TransportError(format!(
                "api key environment variable {} is not set",
                config.api_key_env
            ))
        })?;
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build();
        Ok(RemoteCoordinator { config, api_key, agent })
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    /// One completion call; returns the assistant message content verbatim.
    fn call(&self, messages: &[Value]) -> Result<String, CoordinatorError> {
        let body = json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": 0
        });
        let response = self
            .agent
            .post(&self.endpoint())
            .set("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body)
            .map_err(|e| match e {
                ureq::Error::Status(code, resp) => {
                    let body = resp.into_string().unwrap_or_default();
                    let snippet: String = body.chars().take(200).collect();
                    CoordinatorError::TransportError(format!("endpoint returned {code}: {snippet}"))
                }
                ureq::Error::Transport(t) => CoordinatorError::TransportError(t.to_string()),
            })?;
        let value: Value = response
            .into_json()
            .map_err(|e| CoordinatorError::TransportError(format!("unreadable response body: {e}")))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| {
                CoordinatorError::TransportError(
                    "completion response carries no message content".into(),
                )
            })
    }
}

/// Parses assistant content as JSON, tolerating a markdown code fence.
fn parse_structured(content: &str) -> Result<Value, String> {
    let trimmed = content.trim();
    let inner = if let Some(rest) = trimmed.strip_prefix("```") {
        let rest = rest.strip_prefix("json").unwrap_or(rest);
        rest.trim_start_matches('\n')
            .trim_end_matches('`')
            .trim_end_matches('\n')
    } else {
        trimmed
    };
    serde_json::from_str(inner).map_err(|e| format!("reply is not valid JSON: {e}"))
}

impl Coordinator for RemoteCoordinator {
    fn complete(&self, request: &CoordinatorRequest) -> Result<CoordinatorResponse, CoordinatorError> {
        enforce_budget(request, self.config.budget_chars)?;
        let user_payload = json!({
            "intent": request.intent,
            "context": request.context,
            "response_schema": request.schema_id
        });
        let mut messages = vec![
            json!({"role": "system", "content": prompt_for(request.role)}),
            json!({"role": "user", "content": user_payload.to_string()}),
        ];
        let mut transcripts: Vec<String> = Vec::new();
        let mut last_error = String::new();
        for attempt in 0..2 {
            if attempt == 1 {
                messages.push(json!({"role": "assistant", "content": transcripts[0]}));
                messages.push(json!({
                    "role": "user",
                    "content": format!(
                        "Your previous reply failed validation: {last_error}\n\
                         Reply again with corrected JSON only, no prose."
                    )
                }));
            }
            let content = self.call(&messages)?;
            transcripts.push(content.clone());
            match parse_structured(&content).and_then(|value| {
                validate_response(&request.schema_id, &value).map(|()| value)
            }) {
                Ok(value) => return Ok(CoordinatorResponse { value, transcripts }),
                Err(e) => last_error = e,
            }
        }
        Err(CoordinatorError::SchemaValidationFailed {
            schema_id: request.schema_id.clone(),
            detail: last_error,
            transcripts,
        })
    }
}
