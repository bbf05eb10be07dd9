//! LLM-backed planning over a chat-completions style JSON protocol.
//!
//! Request (POST, `Content-Type: application/json`, optional
//! `Authorization: Bearer <key>`):
//!
//! ```json
//! {"model": "...", "messages": [{"role": "user", "content": "..."}], "temperature": 0, "max_tokens": 1024}
//! ```
//!
//! Response: `{"choices": [{"message": {"content": "<JSON array of subtasks>"}}]}`.
//! A rejected reply is answered with one corrective message per retry.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::prompt::{render_prompt, render_replan_prompt};
use super::{
    instruction_hash, validate_subtasks, FailureInfo, PlanError, PlanSource, Planner, ReplanOutcome, RuleBasedPlanner,
    Subtask, TaskPlan,
};
use crate::env::WorldSummary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub endpoint: Option<String>,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_s: u64,
    pub max_retries: u32,
    pub max_tokens: u32,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: None,
            model: "gpt-4o".into(),
            api_key_env: "MANIP_LLM_API_KEY".into(),
            timeout_s: 30,
            max_retries: 2,
            max_tokens: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    fn new(role: &str, content: impl Into<String>) -> Self {
        Self { role: role.into(), content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

/// Record of one planning call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmExchange {
    pub prompt: String,
    pub model: String,
    pub max_tokens: u32,
    pub temperature: f64,
    /// Content of the last reply.
    pub response: String,
    pub parsed: Option<Vec<Subtask>>,
    pub error: Option<String>,
    pub latency_ms: u64,
    pub retries_used: u32,
}

/// Carries one request body to the endpoint and returns the response body.
pub trait Transport {
    fn post(&mut self, body: &str) -> Result<String, PlanError>;
}

/// Blocking HTTP transport.
pub struct HttpTransport {
    url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(url: &str, api_key: Option<String>, timeout: Duration) -> Self {
        let agent =
            ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        Self { url: url.into(), api_key, agent }
    }
}

impl Transport for HttpTransport {
    fn post(&mut self, body: &str) -> Result<String, PlanError> {
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send(body).map_err(|e| PlanError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.body_mut().read_to_string().map_err(|e| PlanError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(PlanError::Transport(format!("HTTP {status}: {}", text.chars().take(200).collect::<String>())));
        }
        Ok(text)
    }
}

/// Transport backed by a closure; used for offline runs and tests.
pub struct FnTransport<F>(pub F);

impl<F: FnMut(&str) -> Result<String, PlanError>> Transport for FnTransport<F> {
    fn post(&mut self, body: &str) -> Result<String, PlanError> {
        (self.0)(body)
    }
}

/// Wraps `content` in a chat-completions response body.
pub fn chat_response(content: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

/// Offline stand-in for a compliant model: answers every prompt with the
/// rule-based plan for the prompt's instruction and world state. When the
/// world shows an object already in the gripper, the approach and grasp of
/// that object are left out.
pub fn rule_echo_reply(body: &str) -> Result<String, PlanError> {
    let req: ChatRequest = serde_json::from_str(body).map_err(|e| PlanError::Transport(e.to_string()))?;
    let prompt = &req.messages.first().ok_or_else(|| PlanError::Transport("no messages".into()))?.content;
    let world_start = prompt.find("World state:\n").ok_or_else(|| PlanError::Transport("no world".into()))? + 13;
    let world_end = prompt.find("\n\nInstruction: ").ok_or_else(|| PlanError::Transport("no instruction".into()))?;
    let world =
        WorldSummary::from_json(&prompt[world_start..world_end]).map_err(|e| PlanError::Transport(e.to_string()))?;
    let instruction = prompt[world_end + 15..].lines().next().unwrap_or_default();

    let mut unheld = world.clone();
    unheld.robot.held = None;
    let mut subtasks = RuleBasedPlanner.plan(instruction, &unheld)?.subtasks;
    if let Some(h) = &world.robot.held {
        let holds =
            |s: &Subtask| matches!(s, Subtask::Grasp { object } if object.resolve(&world).is_ok_and(|o| &o.id == h));
        if let Some(gi) = subtasks.iter().position(holds) {
            subtasks.remove(gi);
            if gi > 0 && matches!(subtasks[gi - 1], Subtask::MoveTo { .. }) {
                subtasks.remove(gi - 1);
            }
        }
    }
    Ok(chat_response(&serde_json::to_string(&subtasks).expect("subtasks serialize")))
}

/// Endpoint name of the offline rule-echo model.
pub const RULE_ECHO_ENDPOINT: &str = "mock://rule-echo";

pub struct LlmClient {
    config: LlmConfig,
    transport: Box<dyn Transport + Send>,
}

enum Rejection {
    Schema(String),
    Plan(PlanError),
}

impl Rejection {
    fn message(&self) -> String {
        match self {
            Rejection::Schema(m) => m.clone(),
            Rejection::Plan(e) => e.to_string(),
        }
    }
}

fn extract_content(body: &str) -> Result<String, Rejection> {
    let v: serde_json::Value =
        serde_json::from_str(body).map_err(|e| Rejection::Schema(format!("response is not JSON: {e}")))?;
    v.pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .map(str::to_owned)
        .ok_or_else(|| Rejection::Schema("response lacks choices[0].message.content".into()))
}

fn parse_reply(content: &str, world: &WorldSummary) -> Result<Vec<Subtask>, Rejection> {
    let subtasks: Vec<Subtask> = serde_json::from_str(content.trim())
        .map_err(|e| Rejection::Schema(format!("reply is not a JSON array of subtasks: {e}")))?;
    validate_subtasks(&subtasks, world).map_err(Rejection::Plan)?;
    Ok(subtasks)
}

impl LlmClient {
    /// HTTP client for the configured endpoint; the API key, if any, comes from
    /// the environment variable named in the config. The endpoint
    /// [`RULE_ECHO_ENDPOINT`] selects the offline [`rule_echo_reply`] model.
    pub fn from_config(config: LlmConfig) -> Result<Self, PlanError> {
        let url = config
            .endpoint
            .clone()
            .filter(|u| !u.trim().is_empty())
            .ok_or_else(|| PlanError::Config("the llm planner needs an endpoint URL".into()))?;
        if url == RULE_ECHO_ENDPOINT {
            return Ok(Self::with_transport(config, FnTransport(rule_echo_reply)));
        }
        if !(url.starts_with("http://") || url.starts_with("https://")) {
            return Err(PlanError::Config(format!("endpoint `{url}` is not an http(s) URL")));
        }
        let key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        let transport = HttpTransport::new(&url, key, Duration::from_secs(config.timeout_s));
        Ok(Self::with_transport(config, transport))
    }

    pub fn with_transport(config: LlmConfig, transport: impl Transport + Send + 'static) -> Self {
        Self { config, transport: Box::new(transport) }
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    /// Sends `prompt`, re-prompting with the rejection reason up to
    /// `max_retries` times, and returns validated subtasks.
    pub fn request(&mut self, prompt: &str, world: &WorldSummary) -> (Result<Vec<Subtask>, PlanError>, LlmExchange) {
        let started = Instant::now();
        let mut messages = vec![ChatMessage::new("user", prompt)];
        let mut exchange = LlmExchange {
            prompt: prompt.into(),
            model: self.config.model.clone(),
            max_tokens: self.config.max_tokens,
            temperature: 0.0,
            response: String::new(),
            parsed: None,
            error: None,
            latency_ms: 0,
            retries_used: 0,
        };
        let mut attempt = 0;
        let result = loop {
            let body = serde_json::to_string(&ChatRequest {
                model: self.config.model.clone(),
                messages: messages.clone(),
                temperature: 0.0,
                max_tokens: self.config.max_tokens,
            })
            .expect("request serializes");
            let raw = match self.transport.post(&body) {
                Ok(r) => r,
                Err(e) => break Err(e),
            };
            let outcome = extract_content(&raw).and_then(|content| {
                exchange.response = content.clone();
                parse_reply(&content, world)
            });
            match outcome {
                Ok(subtasks) => break Ok(subtasks),
                Err(rejection) if attempt >= self.config.max_retries => {
                    break Err(match rejection {
                        Rejection::Plan(e @ (PlanError::UnresolvableRef(_) | PlanError::AmbiguousRef { .. })) => e,
                        other => PlanError::SchemaError { message: other.message(), retries: attempt },
                    });
                }
                Err(rejection) => {
                    attempt += 1;
                    messages.push(ChatMessage::new("assistant", exchange.response.clone()));
                    messages.push(ChatMessage::new(
                        "user",
                        format!(
                            "Your reply was rejected: {}. Reply again with only the corrected JSON array of subtasks.",
                            rejection.message()
                        ),
                    ));
                }
            }
        };
        exchange.retries_used = attempt;
        exchange.latency_ms = started.elapsed().as_millis() as u64;
        match &result {
            Ok(s) => exchange.parsed = Some(s.clone()),
            Err(e) => exchange.error = Some(e.to_string()),
        }
        (result, exchange)
    }
}

/// Plans with an LLM; every call is logged in `exchanges`.
pub struct LlmPlanner {
    pub client: LlmClient,
    pub exchanges: Vec<LlmExchange>,
}

impl LlmPlanner {
    pub fn new(client: LlmClient) -> Self {
        Self { client, exchanges: Vec::new() }
    }
}

pub fn plan_llm(
    instruction: &str,
    world: &WorldSummary,
    client: &mut LlmClient,
) -> (Result<TaskPlan, PlanError>, LlmExchange) {
    if instruction.trim().is_empty() {
        return (Err(PlanError::EmptyInstruction), empty_exchange(client));
    }
    let (r, ex) = client.request(&render_prompt(instruction, world), world);
    let plan = r.map(|subtasks| TaskPlan {
        subtasks,
        source: PlanSource::Llm,
        instruction_hash: instruction_hash(instruction),
    });
    (plan, ex)
}

fn empty_exchange(client: &LlmClient) -> LlmExchange {
    LlmExchange {
        prompt: String::new(),
        model: client.config.model.clone(),
        max_tokens: client.config.max_tokens,
        temperature: 0.0,
        response: String::new(),
        parsed: None,
        error: Some(PlanError::EmptyInstruction.to_string()),
        latency_ms: 0,
        retries_used: 0,
    }
}

impl Planner for LlmPlanner {
    fn source(&self) -> PlanSource {
        PlanSource::Llm
    }

    fn plan(&mut self, instruction: &str, world: &WorldSummary) -> Result<TaskPlan, PlanError> {
        let (r, ex) = plan_llm(instruction, world, &mut self.client);
        self.exchanges.push(ex);
        r
    }

    fn replan(
        &mut self,
        instruction: &str,
        prev: &TaskPlan,
        world: &WorldSummary,
        failure: &FailureInfo,
    ) -> Result<ReplanOutcome, PlanError> {
        if failure.goal_satisfied {
            return Ok(ReplanOutcome::Complete);
        }
        let prompt = render_replan_prompt(instruction, world, prev, failure);
        let (r, ex) = self.client.request(&prompt, world);
        self.exchanges.push(ex);
        Ok(ReplanOutcome::Plan(TaskPlan {
            subtasks: r?,
            source: PlanSource::Llm,
            instruction_hash: prev.instruction_hash.clone(),
        }))
    }
}
