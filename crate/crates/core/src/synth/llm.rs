//! Chat-model proposer.
//!
//! The model is asked for a JSON object whose `mechanism_spec` field is a
//! mechanism in the crate's DSL. Each cell keeps its own conversation, so a
//! repair request continues the thread that produced the miss.

use std::thread::sleep;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::dsl::MechanismSpec;
use super::grid::TargetCell;
use super::proposer::{CellSession, Proposal, ProposeFailure, Proposer, TokenUsage};
use super::runner::AttemptRecord;
use crate::error::{Error, Result};

pub const SYSTEM_PROMPT: &str = r#"You design synthetic regression datasets whose difficulty for two reference models is controlled.

Every dataset is placed on a plane:
- x_score: mean cross-validated R^2 of a 5-nearest-neighbour regressor (uniform weights)
- y_score: mean cross-validated R^2 of ordinary least squares
Both scores come from the same five stratified folds.

You receive a target box on that plane and must describe a data-generating mechanism that should land inside it. Mechanisms are written in a JSON DSL, not in a programming language:

{
  "version": 1,
  "n_rows": <number or parameter name>,
  "latents": [{"name": "z", "dist": {"gaussian": {"mean": 0, "sd": 1}}} | {"name": "u", "dist": {"uniform": {"lo": -1, "hi": 1}}}],
  "observed_features": [{"expr": <expression over latents>, "noise": <observation noise sd>}],
  "target_expr": <expression over latents>,
  "noise": {"homoscedastic": {"sigma": s}} | {"heteroscedastic": {"feature": <column index>, "sigma": s, "scale": c}} | {"label_corruption": {"sigma": s, "fraction": f}},
  "distractor_count": <number of extra standard-normal columns>,
  "search": {"params": {"<name>": [values...]}, "policy": "first_in_box" | {"nearest_center": {"bonus": b}} | {"penalized": {"penalty": p, "y_weight": w}}}
}

Expressions are prefix arrays. A number is a constant and a string names a latent or a search parameter. Operators: ["+", a, b, ...], ["-", a, b], ["-", a], ["*", a, b, ...], ["sin", a], ["cos", a], ["abs", a], ["square", a], ["radial", a] meaning exp(-a^2), ["hinge", a, t] meaning max(0, a - t), ["select", c, a, b] meaning a where c > 0 else b.

The executor tries every combination of the search parameters (at most 10000), scores each candidate, and keeps one according to the policy. It is deterministic for a given seed. n_rows must be between 10 and 5000.

Reply with a single JSON object and nothing else. It has exactly these keys:
- "mechanism_brief": one or two sentences on the mechanism
- "mechanism_spec": the DSL object
- "expected_x_behavior": how the neighbour model should score and why
- "expected_y_behavior": how the linear model should score and why
No markdown, no code fences, no extra keys."#;

pub const INITIAL_TEMPLATE: &str = r#"Target box:
{target_description}

Propose a mechanism that should place the dataset inside this box. Aim for the centre, and use what you know about where local averaging and linear fits succeed or fail. A small parameter search in "search" is encouraged. Answer with the JSON object only."#;

pub const REPAIR_TEMPLATE: &str = r#"The last mechanism landed outside the target box.

Target box:
{target_description}

What happened:
{achieved_description}

Decide which score must go up and which must go down, then change the mechanism. Prefer the smallest change that moves it in the right direction; switch to a different mechanism only if the current one cannot reach the box. Answer with the JSON object only."#;

pub const NEXT_WITNESS_TEMPLATE: &str = r#"That mechanism was accepted. Another dataset for the same box is needed; it will be generated with a new seed.

Target box:
{target_description}

Propose a mechanism for it (reusing or varying the last one). Answer with the JSON object only."#;

pub const REASK_TEMPLATE: &str = r#"The reply could not be used: {problem}
Send the JSON object again, with exactly the four required keys and a valid mechanism_spec."#;

/// Fills `{name}` placeholders.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    vars.iter()
        .fold(template.to_string(), |acc, (k, v)| acc.replace(&format!("{{{k}}}"), v))
}

/// How the previous attempt turned out, for the repair prompt.
pub fn achieved_description(rec: &AttemptRecord) -> String {
    match (&rec.achieved, &rec.error) {
        (Some(s), _) => format!("x_score={:.6}, y_score={:.6} (outside the box)", s.x_score, s.y_score),
        (None, Some(e)) => format!("the attempt produced no scores: {e}"),
        (None, None) => "the attempt produced no scores".to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        ChatMessage {
            role: role.to_string(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatReply {
    pub content: String,
    pub tokens: Option<TokenUsage>,
}

/// Something that can answer a chat conversation.
pub trait ChatBackend: Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<ChatReply>;
}

/// Connection settings, usually read from the `[llm]` table of a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub retries: u32,
    pub backoff_ms: u64,
    pub temperature: Option<f64>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: String::new(),
            api_key_env: "LLM_API_KEY".into(),
            timeout_secs: 120,
            retries: 3,
            backoff_ms: 2000,
            temperature: None,
        }
    }
}

/// Chat-completions client over HTTPS.
pub struct HttpChatBackend {
    config: LlmConfig,
    api_key: String,
    agent: ureq::Agent,
}

impl HttpChatBackend {
    pub fn new(config: LlmConfig) -> Result<Self> {
        if config.model.is_empty() {
            return Err(Error::Parameter("llm.model must be set".into()));
        }
        let api_key = std::env::var(&config.api_key_env)
            .map_err(|_| Error::Parameter(format!("environment variable {} is not set", config.api_key_env)))?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        Ok(HttpChatBackend { config, api_key, agent })
    }

    fn call(&self, body: &Value) -> std::result::Result<Value, (bool, String)> {
        let resp = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body);
        match resp {
            Ok(r) => r.into_body().read_json::<Value>().map_err(|e| (true, e.to_string())),
            Err(ureq::Error::StatusCode(code)) => Err((code == 429 || code >= 500, format!("HTTP status {code}"))),
            Err(e) => Err((true, e.to_string())),
        }
    }
}

impl ChatBackend for HttpChatBackend {
    fn complete(&self, messages: &[ChatMessage]) -> Result<ChatReply> {
        let mut body = json!({"model": self.config.model, "messages": messages});
        if let Some(t) = self.config.temperature {
            body["temperature"] = json!(t);
        }
        let mut delay = self.config.backoff_ms;
        let mut tries = 0;
        let value = loop {
            match self.call(&body) {
                Ok(v) => break v,
                Err((retriable, msg)) => {
                    if !retriable || tries >= self.config.retries {
                        return Err(Error::Proposer(format!("chat request failed: {msg}")));
                    }
                    tries += 1;
                    sleep(Duration::from_millis(delay));
                    delay = delay.saturating_mul(2);
                }
            }
        };
        let content = value["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| Error::Proposer("chat response has no message content".into()))?
            .to_string();
        let tokens = value.get("usage").map(|u| TokenUsage {
            input: u["prompt_tokens"].as_u64().unwrap_or(0),
            output: u["completion_tokens"].as_u64().unwrap_or(0),
        });
        Ok(ChatReply { content, tokens })
    }
}

/// The structured reply expected from the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelAnswer {
    pub mechanism_brief: String,
    pub mechanism_spec: MechanismSpec,
    pub expected_x_behavior: String,
    pub expected_y_behavior: String,
}

/// Parses and validates a reply.
pub fn parse_answer(content: &str) -> std::result::Result<ModelAnswer, String> {
    let answer: ModelAnswer = serde_json::from_str(content.trim()).map_err(|e| e.to_string())?;
    answer.mechanism_spec.validate().map_err(|e| e.to_string())?;
    Ok(answer)
}

pub struct LlmProposer<B: ChatBackend> {
    pub backend: B,
    pub model_id: String,
}

impl<B: ChatBackend> LlmProposer<B> {
    pub fn new(backend: B, model_id: impl Into<String>) -> Self {
        LlmProposer {
            backend,
            model_id: model_id.into(),
        }
    }
}

struct LlmSession<'a, B: ChatBackend> {
    backend: &'a B,
    cell: TargetCell,
    thread: Vec<ChatMessage>,
}

fn add_tokens(a: Option<TokenUsage>, b: Option<TokenUsage>) -> Option<TokenUsage> {
    match (a, b) {
        (None, None) => None,
        (a, b) => {
            let (a, b) = (a.unwrap_or_default(), b.unwrap_or_default());
            Some(TokenUsage {
                input: a.input + b.input,
                output: a.output + b.output,
            })
        }
    }
}

impl<B: ChatBackend> LlmSession<'_, B> {
    fn ask(&mut self, user: String) -> Result<ChatReply> {
        self.thread.push(ChatMessage::new("user", user));
        let reply = self.backend.complete(&self.thread)?;
        self.thread.push(ChatMessage::new("assistant", reply.content.clone()));
        Ok(reply)
    }
}

impl<B: ChatBackend> CellSession for LlmSession<'_, B> {
    fn propose(&mut self, _attempt: usize, history: &[AttemptRecord]) -> std::result::Result<Proposal, ProposeFailure> {
        let target = self.cell.describe();
        let prompt = match history.last() {
            None => render(INITIAL_TEMPLATE, &[("target_description", &target)]),
            Some(r) if r.accepted => render(NEXT_WITNESS_TEMPLATE, &[("target_description", &target)]),
            Some(r) => render(
                REPAIR_TEMPLATE,
                &[
                    ("target_description", &target),
                    ("achieved_description", &achieved_description(r)),
                ],
            ),
        };
        let first = self.ask(prompt).map_err(ProposeFailure::Fatal)?;
        let mut tokens = first.tokens;
        let problem = match parse_answer(&first.content) {
            Ok(a) => {
                return Ok(Proposal {
                    spec: a.mechanism_spec,
                    brief: a.mechanism_brief,
                    tokens,
                })
            }
            Err(p) => p,
        };
        let second = self
            .ask(render(REASK_TEMPLATE, &[("problem", &problem)]))
            .map_err(ProposeFailure::Fatal)?;
        tokens = add_tokens(tokens, second.tokens);
        match parse_answer(&second.content) {
            Ok(a) => Ok(Proposal {
                spec: a.mechanism_spec,
                brief: a.mechanism_brief,
                tokens,
            }),
            Err(p) => Err(ProposeFailure::Invalid {
                reason: format!("unusable reply after one re-ask: {p}"),
                tokens,
            }),
        }
    }
}

impl<B: ChatBackend> Proposer for LlmProposer<B> {
    fn id(&self) -> String {
        format!("llm({})", self.model_id)
    }

    fn session(&self, cell: &TargetCell) -> Box<dyn CellSession + '_> {
        Box::new(LlmSession {
            backend: &self.backend,
            cell: *cell,
            thread: vec![ChatMessage::new("system", SYSTEM_PROMPT)],
        })
    }
}
