//! Decision-makers for seats and bench runs.
//!
//! An [`AgentBinding`] is either a remote chat-completions model or a
//! scripted policy. [`act`] renders the task prompt, obtains a reply,
//! validates it against the task's answer shape and falls back to a seeded
//! legal choice when the retry budget runs out. Every call yields a
//! [`DecisionRecord`] with enough detail to re-run the parsing offline.

pub mod prompt;
pub mod remote;
pub mod reply;
pub mod scripted;

use std::sync::Arc;

use rand::RngExt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Card, SeatId};
use crate::rng::StreamRng;

pub use prompt::{render_prompt, PromptImage, PromptPayload};
pub use remote::{ChatTransport, HttpTransport, ModelEndpointConfig, TransportError};
pub use reply::{parse_reply, AgentReply, Answer, AnswerShape, ReplyError};
pub use scripted::{PolicyId, ScriptedPolicy};

pub const DEFAULT_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_RETRY_BUDGET: u32 = 2;
pub const FALLBACK_CLUE: &str = "untitled";
pub const FALLBACK_SCORE: u32 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    SelectTarget,
    GenerateClue,
    SelectDistractor,
    GuessDirect,
    EntailScore,
    /// Bench curation: one abstract phrase per corpus image.
    Caption,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::SelectTarget => "select_target",
            Task::GenerateClue => "generate_clue",
            Task::SelectDistractor => "select_distractor",
            Task::GuessDirect => "guess_direct",
            Task::EntailScore => "entail_score",
            Task::Caption => "caption",
        }
    }
}

/// What the agent is allowed to see for one decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum TaskContext {
    SelectTarget { hand: Vec<Card> },
    GenerateClue { target: Card },
    SelectDistractor { clue: String, hand: Vec<Card> },
    GuessDirect {
        clue: String,
        candidates: Vec<Card>,
        /// 1-based position of the listener's own card; never a legal answer.
        own_position: Option<usize>,
    },
    EntailScore { clue: String, candidate: Card },
    Caption { image: Card },
}

impl TaskContext {
    pub fn task(&self) -> Task {
        match self {
            TaskContext::SelectTarget { .. } => Task::SelectTarget,
            TaskContext::GenerateClue { .. } => Task::GenerateClue,
            TaskContext::SelectDistractor { .. } => Task::SelectDistractor,
            TaskContext::GuessDirect { .. } => Task::GuessDirect,
            TaskContext::EntailScore { .. } => Task::EntailScore,
            TaskContext::Caption { .. } => Task::Caption,
        }
    }

    pub fn expected_shape(&self) -> AnswerShape {
        match self {
            TaskContext::SelectTarget { hand } | TaskContext::SelectDistractor { hand, .. } => {
                AnswerShape::Choice { n: hand.len() }
            }
            TaskContext::GuessDirect { candidates, .. } => AnswerShape::Choice { n: candidates.len() },
            TaskContext::EntailScore { .. } => AnswerShape::Score,
            TaskContext::GenerateClue { .. } | TaskContext::Caption { .. } => AnswerShape::Text,
        }
    }

    fn excluded_choice(&self) -> Option<usize> {
        match self {
            TaskContext::GuessDirect { own_position, .. } => *own_position,
            _ => None,
        }
    }
}

/// Ground truth handed to scripted policies only. Remote models never see it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Hint {
    pub target_position: Option<usize>,
    pub candidate_is_target: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentBinding {
    pub name: String,
    #[serde(flatten)]
    pub kind: AgentKind,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_retry_budget")]
    pub retry_budget: u32,
}

fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}

fn default_retry_budget() -> u32 {
    DEFAULT_RETRY_BUDGET
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentKind {
    RemoteModel { endpoint: ModelEndpointConfig },
    Scripted { policy: ScriptedPolicy },
}

impl AgentBinding {
    pub fn scripted(name: impl Into<String>, policy: ScriptedPolicy) -> Self {
        AgentBinding {
            name: name.into(),
            kind: AgentKind::Scripted { policy },
            temperature: DEFAULT_TEMPERATURE,
            retry_budget: DEFAULT_RETRY_BUDGET,
        }
    }

    pub fn remote(name: impl Into<String>, endpoint: ModelEndpointConfig) -> Self {
        AgentBinding {
            name: name.into(),
            kind: AgentKind::RemoteModel { endpoint },
            temperature: DEFAULT_TEMPERATURE,
            retry_budget: DEFAULT_RETRY_BUDGET,
        }
    }

    pub fn is_scripted(&self) -> bool {
        matches!(self.kind, AgentKind::Scripted { .. })
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if self.name.trim().is_empty() {
            return Err(AgentError::InvalidBinding("agent name is empty".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(AgentError::InvalidBinding(format!(
                "{}: temperature must be >= 0, got {}",
                self.name, self.temperature
            )));
        }
        if let AgentKind::RemoteModel { endpoint } = &self.kind {
            endpoint.validate().map_err(|e| AgentError::InvalidBinding(format!("{}: {e}", self.name)))?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("task context is missing {0}")]
    MissingContextField(&'static str),
    #[error("agent {agent} unreachable after {attempts} attempts: {detail}")]
    EndpointUnreachable {
        agent: String,
        attempts: u32,
        detail: String,
    },
    #[error("invalid policy parameter: {0}")]
    InvalidPolicyParam(String),
    #[error("invalid agent binding: {0}")]
    InvalidBinding(String),
}

/// Audit trail of one decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub agent: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seat: Option<SeatId>,
    pub task: Task,
    pub fallback: bool,
    pub attempts: u32,
    /// Verbatim endpoint replies, in order. Empty for scripted agents.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub raw_replies: Vec<String>,
    pub answer: Answer,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub reasoning: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decision {
    pub answer: Answer,
    pub record: DecisionRecord,
}

/// Shared, thread-safe execution context for [`act`].
#[derive(Clone)]
pub struct AgentRuntime {
    pub transport: Arc<dyn ChatTransport>,
    /// Surface [`AgentError::EndpointUnreachable`] instead of falling back.
    pub abort_on_failure: bool,
}

impl AgentRuntime {
    pub fn new(transport: Arc<dyn ChatTransport>) -> Self {
        AgentRuntime {
            transport,
            abort_on_failure: false,
        }
    }

    /// A runtime whose transport refuses every call; fine for all-scripted rosters.
    pub fn offline() -> Self {
        AgentRuntime::new(Arc::new(remote::OfflineTransport))
    }

    pub fn with_abort_on_failure(mut self, abort: bool) -> Self {
        self.abort_on_failure = abort;
        self
    }
}

impl std::fmt::Debug for AgentRuntime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AgentRuntime")
            .field("abort_on_failure", &self.abort_on_failure)
            .finish_non_exhaustive()
    }
}

/// The documented fallback for a context: a seeded-uniform legal choice,
/// the midpoint score, or the placeholder clue.
pub fn fallback_answer(context: &TaskContext, rng: &mut StreamRng) -> Answer {
    match context.expected_shape() {
        AnswerShape::Choice { n } => {
            let legal = scripted::legal_positions(n, context.excluded_choice());
            if legal.is_empty() {
                Answer::Choice(1)
            } else {
                Answer::Choice(legal[rng.random_range(0..legal.len())])
            }
        }
        AnswerShape::Score => Answer::Score(FALLBACK_SCORE),
        AnswerShape::Text => Answer::Text(FALLBACK_CLUE.to_string()),
    }
}

/// Obtain one validated decision from `binding`.
pub fn act(
    binding: &AgentBinding,
    context: &TaskContext,
    hint: &Hint,
    rng: &mut StreamRng,
    runtime: &AgentRuntime,
) -> Result<Decision, AgentError> {
    let task = context.task();
    match &binding.kind {
        AgentKind::Scripted { policy } => {
            let answer = scripted::decide(policy, context, hint, rng)?;
            let record = DecisionRecord {
                agent: binding.name.clone(),
                seat: None,
                task,
                fallback: false,
                attempts: 1,
                raw_replies: Vec::new(),
                answer: answer.clone(),
                reasoning: String::new(),
                errors: Vec::new(),
            };
            Ok(Decision { answer, record })
        }
        AgentKind::RemoteModel { endpoint } => act_remote(binding, endpoint, context, rng, runtime),
    }
}

fn act_remote(
    binding: &AgentBinding,
    endpoint: &ModelEndpointConfig,
    context: &TaskContext,
    rng: &mut StreamRng,
    runtime: &AgentRuntime,
) -> Result<Decision, AgentError> {
    let payload = render_prompt(context)?;
    let shape = context.expected_shape();
    let excluded = context.excluded_choice();

    let mut raw_replies = Vec::new();
    let mut errors = Vec::new();
    let mut failures = 0u32;
    let mut empty_replies = 0u32;
    let mut attempts = 0u32;
    let mut last_was_transport;

    loop {
        attempts += 1;
        match runtime.transport.complete(endpoint, &payload, binding.temperature) {
            Err(e) => {
                tracing::warn!(agent = %binding.name, task = task_name(context), error = %e, "model call failed");
                errors.push(e.to_string());
                failures += 1;
                last_was_transport = true;
            }
            Ok(raw) => {
                last_was_transport = false;
                let parsed = parse_reply(&raw, shape);
                raw_replies.push(raw);
                match parsed {
                    Ok(reply) if excluded.is_some() && reply.answer.choice() == excluded => {
                        errors.push(format!("answer {} is the agent's own card", excluded.unwrap_or(0)));
                        failures += 1;
                    }
                    Ok(reply) => {
                        let record = DecisionRecord {
                            agent: binding.name.clone(),
                            seat: None,
                            task: context.task(),
                            fallback: false,
                            attempts,
                            raw_replies,
                            answer: reply.answer.clone(),
                            reasoning: reply.reasoning,
                            errors,
                        };
                        return Ok(Decision {
                            answer: reply.answer,
                            record,
                        });
                    }
                    Err(ReplyError::EmptyAnswer) if shape == AnswerShape::Text => {
                        // An empty clue earns exactly one re-prompt.
                        errors.push(ReplyError::EmptyAnswer.to_string());
                        empty_replies += 1;
                        if empty_replies >= 2 {
                            break;
                        }
                        continue;
                    }
                    Err(e) => {
                        errors.push(e.to_string());
                        failures += 1;
                    }
                }
            }
        }
        if failures > binding.retry_budget {
            break;
        }
    }

    if runtime.abort_on_failure && last_was_transport {
        return Err(AgentError::EndpointUnreachable {
            agent: binding.name.clone(),
            attempts,
            detail: errors.last().cloned().unwrap_or_default(),
        });
    }

    let answer = fallback_answer(context, rng);
    let record = DecisionRecord {
        agent: binding.name.clone(),
        seat: None,
        task: context.task(),
        fallback: true,
        attempts,
        raw_replies,
        answer: answer.clone(),
        reasoning: String::new(),
        errors,
    };
    Ok(Decision { answer, record })
}

fn task_name(context: &TaskContext) -> &'static str {
    context.task().as_str()
}
