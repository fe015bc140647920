//! Deterministic test-double policies.
//!
//! Each policy is a pure function of the task context, the privileged
//! [`Hint`] the harness passes to scripted seats, the policy parameters and
//! the seat's random stream.

use std::collections::BTreeMap;
use std::path::Path;

use rand::RngExt;
use serde::{Deserialize, Serialize};

use super::{AgentError, Answer, Hint, TaskContext};
use crate::engine::Card;
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyId {
    /// Always picks the target when guessing; rates the target 100 and everything else 0.
    OracleListener,
    /// Uniform choices and ratings from the seat stream.
    RandomUniform,
    /// First card, first legal candidate, rating 50.
    FirstCard,
    /// Clues and captions are the card's literal description.
    LiteralStoryteller,
    /// Rates every candidate with the same `score` parameter (default 50).
    FixedScoreEntailer,
}

impl PolicyId {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyId::OracleListener => "oracle_listener",
            PolicyId::RandomUniform => "random_uniform",
            PolicyId::FirstCard => "first_card",
            PolicyId::LiteralStoryteller => "literal_storyteller",
            PolicyId::FixedScoreEntailer => "fixed_score_entailer",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedPolicy {
    pub id: PolicyId,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, serde_json::Value>,
}

impl ScriptedPolicy {
    pub fn new(id: PolicyId) -> Self {
        ScriptedPolicy {
            id,
            params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    fn fixed_score(&self) -> Result<u32, AgentError> {
        match self.params.get("score") {
            None => Ok(50),
            Some(v) => v
                .as_u64()
                .filter(|s| *s <= 100)
                .map(|s| s as u32)
                .ok_or_else(|| AgentError::InvalidPolicyParam(format!("score must be 0..=100, got {v}"))),
        }
    }
}

/// The literal description of a card: its label if the corpus has one,
/// otherwise the asset's file stem.
pub fn literal_description(card: &Card) -> String {
    if let Some(d) = card.description.as_deref().filter(|d| !d.trim().is_empty()) {
        return d.to_string();
    }
    let stem = Path::new(&card.asset_ref)
        .file_stem()
        .and_then(|s| s.to_str())
        .filter(|s| !s.is_empty());
    match stem {
        Some(stem) => format!("image {stem}"),
        None => format!("card {}", card.id),
    }
}

/// Positions `1..=n` other than `excluded`.
pub fn legal_positions(n: usize, excluded: Option<usize>) -> Vec<usize> {
    (1..=n).filter(|p| Some(*p) != excluded).collect()
}

pub fn decide(
    policy: &ScriptedPolicy,
    context: &TaskContext,
    hint: &Hint,
    rng: &mut StreamRng,
) -> Result<Answer, AgentError> {
    use PolicyId::*;
    let uniform = |rng: &mut StreamRng, options: &[usize]| options[rng.random_range(0..options.len())];

    let answer = match context {
        TaskContext::SelectTarget { hand } | TaskContext::SelectDistractor { hand, .. } => {
            if hand.is_empty() {
                return Err(AgentError::MissingContextField("hand"));
            }
            match policy.id {
                RandomUniform => Answer::Choice(uniform(rng, &legal_positions(hand.len(), None))),
                _ => Answer::Choice(1),
            }
        }
        TaskContext::GenerateClue { target: card } | TaskContext::Caption { image: card } => {
            Answer::Text(literal_description(card))
        }
        TaskContext::GuessDirect {
            candidates,
            own_position,
            ..
        } => {
            let legal = legal_positions(candidates.len(), *own_position);
            if legal.is_empty() {
                return Err(AgentError::MissingContextField("candidates"));
            }
            match policy.id {
                OracleListener => {
                    let target = hint
                        .target_position
                        .ok_or(AgentError::MissingContextField("target hint"))?;
                    Answer::Choice(target)
                }
                RandomUniform => Answer::Choice(uniform(rng, &legal)),
                FirstCard | LiteralStoryteller | FixedScoreEntailer => Answer::Choice(legal[0]),
            }
        }
        TaskContext::EntailScore { .. } => match policy.id {
            OracleListener => {
                let is_target = hint
                    .candidate_is_target
                    .ok_or(AgentError::MissingContextField("target hint"))?;
                Answer::Score(if is_target { 100 } else { 0 })
            }
            RandomUniform => Answer::Score(rng.random_range(0..=100)),
            FixedScoreEntailer => Answer::Score(policy.fixed_score()?),
            FirstCard | LiteralStoryteller => Answer::Score(50),
        },
    };
    Ok(answer)
}
