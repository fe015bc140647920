use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// What a task's `answer` field must contain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerShape {
    /// One-based choice in `1..=n`.
    Choice { n: usize },
    /// Integer rating in `0..=100`.
    Score,
    /// Non-empty free text.
    Text,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Choice(usize),
    Score(u32),
    Text(String),
}

impl Answer {
    pub fn choice(&self) -> Option<usize> {
        match self {
            Answer::Choice(c) => Some(*c),
            _ => None,
        }
    }

    pub fn score(&self) -> Option<u32> {
        match self {
            Answer::Score(s) => Some(*s),
            _ => None,
        }
    }

    pub fn text(&self) -> Option<&str> {
        match self {
            Answer::Text(t) => Some(t),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentReply {
    pub reasoning: String,
    pub answer: Answer,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReplyError {
    #[error("no JSON object with an \"answer\" field: {0}")]
    MalformedReply(String),
    #[error("answer {answer:?} is outside the expected {shape:?}")]
    AnswerOutOfRange { answer: String, shape: AnswerShape },
    #[error("answer is empty")]
    EmptyAnswer,
}

/// First JSON object in `raw` that has an `answer` key. Prose, code fences
/// and trailing text around the object are ignored.
fn find_answer_object(raw: &str) -> Option<serde_json::Map<String, Value>> {
    for (start, _) in raw.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&raw[start..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(map))) = stream.next() {
            if map.contains_key("answer") {
                return Some(map);
            }
        }
    }
    None
}

/// Leading numeric token of `s`, e.g. `"3"`, `" 3."`, `"Card 3"`, `"85.5"`.
fn first_number(s: &str) -> Option<f64> {
    let start = s.find(|c: char| c.is_ascii_digit())?;
    let negative = s[..start].ends_with('-');
    let rest = &s[start..];
    let end = rest
        .char_indices()
        .find(|(i, c)| !(c.is_ascii_digit() || (*c == '.' && rest[i + 1..].starts_with(|d: char| d.is_ascii_digit()))))
        .map(|(i, _)| i)
        .unwrap_or(rest.len());
    let value: f64 = rest[..end].parse().ok()?;
    Some(if negative { -value } else { value })
}

fn answer_text(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

pub fn parse_reply(raw: &str, shape: AnswerShape) -> Result<AgentReply, ReplyError> {
    let object = find_answer_object(raw).ok_or_else(|| {
        let preview: String = raw.chars().take(120).collect();
        ReplyError::MalformedReply(preview)
    })?;
    let reasoning = object.get("reasoning").map(answer_text).unwrap_or_default();
    let raw_answer = answer_text(&object["answer"]);
    let trimmed = raw_answer.trim();

    let out_of_range = || ReplyError::AnswerOutOfRange {
        answer: raw_answer.clone(),
        shape,
    };

    let answer = match shape {
        AnswerShape::Text => {
            if trimmed.is_empty() {
                return Err(ReplyError::EmptyAnswer);
            }
            Answer::Text(trimmed.to_string())
        }
        AnswerShape::Choice { n } => {
            if trimmed.is_empty() {
                return Err(ReplyError::EmptyAnswer);
            }
            let value = first_number(trimmed)
                .ok_or_else(|| ReplyError::MalformedReply(raw_answer.clone()))?;
            if value.fract() != 0.0 || value < 1.0 || value > n as f64 {
                return Err(out_of_range());
            }
            Answer::Choice(value as usize)
        }
        AnswerShape::Score => {
            if trimmed.is_empty() {
                return Err(ReplyError::EmptyAnswer);
            }
            let value = first_number(trimmed)
                .ok_or_else(|| ReplyError::MalformedReply(raw_answer.clone()))?;
            if !(0.0..=100.0).contains(&value) {
                return Err(out_of_range());
            }
            Answer::Score(value.round() as u32)
        }
    };
    Ok(AgentReply { reasoning, answer })
}
