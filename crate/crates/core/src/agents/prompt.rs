//! Prompt templates and payload rendering.
//!
//! The five game templates are fixed text; the only substitutions are the
//! hand size and the candidate count in the answer hints. Task context (the
//! clue, which candidate is the listener's own) follows the template, and
//! images are attached in order with a short label each.

use serde::{Deserialize, Serialize};

use super::{AgentError, Task, TaskContext};

pub const SELECT_TARGET_TEMPLATE: &str = "You are a storyteller in a Dixit game. You must select one card from your {hand_size}-card hand as the target image.
Your goal: maximize your own score by ensuring some, but not all, players guess correctly.

IMPORTANT: Respond strictly in JSON format:
{
    \"reasoning\": \"Brief analysis (max 50 words)\",
    \"answer\": \"The card number (1-{hand_size})\"
}";

pub const GENERATE_CLUE_TEMPLATE: &str = "You are a storyteller in a Dixit game. Create a description for your chosen image.
Scoring rules:
- All guess correctly = 0 points
- None guess correctly = 0 points
- Some guess correctly = 3 points (optimal)

Your description should balance ambiguity and clarity, using metaphorical and emotional language.

IMPORTANT: Respond strictly in JSON format:
{
    \"reasoning\": \"Reasoning towards final description\",
    \"answer\": \"Your crafted Dixit description\"
}";

pub const SELECT_DISTRACTOR_TEMPLATE: &str = "You are a player in a Dixit game. Given the storyteller's description, choose one card from your hand that could plausibly match it (but is not the target).
Your goal: mislead others into choosing your card.

IMPORTANT: Respond strictly in JSON format:
{
    \"reasoning\": \"Brief analysis (max 50 words)\",
    \"answer\": \"The card number (1-{hand_size})\"
}";

pub const GUESS_DIRECT_TEMPLATE: &str = "You are a player in a Dixit game trying to guess which image matches the storyteller's description.
Evaluate all candidates and select the one that best fits.

IMPORTANT: Respond strictly in JSON format:
{
    \"reasoning\": \"Brief analysis (max 50 words)\",
    \"answer\": \"The candidate number (1-{n})\"
}";

pub const ENTAIL_SCORE_TEMPLATE: &str = "You are evaluating how well an image matches a given clue in a Dixit game.
Provide a numerical score (0-100) with reasoning.

IMPORTANT: Respond strictly in JSON format:
{
    \"reasoning\": \"Detailed reasoning for the score\",
    \"answer\": \"Your numerical rating (0-100)\"
}";

pub const CAPTION_TEMPLATE: &str = "Describe this artwork implicitly with a single abstract phrase.

IMPORTANT: Respond strictly in JSON format:
{
    \"reasoning\": \"Brief analysis (max 50 words)\",
    \"answer\": \"A single abstract phrase\"
}";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptImage {
    pub label: String,
    pub asset_ref: String,
}

/// Rendered prompt: instruction text plus labelled image references.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPayload {
    pub task: Task,
    pub text: String,
    pub images: Vec<PromptImage>,
}

fn quoted(text: &str) -> String {
    serde_json::to_string(text).expect("strings always serialize")
}

fn require_clue(clue: &str) -> Result<(), AgentError> {
    if clue.trim().is_empty() {
        return Err(AgentError::MissingContextField("clue"));
    }
    Ok(())
}

pub fn render_prompt(context: &TaskContext) -> Result<PromptPayload, AgentError> {
    let task = context.task();
    let (text, images) = match context {
        TaskContext::SelectTarget { hand } => {
            if hand.is_empty() {
                return Err(AgentError::MissingContextField("hand"));
            }
            let text = format!(
                "{}\n\nYour hand:",
                SELECT_TARGET_TEMPLATE.replace("{hand_size}", &hand.len().to_string())
            );
            let images = hand
                .iter()
                .enumerate()
                .map(|(i, c)| PromptImage {
                    label: format!("Card {}", i + 1),
                    asset_ref: c.asset_ref.clone(),
                })
                .collect();
            (text, images)
        }
        TaskContext::GenerateClue { target } => (
            format!("{GENERATE_CLUE_TEMPLATE}\n\nYour chosen image:"),
            vec![PromptImage {
                label: "Chosen image".into(),
                asset_ref: target.asset_ref.clone(),
            }],
        ),
        TaskContext::SelectDistractor { clue, hand } => {
            require_clue(clue)?;
            if hand.is_empty() {
                return Err(AgentError::MissingContextField("hand"));
            }
            let text = format!(
                "{}\n\nStoryteller's description: {}\n\nYour hand:",
                SELECT_DISTRACTOR_TEMPLATE.replace("{hand_size}", &hand.len().to_string()),
                quoted(clue)
            );
            let images = hand
                .iter()
                .enumerate()
                .map(|(i, c)| PromptImage {
                    label: format!("Card {}", i + 1),
                    asset_ref: c.asset_ref.clone(),
                })
                .collect();
            (text, images)
        }
        TaskContext::GuessDirect {
            clue,
            candidates,
            own_position,
        } => {
            require_clue(clue)?;
            if candidates.len() < 2 {
                return Err(AgentError::MissingContextField("candidates"));
            }
            let mut text = format!(
                "{}\n\nStoryteller's description: {}\n",
                GUESS_DIRECT_TEMPLATE.replace("{n}", &candidates.len().to_string()),
                quoted(clue)
            );
            if let Some(own) = own_position {
                if *own == 0 || *own > candidates.len() {
                    return Err(AgentError::MissingContextField("own_position"));
                }
                text.push_str(&format!(
                    "Candidate {own} is your own card and cannot be chosen.\n"
                ));
            }
            text.push_str("\nCandidates:");
            let images = candidates
                .iter()
                .enumerate()
                .map(|(i, c)| PromptImage {
                    label: format!("Candidate {}", i + 1),
                    asset_ref: c.asset_ref.clone(),
                })
                .collect();
            (text, images)
        }
        TaskContext::EntailScore { clue, candidate } => {
            require_clue(clue)?;
            (
                format!("{ENTAIL_SCORE_TEMPLATE}\n\nClue: {}\n\nImage:", quoted(clue)),
                vec![PromptImage {
                    label: "Image".into(),
                    asset_ref: candidate.asset_ref.clone(),
                }],
            )
        }
        TaskContext::Caption { image } => (
            format!("{CAPTION_TEMPLATE}\n\nArtwork:"),
            vec![PromptImage {
                label: "Artwork".into(),
                asset_ref: image.asset_ref.clone(),
            }],
        ),
    };
    Ok(PromptPayload { task, text, images })
}
