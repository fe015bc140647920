//! Bench evaluation under direct selection or entailment scoring.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BenchError, BenchItem, Difficulty};
use crate::agents::{act, AgentBinding, AgentRuntime, DecisionRecord, Hint, TaskContext};
use crate::engine::{Card, CardId};
use crate::rng::{self, Lane};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// One guess over all options.
    Direct,
    /// Rate every option 0-100 separately; the highest rating wins, earliest option on ties.
    Entailment,
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(Strategy::Direct),
            "entailment" => Ok(Strategy::Entailment),
            other => Err(format!("unknown strategy {other:?} (direct|entailment)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchItemResult {
    pub item_id: u64,
    pub target: CardId,
    pub difficulty: Difficulty,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen_position: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    /// Entailment ratings in option order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scores: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed: Option<String>,
    pub decisions: Vec<DecisionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub agent: String,
    pub strategy: Strategy,
    pub per_item: Vec<BenchItemResult>,
    /// Percentages over evaluated (non-failed) items; `None` when a subset is empty.
    pub easy_acc: Option<f64>,
    pub hard_acc: Option<f64>,
    pub total_acc: Option<f64>,
    pub evaluated: usize,
    pub failed: usize,
    pub fallback_decisions: usize,
}

fn pct(hits: usize, n: usize) -> Option<f64> {
    (n > 0).then(|| 100.0 * hits as f64 / n as f64)
}

impl BenchReport {
    pub fn from_items(agent: &str, strategy: Strategy, per_item: Vec<BenchItemResult>) -> Self {
        let mut tally: BTreeMap<Difficulty, (usize, usize)> = BTreeMap::new();
        let mut failed = 0;
        for r in &per_item {
            match r.correct {
                Some(c) => {
                    let t = tally.entry(r.difficulty).or_default();
                    t.0 += usize::from(c);
                    t.1 += 1;
                }
                None => failed += 1,
            }
        }
        let get = |d| tally.get(&d).copied().unwrap_or_default();
        let (eh, en) = get(Difficulty::Easy);
        let (hh, hn) = get(Difficulty::Hard);
        let fallback_decisions = per_item.iter().flat_map(|r| &r.decisions).filter(|d| d.fallback).count();
        BenchReport {
            agent: agent.to_string(),
            strategy,
            easy_acc: pct(eh, en),
            hard_acc: pct(hh, hn),
            total_acc: pct(eh + hh, en + hn),
            evaluated: en + hn,
            failed,
            fallback_decisions,
            per_item,
        }
    }
}

/// Index of the highest score; the earliest wins ties.
pub fn entailment_winner(scores: &[u32]) -> Option<usize> {
    let mut best: Option<(usize, u32)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

fn evaluate_item(
    item: &BenchItem,
    cards: &BTreeMap<CardId, Card>,
    agent: &AgentBinding,
    strategy: Strategy,
    runtime: &AgentRuntime,
    seed: u64,
) -> Result<BenchItemResult, BenchError> {
    let options: Vec<Card> = item
        .option_order
        .iter()
        .map(|id| cards.get(id).cloned().ok_or(BenchError::TargetNotInMatrix(*id)))
        .collect::<Result<_, _>>()?;
    let target_position = item.target_position();
    let mut rng = rng::stream(seed, item.item_id, Lane::BenchRun);
    let mut result = BenchItemResult {
        item_id: item.item_id,
        target: item.target,
        difficulty: item.difficulty,
        chosen_position: None,
        correct: None,
        scores: Vec::new(),
        failed: None,
        decisions: Vec::new(),
    };
    match strategy {
        Strategy::Direct => {
            let context = TaskContext::GuessDirect {
                clue: item.clue.clone(),
                candidates: options,
                own_position: None,
            };
            let hint = Hint {
                target_position: Some(target_position),
                candidate_is_target: None,
            };
            match act(agent, &context, &hint, &mut rng, runtime) {
                Ok(d) => {
                    result.chosen_position = d.answer.choice();
                    result.decisions.push(d.record);
                }
                Err(e) => result.failed = Some(e.to_string()),
            }
        }
        Strategy::Entailment => {
            for (i, card) in options.into_iter().enumerate() {
                let context = TaskContext::EntailScore {
                    clue: item.clue.clone(),
                    candidate: card,
                };
                let hint = Hint {
                    target_position: None,
                    candidate_is_target: Some(i + 1 == target_position),
                };
                match act(agent, &context, &hint, &mut rng, runtime) {
                    Ok(d) => {
                        result.scores.push(d.answer.score().unwrap_or(crate::agents::FALLBACK_SCORE));
                        result.decisions.push(d.record);
                    }
                    Err(e) => {
                        result.failed = Some(e.to_string());
                        result.scores.clear();
                        break;
                    }
                }
            }
            if result.failed.is_none() {
                result.chosen_position = entailment_winner(&result.scores).map(|i| i + 1);
            }
        }
    }
    if result.failed.is_none() {
        result.correct = result.chosen_position.map(|p| p == target_position);
    }
    Ok(result)
}

/// Evaluate `items`. Unreachable endpoints fail the item, which is then
/// excluded from the accuracies and counted in `failed`.
pub fn run_bench(
    items: &[BenchItem],
    cards: &BTreeMap<CardId, Card>,
    agent: &AgentBinding,
    strategy: Strategy,
    runtime: &AgentRuntime,
    seed: u64,
) -> Result<BenchReport, BenchError> {
    let runtime = runtime.clone().with_abort_on_failure(true);
    let per_item = items
        .par_iter()
        .map(|item| evaluate_item(item, cards, agent, strategy, &runtime, seed))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BenchReport::from_items(&agent.name, strategy, per_item))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_go_to_the_earliest_option() {
        assert_eq!(entailment_winner(&[50, 50, 50, 50]), Some(0));
        assert_eq!(entailment_winner(&[10, 90, 90, 0]), Some(1));
        assert_eq!(entailment_winner(&[]), None);
    }

    #[test]
    fn strategy_parse() {
        assert_eq!("direct".parse::<Strategy>().unwrap(), Strategy::Direct);
        assert!("both".parse::<Strategy>().is_err());
    }
}
