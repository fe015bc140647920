use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CardId, EngineError, RoundState, SeatId};

/// Points for a storyteller whose clue was found by some, but not all, listeners.
pub const STORYTELLER_PARTIAL_POINTS: u32 = 3;
/// Points for each listener who found the target.
pub const CORRECT_GUESS_POINTS: u32 = 3;
/// Points for every listener when nobody found the target.
pub const ALL_WRONG_LISTENER_POINTS: u32 = 2;
/// Points to a distractor's owner for each vote it attracts.
pub const DISTRACTOR_VOTE_POINTS: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutcomeClass {
    AllCorrect,
    AllWrong,
    PartialCorrect,
}

impl OutcomeClass {
    /// Classify by the number of listeners who found the target.
    pub fn from_counts(correct: usize, listeners: usize) -> Self {
        if correct == 0 {
            OutcomeClass::AllWrong
        } else if correct == listeners {
            OutcomeClass::AllCorrect
        } else {
            OutcomeClass::PartialCorrect
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub class: OutcomeClass,
    pub correct_listeners: Vec<SeatId>,
    pub deltas: BTreeMap<SeatId, u32>,
}

/// Score a round whose guesses are all in.
pub fn score_round(round: &RoundState) -> Result<RoundOutcome, EngineError> {
    let target = round.target.ok_or(EngineError::GuessesIncomplete)?;
    let order = round
        .candidate_order
        .as_ref()
        .ok_or(EngineError::GuessesIncomplete)?;
    let listeners = round.storyteller.others();
    if listeners.iter().any(|l| !round.guesses.contains_key(l)) {
        return Err(EngineError::GuessesIncomplete);
    }

    let owner_of = |card: CardId| -> Option<SeatId> {
        round
            .distractors
            .iter()
            .find_map(|(seat, c)| (*c == card).then_some(*seat))
    };

    let mut deltas: BTreeMap<SeatId, u32> = SeatId::all().into_iter().map(|s| (s, 0)).collect();
    let mut correct_listeners = Vec::new();
    for listener in listeners {
        let position = round.guesses[&listener];
        let card = *order
            .get(usize::from(position).wrapping_sub(1))
            .ok_or(EngineError::PositionOutOfRange(position))?;
        if card == target {
            correct_listeners.push(listener);
        } else {
            let owner = owner_of(card).ok_or(EngineError::UnknownCandidate(card))?;
            *deltas.get_mut(&owner).expect("all seats present") += DISTRACTOR_VOTE_POINTS;
        }
    }

    let class = OutcomeClass::from_counts(correct_listeners.len(), listeners.len());
    match class {
        OutcomeClass::PartialCorrect => {
            *deltas.get_mut(&round.storyteller).expect("storyteller seat") += STORYTELLER_PARTIAL_POINTS;
            for seat in &correct_listeners {
                *deltas.get_mut(seat).expect("listener seat") += CORRECT_GUESS_POINTS;
            }
        }
        OutcomeClass::AllCorrect => {
            for seat in &listeners {
                *deltas.get_mut(seat).expect("listener seat") += CORRECT_GUESS_POINTS;
            }
        }
        OutcomeClass::AllWrong => {
            for seat in &listeners {
                *deltas.get_mut(seat).expect("listener seat") += ALL_WRONG_LISTENER_POINTS;
            }
        }
    }

    Ok(RoundOutcome {
        class,
        correct_listeners,
        deltas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{Clue, RoundStage};

    // Storyteller seat 1 with target 10; L2 owns 20, L3 owns 30, L4 owns 40.
    // Candidates in order [20, 10, 40, 30] so the target sits at position 2.
    fn round_with(guesses: [(u8, u8); 3]) -> RoundState {
        let s = |i| SeatId::new(i).unwrap();
        RoundState {
            round_index: 1,
            phase: 1,
            storyteller: s(1),
            target: Some(10),
            clue: Some(Clue::new("a delicate hope").unwrap()),
            distractors: [(s(2), 20), (s(3), 30), (s(4), 40)].into_iter().collect(),
            candidate_order: Some(vec![20, 10, 40, 30]),
            guesses: guesses.into_iter().map(|(seat, p)| (s(seat), p)).collect(),
            stage: RoundStage::GuessesComplete,
        }
    }

    fn deltas(outcome: &RoundOutcome) -> [u32; 4] {
        let mut out = [0; 4];
        for (seat, d) in &outcome.deltas {
            out[seat.index()] = *d;
        }
        out
    }

    #[test]
    fn partial_correct_with_a_distractor_vote() {
        // L2 and L3 find the target, L4 votes for L2's card at position 1.
        let outcome = score_round(&round_with([(2, 2), (3, 2), (4, 1)])).unwrap();
        assert_eq!(outcome.class, OutcomeClass::PartialCorrect);
        assert_eq!(deltas(&outcome), [3, 3 + 1, 3, 0]);
    }

    #[test]
    fn all_correct_pays_storyteller_nothing() {
        let outcome = score_round(&round_with([(2, 2), (3, 2), (4, 2)])).unwrap();
        assert_eq!(outcome.class, OutcomeClass::AllCorrect);
        assert_eq!(deltas(&outcome), [0, 3, 3, 3]);
    }

    #[test]
    fn all_wrong_pays_listeners_two_plus_votes() {
        // L2 -> L4's card (pos 3), L3 -> L2's card (pos 1), L4 -> L3's card (pos 4).
        let outcome = score_round(&round_with([(2, 3), (3, 1), (4, 4)])).unwrap();
        assert_eq!(outcome.class, OutcomeClass::AllWrong);
        assert_eq!(deltas(&outcome), [0, 3, 3, 3]);
        assert!(outcome.correct_listeners.is_empty());
    }

    #[test]
    fn missing_guess_is_rejected() {
        let mut round = round_with([(2, 2), (3, 2), (4, 2)]);
        round.guesses.remove(&SeatId::new(4).unwrap());
        assert_eq!(score_round(&round), Err(EngineError::GuessesIncomplete));
    }
}
