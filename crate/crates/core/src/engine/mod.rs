//! Deterministic state machine for one four-seat match.
//!
//! A round moves through a fixed sequence of stages:
//!
//! ```text
//! AwaitingTarget -> AwaitingDistractors -> AwaitingShuffle -> AwaitingGuesses
//!   -> GuessesComplete -> Scored -> Replenished -> (hand swap at the phase boundary)
//!   -> next round's AwaitingTarget, or Finished
//! ```
//!
//! Each transition is an explicit method on [`MatchState`]; calling one in the
//! wrong stage yields [`EngineError::OutOfOrder`]. [`MatchState::complete_round`]
//! chains scoring, replenishment, the swap and storyteller rotation.

mod scoring;

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, Lane, StreamRng};

pub use scoring::{
    score_round, OutcomeClass, RoundOutcome, ALL_WRONG_LISTENER_POINTS, CORRECT_GUESS_POINTS,
    DISTRACTOR_VOTE_POINTS, STORYTELLER_PARTIAL_POINTS,
};

pub type CardId = u32;

pub const SEATS: usize = 4;
pub const HAND_SIZE: usize = 4;
/// Listeners per round; everyone except the storyteller.
pub const LISTENERS: usize = SEATS - 1;
/// The smallest deck that can deal every seat a full hand.
pub const MIN_DECK_SIZE: usize = SEATS * HAND_SIZE;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("invalid match configuration: {0}")]
    InvalidConfig(String),
    #[error("duplicate card id {0} in deck")]
    DuplicateCardId(CardId),
    #[error("card {card} is not in seat {seat}'s hand")]
    CardNotInHand { seat: SeatId, card: CardId },
    #[error("seat {0} already submitted this round")]
    DuplicateSubmission(SeatId),
    #[error("clue text is empty")]
    EmptyClue,
    #[error("the storyteller cannot submit a distractor")]
    StorytellerCannotSubmitDistractor,
    #[error("the storyteller cannot guess")]
    StorytellerCannotGuess,
    #[error("candidate set is incomplete: {staged} of {SEATS} cards staged")]
    IncompleteSubmissions { staged: usize },
    #[error("seat {seat} guessed its own card at position {position}")]
    OwnCardGuess { seat: SeatId, position: u8 },
    #[error("candidate position {0} is out of range 1..=4")]
    PositionOutOfRange(u8),
    #[error("seat {0} already guessed this round")]
    DuplicateGuess(SeatId),
    #[error("not every listener has guessed")]
    GuessesIncomplete,
    #[error("hands can only be swapped after the last round of phase 1")]
    WrongPhaseBoundary,
    #[error("seat index {0} is out of range 1..=4")]
    InvalidSeat(u8),
    #[error("candidate card {0} is neither the target nor a staged distractor")]
    UnknownCandidate(CardId),
    #[error("operation not valid while {actual:?} (expected {expected:?})")]
    OutOfOrder {
        expected: RoundStage,
        actual: RoundStage,
    },
}

/// One-based seat number, 1..=4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct SeatId(u8);

impl SeatId {
    pub fn new(seat: u8) -> Result<Self, EngineError> {
        if (1..=SEATS as u8).contains(&seat) {
            Ok(SeatId(seat))
        } else {
            Err(EngineError::InvalidSeat(seat))
        }
    }

    pub fn all() -> [SeatId; SEATS] {
        [SeatId(1), SeatId(2), SeatId(3), SeatId(4)]
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Zero-based index for array storage.
    pub fn index(self) -> usize {
        usize::from(self.0 - 1)
    }

    /// Next seat in the fixed 1 -> 2 -> 3 -> 4 -> 1 cycle.
    pub fn next(self) -> SeatId {
        SeatId(self.0 % SEATS as u8 + 1)
    }

    /// The seat `offset` places after this one.
    pub fn offset(self, offset: u8) -> SeatId {
        SeatId((self.0 - 1 + offset) % SEATS as u8 + 1)
    }

    /// The three other seats, in clockwise order starting after this one.
    pub fn others(self) -> [SeatId; LISTENERS] {
        [self.offset(1), self.offset(2), self.offset(3)]
    }

    /// Hand-swap partner: 1<->3, 2<->4.
    pub fn swap_partner(self) -> SeatId {
        self.offset(2)
    }
}

impl TryFrom<u8> for SeatId {
    type Error = EngineError;
    fn try_from(value: u8) -> Result<Self, Self::Error> {
        SeatId::new(value)
    }
}

impl From<SeatId> for u8 {
    fn from(seat: SeatId) -> u8 {
        seat.0
    }
}

impl fmt::Display for SeatId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Card {
    pub id: CardId,
    /// Path or URL of the image asset; never interpreted by the engine.
    pub asset_ref: String,
    /// Optional literal description of the image, used only by scripted policies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl Card {
    pub fn new(id: CardId, asset_ref: impl Into<String>) -> Self {
        Card {
            id,
            asset_ref: asset_ref.into(),
            description: None,
        }
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = Some(description.into());
        self
    }

    /// `n` cards with ids `1..=n` and synthetic asset references.
    pub fn placeholder_deck(n: usize) -> Vec<Card> {
        (1..=n as CardId)
            .map(|id| Card::new(id, format!("placeholder://card/{id}")))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clue {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<String>,
}

impl Clue {
    pub fn new(text: impl Into<String>) -> Result<Self, EngineError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(EngineError::EmptyClue);
        }
        Ok(Clue {
            text,
            reasoning: None,
        })
    }

    pub fn with_reasoning(mut self, reasoning: impl Into<String>) -> Self {
        self.reasoning = Some(reasoning.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub rounds_per_phase: u32,
    pub phases: u8,
    pub seed: u64,
    /// Scope for stream derivation; the match id inside a tournament.
    pub match_id: u64,
    pub deck_size: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            rounds_per_phase: 12,
            phases: 2,
            seed: 42,
            match_id: 0,
            deck_size: 84,
        }
    }
}

impl MatchConfig {
    pub fn total_rounds(&self) -> u32 {
        self.rounds_per_phase * u32::from(self.phases)
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if !(1..=2).contains(&self.phases) {
            return Err(EngineError::InvalidConfig(format!(
                "phases must be 1 or 2, got {}",
                self.phases
            )));
        }
        if self.rounds_per_phase == 0 {
            return Err(EngineError::InvalidConfig("rounds_per_phase must be positive".into()));
        }
        if self.deck_size < MIN_DECK_SIZE {
            return Err(EngineError::InvalidConfig(format!(
                "deck_size {} is below the minimum of {MIN_DECK_SIZE}",
                self.deck_size
            )));
        }
        Ok(())
    }

    /// Number of rounds each seat spends as storyteller under the fixed rotation.
    pub fn storyteller_rounds(&self) -> [u32; SEATS] {
        let mut counts = [0; SEATS];
        let mut seat = SeatId(1);
        for _ in 0..self.total_rounds() {
            counts[seat.index()] += 1;
            seat = seat.next();
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoundStage {
    AwaitingTarget,
    AwaitingDistractors,
    AwaitingShuffle,
    AwaitingGuesses,
    GuessesComplete,
    Scored,
    Replenished,
    Finished,
}

/// Public view of the round in progress.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundState {
    pub round_index: u32,
    pub phase: u8,
    pub storyteller: SeatId,
    pub target: Option<CardId>,
    pub clue: Option<Clue>,
    pub distractors: BTreeMap<SeatId, CardId>,
    pub candidate_order: Option<Vec<CardId>>,
    /// Listener seat to one-based candidate position.
    pub guesses: BTreeMap<SeatId, u8>,
    pub stage: RoundStage,
}

impl RoundState {
    fn fresh(round_index: u32, phase: u8, storyteller: SeatId) -> Self {
        RoundState {
            round_index,
            phase,
            storyteller,
            target: None,
            clue: None,
            distractors: BTreeMap::new(),
            candidate_order: None,
            guesses: BTreeMap::new(),
            stage: RoundStage::AwaitingTarget,
        }
    }

    /// Position (1..=4) of `card` in the shuffled candidate order.
    pub fn position_of(&self, card: CardId) -> Option<u8> {
        self.candidate_order
            .as_ref()?
            .iter()
            .position(|c| *c == card)
            .map(|p| p as u8 + 1)
    }

    pub fn target_position(&self) -> Option<u8> {
        self.position_of(self.target?)
    }

    /// Where `seat`'s own submitted card sits among the candidates.
    pub fn own_position(&self, seat: SeatId) -> Option<u8> {
        if seat == self.storyteller {
            return self.target_position();
        }
        self.position_of(*self.distractors.get(&seat)?)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct SeatState {
    hand: Vec<Card>,
    score: u32,
}

/// Everything produced by finishing one round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletedRound {
    pub round: RoundState,
    pub outcome: RoundOutcome,
    pub hands_swapped: bool,
}

#[derive(Debug, Clone)]
pub struct MatchState {
    config: MatchConfig,
    rng: StreamRng,
    /// Top of the pile is the last element.
    draw_pile: Vec<Card>,
    discard_pile: Vec<Card>,
    seats: [SeatState; SEATS],
    round: RoundState,
    staged: BTreeMap<SeatId, Card>,
    outcome: Option<RoundOutcome>,
    hands_swapped: bool,
    reshuffles: u32,
}

impl MatchState {
    /// Shuffle `deck` with the configured seed and deal four cards to every seat.
    pub fn new(config: MatchConfig, deck: Vec<Card>) -> Result<Self, EngineError> {
        config.validate()?;
        if deck.len() != config.deck_size {
            return Err(EngineError::InvalidConfig(format!(
                "deck has {} cards but deck_size is {}",
                deck.len(),
                config.deck_size
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for card in &deck {
            if !seen.insert(card.id) {
                return Err(EngineError::DuplicateCardId(card.id));
            }
            if card.asset_ref.trim().is_empty() {
                return Err(EngineError::InvalidConfig(format!(
                    "card {} has an empty asset reference",
                    card.id
                )));
            }
        }

        let mut rng = rng::stream(config.seed, config.match_id, Lane::Engine);
        let mut draw_pile = deck;
        draw_pile.shuffle(&mut rng);

        let mut seats: [SeatState; SEATS] = Default::default();
        for _ in 0..HAND_SIZE {
            for seat in seats.iter_mut() {
                seat.hand.push(draw_pile.pop().expect("deck size validated"));
            }
        }

        Ok(MatchState {
            round: RoundState::fresh(1, 1, SeatId(1)),
            config,
            rng,
            draw_pile,
            discard_pile: Vec::new(),
            seats,
            staged: BTreeMap::new(),
            outcome: None,
            hands_swapped: false,
            reshuffles: 0,
        })
    }

    pub fn config(&self) -> &MatchConfig {
        &self.config
    }

    pub fn round(&self) -> &RoundState {
        &self.round
    }

    pub fn stage(&self) -> RoundStage {
        self.round.stage
    }

    pub fn is_finished(&self) -> bool {
        self.round.stage == RoundStage::Finished
    }

    pub fn storyteller(&self) -> SeatId {
        self.round.storyteller
    }

    pub fn hand(&self, seat: SeatId) -> &[Card] {
        &self.seats[seat.index()].hand
    }

    pub fn score(&self, seat: SeatId) -> u32 {
        self.seats[seat.index()].score
    }

    pub fn scores(&self) -> BTreeMap<SeatId, u32> {
        SeatId::all().into_iter().map(|s| (s, self.score(s))).collect()
    }

    pub fn draw_pile_len(&self) -> usize {
        self.draw_pile.len()
    }

    pub fn discard_pile_len(&self) -> usize {
        self.discard_pile.len()
    }

    /// How many times the discard pile has been reshuffled into the draw pile.
    pub fn reshuffles(&self) -> u32 {
        self.reshuffles
    }

    /// The staged card for `seat` this round, if any.
    pub fn staged_card(&self, seat: SeatId) -> Option<&Card> {
        self.staged.get(&seat)
    }

    /// The candidate cards in their shuffled order.
    pub fn candidates(&self) -> Option<Vec<Card>> {
        let order = self.round.candidate_order.as_ref()?;
        Some(
            order
                .iter()
                .map(|id| {
                    self.staged
                        .values()
                        .find(|c| c.id == *id)
                        .cloned()
                        .expect("candidate order only holds staged cards")
                })
                .collect(),
        )
    }

    /// Sorted ids of every card in the match: piles, hands and staged cards.
    pub fn card_census(&self) -> Vec<CardId> {
        let mut ids: Vec<CardId> = self
            .draw_pile
            .iter()
            .chain(&self.discard_pile)
            .chain(self.seats.iter().flat_map(|s| &s.hand))
            .chain(self.staged.values())
            .map(|c| c.id)
            .collect();
        ids.sort_unstable();
        ids
    }

    fn expect_stage(&self, expected: RoundStage) -> Result<(), EngineError> {
        if self.round.stage == expected {
            Ok(())
        } else {
            Err(EngineError::OutOfOrder {
                expected,
                actual: self.round.stage,
            })
        }
    }

    fn take_from_hand(&mut self, seat: SeatId, card: CardId) -> Result<Card, EngineError> {
        let hand = &mut self.seats[seat.index()].hand;
        let idx = hand
            .iter()
            .position(|c| c.id == card)
            .ok_or(EngineError::CardNotInHand { seat, card })?;
        Ok(hand.remove(idx))
    }

    pub fn submit_target(&mut self, card: CardId, clue: Clue) -> Result<(), EngineError> {
        let storyteller = self.round.storyteller;
        if self.round.target.is_some() {
            return Err(EngineError::DuplicateSubmission(storyteller));
        }
        self.expect_stage(RoundStage::AwaitingTarget)?;
        if clue.text.trim().is_empty() {
            return Err(EngineError::EmptyClue);
        }
        let card = self.take_from_hand(storyteller, card)?;
        self.round.target = Some(card.id);
        self.round.clue = Some(clue);
        self.staged.insert(storyteller, card);
        self.round.stage = RoundStage::AwaitingDistractors;
        Ok(())
    }

    pub fn submit_distractor(&mut self, seat: SeatId, card: CardId) -> Result<(), EngineError> {
        if seat == self.round.storyteller {
            return Err(EngineError::StorytellerCannotSubmitDistractor);
        }
        if self.round.distractors.contains_key(&seat) {
            return Err(EngineError::DuplicateSubmission(seat));
        }
        self.expect_stage(RoundStage::AwaitingDistractors)?;
        let card = self.take_from_hand(seat, card)?;
        self.round.distractors.insert(seat, card.id);
        self.staged.insert(seat, card);
        if self.round.distractors.len() == LISTENERS {
            self.round.stage = RoundStage::AwaitingShuffle;
        }
        Ok(())
    }

    /// Shuffle the four staged cards into the candidate order for this round.
    pub fn shuffle_candidates(&mut self) -> Result<Vec<CardId>, EngineError> {
        if self.staged.len() != SEATS {
            return Err(EngineError::IncompleteSubmissions {
                staged: self.staged.len(),
            });
        }
        self.expect_stage(RoundStage::AwaitingShuffle)?;
        // Seat order before shuffling keeps the permutation a function of the stream alone.
        let mut order: Vec<CardId> = self.staged.values().map(|c| c.id).collect();
        order.shuffle(&mut self.rng);
        self.round.candidate_order = Some(order.clone());
        self.round.stage = RoundStage::AwaitingGuesses;
        Ok(order)
    }

    pub fn submit_guess(&mut self, seat: SeatId, position: u8) -> Result<(), EngineError> {
        if seat == self.round.storyteller {
            return Err(EngineError::StorytellerCannotGuess);
        }
        self.expect_stage(RoundStage::AwaitingGuesses)?;
        if !(1..=SEATS as u8).contains(&position) {
            return Err(EngineError::PositionOutOfRange(position));
        }
        if self.round.guesses.contains_key(&seat) {
            return Err(EngineError::DuplicateGuess(seat));
        }
        if self.round.own_position(seat) == Some(position) {
            return Err(EngineError::OwnCardGuess { seat, position });
        }
        self.round.guesses.insert(seat, position);
        if self.round.guesses.len() == LISTENERS {
            self.round.stage = RoundStage::GuessesComplete;
        }
        Ok(())
    }

    /// Score the round and add the deltas to the seats.
    pub fn apply_scores(&mut self) -> Result<RoundOutcome, EngineError> {
        if self.round.stage == RoundStage::AwaitingGuesses {
            return Err(EngineError::GuessesIncomplete);
        }
        self.expect_stage(RoundStage::GuessesComplete)?;
        let outcome = score_round(&self.round)?;
        for (seat, delta) in &outcome.deltas {
            self.seats[seat.index()].score += delta;
        }
        self.outcome = Some(outcome.clone());
        self.round.stage = RoundStage::Scored;
        Ok(outcome)
    }

    /// Discard the played cards and draw every hand back to four, recycling
    /// the discard pile whenever the draw pile runs dry.
    pub fn replenish_hands(&mut self) -> Result<(), EngineError> {
        self.expect_stage(RoundStage::Scored)?;
        let played = std::mem::take(&mut self.staged);
        self.discard_pile.extend(played.into_values());
        for seat in SeatId::all() {
            while self.seats[seat.index()].hand.len() < HAND_SIZE {
                if self.draw_pile.is_empty() {
                    self.recycle_discards();
                }
                let card = self
                    .draw_pile
                    .pop()
                    .expect("discards hold every card outside the hands");
                self.seats[seat.index()].hand.push(card);
            }
        }
        self.round.stage = RoundStage::Replenished;
        Ok(())
    }

    fn recycle_discards(&mut self) {
        let mut recycled = std::mem::take(&mut self.discard_pile);
        recycled.shuffle(&mut self.rng);
        self.draw_pile = recycled;
        self.reshuffles += 1;
    }

    pub fn at_phase_boundary(&self) -> bool {
        self.config.phases == 2 && self.round.round_index == self.config.rounds_per_phase
    }

    /// Exchange hands between seats 1<->3 and 2<->4 at the end of phase 1.
    pub fn swap_hands(&mut self) -> Result<(), EngineError> {
        if !self.at_phase_boundary() || self.hands_swapped {
            return Err(EngineError::WrongPhaseBoundary);
        }
        if !matches!(self.round.stage, RoundStage::Scored | RoundStage::Replenished) {
            return Err(EngineError::WrongPhaseBoundary);
        }
        // Only hands move; scores stay with their seats.
        let [s1, s2, s3, s4] = &mut self.seats;
        std::mem::swap(&mut s1.hand, &mut s3.hand);
        std::mem::swap(&mut s2.hand, &mut s4.hand);
        self.hands_swapped = true;
        Ok(())
    }

    /// Rotate the storyteller and open the next round, or finish the match.
    pub fn advance_storyteller(&mut self) -> Result<(), EngineError> {
        self.expect_stage(RoundStage::Replenished)?;
        if self.at_phase_boundary() && !self.hands_swapped {
            return Err(EngineError::OutOfOrder {
                expected: RoundStage::Replenished,
                actual: self.round.stage,
            });
        }
        if self.round.round_index >= self.config.total_rounds() {
            self.round.stage = RoundStage::Finished;
            return Ok(());
        }
        let next_index = self.round.round_index + 1;
        let phase = if next_index > self.config.rounds_per_phase { 2 } else { 1 };
        self.round = RoundState::fresh(next_index, phase, self.round.storyteller.next());
        self.outcome = None;
        Ok(())
    }

    /// Score, replenish, swap at the phase boundary, and advance.
    pub fn complete_round(&mut self) -> Result<CompletedRound, EngineError> {
        let outcome = self.apply_scores()?;
        let mut round = self.round.clone();
        self.replenish_hands()?;
        let hands_swapped = self.at_phase_boundary();
        if hands_swapped {
            self.swap_hands()?;
        }
        round.stage = RoundStage::Scored;
        self.advance_storyteller()?;
        Ok(CompletedRound {
            round,
            outcome,
            hands_swapped,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seat(i: u8) -> SeatId {
        SeatId::new(i).unwrap()
    }

    fn new_match(seed: u64) -> MatchState {
        let config = MatchConfig {
            seed,
            ..MatchConfig::default()
        };
        MatchState::new(config, Card::placeholder_deck(84)).unwrap()
    }

    fn hand_ids(state: &MatchState, s: SeatId) -> Vec<CardId> {
        let mut ids: Vec<_> = state.hand(s).iter().map(|c| c.id).collect();
        ids.sort_unstable();
        ids
    }

    /// Play one round: storyteller and listeners submit their first card,
    /// listeners guess the first legal position.
    fn play_round(state: &mut MatchState) -> CompletedRound {
        let st = state.storyteller();
        let target = state.hand(st)[0].id;
        state.submit_target(target, Clue::new("a clue").unwrap()).unwrap();
        for l in st.others() {
            let card = state.hand(l)[0].id;
            state.submit_distractor(l, card).unwrap();
        }
        state.shuffle_candidates().unwrap();
        for l in st.others() {
            let own = state.round().own_position(l).unwrap();
            let pos = (1..=4).find(|p| *p != own).unwrap();
            state.submit_guess(l, pos).unwrap();
        }
        state.complete_round().unwrap()
    }

    #[test]
    fn dealing_is_deterministic_per_seed() {
        let a = new_match(42);
        let b = new_match(42);
        for s in SeatId::all() {
            assert_eq!(hand_ids(&a, s), hand_ids(&b, s));
            assert_eq!(a.hand(s).len(), HAND_SIZE);
            assert_eq!(a.score(s), 0);
        }
        assert_eq!(a.round().round_index, 1);
        assert_eq!(a.storyteller(), seat(1));
    }

    #[test]
    fn different_seeds_deal_different_hands() {
        let a = new_match(42);
        let b = new_match(43);
        let differs = SeatId::all()
            .into_iter()
            .any(|s| hand_ids(&a, s) != hand_ids(&b, s));
        assert!(differs);
    }

    #[test]
    fn small_deck_is_rejected() {
        let config = MatchConfig {
            deck_size: 15,
            ..MatchConfig::default()
        };
        let err = MatchState::new(config, Card::placeholder_deck(15)).unwrap_err();
        assert!(matches!(err, EngineError::InvalidConfig(_)));
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let config = MatchConfig {
            deck_size: 16,
            ..MatchConfig::default()
        };
        let mut deck = Card::placeholder_deck(16);
        deck[3].id = 1;
        assert_eq!(MatchState::new(config, deck).unwrap_err(), EngineError::DuplicateCardId(1));
    }

    #[test]
    fn bad_phase_count_is_rejected() {
        let config = MatchConfig {
            phases: 3,
            ..MatchConfig::default()
        };
        assert!(matches!(
            MatchState::new(config, Card::placeholder_deck(84)),
            Err(EngineError::InvalidConfig(_))
        ));
    }

    #[test]
    fn target_submission_rules() {
        let mut state = new_match(42);
        let st = state.storyteller();
        let card = state.hand(st)[1].id;
        state.submit_target(card, Clue::new("a delicate hope").unwrap()).unwrap();
        assert_eq!(state.hand(st).len(), 3);
        assert_eq!(state.round().target, Some(card));
        assert_eq!(
            state.submit_target(card, Clue::new("again").unwrap()),
            Err(EngineError::DuplicateSubmission(st))
        );
    }

    #[test]
    fn target_not_in_hand() {
        let mut state = new_match(42);
        let st = state.storyteller();
        let foreign = state.hand(st.next())[0].id;
        assert_eq!(
            state.submit_target(foreign, Clue::new("x").unwrap()),
            Err(EngineError::CardNotInHand { seat: st, card: foreign })
        );
        assert_eq!(
            state.submit_target(999, Clue::new("x").unwrap()),
            Err(EngineError::CardNotInHand { seat: st, card: 999 })
        );
    }

    #[test]
    fn empty_clue_is_rejected() {
        assert_eq!(Clue::new("   "), Err(EngineError::EmptyClue));
        let mut state = new_match(42);
        let card = state.hand(seat(1))[0].id;
        let blank = Clue {
            text: "\t".into(),
            reasoning: None,
        };
        assert_eq!(state.submit_target(card, blank), Err(EngineError::EmptyClue));
    }

    #[test]
    fn distractor_rules() {
        let mut state = new_match(42);
        let st = state.storyteller();
        let target = state.hand(st)[0].id;
        state.submit_target(target, Clue::new("x").unwrap()).unwrap();
        let own = state.hand(st)[0].id;
        assert_eq!(
            state.submit_distractor(st, own),
            Err(EngineError::StorytellerCannotSubmitDistractor)
        );
        let l = seat(2);
        let c = state.hand(l)[0].id;
        state.submit_distractor(l, c).unwrap();
        let c2 = state.hand(l)[0].id;
        assert_eq!(state.submit_distractor(l, c2), Err(EngineError::DuplicateSubmission(l)));
        assert_eq!(
            state.shuffle_candidates(),
            Err(EngineError::IncompleteSubmissions { staged: 2 })
        );
        for l in [seat(3), seat(4)] {
            let c = state.hand(l)[0].id;
            state.submit_distractor(l, c).unwrap();
        }
        let order = state.shuffle_candidates().unwrap();
        let mut sorted = order.clone();
        sorted.sort_unstable();
        let mut staged: Vec<_> = SeatId::all()
            .iter()
            .map(|s| state.staged_card(*s).unwrap().id)
            .collect();
        staged.sort_unstable();
        assert_eq!(sorted, staged);
    }

    #[test]
    fn guess_rules() {
        let mut state = new_match(42);
        let st = state.storyteller();
        state.submit_target(state.hand(st)[0].id, Clue::new("x").unwrap()).unwrap();
        for l in st.others() {
            state.submit_distractor(l, state.hand(l)[0].id).unwrap();
        }
        state.shuffle_candidates().unwrap();
        let l = seat(2);
        let own = state.round().own_position(l).unwrap();
        assert_eq!(
            state.submit_guess(l, own),
            Err(EngineError::OwnCardGuess { seat: l, position: own })
        );
        assert_eq!(state.submit_guess(l, 5), Err(EngineError::PositionOutOfRange(5)));
        assert_eq!(state.submit_guess(l, 0), Err(EngineError::PositionOutOfRange(0)));
        let legal = (1..=4).find(|p| *p != own).unwrap();
        state.submit_guess(l, legal).unwrap();
        assert_eq!(state.submit_guess(l, legal), Err(EngineError::DuplicateGuess(l)));
        assert_eq!(state.apply_scores(), Err(EngineError::GuessesIncomplete));
    }

    #[test]
    fn target_guess_scores_three() {
        let mut state = new_match(42);
        let st = state.storyteller();
        state.submit_target(state.hand(st)[0].id, Clue::new("x").unwrap()).unwrap();
        for l in st.others() {
            state.submit_distractor(l, state.hand(l)[0].id).unwrap();
        }
        state.shuffle_candidates().unwrap();
        let target_pos = state.round().target_position().unwrap();
        state.submit_guess(seat(2), target_pos).unwrap();
        for l in [seat(3), seat(4)] {
            let own = state.round().own_position(l).unwrap();
            let pos = (1..=4).find(|p| *p != own && *p != target_pos).unwrap();
            state.submit_guess(l, pos).unwrap();
        }
        let outcome = state.apply_scores().unwrap();
        assert!(outcome.correct_listeners.contains(&seat(2)));
        assert!(outcome.deltas[&seat(2)] >= 3);
        assert_eq!(outcome.class, OutcomeClass::PartialCorrect);
    }

    #[test]
    fn hands_refill_after_each_round() {
        let mut state = new_match(42);
        play_round(&mut state);
        for s in SeatId::all() {
            assert_eq!(state.hand(s).len(), HAND_SIZE);
        }
        assert_eq!(state.discard_pile_len(), 4);
        assert_eq!(state.round().round_index, 2);
    }

    #[test]
    fn full_match_recycles_and_rotates() {
        let mut state = new_match(42);
        let census = state.card_census();
        let mut storyteller_counts = [0u32; SEATS];
        let mut played_first_round = Vec::new();
        let mut reappeared = false;
        let mut rounds = 0;
        while !state.is_finished() {
            for s in SeatId::all() {
                assert_eq!(state.hand(s).len(), HAND_SIZE);
            }
            storyteller_counts[state.storyteller().index()] += 1;
            if rounds == 4 {
                assert_eq!(state.storyteller(), seat(1));
            }
            let done = play_round(&mut state);
            if rounds == 0 {
                played_first_round = done.round.candidate_order.clone().unwrap();
            } else if done
                .round
                .candidate_order
                .as_ref()
                .unwrap()
                .iter()
                .any(|c| played_first_round.contains(c))
            {
                reappeared = true;
            }
            assert_eq!(done.hands_swapped, rounds + 1 == 12);
            assert_eq!(state.card_census(), census);
            rounds += 1;
        }
        assert_eq!(rounds, 24);
        assert_eq!(storyteller_counts, [6, 6, 6, 6]);
        assert!(state.reshuffles() >= 1);
        // Recycling makes reuse possible; with this seed it happens.
        assert!(reappeared);
    }

    #[test]
    fn swap_exchanges_hands_but_not_scores() {
        let mut state = new_match(42);
        for _ in 0..11 {
            play_round(&mut state);
        }
        assert_eq!(state.swap_hands(), Err(EngineError::WrongPhaseBoundary));
        // Drive round 12 by hand to inspect the boundary.
        let st = state.storyteller();
        state.submit_target(state.hand(st)[0].id, Clue::new("x").unwrap()).unwrap();
        for l in st.others() {
            state.submit_distractor(l, state.hand(l)[0].id).unwrap();
        }
        state.shuffle_candidates().unwrap();
        for l in st.others() {
            let own = state.round().own_position(l).unwrap();
            state.submit_guess(l, (1..=4).find(|p| *p != own).unwrap()).unwrap();
        }
        state.apply_scores().unwrap();
        state.replenish_hands().unwrap();
        let before: Vec<_> = SeatId::all().iter().map(|s| hand_ids(&state, *s)).collect();
        let scores = state.scores();
        let mut census = state.card_census();
        state.swap_hands().unwrap();
        assert_eq!(hand_ids(&state, seat(1)), before[2]);
        assert_eq!(hand_ids(&state, seat(3)), before[0]);
        assert_eq!(hand_ids(&state, seat(2)), before[3]);
        assert_eq!(hand_ids(&state, seat(4)), before[1]);
        assert_eq!(state.scores(), scores);
        census.sort_unstable();
        assert_eq!(state.card_census(), census);
        assert_eq!(state.swap_hands(), Err(EngineError::WrongPhaseBoundary));
        state.advance_storyteller().unwrap();
        assert_eq!(state.round().phase, 2);
        assert_eq!(state.storyteller(), seat(1));
    }

    #[test]
    fn seat_arithmetic() {
        assert_eq!(seat(4).next(), seat(1));
        assert_eq!(seat(1).swap_partner(), seat(3));
        assert_eq!(seat(2).swap_partner(), seat(4));
        assert_eq!(seat(3).others(), [seat(4), seat(1), seat(2)]);
        assert!(SeatId::new(0).is_err());
        assert!(SeatId::new(5).is_err());
    }

    #[test]
    fn storyteller_rounds_follow_rotation() {
        assert_eq!(MatchConfig::default().storyteller_rounds(), [6, 6, 6, 6]);
        let short = MatchConfig {
            rounds_per_phase: 3,
            phases: 2,
            ..MatchConfig::default()
        };
        assert_eq!(short.storyteller_rounds(), [2, 2, 1, 1]);
    }
}
