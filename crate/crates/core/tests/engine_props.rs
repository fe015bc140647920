use std::collections::{BTreeMap, HashMap};

use dixit_core::engine::{
    score_round, Card, CardId, Clue, EngineError, MatchConfig, MatchState, OutcomeClass, RoundStage, RoundState, SeatId,
};
use proptest::prelude::*;

fn seat(i: u8) -> SeatId {
    SeatId::new(i).unwrap()
}

type Played = (RoundState, BTreeMap<SeatId, u32>);

/// Plays a whole match, choosing hand slots and guesses from `picks`.
fn play(seed: u64, rounds_per_phase: u32, picks: &[u8]) -> (MatchState, Vec<Played>) {
    let config = MatchConfig {
        seed,
        rounds_per_phase,
        deck_size: 40,
        ..MatchConfig::default()
    };
    let mut state = MatchState::new(config, Card::placeholder_deck(40)).unwrap();
    let mut k = 0usize;
    let mut next = |m: usize| {
        k += 1;
        usize::from(picks[k % picks.len()]) % m
    };
    let mut rounds = Vec::new();
    while !state.is_finished() {
        let st = state.storyteller();
        let target = state.hand(st)[next(4)].id;
        state.submit_target(target, Clue::new("x").unwrap()).unwrap();
        for l in st.others() {
            let card = state.hand(l)[next(4)].id;
            state.submit_distractor(l, card).unwrap();
        }
        state.shuffle_candidates().unwrap();
        for l in st.others() {
            let own = state.round().own_position(l).unwrap();
            let legal: Vec<u8> = (1..=4).filter(|p| *p != own).collect();
            state.submit_guess(l, legal[next(3)]).unwrap();
        }
        let done = state.complete_round().unwrap();
        assert_eq!(state.card_census(), (1..=40).collect::<Vec<CardId>>());
        rounds.push((done.round, done.outcome.deltas));
    }
    (state, rounds)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn round_deltas_respect_the_rules(seed in any::<u64>(), picks in prop::collection::vec(any::<u8>(), 1..64)) {
        let (state, rounds) = play(seed, 3, &picks);
        let mut totals: BTreeMap<SeatId, u32> = SeatId::all().into_iter().map(|s| (s, 0)).collect();
        for (round, deltas) in &rounds {
            let target_pos = round.target_position().unwrap();
            let correct = round.guesses.values().filter(|g| **g == target_pos).count();
            let st = deltas[&round.storyteller];
            prop_assert_eq!(st, if correct == 1 || correct == 2 { 3 } else { 0 });
            prop_assert!(st <= 3);
            for l in round.storyteller.others() {
                prop_assert!(deltas[&l] <= 5);
            }
            // Points from decoys equal the number of wrong guesses.
            let base: u32 = match correct {
                0 => 6,
                3 => 9,
                c => 3 + 3 * c as u32,
            };
            prop_assert_eq!(deltas.values().sum::<u32>(), base + (3 - correct) as u32);
            for (s, d) in deltas {
                *totals.get_mut(s).unwrap() += d;
            }
        }
        prop_assert_eq!(state.scores(), totals);
        prop_assert_eq!(rounds.len(), 6);
    }

    #[test]
    fn storyteller_rotation_is_fixed(seed in any::<u64>()) {
        let (_, rounds) = play(seed, 4, &[0]);
        for (i, (round, _)) in rounds.iter().enumerate() {
            prop_assert_eq!(round.storyteller, seat((i % 4) as u8 + 1));
            prop_assert_eq!(round.phase, if i < 4 { 1 } else { 2 });
        }
    }
}

#[test]
fn own_card_guess_is_rejected() {
    let mut state = MatchState::new(MatchConfig::default(), Card::placeholder_deck(84)).unwrap();
    let st = state.storyteller();
    let target = state.hand(st)[0].id;
    state.submit_target(target, Clue::new("a").unwrap()).unwrap();
    for l in st.others() {
        let card = state.hand(l)[0].id;
        state.submit_distractor(l, card).unwrap();
    }
    state.shuffle_candidates().unwrap();
    let l = st.next();
    let own = state.round().own_position(l).unwrap();
    assert!(matches!(state.submit_guess(l, own), Err(EngineError::OwnCardGuess { .. })));
    assert!(matches!(state.submit_guess(st, 1), Err(EngineError::StorytellerCannotGuess)));
}

#[test]
fn census_of_outcome_classes() {
    let mut seen = HashMap::new();
    let order: Vec<CardId> = vec![1, 2, 3, 4];
    for a in [1u8, 3, 4] {
        for b in [1u8, 2, 4] {
            for c in [1u8, 2, 3] {
                let round = RoundState {
                    round_index: 1,
                    phase: 1,
                    storyteller: seat(1),
                    target: Some(1),
                    clue: Some(Clue::new("c").unwrap()),
                    distractors: [(seat(2), 2), (seat(3), 3), (seat(4), 4)].into_iter().collect(),
                    candidate_order: Some(order.clone()),
                    guesses: [(seat(2), a), (seat(3), b), (seat(4), c)].into_iter().collect(),
                    stage: RoundStage::GuessesComplete,
                };
                *seen.entry(score_round(&round).unwrap().class).or_insert(0) += 1;
            }
        }
    }
    assert_eq!(seen[&OutcomeClass::AllCorrect], 1);
    assert_eq!(seen[&OutcomeClass::AllWrong], 8);
    assert_eq!(seen[&OutcomeClass::PartialCorrect], 18);
}
