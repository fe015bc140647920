//! Round-robin tournaments.
//!
//! Every unordered pair of roster entries, self-pairs included, plays one
//! match. Model A takes seats 1 and 2 and model B seats 3 and 4, so the
//! P1<->P3 / P2<->P4 hand swap at the phase boundary moves hands across
//! models. Matches own disjoint random streams and log files and may run in
//! parallel; results are always reported in match-id order.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{act, AgentBinding, AgentError, AgentRuntime, Answer, DecisionRecord, Hint, TaskContext};
use crate::engine::{
    Card, Clue, EngineError, MatchConfig, MatchState, SeatId, CORRECT_GUESS_POINTS, SEATS,
    STORYTELLER_PARTIAL_POINTS,
};
use crate::ledger::{
    self, LedgerError, LedgerWriter, ManifestMatch, MatchHeader, MatchLog, RoundRecord, SeatAssignment,
    SyncPolicy, TournamentManifest, SCHEMA_VERSION,
};
use crate::rng::{self, Lane, StreamRng};

/// Most a listener can earn in one round: a correct guess plus both other
/// listeners voting for its card.
pub const LISTENER_ROUND_MAX: u32 = CORRECT_GUESS_POINTS + 2;
pub const STORYTELLER_ROUND_MAX: u32 = STORYTELLER_PARTIAL_POINTS;

#[derive(Debug, Error)]
pub enum TournamentError {
    #[error("roster needs at least 2 models, got {0}")]
    RosterTooSmall(usize),
    #[error("model name {0:?} appears more than once in the roster")]
    DuplicateModel(String),
    #[error(transparent)]
    InvalidBinding(AgentError),
    #[error("match {match_id} aborted: {source}")]
    MatchAborted { match_id: u64, source: AgentError },
    #[error("match {match_id}: {source}")]
    Engine { match_id: u64, source: EngineError },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("model {model} did not play in match {match_id}")]
    ModelNotInMatch { model: String, match_id: u64 },
    #[error("no match between {0} and {1}")]
    IncompleteSchedule(String, String),
    #[error("no matches to aggregate")]
    NoMatches,
    #[error("attained {attained} exceeds maximum {max}")]
    AttainedAboveMax { attained: u32, max: u32 },
}

fn default_seed() -> u64 {
    42
}
fn default_rounds_per_phase() -> u32 {
    12
}
fn default_phases() -> u8 {
    2
}
fn default_deck_size() -> usize {
    84
}
fn default_parallel() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TournamentConfig {
    pub roster: Vec<AgentBinding>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_rounds_per_phase")]
    pub rounds_per_phase: u32,
    #[serde(default = "default_phases")]
    pub phases: u8,
    /// Used when no image corpus is supplied.
    #[serde(default = "default_deck_size")]
    pub deck_size: usize,
    #[serde(default)]
    pub abort_on_failure: bool,
    #[serde(default = "default_parallel")]
    pub parallel: bool,
}

impl TournamentConfig {
    pub fn new(roster: Vec<AgentBinding>) -> Self {
        TournamentConfig {
            roster,
            seed: default_seed(),
            rounds_per_phase: default_rounds_per_phase(),
            phases: default_phases(),
            deck_size: default_deck_size(),
            abort_on_failure: false,
            parallel: true,
        }
    }

    pub fn validate(&self) -> Result<(), TournamentError> {
        if self.roster.len() < 2 {
            return Err(TournamentError::RosterTooSmall(self.roster.len()));
        }
        let mut seen = BTreeSet::new();
        for b in &self.roster {
            b.validate().map_err(TournamentError::InvalidBinding)?;
            if !seen.insert(b.name.as_str()) {
                return Err(TournamentError::DuplicateModel(b.name.clone()));
            }
        }
        Ok(())
    }

    fn match_config(&self, match_id: u64, deck_size: usize) -> MatchConfig {
        MatchConfig {
            rounds_per_phase: self.rounds_per_phase,
            phases: self.phases,
            seed: self.seed,
            match_id,
            deck_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pairing {
    pub match_id: u64,
    pub model_a: AgentBinding,
    pub model_b: AgentBinding,
}

impl Pairing {
    pub fn is_self_play(&self) -> bool {
        self.model_a.name == self.model_b.name
    }
}

/// All pairs `(i, j)` with `i <= j` in roster order: `n(n+1)/2` matches.
pub fn build_schedule(config: &TournamentConfig) -> Result<Vec<Pairing>, TournamentError> {
    config.validate()?;
    let n = config.roster.len();
    let mut schedule = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            schedule.push(Pairing {
                match_id: schedule.len() as u64,
                model_a: config.roster[i].clone(),
                model_b: config.roster[j].clone(),
            });
        }
    }
    Ok(schedule)
}

/// Seats 1 and 2 for model A, 3 and 4 for model B.
pub fn assign_seats(pairing: &Pairing) -> [AgentBinding; SEATS] {
    [
        pairing.model_a.clone(),
        pairing.model_a.clone(),
        pairing.model_b.clone(),
        pairing.model_b.clone(),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub match_id: u64,
    pub model_a: String,
    pub model_b: String,
    pub seat_models: [String; SEATS],
    pub final_scores: BTreeMap<SeatId, u32>,
    pub records: Vec<RoundRecord>,
    pub low_confidence: bool,
    pub log_path: Option<PathBuf>,
}

impl MatchResult {
    pub fn from_log(log: &MatchLog, log_path: Option<PathBuf>) -> Result<Self, TournamentError> {
        let footer = log.footer.as_ref().ok_or(LedgerError::IncompleteLog)?;
        let seat_models = SeatId::all().map(|s| log.model_of(s).unwrap_or_default().to_string());
        Ok(MatchResult {
            match_id: log.header.match_id,
            model_a: seat_models[0].clone(),
            model_b: seat_models[2].clone(),
            seat_models,
            final_scores: footer.final_scores.clone(),
            records: log.rounds.clone(),
            low_confidence: footer.low_confidence,
            log_path,
        })
    }

    pub fn involves(&self, model: &str) -> bool {
        self.seat_models.iter().any(|m| m == model)
    }

    fn seats_of<'a>(&'a self, model: &'a str) -> impl Iterator<Item = SeatId> + 'a {
        SeatId::all()
            .into_iter()
            .filter(move |s| self.seat_models[s.index()] == model)
    }

    /// Highest score `seat` could have reached given its storyteller and listener turns.
    pub fn seat_max(&self, seat: SeatId) -> u32 {
        self.records
            .iter()
            .map(|r| {
                if r.storyteller == seat {
                    STORYTELLER_ROUND_MAX
                } else {
                    LISTENER_ROUND_MAX
                }
            })
            .sum()
    }

    /// `(attained, max)` for `model`, summed over the seats it holds.
    pub fn model_points(&self, model: &str) -> Result<(u32, u32), TournamentError> {
        if !self.involves(model) {
            return Err(TournamentError::ModelNotInMatch {
                model: model.to_string(),
                match_id: self.match_id,
            });
        }
        let attained = self.seats_of(model).map(|s| self.final_scores[&s]).sum();
        let max = self.seats_of(model).map(|s| self.seat_max(s)).sum();
        Ok((attained, max))
    }

    pub fn decision_count(&self) -> (usize, usize) {
        let total = self.records.iter().map(|r| r.decisions.len()).sum();
        let fallback = self.records.iter().map(RoundRecord::fallback_count).sum();
        (total, fallback)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedScore {
    pub per_match: Vec<(u32, u32)>,
    /// Mean of attained/max over matches, as a percentage.
    pub value: f64,
}

impl NormalizedScore {
    pub fn from_pairs(per_match: Vec<(u32, u32)>) -> Result<Self, TournamentError> {
        if per_match.is_empty() {
            return Err(TournamentError::NoMatches);
        }
        for &(attained, max) in &per_match {
            if attained > max || max == 0 {
                return Err(TournamentError::AttainedAboveMax { attained, max });
            }
        }
        let sum: f64 = per_match.iter().map(|&(a, m)| f64::from(a) / f64::from(m)).sum();
        let value = 100.0 * sum / per_match.len() as f64;
        Ok(NormalizedScore { per_match, value })
    }
}

/// Normalized score of `model` over `results`, every one of which it must have played.
pub fn normalize_scores(results: &[MatchResult], model: &str) -> Result<NormalizedScore, TournamentError> {
    let pairs = results
        .iter()
        .map(|r| r.model_points(model))
        .collect::<Result<Vec<_>, _>>()?;
    NormalizedScore::from_pairs(pairs)
}

/// The matches `model` played in.
pub fn matches_of(results: &[MatchResult], model: &str) -> Vec<MatchResult> {
    results.iter().filter(|r| r.involves(model)).cloned().collect()
}

/// `grid[a][b]`: model `a`'s normalized score in its match against `b`.
pub fn head_to_head_matrix(models: &[String], results: &[MatchResult]) -> Result<Vec<Vec<f64>>, TournamentError> {
    let mut grid = vec![vec![0.0; models.len()]; models.len()];
    for (i, a) in models.iter().enumerate() {
        for (j, b) in models.iter().enumerate() {
            let m = results
                .iter()
                .find(|r| (r.model_a == *a && r.model_b == *b) || (r.model_a == *b && r.model_b == *a))
                .ok_or_else(|| TournamentError::IncompleteSchedule(a.clone(), b.clone()))?;
            grid[i][j] = normalize_scores(std::slice::from_ref(m), a)?.value;
        }
    }
    Ok(grid)
}

/// Where a match's log goes, relative to the tournament output directory.
pub fn match_log_name(match_id: u64) -> String {
    format!("matches/match-{match_id:03}.jsonl")
}

fn seat_rngs(seed: u64, match_id: u64) -> [StreamRng; SEATS] {
    SeatId::all().map(|s| rng::stream(seed, match_id, Lane::Seat(s.get())))
}

struct Seat<'a> {
    binding: &'a AgentBinding,
    rng: &'a mut StreamRng,
}

fn decide(
    match_id: u64,
    seat: SeatId,
    who: Seat<'_>,
    context: &TaskContext,
    hint: Hint,
    runtime: &AgentRuntime,
    decisions: &mut Vec<DecisionRecord>,
) -> Result<Answer, TournamentError> {
    let mut d = act(who.binding, context, &hint, who.rng, runtime)
        .map_err(|source| TournamentError::MatchAborted { match_id, source })?;
    d.record.seat = Some(seat);
    decisions.push(d.record);
    Ok(d.answer)
}

fn choice_index(answer: &Answer) -> usize {
    answer.choice().expect("choice tasks yield choices") - 1
}

/// Play one full match, writing its log under `out_dir` when given.
pub fn run_match(
    pairing: &Pairing,
    config: &TournamentConfig,
    deck: &[Card],
    runtime: &AgentRuntime,
    out_dir: Option<&Path>,
    sync: SyncPolicy,
) -> Result<MatchResult, TournamentError> {
    let match_id = pairing.match_id;
    let engine_err = |source| TournamentError::Engine { match_id, source };
    let seats = assign_seats(pairing);
    let seat_models = seats.clone().map(|b| b.name);
    let mut rngs = seat_rngs(config.seed, match_id);
    let mut state = MatchState::new(config.match_config(match_id, deck.len()), deck.to_vec()).map_err(engine_err)?;

    let mut bindings: Vec<AgentBinding> = vec![pairing.model_a.clone()];
    if !pairing.is_self_play() {
        bindings.push(pairing.model_b.clone());
    }
    let header = MatchHeader {
        schema_version: SCHEMA_VERSION,
        match_id,
        seed: config.seed,
        rng_algorithm: rng::RNG_ALGORITHM.to_string(),
        rounds_per_phase: config.rounds_per_phase,
        phases: config.phases,
        deck_size: deck.len(),
        seats: SeatId::all()
            .into_iter()
            .map(|seat| SeatAssignment {
                seat,
                model: seat_models[seat.index()].clone(),
            })
            .collect(),
        bindings,
        created_at_ms: ledger::now_ms(),
    };
    let log_path = out_dir.map(|d| d.join(match_log_name(match_id)));
    let mut writer = match &log_path {
        Some(p) => Some(LedgerWriter::create(p, &header, sync)?),
        None => None,
    };

    let mut records = Vec::with_capacity(config.rounds_per_phase as usize * usize::from(config.phases));
    while !state.is_finished() {
        let started = ledger::now_ms();
        let mut decisions = Vec::with_capacity(8);
        let storyteller = state.storyteller();
        macro_rules! seat {
            ($s:expr) => {
                Seat {
                    binding: &seats[$s.index()],
                    rng: &mut rngs[$s.index()],
                }
            };
        }

        let hand = state.hand(storyteller).to_vec();
        let pick = decide(
            match_id,
            storyteller,
            seat!(storyteller),
            &TaskContext::SelectTarget { hand: hand.clone() },
            Hint::default(),
            runtime,
            &mut decisions,
        )?;
        let target = hand[choice_index(&pick)].clone();
        let clue_answer = decide(
            match_id,
            storyteller,
            seat!(storyteller),
            &TaskContext::GenerateClue { target: target.clone() },
            Hint::default(),
            runtime,
            &mut decisions,
        )?;
        let clue_text = clue_answer.text().unwrap_or(crate::agents::FALLBACK_CLUE).to_string();
        let mut clue = Clue::new(clue_text.clone()).map_err(engine_err)?;
        if let Some(r) = decisions.last().map(|d| d.reasoning.clone()).filter(|r| !r.is_empty()) {
            clue = clue.with_reasoning(r);
        }
        state.submit_target(target.id, clue).map_err(engine_err)?;

        for listener in storyteller.others() {
            let hand = state.hand(listener).to_vec();
            let pick = decide(
                match_id,
                listener,
                seat!(listener),
                &TaskContext::SelectDistractor {
                    clue: clue_text.clone(),
                    hand: hand.clone(),
                },
                Hint::default(),
                runtime,
                &mut decisions,
            )?;
            state
                .submit_distractor(listener, hand[choice_index(&pick)].id)
                .map_err(engine_err)?;
        }

        state.shuffle_candidates().map_err(engine_err)?;
        let candidates = state.candidates().expect("candidates are shuffled");
        let target_position = state.round().target_position().map(usize::from);
        for listener in storyteller.others() {
            let own_position = state.round().own_position(listener).map(usize::from);
            let guess = decide(
                match_id,
                listener,
                seat!(listener),
                &TaskContext::GuessDirect {
                    clue: clue_text.clone(),
                    candidates: candidates.clone(),
                    own_position,
                },
                Hint {
                    target_position,
                    candidate_is_target: None,
                },
                runtime,
                &mut decisions,
            )?;
            state
                .submit_guess(listener, choice_index(&guess) as u8 + 1)
                .map_err(engine_err)?;
        }

        let completed = state.complete_round().map_err(engine_err)?;
        let record = RoundRecord::from_completed(
            match_id,
            &completed,
            seat_models[storyteller.index()].clone(),
            decisions,
            started,
            ledger::now_ms(),
        )?;
        if let Some(w) = writer.as_mut() {
            w.append(&record)?;
        }
        records.push(record);
    }

    let final_scores = state.scores();
    let footer = ledger::summarize(&header, &records, final_scores.clone());
    if let Some(w) = writer {
        w.finish(&footer)?;
    }
    Ok(MatchResult {
        match_id,
        model_a: pairing.model_a.name.clone(),
        model_b: pairing.model_b.name.clone(),
        seat_models,
        final_scores,
        records,
        low_confidence: footer.low_confidence,
        log_path,
    })
}

#[derive(Debug, Clone)]
pub struct TournamentResult {
    pub schedule: Vec<Pairing>,
    /// Sorted by match id.
    pub results: Vec<MatchResult>,
    pub manifest_path: Option<PathBuf>,
}

impl TournamentResult {
    pub fn models(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for p in &self.schedule {
            for n in [&p.model_a.name, &p.model_b.name] {
                if !names.contains(n) {
                    names.push(n.clone());
                }
            }
        }
        names
    }

    pub fn round_count(&self) -> usize {
        self.results.iter().map(|r| r.records.len()).sum()
    }
}

/// Run the whole schedule. With `out_dir`, each match is logged to
/// `matches/match-NNN.jsonl` and `tournament.json` indexes them.
pub fn run_tournament(
    config: &TournamentConfig,
    deck: &[Card],
    runtime: &AgentRuntime,
    out_dir: Option<&Path>,
) -> Result<TournamentResult, TournamentError> {
    let schedule = build_schedule(config)?;
    let runtime = runtime.clone().with_abort_on_failure(config.abort_on_failure || runtime.abort_on_failure);
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir.join("matches")).map_err(LedgerError::from)?;
    }
    let play = |p: &Pairing| run_match(p, config, deck, &runtime, out_dir, SyncPolicy::EveryEntry);
    let mut results: Vec<MatchResult> = if config.parallel {
        schedule.par_iter().map(play).collect::<Result<_, _>>()?
    } else {
        schedule.iter().map(play).collect::<Result<_, _>>()?
    };
    results.sort_by_key(|r| r.match_id);

    let manifest_path = match out_dir {
        Some(dir) => {
            let manifest = TournamentManifest {
                schema_version: SCHEMA_VERSION,
                seed: config.seed,
                rng_algorithm: rng::RNG_ALGORITHM.to_string(),
                rounds_per_phase: config.rounds_per_phase,
                phases: config.phases,
                deck_size: deck.len(),
                roster: config.roster.clone(),
                matches: results
                    .iter()
                    .map(|r| ManifestMatch {
                        match_id: r.match_id,
                        model_a: r.model_a.clone(),
                        model_b: r.model_b.clone(),
                        log: match_log_name(r.match_id),
                        model_scores: model_scores(r),
                        low_confidence: r.low_confidence,
                    })
                    .collect(),
                created_at_ms: ledger::now_ms(),
            };
            let path = dir.join("tournament.json");
            manifest.write(&path)?;
            Some(path)
        }
        None => None,
    };
    Ok(TournamentResult {
        schedule,
        results,
        manifest_path,
    })
}

fn model_scores(r: &MatchResult) -> BTreeMap<String, u32> {
    let mut out = BTreeMap::new();
    for s in SeatId::all() {
        *out.entry(r.seat_models[s.index()].clone()).or_default() += r.final_scores[&s];
    }
    out
}

/// Rebuild results from a manifest and its logs, replaying each log first.
pub fn load_tournament(manifest_path: &Path) -> Result<(TournamentManifest, Vec<MatchResult>), TournamentError> {
    let manifest = TournamentManifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut results = Vec::with_capacity(manifest.matches.len());
    for m in &manifest.matches {
        let path = base.join(&m.log);
        let log = ledger::read_match_log(&path)?;
        ledger::replay(&log)?;
        results.push(MatchResult::from_log(&log, Some(path))?);
    }
    results.sort_by_key(|r| r.match_id);
    Ok((manifest, results))
}
