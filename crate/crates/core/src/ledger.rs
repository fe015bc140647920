//! Append-only match logs, tournament manifests and replay.
//!
//! A match log is UTF-8 JSON Lines. The first line is the header, then one
//! line per round, then a final line with the totals:
//!
//! ```text
//! {"header":{"schema_version":1,"match_id":0,"seed":42,...}}
//! {"round":{"match_id":0,"round_index":1,"phase":1,"storyteller":1,...}}
//! ...
//! {"final":{"final_scores":{"1":18,"2":30,...},...}}
//! ```
//!
//! Struct fields serialize in declaration order and maps are keyed by seat
//! number in ascending order, so two logs of the same match differ only in
//! the `*_at_ms` timestamp fields.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::agents::{AgentBinding, DecisionRecord};
use crate::engine::{score_round, CardId, Clue, CompletedRound, OutcomeClass, RoundStage, RoundState, SeatId, LISTENERS};

pub const SCHEMA_VERSION: u32 = 1;

/// Share of fallback decisions above which a match is flagged low-confidence.
pub const LOW_CONFIDENCE_FALLBACK_RATE: f64 = 0.10;

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("storage failure: {0}")]
    StorageFailure(#[from] std::io::Error),
    #[error("replay diverges at round {round_index} of match {match_id}")]
    ReplayDivergence {
        match_id: u64,
        round_index: u32,
        logged: Box<RoundDelta>,
        recomputed: Box<RoundDelta>,
    },
    #[error("final scores of match {match_id} do not equal the fold of round deltas")]
    FinalScoreMismatch {
        match_id: u64,
        logged: BTreeMap<SeatId, u32>,
        recomputed: BTreeMap<SeatId, u32>,
    },
    #[error("match log has no final entry")]
    IncompleteLog,
}

/// The scored part of a round, as logged or as recomputed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundDelta {
    pub outcome: OutcomeClass,
    pub deltas: BTreeMap<SeatId, u32>,
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeatAssignment {
    pub seat: SeatId,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchHeader {
    pub schema_version: u32,
    pub match_id: u64,
    pub seed: u64,
    pub rng_algorithm: String,
    pub rounds_per_phase: u32,
    pub phases: u8,
    pub deck_size: usize,
    pub seats: Vec<SeatAssignment>,
    /// Distinct bindings seated in this match, in seat order.
    pub bindings: Vec<AgentBinding>,
    pub created_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub match_id: u64,
    pub round_index: u32,
    pub phase: u8,
    pub storyteller: SeatId,
    pub storyteller_model: String,
    pub target: CardId,
    pub clue: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clue_reasoning: Option<String>,
    pub distractors: BTreeMap<SeatId, CardId>,
    pub candidate_order: Vec<CardId>,
    /// Listener seat to one-based candidate position.
    pub guesses: BTreeMap<SeatId, u8>,
    pub deltas: BTreeMap<SeatId, u32>,
    pub outcome: OutcomeClass,
    pub hands_swapped: bool,
    pub decisions: Vec<DecisionRecord>,
    pub started_at_ms: u64,
    pub finished_at_ms: u64,
}

impl RoundRecord {
    pub fn from_completed(
        match_id: u64,
        completed: &CompletedRound,
        storyteller_model: impl Into<String>,
        decisions: Vec<DecisionRecord>,
        started_at_ms: u64,
        finished_at_ms: u64,
    ) -> Result<Self, LedgerError> {
        let round = &completed.round;
        let missing = |what: &str| LedgerError::SchemaViolation(format!("round {} has no {what}", round.round_index));
        let clue = round.clue.clone().ok_or_else(|| missing("clue"))?;
        Ok(RoundRecord {
            match_id,
            round_index: round.round_index,
            phase: round.phase,
            storyteller: round.storyteller,
            storyteller_model: storyteller_model.into(),
            target: round.target.ok_or_else(|| missing("target"))?,
            clue: clue.text,
            clue_reasoning: clue.reasoning,
            distractors: round.distractors.clone(),
            candidate_order: round.candidate_order.clone().ok_or_else(|| missing("candidate order"))?,
            guesses: round.guesses.clone(),
            deltas: completed.outcome.deltas.clone(),
            outcome: completed.outcome.class,
            hands_swapped: completed.hands_swapped,
            decisions,
            started_at_ms,
            finished_at_ms,
        })
    }

    pub fn fallback_count(&self) -> usize {
        self.decisions.iter().filter(|d| d.fallback).count()
    }

    /// One-based position of the target among the candidates.
    pub fn target_position(&self) -> Option<u8> {
        self.position_of(self.target)
    }

    pub fn position_of(&self, card: CardId) -> Option<u8> {
        self.candidate_order.iter().position(|c| *c == card).map(|p| p as u8 + 1)
    }

    /// Listener seats whose guess resolved to the target.
    pub fn correct_listeners(&self) -> Vec<SeatId> {
        let target = self.target_position();
        self.guesses
            .iter()
            .filter(|(_, g)| Some(**g) == target)
            .map(|(s, _)| *s)
            .collect()
    }

    /// The round as the engine saw it just before scoring.
    pub fn to_round_state(&self) -> Result<RoundState, LedgerError> {
        Ok(RoundState {
            round_index: self.round_index,
            phase: self.phase,
            storyteller: self.storyteller,
            target: Some(self.target),
            clue: Some(Clue::new(self.clue.clone()).map_err(|e| LedgerError::SchemaViolation(e.to_string()))?),
            distractors: self.distractors.clone(),
            candidate_order: Some(self.candidate_order.clone()),
            guesses: self.guesses.clone(),
            stage: RoundStage::GuessesComplete,
        })
    }

    /// Structural checks that make the record replayable.
    pub fn validate(&self) -> Result<(), LedgerError> {
        let bad = |msg: String| Err(LedgerError::SchemaViolation(format!("round {}: {msg}", self.round_index)));
        if self.round_index == 0 {
            return bad("round_index must start at 1".into());
        }
        if !(1..=2).contains(&self.phase) {
            return bad(format!("phase {} not in 1..=2", self.phase));
        }
        if self.clue.trim().is_empty() {
            return bad("empty clue".into());
        }
        let listeners = self.storyteller.others();
        if self.distractors.len() != LISTENERS || listeners.iter().any(|l| !self.distractors.contains_key(l)) {
            return bad("distractors must come from exactly the three listeners".into());
        }
        if self.guesses.len() != LISTENERS || listeners.iter().any(|l| !self.guesses.contains_key(l)) {
            return bad("guesses must come from exactly the three listeners".into());
        }
        let mut staged: Vec<CardId> = self.distractors.values().copied().collect();
        staged.push(self.target);
        staged.sort_unstable();
        let mut order = self.candidate_order.clone();
        order.sort_unstable();
        if staged != order || order.windows(2).any(|w| w[0] == w[1]) {
            return bad("candidate_order is not a permutation of the staged cards".into());
        }
        for (seat, guess) in &self.guesses {
            if *guess == 0 || usize::from(*guess) > self.candidate_order.len() {
                return bad(format!("guess {guess} by {seat} out of range"));
            }
            if self.position_of(self.distractors[seat]) == Some(*guess) {
                return bad(format!("{seat} guessed their own card"));
            }
        }
        if self.deltas.len() != SeatId::all().len() {
            return bad("deltas must cover all four seats".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchFooter {
    pub final_scores: BTreeMap<SeatId, u32>,
    /// Sum of each model's seats.
    pub model_scores: BTreeMap<String, u32>,
    pub decisions: usize,
    pub fallback_decisions: usize,
    pub low_confidence: bool,
    pub finished_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogEntry {
    Header(MatchHeader),
    Round(RoundRecord),
    Final(MatchFooter),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchLog {
    pub header: MatchHeader,
    pub rounds: Vec<RoundRecord>,
    pub footer: Option<MatchFooter>,
}

impl MatchLog {
    pub fn model_of(&self, seat: SeatId) -> Option<&str> {
        self.header
            .seats
            .iter()
            .find(|a| a.seat == seat)
            .map(|a| a.model.as_str())
    }

    pub fn seats_of<'a>(&'a self, model: &'a str) -> impl Iterator<Item = SeatId> + 'a {
        self.header.seats.iter().filter(move |a| a.model == model).map(|a| a.seat)
    }

    /// Per-seat sums of the logged deltas.
    pub fn folded_scores(&self) -> BTreeMap<SeatId, u32> {
        let mut scores: BTreeMap<SeatId, u32> = SeatId::all().into_iter().map(|s| (s, 0)).collect();
        for r in &self.rounds {
            for (seat, d) in &r.deltas {
                *scores.entry(*seat).or_default() += d;
            }
        }
        scores
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |e: LogEntry| {
            out.push_str(&serde_json::to_string(&e).expect("log entries serialize"));
            out.push('\n');
        };
        push(LogEntry::Header(self.header.clone()));
        for r in &self.rounds {
            push(LogEntry::Round(r.clone()));
        }
        if let Some(f) = &self.footer {
            push(LogEntry::Final(f.clone()));
        }
        out
    }
}

/// Build the closing entry for a finished match.
pub fn summarize(header: &MatchHeader, rounds: &[RoundRecord], final_scores: BTreeMap<SeatId, u32>) -> MatchFooter {
    let mut model_scores: BTreeMap<String, u32> = BTreeMap::new();
    for a in &header.seats {
        *model_scores.entry(a.model.clone()).or_default() += final_scores.get(&a.seat).copied().unwrap_or(0);
    }
    let decisions: usize = rounds.iter().map(|r| r.decisions.len()).sum();
    let fallback_decisions: usize = rounds.iter().map(RoundRecord::fallback_count).sum();
    MatchFooter {
        final_scores,
        model_scores,
        decisions,
        fallback_decisions,
        low_confidence: decisions > 0 && fallback_decisions as f64 > LOW_CONFIDENCE_FALLBACK_RATE * decisions as f64,
        finished_at_ms: now_ms(),
    }
}

/// When appended records are forced to stable storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SyncPolicy {
    /// `fsync` after every entry.
    #[default]
    EveryEntry,
    /// Flush every entry to the OS; `fsync` once when the match is closed.
    OnFinish,
}

/// Single writer for one match log.
#[derive(Debug)]
pub struct LedgerWriter {
    file: File,
    path: PathBuf,
    match_id: u64,
    next_round: u32,
    finished: bool,
    sync: SyncPolicy,
}

impl LedgerWriter {
    /// Create `path` (which must not exist) and write the header.
    pub fn create(path: impl AsRef<Path>, header: &MatchHeader, sync: SyncPolicy) -> Result<Self, LedgerError> {
        if header.schema_version != SCHEMA_VERSION {
            return Err(LedgerError::SchemaViolation(format!(
                "unsupported schema_version {}",
                header.schema_version
            )));
        }
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new().write(true).create_new(true).open(&path)?;
        let mut writer = LedgerWriter {
            file,
            path,
            match_id: header.match_id,
            next_round: 1,
            finished: false,
            sync,
        };
        writer.write_entry(&LogEntry::Header(header.clone()))?;
        Ok(writer)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn write_entry(&mut self, entry: &LogEntry) -> Result<(), LedgerError> {
        let mut line = serde_json::to_vec(entry).map_err(|e| LedgerError::SchemaViolation(e.to_string()))?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()?;
        if self.sync == SyncPolicy::EveryEntry {
            self.file.sync_data()?;
        }
        Ok(())
    }

    pub fn append(&mut self, record: &RoundRecord) -> Result<(), LedgerError> {
        if self.finished {
            return Err(LedgerError::SchemaViolation("append after final entry".into()));
        }
        if record.match_id != self.match_id {
            return Err(LedgerError::SchemaViolation(format!(
                "record for match {} appended to log of match {}",
                record.match_id, self.match_id
            )));
        }
        if record.round_index != self.next_round {
            return Err(LedgerError::SchemaViolation(format!(
                "expected round {}, got {}",
                self.next_round, record.round_index
            )));
        }
        record.validate()?;
        self.write_entry(&LogEntry::Round(record.clone()))?;
        self.next_round += 1;
        Ok(())
    }

    pub fn finish(mut self, footer: &MatchFooter) -> Result<PathBuf, LedgerError> {
        self.write_entry(&LogEntry::Final(footer.clone()))?;
        self.finished = true;
        self.file.sync_all()?;
        Ok(self.path)
    }
}

/// Parse a JSONL match log.
pub fn parse_match_log(text: &str) -> Result<MatchLog, LedgerError> {
    let mut header = None;
    let mut rounds = Vec::new();
    let mut footer = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: LogEntry = serde_json::from_str(line)
            .map_err(|e| LedgerError::SchemaViolation(format!("line {}: {e}", i + 1)))?;
        let misplaced = || LedgerError::SchemaViolation(format!("line {}: entry out of order", i + 1));
        match entry {
            LogEntry::Header(h) => {
                if header.is_some() || !rounds.is_empty() || footer.is_some() {
                    return Err(misplaced());
                }
                if h.schema_version != SCHEMA_VERSION {
                    return Err(LedgerError::SchemaViolation(format!(
                        "unsupported schema_version {}",
                        h.schema_version
                    )));
                }
                header = Some(h);
            }
            LogEntry::Round(r) => {
                if header.is_none() || footer.is_some() {
                    return Err(misplaced());
                }
                r.validate()?;
                let expected = rounds.len() as u32 + 1;
                if r.round_index != expected {
                    return Err(LedgerError::SchemaViolation(format!(
                        "line {}: round_index {} where {expected} was expected",
                        i + 1,
                        r.round_index
                    )));
                }
                if header.as_ref().is_some_and(|h: &MatchHeader| h.match_id != r.match_id) {
                    return Err(LedgerError::SchemaViolation(format!(
                        "line {}: match_id {} differs from the header",
                        i + 1,
                        r.match_id
                    )));
                }
                rounds.push(r);
            }
            LogEntry::Final(f) => {
                if header.is_none() || footer.is_some() {
                    return Err(misplaced());
                }
                footer = Some(f);
            }
        }
    }
    let header = header.ok_or_else(|| LedgerError::SchemaViolation("missing header".into()))?;
    Ok(MatchLog { header, rounds, footer })
}

pub fn read_match_log(path: impl AsRef<Path>) -> Result<MatchLog, LedgerError> {
    let text = std::fs::read_to_string(path)?;
    parse_match_log(&text)
}

/// Re-score every round and check the logged deltas and final scores.
/// Returns the recomputed final scores.
pub fn replay(log: &MatchLog) -> Result<BTreeMap<SeatId, u32>, LedgerError> {
    let mut scores: BTreeMap<SeatId, u32> = SeatId::all().into_iter().map(|s| (s, 0)).collect();
    for record in &log.rounds {
        let outcome = score_round(&record.to_round_state()?)
            .map_err(|e| LedgerError::SchemaViolation(format!("round {}: {e}", record.round_index)))?;
        if outcome.deltas != record.deltas || outcome.class != record.outcome {
            return Err(LedgerError::ReplayDivergence {
                match_id: record.match_id,
                round_index: record.round_index,
                logged: Box::new(RoundDelta {
                    outcome: record.outcome,
                    deltas: record.deltas.clone(),
                }),
                recomputed: Box::new(RoundDelta {
                    outcome: outcome.class,
                    deltas: outcome.deltas,
                }),
            });
        }
        for (seat, d) in outcome.deltas {
            *scores.entry(seat).or_default() += d;
        }
    }
    let footer = log.footer.as_ref().ok_or(LedgerError::IncompleteLog)?;
    if footer.final_scores != scores {
        return Err(LedgerError::FinalScoreMismatch {
            match_id: log.header.match_id,
            logged: footer.final_scores.clone(),
            recomputed: scores,
        });
    }
    Ok(scores)
}

/// Drop every object key ending in `_at_ms`, recursively.
pub fn strip_timestamps(value: &mut Value) {
    match value {
        Value::Object(map) => {
            map.retain(|k, _| !k.ends_with("_at_ms"));
            map.values_mut().for_each(strip_timestamps);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timestamps),
        _ => {}
    }
}

/// A JSONL document with timestamps removed, line by line, for comparisons.
pub fn canonical_jsonl(text: &str) -> Result<String, LedgerError> {
    let mut out = String::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let mut v: Value = serde_json::from_str(line).map_err(|e| LedgerError::SchemaViolation(e.to_string()))?;
        strip_timestamps(&mut v);
        out.push_str(&v.to_string());
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestMatch {
    pub match_id: u64,
    pub model_a: String,
    pub model_b: String,
    /// Log path relative to the manifest's directory.
    pub log: String,
    pub model_scores: BTreeMap<String, u32>,
    pub low_confidence: bool,
}

/// Index of a tournament's match logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TournamentManifest {
    pub schema_version: u32,
    pub seed: u64,
    pub rng_algorithm: String,
    pub rounds_per_phase: u32,
    pub phases: u8,
    pub deck_size: usize,
    pub roster: Vec<AgentBinding>,
    pub matches: Vec<ManifestMatch>,
    pub created_at_ms: u64,
}

impl TournamentManifest {
    /// Write atomically: a temporary sibling is renamed over `path`.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), LedgerError> {
        let path = path.as_ref();
        let tmp = path.with_extension("json.tmp");
        let mut text = serde_json::to_string_pretty(self).map_err(|e| LedgerError::SchemaViolation(e.to_string()))?;
        text.push('\n');
        {
            let mut f = File::create(&tmp)?;
            f.write_all(text.as_bytes())?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, LedgerError> {
        let reader = BufReader::new(File::open(path)?);
        let manifest: TournamentManifest =
            serde_json::from_reader(reader).map_err(|e| LedgerError::SchemaViolation(e.to_string()))?;
        if manifest.schema_version != SCHEMA_VERSION {
            return Err(LedgerError::SchemaViolation(format!(
                "unsupported schema_version {}",
                manifest.schema_version
            )));
        }
        Ok(manifest)
    }

    /// Load every match log listed, resolving paths against `base_dir`.
    pub fn load_logs(&self, base_dir: impl AsRef<Path>) -> Result<Vec<MatchLog>, LedgerError> {
        self.matches
            .iter()
            .map(|m| read_match_log(base_dir.as_ref().join(&m.log)))
            .collect()
    }
}

/// Read JSONL lines lazily; used for large session ledgers.
pub fn read_jsonl_values(path: impl AsRef<Path>) -> Result<Vec<Value>, LedgerError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| LedgerError::SchemaViolation(format!("line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{Answer, Task};

    fn s(i: u8) -> SeatId {
        SeatId::new(i).unwrap()
    }

    pub(crate) fn record(round_index: u32) -> RoundRecord {
        // Storyteller P1 with card 10; target at position 2; P2 and P3 find it, P4 votes for P2's card.
        RoundRecord {
            match_id: 0,
            round_index,
            phase: 1,
            storyteller: s(1),
            storyteller_model: "a".into(),
            target: 10,
            clue: "a delicate hope".into(),
            clue_reasoning: None,
            distractors: [(s(2), 20), (s(3), 30), (s(4), 40)].into_iter().collect(),
            candidate_order: vec![20, 10, 40, 30],
            guesses: [(s(2), 2), (s(3), 2), (s(4), 1)].into_iter().collect(),
            deltas: [(s(1), 3), (s(2), 4), (s(3), 3), (s(4), 0)].into_iter().collect(),
            outcome: OutcomeClass::PartialCorrect,
            hands_swapped: false,
            decisions: vec![DecisionRecord {
                agent: "a".into(),
                seat: Some(s(1)),
                task: Task::GenerateClue,
                fallback: false,
                attempts: 1,
                raw_replies: vec![],
                answer: Answer::Text("a delicate hope".into()),
                reasoning: String::new(),
                errors: vec![],
            }],
            started_at_ms: 1,
            finished_at_ms: 2,
        }
    }

    fn header() -> MatchHeader {
        MatchHeader {
            schema_version: SCHEMA_VERSION,
            match_id: 0,
            seed: 42,
            rng_algorithm: crate::rng::RNG_ALGORITHM.into(),
            rounds_per_phase: 1,
            phases: 1,
            deck_size: 16,
            seats: SeatId::all()
                .into_iter()
                .map(|seat| SeatAssignment { seat, model: "a".into() })
                .collect(),
            bindings: vec![],
            created_at_ms: 0,
        }
    }

    #[test]
    fn write_read_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let h = header();
        let mut w = LedgerWriter::create(&path, &h, SyncPolicy::EveryEntry).unwrap();
        let r = record(1);
        w.append(&r).unwrap();
        let footer = summarize(&h, std::slice::from_ref(&r), r.deltas.clone());
        assert_eq!(footer.model_scores["a"], 10);
        w.finish(&footer).unwrap();

        let log = read_match_log(&path).unwrap();
        assert_eq!(log.rounds, vec![r]);
        assert_eq!(replay(&log).unwrap(), log.footer.as_ref().unwrap().final_scores);
        assert_eq!(parse_match_log(&log.to_jsonl()).unwrap(), log);
    }

    #[test]
    fn missing_guess_is_schema_violation() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = LedgerWriter::create(dir.path().join("m.jsonl"), &header(), SyncPolicy::OnFinish).unwrap();
        let mut r = record(1);
        r.guesses.remove(&s(4));
        assert!(matches!(w.append(&r), Err(LedgerError::SchemaViolation(_))));
        let mut r = record(2);
        assert!(matches!(w.append(&r), Err(LedgerError::SchemaViolation(_))));
        r.round_index = 1;
        w.append(&r).unwrap();
    }

    #[test]
    fn missing_field_in_file_is_schema_violation() {
        let mut v = serde_json::to_value(LogEntry::Round(record(1))).unwrap();
        v["round"].as_object_mut().unwrap().remove("guesses");
        let text = format!(
            "{}\n{}\n",
            serde_json::to_string(&LogEntry::Header(header())).unwrap(),
            v
        );
        assert!(matches!(parse_match_log(&text), Err(LedgerError::SchemaViolation(_))));
    }

    #[test]
    fn tampered_delta_is_located() {
        let h = header();
        let mut rounds = vec![record(1), record(2)];
        let footer = summarize(&h, &rounds, [(s(1), 6), (s(2), 8), (s(3), 6), (s(4), 0)].into_iter().collect());
        rounds[1].deltas.insert(s(3), 2);
        let log = MatchLog {
            header: h,
            rounds,
            footer: Some(footer),
        };
        match replay(&log) {
            Err(LedgerError::ReplayDivergence {
                round_index, logged, recomputed, ..
            }) => {
                assert_eq!(round_index, 2);
                assert_eq!(logged.deltas[&s(3)], 2);
                assert_eq!(recomputed.deltas[&s(3)], 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn timestamps_are_stripped() {
        let a = serde_json::to_string(&LogEntry::Round(record(1))).unwrap();
        let mut r = record(1);
        r.started_at_ms = 99;
        r.finished_at_ms = 100;
        let b = serde_json::to_string(&LogEntry::Round(r)).unwrap();
        assert_ne!(a, b);
        assert_eq!(canonical_jsonl(&a).unwrap(), canonical_jsonl(&b).unwrap());
    }
}
