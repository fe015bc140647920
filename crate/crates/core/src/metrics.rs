//! Evaluation metrics over match records and human ratings.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::engine::{OutcomeClass, SeatId, LISTENERS, STORYTELLER_PARTIAL_POINTS};
use crate::ledger::RoundRecord;
use crate::tournament::{self, MatchResult, TournamentError};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("model {0} has no rounds in the given records")]
    NoRoundsForModel(String),
    #[error("no input records")]
    EmptyInput,
    #[error("no ratings")]
    EmptyRatings,
    #[error("rating {0} is outside 1..=5")]
    RatingOutOfRange(i64),
    #[error("round {round_index} has {count} listener guesses, expected 3")]
    WrongListenerCount { round_index: u32, count: usize },
    #[error(transparent)]
    Tournament(#[from] TournamentError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleScores {
    /// Share of the model's storyteller rounds that ended PartialCorrect.
    pub storyteller_pct: f64,
    /// Share of the model's guesses that found the target.
    pub listener_pct: f64,
    /// Normalized points over the model's matches.
    pub overall_points_pct: f64,
    /// Mean of the storyteller and listener percentages.
    pub overall_mean_pct: f64,
    pub storyteller_rounds: usize,
    pub guesses: usize,
}

/// Role percentages for `model` across every match it played in `results`.
pub fn role_scores(results: &[MatchResult], model: &str) -> Result<RoleScores, MetricsError> {
    let played = tournament::matches_of(results, model);
    let (mut told, mut partial, mut guesses, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for m in &played {
        for r in &m.records {
            if m.seat_models[r.storyteller.index()] == model {
                told += 1;
                partial += usize::from(r.outcome == OutcomeClass::PartialCorrect);
            }
            let target = r.target_position();
            for (seat, g) in &r.guesses {
                if m.seat_models[seat.index()] == model {
                    guesses += 1;
                    correct += usize::from(Some(*g) == target);
                }
            }
        }
    }
    if told == 0 && guesses == 0 {
        return Err(MetricsError::NoRoundsForModel(model.to_string()));
    }
    let pct = |n: usize, d: usize| if d == 0 { 0.0 } else { 100.0 * n as f64 / d as f64 };
    let storyteller_pct = pct(partial, told);
    let listener_pct = pct(correct, guesses);
    let overall_points_pct = tournament::normalize_scores(&played, model)?.value;
    Ok(RoleScores {
        storyteller_pct,
        listener_pct,
        overall_points_pct,
        overall_mean_pct: (storyteller_pct + listener_pct) / 2.0,
        storyteller_rounds: told,
        guesses,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDistribution {
    pub partial: f64,
    pub all_correct: f64,
    pub all_wrong: f64,
    pub rounds: usize,
}

pub fn outcome_distribution<'a>(
    outcomes: impl IntoIterator<Item = &'a OutcomeClass>,
) -> Result<OutcomeDistribution, MetricsError> {
    let mut counts = [0usize; 3];
    for o in outcomes {
        counts[match o {
            OutcomeClass::PartialCorrect => 0,
            OutcomeClass::AllCorrect => 1,
            OutcomeClass::AllWrong => 2,
        }] += 1;
    }
    let n: usize = counts.iter().sum();
    if n == 0 {
        return Err(MetricsError::EmptyInput);
    }
    let f = |c: usize| c as f64 / n as f64;
    Ok(OutcomeDistribution {
        partial: f(counts[0]),
        all_correct: f(counts[1]),
        all_wrong: f(counts[2]),
        rounds: n,
    })
}

/// Outcome mix of the rounds `model` told.
pub fn storyteller_outcomes(results: &[MatchResult], model: &str) -> Result<OutcomeDistribution, MetricsError> {
    let classes: Vec<OutcomeClass> = results
        .iter()
        .flat_map(|m| {
            m.records
                .iter()
                .filter(move |r| m.seat_models[r.storyteller.index()] == model)
                .map(|r| r.outcome)
        })
        .collect();
    outcome_distribution(&classes)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClueRatings {
    pub clarity_raw: Vec<i64>,
    pub creativity_raw: Vec<i64>,
}

fn check_ratings(ratings: &[i64]) -> Result<(), MetricsError> {
    if ratings.is_empty() {
        return Err(MetricsError::EmptyRatings);
    }
    match ratings.iter().find(|s| !(1..=5).contains(*s)) {
        Some(s) => Err(MetricsError::RatingOutOfRange(*s)),
        None => Ok(()),
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Centered clarity of one rating: 1 at the midpoint 3, 0 at either extreme.
pub fn centered_clarity(s: i64) -> f64 {
    1.0 - (s - 3).abs() as f64 / 2.0
}

/// Median of the centered ratings, scaled down by the share of extreme (1 or 5) votes.
pub fn clarity_index(ratings: &[i64]) -> Result<f64, MetricsError> {
    check_ratings(ratings)?;
    let mut mapped: Vec<f64> = ratings.iter().map(|&s| centered_clarity(s)).collect();
    let med = median(&mut mapped);
    let extremes = ratings.iter().filter(|&&s| s == 1 || s == 5).count();
    Ok(med * (1.0 - extremes as f64 / ratings.len() as f64))
}

/// Mean rating mapped from 1..=5 onto [0, 1].
pub fn creativity_score(ratings: &[i64]) -> Result<f64, MetricsError> {
    check_ratings(ratings)?;
    let mean = ratings.iter().sum::<i64>() as f64 / ratings.len() as f64;
    Ok((mean - 1.0) / 4.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoloReport {
    pub original_score: u32,
    pub per_removal_delta: Vec<f64>,
    pub avg_delta: f64,
    pub std_delta: f64,
    pub stability: f64,
    pub rounds: usize,
}

/// `1 - std/3`, clamped to [0, 1].
pub fn stability(std_delta: f64) -> f64 {
    (1.0 - std_delta / 3.0).clamp(0.0, 1.0)
}

/// Storyteller points of a round scored on `correct` of `listeners` guesses.
fn storyteller_points(correct: usize, listeners: usize) -> u32 {
    match OutcomeClass::from_counts(correct, listeners) {
        OutcomeClass::PartialCorrect => STORYTELLER_PARTIAL_POINTS,
        _ => 0,
    }
}

/// Leave-one-listener-out analysis over a storyteller's rounds.
///
/// Removal choice `k` (1..=3) drops the listener `k` seats clockwise from
/// the storyteller in every round, re-classifies the round on the two
/// remaining guesses and re-sums the storyteller's points.
pub fn lolo<'a>(records: impl IntoIterator<Item = &'a RoundRecord>) -> Result<LoloReport, MetricsError> {
    let mut original = 0u32;
    let mut removed = [0u32; LISTENERS];
    let mut rounds = 0;
    for r in records {
        if r.guesses.len() != LISTENERS {
            return Err(MetricsError::WrongListenerCount {
                round_index: r.round_index,
                count: r.guesses.len(),
            });
        }
        rounds += 1;
        let target = r.target_position();
        let hit: Vec<bool> = r
            .storyteller
            .others()
            .iter()
            .map(|l| r.guesses.get(l).copied() == target)
            .collect();
        let correct = hit.iter().filter(|h| **h).count();
        original += storyteller_points(correct, LISTENERS);
        for (k, h) in hit.iter().enumerate() {
            removed[k] += storyteller_points(correct - usize::from(*h), LISTENERS - 1);
        }
    }
    if rounds == 0 {
        return Err(MetricsError::EmptyInput);
    }
    let deltas: Vec<f64> = removed.iter().map(|&s| f64::from(s) - f64::from(original)).collect();
    let avg = deltas.iter().sum::<f64>() / deltas.len() as f64;
    let var = deltas.iter().map(|d| (d - avg).powi(2)).sum::<f64>() / deltas.len() as f64;
    let std = var.sqrt();
    Ok(LoloReport {
        original_score: original,
        per_removal_delta: deltas,
        avg_delta: avg,
        std_delta: std,
        stability: stability(std),
        rounds,
    })
}

/// LOLO over every round `model` told in `results`.
pub fn lolo_for(results: &[MatchResult], model: &str) -> Result<LoloReport, MetricsError> {
    let rounds: Vec<&RoundRecord> = results
        .iter()
        .flat_map(|m| {
            m.records
                .iter()
                .filter(move |r| m.seat_models[r.storyteller.index()] == model)
        })
        .collect();
    if rounds.is_empty() {
        return Err(MetricsError::NoRoundsForModel(model.to_string()));
    }
    lolo(rounds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquaredTest {
    pub counts: Vec<u64>,
    pub statistic: f64,
    pub df: u32,
    pub p_value: f64,
}

/// Pearson goodness-of-fit against equal expected counts.
pub fn chi_squared_uniform(counts: &[u64]) -> Result<ChiSquaredTest, MetricsError> {
    let n: u64 = counts.iter().sum();
    if counts.len() < 2 || n == 0 {
        return Err(MetricsError::EmptyInput);
    }
    let expected = n as f64 / counts.len() as f64;
    let statistic: f64 = counts
        .iter()
        .map(|&o| (o as f64 - expected).powi(2) / expected)
        .sum();
    let df = counts.len() as u32 - 1;
    let dist = ChiSquared::new(f64::from(df)).expect("df is positive");
    Ok(ChiSquaredTest {
        counts: counts.to_vec(),
        statistic,
        df,
        p_value: dist.sf(statistic),
    })
}

/// Chi-squared test on where the target landed among the 4 candidates.
pub fn position_uniformity<'a>(
    records: impl IntoIterator<Item = &'a RoundRecord>,
) -> Result<ChiSquaredTest, MetricsError> {
    let mut counts = vec![0u64; crate::engine::SEATS];
    for r in records {
        if let Some(p) = r.target_position() {
            counts[usize::from(p) - 1] += 1;
        }
    }
    chi_squared_uniform(&counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandSwapReport {
    pub matches: usize,
    /// Mean over matches and seats of (phase 1 points - phase 2 points).
    pub mean_phase_diff: f64,
    pub mean_abs_phase_diff: f64,
    /// Mean phase difference of each seat, P1..P4.
    pub per_seat_mean: [f64; 4],
}

/// Phase-1 vs phase-2 points per seat, averaged over `results`.
pub fn hand_swap_bias(results: &[MatchResult]) -> Result<HandSwapReport, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut per_seat = [0.0f64; 4];
    let mut abs_sum = 0.0;
    for m in results {
        let mut diff: BTreeMap<SeatId, i64> = BTreeMap::new();
        for r in &m.records {
            let sign = if r.phase == 1 { 1 } else { -1 };
            for (seat, d) in &r.deltas {
                *diff.entry(*seat).or_default() += sign * i64::from(*d);
            }
        }
        for (seat, d) in diff {
            per_seat[seat.index()] += d as f64;
            abs_sum += d.abs() as f64;
        }
    }
    let n = results.len() as f64;
    let per_seat_mean = per_seat.map(|s| s / n);
    Ok(HandSwapReport {
        matches: results.len(),
        mean_phase_diff: per_seat_mean.iter().sum::<f64>() / 4.0,
        mean_abs_phase_diff: abs_sum / (4.0 * n),
        per_seat_mean,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: String,
    pub roles: RoleScores,
    pub storyteller_outcomes: OutcomeDistribution,
    pub lolo: LoloReport,
    pub decisions: usize,
    pub fallback_decisions: usize,
    pub fallback_rate: f64,
    pub low_confidence_matches: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub models: Vec<ModelReport>,
    pub head_to_head: Vec<Vec<f64>>,
    pub model_order: Vec<String>,
    pub overall_outcomes: OutcomeDistribution,
    pub position_uniformity: ChiSquaredTest,
    pub hand_swap_self_play: Option<HandSwapReport>,
    pub hand_swap_all: HandSwapReport,
    pub rounds: usize,
    pub matches: usize,
}

/// Every tournament-level metric for the models in `model_order`.
pub fn tournament_report(model_order: &[String], results: &[MatchResult]) -> Result<MetricReport, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut models = Vec::with_capacity(model_order.len());
    for model in model_order {
        let played = tournament::matches_of(results, model);
        let (mut decisions, mut fallback) = (0, 0);
        for m in &played {
            for r in &m.records {
                for d in &r.decisions {
                    if d.agent == *model {
                        decisions += 1;
                        fallback += usize::from(d.fallback);
                    }
                }
            }
        }
        models.push(ModelReport {
            model: model.clone(),
            roles: role_scores(results, model)?,
            storyteller_outcomes: storyteller_outcomes(results, model)?,
            lolo: lolo_for(results, model)?,
            decisions,
            fallback_decisions: fallback,
            fallback_rate: if decisions == 0 { 0.0 } else { fallback as f64 / decisions as f64 },
            low_confidence_matches: played.iter().filter(|m| m.low_confidence).map(|m| m.match_id).collect(),
        });
    }
    let all_records: Vec<&RoundRecord> = results.iter().flat_map(|m| &m.records).collect();
    let classes: Vec<OutcomeClass> = all_records.iter().map(|r| r.outcome).collect();
    let self_play: Vec<MatchResult> = results.iter().filter(|m| m.model_a == m.model_b).cloned().collect();
    Ok(MetricReport {
        models,
        head_to_head: tournament::head_to_head_matrix(model_order, results)?,
        model_order: model_order.to_vec(),
        overall_outcomes: outcome_distribution(&classes)?,
        position_uniformity: position_uniformity(all_records.iter().copied())?,
        hand_swap_self_play: hand_swap_bias(&self_play).ok(),
        hand_swap_all: hand_swap_bias(results)?,
        rounds: all_records.len(),
        matches: results.len(),
    })
}
