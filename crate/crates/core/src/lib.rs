//! Deterministic Dixit match engine and evaluation harness.
//!
//! - [`engine`]: the four-seat round state machine and scoring table.
//! - [`agents`]: prompt rendering, reply parsing, scripted policies and remote model calls.
//! - [`tournament`]: round-robin scheduling, match driving and score normalization.
//! - [`metrics`]: role scores, outcome mix, clarity/creativity, leave-one-listener-out, position uniformity.
//! - [`benchkit`]: caption/embedding/similarity curation of multiple-choice items and their evaluation.
//! - [`ledger`]: append-only match logs, manifests and replay.

pub mod agents;
pub mod benchkit;
pub mod corpus;
pub mod engine;
pub mod ledger;
pub mod metrics;
pub mod rng;
pub mod tournament;
