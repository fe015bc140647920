//! Command-line runner and human-session HTTP service.

use serde_json::{json, Value};

pub mod commands;
pub mod config;
pub mod render;
pub mod server;

/// A failed command, printed as one JSON object on stderr.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
    pub detail: Value,
}

impl CliError {
    pub fn new(kind: &'static str, message: impl Into<String>) -> Self {
        CliError {
            kind,
            message: message.into(),
            detail: Value::Null,
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        CliError::new("ConfigError", message)
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    pub fn to_json(&self) -> Value {
        let mut v = json!({"error": self.kind, "message": self.message});
        if !self.detail.is_null() {
            v["detail"] = self.detail.clone();
        }
        v
    }

    /// 2 for bad input, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self.kind {
            "ConfigError" => 2,
            _ => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new("IoError", e.to_string())
    }
}

impl From<dixit_core::ledger::LedgerError> for CliError {
    fn from(e: dixit_core::ledger::LedgerError) -> Self {
        use dixit_core::ledger::LedgerError as L;
        let kind = match &e {
            L::SchemaViolation(_) => "SchemaViolation",
            L::StorageFailure(_) => "StorageFailure",
            L::ReplayDivergence { .. } => "ReplayDivergence",
            L::FinalScoreMismatch { .. } => "FinalScoreMismatch",
            L::IncompleteLog => "IncompleteLog",
        };
        let detail = match &e {
            L::ReplayDivergence {
                match_id,
                round_index,
                logged,
                recomputed,
            } => json!({"match_id": match_id, "round_index": round_index, "logged": logged, "recomputed": recomputed}),
            L::FinalScoreMismatch {
                match_id,
                logged,
                recomputed,
            } => json!({"match_id": match_id, "logged": logged, "recomputed": recomputed}),
            _ => Value::Null,
        };
        CliError::new(kind, e.to_string()).with_detail(detail)
    }
}

impl From<dixit_core::tournament::TournamentError> for CliError {
    fn from(e: dixit_core::tournament::TournamentError) -> Self {
        use dixit_core::tournament::TournamentError as T;
        match e {
            T::Ledger(l) => l.into(),
            e @ (T::RosterTooSmall(_) | T::DuplicateModel(_) | T::InvalidBinding(_)) => CliError::config(e.to_string()),
            other => CliError::new("TournamentError", other.to_string()),
        }
    }
}

impl From<dixit_core::benchkit::BenchError> for CliError {
    fn from(e: dixit_core::benchkit::BenchError) -> Self {
        CliError::new("BenchError", e.to_string())
    }
}

impl From<dixit_core::corpus::CorpusError> for CliError {
    fn from(e: dixit_core::corpus::CorpusError) -> Self {
        CliError::new("CorpusError", e.to_string())
    }
}

impl From<dixit_core::metrics::MetricsError> for CliError {
    fn from(e: dixit_core::metrics::MetricsError) -> Self {
        CliError::new("MetricsError", e.to_string())
    }
}
