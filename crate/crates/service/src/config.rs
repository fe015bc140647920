//! TOML configuration files.
//!
//! A tournament file is a [`TournamentConfig`] plus an optional corpus:
//!
//! ```toml
//! seed = 42
//! corpus = "images/"
//!
//! [[roster]]
//! name = "oracle"
//! kind = "scripted"
//! policy = { id = "oracle_listener" }
//!
//! [[roster]]
//! name = "vision-a"
//! kind = "remote_model"
//! endpoint = { base_url = "https://openrouter.ai/api/v1", model_id = "vendor/model", api_key_env = "OPENROUTER_API_KEY" }
//! ```
//!
//! Agent files used by `run-bench` and `curate-bench` hold `[[roster]]`
//! entries only, plus an optional `[embedding]` endpoint table.

use std::path::{Path, PathBuf};

use dixit_core::agents::{AgentBinding, PolicyId, ScriptedPolicy};
use dixit_core::benchkit::EmbeddingEndpointConfig;
use dixit_core::tournament::TournamentConfig;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
pub struct TournamentFile {
    #[serde(flatten)]
    pub tournament: TournamentConfig,
    /// Relative paths resolve against the config file's directory.
    #[serde(default)]
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct AgentFile {
    #[serde(default)]
    pub roster: Vec<AgentBinding>,
    #[serde(default)]
    pub embedding: Option<EmbeddingEndpointConfig>,
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn resolve(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.parent().unwrap_or(Path::new(".")).join(p)
    }
}

pub fn load_tournament_file(path: &Path) -> Result<TournamentFile, CliError> {
    let mut file: TournamentFile = read_toml(path)?;
    file.tournament
        .validate()
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    file.corpus = file.corpus.map(|c| resolve(path, c));
    Ok(file)
}

pub fn load_agent_file(path: &Path) -> Result<AgentFile, CliError> {
    let file: AgentFile = read_toml(path)?;
    for agent in &file.roster {
        agent
            .validate()
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    }
    Ok(file)
}

/// `name` from the agent file if given, else a scripted policy named by its id.
pub fn resolve_agent(file: Option<&AgentFile>, name: &str) -> Result<AgentBinding, CliError> {
    if let Some(found) = file.and_then(|f| f.roster.iter().find(|a| a.name == name)) {
        return Ok(found.clone());
    }
    let id: PolicyId = serde_json::from_value(serde_json::Value::String(name.to_string())).map_err(|_| {
        CliError::config(format!(
            "unknown agent {name:?}: not in the agent file and not a scripted policy id"
        ))
    })?;
    Ok(AgentBinding::scripted(name, ScriptedPolicy::new(id)))
}
