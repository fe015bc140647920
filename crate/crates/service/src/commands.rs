//! Subcommands. Each returns a JSON summary for stdout or a [`CliError`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use dixit_core::agents::{AgentRuntime, HttpTransport};
use dixit_core::benchkit::{self, BenchFile, CachedEmbedder, CaptionStore, EmbeddingProvider, HashedBagEmbedder, HttpEmbedder, Strategy};
use dixit_core::corpus;
use dixit_core::engine::{Card, CardId};
use dixit_core::ledger::{self, TournamentManifest};
use dixit_core::metrics;
use dixit_core::tournament;
use serde_json::{json, Value};

use crate::config::{self, AgentFile};
use crate::{render, server, CliError};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const CAPTIONS_FILE: &str = "captions.json";
pub const BENCH_FILE: &str = "bench.json";
pub const SIMILARITY_FILE: &str = "similarity.json";
pub const EMBEDDING_CACHE: &str = "embeddings.cache";

#[derive(Debug, Parser)]
#[command(name = "dixit", version, about = "Dixit arena tournaments, bench curation and human sessions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Play the round-robin schedule and write logs, manifest and report.
    RunTournament {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        /// Image directory; overrides the config file's corpus.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Evaluate one agent on a bench file.
    RunBench {
        #[arg(long)]
        bench: PathBuf,
        /// Agent name from --config, or a scripted policy id such as oracle_listener.
        #[arg(long)]
        model: String,
        /// Agent file with [[roster]] entries.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "direct")]
        strategy: Strategy,
        /// Image directory the bench was curated from; placeholders are used without it.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Caption a corpus, embed the captions and sample Easy/Hard distractors.
    CurateBench {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = benchkit::DEFAULT_K)]
        k_distractors: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Agent file holding the captioner and an optional [embedding] endpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "literal_storyteller")]
        captioner: String,
    },
    /// Re-score a match log, or every log of a tournament manifest.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
    /// Metric tables for a finished tournament.
    Report {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory for report.json and report.txt; defaults to the manifest's.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// HTTP API for human listener sessions.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Image directory served under /v1/images.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Tournament manifest whose rounds are shown to participants.
        #[arg(long)]
        logs: Option<PathBuf>,
        /// Source rounds from this bench file instead of match logs.
        #[arg(long)]
        bench: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        rounds_per_session: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Directory for per-session JSONL ledgers.
        #[arg(long, default_value = "sessions")]
        sessions_dir: PathBuf,
        /// Static files (the web client) served at /.
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
}

pub fn dispatch(command: Command) -> Result<Value, CliError> {
    match command {
        Command::RunTournament { config, out, seed, corpus } => run_tournament(&config, &out, seed, corpus.as_deref()),
        Command::RunBench {
            bench,
            model,
            config,
            strategy,
            corpus,
            seed,
            out,
        } => run_bench(&bench, &model, config.as_deref(), strategy, corpus.as_deref(), seed, &out),
        Command::CurateBench {
            corpus,
            k_distractors,
            seed,
            out,
            config,
            captioner,
        } => curate_bench(&corpus, k_distractors, seed, &out, config.as_deref(), &captioner),
        Command::Replay { log } => replay(&log),
        Command::Report { manifest, out } => report(&manifest, out.as_deref()),
        Command::Serve {
            port,
            host,
            corpus,
            logs,
            bench,
            rounds_per_session,
            seed,
            sessions_dir,
            static_dir,
        } => {
            let source = match (logs, bench) {
                (Some(_), Some(_)) => return Err(CliError::config("give either --logs or --bench, not both")),
                (Some(m), None) => server::RoundSource::Tournament(m),
                (None, Some(b)) => server::RoundSource::Bench(b),
                (None, None) => return Err(CliError::config("serve needs --logs or --bench")),
            };
            let options = server::ServeOptions {
                source,
                corpus,
                rounds_per_session,
                seed,
                sessions_dir,
                static_dir,
            };
            serve(&host, port, options)
        }
    }
}

fn runtime() -> AgentRuntime {
    AgentRuntime::new(Arc::new(HttpTransport::new()))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::new("IoError", e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn write_report(results: &[tournament::MatchResult], models: &[String], out: &Path) -> Result<metrics::MetricReport, CliError> {
    let report = metrics::tournament_report(models, results)?;
    write_json(&out.join(REPORT_JSON), &report)?;
    std::fs::write(out.join(REPORT_TXT), render::tournament_tables(&report))?;
    Ok(report)
}

pub fn run_tournament(config_path: &Path, out: &Path, seed: Option<u64>, corpus_dir: Option<&Path>) -> Result<Value, CliError> {
    let file = config::load_tournament_file(config_path)?;
    let mut cfg = file.tournament;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let corpus_dir = corpus_dir.map(Path::to_path_buf).or(file.corpus);
    let deck = corpus::deck_or_placeholder(corpus_dir.as_deref(), cfg.deck_size)?;
    cfg.deck_size = deck.len();
    std::fs::create_dir_all(out)?;

    let result = tournament::run_tournament(&cfg, &deck, &runtime(), Some(out))?;
    let report = write_report(&result.results, &result.models(), out)?;
    Ok(json!({
        "matches": result.results.len(),
        "rounds": result.round_count(),
        "manifest": result.manifest_path,
        "report": out.join(REPORT_JSON),
        "seed": cfg.seed,
        "low_confidence_matches": result.results.iter().filter(|m| m.low_confidence).map(|m| m.match_id).collect::<Vec<_>>(),
        "overall_points_pct": report.models.iter().map(|m| (m.model.clone(), m.roles.overall_points_pct)).collect::<BTreeMap<_, _>>(),
    }))
}

fn bench_cards(bench: &BenchFile, corpus_dir: Option<&Path>) -> Result<BTreeMap<CardId, Card>, CliError> {
    match corpus_dir {
        Some(dir) => Ok(corpus::load_corpus(dir)?.into_iter().map(|c| (c.id, c)).collect()),
        None => Ok(bench
            .items
            .iter()
            .flat_map(|i| i.option_order.iter().copied())
            .map(|id| (id, Card::new(id, format!("placeholder://card/{id}"))))
            .collect()),
    }
}

pub fn run_bench(
    bench_path: &Path,
    model: &str,
    agent_file: Option<&Path>,
    strategy: Strategy,
    corpus_dir: Option<&Path>,
    seed: u64,
    out: &Path,
) -> Result<Value, CliError> {
    let bench = BenchFile::load(bench_path)?;
    let agents = agent_file.map(config::load_agent_file).transpose()?;
    let agent = config::resolve_agent(agents.as_ref(), model)?;
    let cards = bench_cards(&bench, corpus_dir)?;
    let report = benchkit::run_bench(&bench.items, &cards, &agent, strategy, &runtime(), seed)?;

    std::fs::create_dir_all(out)?;
    let strategy_name = serde_json::to_value(strategy).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
    let path = out.join(format!("bench-report-{}-{strategy_name}.json", sanitize(&agent.name)));
    write_json(&path, &report)?;
    eprint!("{}", render::bench_table(&report));
    Ok(json!({
        "report": path,
        "agent": report.agent,
        "strategy": report.strategy,
        "easy_acc": report.easy_acc,
        "hard_acc": report.hard_acc,
        "total_acc": report.total_acc,
        "evaluated": report.evaluated,
        "failed": report.failed,
    }))
}

fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn embedder(file: Option<&AgentFile>, cache: PathBuf) -> Result<Box<dyn EmbeddingProvider>, CliError> {
    Ok(match file.and_then(|f| f.embedding.clone()) {
        Some(endpoint) => Box::new(CachedEmbedder::open(HttpEmbedder::new(endpoint), cache)?),
        None => Box::new(CachedEmbedder::open(HashedBagEmbedder::default(), cache)?),
    })
}

pub fn curate_bench(
    corpus_dir: &Path,
    k: usize,
    seed: u64,
    out: &Path,
    agent_file: Option<&Path>,
    captioner: &str,
) -> Result<Value, CliError> {
    let cards = corpus::load_corpus(corpus_dir)?;
    let agents = agent_file.map(config::load_agent_file).transpose()?;
    let agent = config::resolve_agent(agents.as_ref(), captioner)?;
    std::fs::create_dir_all(out)?;

    let captions_path = out.join(CAPTIONS_FILE);
    let existing = if captions_path.exists() {
        Some(CaptionStore::load(&captions_path)?)
    } else {
        None
    };
    let run = benchkit::generate_captions(&cards, &agent, &runtime(), seed, existing)?;
    run.store.save(&captions_path)?;
    for (id, why) in &run.failed {
        tracing::warn!(image = id, reason = %why, "no caption; image left out of the bench");
    }

    let provider = embedder(agents.as_ref(), out.join(EMBEDDING_CACHE))?;
    let (matrix, bench) = benchkit::curate(&run.store, provider.as_ref(), k, seed)?;
    bench.save(out.join(BENCH_FILE))?;
    write_json(&out.join(SIMILARITY_FILE), &matrix)?;
    Ok(json!({
        "bench": out.join(BENCH_FILE),
        "captions": captions_path,
        "items": bench.items.len(),
        "captioned": run.captioned.len(),
        "caption_failures": run.failed.iter().map(|(id, _)| id).collect::<Vec<_>>(),
        "bands": bench.bands,
        "embedding_provider": bench.embedding_provider,
    }))
}

pub fn replay(path: &Path) -> Result<Value, CliError> {
    let logs: Vec<(PathBuf, ledger::MatchLog)> = if path.extension().is_some_and(|e| e == "json") {
        let manifest = TournamentManifest::read(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        manifest
            .matches
            .iter()
            .map(|m| {
                let p = base.join(&m.log);
                ledger::read_match_log(&p).map(|l| (p, l))
            })
            .collect::<Result<_, _>>()?
    } else {
        vec![(path.to_path_buf(), ledger::read_match_log(path)?)]
    };
    let mut checked = Vec::new();
    for (p, log) in &logs {
        let scores = ledger::replay(log).map_err(|e| {
            let mut err = CliError::from(e);
            if let Value::Object(map) = &mut err.detail {
                map.insert("log".into(), json!(p));
            } else {
                err.detail = json!({"log": p});
            }
            err
        })?;
        checked.push(json!({"match_id": log.header.match_id, "rounds": log.rounds.len(), "final_scores": scores}));
    }
    Ok(json!({"status": "ok", "matches": checked}))
}

pub fn report(manifest: &Path, out: Option<&Path>) -> Result<Value, CliError> {
    let (m, results) = tournament::load_tournament(manifest)?;
    let models: Vec<String> = m.roster.iter().map(|b| b.name.clone()).collect();
    let out = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| manifest.parent().unwrap_or(Path::new(".")).to_path_buf());
    std::fs::create_dir_all(&out)?;
    let report = write_report(&results, &models, &out)?;
    print!("{}", render::tournament_tables(&report));
    Ok(json!({"report": out.join(REPORT_JSON), "matches": report.matches, "rounds": report.rounds}))
}

fn serve(host: &str, port: u16, options: server::ServeOptions) -> Result<Value, CliError> {
    let state = server::AppState::load(options)?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::new("ServeError", e.to_string()))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .map_err(|e| CliError::new("ServeError", format!("cannot bind {host}:{port}: {e}")))?;
        tracing::info!(addr = %listener.local_addr().map(|a| a.to_string()).unwrap_or_default(), "serving");
        axum::serve(listener, server::router(state))
            .await
            .map_err(|e| CliError::new("ServeError", e.to_string()))
    })?;
    Ok(json!({"status": "stopped"}))
}
