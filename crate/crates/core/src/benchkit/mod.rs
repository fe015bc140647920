//! Multiple-choice benchmark curation and evaluation.
//!
//! Curation runs in stages: caption every corpus image, embed the captions,
//! compute the cosine similarity matrix, then for every image build one Easy
//! and one Hard item whose distractors come from fixed bands of the
//! similarity ranking. Stage outputs are plain JSON files so any stage can be
//! re-run on its own.

pub mod embed;
pub mod evaluate;

use std::collections::{BTreeMap, BTreeSet};
use std::ops::RangeInclusive;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{act, AgentBinding, AgentError, AgentRuntime, Hint, TaskContext};
use crate::engine::{Card, CardId};
use crate::rng::{self, Lane, StreamRng};

pub use embed::{CachedEmbedder, EmbeddingEndpointConfig, EmbeddingProvider, HashedBagEmbedder, HttpEmbedder};
pub use evaluate::{run_bench, BenchItemResult, BenchReport, Strategy};

pub const BENCH_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_K: usize = 3;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("embedding provider unreachable: {0}")]
    ProviderUnreachable(String),
    #[error("embedding dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("embedding cache {0} is corrupt")]
    CacheCorrupt(String),
    #[error("need at least 2 vectors, got {0}")]
    TooFewVectors(usize),
    #[error("embedding of image {0} is the zero vector")]
    ZeroVector(CardId),
    #[error("image {0} is not in the similarity matrix")]
    TargetNotInMatrix(CardId),
    #[error("{difficulty:?} band has {available} candidates, {requested} requested")]
    BandTooSmall {
        difficulty: Difficulty,
        requested: usize,
        available: usize,
    },
    #[error("captions and similarity matrix disagree: {0}")]
    InconsistentCorpus(String),
    #[error("unsupported schema_version {0}")]
    SchemaVersion(u32),
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caption {
    pub image_id: CardId,
    pub text: String,
}

/// Persisted captions, sorted by image id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionStore {
    pub schema_version: u32,
    pub captioner: String,
    pub captions: Vec<Caption>,
}

impl CaptionStore {
    pub fn new(captioner: impl Into<String>) -> Self {
        CaptionStore {
            schema_version: BENCH_SCHEMA_VERSION,
            captioner: captioner.into(),
            captions: Vec::new(),
        }
    }

    pub fn get(&self, id: CardId) -> Option<&str> {
        self.captions
            .binary_search_by_key(&id, |c| c.image_id)
            .ok()
            .map(|i| self.captions[i].text.as_str())
    }

    fn insert(&mut self, caption: Caption) {
        match self.captions.binary_search_by_key(&caption.image_id, |c| c.image_id) {
            Ok(i) => self.captions[i] = caption,
            Err(i) => self.captions.insert(i, caption),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BenchError> {
        let store: CaptionStore = read_json(path.as_ref())?;
        if store.schema_version != BENCH_SCHEMA_VERSION {
            return Err(BenchError::SchemaVersion(store.schema_version));
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), BenchError> {
        write_json(path.as_ref(), self)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, BenchError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| BenchError::Malformed(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), BenchError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| BenchError::Malformed(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptionRun {
    pub store: CaptionStore,
    /// Images captioned by this run (cached ones excluded).
    pub captioned: Vec<CardId>,
    /// Images whose caption stayed empty after the re-prompt, with the reason.
    pub failed: Vec<(CardId, String)>,
}

/// Caption every image missing from `existing`.
pub fn generate_captions(
    corpus: &[Card],
    agent: &AgentBinding,
    runtime: &AgentRuntime,
    seed: u64,
    existing: Option<CaptionStore>,
) -> Result<CaptionRun, BenchError> {
    if corpus.is_empty() {
        return Err(BenchError::EmptyCorpus);
    }
    let mut store = existing.unwrap_or_else(|| CaptionStore::new(agent.name.clone()));
    let mut captioned = Vec::new();
    let mut failed = Vec::new();
    for card in corpus {
        if store.get(card.id).is_some() {
            continue;
        }
        let mut rng = rng::stream(seed, u64::from(card.id), Lane::BenchRun);
        let d = act(
            agent,
            &TaskContext::Caption { image: card.clone() },
            &Hint::default(),
            &mut rng,
            runtime,
        )?;
        match d.answer.text() {
            Some(text) if !d.record.fallback => {
                store.insert(Caption {
                    image_id: card.id,
                    text: text.to_string(),
                });
                captioned.push(card.id);
            }
            _ => failed.push((card.id, d.record.errors.join("; "))),
        }
    }
    Ok(CaptionRun {
        store,
        captioned,
        failed,
    })
}

/// Cosine similarities between caption embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub ids: Vec<CardId>,
    pub values: Vec<Vec<f64>>,
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

pub fn similarity_matrix(ids: &[CardId], vectors: &[Vec<f64>]) -> Result<SimilarityMatrix, BenchError> {
    if vectors.len() < 2 {
        return Err(BenchError::TooFewVectors(vectors.len()));
    }
    if ids.len() != vectors.len() {
        return Err(BenchError::InconsistentCorpus(format!(
            "{} ids for {} vectors",
            ids.len(),
            vectors.len()
        )));
    }
    let dim = vectors[0].len();
    for (id, v) in ids.iter().zip(vectors) {
        if v.len() != dim {
            return Err(BenchError::DimMismatch(format!("image {id}: expected {dim}, got {}", v.len())));
        }
        if v.iter().all(|x| *x == 0.0) {
            return Err(BenchError::ZeroVector(*id));
        }
    }
    let n = vectors.len();
    let mut values = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let s = cosine(&vectors[i], &vectors[j]);
            values[i][j] = s;
            values[j][i] = s;
        }
    }
    Ok(SimilarityMatrix {
        ids: ids.to_vec(),
        values,
    })
}

impl SimilarityMatrix {
    pub fn index_of(&self, id: CardId) -> Option<usize> {
        self.ids.iter().position(|x| *x == id)
    }

    pub fn get(&self, a: CardId, b: CardId) -> Option<f64> {
        Some(self.values[self.index_of(a)?][self.index_of(b)?])
    }

    /// Other images by descending similarity to `target`; ties by ascending id.
    /// Rank `r` is element `r - 1`.
    pub fn ranking(&self, target: CardId) -> Result<Vec<CardId>, BenchError> {
        let t = self.index_of(target).ok_or(BenchError::TargetNotInMatrix(target))?;
        let mut others: Vec<(CardId, f64)> = self
            .ids
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != t)
            .map(|(i, id)| (*id, self.values[t][i]))
            .collect();
        others.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(others.into_iter().map(|(id, _)| id).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Difficulty {
    Easy,
    Hard,
}

impl Difficulty {
    fn lane(self) -> Lane {
        match self {
            Difficulty::Easy => Lane::BenchCuration(0),
            Difficulty::Hard => Lane::BenchCuration(1),
        }
    }
}

/// Inclusive similarity-rank bands from which distractors are drawn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DifficultyBands {
    pub hard: RangeInclusive<usize>,
    pub easy: RangeInclusive<usize>,
}

impl DifficultyBands {
    /// Ranks 1-5 for Hard and 30-80 for Easy, sized for an 84-image corpus.
    pub fn reference() -> Self {
        DifficultyBands {
            hard: 1..=5,
            easy: 30..=80,
        }
    }

    /// The reference bands, with the Easy band scaled by `(n - 1) / 83` when
    /// the corpus is too small to reach rank 80. The scaled band never starts
    /// before rank 6, so it stays disjoint from Hard.
    pub fn for_corpus(n: usize) -> Self {
        let others = n.saturating_sub(1);
        if others >= 80 {
            return Self::reference();
        }
        let scale = others as f64 / 83.0;
        let lo = ((30.0 * scale).ceil() as usize).max(6);
        let hi = (80.0 * scale).floor() as usize;
        DifficultyBands {
            hard: 1..=5,
            easy: lo..=hi.max(lo.saturating_sub(1)),
        }
    }

    pub fn band(&self, d: Difficulty) -> &RangeInclusive<usize> {
        match d {
            Difficulty::Easy => &self.easy,
            Difficulty::Hard => &self.hard,
        }
    }
}

/// Pick `k` distractors for `target`. Hard takes the `k` best-ranked images
/// of its band; Easy samples `k` without replacement from its band.
pub fn sample_distractors(
    matrix: &SimilarityMatrix,
    target: CardId,
    difficulty: Difficulty,
    k: usize,
    bands: &DifficultyBands,
    rng: &mut StreamRng,
) -> Result<Vec<CardId>, BenchError> {
    let ranking = matrix.ranking(target)?;
    let band = bands.band(difficulty);
    let lo = *band.start();
    let hi = (*band.end()).min(ranking.len());
    let pool: &[CardId] = if lo == 0 || lo > hi { &[] } else { &ranking[lo - 1..hi] };
    if k > pool.len() || k == 0 {
        return Err(BenchError::BandTooSmall {
            difficulty,
            requested: k,
            available: pool.len(),
        });
    }
    Ok(match difficulty {
        Difficulty::Hard => pool[..k].to_vec(),
        Difficulty::Easy => {
            let mut picked: Vec<usize> = rand::seq::index::sample(rng, pool.len(), k).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| pool[i]).collect()
        }
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchItem {
    pub item_id: u64,
    pub target: CardId,
    pub clue: String,
    pub difficulty: Difficulty,
    pub distractors: Vec<CardId>,
    /// Similarity rank of each distractor, parallel to `distractors`.
    pub distractor_ranks: Vec<usize>,
    /// Options as presented, target included once.
    pub option_order: Vec<CardId>,
}

impl BenchItem {
    /// One-based position of the target in `option_order`.
    pub fn target_position(&self) -> usize {
        self.option_order
            .iter()
            .position(|c| *c == self.target)
            .expect("target is always an option")
            + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchFile {
    pub schema_version: u32,
    pub seed: u64,
    pub k: usize,
    pub bands: DifficultyBands,
    pub embedding_provider: String,
    pub items: Vec<BenchItem>,
}

impl BenchFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, BenchError> {
        let file: BenchFile = read_json(path.as_ref())?;
        if file.schema_version != BENCH_SCHEMA_VERSION {
            return Err(BenchError::SchemaVersion(file.schema_version));
        }
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("bench files serialize");
        text.push('\n');
        text
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), BenchError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// One Easy and one Hard item per captioned image, in ascending image id.
pub fn build_bench(
    captions: &CaptionStore,
    matrix: &SimilarityMatrix,
    k: usize,
    seed: u64,
    bands: &DifficultyBands,
    embedding_provider: &str,
) -> Result<BenchFile, BenchError> {
    let caption_ids: BTreeSet<CardId> = captions.captions.iter().map(|c| c.image_id).collect();
    let matrix_ids: BTreeSet<CardId> = matrix.ids.iter().copied().collect();
    if caption_ids != matrix_ids || matrix_ids.len() != matrix.ids.len() {
        let only_captions: Vec<_> = caption_ids.difference(&matrix_ids).collect();
        let only_matrix: Vec<_> = matrix_ids.difference(&caption_ids).collect();
        return Err(BenchError::InconsistentCorpus(format!(
            "captions without embeddings {only_captions:?}, embeddings without captions {only_matrix:?}"
        )));
    }
    let mut items = Vec::with_capacity(2 * caption_ids.len());
    for caption in &captions.captions {
        let ranking = matrix.ranking(caption.image_id)?;
        let rank_of: BTreeMap<CardId, usize> = ranking.iter().enumerate().map(|(i, id)| (*id, i + 1)).collect();
        for difficulty in [Difficulty::Easy, Difficulty::Hard] {
            let mut rng = rng::stream(seed, u64::from(caption.image_id), difficulty.lane());
            let distractors = sample_distractors(matrix, caption.image_id, difficulty, k, bands, &mut rng)?;
            let mut option_order = distractors.clone();
            option_order.push(caption.image_id);
            option_order.shuffle(&mut rng);
            items.push(BenchItem {
                item_id: items.len() as u64,
                target: caption.image_id,
                clue: caption.text.clone(),
                difficulty,
                distractor_ranks: distractors.iter().map(|d| rank_of[d]).collect(),
                distractors,
                option_order,
            });
        }
    }
    Ok(BenchFile {
        schema_version: BENCH_SCHEMA_VERSION,
        seed,
        k,
        bands: bands.clone(),
        embedding_provider: embedding_provider.to_string(),
        items,
    })
}

/// Captions to bench file in one call.
pub fn curate(
    captions: &CaptionStore,
    provider: &dyn EmbeddingProvider,
    k: usize,
    seed: u64,
) -> Result<(SimilarityMatrix, BenchFile), BenchError> {
    let ids: Vec<CardId> = captions.captions.iter().map(|c| c.image_id).collect();
    let texts: Vec<String> = captions.captions.iter().map(|c| c.text.clone()).collect();
    let vectors = embed::embed(&texts, provider)?;
    let matrix = similarity_matrix(&ids, &vectors)?;
    let bands = DifficultyBands::for_corpus(ids.len());
    let bench = build_bench(captions, &matrix, k, seed, &bands, &provider.id())?;
    Ok((matrix, bench))
}
