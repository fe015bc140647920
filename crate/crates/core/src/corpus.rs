//! Image corpora.
//!
//! A corpus directory holds image files. When every file stem is a positive
//! integer the stems are the card ids; otherwise ids `1..=n` are assigned in
//! file-name order. An optional `labels.json` (`{"<id>": "description"}`)
//! supplies literal descriptions for scripted agents.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use thiserror::Error;

use crate::engine::{Card, CardId};

pub const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "gif", "webp", "bmp"];
pub const LABELS_FILE: &str = "labels.json";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus {0} contains no images")]
    Empty(String),
    #[error("bad labels file: {0}")]
    Labels(String),
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Vec<Card>, CorpusError> {
    let dir = dir.as_ref();
    let mut files: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image(p))
        .collect();
    if files.is_empty() {
        return Err(CorpusError::Empty(dir.display().to_string()));
    }
    files.sort();

    let numeric: Vec<Option<CardId>> = files
        .iter()
        .map(|p| {
            p.file_stem()
                .and_then(|s| s.to_str())
                .and_then(|s| s.parse::<CardId>().ok())
                .filter(|id| *id > 0)
        })
        .collect();
    let distinct: BTreeSet<_> = numeric.iter().flatten().collect();
    let use_stems = numeric.iter().all(Option::is_some) && distinct.len() == files.len();

    let labels = read_labels(&dir.join(LABELS_FILE))?;
    let mut cards: Vec<Card> = files
        .iter()
        .enumerate()
        .map(|(i, path)| {
            let id = if use_stems {
                numeric[i].expect("checked above")
            } else {
                i as CardId + 1
            };
            let mut card = Card::new(id, path.to_string_lossy().into_owned());
            if let Some(label) = labels.get(&id) {
                card = card.with_description(label.clone());
            }
            card
        })
        .collect();
    cards.sort_by_key(|c| c.id);
    Ok(cards)
}

fn read_labels(path: &Path) -> Result<BTreeMap<CardId, String>, CorpusError> {
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CorpusError::Labels(e.to_string()))
}

/// Cards from `dir` if given, else the synthetic deck of `deck_size` cards.
pub fn deck_or_placeholder(dir: Option<&Path>, deck_size: usize) -> Result<Vec<Card>, CorpusError> {
    match dir {
        Some(d) => load_corpus(d),
        None => Ok(Card::placeholder_deck(deck_size)),
    }
}
