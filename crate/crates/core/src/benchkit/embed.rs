//! Text embeddings for caption similarity.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use rand::{RngExt, SeedableRng};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::BenchError;

pub const DEFAULT_DIM: usize = 384;

/// Deterministic text-to-vector map. The same text must always give the same vector.
pub trait EmbeddingProvider: Send + Sync {
    /// Stable identifier; cache entries are keyed by it.
    fn id(&self) -> String;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BenchError>;
}

/// Local stand-in: each lowercase alphanumeric token is mapped to a fixed
/// pseudo-random vector in `[-1, 1]^dim` seeded by its SHA-256, and a text's
/// embedding is the sum over its tokens. Token order does not matter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedBagEmbedder {
    pub dim: usize,
}

impl Default for HashedBagEmbedder {
    fn default() -> Self {
        HashedBagEmbedder { dim: DEFAULT_DIM }
    }
}

pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

impl HashedBagEmbedder {
    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for token in tokens(text) {
            let seed: [u8; 32] = Sha256::digest(token.as_bytes()).into();
            let mut rng = Pcg64::from_seed(seed);
            for x in v.iter_mut() {
                *x += rng.random_range(-1.0..=1.0);
            }
        }
        v
    }
}

impl EmbeddingProvider for HashedBagEmbedder {
    fn id(&self) -> String {
        format!("hashed-bag-v1/{}", self.dim)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BenchError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingEndpointConfig {
    /// OpenAI-compatible base URL; requests go to `{base_url}/embeddings`.
    pub base_url: String,
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    60
}

/// Remote embeddings endpoint.
pub struct HttpEmbedder {
    config: EmbeddingEndpointConfig,
    client: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(config: EmbeddingEndpointConfig) -> Self {
        HttpEmbedder {
            config,
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn id(&self) -> String {
        format!("http:{}#{}", self.config.base_url, self.config.model_id)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BenchError> {
        let url = format!("{}/embeddings", self.config.base_url.trim_end_matches('/'));
        let mut request = self
            .client
            .post(url)
            .timeout(Duration::from_secs(self.config.timeout_secs))
            .json(&json!({"model": self.config.model_id, "input": texts}));
        if let Some(var) = &self.config.api_key_env {
            let key = std::env::var(var)
                .map_err(|_| BenchError::ProviderUnreachable(format!("environment variable {var} is not set")))?;
            request = request.bearer_auth(key);
        }
        let unreachable = |e: reqwest::Error| BenchError::ProviderUnreachable(e.without_url().to_string());
        let response = request.send().map_err(unreachable)?;
        let status = response.status();
        let body: Value = response.json().map_err(unreachable)?;
        if !status.is_success() {
            return Err(BenchError::ProviderUnreachable(format!("HTTP {status}: {body}")));
        }
        let data = body
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| BenchError::ProviderUnreachable("response has no data array".into()))?;
        let mut out = vec![Vec::new(); texts.len()];
        for (i, item) in data.iter().enumerate() {
            let index = item.get("index").and_then(Value::as_u64).map(|x| x as usize).unwrap_or(i);
            let vector: Vec<f64> = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| BenchError::ProviderUnreachable("item has no embedding".into()))?
                .iter()
                .map(|x| x.as_f64().unwrap_or(f64::NAN))
                .collect();
            if let Some(slot) = out.get_mut(index) {
                *slot = vector;
            }
        }
        if out.iter().any(Vec::is_empty) {
            return Err(BenchError::ProviderUnreachable("missing embeddings in response".into()));
        }
        Ok(out)
    }
}

const CACHE_MAGIC: &[u8; 4] = b"DXEC";
const CACHE_VERSION: u32 = 1;

type CacheKey = (String, [u8; 32]);

/// Wraps a provider with a binary sidecar keyed by (provider id, SHA-256 of text).
///
/// File layout, little-endian: magic `DXEC`, `u32` version, `u32` entry
/// count, then per entry a `u16` id length, the id bytes, the 32-byte text
/// digest, a `u32` dimension and that many `f64` values.
pub struct CachedEmbedder<P> {
    inner: P,
    path: PathBuf,
    entries: Mutex<HashMap<CacheKey, Vec<f64>>>,
}

impl<P: EmbeddingProvider> CachedEmbedder<P> {
    pub fn open(inner: P, path: impl Into<PathBuf>) -> Result<Self, BenchError> {
        let path = path.into();
        let entries = if path.exists() { read_cache(&path)? } else { HashMap::new() };
        Ok(CachedEmbedder {
            inner,
            path,
            entries: Mutex::new(entries),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.lock().map(|e| e.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn text_digest(text: &str) -> [u8; 32] {
    Sha256::digest(text.as_bytes()).into()
}

impl<P: EmbeddingProvider> EmbeddingProvider for CachedEmbedder<P> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BenchError> {
        let id = self.inner.id();
        let mut entries = self.entries.lock().unwrap_or_else(|p| p.into_inner());
        let mut missing: Vec<String> = texts
            .iter()
            .filter(|t| !entries.contains_key(&(id.clone(), text_digest(t))))
            .cloned()
            .collect();
        missing.sort();
        missing.dedup();
        if !missing.is_empty() {
            let vectors = self.inner.embed(&missing)?;
            for (text, v) in missing.iter().zip(vectors) {
                entries.insert((id.clone(), text_digest(text)), v);
            }
            write_cache(&self.path, &entries)?;
        }
        Ok(texts
            .iter()
            .map(|t| entries[&(id.clone(), text_digest(t))].clone())
            .collect())
    }
}

fn write_cache(path: &Path, entries: &HashMap<CacheKey, Vec<f64>>) -> Result<(), BenchError> {
    let mut keys: Vec<&CacheKey> = entries.keys().collect();
    keys.sort();
    let mut buf = Vec::new();
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(keys.len() as u32).to_le_bytes());
    for key in keys {
        let (id, digest) = key;
        let v = &entries[key];
        buf.extend_from_slice(&(id.len() as u16).to_le_bytes());
        buf.extend_from_slice(id.as_bytes());
        buf.extend_from_slice(digest);
        buf.extend_from_slice(&(v.len() as u32).to_le_bytes());
        for x in v {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(&buf)?;
    f.sync_all()?;
    std::fs::rename(tmp, path)?;
    Ok(())
}

fn read_cache(path: &Path) -> Result<HashMap<CacheKey, Vec<f64>>, BenchError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let corrupt = || BenchError::CacheCorrupt(path.display().to_string());
    let mut cursor = bytes.as_slice();
    let mut take = |n: usize| -> Result<&[u8], BenchError> {
        if cursor.len() < n {
            return Err(corrupt());
        }
        let (head, rest) = cursor.split_at(n);
        cursor = rest;
        Ok(head)
    };
    if take(4)? != CACHE_MAGIC {
        return Err(corrupt());
    }
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes"));
    if u32_at(take(4)?) != CACHE_VERSION {
        return Err(corrupt());
    }
    let count = u32_at(take(4)?);
    let mut entries = HashMap::with_capacity(count as usize);
    for _ in 0..count {
        let id_len = u16::from_le_bytes(take(2)?.try_into().expect("2 bytes")) as usize;
        let id = String::from_utf8(take(id_len)?.to_vec()).map_err(|_| corrupt())?;
        let digest: [u8; 32] = take(32)?.try_into().expect("32 bytes");
        let dim = u32_at(take(4)?) as usize;
        let raw = take(dim.checked_mul(8).ok_or_else(corrupt)?)?;
        let v = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        entries.insert((id, digest), v);
    }
    Ok(entries)
}

/// Embed `texts` and check every vector has the same, finite, non-zero-length dimension.
pub fn embed(texts: &[String], provider: &dyn EmbeddingProvider) -> Result<Vec<Vec<f64>>, BenchError> {
    let vectors = provider.embed(texts)?;
    if vectors.len() != texts.len() {
        return Err(BenchError::DimMismatch(format!(
            "{} vectors for {} texts",
            vectors.len(),
            texts.len()
        )));
    }
    if let Some(first) = vectors.first() {
        let dim = first.len();
        if let Some(bad) = vectors.iter().find(|v| v.len() != dim || dim == 0) {
            return Err(BenchError::DimMismatch(format!("expected {dim}, got {}", bad.len())));
        }
    }
    if vectors.iter().flatten().any(|x| !x.is_finite()) {
        return Err(BenchError::DimMismatch("non-finite embedding entry".into()));
    }
    Ok(vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn bag_is_order_free_and_deterministic() {
        let e = HashedBagEmbedder::default();
        assert_eq!(e.embed_one("a b"), e.embed_one("b a"));
        assert_eq!(e.embed_one("Hope, reaching"), e.embed_one("reaching hope"));
        assert_ne!(e.embed_one("a"), e.embed_one("b"));
        assert_eq!(e.embed_one("x").len(), 384);
    }

    struct Counting(AtomicUsize);

    impl EmbeddingProvider for Counting {
        fn id(&self) -> String {
            "counting".into()
        }
        fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BenchError> {
            self.0.fetch_add(texts.len(), Ordering::SeqCst);
            HashedBagEmbedder { dim: 8 }.embed(texts)
        }
    }

    #[test]
    fn cache_round_trips_through_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.bin");
        let texts = vec!["one".to_string(), "two".to_string(), "one".to_string()];
        let first = {
            let c = CachedEmbedder::open(Counting(AtomicUsize::new(0)), &path).unwrap();
            let v = c.embed(&texts).unwrap();
            assert_eq!(c.inner.0.load(Ordering::SeqCst), 2);
            v
        };
        let c = CachedEmbedder::open(Counting(AtomicUsize::new(0)), &path).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.embed(&texts).unwrap(), first);
        assert_eq!(c.inner.0.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn corrupt_cache_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.bin");
        std::fs::write(&path, b"DXEC\x01\x00\x00\x00\x05\x00\x00\x00").unwrap();
        assert!(matches!(
            CachedEmbedder::open(HashedBagEmbedder::default(), &path),
            Err(BenchError::CacheCorrupt(_))
        ));
    }
}
