use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use dixit_core::benchkit::{
    self, BenchError, Caption, CachedEmbedder, CaptionStore, Difficulty, DifficultyBands, EmbeddingProvider,
    HashedBagEmbedder,
};
use dixit_core::engine::CardId;
use proptest::prelude::*;

const WORDS: &[&str] = &[
    "owl", "tide", "glass", "ember", "violet", "harbor", "drum", "silk", "comet", "orchard", "anchor", "veil",
    "marble", "thorn", "echo", "lantern",
];

fn store(n: usize, seed: u64) -> CaptionStore {
    let mut s = CaptionStore::new("test");
    let mut x = seed | 1;
    for id in 1..=n as CardId {
        let mut words = Vec::new();
        for _ in 0..3 {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            words.push(WORDS[(x % WORDS.len() as u64) as usize]);
        }
        s.captions.push(Caption {
            image_id: id,
            text: words.join(" "),
        });
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn items_are_well_formed(n in 10usize..60, seed in any::<u64>(), k in 1usize..4) {
        let captions = store(n, seed);
        let (matrix, bench) = benchkit::curate(&captions, &HashedBagEmbedder::default(), k, seed).unwrap();
        let bands = DifficultyBands::for_corpus(n);
        prop_assert_eq!(bench.items.len(), 2 * n);
        for item in &bench.items {
            prop_assert_eq!(item.distractors.len(), k);
            let distinct: BTreeSet<_> = item.distractors.iter().collect();
            prop_assert_eq!(distinct.len(), k);
            prop_assert!(!item.distractors.contains(&item.target));
            let mut options = item.option_order.clone();
            options.sort_unstable();
            let mut expected = item.distractors.clone();
            expected.push(item.target);
            expected.sort_unstable();
            prop_assert_eq!(options, expected);
            prop_assert_eq!(item.option_order[item.target_position() - 1], item.target);

            let ranking = matrix.ranking(item.target).unwrap();
            for (d, r) in item.distractors.iter().zip(&item.distractor_ranks) {
                prop_assert_eq!(ranking[r - 1], *d);
                prop_assert!(bands.band(item.difficulty).contains(r));
            }
            if item.difficulty == Difficulty::Hard {
                prop_assert_eq!(&item.distractors[..], &ranking[..k]);
            }
        }
    }

    #[test]
    fn similarity_is_symmetric_with_unit_diagonal(n in 2usize..30, seed in any::<u64>()) {
        let captions = store(n, seed);
        let ids: Vec<CardId> = captions.captions.iter().map(|c| c.image_id).collect();
        let texts: Vec<String> = captions.captions.iter().map(|c| c.text.clone()).collect();
        let v = HashedBagEmbedder::default().embed(&texts).unwrap();
        let m = benchkit::similarity_matrix(&ids, &v).unwrap();
        for i in 0..n {
            prop_assert!((m.values[i][i] - 1.0).abs() < 1e-12);
            for j in 0..n {
                prop_assert_eq!(m.values[i][j], m.values[j][i]);
            }
        }
    }
}

#[test]
fn too_small_corpus_reports_the_band() {
    let captions = store(4, 1);
    let err = benchkit::curate(&captions, &HashedBagEmbedder::default(), 3, 1).unwrap_err();
    assert!(matches!(err, BenchError::BandTooSmall { .. }), "{err}");
}

#[test]
fn reference_bands_apply_from_84_images() {
    assert_eq!(DifficultyBands::for_corpus(84), DifficultyBands::reference());
    assert_eq!(DifficultyBands::for_corpus(10).easy, 6..=8);
}

struct Counting(Arc<AtomicUsize>);

impl EmbeddingProvider for Counting {
    fn id(&self) -> String {
        "counting".into()
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BenchError> {
        self.0.fetch_add(texts.len(), Ordering::SeqCst);
        Ok(texts.iter().map(|t| HashedBagEmbedder::default().embed_one(t)).collect())
    }
}

#[test]
fn cache_survives_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("emb.cache");
    let texts: Vec<String> = vec!["owl tide".into(), "glass ember".into()];
    let calls = Arc::new(AtomicUsize::new(0));
    let first = {
        let c = CachedEmbedder::open(Counting(calls.clone()), &path).unwrap();
        let v = c.embed(&texts).unwrap();
        assert_eq!(c.len(), 2);
        v
    };
    let c = CachedEmbedder::open(Counting(calls.clone()), &path).unwrap();
    assert_eq!(c.embed(&texts).unwrap(), first);
    assert_eq!(calls.load(Ordering::SeqCst), 2);

    std::fs::write(&path, b"DXEC garbage").unwrap();
    assert!(matches!(
        CachedEmbedder::open(Counting(calls), &path),
        Err(BenchError::CacheCorrupt(_))
    ));
}
