use rustc_hash::FxHashMap;

use super::{base_metadata, check_family, prepare, TrainConfig};
use crate::error::{Error, Result};
use crate::tokenizer::{words, Family, Preprocessing, TokenizerModel, Vocabulary};

/// Keeps the `vocab_size - |specials|` most frequent whitespace-delimited
/// words, breaking count ties lexicographically.
pub fn train_wordlevel(text: &str, cfg: &TrainConfig) -> Result<TokenizerModel> {
    check_family(cfg, Family::WordLevel)?;
    let text = prepare(text, cfg)?;
    let mut vocab = Vocabulary::with_specials(&cfg.specials);
    if cfg.vocab_size <= vocab.len() {
        return Err(Error::VocabTooSmall {
            requested: cfg.vocab_size,
            minimum: vocab.len() + 1,
        });
    }
    let mut counts: FxHashMap<&str, u64> = FxHashMap::default();
    for w in words(&text) {
        *counts.entry(w).or_default() += 1;
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let room = cfg.vocab_size - vocab.len();
    for (w, _) in ranked.iter().take(room) {
        vocab.insert(w.as_bytes().to_vec());
    }
    let mut metadata = base_metadata(cfg, &text);
    metadata.insert("distinct_words".into(), ranked.len().to_string());
    Ok(TokenizerModel {
        family: Family::WordLevel,
        vocab,
        merges: Vec::new(),
        scores: Vec::new(),
        preprocessing: Preprocessing {
            nfkc: cfg.nfkc,
            ..Preprocessing::default()
        },
        byte_level: false,
        provenance: None,
        metadata,
    })
}
