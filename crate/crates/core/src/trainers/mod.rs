//! Tokenizer training from a character stream.
//!
//! Every trainer counts the pre-tokens of the (optionally NFKC-normalized)
//! stream once and works on the distinct pieces weighted by their counts.
//! Merges and segments never cross pre-token boundaries.

mod bpe;
mod unigram;
mod wordlevel;
mod wordpiece;

use std::borrow::Cow;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::{normalize, Family, Pieces, TokenizerModel, SPECIALS};

pub use bpe::train_bpe;
pub(crate) use bpe::PairTable;
pub use unigram::train_unigram;
pub use wordlevel::train_wordlevel;
pub use wordpiece::train_wordpiece;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UnigramParams {
    /// Seed vocabulary is capped at this multiple of the target size.
    pub seed_multiplier: usize,
    /// Fraction of the prunable pieces removed per round.
    pub prune_fraction: f64,
    /// EM iterations run before each pruning round.
    pub em_iterations: usize,
}

impl Default for UnigramParams {
    fn default() -> Self {
        UnigramParams {
            seed_multiplier: 10,
            prune_fraction: 0.2,
            em_iterations: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub family: Family,
    /// Target vocabulary size K, specials included.
    pub vocab_size: usize,
    pub specials: Vec<String>,
    /// Longest Unigram piece, in characters.
    pub max_token_length: usize,
    pub seed: u64,
    pub nfkc: bool,
    /// Pairs seen fewer times than this are never merged (BPE, WordPiece).
    pub min_frequency: u64,
    pub unigram: UnigramParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            family: Family::Bpe,
            vocab_size: 16_000,
            specials: SPECIALS.iter().map(|s| s.to_string()).collect(),
            max_token_length: 16,
            seed: 0,
            nfkc: true,
            min_frequency: 2,
            unigram: UnigramParams::default(),
        }
    }
}

impl TrainConfig {
    pub fn new(family: Family, vocab_size: usize) -> Self {
        TrainConfig {
            family,
            vocab_size,
            ..TrainConfig::default()
        }
    }
}

/// Trains the family named in `cfg` on `text`.
pub fn train(text: &str, cfg: &TrainConfig) -> Result<TokenizerModel> {
    match cfg.family {
        Family::Bpe => train_bpe(text, cfg),
        Family::Unigram => train_unigram(text, cfg),
        Family::WordPiece => train_wordpiece(text, cfg),
        Family::WordLevel => train_wordlevel(text, cfg),
        Family::ExternalRankList => Err(Error::InvalidArgument(
            "external rank lists are loaded, not trained".into(),
        )),
    }
}

fn check_family(cfg: &TrainConfig, expected: Family) -> Result<()> {
    if cfg.family != expected {
        return Err(Error::InvalidArgument(format!(
            "config is for {} but the {expected} trainer was called",
            cfg.family
        )));
    }
    Ok(())
}

pub(crate) fn prepare<'t>(text: &'t str, cfg: &TrainConfig) -> Result<Cow<'t, str>> {
    if text.is_empty() {
        return Err(Error::Empty("training stream"));
    }
    Ok(if cfg.nfkc {
        Cow::Owned(normalize(text))
    } else {
        Cow::Borrowed(text)
    })
}

/// Distinct pre-tokens with their counts, sorted by piece.
pub(crate) fn piece_counts(text: &str) -> Vec<(&str, u64)> {
    let mut counts: FxHashMap<&str, u64> = FxHashMap::default();
    for piece in Pieces::new(text) {
        *counts.entry(piece).or_default() += 1;
    }
    let mut v: Vec<_> = counts.into_iter().collect();
    v.sort_unstable();
    v
}

fn base_metadata(cfg: &TrainConfig, text: &str) -> std::collections::BTreeMap<String, String> {
    let mut m = std::collections::BTreeMap::new();
    m.insert("train_chars".into(), text.chars().count().to_string());
    m.insert("target_vocab_size".into(), cfg.vocab_size.to_string());
    m.insert("seed".into(), cfg.seed.to_string());
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dispatch_rejects_rank_lists() {
        let cfg = TrainConfig::new(Family::ExternalRankList, 300);
        assert!(train("abc", &cfg).is_err());
    }

    #[test]
    fn trainer_checks_family() {
        let cfg = TrainConfig::new(Family::WordLevel, 300);
        assert!(train_bpe("abc", &cfg).is_err());
    }

    #[test]
    fn every_family_yields_valid_model_within_budget() {
        let text = "the quick brown fox jumps over the lazy dog. the dog sleeps; the fox runs.\n"
            .repeat(20);
        for family in Family::TRAINABLE {
            let cfg = TrainConfig::new(family, 300);
            let m = train(&text, &cfg).unwrap();
            m.validate().unwrap();
            assert!(m.vocab_size() <= 300, "{family}: {}", m.vocab_size());
            for (i, s) in SPECIALS.iter().enumerate() {
                assert_eq!(m.vocab.special_id(s), Some(i as u32));
            }
            let again = train(&text, &cfg).unwrap();
            assert_eq!(m, again, "{family} not deterministic");
            let json = m.to_json().unwrap();
            assert_eq!(TokenizerModel::from_json(&json).unwrap(), m);
            let ids = m.tokenizer().encode(&text).ids;
            assert!(ids.iter().all(|&id| (id as usize) < m.vocab_size()));
            if family != Family::WordLevel {
                assert_eq!(m.tokenizer().decode(&ids).unwrap(), text, "{family}");
            }
        }
    }

    #[test]
    fn empty_stream_is_an_error() {
        for family in Family::TRAINABLE {
            assert!(matches!(
                train("", &TrainConfig::new(family, 300)),
                Err(Error::Empty(_))
            ));
        }
    }
}
