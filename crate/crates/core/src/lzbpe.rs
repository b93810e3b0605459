//! BPE whose merges are picked by what they do to a compressor.
//!
//! Each step takes the most frequent adjacent pairs of the training stream
//! as candidates, simulates every candidate merge on a held-out validation
//! stream, and commits the one whose packed validation ids compress smallest.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::compress::Compressor;
use crate::error::{Error, Result};
use crate::lzpipe::{pack_token_ids, Width};
use crate::tokenizer::{merge_word, Family, Pieces, Preprocessing, PieceStream, TokenId, TokenizerModel, Vocabulary};
use crate::trainers::{piece_counts, prepare, PairTable, TrainConfig};

pub type Pair = (TokenId, TokenId);

pub const PROVENANCE: &str = "lz-aware";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCount {
    pub pair: Pair,
    pub count: u64,
}

/// Counts adjacent pairs inside pre-tokens. Overlapping occurrences all
/// count. Sorted by pair.
pub fn pair_frequencies(stream: &PieceStream) -> Result<Vec<PairCount>> {
    if stream.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "pair counting needs at least 2 tokens (got {})",
            stream.len()
        )));
    }
    let mut counts: FxHashMap<Pair, u64> = FxHashMap::default();
    for piece in stream.pieces() {
        for w in piece.windows(2) {
            *counts.entry((w[0], w[1])).or_default() += 1;
        }
    }
    let mut out: Vec<PairCount> = counts
        .into_iter()
        .map(|(pair, count)| PairCount { pair, count })
        .collect();
    out.sort_unstable_by_key(|p| p.pair);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeCandidate {
    pub pair: Pair,
    pub train_count: u64,
    /// Compressed validation size with this merge applied, once evaluated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_compressed_bytes: Option<usize>,
}

/// The `k` highest counts, lowest pair first among equal counts.
pub fn top_k_candidates(counts: &[PairCount], k: usize) -> Vec<MergeCandidate> {
    let mut sorted: Vec<&PairCount> = counts.iter().filter(|c| c.count > 0).collect();
    sorted.sort_unstable_by(|a, b| b.count.cmp(&a.count).then(a.pair.cmp(&b.pair)));
    sorted
        .into_iter()
        .take(k)
        .map(|c| MergeCandidate {
            pair: c.pair,
            train_count: c.count,
            val_compressed_bytes: None,
        })
        .collect()
}

fn merged_ids(stream: &PieceStream, pair: Pair, new_id: TokenId, out: &mut Vec<TokenId>) {
    out.clear();
    let ids = &stream.ids;
    let n = ids.len();
    let mut i = 0;
    while i < n {
        if i + 1 < n && !stream.piece_start[i + 1] && ids[i] == pair.0 && ids[i + 1] == pair.1 {
            out.push(new_id);
            i += 2;
        } else {
            out.push(ids[i]);
            i += 1;
        }
    }
}

/// Replaces non-overlapping occurrences of `pair` left to right, never
/// across a pre-token boundary.
pub fn apply_merge(stream: &PieceStream, pair: Pair, new_id: TokenId) -> PieceStream {
    let mut ids = Vec::with_capacity(stream.len());
    let mut piece_start = Vec::with_capacity(stream.len());
    let n = stream.len();
    let mut i = 0;
    while i < n {
        piece_start.push(stream.piece_start[i]);
        if i + 1 < n && !stream.piece_start[i + 1] && stream.ids[i] == pair.0 && stream.ids[i + 1] == pair.1 {
            ids.push(new_id);
            i += 2;
        } else {
            ids.push(stream.ids[i]);
            i += 1;
        }
    }
    PieceStream { ids, piece_start }
}

fn contains_pair(stream: &PieceStream, pair: Pair) -> bool {
    (1..stream.len())
        .any(|i| !stream.piece_start[i] && stream.ids[i - 1] == pair.0 && stream.ids[i] == pair.1)
}

fn compressed_size(ids: &[TokenId], compressor: &Compressor, width: Width) -> Result<usize> {
    compressor.compressed_len(&pack_token_ids(ids, width)?.bytes)
}

/// Compressed size of the validation stream with `pair` merged into
/// `new_id`. `val` is not modified.
pub fn evaluate_candidate(
    pair: Pair,
    new_id: TokenId,
    val: &PieceStream,
    compressor: &Compressor,
    width: Width,
) -> Result<usize> {
    let mut buf = Vec::with_capacity(val.len());
    merged_ids(val, pair, new_id, &mut buf);
    compressed_size(&buf, compressor, width)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LzBpeConfig {
    /// Final number of non-special tokens: the 256 bytes plus the merges.
    pub target_vocab: usize,
    /// Candidates evaluated per step.
    pub candidates: usize,
    pub compressor: Compressor,
    pub width: Width,
    pub min_frequency: u64,
    pub nfkc: bool,
    pub specials: Vec<String>,
}

impl Default for LzBpeConfig {
    fn default() -> Self {
        let base = TrainConfig::default();
        LzBpeConfig {
            target_vocab: 1024,
            candidates: 50,
            compressor: Compressor::gzip(),
            width: Width::W16,
            min_frequency: base.min_frequency,
            nfkc: base.nfkc,
            specials: base.specials,
        }
    }
}

impl LzBpeConfig {
    pub fn new(target_vocab: usize, candidates: usize) -> Self {
        LzBpeConfig {
            target_vocab,
            candidates,
            ..LzBpeConfig::default()
        }
    }

    /// The standard-BPE configuration producing the same vocabulary layout.
    pub fn bpe_config(&self) -> TrainConfig {
        TrainConfig {
            family: Family::Bpe,
            vocab_size: self.target_vocab + self.specials.len(),
            specials: self.specials.clone(),
            nfkc: self.nfkc,
            min_frequency: self.min_frequency,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    /// Non-special vocabulary size after this merge.
    pub vocab: usize,
    pub candidates: Vec<MergeCandidate>,
    pub chosen: Pair,
    pub new_id: TokenId,
    pub token: String,
    pub val_before: usize,
    pub val_after: usize,
    /// The best candidate still grew the validation stream.
    pub increased: bool,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LzBpeTrace {
    pub baseline_val_bytes: usize,
    pub records: Vec<TraceRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_stop: Option<String>,
}

impl LzBpeTrace {
    /// Validation size after the last commit.
    pub fn final_val_bytes(&self) -> usize {
        self.records.last().map_or(self.baseline_val_bytes, |r| r.val_after)
    }

    /// `(vocab, validation bytes)` starting from the byte alphabet.
    pub fn curve(&self) -> Vec<(usize, usize)> {
        let mut out = vec![(256, self.baseline_val_bytes)];
        out.extend(self.records.iter().map(|r| (r.vocab, r.val_after)));
        out
    }

    /// One JSON object per committed merge.
    pub fn write_jsonl(&self, mut w: impl Write) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

struct Prepared {
    vocab: Vocabulary,
    words: Vec<Vec<TokenId>>,
    weights: Vec<u64>,
    val: PieceStream,
    train_chars: usize,
}

fn prepare_streams(train: &str, val: &str, cfg: &LzBpeConfig) -> Result<Prepared> {
    let bpe_cfg = cfg.bpe_config();
    let train = prepare(train, &bpe_cfg)?;
    if val.is_empty() {
        return Err(Error::Empty("validation stream"));
    }
    let val = prepare(val, &bpe_cfg)?;
    let mut vocab = Vocabulary::with_specials(&cfg.specials);
    let mut byte_ids = [0; 256];
    for b in 0..=255u8 {
        byte_ids[b as usize] = vocab.insert(vec![b]).0;
    }
    let counted = piece_counts(&train);
    let words = counted
        .iter()
        .map(|(p, _)| p.bytes().map(|b| byte_ids[b as usize]).collect())
        .collect();
    let weights = counted.iter().map(|&(_, c)| c).collect();
    let mut stream = PieceStream::default();
    for piece in Pieces::new(&val) {
        for (i, b) in piece.bytes().enumerate() {
            stream.ids.push(byte_ids[b as usize]);
            stream.piece_start.push(i == 0);
        }
    }
    Ok(Prepared {
        vocab,
        words,
        weights,
        val: stream,
        train_chars: train.chars().count(),
    })
}

fn check_target(cfg: &LzBpeConfig) -> Result<()> {
    if cfg.target_vocab <= 256 {
        return Err(Error::VocabTooSmall {
            requested: cfg.target_vocab,
            minimum: 257,
        });
    }
    let ids = cfg.target_vocab + cfg.specials.len();
    if cfg.width == Width::W16 && ids > 1 << 16 {
        return Err(Error::InvalidArgument(format!(
            "{ids} token ids do not fit the 16-bit validation packing"
        )));
    }
    if cfg.candidates == 0 {
        return Err(Error::InvalidArgument("at least one candidate per step is required".into()));
    }
    Ok(())
}

/// Picks the best evaluated candidate: smallest validation size, then the
/// higher training count, then the lowest pair.
fn best_candidate(evaluated: &[MergeCandidate]) -> Option<&MergeCandidate> {
    evaluated
        .iter()
        .min_by_key(|c| (c.val_compressed_bytes, std::cmp::Reverse(c.train_count), c.pair))
}

/// Trains LZ-aware BPE on `train`, scoring merges on `val`.
pub fn train_lz_aware_bpe(train: &str, val: &str, cfg: &LzBpeConfig) -> Result<(TokenizerModel, LzBpeTrace)> {
    check_target(cfg)?;
    let Prepared {
        mut vocab,
        mut words,
        weights,
        mut val,
        train_chars,
    } = prepare_streams(train, val, cfg)?;
    let total = cfg.target_vocab + cfg.specials.len();
    let mut table = PairTable::new(&words, &weights);
    let mut trace = LzBpeTrace {
        baseline_val_bytes: compressed_size(&val.ids, &cfg.compressor, cfg.width)?,
        ..LzBpeTrace::default()
    };
    let mut merges = Vec::new();
    let mut current = trace.baseline_val_bytes;

    while vocab.len() < total {
        let started = Instant::now();
        let candidates: Vec<MergeCandidate> = table
            .top_k(cfg.candidates)
            .into_iter()
            .filter(|&(_, c)| c >= cfg.min_frequency)
            .map(|(pair, train_count)| MergeCandidate {
                pair,
                train_count,
                val_compressed_bytes: None,
            })
            .collect();
        if candidates.is_empty() {
            trace.early_stop = Some(format!(
                "no pair reaches frequency {} at vocabulary {}",
                cfg.min_frequency,
                vocab.len() - cfg.specials.len()
            ));
            break;
        }
        let next_id = vocab.len() as TokenId;
        let evaluated = candidates
            .par_iter()
            .map_init(Vec::new, |buf, cand| {
                let size = if contains_pair(&val, cand.pair) {
                    merged_ids(&val, cand.pair, next_id, buf);
                    compressed_size(buf, &cfg.compressor, cfg.width)?
                } else {
                    current
                };
                Ok(MergeCandidate {
                    val_compressed_bytes: Some(size),
                    ..*cand
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let best = *best_candidate(&evaluated).expect("nonempty candidate list");
        let pair = best.pair;

        let mut joined = vocab.token(pair.0).unwrap_or_default().to_vec();
        joined.extend_from_slice(vocab.token(pair.1).unwrap_or_default());
        let (new_id, _) = vocab.insert(joined);
        merges.push(pair);
        table.merge(pair, new_id, &mut words, &weights);
        val = apply_merge(&val, pair, new_id);
        let after = if new_id == next_id {
            best.val_compressed_bytes.unwrap_or(current)
        } else {
            compressed_size(&val.ids, &cfg.compressor, cfg.width)?
        };
        trace.records.push(TraceRecord {
            step: merges.len(),
            vocab: vocab.len() - cfg.specials.len(),
            candidates: evaluated,
            chosen: pair,
            new_id,
            token: vocab.token_lossy(new_id).into_owned(),
            val_before: current,
            val_after: after,
            increased: after > current,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        current = after;
    }

    let mut metadata = std::collections::BTreeMap::new();
    metadata.insert("train_chars".into(), train_chars.to_string());
    metadata.insert("target_vocab_size".into(), total.to_string());
    metadata.insert("candidates".into(), cfg.candidates.to_string());
    metadata.insert("compressor".into(), cfg.compressor.to_string());
    metadata.insert("width".into(), cfg.width.to_string());
    metadata.insert("min_frequency".into(), cfg.min_frequency.to_string());
    metadata.insert("val_bytes_baseline".into(), trace.baseline_val_bytes.to_string());
    metadata.insert("val_bytes_final".into(), current.to_string());
    let model = TokenizerModel {
        family: Family::Bpe,
        vocab,
        merges,
        scores: Vec::new(),
        preprocessing: Preprocessing {
            nfkc: cfg.nfkc,
            ..Preprocessing::default()
        },
        byte_level: true,
        provenance: Some(PROVENANCE.to_owned()),
        metadata,
    };
    model.validate()?;
    Ok((model, trace))
}

/// Validation compressed size of a BPE model's merges applied in order,
/// sampled at the given non-special vocabulary sizes. Checkpoints beyond
/// the model's merges are skipped.
pub fn validation_curve(
    model: &TokenizerModel,
    val: &str,
    cfg: &LzBpeConfig,
    checkpoints: &[usize],
) -> Result<Vec<(usize, usize)>> {
    if model.family != Family::Bpe {
        return Err(Error::InvalidArgument(format!(
            "validation curves need a bpe model, not {}",
            model.family
        )));
    }
    let prepared = prepare_streams("x", val, cfg)?;
    let mut val = prepared.val;
    let mut out = Vec::new();
    let mut wanted: Vec<usize> = checkpoints.to_vec();
    wanted.sort_unstable();
    wanted.dedup();
    let mut next = wanted.iter().peekable();
    let mut vocab = 256;
    let mut record = |vocab: usize, val: &PieceStream, next: &mut std::iter::Peekable<std::slice::Iter<usize>>| -> Result<()> {
        while next.peek().is_some_and(|&&c| c < vocab) {
            next.next();
        }
        if next.peek() == Some(&&vocab) {
            out.push((vocab, compressed_size(&val.ids, &cfg.compressor, cfg.width)?));
            next.next();
        }
        Ok(())
    };
    record(vocab, &val, &mut next)?;
    for &pair in &model.merges {
        if next.peek().is_none() {
            break;
        }
        let mut joined = model.vocab.token(pair.0).unwrap_or_default().to_vec();
        joined.extend_from_slice(model.vocab.token(pair.1).unwrap_or_default());
        let id = model
            .vocab
            .get(&joined)
            .ok_or_else(|| Error::InvalidModel(format!("merge {pair:?} has no vocabulary entry")))?;
        val = apply_merge(&val, pair, id);
        if id as usize >= cfg.specials.len() + vocab {
            vocab += 1;
            record(vocab, &val, &mut next)?;
        }
    }
    Ok(out)
}

/// Re-encodes a byte stream with `merges` applied in order, respecting
/// pre-token boundaries. Used to check an incrementally maintained stream.
pub fn replay_merges(model: &TokenizerModel, text: &str) -> PieceStream {
    let mut out = PieceStream::default();
    let mut ids: Vec<TokenId> = Vec::new();
    let byte_id = |b: u8| model.vocab.get(&[b]).unwrap_or_default();
    let mut targets: Vec<TokenId> = Vec::with_capacity(model.merges.len());
    for &(a, b) in &model.merges {
        let mut joined = model.vocab.token(a).unwrap_or_default().to_vec();
        joined.extend_from_slice(model.vocab.token(b).unwrap_or_default());
        targets.push(model.vocab.get(&joined).unwrap_or_default());
    }
    for piece in Pieces::new(text) {
        ids.clear();
        ids.extend(piece.bytes().map(byte_id));
        for (&pair, &id) in model.merges.iter().zip(&targets) {
            if ids.len() < 2 {
                break;
            }
            merge_word(&mut ids, pair, id);
        }
        out.piece_start.push(true);
        out.piece_start.extend(std::iter::repeat_n(false, ids.len() - 1));
        out.ids.extend_from_slice(&ids);
    }
    out
}
