use rustc_hash::FxHashMap;

use super::{TokenId, TokenizerModel, UNK, UNK_ID};

/// Score added below the lowest piece score for an unknown character.
pub(crate) const UNK_PENALTY: f64 = 10.0;

/// Maximum-likelihood segmentation of `piece`.
///
/// `score_of` returns the id and log-probability of a candidate substring;
/// candidates are at most `max_chars` characters. A character with no
/// single-character entry becomes `unk`. Returns `(start, end, id)` byte
/// spans in order. Among equal-scoring segmentations the one found first
/// (shorter final token) wins.
pub fn viterbi_segment<F>(
    piece: &str,
    max_chars: usize,
    score_of: F,
    unk: (TokenId, f64),
) -> Vec<(usize, usize, TokenId)>
where
    F: Fn(&str) -> Option<(TokenId, f64)>,
{
    let offsets: Vec<usize> = piece
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(piece.len()))
        .collect();
    let n = offsets.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let mut best = vec![f64::NEG_INFINITY; n + 1];
    let mut back: Vec<(usize, TokenId)> = vec![(0, 0); n + 1];
    best[0] = 0.0;
    for start in 0..n {
        if best[start] == f64::NEG_INFINITY {
            continue;
        }
        let mut single_known = false;
        for len in 1..=max_chars.min(n - start) {
            let end = start + len;
            if let Some((id, score)) = score_of(&piece[offsets[start]..offsets[end]]) {
                if len == 1 {
                    single_known = true;
                }
                let cand = best[start] + score;
                if cand > best[end] {
                    best[end] = cand;
                    back[end] = (start, id);
                }
            }
        }
        if !single_known {
            let cand = best[start] + unk.1;
            if cand > best[start + 1] {
                best[start + 1] = cand;
                back[start + 1] = (start, unk.0);
            }
        }
    }
    let mut spans = Vec::new();
    let mut end = n;
    while end > 0 {
        let (start, id) = back[end];
        spans.push((offsets[start], offsets[end], id));
        end = start;
    }
    spans.reverse();
    spans
}

pub(super) struct UnigramEncoder {
    pieces: FxHashMap<String, (TokenId, f64)>,
    max_chars: usize,
    unk: (TokenId, f64),
}

impl UnigramEncoder {
    pub(super) fn new(model: &TokenizerModel) -> Self {
        let mut pieces = FxHashMap::default();
        let mut max_chars = 1;
        let mut min_score = 0.0f64;
        for &(id, score) in &model.scores {
            if model.vocab.is_special(id) {
                continue;
            }
            let tok = model.vocab.token_lossy(id).into_owned();
            max_chars = max_chars.max(tok.chars().count());
            min_score = min_score.min(score);
            pieces.insert(tok, (id, score));
        }
        let unk_id = model.vocab.special_id(UNK).unwrap_or(UNK_ID);
        UnigramEncoder {
            pieces,
            max_chars,
            unk: (unk_id, min_score - UNK_PENALTY),
        }
    }

    pub(super) fn encode_piece(&self, piece: &str, out: &mut Vec<TokenId>) {
        let spans = viterbi_segment(
            piece,
            self.max_chars,
            |s| self.pieces.get(s).copied(),
            self.unk,
        );
        out.extend(spans.into_iter().map(|(_, _, id)| id));
    }
}
