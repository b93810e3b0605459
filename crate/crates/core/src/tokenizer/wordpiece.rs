use rustc_hash::FxHashMap;

use super::{TokenId, TokenizerModel, Vocabulary, UNK, UNK_ID};

/// Marks a piece that continues a word rather than starting one.
pub const CONTINUATION_PREFIX: &str = "##";

/// Words longer than this many characters map to `<unk>` whole.
pub(crate) const MAX_WORD_CHARS: usize = 100;

/// Greedy longest-match-first segmentation. Vocabulary entries beginning
/// with `##` are always continuations, so a word-initial match never uses
/// one; a word with any unmatched position becomes a single `<unk>`.
pub(super) struct WordPieceEncoder {
    initial: FxHashMap<String, TokenId>,
    continuation: FxHashMap<String, TokenId>,
    max_chars: usize,
    unk: TokenId,
}

impl WordPieceEncoder {
    pub(super) fn new(model: &TokenizerModel) -> Self {
        let mut initial = FxHashMap::default();
        let mut continuation = FxHashMap::default();
        let mut max_chars = 1;
        for (id, bytes) in model.vocab.iter().skip(model.vocab.specials().len()) {
            let tok = String::from_utf8_lossy(bytes).into_owned();
            match tok.strip_prefix(CONTINUATION_PREFIX) {
                Some(rest) if !rest.is_empty() => {
                    max_chars = max_chars.max(rest.chars().count());
                    continuation.insert(rest.to_owned(), id);
                }
                _ => {
                    max_chars = max_chars.max(tok.chars().count());
                    initial.insert(tok, id);
                }
            }
        }
        WordPieceEncoder {
            initial,
            continuation,
            max_chars,
            unk: model.vocab.special_id(UNK).unwrap_or(UNK_ID),
        }
    }

    pub(super) fn encode_piece(&self, piece: &str, out: &mut Vec<TokenId>) {
        let offsets: Vec<usize> = piece
            .char_indices()
            .map(|(i, _)| i)
            .chain(std::iter::once(piece.len()))
            .collect();
        let n = offsets.len() - 1;
        if n == 0 {
            return;
        }
        if n > MAX_WORD_CHARS {
            out.push(self.unk);
            return;
        }
        let mark = out.len();
        let mut start = 0;
        while start < n {
            let table = if start == 0 {
                &self.initial
            } else {
                &self.continuation
            };
            let found = (start + 1..=n.min(start + self.max_chars))
                .rev()
                .find_map(|end| table.get(&piece[offsets[start]..offsets[end]]).map(|&id| (end, id)));
            match found {
                Some((end, id)) => {
                    out.push(id);
                    start = end;
                }
                None => {
                    out.truncate(mark);
                    out.push(self.unk);
                    return;
                }
            }
        }
    }
}

pub(super) fn decode(vocab: &Vocabulary, ids: &[TokenId]) -> String {
    let mut text = String::new();
    for &id in ids {
        let tok = vocab.token_lossy(id);
        if vocab.is_special(id) {
            text.push_str(&tok);
            continue;
        }
        match tok.strip_prefix(CONTINUATION_PREFIX) {
            Some(rest) if !rest.is_empty() => text.push_str(rest),
            _ => text.push_str(&tok),
        }
    }
    text
}
