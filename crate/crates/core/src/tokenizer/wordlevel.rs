use rustc_hash::FxHashMap;

use super::{TokenId, TokenizerModel, Vocabulary, UNK, UNK_ID};

/// Whole-word lookup; the whitespace marker of each piece is dropped, so
/// decoding rejoins words with single spaces.
pub(super) struct WordLevelEncoder {
    words: FxHashMap<String, TokenId>,
    unk: TokenId,
}

impl WordLevelEncoder {
    pub(super) fn new(model: &TokenizerModel) -> Self {
        let words = model
            .vocab
            .iter()
            .skip(model.vocab.specials().len())
            .map(|(id, t)| (String::from_utf8_lossy(t).into_owned(), id))
            .collect();
        WordLevelEncoder {
            words,
            unk: model.vocab.special_id(UNK).unwrap_or(UNK_ID),
        }
    }

    pub(super) fn encode_piece(&self, piece: &str, out: &mut Vec<TokenId>) {
        let word = piece.trim_start();
        if word.is_empty() {
            return;
        }
        out.push(self.words.get(word).copied().unwrap_or(self.unk));
    }
}

pub(super) fn decode(vocab: &Vocabulary, ids: &[TokenId]) -> String {
    let words: Vec<_> = ids.iter().map(|&id| vocab.token_lossy(id)).collect();
    words.join(" ")
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::tokenizer::{Family, Preprocessing, SPECIALS};

    #[test]
    fn unknown_words_fall_back_to_unk() {
        let mut vocab = Vocabulary::with_specials(&SPECIALS);
        let (the, _) = vocab.insert(b"the".to_vec());
        vocab.insert(b"cat".to_vec());
        let m = TokenizerModel {
            family: Family::WordLevel,
            vocab,
            merges: vec![],
            scores: vec![],
            preprocessing: Preprocessing::default(),
            byte_level: false,
            provenance: None,
            metadata: BTreeMap::new(),
        };
        let t = m.tokenizer();
        let ids = t.encode("the dog").ids;
        assert_eq!(ids, vec![the, UNK_ID]);
        assert_eq!(t.decode(&ids).unwrap(), "the <unk>");
        assert_eq!(t.encode("  the\n\ncat ").ids.len(), 2);
    }
}
