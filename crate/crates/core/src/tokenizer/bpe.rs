use rustc_hash::FxHashMap;

use super::{TokenId, TokenizerModel};

/// Replaces non-overlapping occurrences of `pair` in `word` by `new_id`,
/// scanning left to right. Returns the number of replacements.
pub fn merge_word(word: &mut Vec<TokenId>, pair: (TokenId, TokenId), new_id: TokenId) -> usize {
    let mut merged = 0;
    let mut read = 0;
    let mut write = 0;
    let n = word.len();
    while read < n {
        if read + 1 < n && word[read] == pair.0 && word[read + 1] == pair.1 {
            word[write] = new_id;
            read += 2;
            merged += 1;
        } else {
            word[write] = word[read];
            read += 1;
        }
        write += 1;
    }
    word.truncate(write);
    merged
}

/// Applies BPE merges in rank order.
pub(super) struct MergeEncoder {
    byte_ids: [TokenId; 256],
    ranks: FxHashMap<(TokenId, TokenId), (u32, TokenId)>,
}

impl MergeEncoder {
    pub(super) fn new(model: &TokenizerModel) -> Self {
        let byte_ids = model.byte_ids().unwrap_or([0; 256]);
        let mut ranks = FxHashMap::default();
        for (rank, &(l, r)) in model.merges.iter().enumerate() {
            let mut joined = model.vocab.token(l).unwrap_or_default().to_vec();
            joined.extend_from_slice(model.vocab.token(r).unwrap_or_default());
            if let Some(out) = model.vocab.get(&joined) {
                ranks.entry((l, r)).or_insert((rank as u32, out));
            }
        }
        MergeEncoder { byte_ids, ranks }
    }

    pub(super) fn encode_piece(&self, bytes: &[u8], out: &mut Vec<TokenId>) {
        let mut word: Vec<TokenId> = bytes.iter().map(|&b| self.byte_ids[b as usize]).collect();
        loop {
            let best = word
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0], w[1])).map(|&(rank, id)| (rank, (w[0], w[1]), id)))
                .min_by_key(|&(rank, _, _)| rank);
            match best {
                Some((_, pair, id)) => {
                    merge_word(&mut word, pair, id);
                }
                None => break,
            }
        }
        out.extend_from_slice(&word);
    }
}

/// Greedy lowest-rank merging over bytes, as used by tiktoken-style rank
/// lists: repeatedly join the adjacent part pair whose concatenation has
/// the lowest rank (leftmost on ties) until no concatenation is ranked.
pub(super) struct RankEncoder {
    ranks: FxHashMap<Vec<u8>, TokenId>,
}

impl RankEncoder {
    pub(super) fn new(model: &TokenizerModel) -> Self {
        let ranks = model
            .vocab
            .iter()
            .skip(model.vocab.specials().len())
            .map(|(id, t)| (t.to_vec(), id))
            .collect();
        RankEncoder { ranks }
    }

    pub(super) fn encode_piece(&self, bytes: &[u8], out: &mut Vec<TokenId>) {
        if bytes.is_empty() {
            return;
        }
        if let Some(&id) = self.ranks.get(bytes) {
            out.push(id);
            return;
        }
        // part boundaries: parts are bytes[bounds[i]..bounds[i + 1]]
        let mut bounds: Vec<usize> = (0..=bytes.len()).collect();
        loop {
            let mut best: Option<(TokenId, usize)> = None;
            for i in 0..bounds.len().saturating_sub(2) {
                if let Some(&rank) = self.ranks.get(&bytes[bounds[i]..bounds[i + 2]]) {
                    if best.is_none_or(|(r, _)| rank < r) {
                        best = Some((rank, i));
                    }
                }
            }
            match best {
                Some((_, i)) => {
                    bounds.remove(i + 1);
                }
                None => break,
            }
        }
        for w in bounds.windows(2) {
            let part = &bytes[w[0]..w[1]];
            // every single byte is ranked (checked at load time)
            out.push(self.ranks.get(part).copied().unwrap_or(0));
        }
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::tokenizer::{Family, Preprocessing, Vocabulary};

    fn model_with_merges(merges: &[(&str, &str)]) -> TokenizerModel {
        let mut m = TokenizerModel::byte_identity();
        for (l, r) in merges {
            let li = m.vocab.get(l.as_bytes()).unwrap();
            let ri = m.vocab.get(r.as_bytes()).unwrap();
            m.vocab.insert(format!("{l}{r}").into_bytes());
            m.merges.push((li, ri));
        }
        m
    }

    #[test]
    fn merge_word_overlap_rule() {
        let mut w = vec![1, 2, 1, 2];
        assert_eq!(merge_word(&mut w, (1, 2), 9), 2);
        assert_eq!(w, vec![9, 9]);
        let mut w = vec![7, 7, 7];
        assert_eq!(merge_word(&mut w, (7, 7), 9), 1);
        assert_eq!(w, vec![9, 7]);
        let mut w = vec![3, 4];
        assert_eq!(merge_word(&mut w, (1, 2), 9), 0);
        assert_eq!(w, vec![3, 4]);
    }

    #[test]
    fn single_merge_applies_to_every_occurrence() {
        let m = model_with_merges(&[("a", "b")]);
        let ab = m.vocab.get(b"ab").unwrap();
        assert_eq!(m.tokenizer().encode("abab").ids, vec![ab, ab]);
    }

    #[test]
    fn merges_apply_in_rank_order() {
        // rank 0: (b,c); rank 1: (a,b). "abc" -> a + bc, never ab + c
        let m = model_with_merges(&[("b", "c"), ("a", "b")]);
        let t = m.tokenizer();
        let a = m.vocab.get(b"a").unwrap();
        let bc = m.vocab.get(b"bc").unwrap();
        assert_eq!(t.encode("abc").ids, vec![a, bc]);
    }

    fn rank_model(entries: &[&[u8]]) -> TokenizerModel {
        let mut vocab = Vocabulary::with_specials::<&str>(&[]);
        for b in 0..=255u8 {
            vocab.insert(vec![b]);
        }
        for e in entries {
            vocab.insert(e.to_vec());
        }
        TokenizerModel {
            family: Family::ExternalRankList,
            vocab,
            merges: vec![],
            scores: vec![],
            preprocessing: Preprocessing {
                nfkc: false,
                ..Default::default()
            },
            byte_level: true,
            provenance: None,
            metadata: BTreeMap::new(),
        }
    }

    #[test]
    fn rank_list_lowest_rank_first() {
        let m = rank_model(&[b"ab", b"bc", b"abc"]);
        let t = m.tokenizer();
        // "abc" is ranked directly
        assert_eq!(t.encode("abc").ids, vec![258]);
        // "abcd": ab(256) beats bc(257); then "abc" ranked 258 -> [abc, d]
        assert_eq!(t.encode("abcd").ids, vec![258, b'd' as u32]);
        assert_eq!(t.decode(&t.encode("zabcd").ids).unwrap(), "zabcd");
    }
}
