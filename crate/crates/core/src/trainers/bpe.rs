use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rustc_hash::FxHashMap;

use super::{base_metadata, check_family, piece_counts, prepare, TrainConfig};
use crate::error::{Error, Result};
use crate::tokenizer::{merge_word, Family, Preprocessing, TokenId, TokenizerModel, Vocabulary};

type Pair = (TokenId, TokenId);

/// Byte-level BPE.
///
/// Starts from the specials plus the 256 bytes and repeatedly merges the most
/// frequent adjacent pair (lowest `(left, right)` among equal counts) until
/// the vocabulary holds `vocab_size` entries or no pair reaches
/// `min_frequency`. A merge whose byte string already exists reuses that id.
pub fn train_bpe(text: &str, cfg: &TrainConfig) -> Result<TokenizerModel> {
    check_family(cfg, Family::Bpe)?;
    let text = prepare(text, cfg)?;
    let mut vocab = Vocabulary::with_specials(&cfg.specials);
    let mut byte_ids = [0; 256];
    for b in 0..=255u8 {
        byte_ids[b as usize] = vocab.insert(vec![b]).0;
    }
    if cfg.vocab_size <= vocab.len() {
        return Err(Error::VocabTooSmall {
            requested: cfg.vocab_size,
            minimum: vocab.len() + 1,
        });
    }

    let counted = piece_counts(&text);
    let mut words: Vec<Vec<TokenId>> = counted
        .iter()
        .map(|(p, _)| p.bytes().map(|b| byte_ids[b as usize]).collect())
        .collect();
    let weights: Vec<u64> = counted.iter().map(|&(_, c)| c).collect();
    drop(counted);

    let mut table = PairTable::new(&words, &weights);
    let mut merges = Vec::new();
    while vocab.len() < cfg.vocab_size {
        let Some((pair, count)) = table.pop_best() else {
            break;
        };
        if count < cfg.min_frequency {
            break;
        }
        let mut joined = vocab.token(pair.0).unwrap_or_default().to_vec();
        joined.extend_from_slice(vocab.token(pair.1).unwrap_or_default());
        let (new_id, _) = vocab.insert(joined);
        merges.push(pair);
        table.merge(pair, new_id, &mut words, &weights);
    }

    let mut metadata = base_metadata(cfg, &text);
    metadata.insert("min_frequency".into(), cfg.min_frequency.to_string());
    Ok(TokenizerModel {
        family: Family::Bpe,
        vocab,
        merges,
        scores: Vec::new(),
        preprocessing: Preprocessing {
            nfkc: cfg.nfkc,
            ..Preprocessing::default()
        },
        byte_level: true,
        provenance: None,
        metadata,
    })
}

/// Weighted pair counts over a set of words, with a lazily updated max-heap.
///
/// Heap entries can be stale: counts of pairs not involving a new token only
/// ever decrease, so a popped entry whose count no longer matches is pushed
/// back with its current count.
pub(crate) struct PairTable {
    counts: FxHashMap<Pair, u64>,
    occurs_in: FxHashMap<Pair, Vec<u32>>,
    heap: BinaryHeap<(u64, Reverse<Pair>)>,
}

impl PairTable {
    pub(crate) fn new(words: &[Vec<TokenId>], weights: &[u64]) -> Self {
        let mut counts: FxHashMap<Pair, u64> = FxHashMap::default();
        let mut occurs_in: FxHashMap<Pair, Vec<u32>> = FxHashMap::default();
        for (i, (w, &c)) in words.iter().zip(weights).enumerate() {
            for p in w.windows(2) {
                let pair = (p[0], p[1]);
                *counts.entry(pair).or_default() += c;
                let list = occurs_in.entry(pair).or_default();
                if list.last() != Some(&(i as u32)) {
                    list.push(i as u32);
                }
            }
        }
        let heap = counts.iter().map(|(&p, &c)| (c, Reverse(p))).collect();
        PairTable {
            counts,
            occurs_in,
            heap,
        }
    }

    pub(crate) fn count(&self, pair: Pair) -> u64 {
        self.counts.get(&pair).copied().unwrap_or(0)
    }

    /// Removes and returns the most frequent pair.
    pub(crate) fn pop_best(&mut self) -> Option<(Pair, u64)> {
        while let Some((c, Reverse(pair))) = self.heap.pop() {
            let current = self.count(pair);
            if current == c {
                return Some((pair, c));
            }
            if current > 0 {
                self.heap.push((current, Reverse(pair)));
            }
        }
        None
    }

    /// The `k` most frequent pairs, most frequent first, lowest pair among
    /// equal counts. Leaves the table unchanged.
    pub(crate) fn top_k(&mut self, k: usize) -> Vec<(Pair, u64)> {
        let mut out: Vec<(Pair, u64)> = Vec::with_capacity(k);
        while out.len() < k {
            let Some((pair, c)) = self.pop_best() else {
                break;
            };
            if !out.iter().any(|&(p, _)| p == pair) {
                out.push((pair, c));
            }
        }
        for &(pair, c) in &out {
            self.heap.push((c, Reverse(pair)));
        }
        out
    }

    /// Replaces `pair` by `new_id` in every word containing it and updates
    /// the counts of all affected pairs.
    pub(crate) fn merge(&mut self, pair: Pair, new_id: TokenId, words: &mut [Vec<TokenId>], weights: &[u64]) {
        let mut idxs = self.occurs_in.remove(&pair).unwrap_or_default();
        idxs.sort_unstable();
        idxs.dedup();
        let mut delta: FxHashMap<Pair, i64> = FxHashMap::default();
        for i in idxs {
            let word = &mut words[i as usize];
            if !word.windows(2).any(|p| (p[0], p[1]) == pair) {
                continue;
            }
            let c = weights[i as usize] as i64;
            for p in word.windows(2) {
                *delta.entry((p[0], p[1])).or_default() -= c;
            }
            merge_word(word, pair, new_id);
            for p in word.windows(2) {
                let q = (p[0], p[1]);
                *delta.entry(q).or_default() += c;
                if q.0 == new_id || q.1 == new_id {
                    let list = self.occurs_in.entry(q).or_default();
                    if list.last() != Some(&i) {
                        list.push(i);
                    }
                }
            }
        }
        let mut grown: Vec<Pair> = Vec::new();
        for (q, d) in delta {
            if d == 0 {
                continue;
            }
            let entry = self.counts.entry(q).or_default();
            *entry = (*entry as i64 + d) as u64;
            if *entry == 0 {
                self.counts.remove(&q);
                self.occurs_in.remove(&q);
            } else if d > 0 {
                grown.push(q);
            }
        }
        for q in grown {
            self.heap.push((self.counts[&q], Reverse(q)));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(k: usize) -> TrainConfig {
        TrainConfig::new(Family::Bpe, k)
    }

    /// Reference trainer: recount every pair from scratch before each merge.
    fn naive_merges(text: &str, k: usize) -> Vec<Pair> {
        let base = TokenizerModel::byte_identity();
        let mut vocab = base.vocab.clone();
        let mut words: Vec<Vec<TokenId>> = crate::tokenizer::pretokenize(text)
            .into_iter()
            .map(|p| p.bytes().map(|b| b as TokenId + 4).collect())
            .collect();
        let mut merges = Vec::new();
        while vocab.len() < k {
            let mut counts: std::collections::BTreeMap<Pair, u64> = Default::default();
            for w in &words {
                for p in w.windows(2) {
                    *counts.entry((p[0], p[1])).or_default() += 1;
                }
            }
            let Some((&pair, &c)) = counts.iter().max_by_key(|(p, c)| (**c, Reverse(**p))) else {
                break;
            };
            if c < 2 {
                break;
            }
            let mut joined = vocab.token(pair.0).unwrap().to_vec();
            joined.extend_from_slice(vocab.token(pair.1).unwrap());
            let (id, _) = vocab.insert(joined);
            merges.push(pair);
            for w in &mut words {
                merge_word(w, pair, id);
            }
        }
        merges
    }

    #[test]
    fn first_merge_is_most_frequent_pair() {
        let m = train_bpe("abab abab", &cfg(261)).unwrap();
        let a = m.vocab.get(b"a").unwrap();
        let b = m.vocab.get(b"b").unwrap();
        assert_eq!(m.merges, vec![(a, b)]);
        assert_eq!(m.vocab_size(), 261);
        assert_eq!(m.vocab.token(260), Some(&b"ab"[..]));
    }

    #[test]
    fn stops_without_repeated_pairs() {
        let m = train_bpe("xyz", &cfg(263)).unwrap();
        assert!(m.merges.is_empty());
        assert_eq!(m.vocab_size(), 260);
    }

    #[test]
    fn rejects_vocab_without_room_for_merges() {
        assert!(matches!(
            train_bpe("abab", &cfg(260)),
            Err(Error::VocabTooSmall { minimum: 261, .. })
        ));
    }

    #[test]
    fn top_k_orders_by_count_then_pair() {
        let words = vec![vec![1, 2, 1, 2], vec![3, 4], vec![5, 6]];
        let mut t = PairTable::new(&words, &[1, 2, 2]);
        assert_eq!(t.top_k(3), vec![((1, 2), 2), ((3, 4), 2), ((5, 6), 2)]);
        assert_eq!(t.top_k(1), vec![((1, 2), 2)]);
        assert_eq!(t.top_k(10).len(), 4);
        assert_eq!(t.pop_best(), Some(((1, 2), 2)));
    }

    #[test]
    fn deterministic() {
        let text = "low lower lowest newer wider new low low";
        assert_eq!(train_bpe(text, &cfg(300)).unwrap(), train_bpe(text, &cfg(300)).unwrap());
    }

    #[test]
    fn incremental_counts_match_naive_recount() {
        let texts = [
            "low lower lowest newer wider new low low",
            "aaaa aaaa aaa aa a aaaaaaa",
            "the cat sat on the mat; the cat ate the rat. that hat?",
        ];
        for text in texts {
            let fast = train_bpe(text, &cfg(290)).unwrap();
            assert_eq!(fast.merges, naive_merges(text, 290), "{text:?}");
        }
    }

    #[test]
    fn merges_stay_inside_pieces() {
        // " a" and "b" are separate pieces in "b a": no (b, space) merge
        let m = train_bpe("b ab ab a", &cfg(300)).unwrap();
        let b = m.vocab.get(b"b").unwrap();
        let sp = m.vocab.get(b" ").unwrap();
        assert!(!m.merges.contains(&(b, sp)));
    }

    #[test]
    fn merged_tokens_compress_no_worse() {
        let text = "the cat sat on the mat; the cat ate the rat. ".repeat(5);
        let m = train_bpe(&text, &cfg(280)).unwrap();
        let base = TokenizerModel::byte_identity();
        assert!(m.tokenizer().count_tokens(&text) < base.tokenizer().count_tokens(&text));
    }
}
