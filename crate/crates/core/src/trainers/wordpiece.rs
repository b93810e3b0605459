use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use rustc_hash::{FxHashMap, FxHashSet};

use super::{base_metadata, check_family, piece_counts, prepare, TrainConfig};
use crate::error::{Error, Result};
use crate::tokenizer::{
    merge_word, Family, Preprocessing, TokenId, TokenizerModel, Vocabulary, CONTINUATION_PREFIX,
};

type Pair = (TokenId, TokenId);

/// Likelihood-style WordPiece.
///
/// Words start as their initial unit (first character, joined with the
/// following one when it is a whitespace marker) plus `##`-prefixed
/// continuation characters. Each step merges the pair maximizing
/// `count(pair) / (count(left) * count(right))` among pairs seen at least
/// `min_frequency` times; ties go to the higher pair count, then the lowest
/// `(left, right)`. A merge whose word-initial result would itself start
/// with `##` is never made, since such a string reads as a continuation.
pub fn train_wordpiece(text: &str, cfg: &TrainConfig) -> Result<TokenizerModel> {
    check_family(cfg, Family::WordPiece)?;
    let text = prepare(text, cfg)?;
    let counted = piece_counts(&text);

    let mut initial = BTreeSet::new();
    let mut continuation = BTreeSet::new();
    for (piece, _) in &counted {
        let (head, rest) = split_initial(piece);
        initial.insert(head);
        continuation.extend(rest.chars());
    }
    let mut vocab = Vocabulary::with_specials(&cfg.specials);
    for head in &initial {
        vocab.insert(head.as_bytes().to_vec());
    }
    for c in &continuation {
        vocab.insert(format!("{CONTINUATION_PREFIX}{c}").into_bytes());
    }
    if cfg.vocab_size < vocab.len() {
        return Err(Error::VocabTooSmall {
            requested: cfg.vocab_size,
            minimum: vocab.len(),
        });
    }

    let mut words: Vec<Vec<TokenId>> = Vec::with_capacity(counted.len());
    for (piece, _) in &counted {
        let (head, rest) = split_initial(piece);
        let mut ids = Vec::with_capacity(piece.len());
        ids.extend(vocab.get_str(head));
        for c in rest.chars() {
            ids.extend(vocab.get_str(&format!("{CONTINUATION_PREFIX}{c}")));
        }
        words.push(ids);
    }
    let weights: Vec<u64> = counted.iter().map(|&(_, c)| c).collect();
    drop(counted);

    let mut state = ScoreTable::new(&words, &weights, vocab.len(), cfg.min_frequency);
    let mut merges = 0usize;
    while vocab.len() < cfg.vocab_size {
        let Some(pair) = state.pop_best(|p| merged_string(&vocab, p).is_some()) else {
            break;
        };
        let joined = merged_string(&vocab, pair).expect("checked by pop_best");
        let (new_id, _) = vocab.insert(joined.into_bytes());
        state.ensure_symbol(new_id);
        state.merge(pair, new_id, &mut words, &weights);
        merges += 1;
    }

    let mut metadata = base_metadata(cfg, &text);
    metadata.insert("min_frequency".into(), cfg.min_frequency.to_string());
    metadata.insert("merges".into(), merges.to_string());
    Ok(TokenizerModel {
        family: Family::WordPiece,
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

/// Splits a pre-token into its word-initial unit and the rest. The unit is
/// the first character, extended by one more when the first is the
/// whitespace marker of a word, so `" the"` starts from `" t"`.
fn split_initial(piece: &str) -> (&str, &str) {
    let mut chars = piece.char_indices();
    let Some((_, first)) = chars.next() else {
        return ("", "");
    };
    let mut end = first.len_utf8();
    if first.is_whitespace() {
        if let Some((i, second)) = chars.next() {
            if !second.is_whitespace() {
                end = i + second.len_utf8();
            }
        }
    }
    piece.split_at(end)
}

/// Vocabulary string of the merge of `pair`, or `None` when the result would
/// be a word-initial token spelled like a continuation.
fn merged_string(vocab: &Vocabulary, (l, r): Pair) -> Option<String> {
    let left = vocab.token_lossy(l);
    let right = vocab.token_lossy(r);
    let right = right.strip_prefix(CONTINUATION_PREFIX).unwrap_or(&right);
    let joined = format!("{left}{right}");
    let left_is_continuation = left.starts_with(CONTINUATION_PREFIX);
    if !left_is_continuation && joined.starts_with(CONTINUATION_PREFIX) {
        return None;
    }
    Some(joined)
}

/// Heap entry; `count / denom` is the pair score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Scored {
    count: u64,
    denom: u128,
    pair: Pair,
}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        let lhs = self.count as u128 * other.denom;
        let rhs = other.count as u128 * self.denom;
        lhs.cmp(&rhs)
            .then(self.count.cmp(&other.count))
            .then(other.pair.cmp(&self.pair))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Pair and symbol counts with a lazy max-heap of scores. Whenever a score
/// may change (the pair count or either symbol count moved) a fresh entry is
/// pushed; popped entries that disagree with the current counts are stale.
struct ScoreTable {
    pair_counts: FxHashMap<Pair, u64>,
    occurs_in: FxHashMap<Pair, Vec<u32>>,
    by_symbol: FxHashMap<TokenId, FxHashSet<Pair>>,
    symbol_counts: Vec<u64>,
    heap: BinaryHeap<Scored>,
    min_frequency: u64,
}

impl ScoreTable {
    fn new(words: &[Vec<TokenId>], weights: &[u64], n_symbols: usize, min_frequency: u64) -> Self {
        let mut t = ScoreTable {
            pair_counts: FxHashMap::default(),
            occurs_in: FxHashMap::default(),
            by_symbol: FxHashMap::default(),
            symbol_counts: vec![0; n_symbols],
            heap: BinaryHeap::new(),
            min_frequency,
        };
        for (i, (w, &c)) in words.iter().zip(weights).enumerate() {
            for &s in w {
                t.symbol_counts[s as usize] += c;
            }
            for p in w.windows(2) {
                let pair = (p[0], p[1]);
                *t.pair_counts.entry(pair).or_default() += c;
                let list = t.occurs_in.entry(pair).or_default();
                if list.last() != Some(&(i as u32)) {
                    list.push(i as u32);
                }
            }
        }
        let pairs: Vec<Pair> = t.pair_counts.keys().copied().collect();
        for &p in &pairs {
            t.by_symbol.entry(p.0).or_default().insert(p);
            t.by_symbol.entry(p.1).or_default().insert(p);
        }
        for p in pairs {
            t.push(p);
        }
        t
    }

    fn ensure_symbol(&mut self, id: TokenId) {
        if self.symbol_counts.len() <= id as usize {
            self.symbol_counts.resize(id as usize + 1, 0);
        }
    }

    fn current(&self, pair: Pair) -> Option<Scored> {
        let count = *self.pair_counts.get(&pair)?;
        let denom = self.symbol_counts[pair.0 as usize] as u128 * self.symbol_counts[pair.1 as usize] as u128;
        Some(Scored { count, denom, pair })
    }

    fn push(&mut self, pair: Pair) {
        if let Some(s) = self.current(pair) {
            if s.count >= self.min_frequency {
                self.heap.push(s);
            }
        }
    }

    fn pop_best(&mut self, allowed: impl Fn(Pair) -> bool) -> Option<Pair> {
        while let Some(top) = self.heap.pop() {
            if self.current(top.pair) != Some(top) || !allowed(top.pair) {
                continue;
            }
            return Some(top.pair);
        }
        None
    }

    fn merge(&mut self, pair: Pair, new_id: TokenId, words: &mut [Vec<TokenId>], weights: &[u64]) {
        let mut idxs = self.occurs_in.remove(&pair).unwrap_or_default();
        idxs.sort_unstable();
        idxs.dedup();
        let mut delta: FxHashMap<Pair, i64> = FxHashMap::default();
        for i in idxs {
            let word = &mut words[i as usize];
            if !word.windows(2).any(|p| (p[0], p[1]) == pair) {
                continue;
            }
            let c = weights[i as usize];
            for p in word.windows(2) {
                *delta.entry((p[0], p[1])).or_default() -= c as i64;
            }
            let n = merge_word(word, pair, new_id) as u64;
            self.symbol_counts[pair.0 as usize] -= n * c;
            self.symbol_counts[pair.1 as usize] -= n * c;
            self.symbol_counts[new_id as usize] += n * c;
            for p in word.windows(2) {
                let q = (p[0], p[1]);
                *delta.entry(q).or_default() += c as i64;
                if q.0 == new_id || q.1 == new_id {
                    let list = self.occurs_in.entry(q).or_default();
                    if list.last() != Some(&i) {
                        list.push(i);
                    }
                }
            }
        }
        let mut touched: FxHashSet<Pair> = FxHashSet::default();
        for (q, d) in delta {
            if d == 0 {
                continue;
            }
            let entry = self.pair_counts.entry(q).or_default();
            let was = *entry;
            *entry = (was as i64 + d) as u64;
            if *entry == 0 {
                self.pair_counts.remove(&q);
                self.occurs_in.remove(&q);
                for s in [q.0, q.1] {
                    if let Some(set) = self.by_symbol.get_mut(&s) {
                        set.remove(&q);
                    }
                }
            } else {
                if was == 0 {
                    self.by_symbol.entry(q.0).or_default().insert(q);
                    self.by_symbol.entry(q.1).or_default().insert(q);
                }
                touched.insert(q);
            }
        }
        for s in [pair.0, pair.1, new_id] {
            if let Some(set) = self.by_symbol.get(&s) {
                touched.extend(set.iter().copied());
            }
        }
        let mut touched: Vec<Pair> = touched.into_iter().collect();
        touched.sort_unstable();
        for q in touched {
            self.push(q);
        }
        if self.heap.len() > 4 * self.pair_counts.len() + 1024 {
            let pairs: Vec<Pair> = self.pair_counts.keys().copied().collect();
            self.heap.clear();
            for p in pairs {
                self.push(p);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::pretokenize;

    fn cfg(k: usize) -> TrainConfig {
        TrainConfig::new(Family::WordPiece, k)
    }

    /// Exhaustive score table over the initial character segmentation.
    fn best_initial_pair(text: &str) -> (String, String, u64) {
        let mut words: Vec<Vec<String>> = Vec::new();
        for piece in pretokenize(text) {
            let (head, rest) = split_initial(piece);
            let mut w = vec![head.to_string()];
            w.extend(rest.chars().map(|c| format!("##{c}")));
            words.push(w);
        }
        let mut sym: std::collections::BTreeMap<&str, u64> = Default::default();
        let mut pairs: std::collections::BTreeMap<(&str, &str), u64> = Default::default();
        for w in &words {
            for s in w {
                *sym.entry(s).or_default() += 1;
            }
            for p in w.windows(2) {
                *pairs.entry((&p[0], &p[1])).or_default() += 1;
            }
        }
        let (&(l, r), &c) = pairs
            .iter()
            .filter(|(_, &c)| c >= 2)
            .max_by(|a, b| {
                let sa = *a.1 as f64 / (sym[a.0 .0] * sym[a.0 .1]) as f64;
                let sb = *b.1 as f64 / (sym[b.0 .0] * sym[b.0 .1]) as f64;
                sa.partial_cmp(&sb).unwrap()
            })
            .unwrap();
        (l.to_string(), r.to_string(), c)
    }

    #[test]
    fn score_beats_raw_frequency() {
        // 5 pieces: "xqu", " xqu", " eee" x3
        let text = "xqu xqu eee eee eee";
        let (l, r, c) = best_initial_pair(text);
        assert_eq!((l.as_str(), r.as_str(), c), ("##q", "##u", 2));
        // (##e, ##e) occurs 6 times but scores 6/81 < 2/4
        let alphabet = {
            let m = train_wordpiece(text, &cfg(1000)).unwrap();
            let merges: usize = m.metadata["merges"].parse().unwrap();
            m.vocab_size() - merges
        };
        let m = train_wordpiece(text, &cfg(alphabet + 1)).unwrap();
        assert_eq!(m.vocab.token_lossy(alphabet as TokenId), "##qu");
    }

    #[test]
    fn repeated_word_enters_whole() {
        let m = train_wordpiece("hello hello hello hello", &cfg(1000)).unwrap();
        let id = m.vocab.get_str(" hello").expect("whole word");
        let t = m.tokenizer();
        assert_eq!(t.encode(" hello").ids, vec![id]);
    }

    #[test]
    fn deterministic_and_lossless_on_known_text() {
        let text = "unaffable affable unable able ##x #tag ###";
        let a = train_wordpiece(text, &cfg(60)).unwrap();
        assert_eq!(a, train_wordpiece(text, &cfg(60)).unwrap());
        let t = a.tokenizer();
        assert_eq!(t.decode(&t.encode(text).ids).unwrap(), text);
        for (_, tok) in a.vocab.iter().skip(4) {
            let s = std::str::from_utf8(tok).unwrap();
            assert!(s != CONTINUATION_PREFIX);
        }
    }

    #[test]
    fn marker_joins_first_character() {
        assert_eq!(split_initial(" the"), (" t", "he"));
        assert_eq!(split_initial("the"), ("t", "he"));
        assert_eq!(split_initial("  "), (" ", " "));
        assert_eq!(split_initial(" "), (" ", ""));
        assert_eq!(split_initial("\u{3000}é!"), ("\u{3000}é", "!"));
    }

    #[test]
    fn vocab_below_alphabet_is_an_error() {
        assert!(matches!(
            train_wordpiece("abc def", &cfg(5)),
            Err(Error::VocabTooSmall { .. })
        ));
    }
}
