use rustc_hash::FxHashMap;

use super::{base_metadata, check_family, piece_counts, prepare, TrainConfig};
use crate::error::{Error, Result};
use crate::tokenizer::{log_add, viterbi_segment, Family, Preprocessing, TokenId, TokenizerModel, Vocabulary};

/// Unigram language-model tokenizer.
///
/// The seed vocabulary holds every character plus the most frequent
/// substrings (2 to `max_token_length` characters, seen at least twice,
/// ranked by count times length, at most `seed_multiplier * vocab_size` of
/// them). Rounds of EM (forward-backward expected counts, maximum-likelihood
/// re-estimation) alternate with pruning the pieces whose removal costs the
/// least likelihood, until `vocab_size` remains. Single characters are never
/// pruned.
pub fn train_unigram(text: &str, cfg: &TrainConfig) -> Result<TokenizerModel> {
    check_family(cfg, Family::Unigram)?;
    let text = prepare(text, cfg)?;
    let counted = piece_counts(&text);
    let n_specials = cfg.specials.len();

    let seed = seed_vocabulary(&counted, cfg.max_token_length, cfg.unigram.seed_multiplier * cfg.vocab_size);
    let n_chars = seed.iter().filter(|(_, _, required)| *required).count();
    if cfg.vocab_size < n_specials + n_chars {
        return Err(Error::VocabTooSmall {
            requested: cfg.vocab_size,
            minimum: n_specials + n_chars,
        });
    }
    let target = cfg.vocab_size - n_specials;

    let mut em = Em::new(&counted, seed, cfg.max_token_length);
    let mut rounds = 0usize;
    loop {
        for _ in 0..cfg.unigram.em_iterations {
            em.step();
        }
        if em.len() <= target {
            break;
        }
        let shrunk = ((em.len() as f64) * (1.0 - cfg.unigram.prune_fraction)).floor() as usize;
        em.prune(shrunk.max(target).min(em.len() - 1));
        rounds += 1;
    }
    let mut final_ll = em.log_likelihood();
    for _ in 0..cfg.unigram.em_iterations {
        final_ll = em.step();
    }

    let mut order: Vec<usize> = (0..em.len()).collect();
    order.sort_by(|&a, &b| {
        em.logp[b]
            .total_cmp(&em.logp[a])
            .then_with(|| em.pieces[a].cmp(&em.pieces[b]))
    });
    let mut vocab = Vocabulary::with_specials(&cfg.specials);
    let mut scores = Vec::with_capacity(order.len());
    for i in order {
        let (id, _) = vocab.insert(em.pieces[i].clone().into_bytes());
        scores.push((id, em.logp[i]));
    }

    let mut metadata = base_metadata(cfg, &text);
    metadata.insert("seed_multiplier".into(), cfg.unigram.seed_multiplier.to_string());
    metadata.insert("prune_fraction".into(), cfg.unigram.prune_fraction.to_string());
    metadata.insert("em_iterations".into(), cfg.unigram.em_iterations.to_string());
    metadata.insert("max_token_length".into(), cfg.max_token_length.to_string());
    metadata.insert("prune_rounds".into(), rounds.to_string());
    metadata.insert("train_log_likelihood".into(), format!("{final_ll:.6}"));
    Ok(TokenizerModel {
        family: Family::Unigram,
        vocab,
        merges: Vec::new(),
        scores,
        preprocessing: Preprocessing {
            nfkc: cfg.nfkc,
            ..Preprocessing::default()
        },
        byte_level: false,
        provenance: None,
        metadata,
    })
}

/// `(piece, initial weight, required)` triples: all characters (required)
/// followed by the selected substrings.
fn seed_vocabulary(words: &[(&str, u64)], max_chars: usize, cap: usize) -> Vec<(String, f64, bool)> {
    let mut chars: FxHashMap<char, u64> = FxHashMap::default();
    let mut subs: FxHashMap<&str, u64> = FxHashMap::default();
    let mut offsets = Vec::new();
    for &(w, c) in words {
        offsets.clear();
        offsets.extend(w.char_indices().map(|(i, _)| i));
        offsets.push(w.len());
        let n = offsets.len() - 1;
        for ch in w.chars() {
            *chars.entry(ch).or_default() += c;
        }
        for s in 0..n {
            for e in (s + 2)..=n.min(s + max_chars) {
                *subs.entry(&w[offsets[s]..offsets[e]]).or_default() += c;
            }
        }
    }
    let mut chars: Vec<(char, u64)> = chars.into_iter().collect();
    chars.sort_unstable();
    let mut ranked: Vec<(&str, u64, u64)> = subs
        .into_iter()
        .filter(|&(_, c)| c >= 2)
        .map(|(s, c)| (s, c, c * s.chars().count() as u64))
        .collect();
    ranked.sort_unstable_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(b.0)));
    ranked.truncate(cap);

    let mut seed: Vec<(String, f64, bool)> = chars
        .into_iter()
        .map(|(ch, c)| (ch.to_string(), c as f64, true))
        .collect();
    seed.extend(ranked.into_iter().map(|(s, _, score)| (s.to_owned(), score as f64, false)));
    let total: f64 = seed.iter().map(|s| s.1).sum();
    for s in &mut seed {
        s.1 = (s.1 / total).ln();
    }
    seed
}

/// Segmentation lattices of every distinct word under the current pieces.
struct Lattice {
    /// Edges of word `w` are `edges[starts[w]..starts[w + 1]]`, ordered by
    /// start position.
    starts: Vec<usize>,
    edges: Vec<(u32, u32, u32)>,
    lengths: Vec<u32>,
}

impl Lattice {
    fn build(words: &[(&str, u64)], pieces: &[String], max_chars: usize) -> Self {
        let index: FxHashMap<&str, u32> = pieces
            .iter()
            .enumerate()
            .map(|(i, p)| (p.as_str(), i as u32))
            .collect();
        let mut starts = Vec::with_capacity(words.len() + 1);
        let mut edges = Vec::new();
        let mut lengths = Vec::with_capacity(words.len());
        let mut offsets = Vec::new();
        for &(w, _) in words {
            starts.push(edges.len());
            offsets.clear();
            offsets.extend(w.char_indices().map(|(i, _)| i));
            offsets.push(w.len());
            let n = offsets.len() - 1;
            lengths.push(n as u32);
            for s in 0..n {
                for e in (s + 1)..=n.min(s + max_chars) {
                    if let Some(&p) = index.get(&w[offsets[s]..offsets[e]]) {
                        edges.push((s as u32, e as u32, p));
                    }
                }
            }
        }
        starts.push(edges.len());
        Lattice {
            starts,
            edges,
            lengths,
        }
    }

    fn word(&self, w: usize) -> &[(u32, u32, u32)] {
        &self.edges[self.starts[w]..self.starts[w + 1]]
    }
}

/// EM state over a fixed word list.
struct Em<'a> {
    words: &'a [(&'a str, u64)],
    pieces: Vec<String>,
    logp: Vec<f64>,
    required: Vec<bool>,
    max_chars: usize,
    lattice: Lattice,
}

impl<'a> Em<'a> {
    fn new(words: &'a [(&'a str, u64)], seed: Vec<(String, f64, bool)>, max_chars: usize) -> Self {
        let mut pieces = Vec::with_capacity(seed.len());
        let mut logp = Vec::with_capacity(seed.len());
        let mut required = Vec::with_capacity(seed.len());
        for (p, l, r) in seed {
            pieces.push(p);
            logp.push(l);
            required.push(r);
        }
        let lattice = Lattice::build(words, &pieces, max_chars);
        Em {
            words,
            pieces,
            logp,
            required,
            max_chars,
            lattice,
        }
    }

    fn len(&self) -> usize {
        self.pieces.len()
    }

    /// Forward and backward log-marginals of word `w`.
    fn forward_backward(&self, w: usize, alpha: &mut Vec<f64>, beta: &mut Vec<f64>) -> f64 {
        let n = self.lattice.lengths[w] as usize;
        let edges = self.lattice.word(w);
        alpha.clear();
        alpha.resize(n + 1, f64::NEG_INFINITY);
        beta.clear();
        beta.resize(n + 1, f64::NEG_INFINITY);
        alpha[0] = 0.0;
        for &(s, e, p) in edges {
            alpha[e as usize] = log_add(alpha[e as usize], alpha[s as usize] + self.logp[p as usize]);
        }
        beta[n] = 0.0;
        for &(s, e, p) in edges.iter().rev() {
            beta[s as usize] = log_add(beta[s as usize], beta[e as usize] + self.logp[p as usize]);
        }
        alpha[n]
    }

    /// Corpus log-likelihood (natural log) under the current parameters.
    fn log_likelihood(&self) -> f64 {
        let (mut alpha, mut beta) = (Vec::new(), Vec::new());
        (0..self.words.len())
            .map(|w| self.words[w].1 as f64 * self.forward_backward(w, &mut alpha, &mut beta))
            .sum()
    }

    /// One EM iteration. Returns the log-likelihood of the parameters in
    /// force before the update.
    fn step(&mut self) -> f64 {
        let mut expected = vec![0.0f64; self.len()];
        let mut ll = 0.0;
        let (mut alpha, mut beta) = (Vec::new(), Vec::new());
        for w in 0..self.words.len() {
            let weight = self.words[w].1 as f64;
            let z = self.forward_backward(w, &mut alpha, &mut beta);
            ll += weight * z;
            for &(s, e, p) in self.lattice.word(w) {
                let post = (alpha[s as usize] + self.logp[p as usize] + beta[e as usize] - z).exp();
                expected[p as usize] += weight * post;
            }
        }
        let keep: Vec<bool> = expected
            .iter()
            .zip(&self.required)
            .map(|(&c, &r)| r || c > 0.0)
            .collect();
        let total: f64 = expected.iter().sum();
        for (l, &c) in self.logp.iter_mut().zip(&expected) {
            *l = (c.max(f64::MIN_POSITIVE) / total).ln();
        }
        if keep.iter().any(|k| !k) {
            self.retain(&keep);
        }
        ll
    }

    fn retain(&mut self, keep: &[bool]) {
        let mut i = 0;
        self.pieces.retain(|_| {
            i += 1;
            keep[i - 1]
        });
        let mut i = 0;
        self.logp.retain(|_| {
            i += 1;
            keep[i - 1]
        });
        let mut i = 0;
        self.required.retain(|_| {
            i += 1;
            keep[i - 1]
        });
        self.lattice = Lattice::build(self.words, &self.pieces, self.max_chars);
    }

    /// Best segmentation path of word `w` as piece indices.
    fn viterbi(&self, w: usize, best: &mut Vec<f64>, back: &mut Vec<(u32, u32)>, out: &mut Vec<u32>) {
        let n = self.lattice.lengths[w] as usize;
        best.clear();
        best.resize(n + 1, f64::NEG_INFINITY);
        back.clear();
        back.resize(n + 1, (0, 0));
        best[0] = 0.0;
        for &(s, e, p) in self.lattice.word(w) {
            let cand = best[s as usize] + self.logp[p as usize];
            if cand > best[e as usize] {
                best[e as usize] = cand;
                back[e as usize] = (s, p);
            }
        }
        out.clear();
        let mut e = n;
        while e > 0 {
            let (s, p) = back[e];
            out.push(p);
            e = s as usize;
        }
    }

    /// Keeps `keep` pieces: every required piece plus the ones whose removal
    /// would lose the most likelihood, estimated by re-routing each piece's
    /// Viterbi frequency through its own best alternative segmentation.
    /// Pieces never used by a Viterbi path go first.
    fn prune(&mut self, keep: usize) {
        let mut freq = vec![0.0f64; self.len()];
        let mut word_share = vec![0.0f64; self.len()];
        let mut total_weight = 0.0;
        let (mut best, mut back, mut path) = (Vec::new(), Vec::new(), Vec::new());
        let mut seen_in_word: Vec<u32> = vec![u32::MAX; self.len()];
        for w in 0..self.words.len() {
            let weight = self.words[w].1 as f64;
            total_weight += weight;
            self.viterbi(w, &mut best, &mut back, &mut path);
            for &p in &path {
                freq[p as usize] += weight;
                if seen_in_word[p as usize] != w as u32 {
                    seen_in_word[p as usize] = w as u32;
                    word_share[p as usize] += weight;
                }
            }
        }
        let sum: f64 = freq.iter().sum();
        let logsum = sum.ln();
        let index: FxHashMap<&str, usize> = self
            .pieces
            .iter()
            .enumerate()
            .map(|(i, p)| (p.as_str(), i))
            .collect();

        let mut kept: Vec<bool> = self.required.clone();
        let mut n_kept = kept.iter().filter(|&&k| k).count();
        let mut candidates: Vec<(f64, usize)> = Vec::new();
        for i in 0..self.len() {
            if self.required[i] || freq[i] == 0.0 {
                continue;
            }
            let piece = self.pieces[i].as_str();
            let alternatives = viterbi_segment(
                piece,
                self.max_chars,
                |s| {
                    let j = *index.get(s)?;
                    (j != i).then(|| (j as TokenId, self.logp[j]))
                },
                (u32::MAX, f64::NEG_INFINITY),
            );
            let logprob_sp = freq[i].ln() - logsum;
            let logsum_alt = (sum + freq[i] * (alternatives.len() as f64 - 1.0)).ln();
            let logprob_alt: f64 = alternatives
                .iter()
                .map(|&(_, _, j)| (freq[j as usize] + freq[i]).ln() - logsum_alt)
                .sum();
            let share = word_share[i] / total_weight;
            candidates.push((share * (logprob_sp - logprob_alt), i));
        }
        candidates.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then_with(|| self.pieces[a.1].cmp(&self.pieces[b.1]))
        });
        for (_, i) in candidates {
            if n_kept >= keep {
                break;
            }
            kept[i] = true;
            n_kept += 1;
        }
        self.retain(&kept);
        // renormalize over the surviving pieces
        let total = self.logp.iter().fold(f64::NEG_INFINITY, |a, &b| log_add(a, b));
        for l in &mut self.logp {
            *l -= total;
        }
    }
}
