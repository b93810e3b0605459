//! Information-theoretic measurements of token streams.
//!
//! All entropies are in bits. Conditional k-gram entropies come in two
//! estimators: the standard plug-in conditional entropy and the literal
//! bracketed form `-(1/N) Σ p̂ log p̂` summed over positions.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::compress::Compressor;
use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::tokenizer::{TokenId, TokenStream, TokenizerModel};

pub const SCHEMA_VERSION: u32 = 1;

/// Longest k-gram order supported by the packed table keys.
pub const MAX_K: usize = 5;

const KEY_BITS: u32 = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Estimator {
    /// `(1/N) Σ_i -log2 p̂(t_i | ctx_i)`.
    #[default]
    #[serde(rename = "plugin")]
    Plugin,
    /// `(1/N) Σ_i -p̂(t_i | ctx_i) log2 p̂(t_i | ctx_i)`.
    #[serde(rename = "as-written")]
    AsWritten,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Plugin => "plugin",
            Estimator::AsWritten => "as-written",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plugin" => Ok(Estimator::Plugin),
            "as-written" | "aswritten" => Ok(Estimator::AsWritten),
            other => Err(Error::InvalidArgument(format!("unknown estimator `{other}`"))),
        }
    }
}

/// How positions without a full `k-1` token history are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum ContextBoundary {
    /// Every position is predicted; the first `k-1` positions use the
    /// shorter history available, marked by start padding. Averages over `n`
    /// positions. With this choice the plug-in estimate never increases
    /// with `k` on any stream.
    #[default]
    #[serde(rename = "padded")]
    Padded,
    /// Positions before the `k`-th are skipped; averages over `n-k+1`.
    #[serde(rename = "drop")]
    Drop,
}

impl ContextBoundary {
    pub fn name(self) -> &'static str {
        match self {
            ContextBoundary::Padded => "padded",
            ContextBoundary::Drop => "drop",
        }
    }
}

impl fmt::Display for ContextBoundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ContextBoundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "padded" => Ok(ContextBoundary::Padded),
            "drop" => Ok(ContextBoundary::Drop),
            other => Err(Error::InvalidArgument(format!("unknown context boundary `{other}`"))),
        }
    }
}

/// Token frequencies of a stream.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EmpiricalDistribution {
    counts: FxHashMap<TokenId, u64>,
    total: u64,
}

impl EmpiricalDistribution {
    pub fn from_ids(ids: &[TokenId]) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::Empty("token stream"));
        }
        let mut counts: FxHashMap<TokenId, u64> = FxHashMap::default();
        for &id in ids {
            *counts.entry(id).or_default() += 1;
        }
        Ok(EmpiricalDistribution {
            counts,
            total: ids.len() as u64,
        })
    }

    /// Builds a distribution from explicit counts; zero counts are dropped.
    pub fn from_counts(counts: impl IntoIterator<Item = (TokenId, u64)>) -> Result<Self> {
        let mut map: FxHashMap<TokenId, u64> = FxHashMap::default();
        for (id, c) in counts {
            if c > 0 {
                *map.entry(id).or_default() += c;
            }
        }
        let total = map.values().sum();
        if total == 0 {
            return Err(Error::Empty("distribution"));
        }
        Ok(EmpiricalDistribution { counts: map, total })
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn support_size(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, id: TokenId) -> u64 {
        self.counts.get(&id).copied().unwrap_or(0)
    }

    /// Counts in id order.
    pub fn sorted_counts(&self) -> Vec<(TokenId, u64)> {
        let mut v: Vec<_> = self.counts.iter().map(|(&k, &c)| (k, c)).collect();
        v.sort_unstable();
        v
    }

    fn probabilities(&self) -> impl Iterator<Item = f64> + '_ {
        let total = self.total as f64;
        self.sorted_counts().into_iter().map(move |(_, c)| c as f64 / total)
    }
}

/// Shannon entropy of a distribution.
pub fn shannon(dist: &EmpiricalDistribution) -> f64 {
    let h: f64 = dist.probabilities().map(|p| -p * p.log2()).sum();
    h.max(0.0)
}

/// Rényi entropy of order `alpha` (`alpha > 0`, `alpha != 1`).
pub fn renyi_entropy(dist: &EmpiricalDistribution, alpha: f64) -> Result<f64> {
    if !alpha.is_finite() || alpha <= 0.0 || alpha == 1.0 {
        return Err(Error::InvalidArgument(format!(
            "Rényi order must be positive, finite and not 1 (got {alpha})"
        )));
    }
    let s: f64 = dist.probabilities().map(|p| p.powf(alpha)).sum();
    Ok((s.log2() / (1.0 - alpha)).max(0.0))
}

/// Plug-in unigram entropy `H_1` of a token stream.
pub fn unigram_entropy(ids: &[TokenId]) -> Result<f64> {
    Ok(shannon(&EmpiricalDistribution::from_ids(ids)?))
}

/// Counts of k-grams and their (k-1)-token contexts.
///
/// Keys pack each token as `id + 1` into 25 bits, so 0 marks start padding
/// and ids up to 2^25 - 2 are supported.
#[derive(Debug, Clone)]
pub struct KGramTable {
    k: usize,
    boundary: ContextBoundary,
    positions: u64,
    context_counts: FxHashMap<u128, u64>,
    joint_counts: FxHashMap<u128, u64>,
}

impl KGramTable {
    pub fn build(ids: &[TokenId], k: usize, boundary: ContextBoundary) -> Result<Self> {
        if k == 0 || k > MAX_K {
            return Err(Error::InvalidArgument(format!("k must be in 1..={MAX_K} (got {k})")));
        }
        if ids.len() < k {
            return Err(Error::InvalidArgument(format!(
                "stream of {} tokens is shorter than k = {k}",
                ids.len()
            )));
        }
        let limit = (1u64 << KEY_BITS) - 1;
        let mask: u128 = if k as u32 * KEY_BITS >= 128 {
            u128::MAX
        } else {
            (1u128 << (k as u32 * KEY_BITS)) - 1
        };
        let skip = match boundary {
            ContextBoundary::Padded => 0,
            ContextBoundary::Drop => k - 1,
        };
        let mut context_counts: FxHashMap<u128, u64> = FxHashMap::default();
        let mut joint_counts: FxHashMap<u128, u64> = FxHashMap::default();
        let mut key: u128 = 0;
        for (i, &id) in ids.iter().enumerate() {
            if u64::from(id) >= limit {
                return Err(Error::IdOverflow {
                    id,
                    position: i,
                    width: KEY_BITS,
                });
            }
            key = ((key << KEY_BITS) | u128::from(id + 1)) & mask;
            if i >= skip {
                *joint_counts.entry(key).or_default() += 1;
                *context_counts.entry(key >> KEY_BITS).or_default() += 1;
            }
        }
        Ok(KGramTable {
            k,
            boundary,
            positions: (ids.len() - skip) as u64,
            context_counts,
            joint_counts,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn boundary(&self) -> ContextBoundary {
        self.boundary
    }

    /// Number of predicted positions N.
    pub fn positions(&self) -> u64 {
        self.positions
    }

    pub fn distinct_contexts(&self) -> usize {
        self.context_counts.len()
    }

    pub fn distinct_kgrams(&self) -> usize {
        self.joint_counts.len()
    }

    pub fn entropy(&self, estimator: Estimator) -> f64 {
        let n = self.positions as f64;
        let mut joint: Vec<(u128, u64)> = self.joint_counts.iter().map(|(&k, &c)| (k, c)).collect();
        joint.sort_unstable();
        let mut sum = 0.0;
        for (key, c) in joint {
            let ctx = self.context_counts[&(key >> KEY_BITS)];
            let p = c as f64 / ctx as f64;
            let surprisal = -p.log2();
            sum += c as f64
                * match estimator {
                    Estimator::Plugin => surprisal,
                    Estimator::AsWritten => p * surprisal,
                };
        }
        (sum / n).max(0.0)
    }
}

/// Empirical conditional entropy of order `k` with padded start contexts.
pub fn kgram_entropy(ids: &[TokenId], k: usize, estimator: Estimator) -> Result<f64> {
    kgram_entropy_with(ids, k, estimator, ContextBoundary::Padded)
}

pub fn kgram_entropy_with(
    ids: &[TokenId],
    k: usize,
    estimator: Estimator,
    boundary: ContextBoundary,
) -> Result<f64> {
    Ok(KGramTable::build(ids, k, boundary)?.entropy(estimator))
}

/// Entropy per character: bits/token times tokens/char.
pub fn entropy_rate(h_bits_per_token: f64, tokens_per_char: f64) -> f64 {
    h_bits_per_token * tokens_per_char
}

/// `h / log2 K`: the fraction of the K-ary channel capacity used.
pub fn capacity_utilization(h: f64, vocab_size: usize) -> Result<f64> {
    if vocab_size < 2 {
        return Err(Error::InvalidArgument(format!(
            "capacity utilization needs K >= 2 (got {vocab_size})"
        )));
    }
    if h < 0.0 {
        return Err(Error::InvalidArgument(format!("negative entropy {h}")));
    }
    Ok(h / (vocab_size as f64).log2())
}

/// Bytes and characters of a corpus and the token count `model` gives it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CorpusCounts {
    pub bytes: u64,
    pub chars: u64,
    pub tokens: u64,
}

impl CorpusCounts {
    pub fn measure(model: &TokenizerModel, corpus: &[Document]) -> Self {
        let tokenizer = model.tokenizer();
        let mut out = CorpusCounts::default();
        for doc in corpus {
            out.bytes += doc.text.len() as u64;
            out.chars += doc.text.chars().count() as u64;
            out.tokens += tokenizer.count_tokens(&doc.text) as u64;
        }
        out
    }

    pub fn of_stream(stream: &TokenStream) -> Self {
        CorpusCounts {
            bytes: stream.source_bytes as u64,
            chars: stream.source_chars as u64,
            tokens: stream.ids.len() as u64,
        }
    }

    /// UTF-8 bytes per token.
    pub fn compression_ratio(&self) -> Result<f64> {
        if self.tokens == 0 {
            return Err(Error::Undefined("compression ratio of an empty token stream"));
        }
        Ok(self.bytes as f64 / self.tokens as f64)
    }

    pub fn tokens_per_char(&self) -> Result<f64> {
        if self.chars == 0 {
            return Err(Error::Undefined("tokens per character of an empty corpus"));
        }
        Ok(self.tokens as f64 / self.chars as f64)
    }
}

/// Corpus-level bytes per token: `Σ|x|_UTF-8 / Σ|T(x)|`.
pub fn compression_ratio(model: &TokenizerModel, corpus: &[Document]) -> Result<f64> {
    CorpusCounts::measure(model, corpus).compression_ratio()
}

pub fn tokens_per_char(model: &TokenizerModel, corpus: &[Document]) -> Result<f64> {
    CorpusCounts::measure(model, corpus).tokens_per_char()
}

/// Compressed bits per character of the raw UTF-8 text.
pub fn intrinsic_compressibility(text: &str, compressor: &Compressor) -> Result<f64> {
    let chars = text.chars().count();
    if chars == 0 {
        return Err(Error::Empty("text"));
    }
    Ok(8.0 * compressor.compressed_len(text.as_bytes())? as f64 / chars as f64)
}

/// Pearson's r.
pub fn pearson_correlation(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::InvalidArgument("need at least two points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("correlation with a constant series"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Per-document intrinsic bpc against tokens/char, and their correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentCorrelation {
    pub documents: usize,
    pub bpc: Vec<f64>,
    pub tokens_per_char: Vec<f64>,
    pub r: f64,
}

/// Correlates intrinsic compressibility with tokenizer efficiency across
/// documents. Empty documents are skipped.
pub fn document_correlation(
    model: &TokenizerModel,
    docs: &[Document],
    compressor: &Compressor,
) -> Result<DocumentCorrelation> {
    let tokenizer = model.tokenizer();
    let mut bpc = Vec::with_capacity(docs.len());
    let mut tpc = Vec::with_capacity(docs.len());
    for doc in docs {
        let chars = doc.text.chars().count();
        if chars == 0 {
            continue;
        }
        bpc.push(intrinsic_compressibility(&doc.text, compressor)?);
        tpc.push(tokenizer.count_tokens(&doc.text) as f64 / chars as f64);
    }
    let r = pearson_correlation(&bpc, &tpc)?;
    Ok(DocumentCorrelation {
        documents: bpc.len(),
        bpc,
        tokens_per_char: tpc,
        r,
    })
}

/// Asymptotic per-symbol redundancy `(K-1)/(2n) log2 n` of universal coding
/// over K-symbol i.i.d. sources from n samples.
pub fn redundancy_bound(vocab_size: usize, n: u64) -> Result<f64> {
    if vocab_size == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("n must be at least 2 (got {n})")));
    }
    Ok((vocab_size as f64 - 1.0) / (2.0 * n as f64) * (n as f64).log2())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisOptions {
    pub max_k: usize,
    pub estimator: Estimator,
    pub boundary: ContextBoundary,
    pub alpha: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            max_k: MAX_K,
            estimator: Estimator::Plugin,
            boundary: ContextBoundary::Padded,
            alpha: 2.0,
        }
    }
}

/// One (tokenizer, corpus) measurement row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub domain: String,
    pub test_domain: String,
    pub family: String,
    /// Configured vocabulary size K, the denominator of η.
    pub vocab_size: usize,
    pub model_vocab_size: usize,
    pub train_chars: usize,
    pub test_chars: usize,
    pub test_bytes: usize,
    pub n_tokens: usize,
    pub estimator: Estimator,
    pub boundary: ContextBoundary,
    pub cr: f64,
    pub tokens_per_char: f64,
    /// `H_1 ..= H_max_k` in bits/token.
    pub h: Vec<f64>,
    /// `H_k` times tokens/char.
    pub h_rates: Vec<f64>,
    pub eta: f64,
    pub alpha: f64,
    pub eta_alpha: f64,
    /// Compressed bits/char keyed by pipeline, e.g. `token-gzip-6`.
    pub bpc: BTreeMap<String, f64>,
    pub meta: BTreeMap<String, String>,
}

impl MetricsReport {
    /// Computes the stream-level metrics. `vocab_size` is the nominal K.
    pub fn from_stream(stream: &TokenStream, vocab_size: usize, opts: &AnalysisOptions) -> Result<Self> {
        let counts = CorpusCounts::of_stream(stream);
        let tpc = counts.tokens_per_char()?;
        let cr = counts.compression_ratio()?;
        let dist = EmpiricalDistribution::from_ids(&stream.ids)?;
        let h1 = shannon(&dist);
        let mut h = vec![h1];
        for k in 2..=opts.max_k.min(MAX_K) {
            if stream.ids.len() < k {
                break;
            }
            h.push(kgram_entropy_with(&stream.ids, k, opts.estimator, opts.boundary)?);
        }
        let h_rates = h.iter().map(|&x| entropy_rate(x, tpc)).collect();
        let h_alpha = renyi_entropy(&dist, opts.alpha)?;
        Ok(MetricsReport {
            schema_version: SCHEMA_VERSION,
            domain: String::new(),
            test_domain: String::new(),
            family: String::new(),
            vocab_size,
            model_vocab_size: 0,
            train_chars: 0,
            test_chars: stream.source_chars,
            test_bytes: stream.source_bytes,
            n_tokens: stream.ids.len(),
            estimator: opts.estimator,
            boundary: opts.boundary,
            cr,
            tokens_per_char: tpc,
            h,
            h_rates,
            eta: capacity_utilization(h1, vocab_size)?,
            alpha: opts.alpha,
            eta_alpha: capacity_utilization(h_alpha, vocab_size)?,
            bpc: BTreeMap::new(),
            meta: BTreeMap::new(),
        })
    }

    /// Flat `(column, value)` pairs in a stable order, shared by the CSV and
    /// JSON writers.
    pub fn fields(&self) -> Vec<(String, serde_json::Value)> {
        use serde_json::json;
        let mut f: Vec<(String, serde_json::Value)> = vec![
            ("schema_version".into(), json!(self.schema_version)),
            ("domain".into(), json!(self.domain)),
            ("test_domain".into(), json!(self.test_domain)),
            ("family".into(), json!(self.family)),
            ("vocab_size".into(), json!(self.vocab_size)),
            ("model_vocab_size".into(), json!(self.model_vocab_size)),
            ("train_chars".into(), json!(self.train_chars)),
            ("test_chars".into(), json!(self.test_chars)),
            ("test_bytes".into(), json!(self.test_bytes)),
            ("n_tokens".into(), json!(self.n_tokens)),
            ("estimator".into(), json!(self.estimator.name())),
            ("boundary".into(), json!(self.boundary.name())),
            ("cr".into(), json!(self.cr)),
            ("tokens_per_char".into(), json!(self.tokens_per_char)),
        ];
        for (i, v) in self.h.iter().enumerate() {
            f.push((format!("h{}", i + 1), json!(v)));
        }
        for (i, v) in self.h_rates.iter().enumerate() {
            f.push((format!("h{}_rate", i + 1), json!(v)));
        }
        f.push(("eta".into(), json!(self.eta)));
        f.push(("alpha".into(), json!(self.alpha)));
        f.push(("eta_alpha".into(), json!(self.eta_alpha)));
        for (k, v) in &self.bpc {
            f.push((format!("bpc_{k}"), json!(v)));
        }
        for (k, v) in &self.meta {
            f.push((k.clone(), json!(v)));
        }
        f
    }

    /// The numeric metrics as `(name, value)` pairs, for long-format output.
    pub fn metrics(&self) -> Vec<(String, f64)> {
        let mut m = vec![
            ("cr".to_owned(), self.cr),
            ("tokens_per_char".to_owned(), self.tokens_per_char),
        ];
        for (i, v) in self.h.iter().enumerate() {
            m.push((format!("h{}", i + 1), *v));
        }
        for (i, v) in self.h_rates.iter().enumerate() {
            m.push((format!("h{}_rate", i + 1), *v));
        }
        m.push(("eta".into(), self.eta));
        m.push(("eta_alpha".into(), self.eta_alpha));
        for (k, v) in &self.bpc {
            m.push((format!("bpc_{k}"), *v));
        }
        m
    }
}
