//! Shared tokenizer runtime: vocabulary, models, preprocessing and
//! encode/decode for every family.

mod bpe;
mod model_file;
mod pretokenize;
mod unigram;
mod wordlevel;
mod wordpiece;

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

pub use bpe::merge_word;
pub use model_file::{load_model, load_rank_list_model, parse_rank_list, save_model, FORMAT_VERSION};
pub use pretokenize::{pretokenize, words, Pieces};
pub use unigram::viterbi_segment;
pub use wordpiece::CONTINUATION_PREFIX;

pub type TokenId = u32;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";

/// Special tokens shared by every trained family, at ids 0..4.
pub const SPECIALS: [&str; 4] = [PAD, UNK, BOS, EOS];
pub const UNK_ID: TokenId = 1;

/// NFKC normalization.
pub fn normalize(text: &str) -> String {
    if text.is_ascii() {
        return text.to_owned();
    }
    text.nfkc().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "bpe")]
    Bpe,
    #[serde(rename = "unigram")]
    Unigram,
    #[serde(rename = "wordpiece")]
    WordPiece,
    #[serde(rename = "wordlevel")]
    WordLevel,
    #[serde(rename = "external-ranklist")]
    ExternalRankList,
}

impl Family {
    pub const TRAINABLE: [Family; 4] = [
        Family::Bpe,
        Family::Unigram,
        Family::WordPiece,
        Family::WordLevel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Bpe => "bpe",
            Family::Unigram => "unigram",
            Family::WordPiece => "wordpiece",
            Family::WordLevel => "wordlevel",
            Family::ExternalRankList => "external-ranklist",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bpe" => Ok(Family::Bpe),
            "unigram" => Ok(Family::Unigram),
            "wordpiece" => Ok(Family::WordPiece),
            "wordlevel" => Ok(Family::WordLevel),
            "external-ranklist" => Ok(Family::ExternalRankList),
            other => Err(Error::UnknownFamily(other.to_owned())),
        }
    }
}

/// Token strings (or raw bytes for byte-level models) indexed by dense id.
///
/// Special tokens take the lowest ids and live outside the content index, so
/// a learned byte sequence spelling `<pad>` never collides with the special.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<Vec<u8>>,
    index: FxHashMap<Vec<u8>, TokenId>,
    specials: Vec<String>,
}

impl Vocabulary {
    pub fn with_specials<S: AsRef<str>>(specials: &[S]) -> Self {
        let mut v = Vocabulary::default();
        for s in specials {
            v.tokens.push(s.as_ref().as_bytes().to_vec());
            v.specials.push(s.as_ref().to_owned());
        }
        v
    }

    /// Builds a vocabulary whose first `specials.len()` entries are the
    /// specials, failing on duplicate content tokens.
    pub fn from_tokens(tokens: Vec<Vec<u8>>, specials: Vec<String>) -> Result<Self> {
        if tokens.len() < specials.len() {
            return Err(Error::InvalidModel("vocabulary shorter than special list".into()));
        }
        for (i, s) in specials.iter().enumerate() {
            if tokens[i] != s.as_bytes() {
                return Err(Error::InvalidModel(format!(
                    "special `{s}` must have id {i}"
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        if !specials.iter().all(|s| seen.insert(s)) {
            return Err(Error::InvalidModel("duplicate special token".into()));
        }
        let mut v = Vocabulary {
            tokens: Vec::with_capacity(tokens.len()),
            index: FxHashMap::default(),
            specials,
        };
        for (id, tok) in tokens.into_iter().enumerate() {
            if id >= v.specials.len() && v.index.insert(tok.clone(), id as TokenId).is_some() {
                return Err(Error::InvalidModel(format!(
                    "duplicate token entry {:?} (id {id})",
                    String::from_utf8_lossy(&tok)
                )));
            }
            v.tokens.push(tok);
        }
        Ok(v)
    }

    /// Returns the id of `token`, appending it if new. The flag reports
    /// whether the vocabulary grew.
    pub fn insert(&mut self, token: Vec<u8>) -> (TokenId, bool) {
        if let Some(&id) = self.index.get(&token) {
            return (id, false);
        }
        let id = self.tokens.len() as TokenId;
        self.index.insert(token.clone(), id);
        self.tokens.push(token);
        (id, true)
    }

    pub fn get(&self, token: &[u8]) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn get_str(&self, token: &str) -> Option<TokenId> {
        self.get(token.as_bytes())
    }

    pub fn token(&self, id: TokenId) -> Option<&[u8]> {
        self.tokens.get(id as usize).map(Vec::as_slice)
    }

    pub fn token_lossy(&self, id: TokenId) -> Cow<'_, str> {
        self.token(id)
            .map(String::from_utf8_lossy)
            .unwrap_or(Cow::Borrowed("<?>"))
    }

    pub fn special_id(&self, name: &str) -> Option<TokenId> {
        self.specials
            .iter()
            .position(|s| s == name)
            .map(|i| i as TokenId)
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        (id as usize) < self.specials.len()
    }

    pub fn specials(&self) -> &[String] {
        &self.specials
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// `(id, bytes)` pairs in id order.
    pub fn iter(&self) -> impl Iterator<Item = (TokenId, &[u8])> {
        self.tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (i as TokenId, t.as_slice()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub nfkc: bool,
    pub pretokenizer: String,
}

impl Default for Preprocessing {
    fn default() -> Self {
        Preprocessing {
            nfkc: true,
            pretokenizer: "whitespace".into(),
        }
    }
}

/// A trained (or loaded) tokenizer.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizerModel {
    pub family: Family,
    pub vocab: Vocabulary,
    /// Ordered merge rules of BPE models; merge `i` produces the token whose
    /// bytes are the concatenation of its operands.
    pub merges: Vec<(TokenId, TokenId)>,
    /// Unigram log-probabilities (natural log), sorted by id.
    pub scores: Vec<(TokenId, f64)>,
    pub preprocessing: Preprocessing,
    pub byte_level: bool,
    pub provenance: Option<String>,
    pub metadata: BTreeMap<String, String>,
}

impl TokenizerModel {
    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Compiles the model into an encoder/decoder.
    pub fn tokenizer(&self) -> Tokenizer<'_> {
        Tokenizer::new(self)
    }

    /// Byte-level BPE model with no merges: every byte is one token.
    pub fn byte_identity() -> TokenizerModel {
        let mut vocab = Vocabulary::with_specials(&SPECIALS);
        for b in 0..=255u8 {
            vocab.insert(vec![b]);
        }
        TokenizerModel {
            family: Family::Bpe,
            vocab,
            merges: Vec::new(),
            scores: Vec::new(),
            preprocessing: Preprocessing {
                nfkc: false,
                ..Preprocessing::default()
            },
            byte_level: true,
            provenance: None,
            metadata: BTreeMap::new(),
        }
    }

    /// Token id of each single byte in a byte-level model.
    pub(crate) fn byte_ids(&self) -> Result<[TokenId; 256]> {
        let mut ids = [0; 256];
        for b in 0..=255u8 {
            ids[b as usize] = self.vocab.get(&[b]).ok_or_else(|| {
                Error::InvalidModel(format!("byte-level vocabulary lacks byte 0x{b:02x}"))
            })?;
        }
        Ok(ids)
    }

    /// Checks the structural invariants every model must satisfy.
    pub fn validate(&self) -> Result<()> {
        match self.family {
            Family::Bpe => {
                if !self.byte_level {
                    return Err(Error::InvalidModel("bpe models are byte-level".into()));
                }
                let mut known = vec![false; self.vocab.len()];
                for (i, _) in self.vocab.iter().take(self.vocab.specials().len()) {
                    known[i as usize] = true;
                }
                for id in self.byte_ids()? {
                    known[id as usize] = true;
                }
                for (step, &(l, r)) in self.merges.iter().enumerate() {
                    let defined = |id: TokenId| known.get(id as usize).copied().unwrap_or(false);
                    if !defined(l) || !defined(r) {
                        return Err(Error::InvalidModel(format!(
                            "merge {step} ({l}, {r}) references a token not yet defined"
                        )));
                    }
                    let mut joined = self.vocab.token(l).unwrap_or_default().to_vec();
                    joined.extend_from_slice(self.vocab.token(r).unwrap_or_default());
                    let out = self.vocab.get(&joined).ok_or_else(|| {
                        Error::InvalidModel(format!("merge {step} result missing from vocabulary"))
                    })?;
                    known[out as usize] = true;
                }
            }
            Family::ExternalRankList => {
                self.byte_ids()?;
            }
            Family::Unigram => {
                let mut log_total = f64::NEG_INFINITY;
                for &(id, s) in &self.scores {
                    if !s.is_finite() {
                        return Err(Error::InvalidModel(format!("non-finite score for id {id}")));
                    }
                    if id as usize >= self.vocab.len() {
                        return Err(Error::InvalidModel(format!("score for unknown id {id}")));
                    }
                    log_total = log_add(log_total, s);
                }
                if log_total > 1e-9 {
                    return Err(Error::InvalidModel(format!(
                        "unigram probabilities sum to {:.6} > 1",
                        log_total.exp()
                    )));
                }
            }
            Family::WordPiece | Family::WordLevel => {}
        }
        if !self.byte_level && self.vocab.special_id(UNK).is_none() {
            return Err(Error::InvalidModel(format!(
                "{} model without {UNK}",
                self.family
            )));
        }
        Ok(())
    }
}

pub(crate) fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Token ids produced from one text, with the size of that text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStream {
    pub ids: Vec<TokenId>,
    pub source_chars: usize,
    pub source_bytes: usize,
}

impl TokenStream {
    pub fn from_ids(ids: Vec<TokenId>) -> Self {
        TokenStream {
            ids,
            source_chars: 0,
            source_bytes: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Token ids with the pre-token each one belongs to. `piece_start[i]` is
/// true when token `i` opens a new pre-token; pairs never straddle one.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PieceStream {
    pub ids: Vec<TokenId>,
    pub piece_start: Vec<bool>,
}

impl PieceStream {
    /// A stream forming a single pre-token.
    pub fn single_piece(ids: Vec<TokenId>) -> Self {
        let mut piece_start = vec![false; ids.len()];
        if let Some(first) = piece_start.first_mut() {
            *first = true;
        }
        PieceStream { ids, piece_start }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Iterates over the pre-tokens as id slices.
    pub fn pieces(&self) -> impl Iterator<Item = &[TokenId]> + '_ {
        let mut start = 0;
        let n = self.ids.len();
        std::iter::from_fn(move || {
            if start >= n {
                return None;
            }
            let mut end = start + 1;
            while end < n && !self.piece_start[end] {
                end += 1;
            }
            let piece = &self.ids[start..end];
            start = end;
            Some(piece)
        })
    }
}

enum Engine {
    Bpe(Box<bpe::MergeEncoder>),
    RankList(bpe::RankEncoder),
    Unigram(unigram::UnigramEncoder),
    WordPiece(wordpiece::WordPieceEncoder),
    WordLevel(wordlevel::WordLevelEncoder),
}

/// A model compiled for encoding and decoding. Pure: identical inputs give
/// identical outputs, and it can be shared across threads.
pub struct Tokenizer<'m> {
    model: &'m TokenizerModel,
    engine: Engine,
}

impl<'m> Tokenizer<'m> {
    pub fn new(model: &'m TokenizerModel) -> Self {
        let engine = match model.family {
            Family::Bpe => Engine::Bpe(Box::new(bpe::MergeEncoder::new(model))),
            Family::ExternalRankList => Engine::RankList(bpe::RankEncoder::new(model)),
            Family::Unigram => Engine::Unigram(unigram::UnigramEncoder::new(model)),
            Family::WordPiece => Engine::WordPiece(wordpiece::WordPieceEncoder::new(model)),
            Family::WordLevel => Engine::WordLevel(wordlevel::WordLevelEncoder::new(model)),
        };
        Tokenizer { model, engine }
    }

    pub fn model(&self) -> &TokenizerModel {
        self.model
    }

    fn prepare<'t>(&self, text: &'t str) -> Cow<'t, str> {
        if self.model.preprocessing.nfkc && !self.model.byte_level {
            Cow::Owned(normalize(text))
        } else {
            Cow::Borrowed(text)
        }
    }

    fn encode_piece(&self, piece: &str, out: &mut Vec<TokenId>) {
        match &self.engine {
            Engine::Bpe(e) => e.encode_piece(piece.as_bytes(), out),
            Engine::RankList(e) => e.encode_piece(piece.as_bytes(), out),
            Engine::Unigram(e) => e.encode_piece(piece, out),
            Engine::WordPiece(e) => e.encode_piece(piece, out),
            Engine::WordLevel(e) => e.encode_piece(piece, out),
        }
    }

    fn for_each_piece<'t>(&self, text: &'t str, mut emit: impl FnMut(&[TokenId])) {
        let mut cache: FxHashMap<&'t str, Vec<TokenId>> = FxHashMap::default();
        for piece in Pieces::new(text) {
            let ids = cache.entry(piece).or_insert_with(|| {
                let mut v = Vec::new();
                self.encode_piece(piece, &mut v);
                v
            });
            emit(ids);
        }
    }

    /// Encodes `text`. Byte-level models never normalize, which keeps
    /// `decode(encode(x)) == x` exact; the other families apply NFKC when
    /// the model asks for it.
    pub fn encode(&self, text: &str) -> TokenStream {
        let text = self.prepare(text);
        let mut ids = Vec::with_capacity(text.len() / 3);
        self.for_each_piece(&text, |p| ids.extend_from_slice(p));
        TokenStream {
            ids,
            source_chars: text.chars().count(),
            source_bytes: text.len(),
        }
    }

    /// Encodes `text` keeping pre-token boundaries.
    pub fn encode_pieces(&self, text: &str) -> PieceStream {
        let text = self.prepare(text);
        let mut out = PieceStream::default();
        self.for_each_piece(&text, |p| {
            if p.is_empty() {
                return;
            }
            out.piece_start.push(true);
            out.piece_start.extend(std::iter::repeat_n(false, p.len() - 1));
            out.ids.extend_from_slice(p);
        });
        out
    }

    /// Number of tokens `text` encodes to.
    pub fn count_tokens(&self, text: &str) -> usize {
        let text = self.prepare(text);
        let mut n = 0;
        self.for_each_piece(&text, |p| n += p.len());
        n
    }

    pub fn decode(&self, ids: &[TokenId]) -> Result<String> {
        let vocab = &self.model.vocab;
        for &id in ids {
            if id as usize >= vocab.len() {
                return Err(Error::IdOutOfRange {
                    id,
                    vocab_size: vocab.len(),
                });
            }
        }
        let text = match self.model.family {
            Family::Bpe | Family::ExternalRankList | Family::Unigram => {
                let mut bytes = Vec::with_capacity(ids.len() * 4);
                for &id in ids {
                    bytes.extend_from_slice(vocab.token(id).unwrap_or_default());
                }
                match String::from_utf8(bytes) {
                    Ok(s) => s,
                    Err(e) => String::from_utf8_lossy(e.as_bytes()).into_owned(),
                }
            }
            Family::WordPiece => wordpiece::decode(vocab, ids),
            Family::WordLevel => wordlevel::decode(vocab, ids),
        };
        Ok(text)
    }
}
