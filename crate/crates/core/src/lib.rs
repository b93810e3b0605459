//! Tokenizers viewed as structured compressors.
//!
//! The crate trains subword tokenizers from scratch (byte-level BPE, Unigram,
//! WordPiece, WordLevel), loads pretrained byte-level rank lists, and measures
//! what a tokenizer does to text: bytes per token, k-gram conditional
//! entropies of the token stream, capacity utilization of the K-ary token
//! channel, and how well the token stream compresses under gzip, zstd and
//! lzma. It also trains an LZ-aware BPE variant whose merges are chosen to
//! minimize the gzip-compressed size of a held-out validation stream.
//!
//! ```no_run
//! use tokenlens::corpus::{self, Format};
//! use tokenlens::trainers::{train, TrainConfig};
//! use tokenlens::tokenizer::Family;
//! use tokenlens::infometrics;
//!
//! # fn main() -> tokenlens::Result<()> {
//! let docs = corpus::load_documents("english.jsonl", Format::Jsonl)?
//!     .collect::<tokenlens::Result<Vec<_>>>()?;
//! let stream = corpus::stream_characters(docs, 2_000_000, "\n").normalized();
//! let split = &corpus::split_train_test(&stream, &[1_000_000], 1_000_000)?[0];
//! let model = train(split.train_prefix.text(), &TrainConfig::new(Family::Bpe, 16_000))?;
//! let tokens = model.tokenizer().encode(split.test_tail.text());
//! println!("H1 = {:.3} bits", infometrics::unigram_entropy(&tokens.ids)?);
//! # Ok(())
//! # }
//! ```

pub mod compress;
pub mod corpus;
pub mod error;
pub mod infometrics;
pub mod lzbpe;
pub mod lzpipe;
pub mod tokenizer;
pub mod trainers;

pub use compress::{Algorithm, Compressor};
pub use corpus::{CharStream, CorpusSplit, Document};
pub use error::{Error, Result};
pub use infometrics::{Estimator, MetricsReport};
pub use tokenizer::{Family, TokenId, TokenStream, Tokenizer, TokenizerModel, Vocabulary};
pub use trainers::TrainConfig;
