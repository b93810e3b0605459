//! Document ingestion, character streaming and train/test splitting.
//!
//! A domain is read as a sequence of documents, concatenated into one
//! character stream, and split so that every training prefix is evaluated on
//! the same held-out tail taken from the end of the stream.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tokenizer::normalize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    /// The whole file is one document.
    Plain,
    /// One JSON object per line with a string field `text`.
    Jsonl,
}

impl Format {
    /// `.jsonl` (optionally followed by `.gz`, `.xz` or `.zst`) is JSONL,
    /// everything else plain text.
    pub fn from_path(path: &Path) -> Format {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().to_ascii_lowercase())
            .unwrap_or_default();
        let stem = strip_compression_suffix(&name);
        if stem.ends_with(".jsonl") || stem.ends_with(".ndjson") {
            Format::Jsonl
        } else {
            Format::Plain
        }
    }
}

fn strip_compression_suffix(name: &str) -> &str {
    [".gz", ".xz", ".zst"]
        .iter()
        .find_map(|s| name.strip_suffix(s))
        .unwrap_or(name)
}

fn open_maybe_compressed(path: &Path) -> Result<Box<dyn Read>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path.to_string_lossy().to_ascii_lowercase();
    let reader: Box<dyn Read> = if name.ends_with(".gz") {
        Box::new(flate2::read::MultiGzDecoder::new(file))
    } else if name.ends_with(".xz") {
        Box::new(xz2::read::XzDecoder::new_multi_decoder(file))
    } else if name.ends_with(".zst") {
        Box::new(zstd::stream::read::Decoder::new(file).map_err(|e| Error::io(path, e))?)
    } else {
        Box::new(file)
    };
    Ok(reader)
}

/// Iterator over the documents of one file, in file order.
///
/// Malformed JSONL lines yield an `Err` naming the line and iteration
/// continues; documents that are not valid UTF-8 are dropped and tallied.
pub struct Documents {
    path: PathBuf,
    format: Format,
    reader: Option<BufReader<Box<dyn Read>>>,
    line: usize,
    skipped_invalid_utf8: usize,
}

impl Documents {
    pub fn skipped_invalid_utf8(&self) -> usize {
        self.skipped_invalid_utf8
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn next_plain(&mut self) -> Option<Result<Document>> {
        let mut reader = self.reader.take()?;
        let mut bytes = Vec::new();
        if let Err(e) = reader.read_to_end(&mut bytes) {
            return Some(Err(Error::io(&self.path, e)));
        }
        if bytes.is_empty() {
            return None;
        }
        match String::from_utf8(bytes) {
            Ok(text) => Some(Ok(Document {
                id: self.path.display().to_string(),
                text,
            })),
            Err(_) => {
                self.skipped_invalid_utf8 += 1;
                None
            }
        }
    }

    fn next_jsonl(&mut self) -> Option<Result<Document>> {
        let mut buf = Vec::new();
        loop {
            let reader = self.reader.as_mut()?;
            buf.clear();
            match reader.read_until(b'\n', &mut buf) {
                Ok(0) => {
                    self.reader = None;
                    return None;
                }
                Ok(_) => {}
                Err(e) => {
                    self.reader = None;
                    return Some(Err(Error::io(&self.path, e)));
                }
            }
            self.line += 1;
            let Ok(line) = std::str::from_utf8(&buf) else {
                self.skipped_invalid_utf8 += 1;
                continue;
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            return Some(self.parse_line(line));
        }
    }

    fn parse_line(&self, line: &str) -> Result<Document> {
        let parse_err = |message: String| Error::Parse {
            path: self.path.clone(),
            line: self.line,
            message,
        };
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| parse_err("expected a JSON object".into()))?;
        let text = obj
            .get("text")
            .and_then(|t| t.as_str())
            .ok_or_else(|| parse_err("missing string field `text`".into()))?;
        let id = match obj.get("id") {
            Some(serde_json::Value::String(s)) => s.clone(),
            Some(serde_json::Value::Number(n)) => n.to_string(),
            _ => format!("{}:{}", self.path.display(), self.line),
        };
        Ok(Document {
            id,
            text: text.to_owned(),
        })
    }
}

impl Iterator for Documents {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.format {
            Format::Plain => self.next_plain(),
            Format::Jsonl => self.next_jsonl(),
        }
    }
}

/// Opens `path` for document iteration. Files ending in `.gz`, `.xz` or
/// `.zst` are decompressed transparently.
pub fn load_documents(path: impl AsRef<Path>, format: Format) -> Result<Documents> {
    let path = path.as_ref();
    let reader = open_maybe_compressed(path)?;
    Ok(Documents {
        path: path.to_path_buf(),
        format,
        reader: Some(BufReader::with_capacity(1 << 16, reader)),
        line: 0,
        skipped_invalid_utf8: 0,
    })
}

/// Reads every document of every path (in the order given), failing on the
/// first malformed line. Returns the documents and the invalid-UTF-8 tally.
pub fn read_all(paths: &[PathBuf]) -> Result<(Vec<Document>, usize)> {
    let mut docs = Vec::new();
    let mut skipped = 0;
    for path in paths {
        let mut it = load_documents(path, Format::from_path(path))?;
        for doc in it.by_ref() {
            docs.push(doc?);
        }
        skipped += it.skipped_invalid_utf8();
    }
    Ok((docs, skipped))
}

/// An immutable run of Unicode scalar values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharStream {
    pub source_id: String,
    text: String,
    char_count: usize,
}

impl CharStream {
    pub fn new(source_id: impl Into<String>, text: String) -> Self {
        let char_count = text.chars().count();
        CharStream {
            source_id: source_id.into(),
            text,
            char_count,
        }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn into_text(self) -> String {
        self.text
    }

    pub fn char_count(&self) -> usize {
        self.char_count
    }

    pub fn byte_count(&self) -> usize {
        self.text.len()
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }

    /// NFKC-normalized copy of the stream.
    pub fn normalized(&self) -> CharStream {
        CharStream::new(self.source_id.clone(), normalize(&self.text))
    }

    /// Characters `[start, end)` as a new stream.
    pub fn slice_chars(&self, start: usize, end: usize) -> CharStream {
        let end = end.min(self.char_count);
        let start = start.min(end);
        let lo = byte_offset(&self.text, start);
        let hi = lo + byte_offset(&self.text[lo..], end - start);
        CharStream {
            source_id: self.source_id.clone(),
            text: self.text[lo..hi].to_owned(),
            char_count: end - start,
        }
    }

    /// Lowercase hex SHA-256 of the UTF-8 content.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.text.as_bytes()))
    }
}

fn byte_offset(text: &str, chars: usize) -> usize {
    text.char_indices()
        .nth(chars)
        .map(|(i, _)| i)
        .unwrap_or(text.len())
}

/// Concatenates document texts with `separator` until `max_chars`
/// characters have been collected; the result holds exactly
/// `min(max_chars, available)` characters.
pub fn stream_characters<I>(docs: I, max_chars: usize, separator: &str) -> CharStream
where
    I: IntoIterator<Item = Document>,
{
    let mut text = String::new();
    let mut count = 0usize;
    let mut source = None;
    let sep_chars = separator.chars().count();
    for (i, doc) in docs.into_iter().enumerate() {
        if count >= max_chars {
            break;
        }
        source.get_or_insert_with(|| doc.id.clone());
        if i > 0 {
            count += push_limited(&mut text, separator, sep_chars, max_chars - count);
            if count >= max_chars {
                break;
            }
        }
        let doc_chars = doc.text.chars().count();
        count += push_limited(&mut text, &doc.text, doc_chars, max_chars - count);
    }
    CharStream {
        source_id: source.unwrap_or_default(),
        text,
        char_count: count,
    }
}

fn push_limited(out: &mut String, s: &str, s_chars: usize, budget: usize) -> usize {
    if s_chars <= budget {
        out.push_str(s);
        s_chars
    } else {
        out.push_str(&s[..byte_offset(s, budget)]);
        budget
    }
}

/// A training prefix and the shared held-out tail of one stream.
#[derive(Debug, Clone)]
pub struct CorpusSplit {
    pub train_prefix: CharStream,
    pub test_tail: Arc<CharStream>,
    pub train_target_chars: usize,
    pub test_chars: usize,
}

/// One split per entry of `train_sizes`, all sharing the final `test_chars`
/// characters of `stream` as their test tail.
pub fn split_train_test(
    stream: &CharStream,
    train_sizes: &[usize],
    test_chars: usize,
) -> Result<Vec<CorpusSplit>> {
    let max_train = train_sizes.iter().copied().max().unwrap_or(0);
    let required = max_train + test_chars;
    if stream.char_count() < required {
        return Err(Error::InsufficientData {
            required,
            available: stream.char_count(),
            train: max_train,
            test: test_chars,
        });
    }
    let n = stream.char_count();
    let test_tail = Arc::new(stream.slice_chars(n - test_chars, n));
    Ok(train_sizes
        .iter()
        .map(|&size| CorpusSplit {
            train_prefix: stream.slice_chars(0, size),
            test_tail: Arc::clone(&test_tail),
            train_target_chars: size,
            test_chars,
        })
        .collect())
}
