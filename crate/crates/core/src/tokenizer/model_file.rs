//! JSON model files and tiktoken-style rank lists.
//!
//! A model file is a single JSON object:
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "family": "bpe",
//!   "byte_level": true,
//!   "specials": ["<pad>", "<unk>", "<bos>", "<eos>"],
//!   "vocab": [["<pad>", 0], ["AA==", 4]],
//!   "merges": [[72, 105]],
//!   "scores": [],
//!   "preprocessing": {"nfkc": false, "pretokenizer": "whitespace"},
//!   "metadata": {}
//! }
//! ```
//!
//! Content tokens of byte-level models are base64 encoded; specials and the
//! tokens of character-level models are stored as plain strings.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::{Family, Preprocessing, TokenId, TokenizerModel, Vocabulary};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    family: String,
    byte_level: bool,
    specials: Vec<String>,
    vocab: Vec<(String, TokenId)>,
    merges: Vec<(TokenId, TokenId)>,
    scores: Vec<(TokenId, f64)>,
    preprocessing: Preprocessing,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<String>,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

impl TokenizerModel {
    /// Serializes the model to its JSON file representation.
    pub fn to_json(&self) -> Result<String> {
        let n_special = self.vocab.specials().len();
        let vocab = self
            .vocab
            .iter()
            .map(|(id, bytes)| {
                let text = if (id as usize) < n_special {
                    String::from_utf8_lossy(bytes).into_owned()
                } else if self.byte_level {
                    BASE64.encode(bytes)
                } else {
                    String::from_utf8(bytes.to_vec()).map_err(|_| {
                        Error::InvalidModel(format!("token {id} of a character-level model is not UTF-8"))
                    })?
                };
                Ok((text, id))
            })
            .collect::<Result<Vec<_>>>()?;
        let file = ModelFile {
            format_version: FORMAT_VERSION,
            family: self.family.name().to_owned(),
            byte_level: self.byte_level,
            specials: self.vocab.specials().to_vec(),
            vocab,
            merges: self.merges.clone(),
            scores: self.scores.clone(),
            preprocessing: self.preprocessing.clone(),
            provenance: self.provenance.clone(),
            metadata: self.metadata.clone(),
        };
        let mut json = serde_json::to_string_pretty(&file)?;
        json.push('\n');
        Ok(json)
    }

    /// Parses and validates a JSON model file.
    pub fn from_json(json: &str) -> Result<TokenizerModel> {
        let value: serde_json::Value = serde_json::from_str(json)?;
        let version = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::InvalidModel("missing format_version".into()))?;
        if version != u64::from(FORMAT_VERSION) {
            return Err(Error::VersionMismatch {
                found: version.min(u64::from(u32::MAX)) as u32,
                expected: FORMAT_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_value(value)
            .map_err(|e| Error::InvalidModel(format!("schema violation: {e}")))?;
        let family: Family = file.family.parse()?;

        let mut entries = file.vocab;
        entries.sort_by_key(|&(_, id)| id);
        let mut tokens = Vec::with_capacity(entries.len());
        for (expected, (text, id)) in entries.into_iter().enumerate() {
            if id as usize != expected {
                return Err(Error::InvalidModel(format!(
                    "vocabulary ids are not dense: expected id {expected}, found {id}"
                )));
            }
            let bytes = if expected >= file.specials.len() && file.byte_level {
                BASE64
                    .decode(text.as_bytes())
                    .map_err(|e| Error::InvalidModel(format!("token {id}: bad base64: {e}")))?
            } else {
                text.into_bytes()
            };
            tokens.push(bytes);
        }
        let vocab = Vocabulary::from_tokens(tokens, file.specials)?;
        let model = TokenizerModel {
            family,
            vocab,
            merges: file.merges,
            scores: file.scores,
            preprocessing: file.preprocessing,
            byte_level: file.byte_level,
            provenance: file.provenance,
            metadata: file.metadata,
        };
        model.validate()?;
        Ok(model)
    }
}

pub fn save_model(model: &TokenizerModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model.to_json()?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TokenizerModel> {
    let path = path.as_ref();
    let json = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    TokenizerModel::from_json(&json)
}

/// Parses `base64 SPACE rank` lines into a byte-level rank-list model.
///
/// Ids are assigned densely in rank order. Gaps in the rank sequence are
/// tolerated and counted in the `rank_gaps` metadata entry. Single bytes
/// missing from the list are appended after the ranked entries (listed in
/// `appended_bytes`) so that every input stays encodable.
pub fn parse_rank_list(content: &str, path: impl AsRef<Path>) -> Result<TokenizerModel> {
    let path = path.as_ref();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut entries: Vec<(u64, Vec<u8>, usize)> = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(' ');
        let (Some(token), Some(rank), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err(lineno, "expected `<base64> <rank>`".into()));
        };
        let bytes = BASE64
            .decode(token.as_bytes())
            .map_err(|e| parse_err(lineno, format!("bad base64: {e}")))?;
        if bytes.is_empty() {
            return Err(parse_err(lineno, "empty token".into()));
        }
        let rank: u64 = rank
            .trim_end_matches('\r')
            .parse()
            .map_err(|e| parse_err(lineno, format!("bad rank `{rank}`: {e}")))?;
        entries.push((rank, bytes, lineno));
    }
    entries.sort_by_key(|e| e.0);
    let mut vocab = Vocabulary::with_specials::<&str>(&[]);
    let mut gaps = 0u64;
    let mut prev: Option<u64> = None;
    for (rank, bytes, lineno) in entries {
        match prev {
            Some(p) if p == rank => {
                return Err(parse_err(lineno, format!("duplicate rank {rank}")));
            }
            Some(p) => gaps += rank - p - 1,
            None => gaps += rank,
        }
        prev = Some(rank);
        if !vocab.insert(bytes).1 {
            return Err(parse_err(lineno, "duplicate token".into()));
        }
    }
    let mut appended = Vec::new();
    for b in 0..=255u8 {
        if vocab.insert(vec![b]).1 {
            appended.push(format!("{b:02x}"));
        }
    }
    let mut metadata = BTreeMap::new();
    metadata.insert("rank_gaps".to_owned(), gaps.to_string());
    if !appended.is_empty() {
        metadata.insert("appended_bytes".to_owned(), appended.join(","));
    }
    let model = TokenizerModel {
        family: Family::ExternalRankList,
        vocab,
        merges: Vec::new(),
        scores: Vec::new(),
        preprocessing: Preprocessing {
            nfkc: false,
            ..Preprocessing::default()
        },
        byte_level: true,
        provenance: Some(path.display().to_string()),
        metadata,
    };
    model.validate()?;
    Ok(model)
}

pub fn load_rank_list_model(path: impl AsRef<Path>) -> Result<TokenizerModel> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_rank_list(&content, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::{SPECIALS, UNK};

    fn b64(s: &[u8]) -> String {
        BASE64.encode(s)
    }

    fn bpe_model() -> TokenizerModel {
        let mut m = TokenizerModel::byte_identity();
        let h = m.vocab.get(b"h").unwrap();
        let i = m.vocab.get(b"i").unwrap();
        m.vocab.insert(b"hi".to_vec());
        m.merges.push((h, i));
        m.metadata.insert("k".into(), "v".into());
        m
    }

    #[test]
    fn roundtrip_is_structural_and_byte_identical() {
        let m = bpe_model();
        let json = m.to_json().unwrap();
        let back = TokenizerModel::from_json(&json).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json().unwrap(), json);
    }

    #[test]
    fn roundtrip_character_level_with_scores() {
        let mut vocab = Vocabulary::with_specials(&SPECIALS);
        let (a, _) = vocab.insert("é".as_bytes().to_vec());
        let (b, _) = vocab.insert(b"b".to_vec());
        let m = TokenizerModel {
            family: Family::Unigram,
            vocab,
            merges: vec![],
            scores: vec![(a, (0.3f64).ln()), (b, (0.7f64).ln())],
            preprocessing: Preprocessing::default(),
            byte_level: false,
            provenance: None,
            metadata: BTreeMap::new(),
        };
        let json = m.to_json().unwrap();
        assert!(json.contains("\"é\""));
        let back = TokenizerModel::from_json(&json).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json().unwrap(), json);
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        let m = bpe_model();
        save_model(&m, &p).unwrap();
        let first = fs::read(&p).unwrap();
        let loaded = load_model(&p).unwrap();
        save_model(&loaded, &p).unwrap();
        assert_eq!(fs::read(&p).unwrap(), first);
    }

    #[test]
    fn unknown_family_is_named() {
        let json = bpe_model().to_json().unwrap().replace("\"bpe\"", "\"sentencepiece\"");
        match TokenizerModel::from_json(&json) {
            Err(Error::UnknownFamily(f)) => assert_eq!(f, "sentencepiece"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn version_mismatch() {
        let json = bpe_model()
            .to_json()
            .unwrap()
            .replace("\"format_version\": 1", "\"format_version\": 7");
        assert!(matches!(
            TokenizerModel::from_json(&json),
            Err(Error::VersionMismatch { found: 7, expected: 1 })
        ));
    }

    #[test]
    fn duplicate_token_rejected() {
        let json = bpe_model().to_json().unwrap();
        let dup = json.replace(&format!("\"{}\"", b64(b"hi")), &format!("\"{}\"", b64(b"h")));
        assert_ne!(dup, json);
        match TokenizerModel::from_json(&dup) {
            Err(Error::InvalidModel(msg)) => assert!(msg.contains("duplicate"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sparse_ids_rejected() {
        let json = r#"{"format_version":1,"family":"wordlevel","byte_level":false,
            "specials":["<unk>"],"vocab":[["<unk>",0],["a",2]],"merges":[],"scores":[],
            "preprocessing":{"nfkc":true,"pretokenizer":"whitespace"}}"#;
        assert!(matches!(TokenizerModel::from_json(json), Err(Error::InvalidModel(_))));
        let ok = json.replace("[\"a\",2]", "[\"a\",1]");
        let m = TokenizerModel::from_json(&ok).unwrap();
        assert_eq!(m.vocab.special_id(UNK), Some(0));
    }

    #[test]
    fn rank_list_identity() {
        let content: String = (0..=255u8).map(|b| format!("{} {}\n", b64(&[b]), b)).collect();
        let m = parse_rank_list(&content, "id.tiktoken").unwrap();
        assert_eq!(m.vocab_size(), 256);
        assert_eq!(m.metadata["rank_gaps"], "0");
        let ids = m.tokenizer().encode("hi!").ids;
        assert_eq!(ids, vec![b'h' as u32, b'i' as u32, b'!' as u32]);
    }

    #[test]
    fn rank_list_lowest_rank_merge() {
        let content = format!("{} 0\n{} 1\n{} 2\n", b64(b"a"), b64(b"b"), b64(b"ab"));
        let m = parse_rank_list(&content, "small").unwrap();
        let t = m.tokenizer();
        let ids = t.encode("abab").ids;
        assert_eq!(ids, vec![2, 2]);
        assert_eq!(m.vocab.token(2), Some(&b"ab"[..]));
        assert_eq!(t.decode(&ids).unwrap(), "abab");
        assert_eq!(t.decode(&t.encode("abc").ids).unwrap(), "abc");
    }

    #[test]
    fn rank_list_gaps_recorded() {
        let content = format!("{} 0\n{} 5\n", b64(b"a"), b64(b"b"));
        let m = parse_rank_list(&content, "gappy").unwrap();
        assert_eq!(m.metadata["rank_gaps"], "4");
    }

    #[test]
    fn rank_list_bad_base64_has_line_number() {
        let content = format!("{} 0\n!!notbase64 1\n", b64(b"a"));
        match parse_rank_list(&content, "bad") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
