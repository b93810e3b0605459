//! Tokenizer followed by a universal compressor, against the raw-byte
//! baseline.
//!
//! Token ids are packed as little-endian fixed-width unsigned integers before
//! compression.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::compress::Compressor;
use crate::error::{Error, Result};
use crate::tokenizer::{TokenId, TokenizerModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Width {
    #[serde(rename = "16")]
    W16,
    #[serde(rename = "32")]
    W32,
}

impl Width {
    pub fn bits(self) -> u32 {
        match self {
            Width::W16 => 16,
            Width::W32 => 32,
        }
    }

    pub fn bytes(self) -> usize {
        self.bits() as usize / 8
    }

    /// 16 bits while every id of a `vocab_size` vocabulary fits, else 32.
    pub fn for_vocab(vocab_size: usize) -> Width {
        if vocab_size <= 1 << 16 {
            Width::W16
        } else {
            Width::W32
        }
    }

    fn fits(self, id: TokenId) -> bool {
        match self {
            Width::W16 => id <= u16::MAX as TokenId,
            Width::W32 => true,
        }
    }
}

impl fmt::Display for Width {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.bits())
    }
}

impl FromStr for Width {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "16" => Ok(Width::W16),
            "32" => Ok(Width::W32),
            other => Err(Error::InvalidArgument(format!("width must be 16 or 32 (got `{other}`)"))),
        }
    }
}

/// Token ids serialized at a fixed width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedIdStream {
    pub bytes: Vec<u8>,
    pub width: Width,
    pub count: usize,
}

impl PackedIdStream {
    pub fn unpack(&self) -> Result<Vec<TokenId>> {
        unpack_token_ids(&self.bytes, self.width)
    }
}

pub fn pack_token_ids(ids: &[TokenId], width: Width) -> Result<PackedIdStream> {
    let mut bytes = Vec::with_capacity(ids.len() * width.bytes());
    for (position, &id) in ids.iter().enumerate() {
        if !width.fits(id) {
            return Err(Error::IdOverflow {
                id,
                position,
                width: width.bits(),
            });
        }
        match width {
            Width::W16 => bytes.extend_from_slice(&(id as u16).to_le_bytes()),
            Width::W32 => bytes.extend_from_slice(&id.to_le_bytes()),
        }
    }
    Ok(PackedIdStream {
        bytes,
        width,
        count: ids.len(),
    })
}

pub fn unpack_token_ids(bytes: &[u8], width: Width) -> Result<Vec<TokenId>> {
    let w = width.bytes();
    if !bytes.len().is_multiple_of(w) {
        return Err(Error::InvalidArgument(format!(
            "{} bytes is not a multiple of the {}-bit width",
            bytes.len(),
            width.bits()
        )));
    }
    Ok(match width {
        Width::W16 => bytes
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]) as TokenId)
            .collect(),
        Width::W32 => bytes
            .chunks_exact(4)
            .map(|c| TokenId::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
    })
}

/// Compressed bits per character of the UTF-8 bytes of `text`.
pub fn raw_lz_bpc(text: &str, compressor: &Compressor) -> Result<f64> {
    let chars = text.chars().count();
    if chars == 0 {
        return Err(Error::Empty("text"));
    }
    Ok(8.0 * compressor.compressed_len(text.as_bytes())? as f64 / chars as f64)
}

/// Compressed bits per character of the packed token ids of `text`. The
/// width defaults to the smallest one that holds the model's ids.
pub fn token_lz_bpc(
    model: &TokenizerModel,
    text: &str,
    compressor: &Compressor,
    width: Option<Width>,
) -> Result<f64> {
    let chars = text.chars().count();
    if chars == 0 {
        return Err(Error::Empty("text"));
    }
    let width = width.unwrap_or_else(|| Width::for_vocab(model.vocab_size()));
    let stream = model.tokenizer().encode(text);
    packed_bpc(&stream.ids, chars, compressor, width)
}

/// Compressed bits per character of an already encoded id sequence.
pub fn packed_bpc(ids: &[TokenId], chars: usize, compressor: &Compressor, width: Width) -> Result<f64> {
    if chars == 0 {
        return Err(Error::Empty("text"));
    }
    let packed = pack_token_ids(ids, width)?;
    Ok(8.0 * compressor.compressed_len(&packed.bytes)? as f64 / chars as f64)
}

/// `(token - raw) / raw`; negative when tokenization helps.
pub fn relative_delta(token_bpc: f64, raw_bpc: f64) -> f64 {
    (token_bpc - raw_bpc) / raw_bpc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineCell {
    pub model: String,
    pub width: Width,
    pub bpc: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRow {
    pub compressor: Compressor,
    pub raw_bpc: f64,
    pub cells: Vec<PipelineCell>,
}

/// One row per compressor: the raw baseline and each model's bpc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub chars: usize,
    pub bytes: usize,
    pub rows: Vec<PipelineRow>,
}

impl PipelineReport {
    pub fn cell(&self, compressor: &Compressor, model: &str) -> Option<&PipelineCell> {
        self.rows
            .iter()
            .find(|r| &r.compressor == compressor)?
            .cells
            .iter()
            .find(|c| c.model == model)
    }

    /// Flat rows `(compressor, level, column, bpc, delta)`; the raw column
    /// has delta 0.
    pub fn long_rows(&self) -> Vec<(String, i32, String, f64, f64)> {
        let mut out = Vec::new();
        for row in &self.rows {
            let alg = row.compressor.algorithm.name().to_owned();
            out.push((alg.clone(), row.compressor.level, "raw".to_owned(), row.raw_bpc, 0.0));
            for c in &row.cells {
                out.push((alg.clone(), row.compressor.level, c.model.clone(), c.bpc, c.delta));
            }
        }
        out
    }
}

impl fmt::Display for PipelineReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self
            .rows
            .first()
            .map(|r| r.cells.iter().map(|c| c.model.as_str()).collect())
            .unwrap_or_default();
        write!(f, "{:<10} {:>8}", "", "raw")?;
        for n in &names {
            write!(f, " {:>18}", n)?;
        }
        writeln!(f)?;
        for row in &self.rows {
            write!(f, "{:<10} {:>8.3}", row.compressor.to_string(), row.raw_bpc)?;
            for c in &row.cells {
                let cell = format!("{:.3} ({:+.1}%)", c.bpc, 100.0 * c.delta);
                write!(f, " {:>18}", cell)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Raw and token bpc of `text` for every compressor and named model.
pub fn pipeline_report(
    models: &[(String, &TokenizerModel)],
    text: &str,
    compressors: &[Compressor],
) -> Result<PipelineReport> {
    use rayon::prelude::*;

    if compressors.is_empty() {
        return Err(Error::Empty("compressor list"));
    }
    let chars = text.chars().count();
    if chars == 0 {
        return Err(Error::Empty("text"));
    }
    let encoded: Vec<(String, Width, Vec<TokenId>)> = models
        .iter()
        .map(|(name, m)| {
            (
                name.clone(),
                Width::for_vocab(m.vocab_size()),
                m.tokenizer().encode(text).ids,
            )
        })
        .collect();
    let rows = compressors
        .par_iter()
        .map(|c| {
            let raw_bpc = raw_lz_bpc(text, c)?;
            let cells = encoded
                .iter()
                .map(|(name, width, ids)| {
                    let bpc = packed_bpc(ids, chars, c, *width)?;
                    Ok(PipelineCell {
                        model: name.clone(),
                        width: *width,
                        bpc,
                        delta: relative_delta(bpc, raw_bpc),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PipelineRow {
                compressor: *c,
                raw_bpc,
                cells,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PipelineReport {
        chars,
        bytes: text.len(),
        rows,
    })
}
