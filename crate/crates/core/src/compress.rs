//! Universal compressors used as the second stage of token pipelines.
//!
//! Every algorithm emits its standard container (gzip member, zstd frame,
//! xz stream) so outputs can be checked with the command-line tools.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Gzip,
    Zstd,
    Lzma,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Gzip, Algorithm::Lzma, Algorithm::Zstd];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Gzip => "gzip",
            Algorithm::Zstd => "zstd",
            Algorithm::Lzma => "lzma",
        }
    }

    pub fn default_level(self) -> i32 {
        match self {
            Algorithm::Gzip => 6,
            Algorithm::Zstd => 3,
            Algorithm::Lzma => 6,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gzip" | "gz" | "deflate" => Ok(Algorithm::Gzip),
            "zstd" | "zst" => Ok(Algorithm::Zstd),
            "lzma" | "xz" => Ok(Algorithm::Lzma),
            other => Err(Error::InvalidArgument(format!("unknown compressor `{other}`"))),
        }
    }
}

/// A compression algorithm at a fixed level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Compressor {
    pub algorithm: Algorithm,
    pub level: i32,
}

impl Compressor {
    pub fn new(algorithm: Algorithm, level: i32) -> Result<Self> {
        let ok = match algorithm {
            Algorithm::Gzip => (0..=9).contains(&level),
            Algorithm::Zstd => (1..=22).contains(&level),
            Algorithm::Lzma => (0..=9).contains(&level),
        };
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "level {level} out of range for {algorithm}"
            )));
        }
        Ok(Compressor { algorithm, level })
    }

    pub fn gzip() -> Self {
        Algorithm::Gzip.into()
    }

    pub fn zstd() -> Self {
        Algorithm::Zstd.into()
    }

    pub fn lzma() -> Self {
        Algorithm::Lzma.into()
    }

    pub fn compress(&self, data: &[u8]) -> Result<Vec<u8>> {
        let fail = |source| Error::Compression {
            algorithm: self.algorithm.name(),
            source,
        };
        match self.algorithm {
            Algorithm::Gzip => {
                let mut enc = flate2::write::GzEncoder::new(
                    Vec::with_capacity(data.len() / 2),
                    flate2::Compression::new(self.level as u32),
                );
                enc.write_all(data).map_err(fail)?;
                enc.finish().map_err(fail)
            }
            Algorithm::Zstd => zstd::bulk::compress(data, self.level).map_err(fail),
            Algorithm::Lzma => {
                let mut enc = xz2::write::XzEncoder::new(
                    Vec::with_capacity(data.len() / 3),
                    self.level as u32,
                );
                enc.write_all(data).map_err(fail)?;
                enc.finish().map_err(fail)
            }
        }
    }

    /// Size in bytes of the compressed representation.
    pub fn compressed_len(&self, data: &[u8]) -> Result<usize> {
        self.compress(data).map(|c| c.len())
    }

    pub fn decompress(&self, data: &[u8]) -> Result<Vec<u8>> {
        decompress(self.algorithm, data)
    }
}

impl From<Algorithm> for Compressor {
    fn from(algorithm: Algorithm) -> Self {
        Compressor {
            algorithm,
            level: algorithm.default_level(),
        }
    }
}

impl fmt::Display for Compressor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.algorithm, self.level)
    }
}

/// Parses `gzip`, `zstd:19` or `lzma-9` style specifications.
impl FromStr for Compressor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once([':', '-']) {
            Some((name, level)) => {
                let level = level
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad compression level in `{s}`")))?;
                Compressor::new(name.parse()?, level)
            }
            None => Ok(s.parse::<Algorithm>()?.into()),
        }
    }
}

pub fn decompress(algorithm: Algorithm, data: &[u8]) -> Result<Vec<u8>> {
    let fail = |source| Error::Compression {
        algorithm: algorithm.name(),
        source,
    };
    let mut out = Vec::new();
    match algorithm {
        Algorithm::Gzip => {
            flate2::read::GzDecoder::new(data)
                .read_to_end(&mut out)
                .map_err(fail)?;
        }
        Algorithm::Zstd => {
            out = zstd::stream::decode_all(data).map_err(fail)?;
        }
        Algorithm::Lzma => {
            xz2::read::XzDecoder::new(data)
                .read_to_end(&mut out)
                .map_err(fail)?;
        }
    }
    Ok(out)
}
