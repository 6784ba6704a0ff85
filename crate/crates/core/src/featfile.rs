//! Per-syllable feature table and its binary file format.
//!
//! Little-endian layout: magic `SBFT`, version u16, feature dim u16, row count
//! u64, layout hash u64; then per row the utterance id and word id (u16 length
//! + UTF-8 bytes each), syllable index u16, label u8 and `dim` f32 values.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::SyllableKey;

pub const MAGIC: &[u8; 4] = b"SBFT";
pub const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum FeatFileError {
    #[error("bad header field {field}: {message}")]
    Header { field: &'static str, message: String },
    #[error("row {row}: {message}")]
    Row { row: u64, message: String },
    #[error("duplicate key {0}")]
    DuplicateKey(SyllableKey),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub fn layout_hash(layout: &str) -> u64 {
    let d = Sha256::digest(layout.as_bytes());
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub key: SyllableKey,
    pub label: u8,
    pub features: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub dim: usize,
    pub layout_hash: u64,
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub fn new(dim: usize, layout: &str) -> Self {
        Self {
            dim,
            layout_hash: layout_hash(layout),
            rows: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn index(&self) -> Result<BTreeMap<SyllableKey, usize>, FeatFileError> {
        let mut map = BTreeMap::new();
        for (i, r) in self.rows.iter().enumerate() {
            if map.insert(r.key.clone(), i).is_some() {
                return Err(FeatFileError::DuplicateKey(r.key.clone()));
            }
        }
        Ok(map)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(24 + self.rows.len() * (16 + 4 * self.dim));
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        b.extend_from_slice(&(self.dim as u16).to_le_bytes());
        b.extend_from_slice(&(self.rows.len() as u64).to_le_bytes());
        b.extend_from_slice(&self.layout_hash.to_le_bytes());
        for r in &self.rows {
            for s in [&r.key.utt_id, &r.key.word_id] {
                b.extend_from_slice(&(s.len() as u16).to_le_bytes());
                b.extend_from_slice(s.as_bytes());
            }
            b.extend_from_slice(&r.key.syll_idx.to_le_bytes());
            b.push(r.label);
            for v in &r.features {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FeatFileError> {
        let mut cur = bytes;
        let header = |field: &'static str, message: String| FeatFileError::Header { field, message };
        let mut magic = [0u8; 4];
        cur.read_exact(&mut magic)
            .map_err(|_| header("magic", "file shorter than header".into()))?;
        if &magic != MAGIC {
            return Err(header("magic", format!("expected SBFT, found {magic:?}")));
        }
        let version = read_u16(&mut cur).ok_or_else(|| header("version", "truncated".into()))?;
        if version != VERSION {
            return Err(header("version", format!("unsupported version {version}")));
        }
        let dim = read_u16(&mut cur).ok_or_else(|| header("feature_dim", "truncated".into()))? as usize;
        if dim == 0 {
            return Err(header("feature_dim", "must be positive".into()));
        }
        let count = read_u64(&mut cur).ok_or_else(|| header("row_count", "truncated".into()))?;
        let layout_hash = read_u64(&mut cur).ok_or_else(|| header("layout_hash", "truncated".into()))?;
        let mut rows = Vec::new();
        for row in 0..count {
            let err = |message: &str| FeatFileError::Row {
                row,
                message: message.to_string(),
            };
            let utt_id = read_str(&mut cur).ok_or_else(|| err("truncated or invalid utt_id"))?;
            let word_id = read_str(&mut cur).ok_or_else(|| err("truncated or invalid word_id"))?;
            let syll_idx = read_u16(&mut cur).ok_or_else(|| err("truncated syll_idx"))?;
            let mut label = [0u8];
            cur.read_exact(&mut label).map_err(|_| err("truncated label"))?;
            if label[0] > 1 {
                return Err(err(&format!("label must be 0 or 1, got {}", label[0])));
            }
            let mut features = Vec::with_capacity(dim);
            for j in 0..dim {
                let mut v = [0u8; 4];
                cur.read_exact(&mut v).map_err(|_| err("truncated features"))?;
                let v = f32::from_le_bytes(v);
                if !v.is_finite() {
                    return Err(err(&format!("non-finite value in column {j}")));
                }
                features.push(v);
            }
            rows.push(FeatureRow {
                key: SyllableKey::new(utt_id, word_id, syll_idx),
                label: label[0],
                features,
            });
        }
        if !cur.is_empty() {
            return Err(header("row_count", format!("{} trailing bytes", cur.len())));
        }
        Ok(Self {
            dim,
            layout_hash,
            rows,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), FeatFileError> {
        let io = |source| FeatFileError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut f = std::fs::File::create(path).map_err(io)?;
        f.write_all(&self.to_bytes()).map_err(io)?;
        f.sync_all().map_err(io)
    }

    pub fn read(path: &Path) -> Result<Self, FeatFileError> {
        let bytes = std::fs::read(path).map_err(|source| FeatFileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

fn read_u16(cur: &mut &[u8]) -> Option<u16> {
    let mut b = [0u8; 2];
    cur.read_exact(&mut b).ok()?;
    Some(u16::from_le_bytes(b))
}

fn read_u64(cur: &mut &[u8]) -> Option<u64> {
    let mut b = [0u8; 8];
    cur.read_exact(&mut b).ok()?;
    Some(u64::from_le_bytes(b))
}

fn read_str(cur: &mut &[u8]) -> Option<String> {
    let len = read_u16(cur)? as usize;
    if cur.len() < len {
        return None;
    }
    let (s, rest) = cur.split_at(len);
    *cur = rest;
    String::from_utf8(s.to_vec()).ok()
}
