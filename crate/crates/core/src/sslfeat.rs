//! Imported self-supervised frame features, averaged to syllable level.
//!
//! Frame files (`{utt_id}.sbfr`) are little-endian: magic `SBFR`, version u16,
//! dim u16, hop_ms u16, frame count u64, then frames × dim f32 values in row
//! order. An optional trailer (u16 length + UTF-8 bytes) records provenance,
//! such as the model layer the frames came from.

use std::io::Read;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{SyllableKey, Utterance};
use crate::featfile::{FeatureRow, FeatureTable};
use crate::prosody::SkippedSyllable;

pub const MAGIC: &[u8; 4] = b"SBFR";
pub const VERSION: u16 = 1;
pub const DEFAULT_DIM: usize = 768;
pub const DEFAULT_HOP_MS: u16 = 20;

#[derive(Debug, Error)]
pub enum SslError {
    #[error("bad header field {field}: {message}")]
    Header { field: &'static str, message: String },
    #[error("non-finite value at frame {frame}, column {column}")]
    NonFinite { frame: usize, column: usize },
    #[error("truncated data: expected {expected} bytes of frames, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("bad provenance trailer: {0}")]
    Trailer(String),
    #[error("syllable [{start}, {end}) lies outside the feature timeline [0, {timeline_end})")]
    OutsideTimeline { start: f64, end: f64, timeline_end: f64 },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatureFile {
    pub dim: usize,
    pub hop_ms: u16,
    pub frames: usize,
    /// frames × dim, row-major.
    pub data: Vec<f32>,
    pub provenance: Option<String>,
}

impl FrameFeatureFile {
    pub fn new(dim: usize, hop_ms: u16, data: Vec<f32>) -> Self {
        Self {
            dim,
            hop_ms,
            frames: data.len() / dim.max(1),
            data,
            provenance: None,
        }
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn hop_s(&self) -> f64 {
        f64::from(self.hop_ms) / 1000.0
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(18 + 4 * self.data.len());
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        b.extend_from_slice(&(self.dim as u16).to_le_bytes());
        b.extend_from_slice(&self.hop_ms.to_le_bytes());
        b.extend_from_slice(&(self.frames as u64).to_le_bytes());
        for v in &self.data {
            b.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(p) = &self.provenance {
            b.extend_from_slice(&(p.len() as u16).to_le_bytes());
            b.extend_from_slice(p.as_bytes());
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SslError> {
        let header = |field: &'static str, message: &str| SslError::Header {
            field,
            message: message.to_string(),
        };
        if bytes.len() < 18 {
            return Err(header("magic", "file shorter than the 18-byte header"));
        }
        if &bytes[..4] != MAGIC {
            return Err(header("magic", &format!("expected SBFR, found {:?}", &bytes[..4])));
        }
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let version = u16_at(4);
        if version != VERSION {
            return Err(header("version", &format!("unsupported version {version}")));
        }
        let dim = usize::from(u16_at(6));
        if dim == 0 {
            return Err(header("dim", "must be positive"));
        }
        let hop_ms = u16_at(8);
        if hop_ms == 0 {
            return Err(header("hop_ms", "must be positive"));
        }
        let frames = u64::from_le_bytes(bytes[10..18].try_into().unwrap());
        if frames == 0 {
            return Err(header("frame_count", "must be at least 1"));
        }
        let expected = (frames as usize)
            .checked_mul(dim * 4)
            .ok_or_else(|| header("frame_count", "too large"))?;
        let body = &bytes[18..];
        if body.len() < expected {
            return Err(SslError::Truncated {
                expected,
                found: body.len(),
            });
        }
        let mut data = Vec::with_capacity(expected / 4);
        for (i, c) in body[..expected].chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(c.try_into().unwrap());
            if !v.is_finite() {
                return Err(SslError::NonFinite {
                    frame: i / dim,
                    column: i % dim,
                });
            }
            data.push(v);
        }
        let mut trailer = &body[expected..];
        let provenance = if trailer.is_empty() {
            None
        } else {
            let mut len = [0u8; 2];
            trailer
                .read_exact(&mut len)
                .map_err(|_| SslError::Trailer("truncated length".into()))?;
            let len = usize::from(u16::from_le_bytes(len));
            if trailer.len() != len {
                return Err(SslError::Trailer(format!(
                    "declared {len} bytes, found {}",
                    trailer.len()
                )));
            }
            Some(
                String::from_utf8(trailer.to_vec())
                    .map_err(|_| SslError::Trailer("not UTF-8".into()))?,
            )
        };
        Ok(Self {
            dim,
            hop_ms,
            frames: frames as usize,
            data,
            provenance,
        })
    }
}

pub fn load_frame_features(path: &Path) -> Result<FrameFeatureFile, SslError> {
    let bytes = std::fs::read(path).map_err(|source| SslError::Io {
        path: path.display().to_string(),
        source,
    })?;
    FrameFeatureFile::from_bytes(&bytes)
}

/// Frames whose midpoint `(i + 0.5) * hop` lies in `[start, end)`, or the
/// single frame nearest the span centre when none does.
pub fn select_frames(
    f: &FrameFeatureFile,
    start: f64,
    end: f64,
) -> Result<std::ops::Range<usize>, SslError> {
    let hop = f.hop_s();
    let timeline_end = f.frames as f64 * hop;
    if end <= 0.0 || start >= timeline_end || end <= start {
        return Err(SslError::OutsideTimeline {
            start,
            end,
            timeline_end,
        });
    }
    let first = ((start / hop - 0.5).ceil().max(0.0)) as usize;
    let mut a = first;
    while a > 0 && (a as f64 - 0.5) * hop >= start {
        a -= 1;
    }
    while a < f.frames && (a as f64 + 0.5) * hop < start {
        a += 1;
    }
    let mut b = a;
    while b < f.frames && (b as f64 + 0.5) * hop < end {
        b += 1;
    }
    if b > a {
        return Ok(a..b);
    }
    let centre = 0.5 * (start + end);
    let nearest = ((centre / hop - 0.5).round().max(0.0) as usize).min(f.frames - 1);
    Ok(nearest..nearest + 1)
}

pub fn aggregate(f: &FrameFeatureFile, start: f64, end: f64) -> Result<Vec<f64>, SslError> {
    let range = select_frames(f, start, end)?;
    let mut out = vec![0.0; f.dim];
    for i in range.clone() {
        for (o, &v) in out.iter_mut().zip(f.frame(i)) {
            *o += f64::from(v);
        }
    }
    let n = range.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Ok(out)
}

pub fn ssl_layout(dim: usize) -> String {
    format!("ssl-mean-v1:dim={dim}")
}

/// Syllable-level SSL rows from `{frames_dir}/{utt_id}.sbfr`, in corpus order.
/// All files must share one dimension; the first readable file fixes it.
pub fn ssl_feature_table(
    utterances: &[Utterance],
    frames_dir: &Path,
) -> (FeatureTable, Vec<SkippedSyllable>) {
    let loaded: Vec<_> = utterances
        .par_iter()
        .map(|u| load_frame_features(&frames_dir.join(format!("{}.sbfr", u.id))))
        .collect();
    let dim = loaded
        .iter()
        .find_map(|r| r.as_ref().ok().map(|f| f.dim))
        .unwrap_or(DEFAULT_DIM);
    let mut table = FeatureTable::new(dim, &ssl_layout(dim));
    let mut skipped = Vec::new();
    for (u, file) in utterances.iter().zip(loaded) {
        for w in &u.words {
            for s in &w.syllables {
                let key = SyllableKey::new(&u.id, &w.id, s.index as u16);
                let res = match &file {
                    Err(e) => Err(e.to_string()),
                    Ok(f) if f.dim != dim => Err(format!("dimension {} differs from {dim}", f.dim)),
                    Ok(f) => aggregate(f, s.start, s.end).map_err(|e| e.to_string()),
                };
                match res {
                    Ok(v) => table.rows.push(FeatureRow {
                        key,
                        label: s.stress.label(),
                        features: v.iter().map(|&x| x as f32).collect(),
                    }),
                    Err(reason) => skipped.push(SkippedSyllable { key, reason }),
                }
            }
        }
    }
    (table, skipped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_file(frames: usize, dim: usize, seed: u64) -> FrameFeatureFile {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        FrameFeatureFile::new(dim, 20, (0..frames * dim).map(|_| rng.random_range(-3.0..3.0)).collect())
    }

    #[test]
    fn ten_frames_round_trip() {
        let mut f = random_file(10, 768, 1);
        assert_eq!(FrameFeatureFile::from_bytes(&f.to_bytes()).unwrap(), f);
        f.provenance = Some("layer=12".into());
        let back = FrameFeatureFile::from_bytes(&f.to_bytes()).unwrap();
        assert_eq!(back.frames, 10);
        assert_eq!(back.provenance.as_deref(), Some("layer=12"));
    }

    #[test]
    fn header_errors_name_the_field() {
        let f = random_file(2, 4, 1);
        let mut b = f.to_bytes();
        b[1] = b'X';
        assert!(FrameFeatureFile::from_bytes(&b).unwrap_err().to_string().contains("magic"));
        let mut b = f.to_bytes();
        b[6] = 0;
        b[7] = 0;
        assert!(FrameFeatureFile::from_bytes(&b).unwrap_err().to_string().contains("dim"));
        let mut b = f.to_bytes();
        b[8] = 0;
        b[9] = 0;
        assert!(FrameFeatureFile::from_bytes(&b).unwrap_err().to_string().contains("hop_ms"));
        let b = f.to_bytes();
        assert!(matches!(
            FrameFeatureFile::from_bytes(&b[..b.len() - 3]),
            Err(SslError::Truncated { .. })
        ));
    }

    #[test]
    fn nan_reported_with_frame_index() {
        let mut f = random_file(5, 4, 1);
        f.data[3 * 4 + 2] = f32::NAN;
        match FrameFeatureFile::from_bytes(&f.to_bytes()) {
            Err(SslError::NonFinite { frame: 3, column: 2 }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mean_of_two_unit_vectors() {
        let mut data = vec![0.0f32; 2 * 768];
        data[0] = 1.0;
        data[768 + 1] = 1.0;
        let f = FrameFeatureFile::new(768, 20, data);
        let v = aggregate(&f, 0.0, 0.04).unwrap();
        assert_eq!(&v[..3], &[0.5, 0.5, 0.0]);
    }

    #[test]
    fn short_syllable_uses_nearest_frame() {
        let f = random_file(10, 3, 2);
        // [0.052, 0.058) contains no midpoint (0.05 and 0.07); centre 0.055 is nearest 0.05.
        assert_eq!(select_frames(&f, 0.052, 0.058).unwrap(), 2..3);
        let v = aggregate(&f, 0.052, 0.058).unwrap();
        for (a, b) in v.iter().zip(f.frame(2)) {
            assert_eq!(*a, f64::from(*b));
        }
    }

    #[test]
    fn outside_timeline_errors() {
        let f = random_file(10, 3, 2);
        assert!(matches!(aggregate(&f, 0.25, 0.3), Err(SslError::OutsideTimeline { .. })));
        assert!(matches!(aggregate(&f, -0.2, -0.1), Err(SslError::OutsideTimeline { .. })));
    }

    proptest! {
        #[test]
        fn matches_direct_sum(seed in 0u64..1000, a in 0.0f64..1.0, len in 0.001f64..0.5) {
            let f = random_file(50, 768, seed);
            let (start, end) = (a, a + len);
            let got = aggregate(&f, start, end).unwrap();
            let sel: Vec<usize> = (0..50).filter(|&i| {
                let m = (i as f64 + 0.5) * 0.02;
                m >= start && m < end
            }).collect();
            let sel = if sel.is_empty() {
                let c = 0.5 * (start + end);
                vec![(0..50).min_by(|&i, &j| {
                    let di = ((i as f64 + 0.5) * 0.02 - c).abs();
                    let dj = ((j as f64 + 0.5) * 0.02 - c).abs();
                    di.total_cmp(&dj)
                }).unwrap()]
            } else { sel };
            for d in 0..768 {
                let col: Vec<f64> = sel.iter().map(|&i| f64::from(f.data[i * 768 + d])).collect();
                let want = col.iter().sum::<f64>() / col.len() as f64;
                prop_assert!((got[d] - want).abs() < 1e-9);
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(got[d] >= lo - 1e-12 && got[d] <= hi + 1e-12);
            }
        }

        #[test]
        fn permutation_invariant(seed in 0u64..500) {
            let f = random_file(6, 16, seed);
            let mut rev = f.clone();
            for i in 0..6 {
                rev.data[i * 16..(i + 1) * 16].copy_from_slice(f.frame(5 - i));
            }
            let a = aggregate(&f, 0.0, 0.12).unwrap();
            let b = aggregate(&rev, 0.0, 0.12).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
