//! Heuristic per-syllable features.
//!
//! Frame contours (short-time energy, sonority-weighted energy, F0) are
//! summarised over each syllable into 19 acoustic statistics and joined with a
//! 19-bit context vector, giving 38 columns per syllable.

mod contours;
mod features;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

pub use contours::{compute_contours, Contours, PhonemeTimeline, ProsodyConfig, SonorityWeights};
pub use features::{
    acoustic_features, context_features, heuristic_layout, AcousticFeatures, ContextFeatures,
    ACOUSTIC_DIM, ACOUSTIC_NAMES, CONTEXT_DIM, CONTEXT_NAMES, HEURISTIC_DIM,
};

use crate::audio::{read_wav, AudioError, Waveform};
use crate::corpus::{SyllableKey, Utterance};
use crate::featfile::{FeatureRow, FeatureTable};

#[derive(Debug, Error)]
pub enum ProsodyError {
    #[error("input of {samples} samples is shorter than one {window}-sample window")]
    TooShort { samples: usize, window: usize },
    #[error("no analysis frame has its midpoint in [{start}, {end})")]
    NoFrames { start: f64, end: f64 },
    #[error("audio: {0}")]
    Audio(#[from] AudioError),
    #[error("{0}")]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error("{0}")]
    Message(String),
}

/// Syllables that could not be featurised.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedSyllable {
    pub key: SyllableKey,
    pub reason: String,
}

fn utterance_rows(
    u: &Utterance,
    audio: Result<&Waveform, ProsodyError>,
    cfg: &ProsodyConfig,
) -> (Vec<FeatureRow>, Vec<SkippedSyllable>) {
    let keys = || {
        u.words.iter().flat_map(move |w| {
            w.syllables
                .iter()
                .map(move |s| SyllableKey::new(&u.id, &w.id, s.index as u16))
        })
    };
    let contours = (|| -> Result<Contours, ProsodyError> {
        let w = audio?;
        u.check_duration(w.duration_s())?;
        compute_contours(&w, &PhonemeTimeline::from_utterance(u), cfg)
    })();
    let c = match contours {
        Ok(c) => c,
        Err(e) => {
            let reason = e.to_string();
            let skipped = keys()
                .map(|key| SkippedSyllable {
                    key,
                    reason: reason.clone(),
                })
                .collect();
            return (Vec::new(), skipped);
        }
    };
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for w in &u.words {
        for (i, s) in w.syllables.iter().enumerate() {
            let key = SyllableKey::new(&u.id, &w.id, s.index as u16);
            match acoustic_features(&c, s, w) {
                Ok(a) => {
                    let ctx = context_features(w, i).to_f64();
                    rows.push(FeatureRow {
                        key,
                        label: s.stress.label(),
                        features: a.0.iter().chain(&ctx).map(|&v| v as f32).collect(),
                    });
                }
                Err(e) => skipped.push(SkippedSyllable {
                    key,
                    reason: e.to_string(),
                }),
            }
        }
    }
    (rows, skipped)
}

pub fn audio_path(audio_dir: &Path, u: &Utterance) -> PathBuf {
    audio_dir.join(&u.audio_path)
}

/// 38-column heuristic rows for every syllable, in corpus order.
pub fn feature_table(
    utterances: &[Utterance],
    audio_dir: &Path,
    cfg: &ProsodyConfig,
) -> (FeatureTable, Vec<SkippedSyllable>) {
    let parts: Vec<_> = utterances
        .par_iter()
        .map(|u| {
            let w = read_wav(audio_path(audio_dir, u)).map_err(ProsodyError::from);
            utterance_rows(u, w.as_ref().map_err(clone_err), cfg)
        })
        .collect();
    assemble(parts)
}

/// As [`feature_table`], with audio already in memory (same order as `utterances`).
pub fn feature_table_from_audio(
    utterances: &[Utterance],
    audio: &[Waveform],
    cfg: &ProsodyConfig,
) -> (FeatureTable, Vec<SkippedSyllable>) {
    let parts: Vec<_> = utterances
        .par_iter()
        .zip(audio)
        .map(|(u, w)| utterance_rows(u, Ok(w), cfg))
        .collect();
    assemble(parts)
}

fn clone_err(e: &ProsodyError) -> ProsodyError {
    ProsodyError::Message(e.to_string())
}

fn assemble(parts: Vec<(Vec<FeatureRow>, Vec<SkippedSyllable>)>) -> (FeatureTable, Vec<SkippedSyllable>) {
    let mut table = FeatureTable::new(HEURISTIC_DIM, &heuristic_layout());
    let mut skipped = Vec::new();
    for (rows, sk) in parts {
        table.rows.extend(rows);
        skipped.extend(sk);
    }
    (table, skipped)
}
