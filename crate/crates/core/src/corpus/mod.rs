//! Stress-annotated corpus model: utterances, words, syllables and phonemes.
//!
//! Alignments arrive as a tab-separated file with one syllable per row (see
//! [`tsv`]). Syllabification is an input; nothing here recomputes it.

pub mod folds;
pub mod phoneme;
pub mod synth;
pub mod tsv;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use folds::{make_folds, read_folds, write_folds, FoldAssignment, FoldError};
pub use phoneme::{category_of, nucleus_class_of, NucleusClass, PhonemeCategory};
pub use synth::{synth_corpus, SynthCorpus, SynthSpec};
pub use tsv::{parse_alignments, parse_alignments_str, write_alignments, ParsedCorpus, RecordError};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),
    #[error("audio: {0}")]
    Audio(#[from] crate::audio::AudioError),
    #[error("timestamp {time_s:.3}s in utterance {utt_id} exceeds audio duration {duration_s:.3}s")]
    BeyondAudio {
        utt_id: String,
        time_s: f64,
        duration_s: f64,
    },
    #[error("line {line}: {message}")]
    Split { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dataset {
    #[serde(rename = "GER")]
    Ger,
    #[serde(rename = "ITA")]
    Ita,
    #[serde(rename = "SYNTH")]
    Synth,
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dataset::Ger => "GER",
            Dataset::Ita => "ITA",
            Dataset::Synth => "SYNTH",
        })
    }
}

impl FromStr for Dataset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "GER" => Ok(Dataset::Ger),
            "ITA" => Ok(Dataset::Ita),
            "SYNTH" => Ok(Dataset::Synth),
            other => Err(format!("unknown dataset {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stress {
    Stressed,
    Unstressed,
}

impl Stress {
    pub fn label(self) -> u8 {
        match self {
            Stress::Stressed => 1,
            Stress::Unstressed => 0,
        }
    }

    pub fn from_label(v: u8) -> Self {
        if v == 1 {
            Stress::Stressed
        } else {
            Stress::Unstressed
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phoneme {
    pub symbol: String,
    pub category: PhonemeCategory,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Syllable {
    pub index: usize,
    pub start: f64,
    pub end: f64,
    pub phonemes: Vec<Phoneme>,
    pub nucleus_index: usize,
    pub stress: Stress,
    /// Nucleus is not a vowel.
    pub degenerate: bool,
}

impl Syllable {
    pub fn nucleus(&self) -> &Phoneme {
        &self.phonemes[self.nucleus_index]
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Word {
    pub id: String,
    pub text: String,
    pub syllables: Vec<Syllable>,
    pub follows_pause: bool,
    pub precedes_pause: bool,
}

impl Word {
    pub fn start(&self) -> f64 {
        self.syllables.first().map_or(0.0, |s| s.start)
    }

    pub fn end(&self) -> f64 {
        self.syllables.last().map_or(0.0, |s| s.end)
    }

    pub fn stressed_index(&self) -> Option<usize> {
        self.syllables
            .iter()
            .position(|s| s.stress == Stress::Stressed)
    }

    pub fn labels(&self) -> Vec<u8> {
        self.syllables.iter().map(|s| s.stress.label()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub dataset: Dataset,
    pub speaker: String,
    /// Relative to the audio directory the corpus is paired with.
    pub audio_path: String,
    pub sample_rate: u32,
    pub words: Vec<Word>,
}

impl Utterance {
    pub fn last_timestamp(&self) -> f64 {
        self.words.iter().map(Word::end).fold(0.0, f64::max)
    }

    /// Checks that every alignment timestamp fits inside the audio.
    pub fn check_duration(&self, duration_s: f64) -> Result<(), CorpusError> {
        // Half a sample of slack for timestamps written at sample resolution.
        let slack = 0.5 / f64::from(self.sample_rate);
        let last = self.last_timestamp();
        if last > duration_s + slack {
            return Err(CorpusError::BeyondAudio {
                utt_id: self.id.clone(),
                time_s: last,
                duration_s,
            });
        }
        Ok(())
    }
}

/// Identifies one syllable across feature files, folds and predictions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SyllableKey {
    pub utt_id: String,
    pub word_id: String,
    pub syll_idx: u16,
}

impl SyllableKey {
    pub fn new(utt_id: impl Into<String>, word_id: impl Into<String>, syll_idx: u16) -> Self {
        Self {
            utt_id: utt_id.into(),
            word_id: word_id.into(),
            syll_idx,
        }
    }

    /// Key of the word this syllable belongs to.
    pub fn word_key(&self) -> (String, String) {
        (self.utt_id.clone(), self.word_id.clone())
    }
}

impl fmt::Display for SyllableKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.utt_id, self.word_id, self.syll_idx)
    }
}

/// Keeps words with at least two syllables; drops utterances left empty.
pub fn filter_polysyllabic(utterances: Vec<Utterance>) -> Vec<Utterance> {
    utterances
        .into_iter()
        .filter_map(|mut u| {
            u.words.retain(|w| w.syllables.len() >= 2);
            (!u.words.is_empty()).then_some(u)
        })
        .collect()
}

/// All syllables in corpus order as (key, word index, label).
pub fn syllable_table(utterances: &[Utterance]) -> Vec<(SyllableKey, u8)> {
    let mut out = Vec::new();
    for u in utterances {
        for w in &u.words {
            for s in &w.syllables {
                out.push((
                    SyllableKey::new(&u.id, &w.id, s.index as u16),
                    s.stress.label(),
                ));
            }
        }
    }
    out
}

/// Reads a train/test split file: `utt_id<TAB>train|test` per line.
pub fn read_split(path: impl AsRef<std::path::Path>) -> Result<Vec<(String, bool)>, CorpusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') || line.starts_with("utt_id\t") {
            continue;
        }
        let mut cols = line.split('\t');
        let (Some(utt), Some(part), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(CorpusError::Split {
                line: i + 1,
                message: "expected 2 columns".into(),
            });
        };
        let train = match part {
            "train" => true,
            "test" => false,
            other => {
                return Err(CorpusError::Split {
                    line: i + 1,
                    message: format!("partition must be train|test, got {other:?}"),
                })
            }
        };
        out.push((utt.to_string(), train));
    }
    Ok(out)
}

pub fn write_split(entries: &[(String, bool)]) -> String {
    let mut s = String::from("utt_id\tpartition\n");
    for (utt, train) in entries {
        s.push_str(utt);
        s.push('\t');
        s.push_str(if *train { "train" } else { "test" });
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn word(id: &str, n: usize) -> Word {
        let syllables = (0..n)
            .map(|i| Syllable {
                index: i,
                start: i as f64 * 0.2,
                end: i as f64 * 0.2 + 0.2,
                phonemes: vec![Phoneme {
                    symbol: "ah".into(),
                    category: PhonemeCategory::Vowel,
                    start: i as f64 * 0.2,
                    end: i as f64 * 0.2 + 0.2,
                }],
                nucleus_index: 0,
                stress: if i == 0 {
                    Stress::Stressed
                } else {
                    Stress::Unstressed
                },
                degenerate: false,
            })
            .collect();
        Word {
            id: id.into(),
            text: id.into(),
            syllables,
            follows_pause: true,
            precedes_pause: true,
        }
    }

    fn utt(id: &str, sizes: &[usize]) -> Utterance {
        Utterance {
            id: id.into(),
            dataset: Dataset::Synth,
            speaker: "s".into(),
            audio_path: format!("{id}.wav"),
            sample_rate: 16000,
            words: sizes
                .iter()
                .enumerate()
                .map(|(i, &n)| word(&format!("w{i}"), n))
                .collect(),
        }
    }

    #[test]
    fn filter_drops_monosyllables() {
        let corpus = vec![utt("a", &[1, 2, 3, 1, 2]), utt("b", &[1, 4, 1, 2, 2])];
        let total: usize = corpus.iter().map(|u| u.words.len()).sum();
        let oracle = corpus
            .iter()
            .flat_map(|u| &u.words)
            .filter(|w| w.syllables.len() >= 2)
            .count();
        assert_eq!(total, 10);
        assert_eq!(oracle, 6);
        let kept = filter_polysyllabic(corpus);
        assert_eq!(kept.iter().map(|u| u.words.len()).sum::<usize>(), 6);
    }

    #[test]
    fn filter_drops_empty_utterances_and_is_idempotent() {
        let corpus = vec![utt("a", &[1, 1]), utt("b", &[2])];
        let once = filter_polysyllabic(corpus);
        assert_eq!(once.len(), 1);
        assert_eq!(once[0].id, "b");
        assert_eq!(filter_polysyllabic(once.clone()), once);
    }

    #[test]
    fn duration_check() {
        let u = utt("a", &[2]);
        assert!(u.check_duration(0.4).is_ok());
        assert!(u.check_duration(0.3).is_err());
    }

    #[test]
    fn split_round_trip() {
        let entries = vec![("u1".to_string(), true), ("u2".to_string(), false)];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("split.tsv");
        std::fs::write(&p, write_split(&entries)).unwrap();
        assert_eq!(read_split(&p).unwrap(), entries);
    }
}
