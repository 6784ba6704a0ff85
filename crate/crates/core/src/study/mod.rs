//! Listening study: clean reference against three blinded enhanced versions
//! of the same word, forced choice of the closest match.
//!
//! Trials name audio by opaque refs; the slot-to-system mapping never leaves
//! the server. Responses go to an append-only JSON-lines log.

mod server;
mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Dataset, SyllableKey, Utterance};
use crate::rng::{derive_seed, uniform_rng};

pub use server::{router, Clock, StudyService};
pub use store::{read_log, ResponseLog, StoreError};

pub const SLOTS: [&str; 3] = ["A", "B", "C"];

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("a study needs exactly 3 distinct systems, got {0:?}")]
    Systems(Vec<String>),
    #[error("missing candidate audio: {}", .0.join(", "))]
    MissingAudio(Vec<String>),
    #[error("word {word} not found in utterance {utt}")]
    UnknownWord { utt: String, word: String },
    #[error("no prediction for {key} under {system}")]
    MissingPrediction { system: String, key: SyllableKey },
    #[error("stats table line {line}: {message}")]
    Table { line: usize, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// A playable clip: the word's span inside one audio file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clip {
    #[serde(rename = "ref")]
    pub audio_ref: String,
    /// Relative to the study audio root.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub slot: String,
    pub system: String,
    pub clip: Clip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub trial_id: String,
    pub dataset: Dataset,
    pub utt_id: String,
    pub word_id: String,
    pub word: String,
    pub start_s: f64,
    pub end_s: f64,
    pub syllables: u16,
    pub reference: Clip,
    /// In presentation order (slots A, B, C).
    pub candidates: Vec<Candidate>,
    pub shuffle_seed: u64,
}

impl Trial {
    pub fn system_for_slot(&self, slot: &str) -> Option<&str> {
        self.candidates
            .iter()
            .find(|c| c.slot == slot)
            .map(|c| c.system.as_str())
    }

    pub fn syllable_keys(&self) -> Vec<SyllableKey> {
        (0..self.syllables)
            .map(|i| SyllableKey::new(&self.utt_id, &self.word_id, i))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSet {
    pub systems: Vec<String>,
    pub trials: Vec<Trial>,
}

impl TrialSet {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serialisable") + "\n"
    }

    pub fn read(path: &Path) -> Result<Self, StudyError> {
        let io = |message: String| StudyError::Io {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| io(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| io(e.to_string()))
    }
}

/// Candidate order for one trial: a permutation of 0..3 drawn from `seed`.
pub fn candidate_order(seed: u64) -> [usize; 3] {
    let mut order = [0, 1, 2];
    order.shuffle(&mut uniform_rng(seed));
    order
}

/// Picks up to `per_dataset` polysyllabic words from each dataset, returned
/// as (utterance index, word index) in corpus order.
pub fn select_words(utterances: &[Utterance], per_dataset: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut by_dataset: BTreeMap<Dataset, Vec<(usize, usize)>> = BTreeMap::new();
    for (ui, u) in utterances.iter().enumerate() {
        for (wi, w) in u.words.iter().enumerate() {
            if w.syllables.len() >= 2 {
                by_dataset.entry(u.dataset).or_default().push((ui, wi));
            }
        }
    }
    let mut rng = uniform_rng(derive_seed(seed, "study/select"));
    let mut picked = Vec::new();
    for (_, mut words) in by_dataset {
        words.shuffle(&mut rng);
        words.truncate(per_dataset);
        picked.extend(words);
    }
    picked.sort_unstable();
    picked
}

/// One trial per selected word. Audio lives at `{root}/{clean_dir}/{audio_path}`
/// and `{root}/{system}/{audio_path}`.
pub fn build_study(
    utterances: &[Utterance],
    words: &[(usize, usize)],
    audio_root: &Path,
    clean_dir: &str,
    systems: &[String],
    seed: u64,
) -> Result<TrialSet, StudyError> {
    let distinct: BTreeSet<&String> = systems.iter().collect();
    if systems.len() != 3 || distinct.len() != 3 {
        return Err(StudyError::Systems(systems.to_vec()));
    }
    let mut missing = Vec::new();
    let mut trials = Vec::with_capacity(words.len());
    for (n, &(ui, wi)) in words.iter().enumerate() {
        let u = &utterances[ui];
        let w = u.words.get(wi).ok_or_else(|| StudyError::UnknownWord {
            utt: u.id.clone(),
            word: wi.to_string(),
        })?;
        let trial_id = format!("t{n:03}");
        let rel = |dir: &str| format!("{dir}/{}", u.audio_path);
        for dir in std::iter::once(clean_dir).chain(systems.iter().map(String::as_str)) {
            if !audio_root.join(rel(dir)).is_file() {
                missing.push(format!("{}/{} ({dir})", u.id, w.id));
            }
        }
        let shuffle_seed = derive_seed(seed, &format!("study/{trial_id}"));
        let candidates = candidate_order(shuffle_seed)
            .iter()
            .zip(SLOTS)
            .map(|(&s, slot)| Candidate {
                slot: slot.to_string(),
                system: systems[s].clone(),
                clip: Clip {
                    audio_ref: format!("{trial_id}-{slot}"),
                    path: rel(&systems[s]),
                },
            })
            .collect();
        trials.push(Trial {
            reference: Clip {
                audio_ref: format!("{trial_id}-ref"),
                path: rel(clean_dir),
            },
            trial_id,
            dataset: u.dataset,
            utt_id: u.id.clone(),
            word_id: w.id.clone(),
            word: w.text.clone(),
            start_s: w.start(),
            end_s: w.end(),
            syllables: w.syllables.len() as u16,
            candidates,
            shuffle_seed,
        });
    }
    if !missing.is_empty() {
        return Err(StudyError::MissingAudio(missing));
    }
    Ok(TrialSet {
        systems: systems.to_vec(),
        trials,
    })
}

/// One listener choice, as stored in the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub subject_id: String,
    pub trial_id: String,
    pub dataset: Dataset,
    /// System label behind the chosen slot.
    pub system: String,
    pub response_ms: u64,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemStats {
    pub choices: usize,
    pub percent: f64,
    /// Classifier accuracy (percent) on the same words, if supplied.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub responses: usize,
    pub trials: usize,
    pub systems: BTreeMap<String, SystemStats>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StudyStats {
    pub datasets: BTreeMap<Dataset, DatasetStats>,
}

/// Choice percentages per dataset. Systems in `systems` appear even when
/// never chosen; chosen labels outside it are added.
pub fn compute_stats(responses: &[Response], systems: &[String]) -> StudyStats {
    let mut counts: BTreeMap<Dataset, (BTreeMap<String, usize>, BTreeSet<&str>)> = BTreeMap::new();
    for r in responses {
        let (c, trials) = counts.entry(r.dataset).or_insert_with(|| {
            (systems.iter().map(|s| (s.clone(), 0)).collect(), BTreeSet::new())
        });
        *c.entry(r.system.clone()).or_default() += 1;
        trials.insert(&r.trial_id);
    }
    let datasets = counts
        .into_iter()
        .map(|(d, (c, trials))| {
            let n: usize = c.values().sum();
            let systems = c
                .into_iter()
                .map(|(s, k)| {
                    let st = SystemStats {
                        choices: k,
                        percent: 100.0 * k as f64 / n as f64,
                        accuracy: None,
                    };
                    (s, st)
                })
                .collect();
            let ds = DatasetStats {
                responses: n,
                trials: trials.len(),
                systems,
            };
            (d, ds)
        })
        .collect();
    StudyStats { datasets }
}

/// `predictions[system][key]`: (gold, predicted) pairs, one per model that
/// scored the syllable.
pub type PredictionSet = BTreeMap<String, BTreeMap<SyllableKey, Vec<(u8, u8)>>>;

/// Syllable accuracy (percent, post-processed predictions) per dataset and
/// system over exactly the study words. A syllable scored by several fold
/// models counts once per model, giving the mean of the per-model accuracies.
pub fn paired_accuracy(
    trials: &TrialSet,
    predictions: &PredictionSet,
) -> Result<BTreeMap<(Dataset, String), f64>, StudyError> {
    let mut out = BTreeMap::new();
    for system in predictions.keys() {
        let preds = &predictions[system];
        let mut tally: BTreeMap<Dataset, (usize, usize)> = BTreeMap::new();
        for t in &trials.trials {
            for key in t.syllable_keys() {
                let pairs = preds
                    .get(&key)
                    .filter(|p| !p.is_empty())
                    .ok_or_else(|| StudyError::MissingPrediction {
                        system: system.clone(),
                        key: key.clone(),
                    })?;
                let e = tally.entry(t.dataset).or_default();
                e.0 += pairs.iter().filter(|(g, p)| g == p).count();
                e.1 += pairs.len();
            }
        }
        for (d, (ok, n)) in tally {
            out.insert((d, system.clone()), 100.0 * ok as f64 / n as f64);
        }
    }
    Ok(out)
}

impl StudyStats {
    pub fn attach_accuracy(&mut self, acc: &BTreeMap<(Dataset, String), f64>) {
        for (d, ds) in &mut self.datasets {
            for (s, st) in &mut ds.systems {
                if let Some(&a) = acc.get(&(*d, s.clone())) {
                    st.accuracy = Some(a);
                }
            }
        }
    }
}

pub const TABLE_HEADER: &str = "dataset\tsystem\tchoice\taccuracy\tchoices\tresponses";

fn pct(v: f64) -> String {
    format!("{v:.2}%")
}

/// One row of the similarity table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub dataset: Dataset,
    pub system: String,
    pub choice_percent: f64,
    pub accuracy: Option<f64>,
    pub choices: usize,
    pub responses: usize,
}

/// Similarity table: one row per dataset and system, percentages with two
/// decimals ("45.91%"), "-" where no accuracy is attached.
pub fn export_table(stats: &StudyStats) -> String {
    let mut s = format!("{TABLE_HEADER}\n");
    for (d, ds) in &stats.datasets {
        for (sys, st) in &ds.systems {
            let acc = st.accuracy.map_or_else(|| "-".to_string(), pct);
            s.push_str(&format!(
                "{d}\t{sys}\t{}\t{acc}\t{}\t{}\n",
                pct(st.percent),
                st.choices,
                ds.responses
            ));
        }
    }
    s
}

pub fn import_table(text: &str) -> Result<Vec<TableRow>, StudyError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == TABLE_HEADER => {}
        _ => {
            return Err(StudyError::Table {
                line: 1,
                message: "missing header".into(),
            })
        }
    }
    let parse_pct = |s: &str| s.strip_suffix('%').and_then(|v| v.parse::<f64>().ok());
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let err = |message: &str| StudyError::Table {
            line: i + 1,
            message: message.to_string(),
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(err("expected 6 columns"));
        }
        rows.push(TableRow {
            dataset: f[0].parse().map_err(|e: String| err(&e))?,
            system: f[1].to_string(),
            choice_percent: parse_pct(f[2]).ok_or_else(|| err("bad choice percentage"))?,
            accuracy: match f[3] {
                "-" => None,
                s => Some(parse_pct(s).ok_or_else(|| err("bad accuracy"))?),
            },
            choices: f[4].parse().map_err(|_| err("bad choice count"))?,
            responses: f[5].parse().map_err(|_| err("bad response count"))?,
        });
    }
    Ok(rows)
}

/// Renders imported rows back into the table format.
pub fn rows_to_table(rows: &[TableRow]) -> String {
    let mut s = format!("{TABLE_HEADER}\n");
    for r in rows {
        let acc = r.accuracy.map_or_else(|| "-".to_string(), pct);
        s.push_str(&format!(
            "{}\t{}\t{}\t{acc}\t{}\t{}\n",
            r.dataset,
            r.system,
            pct(r.choice_percent),
            r.choices,
            r.responses
        ));
    }
    s
}
