//! In-memory benchmark runs on a synthetic corpus: condition audio, heuristic
//! features, folds over the training partition and cross-validation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::audio::{quantize, Waveform};
use crate::corpus::{make_folds, syllable_table, FoldAssignment, FoldError, SynthCorpus, Utterance};
use crate::degrade::{add_noise, utterance_seed, DegradeError, NoiseCondition};
use crate::enhance::{enhance, EnhanceError, Enhancer, DEFAULT_HEAD_MS};
use crate::eval::{run_cv, Condition, EvalError, EvalRun};
use crate::featfile::FeatureTable;
use crate::model::TrainConfig;
use crate::prosody::{feature_table_from_audio, ProsodyConfig};
use crate::rng::{derive_seed, uniform_rng};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{utt}: {source}")]
    Degrade {
        utt: String,
        #[source]
        source: DegradeError,
    },
    #[error("{utt}: {source}")]
    Enhance {
        utt: String,
        #[source]
        source: EnhanceError,
    },
    #[error("enhanced condition needs an enhancer named {0:?}")]
    UnknownSystem(String),
    #[error("{count} syllables could not be featurised, e.g. {example}")]
    Skipped { count: usize, example: String },
    #[error(transparent)]
    Folds(#[from] FoldError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Rounds every sample onto the PCM16 grid, as a WAV round trip would.
pub fn pcm16_lattice(w: &Waveform) -> Waveform {
    let mut out = w.clone();
    for s in &mut out.samples {
        *s = f64::from(quantize(*s)) / 32768.0;
    }
    out
}

/// Audio for `condition`. Noise seeds derive from `noise_seed` and the
/// utterance id, so every SNR of one utterance shares a noise sequence.
pub fn condition_audio(
    utterances: &[Utterance],
    clean: &[Waveform],
    condition: &Condition,
    noise_seed: u64,
    enhancers: &[Enhancer],
) -> Result<Vec<Waveform>, PipelineError> {
    use rayon::prelude::*;
    let (snr, enhancer) = match condition {
        Condition::Clean => return Ok(clean.to_vec()),
        Condition::Noisy { snr_db } => (*snr_db, None),
        Condition::Enhanced { system, snr_db } => {
            let e = enhancers
                .iter()
                .find(|e| &e.name == system)
                .ok_or_else(|| PipelineError::UnknownSystem(system.clone()))?;
            (*snr_db, Some(e))
        }
    };
    utterances
        .par_iter()
        .zip(clean)
        .map(|(u, w)| {
            let cond = NoiseCondition {
                snr_db: f64::from(snr),
                seed: utterance_seed(noise_seed, &u.id),
            };
            let mix = add_noise(w, cond).map_err(|source| PipelineError::Degrade {
                utt: u.id.clone(),
                source,
            })?;
            let noisy = pcm16_lattice(&mix.mixed);
            match enhancer {
                None => Ok(noisy),
                Some(e) => enhance(&noisy, e, DEFAULT_HEAD_MS)
                    .map(|w| pcm16_lattice(&w))
                    .map_err(|source| PipelineError::Enhance {
                        utt: u.id.clone(),
                        source,
                    }),
            }
        })
        .collect()
}

/// Permutes the labels within each word, keeping one stressed syllable per word.
pub fn shuffle_labels(table: &mut FeatureTable, seed: u64) {
    let mut words: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
    for (i, r) in table.rows.iter().enumerate() {
        words.entry(r.key.word_key()).or_default().push(i);
    }
    let mut rng = uniform_rng(derive_seed(seed, "label-shuffle"));
    for idx in words.values() {
        let mut labels: Vec<u8> = idx.iter().map(|&i| table.rows[i].label).collect();
        labels.shuffle(&mut rng);
        for (&i, l) in idx.iter().zip(labels) {
            table.rows[i].label = l;
        }
    }
}

/// Folds over the training partition of a synthetic corpus.
pub fn training_folds(corpus: &SynthCorpus, k: usize, seed: u64) -> Result<FoldAssignment, FoldError> {
    let train: Vec<Utterance> = corpus
        .utterances
        .iter()
        .zip(&corpus.split)
        .filter(|(_, (_, is_train))| *is_train)
        .map(|(u, _)| u.clone())
        .collect();
    make_folds(&syllable_table(&train), k, seed)
}

/// One benchmark run.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub condition: Condition,
    pub noise_seed: u64,
    pub enhancers: Vec<Enhancer>,
    /// Shuffle labels with this seed before training.
    pub shuffle_seed: Option<u64>,
    pub prosody: ProsodyConfig,
    pub train: TrainConfig,
}

impl RunSpec {
    pub fn new(condition: Condition, train: TrainConfig) -> Self {
        Self {
            condition,
            noise_seed: 0,
            enhancers: vec![Enhancer::spectral_subtraction(
                crate::enhance::DEFAULT_ALPHA,
                crate::enhance::DEFAULT_BETA,
            ), Enhancer::wiener(crate::enhance::DEFAULT_SMOOTHING)],
            shuffle_seed: None,
            prosody: ProsodyConfig::default(),
            train,
        }
    }
}

/// Heuristic features for the run's condition.
pub fn condition_features(corpus: &SynthCorpus, spec: &RunSpec) -> Result<FeatureTable, PipelineError> {
    let audio = condition_audio(
        &corpus.utterances,
        &corpus.audio,
        &spec.condition,
        spec.noise_seed,
        &spec.enhancers,
    )?;
    let (mut table, skipped) = feature_table_from_audio(&corpus.utterances, &audio, &spec.prosody);
    if let Some(first) = skipped.first() {
        return Err(PipelineError::Skipped {
            count: skipped.len(),
            example: format!("{}: {}", first.key, first.reason),
        });
    }
    if let Some(seed) = spec.shuffle_seed {
        shuffle_labels(&mut table, seed);
    }
    Ok(table)
}

/// Features, then cross-validation over `folds`.
pub fn run_synthetic(
    corpus: &SynthCorpus,
    folds: &FoldAssignment,
    spec: &RunSpec,
) -> Result<EvalRun, PipelineError> {
    let table = condition_features(corpus, spec)?;
    Ok(run_cv(&table, folds, &spec.train, spec.condition.clone(), "heuristic", None)?)
}
