//! Synthetic stress corpus.
//!
//! Each syllable is an onset consonant followed by a harmonic vowel. The
//! stressed syllable of a word gets RMS amplitude ×(1+2δ), duration ×(1+δ) and
//! F0 ×(1+0.5δ) relative to its word-mates; at δ = 0 stressed and unstressed
//! syllables come from the same distribution.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{
    category_of, write_alignments, write_split, CorpusError, Dataset, Phoneme, Stress, Syllable,
    Utterance, Word,
};
use crate::audio::{quantize, rms_slice, write_wav, Waveform, PIPELINE_SAMPLE_RATE};
use crate::rng::{derive_seed, uniform_rng};

const LEAD_SILENCE_S: f64 = 0.30;
const TAIL_SILENCE_S: f64 = 0.20;
const ONSETS: [&str; 7] = ["p", "t", "k", "m", "n", "s", "l"];
const NUCLEI: [&str; 6] = ["ah", "ih", "aa", "iy", "eh", "ey"];

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SynthSpec {
    /// Words in the training partition.
    pub words: usize,
    /// Additional held-out words, written to separate utterances.
    pub test_words: usize,
    pub min_syllables: usize,
    pub max_syllables: usize,
    /// Prominence separation in [0, 1].
    pub delta: f64,
    /// Relative per-syllable jitter on duration and F0.
    pub jitter: f64,
    pub words_per_utterance: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            words: 200,
            test_words: 0,
            min_syllables: 2,
            max_syllables: 2,
            delta: 1.0,
            jitter: 0.1,
            words_per_utterance: 4,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: &str| Err(CorpusError::InvalidSpec(m.to_string()));
        if self.words == 0 {
            return bad("word count must be positive");
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return bad("delta must lie in [0, 1]");
        }
        if self.min_syllables < 1 || self.max_syllables < self.min_syllables {
            return bad("need 1 <= min_syllables <= max_syllables");
        }
        if !(0.0..0.5).contains(&self.jitter) {
            return bad("jitter must lie in [0, 0.5)");
        }
        if self.words_per_utterance == 0 {
            return bad("words_per_utterance must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub utterances: Vec<Utterance>,
    /// Audio, index-aligned with `utterances`.
    pub audio: Vec<Waveform>,
    /// (utt_id, is_train) for every utterance.
    pub split: Vec<(String, bool)>,
}

impl SynthCorpus {
    pub fn alignments_tsv(&self) -> String {
        write_alignments(&self.utterances)
    }

    /// Writes `alignments.tsv`, `split.tsv`, `audio_manifest.tsv` and one
    /// `{utt_id}.wav` per utterance.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<(), CorpusError> {
        let dir = dir.as_ref();
        let io = |source, p: &Path| CorpusError::Io {
            path: p.display().to_string(),
            source,
        };
        std::fs::create_dir_all(dir).map_err(|e| io(e, dir))?;
        let p = dir.join("alignments.tsv");
        std::fs::write(&p, self.alignments_tsv()).map_err(|e| io(e, &p))?;
        let p = dir.join("split.tsv");
        std::fs::write(&p, write_split(&self.split)).map_err(|e| io(e, &p))?;
        let mut manifest = String::from("utt_id\tnum_samples\tsample_rate\n");
        for (u, w) in self.utterances.iter().zip(&self.audio) {
            write_wav(w, dir.join(&u.audio_path))?;
            manifest.push_str(&format!("{}\t{}\t{}\n", u.id, w.len(), w.sample_rate));
        }
        let p = dir.join("audio_manifest.tsv");
        std::fs::write(&p, manifest).map_err(|e| io(e, &p))?;
        Ok(())
    }
}

struct WordPlan {
    syllables: usize,
    stressed: usize,
}

pub fn synth_corpus(spec: &SynthSpec, seed: u64) -> Result<SynthCorpus, CorpusError> {
    spec.validate()?;
    let total = spec.words + spec.test_words;
    let mut rng = uniform_rng(derive_seed(seed, "synth/plan"));
    let counts: Vec<usize> = (0..total)
        .map(|_| rng.random_range(spec.min_syllables..=spec.max_syllables))
        .collect();
    // Stressed positions cycle through 0..n within each syllable-count group,
    // then get shuffled, so every position is equally represented.
    let mut positions: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &n in &counts {
        let v = positions.entry(n).or_default();
        v.push(v.len() % n);
    }
    for v in positions.values_mut() {
        v.shuffle(&mut rng);
    }
    let mut next: BTreeMap<usize, usize> = BTreeMap::new();
    let plans: Vec<WordPlan> = counts
        .iter()
        .map(|&n| {
            let i = next.entry(n).or_insert(0);
            let stressed = positions[&n][*i];
            *i += 1;
            WordPlan {
                syllables: n,
                stressed,
            }
        })
        .collect();

    // Partition into utterances; training words never share an utterance with test words.
    let mut jobs: Vec<(String, bool, &[WordPlan])> = Vec::new();
    let (train, test) = plans.split_at(spec.words);
    for (part, is_train) in [(train, true), (test, false)] {
        for chunk in part.chunks(spec.words_per_utterance) {
            let id = format!("{}{:05}", if is_train { "syn" } else { "tst" }, jobs.len());
            jobs.push((id, is_train, chunk));
        }
    }

    let built: Vec<(Utterance, Waveform)> = jobs
        .par_iter()
        .enumerate()
        .map(|(i, (id, _, words))| build_utterance(spec, seed, i, id, words))
        .collect::<Result<_, _>>()?;
    let split = jobs.iter().map(|(id, t, _)| (id.clone(), *t)).collect();
    let (utterances, audio) = built.into_iter().unzip();
    Ok(SynthCorpus {
        utterances,
        audio,
        split,
    })
}

fn build_utterance(
    spec: &SynthSpec,
    seed: u64,
    index: usize,
    id: &str,
    plans: &[WordPlan],
) -> Result<(Utterance, Waveform), CorpusError> {
    let sr = f64::from(PIPELINE_SAMPLE_RATE);
    let mut rng = uniform_rng(derive_seed(seed, id));
    let mut samples: Vec<f64> = vec![0.0; (LEAD_SILENCE_S * sr) as usize];
    // Pauses between words are decided up front so pause flags are known.
    let pauses: Vec<bool> = (0..plans.len().saturating_sub(1))
        .map(|_| rng.random_bool(0.5))
        .collect();
    let mut words = Vec::with_capacity(plans.len());
    for (wi, plan) in plans.iter().enumerate() {
        if wi > 0 && pauses[wi - 1] {
            let gap = rng.random_range(0.15..0.25);
            samples.extend(std::iter::repeat_n(0.0, (gap * sr) as usize));
        }
        let base_f0 = rng.random_range(100.0..180.0);
        let base_rms = rng.random_range(0.03..0.06);
        let base_dur = rng.random_range(0.16..0.24);
        let mut syllables = Vec::with_capacity(plan.syllables);
        for si in 0..plan.syllables {
            let stressed = si == plan.stressed;
            let (amp_mul, dur_mul, f0_mul) = if stressed {
                (1.0 + 2.0 * spec.delta, 1.0 + spec.delta, 1.0 + 0.5 * spec.delta)
            } else {
                (1.0, 1.0, 1.0)
            };
            let dur = base_dur * dur_mul * (1.0 + spec.jitter * rng.random_range(-1.0..1.0));
            let f0 = base_f0 * f0_mul * (1.0 + spec.jitter * rng.random_range(-1.0..1.0));
            let onset = ONSETS[rng.random_range(0..ONSETS.len())];
            let nucleus = NUCLEI[rng.random_range(0..NUCLEI.len())];
            let total_n = (dur * sr).round() as usize;
            let onset_n = total_n / 4;
            let start_idx = samples.len();
            let mut seg = onset_segment(onset, onset_n, f0, &mut rng);
            seg.extend(vowel_segment(total_n - onset_n, f0, &mut rng));
            let scale = base_rms * amp_mul / rms_slice(&seg).max(1e-12);
            samples.extend(seg.iter().map(|s| s * scale));
            let t = |i: usize| i as f64 / sr;
            let mid = start_idx + onset_n;
            let end_idx = start_idx + total_n;
            syllables.push(Syllable {
                index: si,
                start: t(start_idx),
                end: t(end_idx),
                phonemes: vec![
                    phoneme(onset, t(start_idx), t(mid)),
                    phoneme(nucleus, t(mid), t(end_idx)),
                ],
                nucleus_index: 1,
                stress: if stressed {
                    Stress::Stressed
                } else {
                    Stress::Unstressed
                },
                degenerate: false,
            });
        }
        words.push(Word {
            id: format!("w{wi}"),
            text: format!("synth{}", plan.syllables),
            syllables,
            follows_pause: wi == 0 || pauses[wi - 1],
            precedes_pause: wi + 1 == plans.len() || pauses[wi],
        });
    }
    samples.extend(std::iter::repeat_n(0.0, (TAIL_SILENCE_S * sr) as usize));
    for s in &mut samples {
        *s = f64::from(quantize(*s)) / 32768.0;
    }
    let utt = Utterance {
        id: id.to_string(),
        dataset: Dataset::Synth,
        speaker: format!("spk{}", index % 8),
        audio_path: format!("{id}.wav"),
        sample_rate: PIPELINE_SAMPLE_RATE,
        words,
    };
    Ok((utt, Waveform::new(samples, PIPELINE_SAMPLE_RATE)?))
}

fn phoneme(sym: &str, start: f64, end: f64) -> Phoneme {
    Phoneme {
        symbol: sym.to_string(),
        category: category_of(sym).expect("synth symbols are in the phoneme table"),
        start,
        end,
    }
}

fn harmonic(n: usize, f0: f64, harmonics: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sr = f64::from(PIPELINE_SAMPLE_RATE);
    let phases: Vec<f64> = (0..harmonics).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            (1..=harmonics)
                .filter(|&h| h as f64 * f0 < sr / 2.0)
                .map(|h| (2.0 * PI * h as f64 * f0 * t + phases[h - 1]).sin() / h as f64)
                .sum()
        })
        .collect()
}

fn envelope(seg: &mut [f64], ramp: usize) {
    let n = seg.len();
    let ramp = ramp.min(n / 2).max(1);
    for i in 0..ramp {
        let g = 0.5 - 0.5 * (PI * i as f64 / ramp as f64).cos();
        seg[i] *= g;
        seg[n - 1 - i] *= g;
    }
}

fn vowel_segment(n: usize, f0: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut seg = harmonic(n, f0, 12, rng);
    envelope(&mut seg, 160);
    seg
}

fn onset_segment(sym: &str, n: usize, f0: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut seg: Vec<f64> = match category_of(sym) {
        Some(super::PhonemeCategory::Nasal) | Some(super::PhonemeCategory::Approximant) => {
            harmonic(n, f0, 3, rng).into_iter().map(|v| 0.4 * v).collect()
        }
        Some(super::PhonemeCategory::Fricative) => (0..n)
            .map(|_| 0.15 * rng.random_range(-1.0..1.0))
            .collect(),
        // Plosive: closure silence then a short noise burst.
        _ => (0..n)
            .map(|i| {
                if i >= n * 2 / 3 {
                    0.3 * rng.random_range(-1.0..1.0)
                } else {
                    0.0
                }
            })
            .collect(),
    };
    envelope(&mut seg, 32);
    seg
}
