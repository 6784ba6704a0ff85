use super::{Contours, ProsodyError};
use crate::corpus::{NucleusClass, PhonemeCategory, Syllable, Word};

pub const ACOUSTIC_DIM: usize = 19;
pub const CONTEXT_DIM: usize = 19;
pub const HEURISTIC_DIM: usize = ACOUSTIC_DIM + CONTEXT_DIM;

pub const ACOUSTIC_NAMES: [&str; ACOUSTIC_DIM] = [
    "s_max",
    "s_mean",
    "s_std",
    "s_range",
    "s_argmax_pos",
    "s_max_rise",
    "s_max_fall",
    "f0_max",
    "f0_mean",
    "f0_range",
    "f0_argmax_pos",
    "f0_slope",
    "e_max",
    "e_mean",
    "e_range",
    "syl_dur",
    "nuc_dur",
    "syl_word_ratio",
    "voiced_frac",
];

pub const CONTEXT_NAMES: [&str; CONTEXT_DIM] = [
    "nuc_short",
    "nuc_long",
    "nuc_diph",
    "nuc_syllabic",
    "prev_plosive",
    "prev_fricative",
    "prev_nasal",
    "prev_approximant",
    "prev_vowel",
    "prev_none",
    "next_plosive",
    "next_fricative",
    "next_nasal",
    "next_approximant",
    "next_vowel",
    "next_none",
    "follows_pause",
    "precedes_pause",
    "word_final",
];

/// Column layout of heuristic feature rows, recorded in feature file headers.
pub fn heuristic_layout() -> String {
    let mut s = String::from("heuristic-v1:");
    let names: Vec<&str> = ACOUSTIC_NAMES.iter().chain(&CONTEXT_NAMES).copied().collect();
    s.push_str(&names.join(","));
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcousticFeatures(pub [f64; ACOUSTIC_DIM]);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContextFeatures(pub [bool; CONTEXT_DIM]);

impl ContextFeatures {
    pub fn to_f64(&self) -> [f64; CONTEXT_DIM] {
        self.0.map(|b| if b { 1.0 } else { 0.0 })
    }
}

struct Stats {
    max: f64,
    mean: f64,
    std: f64,
    min: f64,
    argmax: usize,
}

fn stats(v: &[f64]) -> Stats {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let mut argmax = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[argmax] {
            argmax = i;
        }
    }
    Stats {
        max: v[argmax],
        mean,
        std: var.sqrt(),
        min: v.iter().copied().fold(f64::INFINITY, f64::min),
        argmax,
    }
}

/// Least-squares slope of `y` against `x`; zero for fewer than two points.
fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

pub fn acoustic_features(
    c: &Contours,
    syl: &Syllable,
    word: &Word,
) -> Result<AcousticFeatures, ProsodyError> {
    let range = c.frames_in(syl.start, syl.end);
    if range.is_empty() {
        return Err(ProsodyError::NoFrames {
            start: syl.start,
            end: syl.end,
        });
    }
    let n = range.len();
    let pos = |i: usize| (i as f64 + 0.5) / n as f64;
    let mut f = [0.0; ACOUSTIC_DIM];

    let s = &c.sonority[range.clone()];
    let st = stats(s);
    let (mut rise, mut fall) = (0.0f64, 0.0f64);
    for d in s.windows(2).map(|w| (w[1] - w[0]) / c.hop_s) {
        rise = rise.max(d);
        fall = fall.max(-d);
    }
    f[..7].copy_from_slice(&[st.max, st.mean, st.std, st.max - st.min, pos(st.argmax), rise, fall]);

    let voiced: Vec<usize> = range.clone().filter(|&i| c.voicing[i]).collect();
    if !voiced.is_empty() {
        let f0: Vec<f64> = voiced.iter().map(|&i| c.f0[i]).collect();
        let t: Vec<f64> = voiced.iter().map(|&i| c.times[i]).collect();
        let ft = stats(&f0);
        f[7..12].copy_from_slice(&[
            ft.max,
            ft.mean,
            ft.max - ft.min,
            pos(voiced[ft.argmax] - range.start),
            fit_slope(&t, &f0),
        ]);
    }

    let et = stats(&c.energy[range.clone()]);
    f[12..15].copy_from_slice(&[et.max, et.mean, et.max - et.min]);

    let word_dur = word.end() - word.start();
    let nuc = syl.nucleus();
    f[15] = syl.duration();
    f[16] = nuc.end - nuc.start;
    f[17] = if word_dur > 0.0 { syl.duration() / word_dur } else { 0.0 };
    f[18] = voiced.len() as f64 / n as f64;
    Ok(AcousticFeatures(f))
}

fn neighbour_slot(c: Option<PhonemeCategory>) -> usize {
    match c {
        Some(PhonemeCategory::Plosive) => 0,
        Some(PhonemeCategory::Fricative | PhonemeCategory::Affricate) => 1,
        Some(PhonemeCategory::Nasal) => 2,
        Some(PhonemeCategory::Approximant) => 3,
        Some(PhonemeCategory::Vowel) => 4,
        Some(PhonemeCategory::Silence) | None => 5,
    }
}

/// Context bits for syllable `idx` of `word`. Neighbouring phonemes are taken
/// inside the word only; across the word boundary they count as silence.
pub fn context_features(word: &Word, idx: usize) -> ContextFeatures {
    let syl = &word.syllables[idx];
    let mut b = [false; CONTEXT_DIM];
    let nucleus = if syl.degenerate {
        NucleusClass::SyllabicConsonant
    } else {
        crate::corpus::nucleus_class_of(&syl.nucleus().symbol)
    };
    b[match nucleus {
        NucleusClass::ShortMonophthong => 0,
        NucleusClass::LongMonophthong => 1,
        NucleusClass::Diphthong => 2,
        NucleusClass::SyllabicConsonant => 3,
    }] = true;
    let prev = idx
        .checked_sub(1)
        .and_then(|j| word.syllables[j].phonemes.last())
        .map(|p| p.category);
    let next = word
        .syllables
        .get(idx + 1)
        .and_then(|s| s.phonemes.first())
        .map(|p| p.category);
    b[4 + neighbour_slot(prev)] = true;
    b[10 + neighbour_slot(next)] = true;
    b[16] = word.follows_pause;
    b[17] = word.precedes_pause;
    b[18] = idx + 1 == word.syllables.len();
    ContextFeatures(b)
}
