//! Word-grouped, stratified k-fold assignment.
//!
//! Words are stratified by (syllable count, stressed position), shuffled
//! within each stratum, then dealt to folds in a snake order that continues
//! across strata. This keeps word counts within one of each other and keeps
//! every fold's stressed fraction close to the global one. A swap-based
//! repair pass handles the residual cases.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use thiserror::Error;

use super::SyllableKey;
use crate::rng::{derive_seed, uniform_rng};

/// Maximum allowed |fold stressed fraction - global stressed fraction|.
pub const BALANCE_TOLERANCE: f64 = 0.02;

#[derive(Debug, Error)]
pub enum FoldError {
    #[error("need at least {k} words for {k} folds, found {words}")]
    TooFewWords { k: usize, words: usize },
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("could not balance folds: fold {fold} stressed fraction {fraction:.4} vs global {global:.4}")]
    Unbalanced {
        fold: usize,
        fraction: f64,
        global: f64,
    },
    #[error("fold file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of_syllable: BTreeMap<SyllableKey, usize>,
}

/// Per-fold syllable counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FoldCounts {
    pub words: usize,
    pub syllables: usize,
    pub stressed: usize,
}

impl FoldCounts {
    pub fn stressed_fraction(&self) -> f64 {
        if self.syllables == 0 {
            0.0
        } else {
            self.stressed as f64 / self.syllables as f64
        }
    }
}

impl FoldAssignment {
    pub fn fold_of(&self, key: &SyllableKey) -> Option<usize> {
        self.fold_of_syllable.get(key).copied()
    }

    /// Counts per fold, given the label of each syllable.
    pub fn counts(&self, labels: &HashMap<SyllableKey, u8>) -> Vec<FoldCounts> {
        let mut counts = vec![FoldCounts::default(); self.k];
        let mut seen_words = std::collections::HashSet::new();
        for (key, &fold) in &self.fold_of_syllable {
            let c = &mut counts[fold];
            c.syllables += 1;
            if labels.get(key) == Some(&1) {
                c.stressed += 1;
            }
            if seen_words.insert(key.word_key()) {
                c.words += 1;
            }
        }
        counts
    }
}

#[derive(Debug, Clone)]
struct WordGroup {
    keys: Vec<SyllableKey>,
    labels: Vec<u8>,
    stressed: usize,
}

/// Assigns every syllable to one of `k` folds, keeping words together.
pub fn make_folds(
    syllables: &[(SyllableKey, u8)],
    k: usize,
    seed: u64,
) -> Result<FoldAssignment, FoldError> {
    if k < 2 {
        return Err(FoldError::InvalidK(k));
    }
    // Group by word, preserving first-appearance order.
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: HashMap<(String, String), WordGroup> = HashMap::new();
    for (key, label) in syllables {
        let wk = key.word_key();
        let g = groups.entry(wk.clone()).or_insert_with(|| {
            order.push(wk);
            WordGroup {
                keys: Vec::new(),
                labels: Vec::new(),
                stressed: 0,
            }
        });
        g.keys.push(key.clone());
        g.labels.push(*label);
        g.stressed += usize::from(*label == 1);
    }
    if order.len() < k {
        return Err(FoldError::TooFewWords {
            k,
            words: order.len(),
        });
    }
    let words: Vec<WordGroup> = order.iter().map(|wk| groups.remove(wk).unwrap()).collect();

    // Strata keyed by (syllable count, stressed position); larger words first.
    let mut strata: BTreeMap<(std::cmp::Reverse<usize>, usize), Vec<usize>> = BTreeMap::new();
    for (i, w) in words.iter().enumerate() {
        let pos = w.labels.iter().position(|&l| l == 1).unwrap_or(usize::MAX);
        strata
            .entry((std::cmp::Reverse(w.keys.len()), pos))
            .or_default()
            .push(i);
    }
    let mut rng = uniform_rng(derive_seed(seed, "folds"));
    let mut dealt = Vec::with_capacity(words.len());
    for members in strata.values_mut() {
        members.shuffle(&mut rng);
        dealt.extend(members.iter().copied());
    }
    let mut fold_labels: Vec<usize> = (0..k).collect();
    fold_labels.shuffle(&mut rng);

    let mut fold_of_word = vec![0usize; words.len()];
    for (pos, &wi) in dealt.iter().enumerate() {
        let round = pos / k;
        let slot = pos % k;
        let slot = if round % 2 == 0 { slot } else { k - 1 - slot };
        fold_of_word[wi] = fold_labels[slot];
    }

    repair_balance(&words, &mut fold_of_word, k);

    let total_syl: usize = words.iter().map(|w| w.keys.len()).sum();
    let total_str: usize = words.iter().map(|w| w.stressed).sum();
    let global = total_str as f64 / total_syl as f64;
    let (syl, stressed) = fold_totals(&words, &fold_of_word, k);
    for f in 0..k {
        let frac = stressed[f] as f64 / syl[f] as f64;
        if (frac - global).abs() > BALANCE_TOLERANCE {
            return Err(FoldError::Unbalanced {
                fold: f,
                fraction: frac,
                global,
            });
        }
    }

    let mut fold_of_syllable = BTreeMap::new();
    for (w, &f) in words.iter().zip(&fold_of_word) {
        for key in &w.keys {
            fold_of_syllable.insert(key.clone(), f);
        }
    }
    Ok(FoldAssignment {
        k,
        fold_of_syllable,
    })
}

fn fold_totals(words: &[WordGroup], fold_of_word: &[usize], k: usize) -> (Vec<usize>, Vec<usize>) {
    let mut syl = vec![0usize; k];
    let mut stressed = vec![0usize; k];
    for (w, &f) in words.iter().zip(fold_of_word) {
        syl[f] += w.keys.len();
        stressed[f] += w.stressed;
    }
    (syl, stressed)
}

/// Swaps words between folds (preserving per-fold word counts) while doing so
/// reduces the worst deviation from the global stressed fraction.
fn repair_balance(words: &[WordGroup], fold_of_word: &mut [usize], k: usize) {
    let total_syl: usize = words.iter().map(|w| w.keys.len()).sum();
    let total_str: usize = words.iter().map(|w| w.stressed).sum();
    let global = total_str as f64 / total_syl as f64;
    let worst = |syl: &[usize], st: &[usize]| {
        (0..k)
            .map(|f| (st[f] as f64 / syl[f].max(1) as f64 - global).abs())
            .fold(0.0, f64::max)
    };
    for _ in 0..words.len() * 4 {
        let (syl, st) = fold_totals(words, fold_of_word, k);
        let current = worst(&syl, &st);
        if current <= BALANCE_TOLERANCE {
            return;
        }
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..words.len() {
            for b in a + 1..words.len() {
                let (fa, fb) = (fold_of_word[a], fold_of_word[b]);
                if fa == fb || words[a].keys.len() == words[b].keys.len() {
                    continue;
                }
                let mut s2 = syl.clone();
                let mut t2 = st.clone();
                s2[fa] = s2[fa] - words[a].keys.len() + words[b].keys.len();
                s2[fb] = s2[fb] - words[b].keys.len() + words[a].keys.len();
                t2[fa] = t2[fa] - words[a].stressed + words[b].stressed;
                t2[fb] = t2[fb] - words[b].stressed + words[a].stressed;
                let w = worst(&s2, &t2);
                if w < current - 1e-12 && best.is_none_or(|(bw, _, _)| w < bw) {
                    best = Some((w, a, b));
                }
            }
        }
        match best {
            Some((_, a, b)) => fold_of_word.swap(a, b),
            None => return,
        }
    }
}

/// Fold file: `utt_id  word_id  syll_idx  fold` with a header row.
pub fn write_folds(assignment: &FoldAssignment) -> String {
    let mut s = format!("# k={}\nutt_id\tword_id\tsyll_idx\tfold\n", assignment.k);
    for (key, fold) in &assignment.fold_of_syllable {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            key.utt_id, key.word_id, key.syll_idx, fold
        ));
    }
    s
}

pub fn read_folds(path: impl AsRef<Path>) -> Result<FoldAssignment, FoldError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| FoldError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_folds(&text)
}

pub fn parse_folds(text: &str) -> Result<FoldAssignment, FoldError> {
    let mut k = None;
    let mut fold_of_syllable = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let err = |message: String| FoldError::Parse {
            line: i + 1,
            message,
        };
        if let Some(rest) = line.strip_prefix("# k=") {
            k = Some(
                rest.trim()
                    .parse::<usize>()
                    .map_err(|_| err(format!("bad k {rest:?}")))?,
            );
            continue;
        }
        if line.is_empty() || line.starts_with('#') || line.starts_with("utt_id\t") {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(err(format!("expected 4 columns, found {}", cols.len())));
        }
        let syll: u16 = cols[2]
            .parse()
            .map_err(|_| err(format!("bad syll_idx {:?}", cols[2])))?;
        let fold: usize = cols[3]
            .parse()
            .map_err(|_| err(format!("bad fold {:?}", cols[3])))?;
        fold_of_syllable.insert(SyllableKey::new(cols[0], cols[1], syll), fold);
    }
    let max_fold = fold_of_syllable.values().copied().max().map_or(0, |m| m + 1);
    let k = k.unwrap_or(max_fold).max(max_fold);
    Ok(FoldAssignment {
        k,
        fold_of_syllable,
    })
}
