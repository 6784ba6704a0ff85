//! Cross-validation driver, one-stress-per-word post-processing, accuracy and
//! condition-by-SNR reporting.
//!
//! Feature rows whose keys appear in the fold file form the cross-validation
//! set; every other row is held-out test data scored by all fold models.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{FoldAssignment, SyllableKey};
use crate::featfile::FeatureTable;
use crate::model::{fit, ModelError, Rows, TrainConfig, Trained};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty word")]
    EmptyWord,
    #[error("length mismatch: {predicted} predictions, {gold} labels")]
    LengthMismatch { predicted: usize, gold: usize },
    #[error("{count} fold keys have no feature row, e.g. {example}")]
    KeyMismatch { count: usize, example: SyllableKey },
    #[error("fold {fold}: {source}")]
    Train {
        fold: usize,
        #[source]
        source: ModelError,
    },
    #[error("bad condition {0:?}")]
    Condition(String),
    #[error("report line {line}: {message}")]
    Report { line: usize, message: String },
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

/// Labels with exactly one stressed syllable: the most probable one, the
/// earliest on ties.
pub fn postprocess(probs: &[f64]) -> Result<Vec<u8>, EvalError> {
    if probs.is_empty() {
        return Err(EvalError::EmptyWord);
    }
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    Ok((0..probs.len()).map(|i| (i == best) as u8).collect())
}

pub fn threshold(probs: &[f64]) -> Vec<u8> {
    probs.iter().map(|&p| (p >= 0.5) as u8).collect()
}

/// Post-processes every word (row indices into `probs`); rows outside any
/// word keep the 0.5 threshold.
pub fn postprocess_all(probs: &[f64], words: &[Vec<usize>]) -> Vec<u8> {
    let mut out = threshold(probs);
    for w in words {
        if w.is_empty() {
            continue;
        }
        let p: Vec<f64> = w.iter().map(|&i| probs[i]).collect();
        for (&i, l) in w.iter().zip(postprocess(&p).expect("non-empty word")) {
            out[i] = l;
        }
    }
    out
}

/// Percentage of matching labels.
pub fn accuracy(predicted: &[u8], gold: &[u8]) -> Result<f64, EvalError> {
    if predicted.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            predicted: predicted.len(),
            gold: gold.len(),
        });
    }
    if gold.is_empty() {
        return Ok(0.0);
    }
    let correct = predicted.iter().zip(gold).filter(|(a, b)| a == b).count();
    Ok(100.0 * correct as f64 / gold.len() as f64)
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Audio condition a run was evaluated on.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Condition {
    Clean,
    Noisy { snr_db: i32 },
    Enhanced { system: String, snr_db: i32 },
}

impl Condition {
    pub fn system(&self) -> &str {
        match self {
            Condition::Clean => "clean",
            Condition::Noisy { .. } => "noisy",
            Condition::Enhanced { system, .. } => system,
        }
    }

    pub fn snr_db(&self) -> Option<i32> {
        match self {
            Condition::Clean => None,
            Condition::Noisy { snr_db } | Condition::Enhanced { snr_db, .. } => Some(*snr_db),
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::Clean => f.write_str("clean"),
            Condition::Noisy { snr_db } => write!(f, "noisy@{snr_db}"),
            Condition::Enhanced { system, snr_db } => write!(f, "{system}@{snr_db}"),
        }
    }
}

impl FromStr for Condition {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "clean" {
            return Ok(Condition::Clean);
        }
        let bad = || EvalError::Condition(s.to_string());
        let (system, snr) = s.split_once('@').ok_or_else(bad)?;
        let snr_db: i32 = snr.trim_end_matches("dB").parse().map_err(|_| bad())?;
        if system.is_empty() || system == "clean" || system.contains(['\t', '\n']) {
            return Err(bad());
        }
        Ok(if system == "noisy" {
            Condition::Noisy { snr_db }
        } else {
            Condition::Enhanced {
                system: system.to_string(),
                snr_db,
            }
        })
    }
}

impl Serialize for Condition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Condition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_rows: usize,
    pub val_rows: usize,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub cv_accuracy: f64,
    pub cv_accuracy_nopost: f64,
    pub test_accuracy: Option<f64>,
    pub test_accuracy_nopost: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Cv,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub key: SyllableKey,
    pub fold: usize,
    pub partition: Partition,
    pub label: u8,
    pub prob: f64,
    pub post: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub condition: Condition,
    pub feature_type: String,
    pub folds: Vec<FoldResult>,
    pub mean_cv: f64,
    pub mean_cv_nopost: f64,
    pub mean_test: Option<f64>,
    pub mean_test_nopost: Option<f64>,
    pub config: TrainConfig,
    #[serde(skip)]
    pub predictions: Vec<Prediction>,
    /// Fold models in fold order.
    #[serde(skip)]
    pub trained: Vec<Trained>,
}

impl EvalRun {
    /// Test-set means when there is a test set, cross-validation means otherwise.
    pub fn headline(&self) -> (f64, f64) {
        match (self.mean_test, self.mean_test_nopost) {
            (Some(a), Some(b)) => (a, b),
            _ => (self.mean_cv, self.mean_cv_nopost),
        }
    }

    pub fn predictions_tsv(&self) -> String {
        let mut s = String::from("utt_id\tword_id\tsyll_idx\tfold\tpartition\tlabel\tprob\tpost\n");
        for p in &self.predictions {
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{}\n",
                p.key.utt_id,
                p.key.word_id,
                p.key.syll_idx,
                p.fold,
                if p.partition == Partition::Cv { "cv" } else { "test" },
                p.label,
                p.prob,
                p.post
            ));
        }
        s
    }

    /// Writes `run.json` and `predictions.tsv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), EvalError> {
        let io = |p: &Path, e: std::io::Error| EvalError::Io {
            path: p.display().to_string(),
            message: e.to_string(),
        };
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let json = serde_json::to_string_pretty(self).expect("run serialises");
        let p = dir.join("run.json");
        std::fs::write(&p, json + "\n").map_err(|e| io(&p, e))?;
        let p = dir.join("predictions.tsv");
        std::fs::write(&p, self.predictions_tsv()).map_err(|e| io(&p, e))
    }
}

/// Parses the `predictions.tsv` written by [`EvalRun::write_to`].
pub fn parse_predictions_tsv(text: &str) -> Result<Vec<Prediction>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let err = |message: &str| EvalError::Report {
            line: i + 1,
            message: message.to_string(),
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 8 {
            return Err(err("expected 8 columns"));
        }
        let num = |s: &str, what: &str| s.parse::<u64>().map_err(|_| err(what));
        out.push(Prediction {
            key: SyllableKey::new(f[0], f[1], num(f[2], "bad syllable index")? as u16),
            fold: num(f[3], "bad fold")? as usize,
            partition: match f[4] {
                "cv" => Partition::Cv,
                "test" => Partition::Test,
                _ => return Err(err("bad partition")),
            },
            label: num(f[5], "bad label")? as u8,
            prob: f[6].parse().map_err(|_| err("bad probability"))?,
            post: num(f[7], "bad post-processed label")? as u8,
        });
    }
    Ok(out)
}

/// Called once per fold with the keys that fed normalisation and training.
pub type TrainObserver<'a> = &'a (dyn Fn(usize, &[SyllableKey]) + Sync);

struct Indexed {
    keys: Vec<SyllableKey>,
    rows: Rows,
}

impl Indexed {
    fn subset(table: &FeatureTable, idx: &[usize]) -> Self {
        let dim = table.dim;
        let mut x = Vec::with_capacity(idx.len() * dim);
        let mut y = Vec::with_capacity(idx.len());
        let mut keys = Vec::with_capacity(idx.len());
        let mut words: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
        for (j, &i) in idx.iter().enumerate() {
            let r = &table.rows[i];
            x.extend(r.features.iter().map(|&v| f64::from(v)));
            y.push(r.label);
            keys.push(r.key.clone());
            words.entry(r.key.word_key()).or_default().push(j);
        }
        Self {
            keys,
            rows: Rows {
                dim,
                x,
                y,
                words: words.into_values().collect(),
            },
        }
    }
}

fn score(probs: &[f64], rows: &Rows) -> (Vec<u8>, f64, f64) {
    let post = postprocess_all(probs, &rows.words);
    let acc = accuracy(&post, &rows.y).expect("equal lengths");
    let raw = accuracy(&threshold(probs), &rows.y).expect("equal lengths");
    (post, acc, raw)
}

pub fn run_cv(
    features: &FeatureTable,
    folds: &FoldAssignment,
    cfg: &TrainConfig,
    condition: Condition,
    feature_type: &str,
    observer: Option<TrainObserver<'_>>,
) -> Result<EvalRun, EvalError> {
    let index = features.index().map_err(|e| EvalError::Io {
        path: "features".into(),
        message: e.to_string(),
    })?;
    let missing: Vec<&SyllableKey> = folds
        .fold_of_syllable
        .keys()
        .filter(|k| !index.contains_key(*k))
        .collect();
    if let Some(first) = missing.first() {
        return Err(EvalError::KeyMismatch {
            count: missing.len(),
            example: (*first).clone(),
        });
    }
    let mut by_fold: Vec<Vec<usize>> = vec![Vec::new(); folds.k];
    let mut test_idx = Vec::new();
    for (i, r) in features.rows.iter().enumerate() {
        match folds.fold_of(&r.key) {
            Some(f) => by_fold[f].push(i),
            None => test_idx.push(i),
        }
    }
    let test = Indexed::subset(features, &test_idx);

    let results: Vec<Result<(FoldResult, Vec<Prediction>, Trained), EvalError>> = (0..folds.k)
        .into_par_iter()
        .map(|fold| {
            let train_idx: Vec<usize> = (0..folds.k)
                .filter(|&f| f != fold)
                .flat_map(|f| by_fold[f].iter().copied())
                .collect();
            let train = Indexed::subset(features, &train_idx);
            let val = Indexed::subset(features, &by_fold[fold]);
            if let Some(obs) = observer {
                obs(fold, &train.keys);
            }
            let trained = fit(&train.rows, &val.rows, cfg).map_err(|source| EvalError::Train { fold, source })?;
            let model = &trained.model;
            let mut preds = Vec::new();
            let mut run_on = |set: &Indexed, partition: Partition| -> Result<(f64, f64), EvalError> {
                let probs = model
                    .predict_proba(&set.rows.x)
                    .map_err(|source| EvalError::Train { fold, source })?;
                let (post, acc, raw) = score(&probs, &set.rows);
                for i in 0..set.keys.len() {
                    preds.push(Prediction {
                        key: set.keys[i].clone(),
                        fold,
                        partition,
                        label: set.rows.y[i],
                        prob: probs[i],
                        post: post[i],
                    });
                }
                Ok((acc, raw))
            };
            let (cv_accuracy, cv_accuracy_nopost) = run_on(&val, Partition::Cv)?;
            let test_scores = if test.keys.is_empty() {
                None
            } else {
                Some(run_on(&test, Partition::Test)?)
            };
            Ok((
                FoldResult {
                    fold,
                    train_rows: train.keys.len(),
                    val_rows: val.keys.len(),
                    best_epoch: trained.best_epoch,
                    epochs_run: trained.history.len(),
                    cv_accuracy,
                    cv_accuracy_nopost,
                    test_accuracy: test_scores.map(|s| s.0),
                    test_accuracy_nopost: test_scores.map(|s| s.1),
                },
                preds,
                trained,
            ))
        })
        .collect();

    let mut fold_results = Vec::new();
    let mut predictions = Vec::new();
    let mut trained = Vec::new();
    for r in results {
        let (f, p, t) = r?;
        fold_results.push(f);
        predictions.extend(p);
        trained.push(t);
    }
    predictions.sort_by(|a, b| (a.partition, &a.key, a.fold).cmp(&(b.partition, &b.key, b.fold)));
    let col = |f: fn(&FoldResult) -> f64| mean(&fold_results.iter().map(f).collect::<Vec<_>>());
    let test_mean = |f: fn(&FoldResult) -> Option<f64>| {
        let v: Option<Vec<f64>> = fold_results.iter().map(f).collect();
        v.map(|v| mean(&v))
    };
    Ok(EvalRun {
        condition,
        feature_type: feature_type.to_string(),
        mean_cv: col(|f| f.cv_accuracy),
        mean_cv_nopost: col(|f| f.cv_accuracy_nopost),
        mean_test: test_mean(|f| f.test_accuracy),
        mean_test_nopost: test_mean(|f| f.test_accuracy_nopost),
        folds: fold_results,
        config: cfg.clone(),
        predictions,
        trained,
    })
}

/// Two-decimal rendering with trailing zeros trimmed ("89.30" -> "89.3").
pub fn fmt_acc(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

pub fn fmt_cell(post: f64, nopost: f64) -> String {
    format!("{} ({})", fmt_acc(post), fmt_acc(nopost))
}

pub fn parse_cell(s: &str) -> Option<(f64, f64)> {
    let (a, rest) = s.split_once(" (")?;
    let b = rest.strip_suffix(')')?;
    Some((a.parse().ok()?, b.parse().ok()?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Cv,
    Test,
}

impl Metric {
    fn as_str(self) -> &'static str {
        match self {
            Metric::Cv => "cv",
            Metric::Test => "test",
        }
    }
}

/// Accuracy table: one row per (feature type, metric, system), one column per
/// SNR plus a clean column used only by the clean reference row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub snrs: Vec<i32>,
    /// (feature, metric, system) -> column ("clean" or SNR) -> (post, nopost).
    pub cells: BTreeMap<(String, Metric, String), BTreeMap<Option<i32>, (f64, f64)>>,
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

impl Report {
    pub fn from_runs(runs: &[EvalRun]) -> Self {
        let mut r = Report::default();
        let mut snrs = BTreeSet::new();
        for run in runs {
            let snr = run.condition.snr_db();
            if let Some(s) = snr {
                snrs.insert(s);
            }
            let mut put = |metric, post: f64, nopost: f64| {
                r.cells
                    .entry((run.feature_type.clone(), metric, run.condition.system().to_string()))
                    .or_default()
                    .insert(snr, (round2(post), round2(nopost)));
            };
            put(Metric::Cv, run.mean_cv, run.mean_cv_nopost);
            if let (Some(a), Some(b)) = (run.mean_test, run.mean_test_nopost) {
                put(Metric::Test, a, b);
            }
        }
        r.snrs = snrs.into_iter().collect();
        r
    }

    fn columns(&self) -> Vec<Option<i32>> {
        std::iter::once(None).chain(self.snrs.iter().map(|&s| Some(s))).collect()
    }

    fn header(&self) -> Vec<String> {
        let mut h = vec!["feature".into(), "metric".into(), "system".into(), "clean".into()];
        h.extend(self.snrs.iter().map(|s| format!("{s} dB")));
        h
    }

    fn table(&self) -> Vec<Vec<String>> {
        let mut rows = vec![self.header()];
        for ((feature, metric, system), cols) in &self.cells {
            let mut row = vec![feature.clone(), metric.as_str().to_string(), system.clone()];
            for c in self.columns() {
                row.push(cols.get(&c).map_or("-".into(), |&(a, b)| fmt_cell(a, b)));
            }
            rows.push(row);
        }
        rows
    }

    pub fn to_tsv(&self) -> String {
        self.table().iter().map(|r| r.join("\t") + "\n").collect()
    }

    pub fn to_text(&self) -> String {
        let t = self.table();
        let widths: Vec<usize> = (0..t[0].len())
            .map(|c| t.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        t.iter()
            .map(|r| {
                let cells: Vec<String> = r
                    .iter()
                    .zip(&widths)
                    .map(|(s, w)| format!("{s:<w$}"))
                    .collect();
                cells.join("  ").trim_end().to_string() + "\n"
            })
            .collect()
    }

    pub fn parse_tsv(text: &str) -> Result<Self, EvalError> {
        let mut lines = text.lines().enumerate();
        let err = |line: usize, message: String| EvalError::Report { line: line + 1, message };
        let (_, header) = lines.next().ok_or_else(|| err(0, "missing header".into()))?;
        let h: Vec<&str> = header.split('\t').collect();
        if h.len() < 4 || h[..4] != ["feature", "metric", "system", "clean"] {
            return Err(err(0, format!("unexpected header {header:?}")));
        }
        let snrs = h[4..]
            .iter()
            .map(|c| c.strip_suffix(" dB").and_then(|v| v.parse().ok()))
            .collect::<Option<Vec<i32>>>()
            .ok_or_else(|| err(0, "bad SNR column".into()))?;
        let mut r = Report {
            snrs,
            ..Report::default()
        };
        let cols = r.columns();
        for (i, line) in lines {
            let c: Vec<&str> = line.split('\t').collect();
            if c.len() != h.len() {
                return Err(err(i, format!("expected {} columns, found {}", h.len(), c.len())));
            }
            let metric = match c[1] {
                "cv" => Metric::Cv,
                "test" => Metric::Test,
                m => return Err(err(i, format!("unknown metric {m:?}"))),
            };
            let mut cells = BTreeMap::new();
            for (col, cell) in cols.iter().zip(&c[3..]) {
                if *cell == "-" {
                    continue;
                }
                let v = parse_cell(cell).ok_or_else(|| err(i, format!("bad cell {cell:?}")))?;
                cells.insert(*col, v);
            }
            r.cells.insert((c[0].to_string(), metric, c[2].to_string()), cells);
        }
        Ok(r)
    }
}

/// Every `run.json` below `dir`, sorted by path.
pub fn load_runs(dir: &Path) -> Result<Vec<EvalRun>, EvalError> {
    fn walk(d: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
        for e in std::fs::read_dir(d)? {
            let p = e?.path();
            if p.is_dir() {
                walk(&p, out)?;
            } else if p.file_name().is_some_and(|n| n == "run.json") {
                out.push(p);
            }
        }
        Ok(())
    }
    let mut paths = Vec::new();
    walk(dir, &mut paths).map_err(|e| EvalError::Io {
        path: dir.display().to_string(),
        message: e.to_string(),
    })?;
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| EvalError::Io {
                path: p.display().to_string(),
                message: e.to_string(),
            })?;
            serde_json::from_str(&text).map_err(|e| EvalError::Io {
                path: p.display().to_string(),
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn postprocess_examples() {
        assert_eq!(postprocess(&[0.3, 0.7]).unwrap(), vec![0, 1]);
        assert_eq!(postprocess(&[0.5, 0.5]).unwrap(), vec![1, 0]);
        assert_eq!(postprocess(&[0.2, 0.9, 0.9]).unwrap(), vec![0, 1, 0]);
        assert!(matches!(postprocess(&[]), Err(EvalError::EmptyWord)));
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 0, 1], &[1, 0, 1]).unwrap(), 100.0);
        assert_eq!(accuracy(&[1, 0, 1], &[0, 1, 0]).unwrap(), 0.0);
        let gold = vec![1u8; 40];
        let mut pred = gold.clone();
        pred[..3].iter_mut().for_each(|v| *v = 0);
        assert_eq!(accuracy(&pred, &gold).unwrap(), 92.5);
        assert!(accuracy(&[1], &[1, 0]).is_err());
        assert_eq!(mean(&[90.0, 92.0, 94.0, 88.0, 86.0]), 90.0);
    }

    #[test]
    fn postprocess_not_worse_when_argmax_is_gold() {
        // Gold stress on syllable 1, which also has the highest probability.
        for probs in [[0.6, 0.9, 0.7], [0.1, 0.4, 0.2], [0.55, 0.56, 0.51]] {
            let gold = [0, 1, 0];
            let post = accuracy(&postprocess(&probs).unwrap(), &gold).unwrap();
            assert_eq!(post, 100.0);
            assert!(post >= accuracy(&threshold(&probs), &gold).unwrap());
        }
    }

    #[test]
    fn condition_labels() {
        for s in ["clean", "noisy@0", "wiener@20", "spectral_sub@-5"] {
            assert_eq!(s.parse::<Condition>().unwrap().to_string(), s);
        }
        assert!("noisy".parse::<Condition>().is_err());
        assert!("@5".parse::<Condition>().is_err());
    }

    #[test]
    fn cell_format() {
        assert_eq!(fmt_cell(92.65, 89.3), "92.65 (89.3)");
        assert_eq!(fmt_cell(90.0, 89.999), "90 (90)");
        assert_eq!(parse_cell("92.65 (89.3)"), Some((92.65, 89.3)));
    }

    fn run(cond: &str, cv: f64, test: Option<f64>) -> EvalRun {
        EvalRun {
            condition: cond.parse().unwrap(),
            feature_type: "heuristic".into(),
            folds: Vec::new(),
            mean_cv: cv,
            mean_cv_nopost: cv - 3.0,
            mean_test: test,
            mean_test_nopost: test.map(|t| t - 2.5),
            config: TrainConfig::default(),
            predictions: Vec::new(),
            trained: Vec::new(),
        }
    }

    #[test]
    fn report_round_trip() {
        let runs = vec![
            run("clean", 93.36, Some(91.0)),
            run("noisy@0", 80.123, Some(78.0)),
            run("noisy@20", 90.0, Some(88.5)),
            run("wiener@0", 82.5, None),
        ];
        let r = Report::from_runs(&runs);
        let tsv = r.to_tsv();
        assert!(tsv.starts_with("feature\tmetric\tsystem\tclean\t0 dB\t20 dB\n"));
        assert!(tsv.contains("heuristic\tcv\tclean\t93.36 (90.36)\t-\t-\n"));
        assert!(tsv.contains("heuristic\tcv\tnoisy\t-\t80.12 (77.12)\t90 (87)\n"));
        let back = Report::parse_tsv(&tsv).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_tsv(), tsv);
        assert!(r.to_text().lines().count() == tsv.lines().count());
    }

    #[test]
    fn empty_report_is_header_only() {
        let r = Report::from_runs(&[]);
        assert_eq!(r.to_tsv(), "feature\tmetric\tsystem\tclean\n");
        assert_eq!(Report::parse_tsv(&r.to_tsv()).unwrap(), r);
    }

    proptest! {
        #[test]
        fn one_stress_per_word(probs in proptest::collection::vec(0.0f64..1.0, 1..8)) {
            let l = postprocess(&probs).unwrap();
            prop_assert_eq!(l.iter().filter(|&&v| v == 1).count(), 1);
            let i = l.iter().position(|&v| v == 1).unwrap();
            prop_assert!(probs.iter().all(|&p| p <= probs[i]));
            prop_assert!(probs[..i].iter().all(|&p| p < probs[i]));
        }

        #[test]
        fn accuracy_permutation_invariant(pairs in proptest::collection::vec((0u8..2, 0u8..2), 1..50), seed in 0u64..100) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let split = |v: &[(u8, u8)]| -> (Vec<u8>, Vec<u8>) { v.iter().copied().unzip() };
            let (a, b) = split(&pairs);
            let (c, d) = split(&shuffled);
            prop_assert_eq!(accuracy(&a, &b).unwrap(), accuracy(&c, &d).unwrap());
        }
    }
}
