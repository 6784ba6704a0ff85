//! White Gaussian noise at exact SNRs.
//!
//! SNR is measured over the whole utterance: noise is scaled by its measured
//! RMS, so every realisation hits the target exactly. If the mixture would
//! exceed a peak of 0.999, mixture, clean reference and noise are all scaled
//! by the same gain, which leaves the SNR untouched.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::audio::{read_wav, rms_slice, write_wav, AudioError, Waveform};
use crate::rng::{derive_seed, GaussianStream};

pub const PEAK_LIMIT: f64 = 0.999;
pub const DEFAULT_SNRS: [f64; 4] = [0.0, 5.0, 10.0, 20.0];

#[derive(Debug, Error)]
pub enum DegradeError {
    #[error("clean signal is silent (zero RMS)")]
    Silent,
    #[error("SNR must be finite, got {0}")]
    NonFiniteSnr(f64),
    #[error("audio: {0}")]
    Audio(#[from] AudioError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseCondition {
    pub snr_db: f64,
    pub seed: u64,
}

/// A degraded signal together with its two additive components.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyMix {
    pub mixed: Waveform,
    /// Clean signal after the shared peak gain.
    pub clean_ref: Vec<f64>,
    /// Noise after the shared peak gain.
    pub noise: Vec<f64>,
    pub gain: f64,
    pub target_snr_db: f64,
    pub seed: u64,
}

impl NoisyMix {
    pub fn measured_snr_db(&self) -> f64 {
        snr_db(&self.clean_ref, &self.noise)
    }
}

pub fn snr_db(signal: &[f64], noise: &[f64]) -> f64 {
    20.0 * (rms_slice(signal) / rms_slice(noise)).log10()
}

pub fn add_noise(clean: &Waveform, cond: NoiseCondition) -> Result<NoisyMix, DegradeError> {
    if !cond.snr_db.is_finite() {
        return Err(DegradeError::NonFiniteSnr(cond.snr_db));
    }
    let clean_rms = rms_slice(&clean.samples);
    if clean_rms == 0.0 {
        return Err(DegradeError::Silent);
    }
    let raw = GaussianStream::new(cond.seed).take_vec(clean.len());
    let target = clean_rms / 10f64.powf(cond.snr_db / 20.0);
    let scale = target / rms_slice(&raw);
    let noise: Vec<f64> = raw.iter().map(|n| n * scale).collect();
    let peak = clean
        .samples
        .iter()
        .zip(&noise)
        .fold(0.0f64, |m, (c, n)| m.max((c + n).abs()));
    let gain = if peak > PEAK_LIMIT { PEAK_LIMIT / peak } else { 1.0 };
    let clean_ref: Vec<f64> = clean.samples.iter().map(|c| c * gain).collect();
    let noise: Vec<f64> = noise.iter().map(|n| n * gain).collect();
    let mixed: Vec<f64> = clean_ref.iter().zip(&noise).map(|(c, n)| c + n).collect();
    Ok(NoisyMix {
        mixed: Waveform::new(mixed, clean.sample_rate)?,
        clean_ref,
        noise,
        gain,
        target_snr_db: cond.snr_db,
        seed: cond.seed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub utt_id: String,
    pub snr_db: f64,
    pub seed: u64,
    pub gain: f64,
    pub measured_snr_db: f64,
}

pub const MANIFEST_HEADER: &str = "utt_id\tsnr_db\tseed\tgain\tmeasured_snr_db";

pub fn write_manifest(rows: &[ManifestRow]) -> String {
    let mut s = String::from(
        "# snr_reference=full_utterance_rms noise=white_gaussian peak_limit=0.999\n",
    );
    s.push_str(MANIFEST_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.utt_id, r.snr_db, r.seed, r.gain, r.measured_snr_db
        ));
    }
    s
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRow>, String> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') || line == MANIFEST_HEADER {
            continue;
        }
        let c: Vec<&str> = line.split('\t').collect();
        if c.len() != 5 {
            return Err(format!("line {}: expected 5 columns", i + 1));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| format!("line {}: bad number {s:?}", i + 1))
        };
        rows.push(ManifestRow {
            utt_id: c[0].to_string(),
            snr_db: num(c[1])?,
            seed: c[2]
                .parse()
                .map_err(|_| format!("line {}: bad seed", i + 1))?,
            gain: num(c[3])?,
            measured_snr_db: num(c[4])?,
        });
    }
    Ok(rows)
}

/// Directory name used for one SNR condition, e.g. `snr_5` or `snr_2.5`.
pub fn snr_dir_name(snr_db: f64) -> String {
    format!("snr_{snr_db}")
}

/// Per-utterance seed for a master seed.
pub fn utterance_seed(master: u64, utt_id: &str) -> u64 {
    derive_seed(master, utt_id)
}

/// In-memory degradation of a set of utterances at several SNRs.
pub fn degrade_all(
    clean: &[(String, Waveform)],
    snrs: &[f64],
    master_seed: u64,
) -> Vec<(f64, Vec<Result<NoisyMix, DegradeError>>)> {
    snrs.iter()
        .map(|&snr| {
            let mixes = clean
                .par_iter()
                .map(|(id, w)| {
                    add_noise(
                        w,
                        NoiseCondition {
                            snr_db: snr,
                            seed: utterance_seed(master_seed, id),
                        },
                    )
                })
                .collect();
            (snr, mixes)
        })
        .collect()
}

#[derive(Debug, Default)]
pub struct BatchReport {
    pub rows: Vec<ManifestRow>,
    pub failures: Vec<(PathBuf, String)>,
}

/// Lists `*.wav` files in a directory, sorted by file name.
pub fn list_wavs(dir: &Path) -> Result<Vec<PathBuf>, DegradeError> {
    let rd = std::fs::read_dir(dir).map_err(|source| DegradeError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut out: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "wav"))
        .collect();
    out.sort();
    Ok(out)
}

/// Degrades every WAV in `in_dir` at each SNR into `out_dir/snr_<x>/`, and
/// writes `out_dir/manifest.tsv`. Per-file failures are collected, not fatal.
pub fn batch_degrade(
    in_dir: &Path,
    out_dir: &Path,
    snrs: &[f64],
    master_seed: u64,
) -> Result<BatchReport, DegradeError> {
    let files = list_wavs(in_dir)?;
    let mut report = BatchReport::default();
    for &snr in snrs {
        let dir = out_dir.join(snr_dir_name(snr));
        std::fs::create_dir_all(&dir).map_err(|source| DegradeError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        let results: Vec<(PathBuf, Result<ManifestRow, String>)> = files
            .par_iter()
            .map(|path| {
                let utt_id = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                let seed = utterance_seed(master_seed, &utt_id);
                let res = (|| -> Result<ManifestRow, DegradeError> {
                    let clean = read_wav(path)?;
                    let mix = add_noise(&clean, NoiseCondition { snr_db: snr, seed })?;
                    write_wav(&mix.mixed, dir.join(path.file_name().unwrap()))?;
                    Ok(ManifestRow {
                        utt_id: utt_id.clone(),
                        snr_db: snr,
                        seed,
                        gain: mix.gain,
                        measured_snr_db: mix.measured_snr_db(),
                    })
                })();
                (path.clone(), res.map_err(|e| e.to_string()))
            })
            .collect();
        for (path, r) in results {
            match r {
                Ok(row) => report.rows.push(row),
                Err(e) => report.failures.push((path, e)),
            }
        }
    }
    let manifest = out_dir.join("manifest.tsv");
    std::fs::write(&manifest, write_manifest(&report.rows)).map_err(|source| {
        DegradeError::Io {
            path: manifest.display().to_string(),
            source,
        }
    })?;
    Ok(report)
}
