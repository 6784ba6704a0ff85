//! Speech-enhancement stage.
//!
//! Two classical gain-based enhancers run in-process (power-spectral
//! subtraction and a decision-directed Wiener filter). Audio produced by
//! external enhancers is brought in through [`import_enhanced`].
//!
//! Both in-process enhancers compute a real gain per time-frequency cell and
//! keep the noisy phase, so the same gains can be applied to the clean and
//! noise components of a [`NoisyMix`] to measure output SNR per component.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::audio::{read_wav, write_wav, AudioError, FrameSpec, Spectrogram, Stft, Waveform};
use crate::degrade::{list_wavs, snr_db, NoisyMix};

pub const DEFAULT_HEAD_MS: f64 = 200.0;
pub const DEFAULT_ALPHA: f64 = 2.0;
pub const DEFAULT_BETA: f64 = 0.02;
pub const DEFAULT_SMOOTHING: f64 = 0.98;
pub const MIN_PROFILE_FRAMES: usize = 5;
pub const IMPORT_TOLERANCE_S: f64 = 0.025;

#[derive(Debug, Error)]
pub enum EnhanceError {
    #[error("utterance of {len_ms:.1} ms is too short for a {head_ms} ms noise estimate ({frames} frames, need {MIN_PROFILE_FRAMES})")]
    TooShort {
        len_ms: f64,
        head_ms: f64,
        frames: usize,
    },
    #[error("noise profile has {profile} bins, spectrogram has {spectrum}")]
    BinMismatch { profile: usize, spectrum: usize },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("audio: {0}")]
    Audio(#[from] AudioError),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Error)]
pub enum ImportError {
    #[error("missing enhanced audio for: {}", .0.join(", "))]
    Missing(Vec<String>),
    #[error("duration mismatch beyond {IMPORT_TOLERANCE_S} s: {}", fmt_drift(.0))]
    DurationMismatch(Vec<(String, f64)>),
    #[error("manifest {path} line {line}: {message}")]
    Manifest {
        path: String,
        line: usize,
        message: String,
    },
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

fn fmt_drift(v: &[(String, f64)]) -> String {
    v.iter()
        .map(|(u, d)| format!("{u} ({:+.1} ms)", d * 1000.0))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Mean STFT magnitude of the noise per frequency bin.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseProfile {
    pub magnitudes: Vec<f64>,
    pub frames_used: usize,
}

impl NoiseProfile {
    pub fn zeros(bins: usize) -> Self {
        Self {
            magnitudes: vec![0.0; bins],
            frames_used: MIN_PROFILE_FRAMES,
        }
    }

    /// Profile over every frame of a known noise signal.
    pub fn from_noise(noise: &Waveform, spec: FrameSpec) -> Result<Self, EnhanceError> {
        let s = Stft::new(spec, noise.sample_rate)?.analyze(noise)?;
        let frames: Vec<usize> = (0..s.frames).collect();
        Ok(mean_magnitude(&s, &frames))
    }
}

fn mean_magnitude(s: &Spectrogram, frames: &[usize]) -> NoiseProfile {
    let mut mags = vec![0.0; s.bins];
    for &f in frames {
        for (m, c) in mags.iter_mut().zip(s.frame(f)) {
            *m += c.norm();
        }
    }
    let n = frames.len().max(1) as f64;
    mags.iter_mut().for_each(|m| *m /= n);
    NoiseProfile {
        magnitudes: mags,
        frames_used: frames.len(),
    }
}

/// Frames whose whole window lies inside the first `head_ms` of the signal.
fn head_frames(s: &Spectrogram, head_ms: f64) -> Vec<usize> {
    let head = (head_ms * f64::from(s.sample_rate) / 1000.0).round() as isize;
    (0..s.frames)
        .filter(|&f| {
            let start = s.frame_start(f);
            start >= 0 && start + s.window_len as isize <= head.min(s.signal_len as isize)
        })
        .collect()
}

/// Noise estimate from the leading `head_ms` of an utterance.
pub fn estimate_noise(noisy: &Waveform, head_ms: f64) -> Result<NoiseProfile, EnhanceError> {
    let s = Stft::new(FrameSpec::default(), noisy.sample_rate)?.analyze(noisy)?;
    estimate_noise_from(&s, head_ms)
}

pub fn estimate_noise_from(s: &Spectrogram, head_ms: f64) -> Result<NoiseProfile, EnhanceError> {
    let len_ms = s.signal_len as f64 * 1000.0 / f64::from(s.sample_rate);
    let frames = head_frames(s, head_ms);
    if head_ms > len_ms || frames.len() < MIN_PROFILE_FRAMES {
        return Err(EnhanceError::TooShort {
            len_ms,
            head_ms,
            frames: frames.len(),
        });
    }
    Ok(mean_magnitude(s, &frames))
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnhancerKind {
    SpectralSubtraction { alpha: f64, beta: f64 },
    Wiener { smoothing: f64 },
    ExternalImport { dir: PathBuf },
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Enhancer {
    pub name: String,
    pub kind: EnhancerKind,
}

impl Enhancer {
    pub fn spectral_subtraction(alpha: f64, beta: f64) -> Self {
        Self {
            name: "spectral_sub".into(),
            kind: EnhancerKind::SpectralSubtraction { alpha, beta },
        }
    }

    pub fn wiener(smoothing: f64) -> Self {
        Self {
            name: "wiener".into(),
            kind: EnhancerKind::Wiener { smoothing },
        }
    }

    pub fn validate(&self) -> Result<(), EnhanceError> {
        let bad = |m: String| Err(EnhanceError::InvalidParam(m));
        match &self.kind {
            EnhancerKind::SpectralSubtraction { alpha, beta } => {
                if !(alpha.is_finite() && *alpha >= 0.0) {
                    return bad(format!("alpha must be finite and >= 0, got {alpha}"));
                }
                if !(0.0..=1.0).contains(beta) {
                    return bad(format!("beta must lie in [0, 1], got {beta}"));
                }
            }
            EnhancerKind::Wiener { smoothing } => {
                if !(0.0..1.0).contains(smoothing) {
                    return bad(format!("smoothing must lie in [0, 1), got {smoothing}"));
                }
            }
            EnhancerKind::ExternalImport { .. } => {}
        }
        Ok(())
    }

    /// Per-cell gains for a noisy spectrogram (frames × bins, row-major).
    pub fn gains(&self, s: &Spectrogram, profile: &NoiseProfile) -> Result<Vec<f64>, EnhanceError> {
        self.validate()?;
        match self.kind {
            EnhancerKind::SpectralSubtraction { alpha, beta } => {
                spectral_subtraction_gains(s, profile, alpha, beta)
            }
            EnhancerKind::Wiener { smoothing } => wiener_gains(s, profile, smoothing),
            EnhancerKind::ExternalImport { .. } => Err(EnhanceError::InvalidParam(
                "imported enhancers have no in-process gains".into(),
            )),
        }
    }
}

fn check_bins(s: &Spectrogram, profile: &NoiseProfile) -> Result<(), EnhanceError> {
    if profile.magnitudes.len() != s.bins {
        return Err(EnhanceError::BinMismatch {
            profile: profile.magnitudes.len(),
            spectrum: s.bins,
        });
    }
    Ok(())
}

/// Gains realising |Y| = max(|X| − α·N, β·|X|).
pub fn spectral_subtraction_gains(
    s: &Spectrogram,
    profile: &NoiseProfile,
    alpha: f64,
    beta: f64,
) -> Result<Vec<f64>, EnhanceError> {
    check_bins(s, profile)?;
    let mut gains = Vec::with_capacity(s.data.len());
    for f in 0..s.frames {
        for (x, n) in s.frame(f).iter().zip(&profile.magnitudes) {
            let mag = x.norm();
            gains.push(if mag > 0.0 {
                (mag - alpha * n).max(beta * mag) / mag
            } else {
                1.0
            });
        }
    }
    Ok(gains)
}

/// Wiener gains G = ξ/(1+ξ) with the decision-directed a-priori SNR
/// ξ_t = a·|Ŝ_{t−1}|²/N² + (1−a)·max(γ_t − 1, 0), γ_t = |X_t|²/N²,
/// started at ξ_0 = a + (1−a)·max(γ_0 − 1, 0).
pub fn wiener_gains(
    s: &Spectrogram,
    profile: &NoiseProfile,
    smoothing: f64,
) -> Result<Vec<f64>, EnhanceError> {
    check_bins(s, profile)?;
    let a = smoothing;
    let mut gains = vec![1.0; s.data.len()];
    let mut prev_clean_power = vec![0.0; s.bins];
    for f in 0..s.frames {
        for (k, x) in s.frame(f).iter().enumerate() {
            let noise_power = profile.magnitudes[k] * profile.magnitudes[k];
            if noise_power <= f64::MIN_POSITIVE {
                // No noise in this bin: pass-through (the ξ → ∞ limit).
                prev_clean_power[k] = x.norm_sqr();
                continue;
            }
            let gamma = x.norm_sqr() / noise_power;
            let ml = (gamma - 1.0).max(0.0);
            let xi = if f == 0 {
                a + (1.0 - a) * ml
            } else {
                a * prev_clean_power[k] / noise_power + (1.0 - a) * ml
            };
            let g = (xi / (1.0 + xi)).clamp(0.0, 1.0);
            gains[f * s.bins + k] = g;
            prev_clean_power[k] = g * g * x.norm_sqr();
        }
    }
    Ok(gains)
}

fn apply_gains(stft: &Stft, s: &Spectrogram, gains: &[f64]) -> Result<Waveform, EnhanceError> {
    let mut out = s.clone();
    for (c, g) in out.data.iter_mut().zip(gains) {
        *c *= *g;
    }
    Ok(stft.synthesize(&out)?)
}

/// Enhances `noisy` with a known noise profile. Output has the input's length and rate.
pub fn enhance_with_profile(
    noisy: &Waveform,
    enhancer: &Enhancer,
    profile: &NoiseProfile,
) -> Result<Waveform, EnhanceError> {
    let stft = Stft::new(FrameSpec::default(), noisy.sample_rate)?;
    let s = stft.analyze(noisy)?;
    let gains = enhancer.gains(&s, profile)?;
    apply_gains(&stft, &s, &gains)
}

/// Enhances with a profile estimated from the utterance head.
pub fn enhance(noisy: &Waveform, enhancer: &Enhancer, head_ms: f64) -> Result<Waveform, EnhanceError> {
    let stft = Stft::new(FrameSpec::default(), noisy.sample_rate)?;
    let s = stft.analyze(noisy)?;
    let profile = estimate_noise_from(&s, head_ms)?;
    let gains = enhancer.gains(&s, &profile)?;
    apply_gains(&stft, &s, &gains)
}

pub fn spectral_subtract(
    noisy: &Waveform,
    profile: &NoiseProfile,
    alpha: f64,
    beta: f64,
) -> Result<Waveform, EnhanceError> {
    enhance_with_profile(noisy, &Enhancer::spectral_subtraction(alpha, beta), profile)
}

pub fn wiener(
    noisy: &Waveform,
    profile: &NoiseProfile,
    smoothing: f64,
) -> Result<Waveform, EnhanceError> {
    enhance_with_profile(noisy, &Enhancer::wiener(smoothing), profile)
}

/// Enhanced output plus the clean and noise components passed through the same gains.
#[derive(Debug, Clone)]
pub struct EnhancedMix {
    pub output: Waveform,
    pub clean_part: Vec<f64>,
    pub noise_part: Vec<f64>,
}

impl EnhancedMix {
    pub fn component_snr_db(&self) -> f64 {
        snr_db(&self.clean_part, &self.noise_part)
    }
}

/// Enhances a degraded signal and tracks its components. With `profile` unset
/// the profile is estimated from the first `head_ms` of the mixture.
pub fn enhance_mix(
    mix: &NoisyMix,
    enhancer: &Enhancer,
    profile: Option<&NoiseProfile>,
    head_ms: f64,
) -> Result<EnhancedMix, EnhanceError> {
    let sr = mix.mixed.sample_rate;
    let stft = Stft::new(FrameSpec::default(), sr)?;
    let s = stft.analyze(&mix.mixed)?;
    let estimated;
    let profile = match profile {
        Some(p) => p,
        None => {
            estimated = estimate_noise_from(&s, head_ms)?;
            &estimated
        }
    };
    let gains = enhancer.gains(&s, profile)?;
    let output = apply_gains(&stft, &s, &gains)?;
    let clean = stft.analyze(&Waveform::new(mix.clean_ref.clone(), sr)?)?;
    let noise = stft.analyze(&Waveform::new(mix.noise.clone(), sr)?)?;
    Ok(EnhancedMix {
        output,
        clean_part: apply_gains(&stft, &clean, &gains)?.samples,
        noise_part: apply_gains(&stft, &noise, &gains)?.samples,
    })
}

/// Enhances every WAV in `in_dir` into `out_dir` (same file names).
/// Returns per-file failures; successful files are written regardless.
pub fn enhance_dir(
    in_dir: &Path,
    out_dir: &Path,
    enhancer: &Enhancer,
    head_ms: f64,
) -> Result<Vec<(PathBuf, String)>, EnhanceError> {
    enhancer.validate()?;
    let files = list_wavs(in_dir).map_err(|e| EnhanceError::Io {
        path: in_dir.display().to_string(),
        message: e.to_string(),
    })?;
    std::fs::create_dir_all(out_dir).map_err(|e| EnhanceError::Io {
        path: out_dir.display().to_string(),
        message: e.to_string(),
    })?;
    let failures = files
        .par_iter()
        .filter_map(|path| {
            let res = (|| -> Result<(), EnhanceError> {
                let noisy = read_wav(path)?;
                let out = enhance(&noisy, enhancer, head_ms)?;
                write_wav(&out, out_dir.join(path.file_name().unwrap()))?;
                Ok(())
            })();
            res.err().map(|e| (path.clone(), e.to_string()))
        })
        .collect();
    Ok(failures)
}

/// Reference durations: `utt_id  num_samples  sample_rate` per line.
pub fn read_audio_manifest(path: &Path) -> Result<Vec<(String, f64)>, ImportError> {
    let text = std::fs::read_to_string(path).map_err(|e| ImportError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') || line.starts_with("utt_id\t") {
            continue;
        }
        let err = |message: String| ImportError::Manifest {
            path: path.display().to_string(),
            line: i + 1,
            message,
        };
        let c: Vec<&str> = line.split('\t').collect();
        if c.len() != 3 {
            return Err(err(format!("expected 3 columns, found {}", c.len())));
        }
        let n: f64 = c[1].parse().map_err(|_| err(format!("bad num_samples {:?}", c[1])))?;
        let sr: f64 = c[2].parse().map_err(|_| err(format!("bad sample_rate {:?}", c[2])))?;
        if sr <= 0.0 {
            return Err(err("sample_rate must be positive".into()));
        }
        out.push((c[0].to_string(), n / sr));
    }
    Ok(out)
}

/// Validated set of externally enhanced files, one per utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhancedTree {
    pub label: String,
    pub dir: PathBuf,
    pub files: BTreeMap<String, PathBuf>,
    /// Enhanced minus reference duration, seconds.
    pub drift_s: BTreeMap<String, f64>,
}

impl EnhancedTree {
    pub fn to_tsv(&self) -> String {
        let mut s = format!("# label={}\nutt_id\tpath\tdrift_ms\n", self.label);
        for (utt, path) in &self.files {
            s.push_str(&format!(
                "{utt}\t{}\t{:.3}\n",
                path.display(),
                self.drift_s[utt] * 1000.0
            ));
        }
        s
    }
}

pub fn import_enhanced(
    dir: &Path,
    manifest: &Path,
    label: &str,
) -> Result<EnhancedTree, ImportError> {
    let reference = read_audio_manifest(manifest)?;
    let mut missing = Vec::new();
    let mut mismatched = Vec::new();
    let mut files = BTreeMap::new();
    let mut drift_s = BTreeMap::new();
    for (utt, ref_dur) in reference {
        let path = dir.join(format!("{utt}.wav"));
        if !path.is_file() {
            missing.push(utt);
            continue;
        }
        let reader = hound::WavReader::open(&path).map_err(|e| ImportError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let dur = f64::from(reader.duration()) / f64::from(reader.spec().sample_rate);
        let drift = dur - ref_dur;
        if drift.abs() > IMPORT_TOLERANCE_S + 1e-9 {
            mismatched.push((utt.clone(), drift));
        }
        drift_s.insert(utt.clone(), drift);
        files.insert(utt, path);
    }
    if !missing.is_empty() {
        return Err(ImportError::Missing(missing));
    }
    if !mismatched.is_empty() {
        return Err(ImportError::DurationMismatch(mismatched));
    }
    Ok(EnhancedTree {
        label: label.to_string(),
        dir: dir.to_path_buf(),
        files,
        drift_s,
    })
}
