//! Waveforms, WAV I/O, framing and the STFT used by every later stage.

mod stft;
mod wav;

use std::ops::Range;

use thiserror::Error;

pub use stft::{hann_window, istft, stft, Spectrogram, Stft};
pub use wav::{encode_wav, quantize, read_wav, write_wav};

pub const PIPELINE_SAMPLE_RATE: u32 = 16_000;
pub const FFT_SIZE: usize = 512;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AudioError {
    #[error("unsupported sample rate {0} Hz (pipeline audio must be 16000 Hz)")]
    UnsupportedSampleRate(u32),
    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("empty input")]
    Empty,
    #[error("input of {len} samples is shorter than one {window}-sample window")]
    TooShort { len: usize, window: usize },
    #[error("empty sample range {0:?}")]
    EmptyRange(Range<usize>),
    #[error("i/o: {0}")]
    Io(String),
}

/// Mono audio in double precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::NonFinite(i));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn scaled(&self, gain: f64) -> Waveform {
        Waveform {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    /// Sample index of a time in seconds, clamped to the signal.
    pub fn index_of(&self, t: f64) -> usize {
        ((t * f64::from(self.sample_rate)).round().max(0.0) as usize).min(self.samples.len())
    }
}

/// Analysis framing. Defaults are 25 ms Hann windows every 10 ms.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FrameSpec {
    pub window_ms: f64,
    pub hop_ms: f64,
}

impl Default for FrameSpec {
    fn default() -> Self {
        Self {
            window_ms: 25.0,
            hop_ms: 10.0,
        }
    }
}

impl FrameSpec {
    pub fn window_len(&self, sample_rate: u32) -> usize {
        (self.window_ms * f64::from(sample_rate) / 1000.0).round() as usize
    }

    pub fn hop_len(&self, sample_rate: u32) -> usize {
        (self.hop_ms * f64::from(sample_rate) / 1000.0).round() as usize
    }

    pub fn validate(&self) -> Result<(), AudioError> {
        if !(self.hop_ms > 0.0 && self.window_ms > 0.0 && self.hop_ms <= self.window_ms) {
            return Err(AudioError::UnsupportedEncoding(format!(
                "invalid framing {}ms/{}ms (need 0 < hop <= window)",
                self.window_ms, self.hop_ms
            )));
        }
        Ok(())
    }
}

/// Root-mean-square over the whole signal or a sample range.
pub fn rms(w: &Waveform, range: Option<Range<usize>>) -> Result<f64, AudioError> {
    let range = range.unwrap_or(0..w.samples.len());
    if range.is_empty() || range.end > w.samples.len() {
        return Err(AudioError::EmptyRange(range));
    }
    Ok(rms_slice(&w.samples[range]))
}

pub(crate) fn rms_slice(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
}
