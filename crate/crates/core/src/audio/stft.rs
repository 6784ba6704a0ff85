use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{AudioError, FrameSpec, Waveform, FFT_SIZE};

/// Periodic Hann window.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos())
        .collect()
}

/// One-sided complex STFT, frames × bins, row-major.
///
/// Frames are centred: frame `f` is centred on sample `f * hop`, with zeros
/// outside the signal. Every sample is covered by at least one non-zero window
/// tap, so `istft` reconstructs the whole signal, edges included.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub data: Vec<Complex64>,
    pub frames: usize,
    pub bins: usize,
    pub fft_size: usize,
    pub frame_spec: FrameSpec,
    pub window_len: usize,
    pub hop_len: usize,
    pub signal_len: usize,
    pub sample_rate: u32,
}

impl Spectrogram {
    pub fn frame(&self, f: usize) -> &[Complex64] {
        &self.data[f * self.bins..(f + 1) * self.bins]
    }

    pub fn frame_mut(&mut self, f: usize) -> &mut [Complex64] {
        &mut self.data[f * self.bins..(f + 1) * self.bins]
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.data.iter().map(|c| c.norm()).collect()
    }

    /// First sample (may be negative) covered by frame `f`.
    pub fn frame_start(&self, f: usize) -> isize {
        (f * self.hop_len) as isize - (self.window_len / 2) as isize
    }

    pub fn bin_hz(&self, k: usize) -> f64 {
        k as f64 * f64::from(self.sample_rate) / self.fft_size as f64
    }
}

/// Planned forward/inverse transforms for one framing.
pub struct Stft {
    spec: FrameSpec,
    sample_rate: u32,
    window: Vec<f64>,
    hop: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(spec: FrameSpec, sample_rate: u32) -> Result<Self, AudioError> {
        spec.validate()?;
        let win = spec.window_len(sample_rate);
        if win > FFT_SIZE {
            return Err(AudioError::UnsupportedEncoding(format!(
                "window of {win} samples exceeds FFT size {FFT_SIZE}"
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            spec,
            sample_rate,
            window: hann_window(win),
            hop: spec.hop_len(sample_rate),
            forward: planner.plan_fft_forward(FFT_SIZE),
            inverse: planner.plan_fft_inverse(FFT_SIZE),
        })
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn analyze(&self, w: &Waveform) -> Result<Spectrogram, AudioError> {
        let n = w.samples.len();
        if n == 0 {
            return Err(AudioError::Empty);
        }
        let win = self.window.len();
        if n < win {
            return Err(AudioError::TooShort { len: n, window: win });
        }
        let bins = FFT_SIZE / 2 + 1;
        let frames = n / self.hop + 1;
        let half = (win / 2) as isize;
        let mut data = Vec::with_capacity(frames * bins);
        let mut buf = vec![Complex64::new(0.0, 0.0); FFT_SIZE];
        for f in 0..frames {
            let start = (f * self.hop) as isize - half;
            for (i, slot) in buf.iter_mut().enumerate() {
                *slot = Complex64::new(0.0, 0.0);
                if i < win {
                    let idx = start + i as isize;
                    if idx >= 0 && (idx as usize) < n {
                        slot.re = w.samples[idx as usize] * self.window[i];
                    }
                }
            }
            self.forward.process(&mut buf);
            data.extend_from_slice(&buf[..bins]);
        }
        Ok(Spectrogram {
            data,
            frames,
            bins,
            fft_size: FFT_SIZE,
            frame_spec: self.spec,
            window_len: win,
            hop_len: self.hop,
            signal_len: n,
            sample_rate: self.sample_rate,
        })
    }

    /// Weighted overlap-add inverse (synthesis window = analysis window,
    /// normalised by the summed squared window).
    pub fn synthesize(&self, s: &Spectrogram) -> Result<Waveform, AudioError> {
        if s.frames == 0 || s.signal_len == 0 {
            return Err(AudioError::Empty);
        }
        let n = s.signal_len;
        let win = self.window.len();
        let half = (win / 2) as isize;
        let mut out = vec![0.0; n];
        let mut norm = vec![0.0; n];
        let mut buf = vec![Complex64::new(0.0, 0.0); FFT_SIZE];
        for f in 0..s.frames {
            let frame = s.frame(f);
            buf[..s.bins].copy_from_slice(frame);
            // Hermitian completion of the one-sided spectrum.
            for k in 1..FFT_SIZE / 2 {
                buf[FFT_SIZE - k] = frame[k].conj();
            }
            self.inverse.process(&mut buf);
            let start = (f * s.hop_len) as isize - half;
            for i in 0..win {
                let idx = start + i as isize;
                if idx < 0 || idx as usize >= n {
                    continue;
                }
                let wv = self.window[i];
                out[idx as usize] += buf[i].re / FFT_SIZE as f64 * wv;
                norm[idx as usize] += wv * wv;
            }
        }
        for (o, d) in out.iter_mut().zip(&norm) {
            if *d > 1e-12 {
                *o /= d;
            }
        }
        Waveform::new(out, s.sample_rate)
    }
}

pub fn stft(w: &Waveform, spec: FrameSpec) -> Result<Spectrogram, AudioError> {
    Stft::new(spec, w.sample_rate)?.analyze(w)
}

pub fn istft(s: &Spectrogram) -> Result<Waveform, AudioError> {
    Stft::new(s.frame_spec, s.sample_rate)?.synthesize(s)
}
