use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::ProsodyError;
use crate::audio::{hann_window, FrameSpec, Waveform};
use crate::corpus::{PhonemeCategory, Utterance};

/// Sonority weight per phoneme class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SonorityWeights {
    pub vowel: f64,
    pub approximant: f64,
    pub nasal: f64,
    pub fricative: f64,
    pub affricate: f64,
    pub plosive: f64,
    pub silence: f64,
}

impl Default for SonorityWeights {
    fn default() -> Self {
        Self {
            vowel: 1.0,
            approximant: 0.8,
            nasal: 0.6,
            fricative: 0.4,
            affricate: 0.35,
            plosive: 0.2,
            silence: 0.0,
        }
    }
}

impl SonorityWeights {
    pub fn weight(&self, c: PhonemeCategory) -> f64 {
        match c {
            PhonemeCategory::Vowel => self.vowel,
            PhonemeCategory::Approximant => self.approximant,
            PhonemeCategory::Nasal => self.nasal,
            PhonemeCategory::Fricative => self.fricative,
            PhonemeCategory::Affricate => self.affricate,
            PhonemeCategory::Plosive => self.plosive,
            PhonemeCategory::Silence => self.silence,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProsodyConfig {
    pub frame: FrameSpec,
    pub f0_min_hz: f64,
    pub f0_max_hz: f64,
    /// Minimum normalised autocorrelation peak for a voiced frame.
    pub voicing_threshold: f64,
    /// Minimum frame energy for a voiced frame, relative to the utterance maximum.
    pub energy_floor: f64,
    /// Length of the pitch analysis segment centred on each frame.
    pub pitch_window_ms: f64,
    pub sonority: SonorityWeights,
}

impl Default for ProsodyConfig {
    fn default() -> Self {
        Self {
            frame: FrameSpec::default(),
            f0_min_hz: 50.0,
            f0_max_hz: 500.0,
            voicing_threshold: 0.3,
            energy_floor: 0.01,
            pitch_window_ms: 50.0,
            sonority: SonorityWeights::default(),
        }
    }
}

/// Phoneme classes over time, sorted by start.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhonemeTimeline {
    spans: Vec<(f64, f64, PhonemeCategory)>,
}

impl PhonemeTimeline {
    pub fn new(mut spans: Vec<(f64, f64, PhonemeCategory)>) -> Self {
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self { spans }
    }

    pub fn from_utterance(u: &Utterance) -> Self {
        Self::new(
            u.words
                .iter()
                .flat_map(|w| &w.syllables)
                .flat_map(|s| &s.phonemes)
                .map(|p| (p.start, p.end, p.category))
                .collect(),
        )
    }

    /// Class of the phoneme covering `t`; silence outside every phoneme.
    pub fn category_at(&self, t: f64) -> PhonemeCategory {
        let i = self.spans.partition_point(|s| s.0 <= t);
        match i.checked_sub(1).map(|j| self.spans[j]) {
            Some((_, end, c)) if t < end => c,
            _ => PhonemeCategory::Silence,
        }
    }
}

/// Frame-level prosodic contours. Frame `i` covers samples
/// `[i*hop, i*hop + window)`; `times` holds frame midpoints in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Contours {
    pub energy: Vec<f64>,
    pub sonority: Vec<f64>,
    pub f0: Vec<f64>,
    pub voicing: Vec<bool>,
    pub times: Vec<f64>,
    pub hop_s: f64,
}

impl Contours {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Frames whose midpoint lies in `[start, end)`.
    pub fn frames_in(&self, start: f64, end: f64) -> std::ops::Range<usize> {
        let a = self.times.partition_point(|&t| t < start);
        let b = self.times.partition_point(|&t| t < end);
        a..b.max(a)
    }
}

pub fn compute_contours(
    w: &Waveform,
    timeline: &PhonemeTimeline,
    cfg: &ProsodyConfig,
) -> Result<Contours, ProsodyError> {
    cfg.frame.validate()?;
    let sr = w.sample_rate;
    let win = cfg.frame.window_len(sr);
    let hop = cfg.frame.hop_len(sr);
    if w.len() < win {
        return Err(ProsodyError::TooShort {
            samples: w.len(),
            window: win,
        });
    }
    let frames = (w.len() - win) / hop + 1;
    let window = hann_window(win);
    let x = &w.samples;

    let mut energy = Vec::with_capacity(frames);
    let mut times = Vec::with_capacity(frames);
    for i in 0..frames {
        let seg = &x[i * hop..i * hop + win];
        energy.push(seg.iter().zip(&window).map(|(s, h)| (s * h) * (s * h)).sum::<f64>());
        times.push((i * hop) as f64 / f64::from(sr) + win as f64 / (2.0 * f64::from(sr)));
    }
    let sonority = energy
        .iter()
        .zip(&times)
        .map(|(e, &t)| e * cfg.sonority.weight(timeline.category_at(t)))
        .collect();

    let max_energy = energy.iter().copied().fold(0.0, f64::max);
    let mut tracker = PitchTracker::new(cfg, sr);
    let mut f0 = vec![0.0; frames];
    let mut voicing = vec![false; frames];
    for i in 0..frames {
        if energy[i] <= 0.0 || energy[i] <= cfg.energy_floor * max_energy {
            continue;
        }
        let centre = i * hop + win / 2;
        if let Some(hz) = tracker.estimate(x, centre) {
            f0[i] = hz;
            voicing[i] = true;
        }
    }
    Ok(Contours {
        energy,
        sonority,
        f0,
        voicing,
        times,
        hop_s: hop as f64 / f64::from(sr),
    })
}

/// Normalised-autocorrelation pitch estimator.
struct PitchTracker {
    sample_rate: f64,
    half: usize,
    lag_min: usize,
    lag_max: usize,
    f0_min: f64,
    f0_max: f64,
    threshold: f64,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
    prefix: Vec<f64>,
    r: Vec<f64>,
}

impl PitchTracker {
    fn new(cfg: &ProsodyConfig, sr: u32) -> Self {
        let sample_rate = f64::from(sr);
        let lag_min = (sample_rate / cfg.f0_max_hz).floor().max(2.0) as usize;
        let lag_max = (sample_rate / cfg.f0_min_hz).ceil() as usize;
        let half = ((cfg.pitch_window_ms * sample_rate / 1000.0) / 2.0).round() as usize;
        let n = (2 * half + lag_max + 2).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let ifft = planner.plan_fft_inverse(n);
        let scratch_len = fft
            .get_inplace_scratch_len()
            .max(ifft.get_inplace_scratch_len());
        Self {
            sample_rate,
            half,
            lag_min,
            lag_max,
            f0_min: cfg.f0_min_hz,
            f0_max: cfg.f0_max_hz,
            threshold: cfg.voicing_threshold,
            fft,
            ifft,
            buf: vec![Complex64::default(); n],
            scratch: vec![Complex64::default(); scratch_len],
            prefix: Vec::new(),
            r: Vec::new(),
        }
    }

    fn estimate(&mut self, x: &[f64], centre: usize) -> Option<f64> {
        let a = centre.saturating_sub(self.half);
        let b = (centre + self.half).min(x.len());
        let seg = &x[a..b];
        let len = seg.len();
        if len <= self.lag_min + 1 {
            return None;
        }
        let n = self.buf.len();
        for (i, c) in self.buf.iter_mut().enumerate() {
            *c = Complex64::new(if i < len { seg[i] } else { 0.0 }, 0.0);
        }
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        for c in &mut self.buf {
            *c = Complex64::new(c.norm_sqr(), 0.0);
        }
        self.ifft.process_with_scratch(&mut self.buf, &mut self.scratch);

        self.prefix.clear();
        self.prefix.push(0.0);
        let mut acc = 0.0;
        for v in seg {
            acc += v * v;
            self.prefix.push(acc);
        }
        let hi = (self.lag_max + 1).min(len - 1);
        let lo = self.lag_min - 1;
        self.r.clear();
        for lag in lo..=hi {
            let acf = self.buf[lag].re / n as f64;
            let e0 = self.prefix[len - lag];
            let e1 = self.prefix[len] - self.prefix[lag];
            let denom = (e0 * e1).sqrt();
            self.r.push(if denom > 0.0 { acf / denom } else { 0.0 });
        }
        let r = &self.r;
        let idx = |lag: usize| lag - lo;
        let top = hi.min(self.lag_max);
        let global = (self.lag_min..=top).map(|l| r[idx(l)]).fold(f64::MIN, f64::max);
        if !(global > self.threshold) {
            return None;
        }
        // First local maximum close to the global one avoids octave errors.
        let lag = (self.lag_min..=top).find(|&l| {
            let v = r[idx(l)];
            v >= 0.9 * global
                && v >= r[idx(l - 1)]
                && (l + 1 > hi || v >= r[idx(l + 1)])
        })?;
        let refined = if is_interior(lag, lo, hi) {
            let (ym, y0, yp) = (r[idx(lag - 1)], r[idx(lag)], r[idx(lag + 1)]);
            let d = ym - 2.0 * y0 + yp;
            let shift = if d < 0.0 { 0.5 * (ym - yp) / d } else { 0.0 };
            lag as f64 + shift.clamp(-0.5, 0.5)
        } else {
            lag as f64
        };
        let hz = self.sample_rate / refined;
        (self.f0_min..=self.f0_max).contains(&hz).then_some(hz)
    }
}

fn is_interior(lag: usize, lo: usize, hi: usize) -> bool {
    lag > lo && lag < hi
}
