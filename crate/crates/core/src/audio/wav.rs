use std::path::Path;

use super::{AudioError, Waveform, PIPELINE_SAMPLE_RATE};

const PCM16_SCALE: f64 = 32768.0;

/// Read a mono PCM16 16 kHz WAV file. Anything else is rejected, never resampled.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform, AudioError> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(AudioError::UnsupportedEncoding(format!(
            "{}: expected PCM signed 16-bit, found {:?} {}-bit",
            path.display(),
            spec.sample_format,
            spec.bits_per_sample
        )));
    }
    if spec.channels != 1 {
        return Err(AudioError::UnsupportedEncoding(format!(
            "{}: expected mono, found {} channels",
            path.display(),
            spec.channels
        )));
    }
    if spec.sample_rate != PIPELINE_SAMPLE_RATE {
        return Err(AudioError::UnsupportedSampleRate(spec.sample_rate));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / PCM16_SCALE))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| wav_error(path, e))?;
    Waveform::new(samples, spec.sample_rate)
}

/// Quantize a sample to the PCM16 lattice (k / 32768, clamped).
pub fn quantize(x: f64) -> i16 {
    (x * PCM16_SCALE).round().clamp(-32768.0, 32767.0) as i16
}

pub fn encode_wav(w: &Waveform) -> Result<Vec<u8>, AudioError> {
    let mut cursor = std::io::Cursor::new(Vec::new());
    {
        let mut writer = hound::WavWriter::new(&mut cursor, wav_spec(w.sample_rate))
            .map_err(|e| AudioError::Io(e.to_string()))?;
        for &s in &w.samples {
            writer
                .write_sample(quantize(s))
                .map_err(|e| AudioError::Io(e.to_string()))?;
        }
        writer.finalize().map_err(|e| AudioError::Io(e.to_string()))?;
    }
    Ok(cursor.into_inner())
}

pub fn write_wav(w: &Waveform, path: impl AsRef<Path>) -> Result<(), AudioError> {
    let path = path.as_ref();
    let bytes = encode_wav(w)?;
    std::fs::write(path, bytes).map_err(|e| AudioError::Io(format!("{}: {e}", path.display())))
}

fn wav_spec(sample_rate: u32) -> hound::WavSpec {
    hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    }
}

fn wav_error(path: &Path, e: hound::Error) -> AudioError {
    match e {
        hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
            AudioError::Truncated(path.display().to_string())
        }
        hound::Error::IoError(io) => AudioError::Io(format!("{}: {io}", path.display())),
        hound::Error::FormatError(msg) => {
            AudioError::UnsupportedEncoding(format!("{}: {msg}", path.display()))
        }
        hound::Error::Unsupported => {
            AudioError::UnsupportedEncoding(format!("{}: unsupported WAV variant", path.display()))
        }
        other => AudioError::UnsupportedEncoding(format!("{}: {other}", path.display())),
    }
}
