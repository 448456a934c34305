//! PCM16 audio buffers and WAV file I/O.

use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("unsupported sample rate {0} (expected 8000 or 16000)")]
    UnsupportedRate(u32),
    #[error("unsupported WAV format: {0}")]
    UnsupportedFormat(String),
    #[error("WAV I/O error: {0}")]
    Wav(#[from] hound::Error),
}

/// Mono 16-bit PCM audio at 8 or 16 kHz.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<i16>,
    pub rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<i16>, rate: u32) -> Result<Self, AudioError> {
        if rate != 8000 && rate != 16000 {
            return Err(AudioError::UnsupportedRate(rate));
        }
        Ok(Self { samples, rate })
    }

    /// Builds a buffer from float samples, clamping to the int16 range.
    pub fn from_f64(samples: &[f64], rate: u32) -> Result<Self, AudioError> {
        let samples = samples
            .iter()
            .map(|&v| v.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16)
            .collect();
        Self::new(samples, rate)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.samples.iter().map(|&v| v as f64).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.rate as f64
    }

    /// Mean squared sample value.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            / self.samples.len() as f64
    }

    /// Reads a mono PCM16 WAV file; multi-channel input is mixed down.
    pub fn read_wav(path: &Path) -> Result<Self, AudioError> {
        let mut reader = hound::WavReader::open(path)?;
        let spec = reader.spec();
        if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
            return Err(AudioError::UnsupportedFormat(format!(
                "{:?} {}-bit (need 16-bit integer PCM)",
                spec.sample_format, spec.bits_per_sample
            )));
        }
        let channels = spec.channels as usize;
        let raw: Result<Vec<i16>, _> = reader.samples::<i16>().collect();
        let raw = raw?;
        let samples = if channels == 1 {
            raw
        } else {
            raw.chunks(channels)
                .map(|frame| {
                    let sum: i32 = frame.iter().map(|&v| v as i32).sum();
                    (sum / channels as i32) as i16
                })
                .collect()
        };
        Self::new(samples, spec.sample_rate)
    }

    pub fn write_wav(&self, path: &Path) -> Result<(), AudioError> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut writer = hound::WavWriter::create(path, spec)?;
        for &s in &self.samples {
            writer.write_sample(s)?;
        }
        writer.finalize()?;
        Ok(())
    }
}
