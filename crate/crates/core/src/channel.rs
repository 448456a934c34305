//! Channel impairment models: additive white Gaussian noise, gain scaling,
//! fractional sample offset, and an external-codec subprocess hook.

use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::audio::{AudioBuffer, AudioError};

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("external codec failed: {0}")]
    CodecFailure(String),
    #[error("audio error: {0}")]
    Audio(#[from] AudioError),
}

/// Number of sinc taps on each side for fractional-delay interpolation.
const SINC_HALF_TAPS: usize = 16;

fn clamp_i16(v: f64) -> i16 {
    v.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

/// Adds zero-mean white Gaussian noise at the requested signal-to-noise
/// ratio. `snr_db = +∞` returns the signal untouched. The noise stream is
/// derived only from `seed`, never from the cipher keystream.
pub fn awgn(signal: &AudioBuffer, snr_db: f64, seed: u64) -> AudioBuffer {
    if signal.is_empty() || snr_db.is_infinite() && snr_db > 0.0 {
        return signal.clone();
    }
    let variance = signal.power() / 10f64.powf(snr_db / 10.0);
    let sigma = variance.sqrt();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let samples = signal
        .samples
        .iter()
        .map(|&s| {
            let n: f64 = rng.sample(StandardNormal);
            clamp_i16(s as f64 + sigma * n)
        })
        .collect();
    AudioBuffer {
        samples,
        rate: signal.rate,
    }
}

/// Multiplies every sample by `factor`, saturating at the int16 bounds.
pub fn gain_scale(signal: &AudioBuffer, factor: f64) -> AudioBuffer {
    let samples = signal
        .samples
        .iter()
        .map(|&s| clamp_i16(s as f64 * factor))
        .collect();
    AudioBuffer {
        samples,
        rate: signal.rate,
    }
}

/// Delays the signal by `offset_ms` (possibly fractional and negative) using
/// windowed-sinc interpolation with 32 taps; the integer part is applied as
/// a plain shift. Length-preserving: samples shifted in from outside the
/// signal are zero.
pub fn sample_offset(signal: &AudioBuffer, offset_ms: f64) -> AudioBuffer {
    let shift = offset_ms * signal.rate as f64 / 1000.0;
    let int_shift = shift.round() as isize;
    let frac = shift - int_shift as f64;
    let x: Vec<f64> = signal.to_f64();
    let n = x.len() as isize;
    let at = |i: isize| -> f64 {
        if i >= 0 && i < n {
            x[i as usize]
        } else {
            0.0
        }
    };
    let samples: Vec<i16> = (0..n)
        .map(|i| {
            let src = i - int_shift;
            let v = if frac.abs() < 1e-12 {
                at(src)
            } else {
                // y[i] = Σ_k x[src−k]·sinc(k−frac)·hann window,
                // interpolating x at the fractional position src − frac
                let mut acc = 0.0;
                for k in -(SINC_HALF_TAPS as isize)..SINC_HALF_TAPS as isize {
                    let t = k as f64 - frac;
                    let sinc = if t == 0.0 {
                        1.0
                    } else {
                        (std::f64::consts::PI * t).sin() / (std::f64::consts::PI * t)
                    };
                    let w = 0.5
                        + 0.5
                            * (std::f64::consts::PI * t / SINC_HALF_TAPS as f64)
                                .cos();
                    acc += at(src - k) * sinc * w;
                }
                acc
            };
            clamp_i16(v)
        })
        .collect();
    AudioBuffer {
        samples,
        rate: signal.rate,
    }
}

/// Runs the signal through an external codec subprocess. The command
/// template must contain `{in}` and `{out}` placeholders, which are replaced
/// with temporary WAV paths. The decoded output must keep the sample rate
/// and match the input length within one 20 ms frame.
pub fn external_codec(signal: &AudioBuffer, command: &str) -> Result<AudioBuffer, ChannelError> {
    let dir = tempdir().map_err(|e| ChannelError::CodecFailure(e.to_string()))?;
    let in_path = dir.join("codec_in.wav");
    let out_path = dir.join("codec_out.wav");
    signal.write_wav(&in_path)?;
    let rendered = command
        .replace("{in}", &in_path.display().to_string())
        .replace("{out}", &out_path.display().to_string());
    let status = Command::new("sh")
        .arg("-c")
        .arg(&rendered)
        .status()
        .map_err(|e| ChannelError::CodecFailure(format!("spawn failed: {e}")))?;
    let result = (|| {
        if !status.success() {
            return Err(ChannelError::CodecFailure(format!(
                "command exited with {status}"
            )));
        }
        let out = AudioBuffer::read_wav(&out_path)
            .map_err(|e| ChannelError::CodecFailure(format!("bad output: {e}")))?;
        if out.rate != signal.rate {
            return Err(ChannelError::CodecFailure(format!(
                "sample rate changed: {} -> {}",
                signal.rate, out.rate
            )));
        }
        let frame = signal.rate as usize / 50; // one 20 ms frame
        if out.len().abs_diff(signal.len()) > frame {
            return Err(ChannelError::CodecFailure(format!(
                "length changed: {} -> {} samples",
                signal.len(),
                out.len()
            )));
        }
        Ok(out)
    })();
    let _ = std::fs::remove_dir_all(&dir);
    result
}

/// Creates a unique temporary directory for a codec invocation.
fn tempdir() -> std::io::Result<std::path::PathBuf> {
    use std::time::{SystemTime, UNIX_EPOCH};
    let base = std::env::temp_dir();
    let nanos = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .unwrap_or_default()
        .as_nanos();
    let dir = base.join(format!("voxcrypt-codec-{}-{nanos}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(len: usize, freq: f64, amp: f64, rate: u32) -> AudioBuffer {
        let samples: Vec<i16> = (0..len)
            .map(|n| clamp_i16(amp * (std::f64::consts::TAU * freq * n as f64 / rate as f64).sin()))
            .collect();
        AudioBuffer { samples, rate }
    }

    #[test]
    fn awgn_infinite_snr_is_identity_and_deterministic() {
        let sig = tone(16_000, 440.0, 8000.0, 16000);
        assert_eq!(awgn(&sig, f64::INFINITY, 1), sig);
        let a = awgn(&sig, 15.0, 42);
        let b = awgn(&sig, 15.0, 42);
        let c = awgn(&sig, 15.0, 43);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn awgn_measured_snr_matches() {
        // 10 s at 16 kHz
        let sig = tone(160_000, 350.0, 9000.0, 16000);
        for snr in [5.0, 15.0, 25.0] {
            let noisy = awgn(&sig, snr, 7);
            let noise_power: f64 = sig
                .samples
                .iter()
                .zip(&noisy.samples)
                .map(|(&a, &b)| {
                    let d = (b - a) as f64;
                    d * d
                })
                .sum::<f64>()
                / sig.len() as f64;
            let measured = 10.0 * (sig.power() / noise_power).log10();
            assert!(
                (measured - snr).abs() < 0.2,
                "requested {snr} dB, measured {measured} dB"
            );
        }
    }

    #[test]
    fn awgn_noise_uncorrelated_with_signal() {
        let sig = tone(160_000, 350.0, 9000.0, 16000);
        let noisy = awgn(&sig, 10.0, 99);
        let noise: Vec<f64> = sig
            .samples
            .iter()
            .zip(&noisy.samples)
            .map(|(&a, &b)| (b - a) as f64)
            .collect();
        let x = sig.to_f64();
        let dot: f64 = x.iter().zip(&noise).map(|(a, b)| a * b).sum();
        let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nn: f64 = noise.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((dot / (nx * nn)).abs() < 0.01);
    }

    #[test]
    fn gain_scale_identity_energy_and_saturation() {
        let sig = tone(1600, 500.0, 10000.0, 16000);
        assert_eq!(gain_scale(&sig, 1.0), sig);
        let scaled = gain_scale(&sig, 0.85);
        let ratio = scaled.power() / sig.power();
        assert!((ratio - 0.7225).abs() < 0.001, "energy ratio {ratio}");
        let loud = tone(1600, 500.0, 32767.0, 16000);
        let boosted = gain_scale(&loud, 2.0);
        assert_eq!(
            boosted.samples.iter().copied().max().unwrap(),
            i16::MAX,
            "saturation should clamp at full scale"
        );
        assert_eq!(
            boosted.samples.iter().copied().min().unwrap(),
            i16::MIN,
            "clamp at negative full scale"
        );
    }

    #[test]
    fn sample_offset_zero_and_integer() {
        let sig = tone(3200, 700.0, 9000.0, 16000);
        let zero = sample_offset(&sig, 0.0);
        for (a, b) in sig.samples.iter().zip(&zero.samples) {
            assert!((a - b).abs() <= 1);
        }
        // one sample at 16 kHz = 1/16 ms
        let one = sample_offset(&sig, 1.0 / 16.0);
        assert_eq!(one.len(), sig.len());
        for i in 1..sig.len() {
            assert_eq!(one.samples[i], sig.samples[i - 1]);
        }
    }

    #[test]
    fn sample_offset_fractional_matches_phase_shift() {
        // pure tone: a delay is exactly a phase shift
        let rate = 16000u32;
        let freq = 600.0;
        let sig = tone(16_000, freq, 9000.0, rate);
        let offset_ms = 0.3; // 4.8 samples
        let shifted = sample_offset(&sig, offset_ms);
        let delay = offset_ms * rate as f64 / 1000.0;
        for n in 200..15_800 {
            let expect = 9000.0
                * (std::f64::consts::TAU * freq * (n as f64 - delay) / rate as f64).sin();
            assert!(
                (shifted.samples[n] as f64 - expect).abs() < 20.0,
                "sample {n}: {} vs {expect}",
                shifted.samples[n]
            );
        }
    }

    #[test]
    fn external_codec_copy_and_failures() {
        let sig = tone(1600, 500.0, 8000.0, 16000);
        let out = external_codec(&sig, "cp {in} {out}").unwrap();
        assert_eq!(out, sig);

        assert!(matches!(
            external_codec(&sig, "/nonexistent/binary {in} {out}"),
            Err(ChannelError::CodecFailure(_))
        ));
        // malformed output (truncated WAV) violates the contract
        let truncate = "head -c 100 {in} > {out}";
        assert!(external_codec(&sig, truncate).is_err());
    }
}
