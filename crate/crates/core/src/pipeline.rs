//! End-to-end orchestration: configuration, the encrypt/decrypt/simulate
//! operations, RMSE evaluation of logged parameter traces, and CSV emission
//! for channel sweeps.
//!
//! The transmit chain analyzes 8 kHz narrowband speech into per-frame vocal
//! parameters, enciphers each frame with 160 keystream bits, synthesizes one
//! 400-sample pseudo-speech frame per 20 ms of input and overlap-adds them
//! into a 16 kHz waveform. The receive chain extracts frames at the 320-sample
//! hop, estimates the pseudo parameters, deciphers them with the same
//! keystream and resynthesizes narrowband speech.

use std::io::{Read as _, Seek, SeekFrom, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{AudioBuffer, AudioError};
use crate::channel::{self, ChannelError};
use crate::cipher::{Cipher, CipherConfig, PseudoParams};
use crate::keystream::{Keystream, KeystreamError, Seed};
use crate::pseudospeech::{
    overlap_add, PseudoError, WindowBank, DEFAULT_PITCH_CANDIDATES, FRAME_LEN, HOP,
};
use crate::scrambler::ScrambleError;
use crate::speech::{
    SpeechAnalyzer, SpeechFrame, SpeechSynthesizer, SPEECH_FRAME_LEN,
};
use crate::sphere_maps::{torus_map, BoxPoint};

/// Size of the 16-bit additive rings used by the scalar cipher lanes.
const RING: f64 = 65536.0;

/// A deciphered ring value further than this fraction of the guard interval
/// from the transmitted one counts as a gross error.
const GROSS_ERROR_FRACTION: f64 = 0.05;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("bad input format: {0}")]
    BadInputFormat(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Keystream(#[from] KeystreamError),
    #[error(transparent)]
    Pseudo(#[from] PseudoError),
    #[error(transparent)]
    Scramble(#[from] ScrambleError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Flat JSON configuration of the whole pipeline. Every key carries its unit
/// in its name where one applies; the defaults reproduce the reference
/// parameter set exactly, so an empty JSON object `{}` is a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Speech energy bounds (sum of mel band energies, dimensionless).
    pub speech_energy_min: f64,
    pub speech_energy_max: f64,
    /// Speech pitch period bounds in samples per cycle at 8 kHz.
    pub speech_pitch_min_samples: f64,
    pub speech_pitch_max_samples: f64,
    /// Pseudo-speech payload energy bounds (dimensionless).
    pub pseudo_energy_min: f64,
    pub pseudo_energy_max: f64,
    /// Pseudo-speech pitch period bounds in samples per cycle at 16 kHz.
    pub pseudo_pitch_min_samples: f64,
    pub pseudo_pitch_max_samples: f64,
    /// Guard bounds of the pitch lane inside the 16-bit ring.
    pub pitch_guard_low: u32,
    pub pitch_guard_high: u32,
    /// Guard bounds of the energy lane inside the 16-bit ring.
    pub energy_guard_low: u32,
    pub energy_guard_high: u32,
    /// Number of candidates on the receiver's pseudo pitch grid.
    pub pitch_grid_candidates: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let c = CipherConfig::default();
        Self {
            speech_energy_min: c.epsilon_min,
            speech_energy_max: c.epsilon_max,
            speech_pitch_min_samples: c.pitch_min,
            speech_pitch_max_samples: c.pitch_max,
            pseudo_energy_min: c.pseudo_epsilon_min,
            pseudo_energy_max: c.pseudo_epsilon_max,
            pseudo_pitch_min_samples: c.pseudo_pitch_min,
            pseudo_pitch_max_samples: c.pseudo_pitch_max,
            pitch_guard_low: c.kappa_low,
            pitch_guard_high: c.kappa_high,
            energy_guard_low: c.rho_low,
            energy_guard_high: c.rho_high,
            pitch_grid_candidates: DEFAULT_PITCH_CANDIDATES,
        }
    }
}

impl PipelineConfig {
    pub fn from_json_str(s: &str) -> Result<Self, PipelineError> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: &Path) -> Result<Self, PipelineError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// The cipher-facing view of the configuration.
    pub fn cipher_config(&self) -> CipherConfig {
        CipherConfig {
            epsilon_min: self.speech_energy_min,
            epsilon_max: self.speech_energy_max,
            pitch_min: self.speech_pitch_min_samples,
            pitch_max: self.speech_pitch_max_samples,
            pseudo_epsilon_min: self.pseudo_energy_min,
            pseudo_epsilon_max: self.pseudo_energy_max,
            pseudo_pitch_min: self.pseudo_pitch_min_samples,
            pseudo_pitch_max: self.pseudo_pitch_max_samples,
            kappa_low: self.pitch_guard_low,
            kappa_high: self.pitch_guard_high,
            rho_low: self.energy_guard_low,
            rho_high: self.energy_guard_high,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.cipher_config().validate().map_err(PipelineError::Config)?;
        if self.pitch_grid_candidates < 2 {
            return Err(PipelineError::Config(format!(
                "pitch grid needs at least 2 candidates, got {}",
                self.pitch_grid_candidates
            )));
        }
        Ok(())
    }
}

/// Channel impairments applied between encrypt and decrypt, in the order
/// gain → external codec → sample offset → additive noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    /// Amplitude scale factor; `None` means unity.
    pub gain: Option<f64>,
    /// External codec command with `{in}`/`{out}` placeholders.
    pub codec_cmd: Option<String>,
    /// Fractional delay in milliseconds.
    pub offset_ms: Option<f64>,
    /// AWGN level; `None` means noiseless.
    pub snr_db: Option<f64>,
    /// Seed of the channel noise generator (independent of the cipher seed).
    pub noise_seed: u64,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        Self {
            gain: None,
            codec_cmd: None,
            offset_ms: None,
            snr_db: None,
            noise_seed: 0,
        }
    }
}

impl ChannelSpec {
    pub fn is_clean(&self) -> bool {
        self.gain.is_none()
            && self.codec_cmd.is_none()
            && self.offset_ms.is_none()
            && self.snr_db.is_none()
    }

    pub fn apply(&self, audio: &AudioBuffer) -> Result<AudioBuffer, ChannelError> {
        let mut out = audio.clone();
        if let Some(g) = self.gain {
            out = channel::gain_scale(&out, g);
        }
        if let Some(cmd) = &self.codec_cmd {
            out = channel::external_codec(&out, cmd)?;
        }
        if let Some(ms) = self.offset_ms {
            out = channel::sample_offset(&out, ms);
        }
        if let Some(snr) = self.snr_db {
            out = channel::awgn(&out, snr, self.noise_seed);
        }
        Ok(out)
    }

    /// Compact human-readable description for CSV rows and logs.
    pub fn describe(&self) -> String {
        if self.is_clean() {
            return "clean".to_string();
        }
        let mut parts = Vec::new();
        if let Some(g) = self.gain {
            parts.push(format!("gain={g}"));
        }
        if let Some(cmd) = &self.codec_cmd {
            parts.push(format!("codec={cmd}"));
        }
        if let Some(ms) = self.offset_ms {
            parts.push(format!("offset={ms}ms"));
        }
        if let Some(snr) = self.snr_db {
            parts.push(format!("awgn={snr}dB"));
        }
        parts.join("+")
    }
}

/// Per-frame transmit-side trace. Leaks the plaintext vocal parameters; only
/// ever written to disk behind the explicit insecure-trace flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTrace {
    pub frame: usize,
    /// Quantized ring values before and after keystream translation.
    pub kappa_init: u32,
    pub kappa_enc: u32,
    pub rho_init: u32,
    pub rho_enc: u32,
    /// Plaintext vocal parameters.
    pub speech_pitch: f64,
    pub speech_energy: f64,
    /// Timbre direction `D` on `S^8` (9 coordinates).
    pub timbre: Vec<f64>,
    /// Transmitted pseudo parameters.
    pub pseudo_pitch: f64,
    pub pseudo_energy: f64,
    /// Scrambled timbre `D̃` on `S^15` (16 coordinates).
    pub pseudo_timbre: Vec<f64>,
    /// PCM headroom attenuation applied during frame synthesis (≤ 1).
    pub headroom_scale: f64,
}

/// Per-frame receive-side trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecryptFrameTrace {
    pub frame: usize,
    /// Real-valued ring values before and after keystream removal.
    pub kappa_rec: f64,
    pub kappa_dec: f64,
    pub rho_rec: f64,
    pub rho_dec: f64,
    /// Received pseudo parameters.
    pub pseudo_pitch: f64,
    pub pseudo_energy: f64,
    pub pseudo_timbre: Vec<f64>,
    /// Deciphered vocal parameters.
    pub speech_pitch: f64,
    pub speech_energy: f64,
    pub timbre: Vec<f64>,
    /// The ring value left its guard interval before clamping.
    pub pitch_guard_clamped: bool,
    pub energy_guard_clamped: bool,
    /// The frame failed pseudo-speech analysis and neutral parameters were
    /// substituted (keystream sequencing is preserved regardless).
    pub degenerate: bool,
}

pub struct EncryptOutput {
    /// 16 kHz pseudo-speech waveform.
    pub audio: AudioBuffer,
    pub trace: Vec<FrameTrace>,
    /// Zero samples appended to the 8 kHz input to fill the last 20 ms frame.
    pub padding: usize,
}

pub struct DecryptOutput {
    /// 8 kHz resynthesized speech.
    pub audio: AudioBuffer,
    pub trace: Vec<DecryptFrameTrace>,
}

pub struct SimulationResult {
    pub encrypted: AudioBuffer,
    pub received: AudioBuffer,
    pub decrypted: AudioBuffer,
    pub enc_trace: Vec<FrameTrace>,
    pub dec_trace: Vec<DecryptFrameTrace>,
    pub report: RmseReport,
}

/// The six RMSE figures of a simulation run plus gross-error counters.
///
/// Pitch and energy errors are measured in the 16-bit ring domains:
/// `*_rec` compares the transmitted ring value with the one recovered from
/// the channel (circular distance, before keystream removal), `*_dec`
/// compares the plaintext quantized value with the deciphered one. Timbre
/// errors are Euclidean distances of the unit vectors — `pseudo_timbre` for
/// `D̃` on `S^15`, `timbre` for `D` on `S^8`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseReport {
    pub frames: usize,
    pub rmse_kappa_rec: f64,
    pub rmse_kappa_dec: f64,
    pub rmse_rho_rec: f64,
    pub rmse_rho_dec: f64,
    pub rmse_pseudo_timbre: f64,
    pub rmse_timbre: f64,
    /// Frames whose pitch or energy ring value had to be clamped back into
    /// its guard interval.
    pub guard_violations: usize,
    /// Frames whose deciphered pitch ring value is off by more than 5 % of
    /// the guard interval.
    pub gross_pitch_errors: usize,
}

/// Header naming all six RMSE columns of sweep CSV output.
pub const CSV_HEADER: &str = "channel,snr_db,frames,rmse_kappa_rec,rmse_kappa_dec,\
rmse_rho_rec,rmse_rho_dec,rmse_pseudo_timbre,rmse_timbre,guard_violations,gross_pitch_errors";

impl RmseReport {
    /// One CSV row matching [`CSV_HEADER`].
    pub fn csv_row(&self, channel: &str, snr_db: Option<f64>) -> String {
        let snr = snr_db.map_or_else(|| "inf".to_string(), |v| format!("{v}"));
        format!(
            "{channel},{snr},{},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{},{}",
            self.frames,
            self.rmse_kappa_rec,
            self.rmse_kappa_dec,
            self.rmse_rho_rec,
            self.rmse_rho_dec,
            self.rmse_pseudo_timbre,
            self.rmse_timbre,
            self.guard_violations,
            self.gross_pitch_errors,
        )
    }
}

/// Circular distance on the 16-bit ring.
fn ring_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(RING);
    d.min(RING - d)
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// The assembled encrypt/decrypt pipeline.
pub struct Pipeline {
    cfg: PipelineConfig,
    cipher: Cipher,
    bank: WindowBank,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let cipher = Cipher::new(cfg.cipher_config())?;
        Ok(Self {
            cfg,
            cipher,
            bank: WindowBank::new(),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn cipher(&self) -> &Cipher {
        &self.cipher
    }

    /// Encrypts 8 kHz narrowband speech into 16 kHz pseudo-speech.
    pub fn encrypt(&self, input: &AudioBuffer, seed: &Seed) -> Result<EncryptOutput, PipelineError> {
        if input.rate != 8000 {
            return Err(PipelineError::BadInputFormat(format!(
                "encrypt expects 8 kHz input, got {} Hz",
                input.rate
            )));
        }
        if input.is_empty() {
            return Ok(EncryptOutput {
                audio: AudioBuffer::new(Vec::new(), 16000)?,
                trace: Vec::new(),
                padding: 0,
            });
        }
        let samples = input.to_f64();
        let num_frames = samples.len().div_ceil(SPEECH_FRAME_LEN);
        let padding = num_frames * SPEECH_FRAME_LEN - samples.len();

        let mut analyzer = SpeechAnalyzer::new();
        let frames = analyzer.analyze(&samples);
        debug_assert_eq!(frames.len(), num_frames);

        let mut ks = Keystream::new(seed);
        let mut waves = Vec::with_capacity(frames.len());
        let mut trace = Vec::with_capacity(frames.len());
        for (i, frame) in frames.iter().enumerate() {
            let nu = ks.next_frame_randoms()?;
            let (pp, et) = self.cipher.encipher(&frame.params, &nu);
            let (wave, info) = self.bank.synth_frame(&pp)?;
            trace.push(FrameTrace {
                frame: i,
                kappa_init: et.kappa_init,
                kappa_enc: et.kappa_enc,
                rho_init: et.rho_init,
                rho_enc: et.rho_enc,
                speech_pitch: frame.params.pitch,
                speech_energy: frame.params.energy,
                timbre: frame.params.timbre.coords().to_vec(),
                pseudo_pitch: pp.pitch,
                pseudo_energy: pp.energy,
                pseudo_timbre: pp.timbre.coords().to_vec(),
                headroom_scale: info.headroom_scale,
            });
            waves.push(wave);
        }
        let audio = AudioBuffer::from_f64(&overlap_add(&waves), 16000)?;
        Ok(EncryptOutput {
            audio,
            trace,
            padding,
        })
    }

    /// Neutral pseudo parameters substituted for frames that fail analysis,
    /// keeping the frame/keystream sequencing intact.
    fn neutral_pseudo(&self) -> PseudoParams {
        let cfg = &self.cfg;
        let xi = self.cipher.code().xi();
        PseudoParams {
            energy: (cfg.pseudo_energy_min * cfg.pseudo_energy_max).sqrt(),
            pitch: 0.5 * (cfg.pseudo_pitch_min_samples + cfg.pseudo_pitch_max_samples),
            timbre: torus_map(&BoxPoint::wrapped(vec![0.0; xi.dim()], xi), xi),
        }
    }

    /// Decrypts frame-aligned 16 kHz pseudo-speech back into 8 kHz speech.
    /// `padding` is the zero-pad length recorded at encryption; when known,
    /// the tail is trimmed so the output length matches the original input.
    pub fn decrypt(
        &self,
        input: &AudioBuffer,
        seed: &Seed,
        padding: Option<usize>,
    ) -> Result<DecryptOutput, PipelineError> {
        if input.rate != 16000 {
            return Err(PipelineError::BadInputFormat(format!(
                "decrypt expects 16 kHz input, got {} Hz",
                input.rate
            )));
        }
        if input.is_empty() {
            return Ok(DecryptOutput {
                audio: AudioBuffer::new(Vec::new(), 8000)?,
                trace: Vec::new(),
            });
        }
        let x = input.to_f64();
        // frame f occupies [f·HOP, f·HOP + FRAME_LEN); the last frame may be
        // cut short by channel length changes and is zero-extended
        let num_frames = x.len().saturating_sub(FRAME_LEN - HOP).div_ceil(HOP).max(1);

        let mut ks = Keystream::new(seed);
        let mut speech_frames = Vec::with_capacity(num_frames);
        let mut trace = Vec::with_capacity(num_frames);
        let mut frame_buf = vec![0.0f64; FRAME_LEN];
        for f in 0..num_frames {
            let start = f * HOP;
            for (i, s) in frame_buf.iter_mut().enumerate() {
                *s = x.get(start + i).copied().unwrap_or(0.0);
            }
            let nu = ks.next_frame_randoms()?;
            let (pp, degenerate) = match self
                .bank
                .analyze_frame_with(&frame_buf, self.cfg.pitch_grid_candidates)
            {
                Ok((pp, _)) => (pp, false),
                Err(_) => (self.neutral_pseudo(), true),
            };
            let (params, dt) = self.cipher.decipher(&pp, &nu)?;
            // detect guard clamping from the pre-clamp ring values
            let kappa_raw = (dt.kappa_rec - nu.nu[0] as f64).rem_euclid(RING);
            let rho_raw = (dt.rho_rec - nu.nu[1] as f64).rem_euclid(RING);
            trace.push(DecryptFrameTrace {
                frame: f,
                kappa_rec: dt.kappa_rec,
                kappa_dec: dt.kappa_dec,
                rho_rec: dt.rho_rec,
                rho_dec: dt.rho_dec,
                pseudo_pitch: pp.pitch,
                pseudo_energy: pp.energy,
                pseudo_timbre: pp.timbre.coords().to_vec(),
                speech_pitch: params.pitch,
                speech_energy: params.energy,
                timbre: params.timbre.coords().to_vec(),
                pitch_guard_clamped: kappa_raw < self.cfg.pitch_guard_low as f64
                    || kappa_raw > self.cfg.pitch_guard_high as f64,
                energy_guard_clamped: rho_raw < self.cfg.energy_guard_low as f64
                    || rho_raw > self.cfg.energy_guard_high as f64,
                degenerate,
            });
            // voicing is never transmitted; the stand-in synthesizer runs
            // fully voiced, which preserves the parameter contract
            speech_frames.push(SpeechFrame {
                params,
                voiced: true,
            });
        }
        let mut samples = SpeechSynthesizer::new().synthesize(&speech_frames);
        if let Some(pad) = padding {
            samples.truncate(samples.len().saturating_sub(pad));
        }
        Ok(DecryptOutput {
            audio: AudioBuffer::from_f64(&samples, 8000)?,
            trace,
        })
    }

    /// Encrypt → channel → decrypt, with RMSE evaluation of the traces.
    pub fn simulate(
        &self,
        input: &AudioBuffer,
        seed: &Seed,
        channel: &ChannelSpec,
    ) -> Result<SimulationResult, PipelineError> {
        let enc = self.encrypt(input, seed)?;
        let received = channel.apply(&enc.audio)?;
        let dec = self.decrypt(&received, seed, Some(enc.padding))?;
        let report = self.evaluate(&enc.trace, &dec.trace);
        Ok(SimulationResult {
            encrypted: enc.audio,
            received,
            decrypted: dec.audio,
            enc_trace: enc.trace,
            dec_trace: dec.trace,
            report,
        })
    }

    /// Runs one simulation per SNR value, keeping the other impairments of
    /// `base` fixed. Returns the per-SNR reports in input order.
    pub fn sweep(
        &self,
        input: &AudioBuffer,
        seed: &Seed,
        base: &ChannelSpec,
        snrs_db: &[f64],
    ) -> Result<Vec<(f64, RmseReport)>, PipelineError> {
        let mut out = Vec::with_capacity(snrs_db.len());
        for &snr in snrs_db {
            let spec = ChannelSpec {
                snr_db: Some(snr),
                ..base.clone()
            };
            let sim = self.simulate(input, seed, &spec)?;
            out.push((snr, sim.report));
        }
        Ok(out)
    }

    /// Computes the six RMSE figures from paired transmit/receive traces.
    pub fn evaluate(&self, enc: &[FrameTrace], dec: &[DecryptFrameTrace]) -> RmseReport {
        let n = enc.len().min(dec.len());
        let mut sq = [0.0f64; 6];
        let mut guard_violations = 0;
        let mut gross_pitch_errors = 0;
        let gross_bound =
            GROSS_ERROR_FRACTION * (self.cfg.pitch_guard_high - self.cfg.pitch_guard_low) as f64;
        for (e, d) in enc.iter().zip(dec).take(n) {
            let k_rec = ring_distance(e.kappa_enc as f64, d.kappa_rec);
            let k_dec = e.kappa_init as f64 - d.kappa_dec;
            let r_rec = ring_distance(e.rho_enc as f64, d.rho_rec);
            let r_dec = e.rho_init as f64 - d.rho_dec;
            let dt = euclid(&e.pseudo_timbre, &d.pseudo_timbre);
            let dv = euclid(&e.timbre, &d.timbre);
            for (acc, v) in sq.iter_mut().zip([k_rec, k_dec, r_rec, r_dec, dt, dv]) {
                *acc += v * v;
            }
            if d.pitch_guard_clamped || d.energy_guard_clamped {
                guard_violations += 1;
            }
            if k_dec.abs() > gross_bound {
                gross_pitch_errors += 1;
            }
        }
        let rmse = |s: f64| if n > 0 { (s / n as f64).sqrt() } else { 0.0 };
        RmseReport {
            frames: n,
            rmse_kappa_rec: rmse(sq[0]),
            rmse_kappa_dec: rmse(sq[1]),
            rmse_rho_rec: rmse(sq[2]),
            rmse_rho_dec: rmse(sq[3]),
            rmse_pseudo_timbre: rmse(sq[4]),
            rmse_timbre: rmse(sq[5]),
            guard_violations,
            gross_pitch_errors,
        }
    }
}

/// Draws a fresh 256-bit seed from OS entropy.
pub fn keygen() -> Seed {
    Seed::random(&mut rand::rngs::OsRng)
}

/// Transmit-side trace sidecar. The file leaks the plaintext vocal
/// parameters, so writing it is gated behind an explicit insecure flag.
#[derive(Debug, Serialize, Deserialize)]
pub struct TraceSidecar {
    pub warning: String,
    pub frames: Vec<FrameTrace>,
}

pub fn write_trace_file(path: &Path, trace: &[FrameTrace]) -> Result<(), PipelineError> {
    let sidecar = TraceSidecar {
        warning: "INSECURE: this file contains the plaintext vocal parameters of every frame; \
it exists for testing and evaluation only"
            .to_string(),
        frames: trace.to_vec(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn read_trace_file(path: &Path) -> Result<Vec<FrameTrace>, PipelineError> {
    let sidecar: TraceSidecar = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    Ok(sidecar.frames)
}

const PAD_KEY: &str = "pad_samples=";

/// Writes the encrypted waveform and records the zero-pad length in a
/// standard `LIST`/`INFO` comment chunk appended to the WAV file.
pub fn write_encrypted_wav(
    path: &Path,
    audio: &AudioBuffer,
    padding: usize,
) -> Result<(), PipelineError> {
    audio.write_wav(path)?;
    let mut text = format!("{PAD_KEY}{padding}").into_bytes();
    text.push(0); // comments are nul-terminated
    if text.len() % 2 == 1 {
        text.push(0); // chunk data is padded to even length
    }
    let mut chunk = Vec::new();
    chunk.extend_from_slice(b"LIST");
    chunk.extend_from_slice(&((4 + 8 + text.len()) as u32).to_le_bytes());
    chunk.extend_from_slice(b"INFO");
    chunk.extend_from_slice(b"ICMT");
    chunk.extend_from_slice(&(text.len() as u32).to_le_bytes());
    chunk.extend_from_slice(&text);

    let mut file = std::fs::OpenOptions::new().read(true).write(true).open(path)?;
    let mut riff_size = [0u8; 4];
    file.seek(SeekFrom::Start(4))?;
    file.read_exact(&mut riff_size)?;
    let new_size = u32::from_le_bytes(riff_size) + chunk.len() as u32;
    file.seek(SeekFrom::Start(4))?;
    file.write_all(&new_size.to_le_bytes())?;
    file.seek(SeekFrom::End(0))?;
    file.write_all(&chunk)?;
    Ok(())
}

/// Reads the zero-pad length back from a WAV file's `INFO` comment, if any.
pub fn read_padding_metadata(path: &Path) -> Result<Option<usize>, PipelineError> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 12 || &bytes[..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Ok(None);
    }
    let mut pos = 12usize;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let data_end = (pos + 8 + size).min(bytes.len());
        if id == b"LIST" && size >= 4 && &bytes[pos + 8..pos + 12] == b"INFO" {
            let mut sub = pos + 12;
            while sub + 8 <= data_end {
                let sid = &bytes[sub..sub + 4];
                let ssize =
                    u32::from_le_bytes(bytes[sub + 4..sub + 8].try_into().unwrap()) as usize;
                let send = (sub + 8 + ssize).min(data_end);
                if sid == b"ICMT" {
                    let text: &[u8] = &bytes[sub + 8..send];
                    let text = match text.iter().position(|&b| b == 0) {
                        Some(n) => &text[..n],
                        None => text,
                    };
                    if let Ok(s) = std::str::from_utf8(text) {
                        if let Some(rest) = s.strip_prefix(PAD_KEY) {
                            if let Ok(v) = rest.parse::<usize>() {
                                return Ok(Some(v));
                            }
                        }
                    }
                }
                sub += 8 + ssize + ssize % 2;
            }
        }
        pos += 8 + size + size % 2;
    }
    Ok(None)
}

/// Deterministic vowel-like test signal: a pitch-modulated harmonic source
/// shaped by two formant peaks with a slow syllabic amplitude envelope.
/// Used by the evaluation harness when no recorded speech is supplied.
pub fn synthetic_speech(duration_secs: f64, seed: u64) -> AudioBuffer {
    use rand::{Rng, SeedableRng};
    let rate = 8000.0f64;
    let len = (duration_secs * rate) as usize;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut phase = 0.0f64;
    let mut out = Vec::with_capacity(len);
    // formant envelope evaluated at harmonic frequencies
    let formant = |f: f64| {
        let g = |c: f64, w: f64| (-((f - c) / w).powi(2)).exp();
        g(700.0, 350.0) + 0.6 * g(1800.0, 400.0) + 0.15
    };
    let vibrato_phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let envelope_phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    for n in 0..len {
        let t = n as f64 / rate;
        // pitch period drifts over 55..105 samples (~76–145 Hz)
        let period = 80.0 + 25.0 * (std::f64::consts::TAU * 0.7 * t + vibrato_phase).sin();
        let f0 = rate / period;
        phase += std::f64::consts::TAU / period;
        let mut v = 0.0;
        let mut k = 1;
        while k as f64 * f0 < 3400.0 {
            v += formant(k as f64 * f0) / k as f64 * (k as f64 * phase).sin();
            k += 1;
        }
        // syllabic amplitude modulation, never fully silent
        // keep frame energies inside the open (ε_min, ε_max) interval so
        // the energy lane stays clear of its guard bounds
        let env = 0.55 + 0.45 * (std::f64::consts::TAU * 2.3 * t + envelope_phase).sin();
        let noise: f64 = rng.gen_range(-1.0..1.0);
        out.push(1200.0 * env * v + 15.0 * noise);
    }
    AudioBuffer::from_f64(&out, 8000).expect("8 kHz is a supported rate")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pseudospeech::{BAND_HIGH_HZ, BAND_LOW_HZ};

    fn seed(fill: u8) -> Seed {
        Seed([fill; 32])
    }

    fn pipeline() -> Pipeline {
        Pipeline::new(PipelineConfig::default()).unwrap()
    }

    #[test]
    fn config_defaults_round_trip_and_reject_unknown_keys() {
        let cfg = PipelineConfig::default();
        let json = cfg.to_json_pretty();
        assert_eq!(PipelineConfig::from_json_str(&json).unwrap(), cfg);
        // an empty object means "all defaults"
        assert_eq!(PipelineConfig::from_json_str("{}").unwrap(), cfg);
        // defaults reproduce the reference parameter set
        assert_eq!(cfg.speech_energy_min, 10.0);
        assert_eq!(cfg.speech_energy_max, 1e8);
        assert_eq!(cfg.speech_pitch_min_samples, 16.0);
        assert_eq!(cfg.speech_pitch_max_samples, 128.0);
        assert_eq!(cfg.pseudo_energy_min, 1e9);
        assert_eq!(cfg.pseudo_energy_max, 1e10);
        assert_eq!(cfg.pseudo_pitch_min_samples, 80.0);
        assert_eq!(cfg.pseudo_pitch_max_samples, 160.0);
        assert_eq!(cfg.pitch_guard_low, 8192);
        assert_eq!(cfg.pitch_guard_high, 57343);

        assert!(PipelineConfig::from_json_str("{\"no_such_key\": 1}").is_err());
        assert!(PipelineConfig::from_json_str("{\"pitch_guard_low\": 0}").is_err());
        assert!(
            PipelineConfig::from_json_str("{\"speech_pitch_min_samples\": 200.0}").is_err(),
            "inverted pitch bounds must fail validation"
        );
    }

    #[test]
    fn encrypt_duration_determinism_and_occupancy() {
        let p = pipeline();
        let input = synthetic_speech(1.0, 11);
        let enc = p.encrypt(&input, &seed(1)).unwrap();
        assert_eq!(enc.audio.rate, 16000);
        // 1 s in → 1 s ± 25 ms out
        assert!((enc.audio.duration_secs() - 1.0).abs() <= 0.025);
        assert_eq!(enc.trace.len(), 50);
        assert_eq!(enc.padding, 0);

        let enc2 = p.encrypt(&input, &seed(1)).unwrap();
        assert_eq!(enc.audio, enc2.audio, "same input and seed must be bit-identical");
        let enc3 = p.encrypt(&input, &seed(2)).unwrap();
        assert_ne!(enc.audio, enc3.audio);

        // spectral occupancy of the wire signal within 300–6700 Hz ≥ 99 %
        let x = enc.audio.to_f64();
        let n = x.len();
        let mut buf: Vec<num_complex::Complex64> =
            x.iter().map(|&v| num_complex::Complex64::new(v, 0.0)).collect();
        rustfft::FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let bin_hz = 16000.0 / n as f64;
        let mut total = 0.0;
        let mut in_band = 0.0;
        for (i, c) in buf.iter().enumerate().take(n / 2) {
            let f = i as f64 * bin_hz;
            let e = c.norm_sqr();
            total += e;
            if (BAND_LOW_HZ..BAND_HIGH_HZ).contains(&f) {
                in_band += e;
            }
        }
        assert!(in_band / total >= 0.99, "occupancy {}", in_band / total);
    }

    #[test]
    fn clean_round_trip_parameters_and_length() {
        let p = pipeline();
        // odd length forces padding
        let input = AudioBuffer::new(synthetic_speech(2.0, 5).samples[..15_900].to_vec(), 8000)
            .unwrap();
        let sim = p.simulate(&input, &seed(3), &ChannelSpec::default()).unwrap();
        assert_eq!(sim.decrypted.rate, 8000);
        assert_eq!(sim.decrypted.len(), input.len(), "padding must be trimmed");
        let r = &sim.report;
        assert_eq!(r.frames, 100);
        // noiseless transport: ring errors stay below one quantization step
        assert!(r.rmse_kappa_rec < 1.0, "kappa rec {}", r.rmse_kappa_rec);
        assert!(r.rmse_kappa_dec < 1.0, "kappa dec {}", r.rmse_kappa_dec);
        // the energy lane additionally carries the PCM headroom attenuation:
        // a frame scaled by s on the wire loses 2·log10(s) decades, i.e.
        // 65535·2·log10(s) ring units on the 1-decade pseudo-energy span
        for (e, d) in sim.enc_trace.iter().zip(&sim.dec_trace) {
            let allowance = 65535.0 * 2.0 * e.headroom_scale.log10().abs();
            let err = (e.rho_init as f64 - d.rho_dec).abs();
            assert!(err <= 1.0 + allowance + 1e-6, "rho err {err} > {allowance}");
        }
        assert!(r.rmse_pseudo_timbre < 0.02, "D-tilde {}", r.rmse_pseudo_timbre);
        assert!(r.rmse_timbre < 0.05, "D {}", r.rmse_timbre);
        assert_eq!(r.gross_pitch_errors, 0);
        assert!(!sim.dec_trace.iter().any(|t| t.degenerate));
    }

    #[test]
    fn rmse_oracle_equivalence() {
        // naive per-definition recomputation from the logged traces
        let p = pipeline();
        let input = synthetic_speech(1.0, 9);
        let sim = p
            .simulate(
                &input,
                &seed(4),
                &ChannelSpec {
                    snr_db: Some(12.0),
                    noise_seed: 77,
                    ..ChannelSpec::default()
                },
            )
            .unwrap();
        let l = sim.enc_trace.len().min(sim.dec_trace.len()) as f64;
        let mut naive = [0.0f64; 6];
        for (e, d) in sim.enc_trace.iter().zip(&sim.dec_trace) {
            let wrap = |x: f64| {
                let m = x.abs() % 65536.0;
                m.min(65536.0 - m)
            };
            naive[0] += wrap(e.kappa_enc as f64 - d.kappa_rec).powi(2) / l;
            naive[1] += (e.kappa_init as f64 - d.kappa_dec).powi(2) / l;
            naive[2] += wrap(e.rho_enc as f64 - d.rho_rec).powi(2) / l;
            naive[3] += (e.rho_init as f64 - d.rho_dec).powi(2) / l;
            naive[4] += e
                .pseudo_timbre
                .iter()
                .zip(&d.pseudo_timbre)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                / l;
            naive[5] += e
                .timbre
                .iter()
                .zip(&d.timbre)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                / l;
        }
        let r = &sim.report;
        let got = [
            r.rmse_kappa_rec,
            r.rmse_kappa_dec,
            r.rmse_rho_rec,
            r.rmse_rho_dec,
            r.rmse_pseudo_timbre,
            r.rmse_timbre,
        ];
        for (g, n) in got.iter().zip(&naive) {
            assert!((g - n.sqrt()).abs() < 1e-9, "{g} vs {}", n.sqrt());
        }
    }

    #[test]
    fn wrong_seed_decrypts_to_noise() {
        let p = pipeline();
        let input = synthetic_speech(1.0, 21);
        let enc = p.encrypt(&input, &seed(5)).unwrap();
        let right = p.decrypt(&enc.audio, &seed(5), Some(enc.padding)).unwrap();
        let wrong = p.decrypt(&enc.audio, &seed(6), Some(enc.padding)).unwrap();
        let r_right = p.evaluate(&enc.trace, &right.trace);
        let r_wrong = p.evaluate(&enc.trace, &wrong.trace);
        assert!(r_wrong.rmse_timbre > 10.0 * r_right.rmse_timbre.max(1e-3));
        // a wrong key leaves the timbre near the random-codeword baseline:
        // two random points of S^8 with nonnegative coordinates are ~1 apart
        assert!(r_wrong.rmse_timbre > 0.3, "wrong-key D RMSE {}", r_wrong.rmse_timbre);
        assert!(r_wrong.rmse_kappa_dec > 1000.0);
    }

    #[test]
    fn empty_input_round_trip() {
        let p = pipeline();
        let empty8 = AudioBuffer::new(Vec::new(), 8000).unwrap();
        let enc = p.encrypt(&empty8, &seed(7)).unwrap();
        assert!(enc.audio.is_empty());
        assert!(enc.trace.is_empty());
        let dec = p.decrypt(&enc.audio, &seed(7), Some(0)).unwrap();
        assert!(dec.audio.is_empty());

        // rate mismatches are rejected up front
        assert!(matches!(
            p.encrypt(&AudioBuffer::new(vec![0; 100], 16000).unwrap(), &seed(7)),
            Err(PipelineError::BadInputFormat(_))
        ));
        assert!(matches!(
            p.decrypt(&AudioBuffer::new(vec![0; 100], 8000).unwrap(), &seed(7), None),
            Err(PipelineError::BadInputFormat(_))
        ));
    }

    #[test]
    fn padding_metadata_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("enc.wav");
        let audio = synthetic_speech(0.1, 2);
        write_encrypted_wav(&path, &audio, 37).unwrap();
        assert_eq!(read_padding_metadata(&path).unwrap(), Some(37));
        // the appended chunk must not break ordinary WAV readers
        let back = AudioBuffer::read_wav(&path).unwrap();
        assert_eq!(back, audio);
        // a plain WAV has no metadata
        let plain = dir.path().join("plain.wav");
        audio.write_wav(&plain).unwrap();
        assert_eq!(read_padding_metadata(&plain).unwrap(), None);
    }

    #[test]
    fn trace_sidecar_round_trip_and_warning() {
        let p = pipeline();
        let enc = p.encrypt(&synthetic_speech(0.2, 3), &seed(8)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.json");
        write_trace_file(&path, &enc.trace).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("INSECURE"));
        assert_eq!(read_trace_file(&path).unwrap(), enc.trace);
    }

    #[test]
    fn keygen_properties() {
        let a = keygen();
        let b = keygen();
        assert_eq!(a.to_hex().len(), 64);
        assert_ne!(a.to_hex(), b.to_hex());
        assert!(a.to_hex().chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase()));
    }

    #[test]
    fn csv_row_matches_header() {
        let p = pipeline();
        let input = synthetic_speech(0.4, 13);
        let sim = p.simulate(&input, &seed(9), &ChannelSpec::default()).unwrap();
        let row = sim.report.csv_row(&ChannelSpec::default().describe(), None);
        assert_eq!(
            row.split(',').count(),
            CSV_HEADER.split(',').count(),
            "row fields must match header columns"
        );
        let spec = ChannelSpec {
            gain: Some(0.85),
            snr_db: Some(15.0),
            ..ChannelSpec::default()
        };
        assert_eq!(spec.describe(), "gain=0.85+awgn=15dB");
    }

    #[test]
    fn sweep_runs_every_snr() {
        let p = pipeline();
        let input = synthetic_speech(0.4, 17);
        let reports = p
            .sweep(&input, &seed(10), &ChannelSpec::default(), &[25.0, 15.0])
            .unwrap();
        assert_eq!(reports.len(), 2);
        assert_eq!(reports[0].0, 25.0);
        assert!(reports[1].1.rmse_pseudo_timbre >= reports[0].1.rmse_pseudo_timbre);
    }
}
