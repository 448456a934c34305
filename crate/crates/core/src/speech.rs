//! Narrowband speech analysis and resynthesis.
//!
//! Analysis turns 8 kHz speech into per-frame vocal parameters: total band
//! energy `ε`, pitch period `p` (samples/cycle) and a timbre direction `D`
//! on the nonnegative orthant of `S^8` built from nine band energies.
//! Resynthesis is a classical pulse/noise-excited LPC stand-in driven by the
//! same parameters.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};

use crate::sphere_maps::UnitVector;

/// Speech parameter bounds (energy, pitch period at 8 kHz).
pub const EPSILON_MIN: f64 = 10.0;
pub const EPSILON_MAX: f64 = 1e8;
pub const PITCH_MIN: f64 = 16.0;
pub const PITCH_MAX: f64 = 128.0;

/// Sample rate of the narrowband codec.
pub const SPEECH_RATE: f64 = 8000.0;
/// 20 ms frame hop.
pub const SPEECH_FRAME_LEN: usize = 160;
/// 40 ms analysis window (frame plus look-ahead).
pub const SPEECH_WINDOW_LEN: usize = 320;
/// FFT length for the power spectral density of one analysis window.
pub const PSD_FFT_LEN: usize = 512;
/// Number of mel-spaced triangular band filters.
pub const NUM_SPEECH_BANDS: usize = 9;
/// Pre-emphasis coefficient of `I(z) = 1 − 0.85 z^{-1}`.
pub const PREEMPHASIS: f64 = 0.85;
/// Normalized-autocorrelation threshold below which a frame is unvoiced.
pub const VOICING_THRESHOLD: f64 = 0.3;
/// LPC order of the synthesis stand-in.
pub const LPC_ORDER: usize = 12;
/// Floor applied to band energies before taking logarithms.
pub const LOG_ENERGY_FLOOR: f64 = 1e-10;

/// Per-frame vocal parameters of narrowband speech.
#[derive(Debug, Clone, PartialEq)]
pub struct VocalParams {
    /// Total band energy `ε = Σ E_i`, clamped to `[10, 10^8]`.
    pub energy: f64,
    /// Pitch period in samples per cycle at 8 kHz, in `[16, 128]`.
    pub pitch: f64,
    /// Timbre direction on `S^8`: `D_i = sqrt(E_i/ε)`, all coordinates ≥ 0.
    pub timbre: UnitVector,
}

/// One analyzed speech frame: parameters plus the voicing decision used by
/// the synthesis stand-in (the voicing flag is not transmitted).
#[derive(Debug, Clone, PartialEq)]
pub struct SpeechFrame {
    pub params: VocalParams,
    pub voiced: bool,
}

/// Cepstral features of one frame: orthonormal DCT-II of the log band
/// energies plus the centred pitch.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub cepstra: [f64; NUM_SPEECH_BANDS],
    /// `ρ = (p − 100)/50`.
    pub rho: f64,
}

/// Order-12 linear predictor with its reflection coefficients and the
/// residual gain, as produced by Levinson-Durbin.
#[derive(Debug, Clone, PartialEq)]
pub struct LpcState {
    /// Predictor taps `a_k` of `A(z) = 1 − Σ a_k z^{-k}`.
    pub coeffs: [f64; LPC_ORDER],
    pub reflections: [f64; LPC_ORDER],
    /// Square root of the prediction-residual energy.
    pub gain: f64,
}

/// First-order pre-emphasis filter `y[n] = x[n] − 0.85 x[n−1]` with state
/// carried across calls.
#[derive(Debug, Clone, Default)]
pub struct Preemphasis {
    prev: f64,
}

impl Preemphasis {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn process(&mut self, samples: &[f64]) -> Vec<f64> {
        samples
            .iter()
            .map(|&x| {
                let y = x - PREEMPHASIS * self.prev;
                self.prev = x;
                y
            })
            .collect()
    }
}

/// Inverse of [`Preemphasis`]: `y[n] = x[n] + 0.85 y[n−1]`.
#[derive(Debug, Clone, Default)]
pub struct Deemphasis {
    prev: f64,
}

impl Deemphasis {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn process(&mut self, samples: &[f64]) -> Vec<f64> {
        samples
            .iter()
            .map(|&x| {
                let y = x + PREEMPHASIS * self.prev;
                self.prev = y;
                y
            })
            .collect()
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Nine triangular filters equally spaced on the mel scale over 0–4000 Hz
/// with 50% overlap. The two side filters are doubled on their outer slopes
/// to compensate the halves that fall outside the covered band, so that the
/// filter sum integrates to exactly the full band and the band energies stay
/// additive.
pub struct MelFilterbank {
    /// 11 edge frequencies in Hz; filter `i` rises over
    /// `edges[i]..edges[i+1]` and falls over `edges[i+1]..edges[i+2]`.
    edges: [f64; NUM_SPEECH_BANDS + 2],
    /// Per filter: `(PSD bin, weight)` pairs over the 257 one-sided bins.
    weights: Vec<Vec<(usize, f64)>>,
}

impl MelFilterbank {
    pub fn new() -> Self {
        let mel_top = hz_to_mel(SPEECH_RATE / 2.0);
        let mut edges = [0.0f64; NUM_SPEECH_BANDS + 2];
        for (i, e) in edges.iter_mut().enumerate() {
            *e = mel_to_hz(mel_top * i as f64 / (NUM_SPEECH_BANDS + 1) as f64);
        }
        let bin_hz = SPEECH_RATE / PSD_FFT_LEN as f64;
        let mut weights = Vec::with_capacity(NUM_SPEECH_BANDS);
        for i in 0..NUM_SPEECH_BANDS {
            let (lo, mid, hi) = (edges[i], edges[i + 1], edges[i + 2]);
            let rise_amp = if i == 0 { 2.0 } else { 1.0 };
            let fall_amp = if i == NUM_SPEECH_BANDS - 1 { 2.0 } else { 1.0 };
            let mut w = Vec::new();
            for bin in 0..=PSD_FFT_LEN / 2 {
                let f = bin as f64 * bin_hz;
                let v = if f > lo && f < mid {
                    rise_amp * (f - lo) / (mid - lo)
                } else if f == mid {
                    1.0
                } else if f > mid && f < hi {
                    fall_amp * (hi - f) / (hi - mid)
                } else {
                    0.0
                };
                if v > 0.0 {
                    w.push((bin, v));
                }
            }
            weights.push(w);
        }
        Self { edges, weights }
    }

    pub fn edges(&self) -> &[f64; NUM_SPEECH_BANDS + 2] {
        &self.edges
    }

    /// Reference dump of the filter layout: one CSV row per filter with its
    /// rise, peak and fall frequencies and the slope amplitudes.
    pub fn edges_csv(&self) -> String {
        let mut out = String::from("filter,low_hz,center_hz,high_hz,rise_amplitude,fall_amplitude\n");
        for i in 0..NUM_SPEECH_BANDS {
            let rise = if i == 0 { 2.0 } else { 1.0 };
            let fall = if i == NUM_SPEECH_BANDS - 1 { 2.0 } else { 1.0 };
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{},{}\n",
                i,
                self.edges[i],
                self.edges[i + 1],
                self.edges[i + 2],
                rise,
                fall
            ));
        }
        out
    }

    /// Applies the filters to a one-sided PSD (257 bins).
    pub fn apply(&self, psd: &[f64]) -> [f64; NUM_SPEECH_BANDS] {
        let mut out = [0.0f64; NUM_SPEECH_BANDS];
        for (e, w) in out.iter_mut().zip(&self.weights) {
            *e = w.iter().map(|&(bin, wt)| wt * psd[bin]).sum();
        }
        out
    }
}

impl Default for MelFilterbank {
    fn default() -> Self {
        Self::new()
    }
}

/// One-sided PSD of a Hann-windowed 320-sample segment, normalized so that
/// the bin sum equals the windowed-segment energy (Parseval).
pub fn window_psd(window: &[f64], fft: &Arc<dyn Fft<f64>>) -> Vec<f64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); PSD_FFT_LEN];
    for (m, (&x, b)) in window.iter().zip(buf.iter_mut()).enumerate() {
        let w = 0.5 - 0.5 * (TAU * m as f64 / SPEECH_WINDOW_LEN as f64).cos();
        *b = Complex64::new(x * w, 0.0);
    }
    fft.process(&mut buf);
    let n = PSD_FFT_LEN as f64;
    let half = PSD_FFT_LEN / 2;
    (0..=half)
        .map(|k| {
            let scale = if k == 0 || k == half { 1.0 } else { 2.0 };
            scale * buf[k].norm_sqr() / n
        })
        .collect()
}

/// Band energies of one 40 ms analysis window.
pub fn band_energies(
    window: &[f64],
    bank: &MelFilterbank,
    fft: &Arc<dyn Fft<f64>>,
) -> [f64; NUM_SPEECH_BANDS] {
    bank.apply(&window_psd(window, fft))
}

/// Open-loop pitch tracker over normalized autocorrelation with an
/// octave-error penalty (earliest near-maximal lag wins) and a continuity
/// bias toward the previous voiced estimate.
#[derive(Debug, Clone)]
pub struct PitchTracker {
    prev: f64,
    prev_voiced: bool,
}

impl PitchTracker {
    pub fn new() -> Self {
        Self {
            prev: PITCH_MAX,
            prev_voiced: false,
        }
    }

    /// Estimates the pitch period of `window` (≥ 2·p_max samples).
    /// Returns `(period, voiced)`; unvoiced frames hold the previous period.
    pub fn estimate(&mut self, window: &[f64]) -> (f64, bool) {
        let n = window.len();
        let lag_max = (PITCH_MAX as usize).min(n / 2);
        let lag_min = PITCH_MIN as usize;
        let mut corr = vec![0.0f64; lag_max + 1];
        for tau in lag_min..=lag_max {
            let overlap = n - tau;
            let mut num = 0.0;
            let mut e0 = 0.0;
            let mut e1 = 0.0;
            for m in 0..overlap {
                num += window[m] * window[m + tau];
                e0 += window[m] * window[m];
                e1 += window[m + tau] * window[m + tau];
            }
            let denom = (e0 * e1).sqrt();
            if denom > 0.0 {
                corr[tau] = num / denom;
            }
        }
        let r_max = corr[lag_min..=lag_max]
            .iter()
            .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        if !(r_max >= VOICING_THRESHOLD) {
            self.prev_voiced = false;
            return (self.prev, false);
        }
        // candidate lags that explain nearly the whole peak; the earliest one
        // is the fundamental period, later ones its multiples
        let near: Vec<usize> = (lag_min..=lag_max)
            .filter(|&t| corr[t] >= 0.85 * r_max)
            .collect();
        let mut lag = *near.first().unwrap();
        if self.prev_voiced {
            if let Some(&cont) = near
                .iter()
                .find(|&&t| (t as f64 - self.prev).abs() <= 0.2 * self.prev)
            {
                lag = cont;
            }
        }
        // keep only the local peak around the chosen lag
        while lag > lag_min && corr[lag - 1] > corr[lag] {
            lag -= 1;
        }
        while lag < lag_max && corr[lag + 1] > corr[lag] {
            lag += 1;
        }
        let mut p = lag as f64;
        if lag > lag_min && lag < lag_max {
            let (s0, s1, s2) = (corr[lag - 1], corr[lag], corr[lag + 1]);
            let denom = s0 - 2.0 * s1 + s2;
            if denom.abs() > 1e-12 {
                let delta = 0.5 * (s0 - s2) / denom;
                if delta.abs() <= 1.0 {
                    p += delta;
                }
            }
        }
        p = p.clamp(PITCH_MIN, PITCH_MAX);
        self.prev = p;
        self.prev_voiced = true;
        (p, true)
    }
}

impl Default for PitchTracker {
    fn default() -> Self {
        Self::new()
    }
}

/// Streaming speech analyzer: pre-emphasis, band energies, pitch.
pub struct SpeechAnalyzer {
    bank: MelFilterbank,
    preemph: Preemphasis,
    pitch: PitchTracker,
    fft: Arc<dyn Fft<f64>>,
}

impl SpeechAnalyzer {
    pub fn new() -> Self {
        Self {
            bank: MelFilterbank::new(),
            preemph: Preemphasis::new(),
            pitch: PitchTracker::new(),
            fft: FftPlanner::new().plan_fft_forward(PSD_FFT_LEN),
        }
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.bank
    }

    /// Analyzes a whole 8 kHz signal into 20 ms frames; the tail is
    /// zero-padded to fill the final look-ahead window.
    pub fn analyze(&mut self, samples: &[f64]) -> Vec<SpeechFrame> {
        let emphasized = self.preemph.process(samples);
        let frames = samples.len().div_ceil(SPEECH_FRAME_LEN);
        let mut out = Vec::with_capacity(frames);
        for f in 0..frames {
            let start = f * SPEECH_FRAME_LEN;
            let mut window = [0.0f64; SPEECH_WINDOW_LEN];
            for (i, w) in window.iter_mut().enumerate() {
                if let Some(&v) = emphasized.get(start + i) {
                    *w = v;
                }
            }
            out.push(self.encode_window(&window));
        }
        out
    }

    /// Encodes one 40 ms pre-emphasized window into vocal parameters.
    pub fn encode_window(&mut self, window: &[f64; SPEECH_WINDOW_LEN]) -> SpeechFrame {
        let energies = band_energies(window, &self.bank, &self.fft);
        let total: f64 = energies.iter().sum();
        let timbre = if total > 0.0 {
            UnitVector::normalized(energies.iter().map(|e| e.sqrt()).collect())
                .expect("nonzero band energies give a valid direction")
        } else {
            // silence carries no direction; use the flat one
            UnitVector::normalized(vec![1.0; NUM_SPEECH_BANDS]).unwrap()
        };
        let (pitch, voiced) = self.pitch.estimate(window);
        SpeechFrame {
            params: VocalParams {
                energy: total.clamp(EPSILON_MIN, EPSILON_MAX),
                pitch: pitch.clamp(PITCH_MIN, PITCH_MAX),
                timbre,
            },
            voiced,
        }
    }
}

impl Default for SpeechAnalyzer {
    fn default() -> Self {
        Self::new()
    }
}

/// Orthonormal DCT-II of length 9.
fn dct9(x: &[f64; NUM_SPEECH_BANDS]) -> [f64; NUM_SPEECH_BANDS] {
    let n = NUM_SPEECH_BANDS as f64;
    let mut out = [0.0f64; NUM_SPEECH_BANDS];
    for (k, o) in out.iter_mut().enumerate() {
        let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        *o = scale
            * x.iter()
                .enumerate()
                .map(|(i, &v)| v * (PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * n)).cos())
                .sum::<f64>();
    }
    out
}

/// Inverse of [`dct9`] (orthonormal DCT-III).
fn idct9(c: &[f64; NUM_SPEECH_BANDS]) -> [f64; NUM_SPEECH_BANDS] {
    let n = NUM_SPEECH_BANDS as f64;
    let mut out = [0.0f64; NUM_SPEECH_BANDS];
    for (i, o) in out.iter_mut().enumerate() {
        *o = c
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
                scale * v * (PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * n)).cos()
            })
            .sum();
    }
    out
}

/// Band energies implied by vocal parameters: `E_i = ε·D_i²`.
pub fn band_energies_from_params(params: &VocalParams) -> [f64; NUM_SPEECH_BANDS] {
    let mut out = [0.0f64; NUM_SPEECH_BANDS];
    for (e, d) in out.iter_mut().zip(params.timbre.coords()) {
        *e = params.energy * d * d;
    }
    out
}

/// Cepstral features: orthonormal DCT-II of the floored log band energies
/// plus the centred pitch `ρ = (p − 100)/50`.
pub fn features_from_params(params: &VocalParams) -> FeatureVector {
    let energies = band_energies_from_params(params);
    let mut logs = [0.0f64; NUM_SPEECH_BANDS];
    for (l, e) in logs.iter_mut().zip(energies) {
        *l = e.max(LOG_ENERGY_FLOOR).log10();
    }
    FeatureVector {
        cepstra: dct9(&logs),
        rho: (params.pitch - 100.0) / 50.0,
    }
}

/// Log band energies recovered from cepstra (inverse DCT).
pub fn log_energies_from_cepstra(cepstra: &[f64; NUM_SPEECH_BANDS]) -> [f64; NUM_SPEECH_BANDS] {
    idct9(cepstra)
}

/// Order-12 predictor fitted to the PSD implied by the nine band energies:
/// the energies are interpolated into a linear-frequency PSD, converted to an
/// autocorrelation by inverse FFT, and passed through Levinson-Durbin.
pub fn lpc_from_bands(energies: &[f64; NUM_SPEECH_BANDS]) -> LpcState {
    let bank = MelFilterbank::new();
    let centers: Vec<f64> = (0..NUM_SPEECH_BANDS).map(|i| bank.edges[i + 1]).collect();
    if energies.iter().all(|&e| e <= LOG_ENERGY_FLOOR) {
        return LpcState {
            coeffs: [0.0; LPC_ORDER],
            reflections: [0.0; LPC_ORDER],
            gain: EPSILON_MIN.sqrt(),
        };
    }
    // piecewise-linear PSD through the filter centers, held constant at the
    // band edges
    let half = PSD_FFT_LEN / 2;
    let bin_hz = SPEECH_RATE / PSD_FFT_LEN as f64;
    let mut psd = vec![0.0f64; half + 1];
    for (k, p) in psd.iter_mut().enumerate() {
        let f = k as f64 * bin_hz;
        *p = if f <= centers[0] {
            energies[0]
        } else if f >= centers[NUM_SPEECH_BANDS - 1] {
            energies[NUM_SPEECH_BANDS - 1]
        } else {
            let j = centers.iter().rposition(|&c| c <= f).unwrap();
            let t = (f - centers[j]) / (centers[j + 1] - centers[j]);
            energies[j] * (1.0 - t) + energies[j + 1] * t
        };
    }
    // autocorrelation = inverse FFT of the symmetric PSD
    let mut buf = vec![Complex64::new(0.0, 0.0); PSD_FFT_LEN];
    for (k, &p) in psd.iter().enumerate() {
        buf[k] = Complex64::new(p, 0.0);
        if k > 0 && k < half {
            buf[PSD_FFT_LEN - k] = Complex64::new(p, 0.0);
        }
    }
    FftPlanner::new()
        .plan_fft_inverse(PSD_FFT_LEN)
        .process(&mut buf);
    let r: Vec<f64> = buf[..=LPC_ORDER]
        .iter()
        .map(|c| c.re / PSD_FFT_LEN as f64)
        .collect();
    levinson(&r)
}

/// Levinson-Durbin recursion on `r[0..=order]`.
fn levinson(r: &[f64]) -> LpcState {
    let order = r.len() - 1;
    let mut a = vec![0.0f64; order + 1];
    let mut reflections = [0.0f64; LPC_ORDER];
    let mut err = r[0];
    if err <= 0.0 {
        return LpcState {
            coeffs: [0.0; LPC_ORDER],
            reflections,
            gain: EPSILON_MIN.sqrt(),
        };
    }
    for m in 1..=order {
        let mut acc = r[m];
        for k in 1..m {
            acc -= a[k] * r[m - k];
        }
        let kf = acc / err;
        reflections[m - 1] = kf;
        let prev = a.clone();
        a[m] = kf;
        for k in 1..m {
            a[k] = prev[k] - kf * prev[m - k];
        }
        err *= 1.0 - kf * kf;
        if err <= 0.0 {
            err = f64::MIN_POSITIVE;
        }
    }
    let mut coeffs = [0.0f64; LPC_ORDER];
    coeffs.copy_from_slice(&a[1..=order]);
    LpcState {
        coeffs,
        reflections,
        gain: err.max(0.0).sqrt(),
    }
}

/// Pulse/noise-excited LPC synthesizer with de-emphasis; a non-neural
/// stand-in whose contract is parameter fidelity, not perceptual quality.
pub struct SpeechSynthesizer {
    deemph: Deemphasis,
    memory: [f64; LPC_ORDER],
    phase: f64,
    rng: ChaCha8Rng,
}

impl SpeechSynthesizer {
    pub fn new() -> Self {
        Self {
            deemph: Deemphasis::new(),
            memory: [0.0; LPC_ORDER],
            phase: 0.0,
            // fixed seed: resynthesis is deterministic for a given stream
            rng: ChaCha8Rng::seed_from_u64(0x5eec_4e55),
        }
    }

    pub fn synthesize(&mut self, frames: &[SpeechFrame]) -> Vec<f64> {
        let mut out = Vec::with_capacity(frames.len() * SPEECH_FRAME_LEN);
        for frame in frames {
            let energies = band_energies_from_params(&frame.params);
            let lpc = lpc_from_bands(&energies);
            let mut synth = [0.0f64; SPEECH_FRAME_LEN];
            for s in synth.iter_mut() {
                let excitation = if frame.voiced {
                    self.phase += 1.0;
                    if self.phase >= frame.params.pitch {
                        self.phase -= frame.params.pitch;
                        frame.params.pitch.sqrt()
                    } else {
                        0.0
                    }
                } else {
                    self.rng.gen_range(-1.0..1.0)
                };
                let mut y = excitation;
                for (k, m) in self.memory.iter().enumerate() {
                    y += lpc.coeffs[k] * m;
                }
                self.memory.rotate_right(1);
                self.memory[0] = y;
                *s = y;
            }
            // gain-match the frame to the transmitted energy
            let actual: f64 = synth.iter().map(|v| v * v).sum();
            let scale = if actual > 0.0 {
                (frame.params.energy / actual).sqrt()
            } else {
                0.0
            };
            let scaled: Vec<f64> = synth.iter().map(|&v| v * scale).collect();
            out.extend(self.deemph.process(&scaled));
        }
        out
    }
}

impl Default for SpeechSynthesizer {
    fn default() -> Self {
        Self::new()
    }
}
