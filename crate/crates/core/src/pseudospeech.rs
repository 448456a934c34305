//! Pseudo-speech modem: harmonic waveform synthesis and analysis.
//!
//! Each 25 ms frame (400 samples at 16 kHz) carries one enciphered parameter
//! triple. The middle 240 samples are the payload; the first and last 5 ms
//! are trapezoid-ramped guard periods overlapped with neighbouring frames.
//! The payload is a harmonic waveform at the pseudo pitch ω0 whose complex
//! amplitudes are chosen — via the Moore-Penrose pseudo-inverse of the
//! windowed harmonic DFT matrix — so that sixteen 400 Hz spectral windows
//! between 300 and 6700 Hz reproduce the scrambled timbre vector, and whose
//! total payload energy equals the pseudo energy exactly. Analysis inverts
//! the construction: payload energy by summation, timbre by windowed DFT,
//! pitch by a maximum-likelihood grid search over the pseudo pitch range.

use crate::cipher::PseudoParams;
use crate::sphere_maps::{torus_project, FoliationProfile, UnitVector};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};
use thiserror::Error;

const TAU: f64 = 2.0 * PI;

pub const SAMPLE_RATE: f64 = 16000.0;
/// Frame length: 25 ms at 16 kHz.
pub const FRAME_LEN: usize = 400;
/// Payload region: indices 80..320 (240 samples).
pub const PAYLOAD_START: usize = 80;
pub const PAYLOAD_LEN: usize = 240;
/// Frame hop: frames overlap by the 80-sample guard ramps.
pub const HOP: usize = 320;
pub const NUM_BANDS: usize = 16;
pub const BAND_LOW_HZ: f64 = 300.0;
pub const BAND_HIGH_HZ: f64 = 6700.0;
pub const BAND_WIDTH_HZ: f64 = 400.0;
/// Peak headroom before int16 conversion.
pub const PCM_HEADROOM: f64 = 0.89;
/// Zero-padded FFT length for pitch estimation.
const PITCH_FFT_LEN: usize = 1 << 16;
/// Default number of pitch grid candidates.
pub const DEFAULT_PITCH_CANDIDATES: usize = 1 << 14;
/// Number of quantized pitch slots with a cached pseudo-inverse.
const PINV_GRID: usize = 1 << 12;

#[derive(Debug, Error)]
pub enum PseudoError {
    #[error("frame has {0} samples, expected {FRAME_LEN}")]
    BadFrameLength(usize),
    #[error("payload energy {0} below the degenerate-frame threshold")]
    DegenerateFrame(f64),
    #[error("windowed harmonic system is rank-deficient at pitch {0}")]
    IllConditioned(f64),
}

/// Cached minimal-norm solver for one quantized pitch slot.
struct PinvEntry {
    /// Fundamental of the quantized grid slot, radians per sample; only the
    /// tests need it back, synthesis always re-derives the exact value.
    #[cfg(test)]
    omega0: f64,
    /// First synthesized harmonic (lowest k with `k·f0` inside the bands).
    k_min: usize,
    /// Last synthesized harmonic (largest k with `k·f0` below the ceiling).
    k_max: usize,
    /// Moore-Penrose pseudo-inverse of the real windowed-harmonic system,
    /// 2K rows (Re/Im of each amplitude) over the 32 stacked Re/Im
    /// components of the band targets.
    pinv: Vec<[f64; 2 * NUM_BANDS]>,
}

/// Spectral windows, roots of unity and shared FFT plans of the modem.
pub struct WindowBank {
    /// DFT bin indices (240-point) of each 400 Hz band.
    band_bins: Vec<Vec<usize>>,
    /// `W16[k] = e^{j2π(k+1)/16}` for band index k = 0..15.
    w16: [Complex64; NUM_BANDS],
    xi: FoliationProfile,
    pitch_min: f64,
    pitch_max: f64,
    fft_payload: Arc<dyn Fft<f64>>,
    fft_pitch: Arc<dyn Fft<f64>>,
    pinv_cache: Mutex<HashMap<usize, Arc<PinvEntry>>>,
}

/// Band index (0-based) covering `freq` Hz, half-open band edges.
pub fn window_index(freq: f64) -> Option<usize> {
    if !(BAND_LOW_HZ..BAND_HIGH_HZ).contains(&freq) {
        return None;
    }
    Some(((freq - BAND_LOW_HZ) / BAND_WIDTH_HZ) as usize)
}

/// Number of harmonics strictly below the band ceiling.
pub fn harmonic_count(f0: f64) -> usize {
    ((BAND_HIGH_HZ - 1e-9) / f0) as usize
}

/// Lowest harmonic index whose frequency reaches the band floor. Harmonics
/// below it are excluded from synthesis so that the emitted waveform keeps
/// its energy inside the 300–6700 Hz bands.
pub fn harmonic_floor(f0: f64) -> usize {
    ((BAND_LOW_HZ / f0).ceil() as usize).max(1)
}

/// Trapezoid window: linear ramps over the 80 guard samples, unit payload.
pub fn trapezoid(n: usize) -> f64 {
    if n < PAYLOAD_START {
        n as f64 / PAYLOAD_START as f64
    } else if n < PAYLOAD_START + PAYLOAD_LEN {
        1.0
    } else {
        (FRAME_LEN - n) as f64 / PAYLOAD_START as f64
    }
}

/// Scales applied during frame synthesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthInfo {
    /// Energy scale actually applied to the harmonic waveform.
    pub eta: f64,
    /// Extra attenuation (≤ 1) applied to honour the PCM peak headroom;
    /// 1.0 when the frame fit without scaling.
    pub headroom_scale: f64,
}

/// Diagnostics from frame analysis, including the raw windowed spectrum the
/// timbre estimate is normalized from.
#[derive(Debug, Clone)]
pub struct FrameDiagnostics {
    /// `(HŶ) ⊙ W̄16`: windowed payload spectrum rotated by the conjugate
    /// roots of unity; `D̃ ⊙ W16 ≈ (2/η)·HŶ ⊙ ...` recovers the timbre.
    pub windowed_spectrum: [Complex64; NUM_BANDS],
    pub payload_energy: f64,
}

impl WindowBank {
    pub fn new() -> Self {
        let bin_hz = SAMPLE_RATE / PAYLOAD_LEN as f64;
        let mut band_bins = vec![Vec::new(); NUM_BANDS];
        for bin in 0..PAYLOAD_LEN / 2 {
            if let Some(w) = window_index(bin as f64 * bin_hz) {
                band_bins[w].push(bin);
            }
        }
        let mut w16 = [Complex64::new(0.0, 0.0); NUM_BANDS];
        for (k, w) in w16.iter_mut().enumerate() {
            *w = Complex64::from_polar(1.0, TAU * (k + 1) as f64 / NUM_BANDS as f64);
        }
        let mut planner = FftPlanner::new();
        Self {
            band_bins,
            w16,
            xi: FoliationProfile::uniform(8),
            pitch_min: 80.0,
            pitch_max: 160.0,
            fft_payload: planner.plan_fft_forward(PAYLOAD_LEN),
            fft_pitch: planner.plan_fft_forward(PITCH_FFT_LEN),
            pinv_cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn band_bins(&self) -> &[Vec<usize>] {
        &self.band_bins
    }

    pub fn w16(&self) -> &[Complex64; NUM_BANDS] {
        &self.w16
    }

    /// `H·B_{ω0}` as 16 rows over harmonics k_min..=k_max: row w, column
    /// k−k_min is the sum over the band's DFT bins of the Dirichlet kernel
    /// at `kω0`.
    fn windowed_harmonic_matrix(
        &self,
        omega0: f64,
        k_min: usize,
        k_max: usize,
    ) -> Vec<[Complex64; NUM_BANDS]> {
        // stored transposed: K rows of 16 band values
        let n = PAYLOAD_LEN as f64;
        let mut cols = Vec::with_capacity(k_max + 1 - k_min);
        for k in k_min..=k_max {
            let mut col = [Complex64::new(0.0, 0.0); NUM_BANDS];
            for (w, bins) in self.band_bins.iter().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for &bin in bins {
                    let x = k as f64 * omega0 - TAU * bin as f64 / n;
                    // Σ_{m=0}^{N-1} e^{jxm}
                    let half = x / 2.0;
                    let mag = if half.sin().abs() < 1e-12 {
                        n
                    } else {
                        (n * half).sin() / half.sin()
                    };
                    acc += Complex64::from_polar(mag, half * (n - 1.0));
                }
                col[w] = acc;
            }
            cols.push(col);
        }
        cols
    }

    /// Pseudo-inverse for the quantized pitch slot nearest to `p_tilde`.
    fn pinv_for(&self, p_tilde: f64) -> Result<Arc<PinvEntry>, PseudoError> {
        let t = (p_tilde.clamp(self.pitch_min, self.pitch_max) - self.pitch_min)
            / (self.pitch_max - self.pitch_min);
        let slot = (t * (PINV_GRID - 1) as f64).round() as usize;
        if let Some(entry) = self.pinv_cache.lock().unwrap().get(&slot) {
            return Ok(entry.clone());
        }
        let p_grid = self.pitch_min
            + slot as f64 * (self.pitch_max - self.pitch_min) / (PINV_GRID - 1) as f64;
        let omega0 = TAU / p_grid;
        let f0 = SAMPLE_RATE / p_grid;
        let k_min = harmonic_floor(f0);
        let k_max = harmonic_count(f0);
        // a real harmonic with complex amplitude A_k contributes through both
        // its positive-frequency Dirichlet kernel and the mirrored
        // negative-frequency one; solving the real-valued system with both
        // terms makes the windowed-spectrum fit exact, not just approximate
        let bp = self.windowed_harmonic_matrix(omega0, k_min, k_max);
        let bm = self.windowed_harmonic_matrix(-omega0, k_min, k_max);
        let nk = k_max + 1 - k_min;
        const RDIM: usize = 2 * NUM_BANDS;
        // real constraint matrix stored column-wise: unknowns are
        // (Re A_k, Im A_k) interleaved, constraints are (Re t, Im t) stacked
        let mut cols: Vec<[f64; RDIM]> = Vec::with_capacity(2 * nk);
        for k in 0..nk {
            let mut cu = [0.0f64; RDIM];
            let mut cv = [0.0f64; RDIM];
            for w in 0..NUM_BANDS {
                let u = bp[k][w] + bm[k][w];
                let v = Complex64::i() * (bp[k][w] - bm[k][w]);
                cu[w] = u.re;
                cu[NUM_BANDS + w] = u.im;
                cv[w] = v.re;
                cv[NUM_BANDS + w] = v.im;
            }
            cols.push(cu);
            cols.push(cv);
        }
        // G = A·A^T (32×32), then pinv rows A^T·G^{-1} via Cholesky solves
        let mut g = vec![0.0f64; RDIM * RDIM];
        for col in &cols {
            for i in 0..RDIM {
                for j in 0..RDIM {
                    g[i * RDIM + j] += col[i] * col[j];
                }
            }
        }
        let mut pinv = Vec::with_capacity(2 * nk);
        for col in &cols {
            let mut factor = g.clone();
            let row = cholesky_solve(&mut factor, RDIM, col)
                .ok_or(PseudoError::IllConditioned(p_grid))?;
            let mut out = [0.0f64; RDIM];
            out.copy_from_slice(&row);
            pinv.push(out);
        }
        let entry = Arc::new(PinvEntry {
            #[cfg(test)]
            omega0,
            k_min,
            k_max,
            pinv,
        });
        self.pinv_cache
            .lock()
            .unwrap()
            .insert(slot, entry.clone());
        Ok(entry)
    }

    /// Least-squares harmonic amplitudes reproducing `D̃ ⊙ W16` through the
    /// spectral windows at the given pseudo pitch.
    pub fn solve_amplitudes(
        &self,
        dtilde: &UnitVector,
        p_tilde: f64,
    ) -> Result<Vec<Complex64>, PseudoError> {
        let entry = self.pinv_for(p_tilde)?;
        Ok(self.solve_with_entry(dtilde, &entry))
    }

    fn solve_with_entry(&self, dtilde: &UnitVector, entry: &PinvEntry) -> Vec<Complex64> {
        let t = self.timbre_target(dtilde);
        let mut t_r = [0.0f64; 2 * NUM_BANDS];
        for (w, tv) in t.iter().enumerate() {
            t_r[w] = tv.re;
            t_r[NUM_BANDS + w] = tv.im;
        }
        let dot = |row: &[f64; 2 * NUM_BANDS]| -> f64 {
            row.iter().zip(&t_r).map(|(a, b)| a * b).sum()
        };
        entry
            .pinv
            .chunks(2)
            .map(|rows| Complex64::new(dot(&rows[0]), dot(&rows[1])))
            .collect()
    }

    /// The right-hand side `D̃ ⊙ W16`: each real coordinate of `D̃ ∈ S^15`
    /// rides on its band's root-of-unity phase.
    pub fn timbre_target(&self, dtilde: &UnitVector) -> [Complex64; NUM_BANDS] {
        let c = dtilde.coords();
        let mut t = [Complex64::new(0.0, 0.0); NUM_BANDS];
        for (w, tv) in t.iter_mut().enumerate() {
            *tv = c[w] * self.w16[w];
        }
        t
    }

    /// Synthesizes one trapezoid-windowed 400-sample frame.
    pub fn synth_frame(&self, pp: &PseudoParams) -> Result<(Vec<f64>, SynthInfo), PseudoError> {
        let entry = self.pinv_for(pp.pitch)?;
        let amps = self.solve_with_entry(&pp.timbre, &entry);
        // exact fundamental for the waveform; the cached pseudo-inverse is
        // only used for amplitude solving
        let omega0 = TAU / pp.pitch;
        // phasors e^{jkω0(n-80)} evaluated incrementally over n
        let start = -(PAYLOAD_START as f64);
        let mut phasors: Vec<Complex64> = (entry.k_min..=entry.k_max)
            .map(|k| Complex64::from_polar(1.0, k as f64 * omega0 * start))
            .collect();
        let steps: Vec<Complex64> = (entry.k_min..=entry.k_max)
            .map(|k| Complex64::from_polar(1.0, k as f64 * omega0))
            .collect();
        let mut raw = vec![0.0f64; FRAME_LEN];
        for sample in raw.iter_mut() {
            let mut acc = 0.0;
            for (ph, a) in phasors.iter_mut().zip(&amps) {
                acc += (a * *ph).re;
            }
            // advance every harmonic by one sample; phasor drift is
            // negligible over 400 steps
            for (ph, st) in phasors.iter_mut().zip(&steps) {
                *ph *= *st;
            }
            *sample = acc;
        }
        let payload_energy: f64 = raw[PAYLOAD_START..PAYLOAD_START + PAYLOAD_LEN]
            .iter()
            .map(|v| v * v)
            .sum();
        if payload_energy <= 0.0 {
            return Err(PseudoError::DegenerateFrame(payload_energy));
        }
        let mut eta = (pp.energy / payload_energy).sqrt();
        // keep peaks inside the int16 headroom; scale only when necessary,
        // trading wire energy for clipping protection
        let peak = raw.iter().fold(0.0f64, |m, &v| m.max(v.abs())) * eta;
        let limit = PCM_HEADROOM * i16::MAX as f64;
        let headroom_scale = if peak > limit { limit / peak } else { 1.0 };
        eta *= headroom_scale;
        let samples: Vec<f64> = raw
            .iter()
            .enumerate()
            .map(|(n, &v)| eta * v * trapezoid(n))
            .collect();
        Ok((samples, SynthInfo { eta, headroom_scale }))
    }

    /// Payload DFT (240-point, no normalization).
    fn payload_dft(&self, payload: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = payload.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft_payload.process(&mut buf);
        buf
    }

    /// `HŶ ⊙ W̄16` for a payload spectrum.
    fn windowed_spectrum(&self, spectrum: &[Complex64]) -> [Complex64; NUM_BANDS] {
        let mut out = [Complex64::new(0.0, 0.0); NUM_BANDS];
        for (w, bins) in self.band_bins.iter().enumerate() {
            let sum: Complex64 = bins.iter().map(|&b| spectrum[b]).sum();
            out[w] = sum * self.w16[w].conj();
        }
        out
    }

    /// Analyzes a frame-synchronized 400-sample frame into pseudo parameters
    /// using the default pitch grid resolution.
    pub fn analyze_frame(
        &self,
        frame: &[f64],
    ) -> Result<(PseudoParams, FrameDiagnostics), PseudoError> {
        self.analyze_frame_with(frame, DEFAULT_PITCH_CANDIDATES)
    }

    /// Analyzes a frame-synchronized 400-sample frame into pseudo parameters
    /// with an explicit pitch grid resolution.
    pub fn analyze_frame_with(
        &self,
        frame: &[f64],
        pitch_candidates: usize,
    ) -> Result<(PseudoParams, FrameDiagnostics), PseudoError> {
        if frame.len() != FRAME_LEN {
            return Err(PseudoError::BadFrameLength(frame.len()));
        }
        let payload = &frame[PAYLOAD_START..PAYLOAD_START + PAYLOAD_LEN];
        let energy: f64 = payload.iter().map(|v| v * v).sum();
        if energy < 1e-3 * 1e9 {
            return Err(PseudoError::DegenerateFrame(energy));
        }
        let pitch = self
            .estimate_pitch(payload, pitch_candidates)
            .clamp(self.pitch_min, self.pitch_max);
        let spectrum = self.payload_dft(payload);
        let windowed = self.windowed_spectrum(&spectrum);
        // timbre direction: real parts of the conjugate-rotated windowed
        // spectrum, normalized and projected back onto the ξ = 1/√8 torus
        let coords: Vec<f64> = windowed.iter().map(|c| c.re).collect();
        let timbre = UnitVector::normalized(coords)
            .and_then(|u| torus_project(&u, &self.xi))
            .map_err(|_| PseudoError::DegenerateFrame(energy))?;
        Ok((
            PseudoParams {
                energy,
                pitch,
                timbre,
            },
            FrameDiagnostics {
                windowed_spectrum: windowed,
                payload_energy: energy,
            },
        ))
    }

    /// Energy of the least-squares harmonic fit at period `p`, using the
    /// fixed harmonic range `k_min..=k_max`: the payload is projected onto
    /// the span of `{cos(kω0 m), sin(kω0 m)}` with the Gram matrix evaluated
    /// in closed form from Dirichlet sums. Unlike the FFT-bin score this is
    /// exact under basis non-orthogonality, so on a clean harmonic frame it
    /// peaks at the true fundamental.
    fn ls_fit_energy(&self, payload: &[f64], p: f64, k_min: usize, k_max: usize) -> f64 {
        let omega0 = TAU / p;
        let n = payload.len();
        let nf = n as f64;
        let nk = k_max + 1 - k_min;
        let dim = 2 * nk;
        // Σ_{m=0}^{N-1} e^{jxm} in closed form
        let dsum = |x: f64| -> Complex64 {
            let half = x / 2.0;
            if half.sin().abs() < 1e-12 {
                Complex64::new(nf, 0.0)
            } else {
                Complex64::from_polar((nf * half).sin() / half.sin(), half * (nf - 1.0))
            }
        };
        // Gram matrix over the interleaved [cos k, sin k] basis
        let mut g = vec![0.0f64; dim * dim];
        for a in 0..nk {
            for b in a..nk {
                let delta = (a as f64 - b as f64) * omega0;
                let sigma = (a + b + 2 * k_min) as f64 * omega0;
                let dd = dsum(delta);
                let ds = dsum(sigma);
                let cc = 0.5 * (dd.re + ds.re);
                let ss = 0.5 * (dd.re - ds.re);
                let cs = 0.5 * (ds.im - dd.im); // ⟨cos k_a, sin k_b⟩
                let sc = 0.5 * (ds.im + dd.im); // ⟨sin k_a, cos k_b⟩
                g[2 * a * dim + 2 * b] = cc;
                g[2 * a * dim + 2 * b + 1] = cs;
                g[(2 * a + 1) * dim + 2 * b] = sc;
                g[(2 * a + 1) * dim + 2 * b + 1] = ss;
                g[2 * b * dim + 2 * a] = cc;
                g[(2 * b + 1) * dim + 2 * a] = cs;
                g[2 * b * dim + 2 * a + 1] = sc;
                g[(2 * b + 1) * dim + 2 * a + 1] = ss;
            }
        }
        // right-hand side: payload correlated against every basis column
        let mut rhs = vec![0.0f64; dim];
        let mut phasors = vec![Complex64::new(1.0, 0.0); nk];
        let steps: Vec<Complex64> = (k_min..=k_max)
            .map(|k| Complex64::from_polar(1.0, k as f64 * omega0))
            .collect();
        for &y in payload {
            for (a, (ph, st)) in phasors.iter_mut().zip(&steps).enumerate() {
                rhs[2 * a] += y * ph.re;
                rhs[2 * a + 1] += y * ph.im;
                *ph *= *st;
            }
        }
        // Cholesky solve G x = rhs, with a small ridge retry if the basis is
        // numerically degenerate at this candidate
        for ridge in [0.0, 1e-9 * nf] {
            let mut l = g.clone();
            if ridge > 0.0 {
                for i in 0..dim {
                    l[i * dim + i] += ridge;
                }
            }
            if let Some(x) = cholesky_solve(&mut l, dim, &rhs) {
                return x.iter().zip(&rhs).map(|(a, b)| a * b).sum();
            }
        }
        0.0
    }

    /// Maximum-likelihood pitch grid search over the pseudo pitch range.
    ///
    /// The period is first localized to an integer lag by normalized
    /// autocorrelation. Two coarse candidates are kept: the overall maximum
    /// and the earliest lag whose correlation comes within 90% of it (the
    /// latter protects against the doubled-period tie near the lower
    /// endpoint, the former against broad correlation plateaus that drag the
    /// earliest near-maximal lag several samples early). Each candidate is
    /// refined by a fine grid search within ±2 samples maximizing the summed
    /// squared magnitude of the zero-padded payload FFT at the in-band
    /// harmonic frequencies — restricting the fine search to the localized
    /// neighbourhood keeps this score free of the long-period bias it has
    /// over the full range — and then polished by maximizing the exact
    /// least-squares harmonic fit energy, which removes the residual
    /// leakage-interference bias of the FFT-bin score (a few hundredths of a
    /// sample) so that the estimate lands within the cipher's pitch
    /// quantization step. The winner is the candidate explaining the most
    /// payload energy, with a shortest-period preference among near-ties so
    /// that a doubled period (whose harmonic span strictly contains the true
    /// one) can never displace the fundamental.
    pub fn estimate_pitch(&self, payload: &[f64], candidates: usize) -> f64 {
        // --- coarse stage: normalized autocorrelation over integer lags ---
        let n = payload.len();
        let lag_min = self.pitch_min as usize;
        let lag_max = (self.pitch_max as usize).min(n - 1);
        let mut corr = vec![0.0f64; lag_max + 1];
        for (tau, c) in corr.iter_mut().enumerate().skip(lag_min) {
            let overlap = n - tau;
            let mut num = 0.0;
            let mut e0 = 0.0;
            let mut e1 = 0.0;
            for m in 0..overlap {
                num += payload[m] * payload[m + tau];
                e0 += payload[m] * payload[m];
                e1 += payload[m + tau] * payload[m + tau];
            }
            let denom = (e0 * e1).sqrt();
            if denom > 0.0 {
                *c = num / denom;
            }
        }
        let r_max = corr[lag_min..=lag_max]
            .iter()
            .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut earliest = lag_min;
        for tau in lag_min..=lag_max {
            if corr[tau] >= 0.9 * r_max {
                earliest = tau;
                break;
            }
        }
        let argmax = (lag_min..=lag_max)
            .max_by(|&a, &b| corr[a].total_cmp(&corr[b]))
            .unwrap_or(lag_min);
        let mut lags = vec![earliest];
        if argmax != earliest {
            lags.push(argmax);
        }

        // --- fine stage: harmonic energy on the global candidate grid ---
        let mut buf = vec![Complex64::new(0.0, 0.0); PITCH_FFT_LEN];
        for (b, &v) in buf.iter_mut().zip(payload) {
            *b = Complex64::new(v, 0.0);
        }
        self.fft_pitch.process(&mut buf);
        let half = PITCH_FFT_LEN / 2;
        let mag2: Vec<f64> = buf[..half].iter().map(|c| c.norm_sqr()).collect();
        let bin_hz = SAMPLE_RATE / PITCH_FFT_LEN as f64;

        let score_at = |p: f64| -> f64 {
            let f0 = SAMPLE_RATE / p;
            let mut sum = 0.0;
            let mut k = 1;
            loop {
                let f = k as f64 * f0;
                if f >= BAND_HIGH_HZ {
                    break;
                }
                if f >= BAND_LOW_HZ {
                    let bin = (f / bin_hz).round() as usize;
                    if bin < half {
                        sum += mag2[bin];
                    }
                }
                k += 1;
            }
            sum
        };

        let step = (self.pitch_max - self.pitch_min) / (candidates - 1) as f64;
        let idx_of = |p: f64| ((p - self.pitch_min) / step).round();
        let fine_at = |lag: usize| -> f64 {
            let lo = idx_of(lag as f64 - 2.0).max(0.0) as usize;
            let hi = (idx_of(lag as f64 + 2.0).max(0.0) as usize).min(candidates - 1);
            let scores: Vec<f64> = (lo..=hi)
                .map(|i| score_at(self.pitch_min + i as f64 * step))
                .collect();
            let mut best = 0usize;
            for (i, &s) in scores.iter().enumerate() {
                if s > scores[best] {
                    best = i;
                }
            }
            let mut p = self.pitch_min + (lo + best) as f64 * step;
            if best > 0 && best + 1 < scores.len() {
                let (s0, s1, s2) = (scores[best - 1], scores[best], scores[best + 1]);
                let denom = s0 - 2.0 * s1 + s2;
                if denom.abs() > 1e-12 {
                    let delta = 0.5 * (s0 - s2) / denom;
                    if delta.abs() <= 1.0 {
                        p += delta * step;
                    }
                }
            }
            p
        };

        // fine + polish per coarse candidate; the polished fit energy
        // measures how much payload energy each candidate explains
        let results: Vec<(f64, f64)> = lags
            .iter()
            .map(|&lag| self.polish_pitch(payload, fine_at(lag)))
            .collect();
        let max_fit = results.iter().map(|r| r.1).fold(0.0f64, f64::max);
        results
            .iter()
            .filter(|r| r.1 >= 0.98 * max_fit)
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|r| r.0)
            .unwrap_or(self.pitch_min)
    }

    /// Polish stage: maximizes the exact least-squares fit energy on a
    /// shrinking grid around `p`. Returns the refined period and the fit
    /// energy at it. The harmonic range is frozen at the starting estimate so
    /// the score stays continuous across candidates; grid points falling
    /// outside the legal period range are skipped (never clamped, which would
    /// duplicate boundary candidates and corrupt the parabolic refinement).
    fn polish_pitch(&self, payload: &[f64], p: f64) -> (f64, f64) {
        let f0 = SAMPLE_RATE / p;
        let k_min = harmonic_floor(f0);
        let k_max = harmonic_count(f0);
        let mut center = p.clamp(self.pitch_min, self.pitch_max);
        for (span, h) in [(6usize, 0.05f64), (2, 0.005), (2, 0.0005)] {
            // slide the window to stay inside the legal range rather than
            // truncating it, so a peak sitting just inside a bound keeps a
            // full-resolution neighbourhood around it
            let width = 2.0 * span as f64 * h;
            let mut lo = (center - span as f64 * h).max(self.pitch_min);
            if lo + width > self.pitch_max {
                lo = (self.pitch_max - width).max(self.pitch_min);
            }
            let mut pts = Vec::with_capacity(2 * span + 1);
            for i in 0..=2 * span {
                let cand = lo + i as f64 * h;
                if cand > self.pitch_max {
                    break;
                }
                pts.push((cand, self.ls_fit_energy(payload, cand, k_min, k_max)));
            }
            let mut best_i = 0usize;
            for (i, pt) in pts.iter().enumerate() {
                if pt.1 > pts[best_i].1 {
                    best_i = i;
                }
            }
            center = pts[best_i].0;
            if best_i > 0 && best_i + 1 < pts.len() {
                let (s0, s1, s2) = (pts[best_i - 1].1, pts[best_i].1, pts[best_i + 1].1);
                let denom = s0 - 2.0 * s1 + s2;
                if denom.abs() > 0.0 {
                    let delta = 0.5 * (s0 - s2) / denom;
                    if delta.abs() <= 1.0 {
                        center = (center + delta * h).clamp(self.pitch_min, self.pitch_max);
                    }
                }
            }
        }
        let fit = self.ls_fit_energy(payload, center, k_min, k_max);
        (center, fit)
    }
}

impl Default for WindowBank {
    fn default() -> Self {
        Self::new()
    }
}

/// Solves `G x = rhs` for a symmetric positive-definite `G` (row-major,
/// `dim`×`dim`, overwritten with its Cholesky factor). Returns `None` if the
/// factorization hits a non-positive pivot.
fn cholesky_solve(g: &mut [f64], dim: usize, rhs: &[f64]) -> Option<Vec<f64>> {
    for i in 0..dim {
        for j in 0..=i {
            let mut s = g[i * dim + j];
            for k in 0..j {
                s -= g[i * dim + k] * g[j * dim + k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                g[i * dim + i] = s.sqrt();
            } else {
                g[i * dim + j] = s / g[j * dim + j];
            }
        }
    }
    let mut x = rhs.to_vec();
    for i in 0..dim {
        for k in 0..i {
            x[i] = x[i] - g[i * dim + k] * x[k];
        }
        x[i] /= g[i * dim + i];
    }
    for i in (0..dim).rev() {
        for k in i + 1..dim {
            x[i] = x[i] - g[k * dim + i] * x[k];
        }
        x[i] /= g[i * dim + i];
    }
    Some(x)
}

/// Overlap-adds trapezoid-windowed frames with the standard 320-sample hop.
pub fn overlap_add(frames: &[Vec<f64>]) -> Vec<f64> {
    if frames.is_empty() {
        return Vec::new();
    }
    let total = HOP * (frames.len() - 1) + FRAME_LEN;
    let mut out = vec![0.0; total];
    for (i, frame) in frames.iter().enumerate() {
        for (n, &v) in frame.iter().enumerate() {
            out[i * HOP + n] += v;
        }
    }
    out
}
