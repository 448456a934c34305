//! Enciphering and deciphering of vocal parameter triples.
//!
//! Pitch and energy travel through 16-bit additive rings: the speech value is
//! affinely mapped into its guard interval, rounded, translated by a
//! keystream word modulo 2^16, and the full ring is mapped onto the
//! pseudo-speech range. Energy is handled in the log10 domain on both sides.
//! Timbre is scrambled on the hypersphere: the doubled spherical angles of
//! `D ∈ S^8` are quantized to the fine lattice `(2π/(2^16·√8))·Γ8`, randomly
//! translated by `ν3·α1 + ... + ν10·α8` modulo the coarse lattice
//! `(2π/√8)·Z^8`, and wrapped onto the flat torus in `S^15`. Deciphering
//! reverses every step without re-quantization, clamping ring values to the
//! guard intervals and reflecting out-of-range angle coordinates.

use crate::keystream::FrameRandoms;
use crate::lattice::{CosetVector, Lattice, QuotientGroup, SphericalGroupCode};
use crate::scrambler::ScrambleError;
use crate::speech::VocalParams;
use crate::sphere_maps::{
    inverse_spherical_angles, spherical_angles, torus_map, torus_project, torus_unmap, BoxPoint,
    UnitVector,
};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const RING: f64 = 65536.0;
const RING_MAX: f64 = 65535.0;

/// Bounds and guard intervals of the scalar cipher lanes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CipherConfig {
    /// Speech energy bounds (sum of band energies).
    pub epsilon_min: f64,
    pub epsilon_max: f64,
    /// Speech pitch period bounds, samples/cycle at 8 kHz.
    pub pitch_min: f64,
    pub pitch_max: f64,
    /// Pseudo-speech energy bounds.
    pub pseudo_epsilon_min: f64,
    pub pseudo_epsilon_max: f64,
    /// Pseudo-speech pitch period bounds, samples/cycle at 16 kHz.
    pub pseudo_pitch_min: f64,
    pub pseudo_pitch_max: f64,
    /// Pitch guard bounds inside the 16-bit ring.
    pub kappa_low: u32,
    pub kappa_high: u32,
    /// Energy guard bounds inside the 16-bit ring.
    pub rho_low: u32,
    pub rho_high: u32,
}

impl Default for CipherConfig {
    fn default() -> Self {
        Self {
            epsilon_min: 10.0,
            epsilon_max: 1e8,
            pitch_min: 16.0,
            pitch_max: 128.0,
            pseudo_epsilon_min: 1e9,
            pseudo_epsilon_max: 1e10,
            pseudo_pitch_min: 80.0,
            pseudo_pitch_max: 160.0,
            kappa_low: 1 << 13,
            kappa_high: (1 << 16) - (1 << 13) - 1,
            rho_low: 1 << 13,
            rho_high: (1 << 16) - (1 << 13) - 1,
        }
    }
}

impl CipherConfig {
    pub fn validate(&self) -> Result<(), String> {
        let ring = 1u32 << 16;
        if !(0 < self.kappa_low && self.kappa_low < self.kappa_high && self.kappa_high < ring) {
            return Err(format!(
                "pitch guard bounds invalid: ({}, {})",
                self.kappa_low, self.kappa_high
            ));
        }
        if !(0 < self.rho_low && self.rho_low < self.rho_high && self.rho_high < ring) {
            return Err(format!(
                "energy guard bounds invalid: ({}, {})",
                self.rho_low, self.rho_high
            ));
        }
        for (name, lo, hi) in [
            ("energy", self.epsilon_min, self.epsilon_max),
            ("pitch", self.pitch_min, self.pitch_max),
            ("pseudo energy", self.pseudo_epsilon_min, self.pseudo_epsilon_max),
            ("pseudo pitch", self.pseudo_pitch_min, self.pseudo_pitch_max),
        ] {
            if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi) {
                return Err(format!("{name} bounds invalid: ({lo}, {hi})"));
            }
        }
        Ok(())
    }
}

/// Enciphered per-frame parameters carried by the pseudo-speech modem.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoParams {
    /// Pseudo energy `ε̃ ∈ [10^9, 10^10]`.
    pub energy: f64,
    /// Pseudo pitch period `p̃ ∈ [80, 160]` samples/cycle at 16 kHz.
    pub pitch: f64,
    /// Scrambled timbre on the `ξ = 1/√8` flat torus in `S^15`.
    pub timbre: UnitVector,
}

/// Intermediate ring values of enciphering, for diagnostics and RMSE metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncipherTrace {
    pub kappa_init: u32,
    pub kappa_enc: u32,
    pub rho_init: u32,
    pub rho_enc: u32,
}

/// Intermediate ring values of deciphering (real-valued, never re-quantized).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecipherTrace {
    /// Ring value recovered from the received pseudo pitch, before keystream
    /// removal.
    pub kappa_rec: f64,
    /// After keystream removal and guard clamping.
    pub kappa_dec: f64,
    pub rho_rec: f64,
    pub rho_dec: f64,
}

fn affine(x: f64, a: f64, b: f64, c: f64, d: f64) -> f64 {
    c + (x - a) * (d - c) / (b - a)
}

fn wrap_ring(v: f64) -> f64 {
    let mut r = v % RING;
    if r < 0.0 {
        r += RING;
    }
    r
}

/// The speech cipher: scalar ring lanes plus the hypersphere scrambler.
pub struct Cipher {
    cfg: CipherConfig,
    code: SphericalGroupCode,
    /// Rescaled fine basis columns `α1..α8`.
    alpha: Vec<Vec<f64>>,
}

impl Cipher {
    pub fn new(cfg: CipherConfig) -> Result<Self, ScrambleError> {
        let fine = Lattice::e8(1.0 / 65536.0);
        let coarse = Lattice::zn(8, 1.0);
        let quotient = QuotientGroup::build(fine, coarse)?;
        let alpha = quotient.scaled_fine_basis_columns();
        let code = SphericalGroupCode::build(quotient)?;
        Ok(Self { cfg, code, alpha })
    }

    pub fn config(&self) -> &CipherConfig {
        &self.cfg
    }

    pub fn code(&self) -> &SphericalGroupCode {
        &self.code
    }

    /// The timbre translation coset `ν3·α1 + ... + ν10·α8` reduced mod `Λβ`.
    pub fn nu_coset(&self, nu: &FrameRandoms) -> CosetVector {
        let n = self.code.xi().dim();
        let mut v = vec![0.0; n];
        for (i, alpha) in self.alpha.iter().enumerate() {
            let w = nu.nu[i + 2] as f64;
            for (vv, &a) in v.iter_mut().zip(alpha) {
                *vv += w * a;
            }
        }
        self.code.quotient().reduce(&v)
    }

    pub fn encipher(&self, v: &VocalParams, nu: &FrameRandoms) -> (PseudoParams, EncipherTrace) {
        let cfg = &self.cfg;
        // pitch lane
        let p = v.pitch.clamp(cfg.pitch_min, cfg.pitch_max);
        let kappa_init = affine(
            p,
            cfg.pitch_min,
            cfg.pitch_max,
            cfg.kappa_low as f64,
            cfg.kappa_high as f64,
        )
        .round_ties_even() as u32;
        let kappa_enc = (kappa_init + nu.nu[0]) & 0xFFFF;
        let pseudo_pitch = affine(
            kappa_enc as f64,
            0.0,
            RING_MAX,
            cfg.pseudo_pitch_min,
            cfg.pseudo_pitch_max,
        );

        // energy lane (log10 domain)
        let log_eps = v
            .energy
            .clamp(cfg.epsilon_min, cfg.epsilon_max)
            .log10();
        let rho_init = affine(
            log_eps,
            cfg.epsilon_min.log10(),
            cfg.epsilon_max.log10(),
            cfg.rho_low as f64,
            cfg.rho_high as f64,
        )
        .round_ties_even() as u32;
        let rho_enc = (rho_init + nu.nu[1]) & 0xFFFF;
        let pseudo_energy = 10f64.powf(affine(
            rho_enc as f64,
            0.0,
            RING_MAX,
            cfg.pseudo_epsilon_min.log10(),
            cfg.pseudo_epsilon_max.log10(),
        ));

        // timbre lane: doubled angles, quantize, translate, wrap onto torus
        let xi = self.code.xi();
        let u = spherical_angles(&v.timbre, xi)
            .expect("timbre is a unit vector on S^8")
            .point;
        let doubled: Vec<f64> = u.coords().iter().map(|&c| 2.0 * c).collect();
        let quot = self.code.quotient();
        let chi_init = quot
            .quantize(&doubled)
            .expect("doubled angles lie in the quantizer domain");
        let chi_enc = quot.add(&chi_init, &self.nu_coset(nu));
        let timbre = torus_map(&BoxPoint::wrapped(chi_enc.0, xi), xi);

        (
            PseudoParams {
                energy: pseudo_energy,
                pitch: pseudo_pitch,
                timbre,
            },
            EncipherTrace {
                kappa_init,
                kappa_enc,
                rho_init,
                rho_enc,
            },
        )
    }

    pub fn decipher(
        &self,
        r: &PseudoParams,
        nu: &FrameRandoms,
    ) -> Result<(VocalParams, DecipherTrace), ScrambleError> {
        let cfg = &self.cfg;
        // pitch lane
        let kappa_rec = affine(
            r.pitch,
            cfg.pseudo_pitch_min,
            cfg.pseudo_pitch_max,
            0.0,
            RING_MAX,
        );
        let kappa_dec = wrap_ring(kappa_rec - nu.nu[0] as f64)
            .clamp(cfg.kappa_low as f64, cfg.kappa_high as f64);
        let pitch = affine(
            kappa_dec,
            cfg.kappa_low as f64,
            cfg.kappa_high as f64,
            cfg.pitch_min,
            cfg.pitch_max,
        );

        // energy lane
        let rho_rec = affine(
            r.energy.max(f64::MIN_POSITIVE).log10(),
            cfg.pseudo_epsilon_min.log10(),
            cfg.pseudo_epsilon_max.log10(),
            0.0,
            RING_MAX,
        );
        let rho_dec =
            wrap_ring(rho_rec - nu.nu[1] as f64).clamp(cfg.rho_low as f64, cfg.rho_high as f64);
        let energy = 10f64.powf(affine(
            rho_dec,
            cfg.rho_low as f64,
            cfg.rho_high as f64,
            cfg.epsilon_min.log10(),
            cfg.epsilon_max.log10(),
        ));

        // timbre lane
        let xi = self.code.xi();
        let projected = torus_project(&r.timbre, xi)?;
        let u = torus_unmap(&projected, xi)?;
        let mut chi = self
            .code
            .quotient()
            .sub(&CosetVector(u.coords().to_vec()), &self.nu_coset(nu));
        // reflect every coordinate (including the last) into [0, πξi):
        // band-energy timbre is nonnegative, so the legal doubled-angle range
        // never exceeds the half box
        for (c, &x) in chi.0.iter_mut().zip(xi.components()) {
            let half = PI * x;
            if *c >= half {
                *c = 2.0 * half - *c;
            }
        }
        let halved: Vec<f64> = chi.0.iter().map(|&c| c / 2.0).collect();
        let timbre = inverse_spherical_angles(&BoxPoint::wrapped(halved, xi), xi)?;

        Ok((
            VocalParams {
                energy,
                pitch,
                timbre,
            },
            DecipherTrace {
                kappa_rec,
                kappa_dec,
                rho_rec,
                rho_dec,
            },
        ))
    }

    /// Pitch quantization step: speech pitch units per ring unit.
    pub fn pitch_step(&self) -> f64 {
        (self.cfg.pitch_max - self.cfg.pitch_min)
            / (self.cfg.kappa_high - self.cfg.kappa_low) as f64
    }

    /// Energy quantization step in the log10 domain.
    pub fn log_energy_step(&self) -> f64 {
        (self.cfg.epsilon_max.log10() - self.cfg.epsilon_min.log10())
            / (self.cfg.rho_high - self.cfg.rho_low) as f64
    }

    /// Upper bound on the timbre quantization error: the rescaled fine
    /// lattice covering radius through the halved inverse angle map.
    pub fn timbre_quantization_bound(&self) -> f64 {
        let covering = 2.0 * PI / (65536.0 * 8.0f64.sqrt());
        let xi_min = self.code.xi().xi_min();
        PI / (2.0 * xi_min) * covering / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    const TAU: f64 = 2.0 * PI;

    fn cipher() -> Cipher {
        Cipher::new(CipherConfig::default()).unwrap()
    }

    fn random_nu(rng: &mut impl Rng) -> FrameRandoms {
        let moduli = FrameRandoms::moduli();
        let mut nu = [0u32; 10];
        for (v, m) in nu.iter_mut().zip(moduli) {
            *v = rng.gen_range(0..m);
        }
        FrameRandoms { nu }
    }

    fn zero_nu() -> FrameRandoms {
        FrameRandoms { nu: [0; 10] }
    }

    fn random_vocal(rng: &mut impl Rng) -> VocalParams {
        // nonnegative timbre direction, as produced by band energies
        let d: Vec<f64> = (0..9).map(|_| rng.gen_range(0.01..1.0)).collect();
        VocalParams {
            energy: 10f64.powf(rng.gen_range(1.0..8.0)),
            pitch: rng.gen_range(16.0..128.0),
            timbre: UnitVector::normalized(d).unwrap(),
        }
    }

    #[test]
    fn table_endpoint_mappings() {
        let c = cipher();
        let v = VocalParams {
            energy: 10.0,
            pitch: 16.0,
            timbre: UnitVector::normalized(vec![1.0; 9]).unwrap(),
        };
        let (_, trace) = c.encipher(&v, &zero_nu());
        assert_eq!(trace.kappa_init, 8192);
        assert_eq!(trace.kappa_enc, 8192);
        assert_eq!(trace.rho_init, 8192);
        let v_max = VocalParams {
            energy: 1e8,
            pitch: 128.0,
            ..v
        };
        let (_, trace) = c.encipher(&v_max, &zero_nu());
        assert_eq!(trace.kappa_init, 65535 - 8192);
        assert_eq!(trace.rho_init, 65535 - 8192);
    }

    #[test]
    fn ring_wraparound() {
        let c = cipher();
        let v = VocalParams {
            energy: 1e4,
            pitch: 128.0, // κ_init = κ_high
            timbre: UnitVector::normalized(vec![1.0; 9]).unwrap(),
        };
        let mut nu = zero_nu();
        nu.nu[0] = 1;
        let (_, t) = c.encipher(&v, &nu);
        assert_eq!(t.kappa_enc, 57344); // no wrap
        nu.nu[0] = 65535 - 57343 + 1;
        let (_, t) = c.encipher(&v, &nu);
        assert_eq!(t.kappa_enc, 0); // wraps around the ring
    }

    #[test]
    fn round_trip_within_quantization_steps() {
        let c = cipher();
        let pitch_bound = c.pitch_step();
        let log_eps_bound = c.log_energy_step();
        let timbre_bound = c.timbre_quantization_bound();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for i in 0..10_000 {
            let v = random_vocal(&mut rng);
            let nu = if i % 2 == 0 { zero_nu() } else { random_nu(&mut rng) };
            let (r, _) = c.encipher(&v, &nu);
            assert!(r.pitch >= 80.0 && r.pitch <= 160.0);
            assert!(r.energy >= 1e9 && r.energy <= 1e10);
            let (d, _) = c.decipher(&r, &nu).unwrap();
            assert!(
                (d.pitch - v.pitch).abs() <= pitch_bound,
                "pitch error {} > {}",
                (d.pitch - v.pitch).abs(),
                pitch_bound
            );
            assert!(
                (d.energy.log10() - v.energy.log10()).abs() <= log_eps_bound,
                "energy error"
            );
            assert!(
                v.timbre.distance(&d.timbre) <= timbre_bound + 1e-9,
                "timbre error {} > {}",
                v.timbre.distance(&d.timbre),
                timbre_bound
            );
        }
    }

    #[test]
    fn guard_clamp_to_closest_bound() {
        let c = cipher();
        // a received pseudo pitch mapping below κ_low must clamp to p_min
        let r = PseudoParams {
            energy: 5e9,
            pitch: 80.0 + (160.0 - 80.0) * (100.0 / 65535.0), // κ_rec = 100 < κ_low
            timbre: c
                .encipher(&random_vocal(&mut ChaCha8Rng::seed_from_u64(32)), &zero_nu())
                .0
                .timbre,
        };
        let (d, t) = c.decipher(&r, &zero_nu()).unwrap();
        assert_eq!(t.kappa_dec, 8192.0);
        assert!((d.pitch - 16.0).abs() < 1e-9);
        // and above κ_high clamps to p_max
        let r_hi = PseudoParams {
            pitch: 80.0 + (160.0 - 80.0) * (65000.0 / 65535.0),
            ..r
        };
        let (d, _) = c.decipher(&r_hi, &zero_nu()).unwrap();
        assert!((d.pitch - 128.0).abs() < 1e-9);
    }

    /// Injects a ring-domain error into the received energy.
    fn inject_rho_error(c: &Cipher, rho_enc: u32, delta: f64) -> f64 {
        let cfg = c.config();
        10f64.powf(affine(
            rho_enc as f64 + delta,
            0.0,
            RING_MAX,
            cfg.pseudo_epsilon_min.log10(),
            cfg.pseudo_epsilon_max.log10(),
        ))
    }

    #[test]
    fn silent_frame_energy_catastrophe() {
        // a silent frame (ε = ε_min) hit by a ring error beyond the guard
        // margin wraps around and deciphers as the loudest possible frame
        let c = cipher();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let v = VocalParams {
            energy: 10.0,
            ..random_vocal(&mut rng)
        };
        let nu = random_nu(&mut rng);
        let (r, trace) = c.encipher(&v, &nu);
        assert_eq!(trace.rho_init, 8192);

        let wrapped = PseudoParams {
            energy: inject_rho_error(&c, trace.rho_enc, -8193.0),
            ..r.clone()
        };
        let (d, _) = c.decipher(&wrapped, &nu).unwrap();
        assert!((d.energy - 1e8).abs() / 1e8 < 1e-6, "expected ε_max, got {}", d.energy);

        // guard bounds prevent the wrap for |ρ error| < ρ_low
        for delta in [-8191.0, -4000.0, 4000.0, 8191.0] {
            let safe = PseudoParams {
                energy: inject_rho_error(&c, trace.rho_enc, delta),
                ..r.clone()
            };
            let (d, _) = c.decipher(&safe, &nu).unwrap();
            let expected_err = delta.abs() * c.log_energy_step();
            let err = (d.energy.log10() - v.energy.log10()).abs();
            assert!(
                err <= expected_err + c.log_energy_step(),
                "guarded error {err} > {expected_err}"
            );
        }
    }

    #[test]
    fn error_expansion_inequalities() {
        // small transmission errors expand by at most the stated factors:
        // pitch/energy by their affine slopes, timbre by π/√2
        let c = cipher();
        let cfg = c.config().clone();
        let xi_min = c.code().xi().xi_min();
        let timbre_factor = PI / 2.0f64.sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let mut tested = 0;
        while tested < 5_000 {
            let v = random_vocal(&mut rng);
            let nu = random_nu(&mut rng);
            let (r, trace) = c.encipher(&v, &nu);
            // keep ring errors inside the guard margins (no clamping)
            let dk: f64 = rng.gen_range(-2000.0..2000.0);
            let dr: f64 = rng.gen_range(-2000.0..2000.0);
            if (trace.kappa_init as f64 + dk) < cfg.kappa_low as f64
                || (trace.kappa_init as f64 + dk) > cfg.kappa_high as f64
                || (trace.rho_init as f64 + dr) < cfg.rho_low as f64
                || (trace.rho_init as f64 + dr) > cfg.rho_high as f64
            {
                continue;
            }
            let noisy_pitch = affine(
                trace.kappa_enc as f64 + dk,
                0.0,
                RING_MAX,
                cfg.pseudo_pitch_min,
                cfg.pseudo_pitch_max,
            );
            // perturb the timbre slightly on the ambient sphere
            let sigma = rng.gen_range(0.0..0.02);
            let noisy_timbre = UnitVector::normalized(
                r.timbre
                    .coords()
                    .iter()
                    .map(|&x| x + rng.gen_range(-sigma..sigma))
                    .collect(),
            )
            .unwrap();
            let projected = torus_project(&noisy_timbre, c.code().xi()).unwrap();
            let d_tilde_err = r.timbre.distance(&projected);
            if d_tilde_err > xi_min / 2.0 {
                continue;
            }
            let noisy = PseudoParams {
                energy: inject_rho_error(&c, trace.rho_enc, dr),
                pitch: noisy_pitch,
                timbre: noisy_timbre,
            };
            let (d, _) = c.decipher(&noisy, &nu).unwrap();
            let pitch_err = (d.pitch - v.pitch).abs();
            assert!(
                pitch_err <= c.pitch_step() * (dk.abs() + 1.0) + 1e-9,
                "pitch expansion violated: {pitch_err}"
            );
            let eps_err = (d.energy.log10() - v.energy.log10()).abs();
            assert!(
                eps_err <= c.log_energy_step() * (dr.abs() + 1.0) + 1e-9,
                "energy expansion violated: {eps_err}"
            );
            let timbre_err = v.timbre.distance(&d.timbre);
            assert!(
                timbre_err <= timbre_factor * d_tilde_err + c.timbre_quantization_bound() + 1e-9,
                "timbre expansion violated: {timbre_err} vs {}",
                timbre_factor * d_tilde_err
            );
            tested += 1;
        }
    }

    #[test]
    fn keystream_linearity() {
        let c = cipher();
        let moduli = FrameRandoms::moduli();
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        for _ in 0..100 {
            let v = random_vocal(&mut rng);
            let nu1 = random_nu(&mut rng);
            let nu2 = random_nu(&mut rng);
            let mut sum = [0u32; 10];
            for i in 0..10 {
                sum[i] = (nu1.nu[i] + nu2.nu[i]) % moduli[i];
            }
            let nu_sum = FrameRandoms { nu: sum };
            let (_, t1) = c.encipher(&v, &nu1);
            let (r_sum, t_sum) = c.encipher(&v, &nu_sum);
            assert_eq!(t_sum.kappa_enc, (t1.kappa_enc + nu2.nu[0]) & 0xFFFF);
            assert_eq!(t_sum.rho_enc, (t1.rho_enc + nu2.nu[1]) & 0xFFFF);
            // timbre: translating the ν1 output by ν2's coset equals the sum
            let (r1, _) = c.encipher(&v, &nu1);
            let xi = c.code().xi();
            let u1 = torus_unmap(&r1.timbre, xi).unwrap();
            let translated = c
                .code()
                .quotient()
                .add(&CosetVector(u1.coords().to_vec()), &c.nu_coset(&nu2));
            let expect = torus_map(&BoxPoint::wrapped(translated.0, xi), xi);
            assert!(r_sum.timbre.distance(&expect) < 1e-9);
        }
    }

    #[test]
    fn ring_outputs_uniform_under_uniform_nu() {
        let c = cipher();
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let v1 = random_vocal(&mut rng);
        let v2 = random_vocal(&mut rng);
        let bins = 64usize;
        let draws = 100_000usize;
        let chi2 = ChiSquared::new((bins - 1) as f64).unwrap();
        let mut hists = Vec::new();
        for v in [&v1, &v2] {
            let mut hk = vec![0u64; bins];
            let mut hr = vec![0u64; bins];
            for _ in 0..draws {
                let nu = random_nu(&mut rng);
                let (_, t) = c.encipher(v, &nu);
                hk[(t.kappa_enc as usize) / (65536 / bins)] += 1;
                hr[(t.rho_enc as usize) / (65536 / bins)] += 1;
            }
            for h in [&hk, &hr] {
                let e = draws as f64 / bins as f64;
                let stat: f64 = h.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
                let p = 1.0 - chi2.cdf(stat);
                assert!(p > 0.005, "ring output not uniform, p = {p}");
            }
            hists.push((hk, hr));
        }
        // independence of input: homogeneity across the two fixed inputs
        for pick in 0..2 {
            let h1 = if pick == 0 { &hists[0].0 } else { &hists[0].1 };
            let h2 = if pick == 0 { &hists[1].0 } else { &hists[1].1 };
            let grand = (2 * draws) as f64;
            let mut stat = 0.0;
            for k in 0..bins {
                let col = (h1[k] + h2[k]) as f64;
                for h in [h1, h2] {
                    let e = col * draws as f64 / grand;
                    stat += (h[k] as f64 - e).powi(2) / e;
                }
            }
            let p = 1.0 - chi2.cdf(stat);
            assert!(p > 0.005, "distributions depend on input, p = {p}");
        }
    }

    #[test]
    fn wrong_side_projection_jump() {
        // torus distance beyond 2·sin(asin(ξ)/2) can flip a coordinate pair,
        // jumping the pre-image by at least πξ/2
        let c = cipher();
        let xi = c.code().xi();
        let x0 = xi.components()[0];
        let threshold = 2.0 * ((1.0 / 8.0f64.sqrt()).asin() / 2.0).sin();
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let v = random_vocal(&mut rng);
        let nu = random_nu(&mut rng);
        let (r, _) = c.encipher(&v, &nu);
        let u_enc = torus_unmap(&r.timbre, xi).unwrap();
        // flip pair 0 to the opposite side of its circle
        let mut coords = r.timbre.coords().to_vec();
        let (re, im) = (coords[0], coords[1]);
        coords[0] = -re;
        coords[1] = -im;
        let flipped = UnitVector::normalized(coords).unwrap();
        assert!(r.timbre.distance(&flipped) > threshold);
        let u_flip = torus_unmap(&torus_project(&flipped, xi).unwrap(), xi).unwrap();
        let jump = {
            let d = (u_enc.coords()[0] - u_flip.coords()[0]).abs();
            d.min(TAU * x0 - d)
        };
        assert!(jump >= PI * x0 / 2.0, "pre-image jump {jump} too small");
    }
}
