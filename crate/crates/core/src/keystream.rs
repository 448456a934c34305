//! Deterministic per-frame randomness.
//!
//! Each frame consumes exactly 160 keystream bits, sliced big-endian into the
//! mixed-modulus vector `ν = (ν1,...,ν10)` with bit widths
//! `(16, 16, 15, 16, 16, 16, 16, 16, 16, 17)`. The default generator is
//! AES-256 in CTR mode keyed by a 256-bit seed; a raw bitstring source is
//! available for tests and interoperability experiments.

use aes::cipher::{KeyIvInit, StreamCipher};
use thiserror::Error;

type Aes256Ctr = ctr::Ctr128BE<aes::Aes256>;

/// Bit widths of ν1..ν10; they sum to 160.
pub const NU_BITS: [u32; 10] = [16, 16, 15, 16, 16, 16, 16, 16, 16, 17];

/// Bytes consumed per frame.
pub const FRAME_BYTES: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum KeystreamError {
    #[error("seed must be 64 lowercase hex characters, got {0:?}")]
    InvalidSeedHex(String),
    #[error("injected bitstring exhausted")]
    BitsExhausted,
}

/// A 256-bit secret seed.
#[derive(Clone, PartialEq, Eq)]
pub struct Seed(pub [u8; 32]);

impl Seed {
    /// Parses a 64-character lowercase hex string.
    pub fn from_hex(s: &str) -> Result<Self, KeystreamError> {
        if s.len() != 64 || !s.chars().all(|c| c.is_ascii_digit() || ('a'..='f').contains(&c)) {
            return Err(KeystreamError::InvalidSeedHex(s.to_string()));
        }
        let bytes = hex::decode(s).map_err(|_| KeystreamError::InvalidSeedHex(s.to_string()))?;
        let mut out = [0u8; 32];
        out.copy_from_slice(&bytes);
        Ok(Self(out))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Draws a fresh random seed from the given RNG.
    pub fn random(rng: &mut impl rand::RngCore) -> Self {
        let mut bytes = [0u8; 32];
        rng.fill_bytes(&mut bytes);
        Self(bytes)
    }
}

impl std::fmt::Debug for Seed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // never print key material by accident
        write!(f, "Seed(..)")
    }
}

/// The per-frame randomness vector ν1..ν10.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameRandoms {
    pub nu: [u32; 10],
}

impl FrameRandoms {
    /// Modulus of each component.
    pub fn moduli() -> [u32; 10] {
        NU_BITS.map(|b| 1u32 << b)
    }

    /// Slices a 160-bit block (20 bytes, MSB first) into ν1..ν10.
    pub fn from_block(block: &[u8; FRAME_BYTES]) -> Self {
        let mut nu = [0u32; 10];
        let mut bit = 0usize;
        for (i, &width) in NU_BITS.iter().enumerate() {
            let mut v = 0u32;
            for _ in 0..width {
                let byte = block[bit / 8];
                let b = (byte >> (7 - bit % 8)) & 1;
                v = (v << 1) | b as u32;
                bit += 1;
            }
            nu[i] = v;
        }
        Self { nu }
    }

    /// Reassembles the source 160-bit block (inverse of [`from_block`]).
    ///
    /// [`from_block`]: FrameRandoms::from_block
    pub fn to_block(&self) -> [u8; FRAME_BYTES] {
        let mut block = [0u8; FRAME_BYTES];
        let mut bit = 0usize;
        for (i, &width) in NU_BITS.iter().enumerate() {
            for k in (0..width).rev() {
                let b = (self.nu[i] >> k) & 1;
                block[bit / 8] |= (b as u8) << (7 - bit % 8);
                bit += 1;
            }
        }
        block
    }
}

/// Source of frame randomness.
enum Source {
    Aes(Box<Aes256Ctr>),
    /// Injected raw bytes for tests; consumed 20 at a time.
    Injected { bytes: Vec<u8>, pos: usize },
}

/// Stateful keystream generator; one per direction per session.
pub struct Keystream {
    source: Source,
}

impl Keystream {
    /// AES-256-CTR generator with a zero initial counter block.
    pub fn new(seed: &Seed) -> Self {
        let cipher = Aes256Ctr::new(&seed.0.into(), &[0u8; 16].into());
        Self {
            source: Source::Aes(Box::new(cipher)),
        }
    }

    /// Generator over an injected raw bitstring (multiple of 20 bytes used;
    /// trailing partial frames are unavailable).
    pub fn from_raw_bits(bytes: Vec<u8>) -> Self {
        Self {
            source: Source::Injected { bytes, pos: 0 },
        }
    }

    /// Next 20 raw keystream bytes.
    pub fn next_block(&mut self) -> Result<[u8; FRAME_BYTES], KeystreamError> {
        match &mut self.source {
            Source::Aes(cipher) => {
                let mut block = [0u8; FRAME_BYTES];
                cipher.apply_keystream(&mut block);
                Ok(block)
            }
            Source::Injected { bytes, pos } => {
                if *pos + FRAME_BYTES > bytes.len() {
                    return Err(KeystreamError::BitsExhausted);
                }
                let mut block = [0u8; FRAME_BYTES];
                block.copy_from_slice(&bytes[*pos..*pos + FRAME_BYTES]);
                *pos += FRAME_BYTES;
                Ok(block)
            }
        }
    }

    /// Consumes exactly 160 bits and returns the next ν vector.
    pub fn next_frame_randoms(&mut self) -> Result<FrameRandoms, KeystreamError> {
        Ok(FrameRandoms::from_block(&self.next_block()?))
    }
}
