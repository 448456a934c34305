//! Distortion-tolerant speech encryption over voice channels.
//!
//! The crate implements the full transmit/receive chain:
//!
//! - [`speech`] — narrowband speech analysis into per-frame vocal parameters
//!   (energy, pitch period, timbre unit vector) and a classical resynthesis path.
//! - [`sphere_maps`] — hypersphere/box/flat-torus coordinate machinery.
//! - [`lattice`] — nested-lattice quotients, CVP decoders, Smith normal form
//!   and spherical commutative group codes.
//! - [`keystream`] — deterministic per-frame randomness (AES-256-CTR).
//! - [`scrambler`] — distortion-tolerant scrambling of unit vectors.
//! - [`cipher`] — enciphering/deciphering of vocal parameter triples.
//! - [`pseudospeech`] — the harmonic modem carrying enciphered parameters
//!   as a 16 kHz pseudo-speech waveform.
//! - [`channel`] — AWGN, gain, fractional-offset and external-codec models.
//! - [`pipeline`] — end-to-end orchestration, WAV I/O, RMSE evaluation.

pub mod audio;
pub mod channel;
pub mod cipher;
pub mod keystream;
pub mod lattice;
pub mod pipeline;
pub mod pseudospeech;
pub mod scrambler;
pub mod speech;
pub mod sphere_maps;

pub use audio::{AudioBuffer, AudioError};
pub use channel::ChannelError;
pub use cipher::{Cipher, CipherConfig, DecipherTrace, EncipherTrace, PseudoParams};
pub use keystream::{FrameRandoms, Keystream, KeystreamError, Seed};
pub use pipeline::{
    keygen, read_padding_metadata, read_trace_file, synthetic_speech, write_encrypted_wav,
    write_trace_file, ChannelSpec, DecryptFrameTrace, DecryptOutput, EncryptOutput, FrameTrace,
    Pipeline, PipelineConfig, PipelineError, RmseReport, SimulationResult, CSV_HEADER,
};
pub use pseudospeech::WindowBank;
pub use speech::{SpeechAnalyzer, SpeechFrame, SpeechSynthesizer, VocalParams};
pub use sphere_maps::{FoliationProfile, UnitVector};

