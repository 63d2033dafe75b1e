//! Echo-hiding watermarks for audio corpora.
//!
//! Embeds whole-clip single echoes or time-spread echo patterns and detects
//! them from the real cepstrum with exclusion-window z-scores. The
//! [`eval`] module simulates degradation channels and computes ROC curves
//! over detection scores.

pub mod audio;
pub mod bits;
pub mod cli;
pub mod detect;
pub mod dsp;
pub mod embed;
pub mod error;
pub mod eval;
pub mod keyfile;
pub mod patterns;
pub mod payload;
pub mod signals;

pub use audio::{load_audio, mix, resample, save_audio, AudioClip, WavFormat};
pub use detect::{
    detect_single_echo, detect_spread, exclusion_zscore, Band, DetectionReport, ScoreMode,
    SingleEchoDetector, SpreadDetector, ZScore, ZScoreProfile,
};
pub use dsp::{convolve, cross_correlate, enhance_correlation, real_cepstrum, Cepstrum};
pub use embed::{build_echo_kernel, embed, embed_single_echo, embed_spread, EchoKey, Key, SpreadKey};
pub use error::{Error, Result};
pub use patterns::{flip_bits, generate_pattern, generate_pattern_set, hamming, Pattern, PatternSet};
pub use payload::{decode_payload, encode_payload, PayloadConfig};
