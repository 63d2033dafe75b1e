//! Windowed two-lag echo codec carrying one bit per analysis window.
//!
//! Each window is dominated by an echo at `delta0` (bit 0) or `delta1`
//! (bit 1). Between window centres the two echo signals are crossfaded
//! linearly, so every window centre holds exactly one of them.

use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::dsp::real_cepstrum_of;
use crate::embed::{embed_single_echo, EchoKey};
use crate::error::{Error, Result};

/// Largest lag the codec accepts.
pub const MAX_PAYLOAD_LAG: usize = 125;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayloadConfig {
    pub delta0: usize,
    pub delta1: usize,
    pub alpha: f64,
    /// Samples per bit.
    pub window: usize,
}

impl Default for PayloadConfig {
    fn default() -> Self {
        Self {
            delta0: 50,
            delta1: 75,
            alpha: 0.4,
            window: 1024,
        }
    }
}

impl PayloadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.delta0 == self.delta1 {
            return Err(Error::InvalidArgument("delta0 and delta1 must differ".into()));
        }
        for d in [self.delta0, self.delta1] {
            if !(1..=MAX_PAYLOAD_LAG).contains(&d) {
                return Err(Error::InvalidArgument(format!(
                    "payload lag {d} outside [1, {MAX_PAYLOAD_LAG}]"
                )));
            }
        }
        if self.window < 4 * self.delta0.max(self.delta1) {
            return Err(Error::InvalidArgument(format!(
                "window {} shorter than 4 x max lag",
                self.window
            )));
        }
        EchoKey::new(self.delta0, self.alpha)?;
        Ok(())
    }

    /// Bits that fit in `len` samples.
    pub fn capacity(&self, len: usize) -> usize {
        len / self.window
    }

    pub fn bits_per_second(&self, sample_rate: u32) -> f64 {
        sample_rate as f64 / self.window as f64
    }

    pub fn swapped(&self) -> Self {
        Self {
            delta0: self.delta1,
            delta1: self.delta0,
            ..*self
        }
    }
}

/// Crossfade weight toward the bit-1 signal at sample `n`.
fn mix_weight(n: usize, bits: &[bool], window: usize) -> f64 {
    let centre = |k: usize| (k * window) as f64 + window as f64 / 2.0;
    let t = n as f64;
    let last = bits.len() - 1;
    if t <= centre(0) {
        return bits[0] as u8 as f64;
    }
    if t >= centre(last) {
        return bits[last] as u8 as f64;
    }
    let k = ((t - window as f64 / 2.0) / window as f64).floor() as usize;
    let frac = (t - centre(k)) / window as f64;
    let (a, b) = (bits[k] as u8 as f64, bits[k + 1] as u8 as f64);
    a + (b - a) * frac
}

pub fn encode_payload(clip: &AudioClip, bits: &[bool], config: &PayloadConfig) -> Result<AudioClip> {
    config.validate()?;
    let capacity = config.capacity(clip.len());
    if bits.len() > capacity {
        return Err(Error::CapacityExceeded {
            bits: bits.len(),
            capacity,
        });
    }
    let x0 = embed_single_echo(clip, &EchoKey::new(config.delta0, config.alpha)?)?;
    if bits.is_empty() {
        return Ok(x0);
    }
    let x1 = embed_single_echo(clip, &EchoKey::new(config.delta1, config.alpha)?)?;
    let out = x0
        .samples()
        .iter()
        .zip(x1.samples())
        .enumerate()
        .map(|(n, (&a, &b))| {
            let m = mix_weight(n, bits, config.window);
            (1.0 - m) * a + m * b
        })
        .collect();
    AudioClip::new(out, clip.sample_rate())
}

pub fn decode_payload(clip: &AudioClip, config: &PayloadConfig, n_bits: usize) -> Result<Vec<bool>> {
    config.validate()?;
    if n_bits * config.window > clip.len() {
        return Err(Error::ClipTooShort {
            detail: format!(
                "{n_bits} bits of {} samples need {} samples, got {}",
                config.window,
                n_bits * config.window,
                clip.len()
            ),
        });
    }
    clip.samples()
        .chunks_exact(config.window)
        .take(n_bits)
        .map(|w| {
            let c = real_cepstrum_of(w)?;
            Ok(c[config.delta0] <= c[config.delta1])
        })
        .collect()
}

/// Fraction of differing bits.
pub fn bit_error_rate(sent: &[bool], received: &[bool]) -> Result<f64> {
    if sent.len() != received.len() {
        return Err(Error::LengthMismatch {
            left: sent.len(),
            right: received.len(),
        });
    }
    if sent.is_empty() {
        return Ok(0.0);
    }
    let errors = sent.iter().zip(received).filter(|(a, b)| a != b).count();
    Ok(errors as f64 / sent.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::white_noise;

    #[test]
    fn capacity_rate() {
        let cfg = PayloadConfig::default();
        assert_eq!(cfg.capacity(44_100), 43);
        assert!((cfg.bits_per_second(44_100) - 43.066_406_25).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let ok = PayloadConfig::default();
        assert!(ok.validate().is_ok());
        assert!(PayloadConfig { delta1: 50, ..ok }.validate().is_err());
        assert!(PayloadConfig { delta1: 126, ..ok }.validate().is_err());
        assert!(PayloadConfig { window: 299, ..ok }.validate().is_err());
        assert!(PayloadConfig { alpha: 1.5, ..ok }.validate().is_err());
    }

    #[test]
    fn all_zero_payload_is_x0() {
        let x = white_noise(44_100, 44_100, 1);
        let cfg = PayloadConfig::default();
        let out = encode_payload(&x, &[false; 43], &cfg).unwrap();
        let x0 = embed_single_echo(&x, &EchoKey::new(50, 0.4).unwrap()).unwrap();
        for (a, b) in out.samples().iter().zip(x0.samples()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_alpha_passthrough() {
        let x = white_noise(44_100, 44_100, 2);
        let cfg = PayloadConfig {
            alpha: 0.0,
            ..Default::default()
        };
        let bits: Vec<bool> = (0..43).map(|i| i % 3 == 0).collect();
        let out = encode_payload(&x, &bits, &cfg).unwrap();
        for (a, b) in out.samples().iter().zip(x.samples()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn crossfade_hits_centres() {
        let bits = [true, false, true];
        assert_eq!(mix_weight(512, &bits, 1024), 1.0);
        assert_eq!(mix_weight(1536, &bits, 1024), 0.0);
        assert_eq!(mix_weight(1024, &bits, 1024), 0.5);
        assert_eq!(mix_weight(0, &bits, 1024), 1.0);
        assert_eq!(mix_weight(5000, &bits, 1024), 1.0);
    }

    #[test]
    fn pure_echo_clips_decode_constant() {
        let x = white_noise(44_100, 44_100, 3);
        let cfg = PayloadConfig::default();
        let x0 = embed_single_echo(&x, &EchoKey::new(50, 0.4).unwrap()).unwrap();
        let x1 = embed_single_echo(&x, &EchoKey::new(75, 0.4).unwrap()).unwrap();
        assert!(decode_payload(&x0, &cfg, 43).unwrap().iter().all(|&b| !b));
        assert!(decode_payload(&x1, &cfg, 43).unwrap().iter().all(|&b| b));
    }

    #[test]
    fn swapping_lags_inverts_bits() {
        let x = white_noise(44_100, 44_100, 4);
        let cfg = PayloadConfig::default();
        let bits: Vec<bool> = (0..43).map(|i| i % 2 == 1).collect();
        let y = encode_payload(&x, &bits, &cfg).unwrap();
        let a = decode_payload(&y, &cfg, 43).unwrap();
        let b = decode_payload(&y, &cfg.swapped(), 43).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| p != q));
        assert!(bit_error_rate(&bits, &a).unwrap() <= 0.1);
    }

    #[test]
    fn capacity_errors() {
        let x = white_noise(2048, 44_100, 5);
        let cfg = PayloadConfig::default();
        assert!(matches!(
            encode_payload(&x, &[true; 3], &cfg),
            Err(Error::CapacityExceeded { bits: 3, capacity: 2 })
        ));
        assert!(decode_payload(&x, &cfg, 3).is_err());
    }
}
