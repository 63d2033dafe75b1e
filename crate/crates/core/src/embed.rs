//! Watermark insertion: whole-clip single echo and time-spread echo.

use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::dsp::convolve_slices;
use crate::error::{Error, Result};
use crate::patterns::Pattern;

/// Default single-echo amplitude.
pub const DEFAULT_ECHO_ALPHA: f64 = 0.4;
/// Default spread-echo amplitude.
pub const DEFAULT_SPREAD_ALPHA: f64 = 0.01;
/// Default spread-echo lag.
pub const DEFAULT_SPREAD_DELTA: usize = 75;
/// Echo lags used throughout the single-echo experiments.
pub const CANONICAL_ECHOES: [usize; 4] = [50, 75, 76, 100];

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidKey(format!("alpha {alpha} outside [0, 1)")));
    }
    Ok(())
}

/// Single echo at lag `delta` samples with amplitude `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EchoKey {
    pub delta: usize,
    pub alpha: f64,
}

impl EchoKey {
    pub fn new(delta: usize, alpha: f64) -> Result<Self> {
        let key = Self { delta, alpha };
        key.validate()?;
        Ok(key)
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta == 0 {
            return Err(Error::InvalidKey("echo lag must be >= 1".into()));
        }
        check_alpha(self.alpha)
    }
}

/// Pattern `p` spread over lags `[delta, delta + L)` with amplitude `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadKey {
    pub pattern: Pattern,
    pub alpha: f64,
    pub delta: usize,
}

impl SpreadKey {
    pub fn new(pattern: Pattern, alpha: f64, delta: usize) -> Result<Self> {
        let key = Self {
            pattern,
            alpha,
            delta,
        };
        key.validate()?;
        Ok(key)
    }

    /// Key with the default amplitude and lag.
    pub fn with_defaults(pattern: Pattern) -> Self {
        Self {
            pattern,
            alpha: DEFAULT_SPREAD_ALPHA,
            delta: DEFAULT_SPREAD_DELTA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pattern.len() < 2 {
            return Err(Error::InvalidKey("spread pattern needs at least 2 bits".into()));
        }
        check_alpha(self.alpha)
    }

    pub fn len(&self) -> usize {
        self.pattern.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pattern.is_empty()
    }

    /// Same key with a different pattern (used for perturbed templates).
    pub fn with_pattern(&self, pattern: Pattern) -> Self {
        Self {
            pattern,
            ..self.clone()
        }
    }
}

/// Either kind of watermark key.
#[derive(Debug, Clone, PartialEq)]
pub enum Key {
    Single(EchoKey),
    Spread(SpreadKey),
}

impl Key {
    /// Lag at which the watermark is expected to peak.
    pub fn delta(&self) -> usize {
        match self {
            Key::Single(k) => k.delta,
            Key::Spread(k) => k.delta,
        }
    }

    pub fn alpha(&self) -> f64 {
        match self {
            Key::Single(k) => k.alpha,
            Key::Spread(k) => k.alpha,
        }
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        match self {
            Key::Single(k) => Key::Single(EchoKey { alpha, ..*k }),
            Key::Spread(k) => Key::Spread(SpreadKey {
                alpha,
                ..k.clone()
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Key::Single(k) => k.validate(),
            Key::Spread(k) => k.validate(),
        }
    }
}

impl From<EchoKey> for Key {
    fn from(k: EchoKey) -> Self {
        Key::Single(k)
    }
}

impl From<SpreadKey> for Key {
    fn from(k: SpreadKey) -> Self {
        Key::Spread(k)
    }
}

/// Whether the spread kernel carries the unit direct path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelMode {
    /// `delta[n] + alpha * (2p[n - delta] - 1)`.
    #[default]
    Classical,
    /// `alpha * (2p[n - delta] - 1)` alone; the carrier is not preserved.
    Literal,
}

/// Impulse response of a key.
pub fn build_echo_kernel(key: &Key) -> Vec<f64> {
    build_echo_kernel_with(key, KernelMode::Classical)
}

pub fn build_echo_kernel_with(key: &Key, mode: KernelMode) -> Vec<f64> {
    match key {
        Key::Single(k) => {
            let mut h = vec![0.0; k.delta + 1];
            h[0] = 1.0;
            h[k.delta] += k.alpha;
            h
        }
        Key::Spread(k) => {
            let mut h = vec![0.0; k.delta + k.len()];
            if mode == KernelMode::Classical {
                h[0] = 1.0;
            }
            for (slot, t) in h[k.delta..].iter_mut().zip(k.pattern.template()) {
                *slot += k.alpha * t;
            }
            h
        }
    }
}

/// `out[n] = x[n] + alpha * x[n - delta]`, same length as the input.
pub fn embed_single_echo(clip: &AudioClip, key: &EchoKey) -> Result<AudioClip> {
    key.validate()?;
    let x = clip.samples();
    if key.delta >= x.len() {
        return Err(Error::ClipTooShort {
            detail: format!("echo lag {} needs more than {} samples", key.delta, x.len()),
        });
    }
    let mut out = x.to_vec();
    for (o, &past) in out[key.delta..].iter_mut().zip(x) {
        *o += key.alpha * past;
    }
    AudioClip::new(out, clip.sample_rate())
}

/// Convolves the clip with the spread kernel, truncated to the input length.
pub fn embed_spread(clip: &AudioClip, key: &SpreadKey) -> Result<AudioClip> {
    embed_spread_with(clip, key, KernelMode::Classical)
}

pub fn embed_spread_with(clip: &AudioClip, key: &SpreadKey, mode: KernelMode) -> Result<AudioClip> {
    key.validate()?;
    if key.delta + key.len() >= clip.len() {
        return Err(Error::ClipTooShort {
            detail: format!(
                "spread kernel of {} samples needs a longer clip than {} samples",
                key.delta + key.len(),
                clip.len()
            ),
        });
    }
    let kernel = build_echo_kernel_with(&Key::Spread(key.clone()), mode);
    let mut out = convolve_slices(clip.samples(), &kernel);
    out.truncate(clip.len());
    AudioClip::new(out, clip.sample_rate())
}

/// Embeds either kind of key.
pub fn embed(clip: &AudioClip, key: &Key) -> Result<AudioClip> {
    match key {
        Key::Single(k) => embed_single_echo(clip, k),
        Key::Spread(k) => embed_spread(clip, k),
    }
}
