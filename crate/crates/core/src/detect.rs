//! Exclusion-window z-scores and watermark detectors.
//!
//! The score of lag `i` is `(v[i] - mu) / sigma`, where `mu` and `sigma` are
//! the population mean and deviation of `v` over the band `[a, b]` with all
//! indices `|j - i| <= halfwidth` removed.

use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::dsp::{cross_correlate_lags, enhance_correlation, real_cepstrum, Cepstrum};
use crate::embed::SpreadKey;
use crate::error::{Error, Result};

/// Below this deviation a score is reported as degenerate.
pub const SIGMA_FLOOR: f64 = 1e-12;
/// First lag of the spread-correlation scan.
pub const SPREAD_BAND_START: usize = 3;
/// Neighbours excluded on each side of the scored lag in spread detection.
pub const SPREAD_EXCLUSION: usize = 3;

/// Inclusive lag range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Band {
    pub start: usize,
    pub end: usize,
}

impl Band {
    pub const SINGLE_ECHO: Band = Band { start: 25, end: 125 };

    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start >= end {
            return Err(Error::InvalidArgument(format!("band [{start}, {end}] is empty or inverted")));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, lag: usize) -> bool {
        (self.start..=self.end).contains(&lag)
    }

    pub fn width(&self) -> usize {
        self.end - self.start + 1
    }
}

impl Default for Band {
    fn default() -> Self {
        Self::SINGLE_ECHO
    }
}

/// Numerator of the score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    /// `(v[i] - mu) / sigma`.
    #[default]
    Standard,
    /// `mu / sigma` exactly as the formula is printed; kept for comparison only.
    Literal,
}

/// One exclusion z-score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZScore {
    Finite(f64),
    /// The excluded neighbourhood has zero spread.
    Degenerate,
}

impl ZScore {
    pub fn value(self) -> Option<f64> {
        match self {
            ZScore::Finite(z) => Some(z),
            ZScore::Degenerate => None,
        }
    }
}

/// Z-score of `values[i]` against `values[a..=b]` minus `i`'s neighbourhood.
pub fn exclusion_zscore(
    values: &[f64],
    i: usize,
    band: Band,
    halfwidth: usize,
    mode: ScoreMode,
) -> Result<ZScore> {
    if band.start >= band.end || band.end >= values.len() {
        return Err(Error::InvalidArgument(format!(
            "band [{}, {}] outside sequence of {} values",
            band.start,
            band.end,
            values.len()
        )));
    }
    if !band.contains(i) {
        return Err(Error::InvalidArgument(format!(
            "lag {i} outside band [{}, {}]",
            band.start, band.end
        )));
    }
    let keep = |j: &usize| j.abs_diff(i) > halfwidth;
    let window = &values[band.start..=band.end];
    let mut count = 0usize;
    let mut sum = 0.0;
    for (j, v) in (band.start..).zip(window) {
        if keep(&j) {
            count += 1;
            sum += v;
        }
    }
    if count < 2 {
        return Err(Error::InvalidArgument(format!(
            "only {count} samples remain in [{}, {}] after excluding +/-{halfwidth} around {i}",
            band.start, band.end
        )));
    }
    let mean = sum / count as f64;
    let var = (band.start..)
        .zip(window)
        .filter(|(j, _)| keep(j))
        .map(|(_, v)| (v - mean).powi(2))
        .sum::<f64>()
        / count as f64;
    let sigma = var.sqrt();
    if sigma.is_nan() || sigma < SIGMA_FLOOR {
        return Ok(ZScore::Degenerate);
    }
    let numerator = match mode {
        ScoreMode::Standard => values[i] - mean,
        ScoreMode::Literal => mean,
    };
    Ok(ZScore::Finite(numerator / sigma))
}

/// Sequence a profile was scored on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileSource {
    Cepstrum,
    SpreadCorrelation,
    SpreadCorrelationEnhanced,
}

/// Z-scores at every lag of a band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScoreProfile {
    /// `z[k]` scores lag `band.start + k`; `None` marks a degenerate lag.
    pub z: Vec<Option<f64>>,
    pub band: Band,
    pub exclusion_halfwidth: usize,
    pub source: ProfileSource,
    pub mode: ScoreMode,
}

impl ZScoreProfile {
    pub fn compute(
        values: &[f64],
        band: Band,
        halfwidth: usize,
        source: ProfileSource,
        mode: ScoreMode,
    ) -> Result<Self> {
        let z = (band.start..=band.end)
            .map(|i| exclusion_zscore(values, i, band, halfwidth, mode).map(ZScore::value))
            .collect::<Result<_>>()?;
        Ok(Self {
            z,
            band,
            exclusion_halfwidth: halfwidth,
            source,
            mode,
        })
    }

    pub fn z_at(&self, lag: usize) -> Option<f64> {
        if !self.band.contains(lag) {
            return None;
        }
        self.z[lag - self.band.start]
    }

    pub fn is_degenerate(&self) -> bool {
        self.z.iter().any(Option::is_none)
    }

    /// Lag of the largest finite score (band start if none is finite).
    pub fn argmax(&self) -> usize {
        self.z
            .iter()
            .enumerate()
            .filter_map(|(k, z)| z.map(|v| (k, v)))
            .fold(None, |best: Option<(usize, f64)>, (k, v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((k, v)),
            })
            .map_or(self.band.start, |(k, _)| self.band.start + k)
    }

    /// Largest finite score over lags farther than `guard` from `lag`.
    pub fn max_outside(&self, lag: usize, guard: usize) -> Option<f64> {
        (self.band.start..=self.band.end)
            .filter(|l| l.abs_diff(lag) > guard)
            .filter_map(|l| self.z_at(l))
            .reduce(f64::max)
    }
}

/// Result of one detection pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub clip_id: Option<String>,
    pub key_id: Option<String>,
    pub duration_seconds: f64,
    pub argmax_lag: usize,
    pub z_at_argmax: Option<f64>,
    pub key_lag: Option<usize>,
    pub z_at_key: Option<f64>,
    pub degenerate: bool,
    pub profile: ZScoreProfile,
}

impl DetectionReport {
    pub fn new(profile: ZScoreProfile, key_lag: Option<usize>, duration_seconds: f64) -> Self {
        let argmax_lag = profile.argmax();
        Self {
            clip_id: None,
            key_id: None,
            duration_seconds,
            argmax_lag,
            z_at_argmax: profile.z_at(argmax_lag),
            key_lag,
            z_at_key: key_lag.and_then(|l| profile.z_at(l)),
            degenerate: profile.is_degenerate(),
            profile,
        }
    }

    pub fn with_ids(mut self, clip_id: impl Into<String>, key_id: impl Into<String>) -> Self {
        self.clip_id = Some(clip_id.into());
        self.key_id = Some(key_id.into());
        self
    }

    pub const CSV_HEADER: &'static str = "clip_id,key_id,duration,argmax_lag,z_at_key,degenerate";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            csv_field(self.clip_id.as_deref().unwrap_or("")),
            csv_field(self.key_id.as_deref().unwrap_or("")),
            self.duration_seconds,
            self.argmax_lag,
            self.z_at_key.map(|z| z.to_string()).unwrap_or_default(),
            self.degenerate
        )
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Scans the whole-clip cepstrum over a lag band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleEchoDetector {
    pub band: Band,
    pub mode: ScoreMode,
}

impl Default for SingleEchoDetector {
    fn default() -> Self {
        Self {
            band: Band::SINGLE_ECHO,
            mode: ScoreMode::Standard,
        }
    }
}

impl SingleEchoDetector {
    pub fn with_band(band: Band) -> Self {
        Self {
            band,
            ..Self::default()
        }
    }

    pub fn detect(&self, clip: &AudioClip, key_lag: Option<usize>) -> Result<DetectionReport> {
        if clip.len() <= 2 * self.band.end {
            return Err(Error::ClipTooShort {
                detail: format!(
                    "single-echo detection over [{}, {}] needs more than {} samples, got {}",
                    self.band.start,
                    self.band.end,
                    2 * self.band.end,
                    clip.len()
                ),
            });
        }
        let c = real_cepstrum(clip)?;
        self.detect_cepstrum(&c, key_lag, clip.duration_seconds())
    }

    pub fn detect_cepstrum(
        &self,
        c: &Cepstrum,
        key_lag: Option<usize>,
        duration_seconds: f64,
    ) -> Result<DetectionReport> {
        let profile = ZScoreProfile::compute(c.values(), self.band, 0, ProfileSource::Cepstrum, self.mode)?;
        Ok(DetectionReport::new(profile, key_lag, duration_seconds))
    }
}

/// Single-echo scan with the default detector.
pub fn detect_single_echo(clip: &AudioClip, band: Band) -> Result<DetectionReport> {
    SingleEchoDetector::with_band(band).detect(clip, None)
}

/// Correlates the cepstrum with a key's `2p - 1` template and scores lags `[3, L + delta]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpreadDetector {
    pub enhanced: bool,
    pub mode: ScoreMode,
}

impl SpreadDetector {
    pub fn new(enhanced: bool) -> Self {
        Self {
            enhanced,
            ..Self::default()
        }
    }

    pub fn band(key: &SpreadKey) -> Band {
        Band {
            start: SPREAD_BAND_START,
            end: key.len() + key.delta,
        }
    }

    /// Smallest clip length the detector accepts for `key`.
    pub fn min_clip_len(key: &SpreadKey) -> usize {
        // Correlation lags up to L + delta + 1 read cepstral lags up to 2L + delta.
        2 * key.len() + key.delta + 1
    }

    pub fn detect(&self, clip: &AudioClip, key: &SpreadKey) -> Result<DetectionReport> {
        let need = Self::min_clip_len(key);
        if clip.len() < need {
            return Err(Error::ClipTooShort {
                detail: format!(
                    "spread detection with L={} and lag {} needs {need} samples, got {}",
                    key.len(),
                    key.delta,
                    clip.len()
                ),
            });
        }
        let c = real_cepstrum(clip)?;
        self.detect_cepstrum(&c, key, clip.duration_seconds())
    }

    pub fn detect_cepstrum(&self, c: &Cepstrum, key: &SpreadKey, duration_seconds: f64) -> Result<DetectionReport> {
        key.validate()?;
        let band = Self::band(key);
        let cstar = cross_correlate_lags(c, &key.pattern.template(), band.end + 1)?;
        let (values, source) = if self.enhanced {
            (enhance_correlation(&cstar)?, ProfileSource::SpreadCorrelationEnhanced)
        } else {
            (cstar, ProfileSource::SpreadCorrelation)
        };
        let profile = ZScoreProfile::compute(&values, band, SPREAD_EXCLUSION, source, self.mode)?;
        Ok(DetectionReport::new(profile, Some(key.delta), duration_seconds))
    }
}

/// Spread-echo detection at the key's lag.
pub fn detect_spread(clip: &AudioClip, key: &SpreadKey, enhanced: bool) -> Result<DetectionReport> {
    SpreadDetector::new(enhanced).detect(clip, key)
}
