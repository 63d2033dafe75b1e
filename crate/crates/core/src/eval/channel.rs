//! Simulated degradation channels standing in for a generative model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::audio::{mix, resample, AudioClip};
use crate::error::{Error, Result};

/// Pitch-shift factors accepted by resampling channels.
pub const FACTOR_RANGE: (f64, f64) = (0.5, 2.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelKind {
    Identity,
    /// Scales the embedding amplitude by `ratio`. Acts at embed time, so
    /// [`apply_channel`] leaves audio untouched; see [`ChannelSpec::echo_gain`].
    AttenuateEcho { ratio: f64 },
    /// White Gaussian noise at `snr_db` relative to the clip RMS.
    AdditiveNoise { snr_db: f64 },
    /// Pitch shift by resampling: lags scale by `1 / factor` and so does duration.
    ResampleFactor { factor: f64 },
    /// With `probability`, a pitch shift by a factor drawn uniformly from
    /// `[min_factor, max_factor]`; otherwise identity.
    RandomResample {
        probability: f64,
        min_factor: f64,
        max_factor: f64,
    },
    /// Equal-weight white-noise interferers, jointly at `snr_db` below the clip.
    Mixture { interferers: usize, snr_db: f64 },
    /// Stages applied in order.
    Composite { stages: Vec<ChannelKind> },
}

impl ChannelKind {
    /// Collects every problem with the parameters, prefixed with `path`.
    pub fn problems(&self, path: &str, out: &mut Vec<String>) {
        let factor_ok = |f: f64| f.is_finite() && (FACTOR_RANGE.0..=FACTOR_RANGE.1).contains(&f);
        match self {
            ChannelKind::Identity => {}
            ChannelKind::AttenuateEcho { ratio } => {
                if !(ratio.is_finite() && (0.0..=1.0).contains(ratio)) {
                    out.push(format!("{path}: attenuation ratio {ratio} outside [0, 1]"));
                }
            }
            ChannelKind::AdditiveNoise { snr_db } => {
                if !snr_db.is_finite() {
                    out.push(format!("{path}: SNR must be finite"));
                }
            }
            ChannelKind::ResampleFactor { factor } => {
                if !factor_ok(*factor) {
                    out.push(format!("{path}: resample factor {factor} outside [0.5, 2]"));
                }
            }
            ChannelKind::RandomResample {
                probability,
                min_factor,
                max_factor,
            } => {
                if !(0.0..=1.0).contains(probability) {
                    out.push(format!("{path}: probability {probability} outside [0, 1]"));
                }
                if !factor_ok(*min_factor) || !factor_ok(*max_factor) || min_factor > max_factor {
                    out.push(format!(
                        "{path}: factor interval [{min_factor}, {max_factor}] invalid or outside [0.5, 2]"
                    ));
                }
            }
            ChannelKind::Mixture { interferers, snr_db } => {
                if *interferers == 0 {
                    out.push(format!("{path}: mixture needs at least one interferer"));
                }
                if !snr_db.is_finite() {
                    out.push(format!("{path}: SNR must be finite"));
                }
            }
            ChannelKind::Composite { stages } => {
                for (i, s) in stages.iter().enumerate() {
                    s.problems(&format!("{path}.stages[{i}]"), out);
                }
            }
        }
    }

    fn echo_gain(&self) -> f64 {
        match self {
            ChannelKind::AttenuateEcho { ratio } => *ratio,
            ChannelKind::Composite { stages } => stages.iter().map(Self::echo_gain).product(),
            _ => 1.0,
        }
    }
}

/// A channel plus the seed driving its randomness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    #[serde(flatten)]
    pub kind: ChannelKind,
    #[serde(default)]
    pub seed: u64,
}

impl ChannelSpec {
    pub fn new(kind: ChannelKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    pub fn identity() -> Self {
        Self::new(ChannelKind::Identity, 0)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        self.kind.problems("channel", &mut problems);
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(problems.join("; ")))
        }
    }

    /// Factor applied to a key's amplitude before embedding.
    pub fn echo_gain(&self) -> f64 {
        self.kind.echo_gain()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            kind: self.kind.clone(),
            seed,
        }
    }
}

/// SplitMix64 step, used to derive independent sub-seeds.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn apply_channel(clip: &AudioClip, spec: &ChannelSpec) -> Result<AudioClip> {
    spec.validate()?;
    apply_kind(clip, &spec.kind, spec.seed)
}

fn apply_kind(clip: &AudioClip, kind: &ChannelKind, seed: u64) -> Result<AudioClip> {
    match kind {
        ChannelKind::Identity | ChannelKind::AttenuateEcho { .. } => Ok(clip.clone()),
        ChannelKind::AdditiveNoise { snr_db } => {
            let noise = scaled_noise(clip.len(), clip.rms() / db_to_amplitude(*snr_db), seed);
            let out = clip.samples().iter().zip(&noise).map(|(s, n)| s + n).collect();
            AudioClip::new(out, clip.sample_rate())
        }
        ChannelKind::ResampleFactor { factor } => pitch_shift(clip, *factor),
        ChannelKind::RandomResample {
            probability,
            min_factor,
            max_factor,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let fire = rng.random::<f64>() < *probability;
            let factor = if min_factor < max_factor {
                rng.random_range(*min_factor..=*max_factor)
            } else {
                *min_factor
            };
            if fire {
                pitch_shift(clip, factor)
            } else {
                Ok(clip.clone())
            }
        }
        ChannelKind::Mixture { interferers, snr_db } => {
            // Each of k equal-weight interferers carries 1/k of the noise power.
            let total = clip.rms() / db_to_amplitude(*snr_db);
            let each = total / (*interferers as f64).sqrt();
            let mut clips = vec![clip.clone()];
            for i in 0..*interferers {
                let n = scaled_noise(clip.len(), each, derive_seed(seed, i as u64 + 1));
                clips.push(AudioClip::new(n, clip.sample_rate())?);
            }
            let weights = vec![1.0; clips.len()];
            mix(&clips, &weights)
        }
        ChannelKind::Composite { stages } => {
            // Identity stages draw no seed, so composite([identity, x]) == x.
            let mut current = clip.clone();
            let mut drawn = 0;
            for stage in stages {
                if *stage == ChannelKind::Identity {
                    continue;
                }
                let stage_seed = if drawn == 0 { seed } else { derive_seed(seed, 1000 + drawn) };
                current = apply_kind(&current, stage, stage_seed)?;
                drawn += 1;
            }
            Ok(current)
        }
    }
}

fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

/// Gaussian noise rescaled to exactly `rms` (zero when `rms` is zero).
fn scaled_noise(len: usize, rms: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut n: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
    let actual = (n.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
    let scale = if actual > 0.0 { rms / actual } else { 0.0 };
    n.iter_mut().for_each(|v| *v *= scale);
    n
}

/// Resamples to `rate / factor` and relabels the result with the original rate.
pub fn pitch_shift(clip: &AudioClip, factor: f64) -> Result<AudioClip> {
    if !(factor.is_finite() && (FACTOR_RANGE.0..=FACTOR_RANGE.1).contains(&factor)) {
        return Err(Error::InvalidArgument(format!("pitch factor {factor} outside [0.5, 2]")));
    }
    let rate = clip.sample_rate();
    let target = (rate as f64 / factor).round() as u32;
    resample(clip, target)?.with_sample_rate(rate)
}
