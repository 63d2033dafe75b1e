//! Audio container, WAV I/O, band-limited resampling and mixing.
//!
//! Every clip is held as mono 64-bit samples. Multichannel files are folded
//! to mono by an unweighted channel mean on load.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};

/// Canonical sample rate of the watermarking pipeline.
pub const CANONICAL_RATE: u32 = 44_100;

/// Mono sample buffer with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    /// Builds a clip, rejecting empty buffers, non-finite samples and a zero rate.
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidClip("no samples".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidClip("sample rate must be positive".into()));
        }
        if let Some(pos) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidClip(format!("non-finite sample at index {pos}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Always false for a constructed clip; present for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64).sqrt()
    }

    /// Same samples, relabelled with a different rate (no resampling).
    pub fn with_sample_rate(self, sample_rate: u32) -> Result<Self> {
        Self::new(self.samples, sample_rate)
    }

    /// Copies `len` samples starting at `start`.
    pub fn segment(&self, start: usize, len: usize) -> Result<Self> {
        let end = start
            .checked_add(len)
            .filter(|&e| e <= self.samples.len())
            .ok_or_else(|| Error::ClipTooShort {
                detail: format!(
                    "segment [{start}, {start}+{len}) exceeds clip of {} samples",
                    self.samples.len()
                ),
            })?;
        Self::new(self.samples[start..end].to_vec(), self.sample_rate)
    }

    pub(crate) fn from_parts_unchecked(samples: Vec<f64>, sample_rate: u32) -> Self {
        debug_assert!(!samples.is_empty() && sample_rate > 0);
        Self {
            samples,
            sample_rate,
        }
    }
}

/// On-disk sample encoding for [`save_audio`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WavFormat {
    Pcm16,
    Float32,
}

impl std::str::FromStr for WavFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pcm16" => Ok(Self::Pcm16),
            "float32" => Ok(Self::Float32),
            other => Err(Error::InvalidArgument(format!(
                "unknown wav format '{other}' (expected pcm16 or float32)"
            ))),
        }
    }
}

/// Sample encoding found in a file read by [`load_audio_with_format`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFormat {
    Pcm16,
    Pcm24,
    Float32,
}

impl SourceFormat {
    /// Closest format [`save_audio`] can write.
    pub fn writable(self) -> WavFormat {
        match self {
            SourceFormat::Pcm16 => WavFormat::Pcm16,
            SourceFormat::Pcm24 | SourceFormat::Float32 => WavFormat::Float32,
        }
    }
}

/// Reads a RIFF/WAVE file and folds it to mono.
pub fn load_audio(path: impl AsRef<Path>) -> Result<AudioClip> {
    load_audio_with_format(path).map(|(clip, _)| clip)
}

pub fn load_audio_with_format(path: impl AsRef<Path>) -> Result<(AudioClip, SourceFormat)> {
    let path = path.as_ref();
    let read_err = |source| Error::Read {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = WavReader::open(path).map_err(|e| match e {
        hound::Error::Unsupported => Error::UnsupportedFormat {
            path: path.to_path_buf(),
            detail: "compressed or unknown codec".into(),
        },
        other => read_err(other),
    })?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if !(1..=8).contains(&channels) {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            detail: format!("{channels} channels (1..8 supported)"),
        });
    }
    if spec.sample_rate == 0 {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            detail: "zero sample rate".into(),
        });
    }

    let (interleaved, format): (Vec<f64>, SourceFormat) =
        match (spec.sample_format, spec.bits_per_sample) {
            (SampleFormat::Int, bits @ (16 | 24)) => {
                let scale = (1i64 << (bits - 1)) as f64;
                let data = reader
                    .samples::<i32>()
                    .map(|s| s.map(|v| v as f64 / scale))
                    .collect::<std::result::Result<_, _>>()
                    .map_err(read_err)?;
                let format = if bits == 16 {
                    SourceFormat::Pcm16
                } else {
                    SourceFormat::Pcm24
                };
                (data, format)
            }
            (SampleFormat::Float, 32) => {
                let data = reader
                    .samples::<f32>()
                    .map(|s| s.map(f64::from))
                    .collect::<std::result::Result<_, _>>()
                    .map_err(read_err)?;
                (data, SourceFormat::Float32)
            }
            (fmt, bits) => {
                return Err(Error::UnsupportedFormat {
                    path: path.to_path_buf(),
                    detail: format!("{bits}-bit {fmt:?} samples"),
                })
            }
        };

    let frames = interleaved.len() / channels;
    if frames == 0 {
        return Err(Error::EmptyAudio {
            path: path.to_path_buf(),
        });
    }
    let mono: Vec<f64> = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect()
    };
    let clip = AudioClip::new(mono, spec.sample_rate).map_err(|e| Error::UnsupportedFormat {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    Ok((clip, format))
}

/// Summary of a [`save_audio`] call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SaveReport {
    /// Samples saturated to the 16-bit range.
    pub clipped: usize,
}

/// Writes a mono WAV file. PCM16 output saturates samples outside [-1, 1).
pub fn save_audio(clip: &AudioClip, path: impl AsRef<Path>, format: WavFormat) -> Result<SaveReport> {
    let path = path.as_ref();
    let write_err = |source| Error::Write {
        path: path.to_path_buf(),
        source,
    };
    let spec = match format {
        WavFormat::Pcm16 => WavSpec {
            channels: 1,
            sample_rate: clip.sample_rate,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        },
        WavFormat::Float32 => WavSpec {
            channels: 1,
            sample_rate: clip.sample_rate,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        },
    };
    let mut writer = WavWriter::create(path, spec).map_err(write_err)?;
    let mut report = SaveReport::default();
    match format {
        WavFormat::Pcm16 => {
            let mut w = writer.get_i16_writer(clip.samples.len() as u32);
            for &s in &clip.samples {
                let (q, clipped) = quantize_pcm16(s);
                report.clipped += clipped as usize;
                w.write_sample(q);
            }
            w.flush().map_err(write_err)?;
        }
        WavFormat::Float32 => {
            for &s in &clip.samples {
                writer.write_sample(s as f32).map_err(write_err)?;
            }
        }
    }
    writer.finalize().map_err(write_err)?;
    if report.clipped > 0 {
        log::warn!(
            "{}: {} samples clipped to 16-bit range",
            path.display(),
            report.clipped
        );
    }
    Ok(report)
}

fn quantize_pcm16(s: f64) -> (i16, bool) {
    let v = (s * 32768.0).round();
    if v > i16::MAX as f64 {
        (i16::MAX, true)
    } else if v < i16::MIN as f64 {
        (i16::MIN, true)
    } else {
        (v as i16, false)
    }
}

/// Output length of a rate conversion.
pub fn resampled_len(len: usize, source_rate: u32, target_rate: u32) -> usize {
    ((len as f64) * target_rate as f64 / source_rate as f64).round() as usize
}

/// Kaiser window shape parameter of the resampling kernel.
const KAISER_BETA: f64 = 12.0;
/// Kernel half-length, counted in periods of the lower of the two rates.
const HALF_TAPS: usize = 64;
/// Cutoff as a fraction of the lower Nyquist frequency.
const ROLLOFF: f64 = 0.9;
/// Phase tables are exact up to this many phases; beyond that they are interpolated.
const MAX_EXACT_PHASES: usize = 1024;

/// Windowed-sinc polyphase converter between two fixed rates.
#[derive(Debug, Clone)]
pub struct Resampler {
    source_rate: u32,
    target_rate: u32,
    up: u64,
    down: u64,
    half: usize,
    /// `phases + 1` rows of `2 * half` taps; the extra row closes the interpolation grid.
    table: Vec<Vec<f64>>,
    exact: bool,
}

impl Resampler {
    pub fn new(source_rate: u32, target_rate: u32) -> Result<Self> {
        if source_rate == 0 || target_rate == 0 {
            return Err(Error::InvalidArgument("sample rates must be positive".into()));
        }
        let g = gcd(source_rate as u64, target_rate as u64);
        let up = target_rate as u64 / g;
        let down = source_rate as u64 / g;
        let ratio = (target_rate as f64 / source_rate as f64).min(1.0);
        let half_width = HALF_TAPS as f64 / ratio;
        let half = half_width.ceil() as usize;
        let cutoff = 0.5 * ratio * ROLLOFF;
        let exact = up as usize <= MAX_EXACT_PHASES;
        let phases = if exact { up as usize } else { MAX_EXACT_PHASES };
        let i0_beta = bessel_i0(KAISER_BETA);
        let table = (0..=phases)
            .map(|p| {
                let frac = p as f64 / phases as f64;
                let mut taps: Vec<f64> = (0..2 * half)
                    .map(|j| {
                        let t = frac + half as f64 - 1.0 - j as f64;
                        kernel(t, cutoff, half_width, i0_beta)
                    })
                    .collect();
                let sum: f64 = taps.iter().sum();
                taps.iter_mut().for_each(|v| *v /= sum);
                taps
            })
            .collect();
        Ok(Self {
            source_rate,
            target_rate,
            up,
            down,
            half,
            table,
            exact,
        })
    }

    pub fn process(&self, input: &[f64]) -> Vec<f64> {
        let out_len = resampled_len(input.len(), self.source_rate, self.target_rate);
        let n = input.len() as i64;
        let phases = self.table.len() - 1;
        let mut scratch = vec![0.0; 2 * self.half];
        (0..out_len)
            .map(|m| {
                let pos = m as u64 * self.down;
                let base = (pos / self.up) as i64;
                let rem = pos % self.up;
                let taps: &[f64] = if self.exact {
                    &self.table[rem as usize]
                } else {
                    let x = rem as f64 / self.up as f64 * phases as f64;
                    let lo = x.floor() as usize;
                    let w = x - lo as f64;
                    let (a, b) = (&self.table[lo], &self.table[lo + 1]);
                    for (s, (&ta, &tb)) in scratch.iter_mut().zip(a.iter().zip(b)) {
                        *s = ta + w * (tb - ta);
                    }
                    &scratch
                };
                let first = base - self.half as i64 + 1;
                let lo = first.max(0);
                let hi = (first + taps.len() as i64).min(n);
                if hi <= lo {
                    return 0.0;
                }
                let taps = &taps[(lo - first) as usize..(hi - first) as usize];
                taps.iter()
                    .zip(&input[lo as usize..hi as usize])
                    .map(|(h, x)| h * x)
                    .sum()
            })
            .collect()
    }
}

fn kernel(t: f64, cutoff: f64, half_width: f64, i0_beta: f64) -> f64 {
    if t.abs() >= half_width {
        return 0.0;
    }
    let x = 2.0 * cutoff * t;
    let sinc = if x.abs() < 1e-12 {
        1.0
    } else {
        (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
    };
    let r = t / half_width;
    let window = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / i0_beta;
    2.0 * cutoff * sinc * window
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > sum * 1e-17 {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Band-limited conversion of `clip` to `target_rate`.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if target_rate == 0 {
        return Err(Error::InvalidArgument("target rate must be positive".into()));
    }
    if target_rate == clip.sample_rate {
        return Ok(clip.clone());
    }
    let out = Resampler::new(clip.sample_rate, target_rate)?.process(&clip.samples);
    if out.is_empty() {
        return Err(Error::ClipTooShort {
            detail: "resampled clip has no samples".into(),
        });
    }
    Ok(AudioClip::from_parts_unchecked(out, target_rate))
}

/// Weighted sum of clips, zero-padding the shorter ones.
pub fn mix(clips: &[AudioClip], weights: &[f64]) -> Result<AudioClip> {
    let first = clips
        .first()
        .ok_or_else(|| Error::InvalidArgument("mix of an empty clip list".into()))?;
    if weights.len() != clips.len() {
        return Err(Error::LengthMismatch {
            left: clips.len(),
            right: weights.len(),
        });
    }
    if let Some(c) = clips.iter().find(|c| c.sample_rate != first.sample_rate) {
        return Err(Error::SampleRateMismatch(first.sample_rate, c.sample_rate));
    }
    let len = clips.iter().map(AudioClip::len).max().unwrap_or(0);
    let mut out = vec![0.0; len];
    for (clip, &w) in clips.iter().zip(weights) {
        for (o, &s) in out.iter_mut().zip(&clip.samples) {
            *o += w * s;
        }
    }
    AudioClip::new(out, first.sample_rate)
}
