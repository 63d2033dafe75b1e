//! Deterministic test carriers: Gaussian noise and a small polyphonic synthesizer.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::audio::AudioClip;

/// Standard deviation of [`white_noise`] samples.
pub const NOISE_STD: f64 = 0.2;

/// Gaussian white noise with deviation [`NOISE_STD`].
pub fn white_noise(len: usize, sample_rate: u32, seed: u64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, NOISE_STD).expect("valid deviation");
    let samples = (0..len.max(1)).map(|_| dist.sample(&mut rng)).collect();
    AudioClip::new(samples, sample_rate).expect("noise is finite")
}

/// Seconds of white noise at `sample_rate`.
pub fn white_noise_seconds(seconds: f64, sample_rate: u32, seed: u64) -> AudioClip {
    white_noise((seconds * sample_rate as f64).round() as usize, sample_rate, seed)
}

fn midi_to_hz(note: f64) -> f64 {
    440.0 * 2f64.powf((note - 69.0) / 12.0)
}

/// Music-like clip: three voices of harmonic notes over a drum pattern.
///
/// Notes carry 1/k-weighted partials with attack/decay envelopes; the drum
/// track mixes a pitched kick with noise hats. A -60 dB noise floor keeps
/// every spectral bin populated.
pub fn synth_music(seconds: f64, sample_rate: u32, seed: u64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = ((seconds * sample_rate as f64).round() as usize).max(1);
    let sr = sample_rate as f64;
    let mut out = vec![0.0; len];

    let tempo = rng.random_range(80.0..150.0);
    let beat = (60.0 / tempo * sr) as usize;
    let root = rng.random_range(40..52) as f64;
    const SCALE: [f64; 7] = [0.0, 2.0, 4.0, 5.0, 7.0, 9.0, 11.0];

    for voice in 0..3 {
        let octave = 12.0 * voice as f64;
        let mut start = 0usize;
        while start < len {
            let beats = [1usize, 1, 2, 2, 4][rng.random_range(0..5)];
            let dur = beats * beat;
            let degree = SCALE[rng.random_range(0..SCALE.len())];
            let f0 = midi_to_hz(root + octave + degree + 12.0 * rng.random_range(0..2) as f64);
            let amp = rng.random_range(0.05..0.15) / (1.0 + voice as f64 * 0.3);
            let partials = rng.random_range(4..10);
            let decay = rng.random_range(1.0..4.0);
            let phases: Vec<f64> = (0..partials).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
            let end = (start + dur).min(len);
            for (i, o) in out[start..end].iter_mut().enumerate() {
                let t = i as f64 / sr;
                let env = (t / 0.01).min(1.0) * (-decay * t).exp();
                let mut s = 0.0;
                for (k, ph) in phases.iter().enumerate() {
                    let fk = f0 * (k + 1) as f64;
                    if fk >= 0.45 * sr {
                        break;
                    }
                    s += (2.0 * PI * fk * t + ph).sin() / (k + 1) as f64;
                }
                *o += amp * env * s;
            }
            start += dur;
        }
    }

    let noise = Normal::new(0.0, 1.0).expect("unit deviation");
    let mut step = 0usize;
    while step * beat / 2 < len {
        let at = step * beat / 2;
        if step.is_multiple_of(4) {
            let f = rng.random_range(50.0..70.0);
            for (i, o) in out[at..].iter_mut().take(beat / 2).enumerate() {
                let t = i as f64 / sr;
                *o += 0.3 * (-t * 20.0).exp() * (2.0 * PI * f * t).sin();
            }
        }
        for (i, o) in out[at..].iter_mut().take(beat / 4).enumerate() {
            let t = i as f64 / sr;
            *o += 0.04 * (-t * 60.0).exp() * noise.sample(&mut rng);
        }
        step += 1;
    }

    for o in out.iter_mut() {
        *o += 1e-3 * noise.sample(&mut rng);
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.9 {
        out.iter_mut().for_each(|v| *v *= 0.9 / peak);
    }
    AudioClip::new(out, sample_rate).expect("synth output is finite")
}
