//! Spectral primitives: real cepstrum, FFT convolution and template correlation.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::audio::AudioClip;
use crate::error::{Error, Result};

/// Magnitude floor applied before the logarithm.
pub const SPECTRAL_FLOOR: f64 = 1e-12;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn forward(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(len))
}

fn inverse(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(len))
}

/// Real cepstrum indexed by lag (quefrency) in samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Cepstrum {
    values: Vec<f64>,
}

impl Cepstrum {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

impl std::ops::Index<usize> for Cepstrum {
    type Output = f64;

    fn index(&self, lag: usize) -> &f64 {
        &self.values[lag]
    }
}

/// Whole-clip real cepstrum, `ifft(log|fft(x)|)`, at the clip's exact length.
pub fn real_cepstrum(clip: &AudioClip) -> Result<Cepstrum> {
    real_cepstrum_of(clip.samples())
}

/// [`real_cepstrum`] on a bare slice (used for per-window analysis).
pub fn real_cepstrum_of(samples: &[f64]) -> Result<Cepstrum> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::ClipTooShort {
            detail: format!("cepstrum needs at least 2 samples, got {n}"),
        });
    }
    let mut buf: Vec<Complex64> = samples.iter().map(|&s| Complex64::new(s, 0.0)).collect();
    forward(n).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex64::new(c.norm().max(SPECTRAL_FLOOR).ln(), 0.0);
    }
    inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    Ok(Cepstrum {
        values: buf.iter().map(|c| c.re * scale).collect(),
    })
}

/// Full linear convolution of two sequences via FFT.
pub fn convolve_slices(signal: &[f64], kernel: &[f64]) -> Vec<f64> {
    if signal.is_empty() || kernel.is_empty() {
        return Vec::new();
    }
    let out_len = signal.len() + kernel.len() - 1;
    let (short, long) = if kernel.len() <= signal.len() {
        (kernel, signal)
    } else {
        (signal, kernel)
    };
    if short.len() <= 16 {
        return direct_convolve(long, short);
    }
    // Overlap-add with blocks a few times the short operand.
    let fft_len = (4 * short.len()).next_power_of_two().min(out_len.next_power_of_two());
    let block = fft_len - short.len() + 1;
    let fwd = forward(fft_len);
    let inv = inverse(fft_len);

    let mut h = vec![Complex64::new(0.0, 0.0); fft_len];
    for (d, &s) in h.iter_mut().zip(short) {
        d.re = s;
    }
    fwd.process(&mut h);

    let mut out = vec![0.0; out_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_len];
    let scale = 1.0 / fft_len as f64;
    for (b, chunk) in long.chunks(block).enumerate() {
        buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for (d, &s) in buf.iter_mut().zip(chunk) {
            d.re = s;
        }
        fwd.process(&mut buf);
        for (x, y) in buf.iter_mut().zip(&h) {
            *x *= y;
        }
        inv.process(&mut buf);
        let start = b * block;
        let valid = (chunk.len() + short.len() - 1).min(out_len - start);
        for (o, c) in out[start..start + valid].iter_mut().zip(&buf) {
            *o += c.re * scale;
        }
    }
    out
}

fn direct_convolve(long: &[f64], short: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; long.len() + short.len() - 1];
    for (k, &h) in short.iter().enumerate() {
        if h == 0.0 {
            continue;
        }
        for (o, &x) in out[k..].iter_mut().zip(long) {
            *o += h * x;
        }
    }
    out
}

/// Full linear convolution; output length is `clip.len() + kernel.len() - 1`.
pub fn convolve(clip: &AudioClip, kernel: &[f64]) -> Result<AudioClip> {
    if kernel.is_empty() {
        return Err(Error::InvalidArgument("empty convolution kernel".into()));
    }
    AudioClip::new(convolve_slices(clip.samples(), kernel), clip.sample_rate())
}

/// Sliding dot product `out[n] = sum_k c[n + k] * template[k]` for every
/// `n` in `[0, N - L]`.
pub fn cross_correlate(c: &Cepstrum, template: &[f64]) -> Result<Vec<f64>> {
    let n = c.len();
    let l = template.len();
    if l == 0 {
        return Err(Error::InvalidArgument("empty correlation template".into()));
    }
    if l > n {
        return Err(Error::LengthMismatch { left: l, right: n });
    }
    let lags = n - l + 1;
    if lags.saturating_mul(l) <= 1 << 20 {
        return cross_correlate_lags(c, template, lags - 1);
    }
    let reversed: Vec<f64> = template.iter().rev().copied().collect();
    let full = convolve_slices(c.values(), &reversed);
    Ok(full[l - 1..l - 1 + lags].to_vec())
}

/// Direct sliding dot product restricted to lags `0..=max_lag`.
pub fn cross_correlate_lags(c: &Cepstrum, template: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let l = template.len();
    if l == 0 {
        return Err(Error::InvalidArgument("empty correlation template".into()));
    }
    if max_lag + l > c.len() {
        return Err(Error::ClipTooShort {
            detail: format!(
                "correlating a {l}-sample template up to lag {max_lag} needs {} cepstral samples, have {}",
                max_lag + l,
                c.len()
            ),
        });
    }
    let v = c.values();
    Ok((0..=max_lag)
        .map(|n| v[n..n + l].iter().zip(template).map(|(a, b)| a * b).sum())
        .collect())
}

/// `c[n] - 0.5 c[n-1] - 0.5 c[n+1]`, with missing neighbours taken as zero.
pub fn enhance_correlation(cstar: &[f64]) -> Result<Vec<f64>> {
    let len = cstar.len();
    if len < 3 {
        return Err(Error::InvalidArgument(format!(
            "enhancement needs at least 3 samples, got {len}"
        )));
    }
    Ok((0..len)
        .map(|n| {
            let left = if n > 0 { cstar[n - 1] } else { 0.0 };
            let right = cstar.get(n + 1).copied().unwrap_or(0.0);
            cstar[n] - 0.5 * left - 0.5 * right
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn impulse_has_zero_cepstrum() {
        let mut x = vec![0.0; 1024];
        x[0] = 1.0;
        let c = real_cepstrum_of(&x).unwrap();
        assert!(c.values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn silent_clip_is_valid() {
        let c = real_cepstrum_of(&[0.0; 64]).unwrap();
        assert!(c.values().iter().all(|v| v.is_finite()));
        assert!((c[0] - SPECTRAL_FLOOR.ln()).abs() < 1e-9);
    }

    #[test]
    fn too_short_for_cepstrum() {
        assert!(real_cepstrum_of(&[1.0]).is_err());
    }

    #[test]
    fn cepstrum_is_symmetric() {
        let c = real_cepstrum_of(&random(1001, 7)).unwrap();
        let n = c.len();
        for k in 1..n {
            assert!((c[k] - c[n - k]).abs() < 1e-9);
        }
    }

    #[test]
    fn scaling_moves_only_lag_zero() {
        let x = random(2048, 8);
        let y: Vec<f64> = x.iter().map(|v| v * 3.5).collect();
        let (cx, cy) = (real_cepstrum_of(&x).unwrap(), real_cepstrum_of(&y).unwrap());
        assert!((cy[0] - cx[0] - 3.5f64.ln()).abs() < 1e-9);
        for k in 1..cx.len() {
            assert!((cx[k] - cy[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn circular_convolution_is_additive_in_cepstrum() {
        let n = 256;
        let x = random(n, 9);
        let mut h = vec![0.0; n];
        h[0] = 1.0;
        h[13] = 0.3;
        h[40] = -0.2;
        // Direct O(N^2) circular convolution.
        let y: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|k| h[k] * x[(i + n - k) % n]).sum())
            .collect();
        let (cx, ch, cy) = (
            real_cepstrum_of(&x).unwrap(),
            real_cepstrum_of(&h).unwrap(),
            real_cepstrum_of(&y).unwrap(),
        );
        for k in 0..n {
            assert!((cy[k] - cx[k] - ch[k]).abs() < 1e-8, "lag {k}");
        }
    }

    #[test]
    fn convolve_identity_and_impulse() {
        let x = random(100, 10);
        assert_eq!(convolve_slices(&x, &[1.0]), x);
        let mut imp = vec![0.0; 50];
        imp[0] = 1.0;
        let k = random(30, 11);
        let out = convolve_slices(&imp, &k);
        assert_eq!(out.len(), 79);
        for (i, v) in out.iter().enumerate() {
            let expect = k.get(i).copied().unwrap_or(0.0);
            assert!((v - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn fft_correlation_matches_direct() {
        let c = Cepstrum {
            values: random(5000, 12),
        };
        let t: Vec<f64> = random(400, 13).iter().map(|v| v.signum()).collect();
        let fast = cross_correlate(&c, &t).unwrap();
        let direct = cross_correlate_lags(&c, &t, 4600).unwrap();
        assert_eq!(fast.len(), direct.len());
        for (a, b) in fast.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn template_longer_than_cepstrum() {
        let c = Cepstrum {
            values: vec![0.0; 10],
        };
        assert!(cross_correlate(&c, &[1.0; 11]).is_err());
    }

    #[test]
    fn enhancement_boundaries() {
        let mut s = vec![0.0; 150];
        s[75] = 1.0;
        let e = enhance_correlation(&s).unwrap();
        assert_eq!((e[74], e[75], e[76]), (-0.5, 1.0, -0.5));
        let e = enhance_correlation(&[2.0; 5]).unwrap();
        assert_eq!(e, vec![1.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(enhance_correlation(&[1.0, 2.0]).is_err());
    }
}
