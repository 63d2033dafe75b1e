//! Release acceptance checks. Runs every criterion, prints one line each and
//! exits non-zero if any fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use echomark::detect::{Band, SingleEchoDetector, SpreadDetector};
use echomark::dsp::real_cepstrum;
use echomark::embed::{embed_single_echo, embed_spread, EchoKey, Key, SpreadKey, CANONICAL_ECHOES};
use echomark::eval::channel::{apply_channel, derive_seed, ChannelKind, ChannelSpec};
use echomark::eval::experiments::{
    run_bitflip_curve, run_duration_sweep, summarize_sweep, BitflipOptions, CorpusClip, SweepOptions,
};
use echomark::eval::roc::roc;
use echomark::eval::stats::{ks_two_sample, median};
use echomark::keyfile::PatternSetFile;
use echomark::patterns::{generate_pattern, generate_pattern_set, SpreadCriteria};
use echomark::payload::{bit_error_rate, decode_payload, encode_payload, PayloadConfig};
use echomark::signals::{synth_music, white_noise_seconds};
use echomark::{mix, AudioClip};

const RATE: u32 = 44_100;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn noise(seconds: f64, seed: u64) -> AudioClip {
    white_noise_seconds(seconds, RATE, seed)
}

fn within(limit: Duration, elapsed: Duration) -> (bool, String) {
    (elapsed <= limit, format!("{:.2} s (limit {} s)", elapsed.as_secs_f64(), limit.as_secs()))
}

fn spread_key() -> SpreadKey {
    SpreadKey::with_defaults(generate_pattern(1024, 7).expect("pattern"))
}

/// ln|1 + a e^{-iwd}| expanded as a power series, folded onto N bins.
fn series_cepstrum(a: f64, d: usize, n: usize, lag: usize) -> f64 {
    let mut c = 0.0;
    for k in 1..200 {
        let coeff = -(-a).powi(k as i32) / k as f64 / 2.0;
        let pos = (k * d) % n;
        if pos == lag {
            c += coeff;
        }
        if (n - pos) % n == lag {
            c += coeff;
        }
    }
    c
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let n = 4096;
    let mut x = vec![0.0; n];
    x[0] = 1.0;
    x[50] = 0.4;
    let c = real_cepstrum(&AudioClip::new(x, RATE).unwrap()).unwrap();
    let (o50, o100) = (series_cepstrum(0.4, 50, n, 50), series_cepstrum(0.4, 50, n, 100));
    let err50 = (c[50] - 0.2).abs().max((c[50] - o50).abs());
    let err100 = (c[100] + 0.04).abs().max((c[100] - o100).abs());
    let (fast, time) = within(Duration::from_secs(1), start.elapsed());
    outcome(
        err50 <= 1e-6 && err100 <= 1e-6 && fast,
        format!("c[50]={:.9} c[100]={:.9} max err {:.1e}; {time}", c[50], c[100], err50.max(err100)),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let detector = SingleEchoDetector::default();
    let mut parts = Vec::new();
    let mut pass = true;
    for &delta in &CANONICAL_ECHOES {
        let key = EchoKey::new(delta, 0.4).unwrap();
        let hits = (0..20u64)
            .into_par_iter()
            .filter(|&s| {
                let clip = embed_single_echo(&noise(10.0, 1000 * delta as u64 + s), &key).unwrap();
                detector.detect(&clip, Some(delta)).unwrap().argmax_lag == delta
            })
            .count();
        pass &= hits == 20;
        parts.push(format!("d{delta} {hits}/20"));
    }
    let key = EchoKey::new(75, 0.4).unwrap();
    let music_hits = (0..10u64)
        .into_par_iter()
        .filter(|&s| {
            let clip = embed_single_echo(&synth_music(10.0, RATE, 500 + s), &key).unwrap();
            detector.detect(&clip, Some(75)).unwrap().argmax_lag == 75
        })
        .count();
    pass &= music_hits >= 9;
    let (fast, time) = within(Duration::from_secs(30), start.elapsed());
    outcome(
        pass && fast,
        format!("noise {}; synthetic music {music_hits}/10; {time}", parts.join(" ")),
    )
}

fn criterion_3() -> Outcome {
    let detector = SingleEchoDetector::default();
    let band = Band::SINGLE_ECHO;
    let quiet = (0..100u64)
        .into_par_iter()
        .filter(|&s| {
            let r = detector.detect(&noise(10.0, 30_000 + s), None).unwrap();
            let max_abs = (band.start..=band.end)
                .filter_map(|lag| r.profile.z_at(lag))
                .fold(0.0f64, |m, z| m.max(z.abs()));
            max_abs < 5.0
        })
        .count();

    let key = EchoKey::new(50, 0.4).unwrap();
    // Echo 50 scored at `lag`, next to a clean clip scored at the same lag.
    let cross_vs_clean = |lag: usize| -> (Vec<f64>, Vec<f64>) {
        (0..50u64)
            .into_par_iter()
            .map(|s| {
                let marked = embed_single_echo(&noise(10.0, 31_000 + s), &key).unwrap();
                let cross = detector.detect(&marked, Some(lag)).unwrap().z_at_key.unwrap();
                let clean = detector.detect(&noise(10.0, 32_000 + s), Some(lag)).unwrap().z_at_key.unwrap();
                (cross, clean)
            })
            .unzip()
    };
    let (cross, clean) = cross_vs_clean(100);
    let ks = ks_two_sample(&cross, &clean).unwrap();
    let (cross75, clean75) = cross_vs_clean(75);
    let ks75 = ks_two_sample(&cross75, &clean75).unwrap();
    outcome(
        quiet >= 95 && ks.p_value > 0.01,
        format!(
            "null max|z|<5 in {quiet}/100; cross-echo 50->100 median z {:.2} vs clean {:.2}, KS D={:.2} p={:.2e}; \
             reported only: 50->75 KS p={:.2}",
            median(&cross).unwrap(),
            median(&clean).unwrap(),
            ks.statistic,
            ks.p_value,
            ks75.p_value
        ),
    )
}

fn criterion_4() -> Outcome {
    let key = spread_key();
    let detector = SpreadDetector::default();
    let results: Vec<(bool, f64, f64)> = (0..20u64)
        .into_par_iter()
        .map(|s| {
            let marked = embed_spread(&noise(30.0, 40_000 + s), &key).unwrap();
            let r = detector.detect(&marked, &key).unwrap();
            let clean = detector.detect(&noise(30.0, 41_000 + s), &key).unwrap();
            (r.argmax_lag == 75, r.z_at_key.unwrap(), clean.z_at_key.unwrap().abs())
        })
        .collect();
    let hits = results.iter().filter(|r| r.0).count();
    let z_med = median(&results.iter().map(|r| r.1).collect::<Vec<_>>()).unwrap();
    let null_med = median(&results.iter().map(|r| r.2).collect::<Vec<_>>()).unwrap();
    outcome(
        hits >= 19 && z_med >= 5.0 * null_med,
        format!("argmax 75 in {hits}/20; median z {z_med:.2} vs clean median |z| {null_med:.2}"),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let corpus: Vec<CorpusClip> = (0..40u64)
        .map(|i| CorpusClip::new(format!("n{i}"), noise(30.0, 50_000 + i)))
        .collect();
    let channel = ChannelSpec::new(
        ChannelKind::Composite {
            stages: vec![
                ChannelKind::AttenuateEcho { ratio: 0.5 },
                ChannelKind::AdditiveNoise { snr_db: 20.0 },
            ],
        },
        5,
    );
    let opts = BitflipOptions {
        duration: 30.0,
        segments_per_clip: 1,
        flips: vec![0, 128, 256, 384, 512],
        channel,
        enhanced: false,
        seed: 5,
    };
    let result = run_bitflip_curve(&corpus, &spread_key(), &opts).unwrap();
    let aurocs = result.aurocs();
    let monotone = aurocs.windows(2).all(|w| w[1] >= w[0]);
    let starts = (aurocs[0] - 0.5).abs() <= 0.05;
    let (fast, time) = within(Duration::from_secs(300), start.elapsed());
    let list: Vec<String> = aurocs.iter().map(|a| format!("{a:.3}")).collect();
    outcome(
        monotone && starts && result.clean.auroc >= 0.95 && fast,
        format!("AUROC [{}]; vs clean {:.3}; {time}", list.join(", "), result.clean.auroc),
    )
}

fn criterion_6() -> Outcome {
    let corpus: Vec<CorpusClip> = (0..5u64)
        .map(|i| CorpusClip::new(format!("n{i}"), noise(65.0, 60_000 + i)))
        .collect();
    let durations = vec![5.0, 10.0, 30.0, 60.0];
    let opts = SweepOptions {
        durations: durations.clone(),
        segments_per_clip: 4,
        channel: ChannelSpec::identity(),
        band: Band::SINGLE_ECHO,
        enhanced: false,
        include_clean: false,
        seed: 6,
    };
    let key = Key::Single(EchoKey::new(75, 0.4).unwrap());
    let rows = run_duration_sweep(&corpus, &key, "d75", &opts).unwrap();
    let summary = summarize_sweep(&rows, &durations);
    let medians: Vec<f64> = summary.iter().map(|s| s.median_z_embedded.unwrap()).collect();
    let enough = summary.iter().all(|s| s.segments >= 20);
    let monotone = medians.windows(2).all(|w| w[1] >= w[0]);
    let fmt = |v: &[f64]| v.iter().map(|m| format!("{m:.2}")).collect::<Vec<_>>().join(", ");
    let spread_rows = run_duration_sweep(&corpus, &Key::Spread(spread_key()), "spread", &opts).unwrap();
    let spread: Vec<f64> = summarize_sweep(&spread_rows, &durations)
        .iter()
        .map(|s| s.median_z_embedded.unwrap())
        .collect();
    outcome(
        enough && monotone,
        format!(
            "single echo 75 median z at 5/10/30/60 s: [{}], {} segments per cell; reported only: spread key [{}]",
            fmt(&medians),
            summary[0].segments,
            fmt(&spread)
        ),
    )
}

fn criterion_7() -> Outcome {
    let wide = SingleEchoDetector::with_band(Band::new(25, 170).unwrap());
    let key = EchoKey::new(100, 0.4).unwrap();
    let marked = embed_single_echo(&noise(10.0, 70_000), &key).unwrap();
    let mut lags = Vec::new();
    let mut pass = true;
    for f in [0.8, 1.0, 1.25] {
        let shifted = apply_channel(&marked, &ChannelSpec::new(ChannelKind::ResampleFactor { factor: f }, 0)).unwrap();
        let lag = wide.detect(&shifted, None).unwrap().argmax_lag;
        let expected = (100.0 / f).round() as usize;
        pass &= lag.abs_diff(expected) <= 1;
        lags.push(format!("f{f}->{lag} (want {expected})"));
    }

    let corpus: Vec<CorpusClip> = (0..40u64)
        .map(|i| CorpusClip::new(format!("n{i}"), noise(10.0, 71_000 + i)))
        .collect();
    let probabilities = [0.0, 0.5, 0.9];
    let mut aurocs = Vec::new();
    for (i, &p) in probabilities.iter().enumerate() {
        let channel = ChannelSpec::new(
            ChannelKind::RandomResample {
                probability: p,
                min_factor: 0.75,
                max_factor: 1.25,
            },
            70 + i as u64,
        );
        let opts = SweepOptions {
            durations: vec![10.0],
            segments_per_clip: 1,
            channel,
            band: Band::SINGLE_ECHO,
            enhanced: false,
            include_clean: true,
            seed: 7,
        };
        let key = Key::Single(EchoKey::new(75, 0.4).unwrap());
        let rows = run_duration_sweep(&corpus, &key, "d75", &opts).unwrap();
        aurocs.push(summarize_sweep(&rows, &[10.0])[0].auroc_vs_clean.unwrap());
    }
    let trend = aurocs.windows(2).all(|w| w[1] <= w[0]);
    let list: Vec<String> = aurocs.iter().map(|a| format!("{a:.3}")).collect();
    outcome(
        pass && trend,
        format!("{}; AUROC at p=0/0.5/0.9: [{}]", lags.join(", "), list.join(", ")),
    )
}

/// Detection rate of each stem's echo after the stem passes through a
/// 0 dB two-interferer mixture, plus how many echoes stand out (z > 5) in
/// the raw equal-weight mixture of the three stems.
fn mixture_trials(make_stem: impl Fn(u64, usize) -> AudioClip + Sync) -> (usize, usize, usize) {
    let detector = SingleEchoDetector::default();
    let deltas = [50usize, 75, 100];
    let trials: Vec<(usize, usize)> = (0..20u64)
        .into_par_iter()
        .map(|t| {
            let stems: Vec<AudioClip> = deltas
                .iter()
                .enumerate()
                .map(|(i, &d)| embed_single_echo(&make_stem(t, i), &EchoKey::new(d, 0.4).unwrap()).unwrap())
                .collect();
            let mut stem_hits = 0;
            for (i, (stem, &d)) in stems.iter().zip(&deltas).enumerate() {
                let channel = ChannelSpec::new(
                    ChannelKind::Mixture {
                        interferers: 2,
                        snr_db: 0.0,
                    },
                    derive_seed(t, i as u64),
                );
                let leaked = apply_channel(stem, &channel).unwrap();
                if detector.detect(&leaked, Some(d)).unwrap().argmax_lag == d {
                    stem_hits += 1;
                }
            }
            let mixture = mix(&stems, &[1.0 / 3.0; 3]).unwrap();
            let r = detector.detect(&mixture, None).unwrap();
            let in_mix = deltas.iter().filter(|&&d| r.profile.z_at(d).unwrap() > 5.0).count();
            (stem_hits, in_mix)
        })
        .collect();
    let hits = trials.iter().map(|t| t.0).sum();
    let in_mix = trials.iter().map(|t| t.1).sum();
    (hits, in_mix, trials.len() * deltas.len())
}

fn criterion_8() -> Outcome {
    let (hits, in_mix, total) = mixture_trials(|t, i| noise(10.0, 80_000 + 10 * t + i as u64));
    let (music_hits, music_in_mix, _) =
        mixture_trials(|t, i| synth_music(10.0, RATE, 81_000 + 10 * t + i as u64));
    let rate = hits as f64 / total as f64;
    outcome(
        rate >= 0.9,
        format!(
            "noise stems + 2 interferers at 0 dB: {hits}/{total} ({:.0}%); reported only: raw 3-stem mix z>5 for {in_mix}/{total}, \
             synthetic-music stems {music_hits}/{total} with interferers and {music_in_mix}/{total} in the raw mix",
            100.0 * rate
        ),
    )
}

fn criterion_9() -> Outcome {
    let cfg = PayloadConfig::default();
    let capacity = cfg.capacity(RATE as usize);
    let rate_ok = capacity == 43 && (cfg.bits_per_second(RATE) - 44_100.0 / 1024.0).abs() < 1e-12;
    let bers: Vec<f64> = (0..20u64)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(90_000 + s);
            let bits: Vec<bool> = (0..43).map(|_| rng.random()).collect();
            let x = noise(1.0, 91_000 + s);
            let y = encode_payload(&x, &bits, &cfg).unwrap();
            bit_error_rate(&bits, &decode_payload(&y, &cfg, 43).unwrap()).unwrap()
        })
        .collect();
    let mean = bers.iter().sum::<f64>() / bers.len() as f64;
    let worst = bers.iter().copied().fold(0.0, f64::max);
    outcome(
        rate_ok && mean <= 0.10,
        format!(
            "capacity {capacity} bits in 1 s ({:.4} bit/s); mean BER {:.3}, worst {:.3}",
            cfg.bits_per_second(RATE),
            mean,
            worst
        ),
    )
}

fn mann_whitney(t: &[f64], f: &[f64]) -> f64 {
    let mut wins = 0.0;
    for a in t {
        for b in f {
            wins += if a > b {
                1.0
            } else if a == b {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (t.len() * f.len()) as f64
}

fn criterion_10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let nt = rng.random_range(1..60);
        let nf = rng.random_range(1..60);
        // Every third set is coarsely quantized to force ties.
        let q = if i % 3 == 0 { 4.0 } else { 1e6 };
        let mut draw = |shift: f64| -> f64 {
            let v: f64 = StandardNormal.sample(&mut rng);
            ((v + shift) * q).round() / q
        };
        let t: Vec<f64> = (0..nt).map(|_| draw(0.5)).collect();
        let f: Vec<f64> = (0..nf).map(|_| draw(0.0)).collect();
        worst = worst.max((roc(&t, &f).unwrap().auroc - mann_whitney(&t, &f)).abs());
    }
    let t: Vec<f64> = (0..10_000).map(|_| 1.0 + Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
    let f: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let binormal = roc(&t, &f).unwrap().auroc;
    let expected = 0.760_249_938_7;
    outcome(
        worst <= 1e-9 && (binormal - expected).abs() <= 0.01,
        format!("max |AUROC - Mann-Whitney| {worst:.1e}; binormal {binormal:.4} vs {expected:.4}"),
    )
}

fn criterion_11() -> Outcome {
    let set = generate_pattern_set(8, 1024, 1).unwrap();
    let criteria = SpreadCriteria::for_set(8, 1024);
    let valid = set.patterns.iter().all(|p| p.longest_run() <= 2);
    let distances = set.pairwise_distances();
    let gap = set.max_sorted_gap();
    let a = PatternSetFile::from_set(&set, criteria).to_json();
    let b = PatternSetFile::from_set(&generate_pattern_set(8, 1024, 1).unwrap(), criteria).to_json();
    outcome(
        valid && distances.len() == 28 && gap <= 256 && a == b && set.criteria_met,
        format!(
            "run-valid {valid}; {} distances in [{}, {}]; max gap {gap}; identical rerun {}",
            distances.len(),
            distances.iter().min().unwrap(),
            distances.iter().max().unwrap(),
            a == b
        ),
    )
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 11] = [
        ("analytic cepstrum oracle", criterion_1),
        ("single-echo round trip", criterion_2),
        ("null calibration and cross-echo", criterion_3),
        ("spread round trip", criterion_4),
        ("bit-flip AUROC trend", criterion_5),
        ("duration trend", criterion_6),
        ("pitch-shift lag scaling", criterion_7),
        ("mixture survival", criterion_8),
        ("payload codec", criterion_9),
        ("AUROC correctness", criterion_10),
        ("pattern set", criterion_11),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let label = format!("{:>2} {name}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| label.contains(f.as_str())) {
            continue;
        }
        let result = check();
        if !result.pass {
            failed += 1;
        }
        println!("{} {label}: {}", if result.pass { "PASS" } else { "FAIL" }, result.detail);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
