use std::fs;
use std::path::Path;

use echomark::audio::{load_audio, load_audio_with_format, mix, resample, save_audio, AudioClip, SourceFormat, WavFormat};
use echomark::detect::{Band, SingleEchoDetector};
use echomark::embed::{embed_single_echo, EchoKey};
use echomark::eval::channel::pitch_shift;
use echomark::signals::white_noise;
use echomark::Error;
use hound::{SampleFormat, WavSpec, WavWriter};

fn write_int(path: &Path, channels: u16, bits: u16, frames: &[Vec<i32>]) {
    let spec = WavSpec {
        channels,
        sample_rate: 44_100,
        bits_per_sample: bits,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path, spec).unwrap();
    for frame in frames {
        for &s in frame {
            w.write_sample(s).unwrap();
        }
    }
    w.finalize().unwrap();
}

#[test]
fn float32_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.wav");
    let clip = white_noise(10_000, 44_100, 1);
    let exact: Vec<f64> = clip.samples().iter().map(|&s| s as f32 as f64).collect();
    let clip = AudioClip::new(exact, 44_100).unwrap();
    save_audio(&clip, &path, WavFormat::Float32).unwrap();
    let (back, format) = load_audio_with_format(&path).unwrap();
    assert_eq!(format, SourceFormat::Float32);
    assert_eq!(back, clip);
}

#[test]
fn float32_round_trip_within_single_precision() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.wav");
    let clip = white_noise(5_000, 22_050, 2);
    save_audio(&clip, &path, WavFormat::Float32).unwrap();
    let back = load_audio(&path).unwrap();
    assert_eq!(back.sample_rate(), 22_050);
    for (a, b) in back.samples().iter().zip(clip.samples()) {
        assert!((a - b).abs() <= 1e-6);
    }
}

#[test]
fn pcm16_round_trip_within_one_step() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.wav");
    let clip = white_noise(5_000, 44_100, 3);
    let clip = AudioClip::new(clip.samples().iter().map(|s| s.clamp(-0.99, 0.99)).collect(), 44_100).unwrap();
    let report = save_audio(&clip, &path, WavFormat::Pcm16).unwrap();
    assert_eq!(report.clipped, 0);
    let (back, format) = load_audio_with_format(&path).unwrap();
    assert_eq!(format, SourceFormat::Pcm16);
    for (a, b) in back.samples().iter().zip(clip.samples()) {
        assert!((a - b).abs() <= 2f64.powi(-15));
    }
}

#[test]
fn pcm16_saturates_and_counts() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.wav");
    let clip = AudioClip::new(vec![2.0, -3.0, 0.0, 1.0], 44_100).unwrap();
    assert_eq!(save_audio(&clip, &path, WavFormat::Pcm16).unwrap().clipped, 3);
    let raw: Vec<i16> = hound::WavReader::open(&path).unwrap().samples::<i16>().map(Result::unwrap).collect();
    assert_eq!(raw, vec![32767, -32768, 0, 32767]);
}

#[test]
fn silent_pcm16_file_has_zero_words() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("z.wav");
    save_audio(&AudioClip::new(vec![0.0; 100], 44_100).unwrap(), &path, WavFormat::Pcm16).unwrap();
    let raw: Vec<i16> = hound::WavReader::open(&path).unwrap().samples::<i16>().map(Result::unwrap).collect();
    assert!(raw.iter().all(|&s| s == 0));
}

#[test]
fn stereo_opposites_cancel() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("st.wav");
    let frames: Vec<Vec<i32>> = (0..64).map(|_| vec![16_384, -16_384]).collect();
    write_int(&path, 2, 16, &frames);
    let clip = load_audio(&path).unwrap();
    assert_eq!(clip.len(), 64);
    assert!(clip.samples().iter().all(|&s| s == 0.0));
}

#[test]
fn int_scaling() {
    let dir = tempfile::tempdir().unwrap();
    let p16 = dir.path().join("a.wav");
    write_int(&p16, 1, 16, &[vec![-32_768], vec![16_384], vec![32_767]]);
    assert_eq!(load_audio(&p16).unwrap().samples(), &[-1.0, 0.5, 32_767.0 / 32_768.0]);

    let p24 = dir.path().join("b.wav");
    write_int(&p24, 1, 24, &[vec![-8_388_608], vec![4_194_304]]);
    let (clip, format) = load_audio_with_format(&p24).unwrap();
    assert_eq!(format, SourceFormat::Pcm24);
    assert_eq!(format.writable(), WavFormat::Float32);
    assert_eq!(clip.samples(), &[-1.0, 0.5]);
}

#[test]
fn extra_chunks_are_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let plain = dir.path().join("plain.wav");
    write_int(&plain, 1, 16, &[vec![1000], vec![-1000], vec![5]]);
    let bytes = fs::read(&plain).unwrap();
    // Insert a LIST chunk between "fmt " and "data".
    let data_at = bytes.windows(4).position(|w| w == b"data").unwrap();
    let mut chunk = b"LIST".to_vec();
    chunk.extend_from_slice(&6u32.to_le_bytes());
    chunk.extend_from_slice(b"INFOab");
    let mut out = bytes[..data_at].to_vec();
    out.extend_from_slice(&chunk);
    out.extend_from_slice(&bytes[data_at..]);
    let riff_len = (out.len() - 8) as u32;
    out[4..8].copy_from_slice(&riff_len.to_le_bytes());
    let tagged = dir.path().join("tagged.wav");
    fs::write(&tagged, out).unwrap();
    assert_eq!(load_audio(&tagged).unwrap(), load_audio(&plain).unwrap());
}

#[test]
fn load_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_audio(dir.path().join("none.wav")), Err(Error::Read { .. })));

    let junk = dir.path().join("junk.wav");
    fs::write(&junk, b"not a wave file at all").unwrap();
    assert!(load_audio(&junk).is_err());

    let empty = dir.path().join("empty.wav");
    write_int(&empty, 1, 16, &[]);
    assert!(matches!(load_audio(&empty), Err(Error::EmptyAudio { .. })));

    let p8 = dir.path().join("eight.wav");
    write_int(&p8, 1, 8, &[vec![3]]);
    assert!(matches!(load_audio(&p8), Err(Error::UnsupportedFormat { .. })));
}

#[test]
fn resampled_sine_keeps_its_frequency() {
    let rate = 48_000;
    let f = 1_000.0;
    let x: Vec<f64> = (0..48_000)
        .map(|n| (2.0 * std::f64::consts::PI * f * n as f64 / rate as f64).sin())
        .collect();
    let y = resample(&AudioClip::new(x, rate).unwrap(), 44_100).unwrap();
    assert_eq!(y.len(), 44_100);
    // Away from the edges the output is the same sine sampled at 44.1 kHz.
    let worst = (1_000..43_000)
        .map(|n| (y.samples()[n] - (2.0 * std::f64::consts::PI * f * n as f64 / 44_100.0).sin()).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-3, "max deviation {worst}");
}

#[test]
fn resampling_scales_echo_lag() {
    let marked = embed_single_echo(&white_noise(441_000, 44_100, 5), &EchoKey::new(100, 0.4).unwrap()).unwrap();
    let detector = SingleEchoDetector::with_band(Band::new(25, 170).unwrap());
    // 44.1 kHz -> 55.125 kHz, read back as 44.1 kHz.
    let slowed = resample(&marked, 55_125).unwrap().with_sample_rate(44_100).unwrap();
    assert_eq!(detector.detect(&slowed, None).unwrap().argmax_lag, 125);
    let raised = pitch_shift(&marked, 1.25).unwrap();
    assert_eq!(detector.detect(&raised, None).unwrap().argmax_lag, 80);
}

#[test]
fn mix_matches_direct_sum() {
    let clips: Vec<AudioClip> = (0..3).map(|i| white_noise(1_000 + 10 * i, 8_000, i as u64)).collect();
    let third = 1.0 / 3.0;
    let out = mix(&clips, &[third; 3]).unwrap();
    assert_eq!(out.len(), 1_020);
    for n in 0..out.len() {
        let expected: f64 = clips.iter().map(|c| third * c.samples().get(n).copied().unwrap_or(0.0)).sum();
        assert!((out.samples()[n] - expected).abs() < 1e-15);
    }
}
