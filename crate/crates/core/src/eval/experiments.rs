//! Desk-scale reproductions of the evaluation protocol.
//!
//! Every cell (clip x duration x segment x variant) is independent and
//! seeded from the experiment seed and its indices, so results are
//! identical regardless of how rayon schedules them.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::channel::{apply_channel, derive_seed, ChannelSpec};
use super::roc::{roc, RocResult};
use super::stats::{median, null_stats, NullStats};
use crate::audio::AudioClip;
use crate::detect::{csv_field, Band, DetectionReport, SingleEchoDetector, SpreadDetector};
use crate::dsp::real_cepstrum;
use crate::embed::{embed, EchoKey, Key, SpreadKey};
use crate::error::{Error, Result};
use crate::patterns::flip_bits;

/// A named corpus clip.
#[derive(Debug, Clone)]
pub struct CorpusClip {
    pub id: String,
    pub clip: AudioClip,
}

impl CorpusClip {
    pub fn new(id: impl Into<String>, clip: AudioClip) -> Self {
        Self { id: id.into(), clip }
    }
}

/// Runs the key-appropriate detector, scoring the key's lag.
pub fn detect_with_key(clip: &AudioClip, key: &Key, band: Band, enhanced: bool) -> Result<DetectionReport> {
    match key {
        Key::Single(k) => SingleEchoDetector::with_band(band).detect(clip, Some(k.delta)),
        Key::Spread(k) => SpreadDetector::new(enhanced).detect(clip, k),
    }
}

/// Uniform segment start for one cell.
fn segment_start(clip_len: usize, seg_len: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.random_range(0..=clip_len - seg_len)
}

fn seconds_to_samples(seconds: f64, rate: u32) -> usize {
    (seconds * rate as f64).round() as usize
}

fn require_length(corpus: &[CorpusClip], seconds: f64) -> Result<()> {
    for c in corpus {
        if c.clip.len() < seconds_to_samples(seconds, c.clip.sample_rate()) {
            return Err(Error::ClipTooShort {
                detail: format!(
                    "corpus clip '{}' lasts {:.3} s, shorter than the requested {seconds} s",
                    c.id,
                    c.clip.duration_seconds()
                ),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub durations: Vec<f64>,
    pub segments_per_clip: usize,
    pub channel: ChannelSpec,
    pub band: Band,
    pub enhanced: bool,
    /// Adds an unembedded twin of every cell for null calibration.
    pub include_clean: bool,
    pub seed: u64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            durations: vec![5.0, 10.0, 30.0, 60.0],
            segments_per_clip: 1,
            channel: ChannelSpec::identity(),
            band: Band::SINGLE_ECHO,
            enhanced: false,
            include_clean: false,
            seed: 0,
        }
    }
}

/// One detection in a duration sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cell: usize,
    pub clip_id: String,
    pub key_id: String,
    pub duration: f64,
    pub segment: usize,
    pub start: usize,
    pub embedded: bool,
    pub report: DetectionReport,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str =
        "cell,clip_id,key_id,duration,segment,start,embedded,argmax_lag,z_at_key,degenerate";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.cell,
            csv_field(&self.clip_id),
            csv_field(&self.key_id),
            self.duration,
            self.segment,
            self.start,
            self.embedded,
            self.report.argmax_lag,
            self.report.z_at_key.map(|z| z.to_string()).unwrap_or_default(),
            self.report.degenerate
        )
    }
}

/// Random segments of each duration are embedded (attenuated by the
/// channel's echo gain), passed through the channel and detected.
pub fn run_duration_sweep(
    corpus: &[CorpusClip],
    key: &Key,
    key_id: &str,
    opts: &SweepOptions,
) -> Result<Vec<SweepRow>> {
    key.validate()?;
    opts.channel.validate()?;
    if let Some(max) = opts.durations.iter().copied().reduce(f64::max) {
        require_length(corpus, max)?;
    }
    if opts.durations.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(Error::InvalidArgument("durations must be positive".into()));
    }
    let gained = key.with_alpha(key.alpha() * opts.channel.echo_gain());
    let variants: &[bool] = if opts.include_clean { &[true, false] } else { &[true] };

    let mut cells = Vec::new();
    for ci in 0..corpus.len() {
        for (di, &d) in opts.durations.iter().enumerate() {
            for s in 0..opts.segments_per_clip {
                let pair = ((ci * opts.durations.len() + di) * opts.segments_per_clip + s) as u64;
                for &embedded in variants {
                    cells.push((ci, d, s, pair, embedded));
                }
            }
        }
    }

    cells
        .par_iter()
        .enumerate()
        .map(|(cell, &(ci, duration, segment, pair, embedded))| {
            let c = &corpus[ci];
            let len = seconds_to_samples(duration, c.clip.sample_rate());
            let start = segment_start(c.clip.len(), len, derive_seed(opts.seed, pair));
            let seg = c.clip.segment(start, len)?;
            let marked = if embedded { embed(&seg, &gained)? } else { seg };
            let channel = opts.channel.with_seed(derive_seed(opts.channel.seed ^ opts.seed, pair));
            let heard = apply_channel(&marked, &channel)?;
            let report = detect_with_key(&heard, key, opts.band, opts.enhanced)?.with_ids(&c.id, key_id);
            Ok(SweepRow {
                cell,
                clip_id: c.id.clone(),
                key_id: key_id.to_string(),
                duration,
                segment,
                start,
                embedded,
                report,
            })
        })
        .collect()
}

/// Per-duration aggregate of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationSummary {
    pub duration: f64,
    pub segments: usize,
    pub median_z_embedded: Option<f64>,
    pub argmax_hit_rate: Option<f64>,
    pub null: Option<NullStats>,
    /// Embedded vs clean z at the key lag.
    pub auroc_vs_clean: Option<f64>,
}

pub fn summarize_sweep(rows: &[SweepRow], durations: &[f64]) -> Vec<DurationSummary> {
    durations
        .iter()
        .map(|&d| {
            let z = |embedded: bool| -> Vec<f64> {
                rows.iter()
                    .filter(|r| r.duration == d && r.embedded == embedded)
                    .filter_map(|r| r.report.z_at_key)
                    .collect()
            };
            let (emb, clean) = (z(true), z(false));
            let emb_rows: Vec<&SweepRow> = rows.iter().filter(|r| r.duration == d && r.embedded).collect();
            let hits = emb_rows
                .iter()
                .filter(|r| Some(r.report.argmax_lag) == r.report.key_lag)
                .count();
            DurationSummary {
                duration: d,
                segments: emb_rows.len(),
                median_z_embedded: median(&emb),
                argmax_hit_rate: (!emb_rows.is_empty()).then(|| hits as f64 / emb_rows.len() as f64),
                null: null_stats(&clean),
                auroc_vs_clean: roc(&emb, &clean).ok().map(|r| r.auroc),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitflipOptions {
    pub duration: f64,
    pub segments_per_clip: usize,
    pub flips: Vec<usize>,
    pub channel: ChannelSpec,
    pub enhanced: bool,
    pub seed: u64,
}

/// One z-score in a bit-flip experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitflipRow {
    pub cell: usize,
    pub clip_id: String,
    pub segment: usize,
    pub start: usize,
    pub embedded: bool,
    /// Bits flipped in the detection template (0 = the true pattern).
    pub flips: usize,
    pub z: f64,
}

impl BitflipRow {
    pub const CSV_HEADER: &'static str = "cell,clip_id,segment,start,embedded,flips,z";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.cell,
            csv_field(&self.clip_id),
            self.segment,
            self.start,
            self.embedded,
            self.flips,
            self.z
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitflipResult {
    pub rows: Vec<BitflipRow>,
    /// ROC of true-pattern z against perturbed-pattern z, per flip count.
    pub curve: Vec<(usize, RocResult)>,
    /// ROC of true-pattern z on embedded against unembedded segments.
    pub clean: RocResult,
}

impl BitflipResult {
    pub fn aurocs(&self) -> Vec<f64> {
        self.curve.iter().map(|(_, r)| r.auroc).collect()
    }
}

fn z_or_degenerate(report: &DetectionReport) -> Result<f64> {
    report.z_at_key.ok_or_else(|| Error::InvalidArgument("degenerate z-score profile".into()))
}

/// z with `p` against z with `p'` (k bits flipped) on the same segments,
/// plus z with `p` on clean segments.
pub fn run_bitflip_curve(corpus: &[CorpusClip], key: &SpreadKey, opts: &BitflipOptions) -> Result<BitflipResult> {
    key.validate()?;
    opts.channel.validate()?;
    require_length(corpus, opts.duration)?;
    if let Some(&k) = opts.flips.iter().find(|&&k| k > key.len()) {
        return Err(Error::InvalidArgument(format!(
            "cannot flip {k} bits of a {}-bit pattern",
            key.len()
        )));
    }
    let gained = SpreadKey {
        alpha: key.alpha * opts.channel.echo_gain(),
        ..key.clone()
    };
    let detector = SpreadDetector::new(opts.enhanced);

    let cells: Vec<(usize, usize)> = (0..corpus.len())
        .flat_map(|ci| (0..opts.segments_per_clip).map(move |s| (ci, s)))
        .collect();
    let per_cell: Vec<Vec<BitflipRow>> = cells
        .par_iter()
        .enumerate()
        .map(|(cell, &(ci, segment))| {
            let c = &corpus[ci];
            let pair = cell as u64;
            let len = seconds_to_samples(opts.duration, c.clip.sample_rate());
            let start = segment_start(c.clip.len(), len, derive_seed(opts.seed, pair));
            let seg = c.clip.segment(start, len)?;
            let channel = opts.channel.with_seed(derive_seed(opts.channel.seed ^ opts.seed, pair));
            let row = |embedded, flips, z| BitflipRow {
                cell,
                clip_id: c.id.clone(),
                segment,
                start,
                embedded,
                flips,
                z,
            };

            let heard = apply_channel(&embed(&seg, &Key::Spread(gained.clone()))?, &channel)?;
            let cep = real_cepstrum(&heard)?;
            let dur = heard.duration_seconds();
            let mut rows = Vec::with_capacity(opts.flips.len() + 2);
            rows.push(row(true, 0, z_or_degenerate(&detector.detect_cepstrum(&cep, key, dur)?)?));
            for (fi, &k) in opts.flips.iter().enumerate() {
                let perturbed = flip_bits(&key.pattern, k, derive_seed(opts.seed ^ 0xF11F, pair * 1024 + fi as u64))?;
                let report = detector.detect_cepstrum(&cep, &key.with_pattern(perturbed), dur)?;
                rows.push(row(true, k, z_or_degenerate(&report)?));
            }
            let clean = apply_channel(&seg, &channel)?;
            let report = detector.detect(&clean, key)?;
            rows.push(row(false, 0, z_or_degenerate(&report)?));
            Ok(rows)
        })
        .collect::<Result<_>>()?;

    // Row 0 of each cell is the true pattern, then one row per flip count, then clean.
    let true_z: Vec<f64> = per_cell.iter().map(|r| r[0].z).collect();
    let clean_z: Vec<f64> = per_cell.iter().map(|r| r[r.len() - 1].z).collect();
    let curve = opts
        .flips
        .iter()
        .enumerate()
        .map(|(fi, &k)| {
            let false_z: Vec<f64> = per_cell.iter().map(|r| r[fi + 1].z).collect();
            Ok((k, roc(&true_z, &false_z)?))
        })
        .collect::<Result<_>>()?;
    let clean = roc(&true_z, &clean_z)?;
    Ok(BitflipResult {
        rows: per_cell.into_iter().flatten().collect(),
        curve,
        clean,
    })
}

/// A held-out clip and the group whose key tags it.
#[derive(Debug, Clone)]
pub struct TaggingClip {
    pub id: String,
    pub group: String,
    pub clip: AudioClip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggingRow {
    pub clip_id: String,
    pub group: String,
    pub tested_key: String,
    pub delta: usize,
    pub z: Option<f64>,
}

impl TaggingRow {
    pub const CSV_HEADER: &'static str = "clip_id,group,tested_key,delta,z";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            csv_field(&self.clip_id),
            csv_field(&self.group),
            csv_field(&self.tested_key),
            self.delta,
            self.z.map(|z| z.to_string()).unwrap_or_default()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: String,
    pub clips: usize,
    pub median_z_own: Option<f64>,
    pub median_z_other: Option<f64>,
    /// Clips whose own-key z beats every other key's z.
    pub own_wins_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggingReport {
    pub rows: Vec<TaggingRow>,
    pub groups: Vec<GroupSummary>,
}

/// Tags each holdout clip with its group's echo, applies the channel and
/// scores the clip at every group's lag.
pub fn run_tagging_experiment(
    keys: &BTreeMap<String, EchoKey>,
    holdout: &[TaggingClip],
    channel: &ChannelSpec,
    band: Band,
    seed: u64,
) -> Result<TaggingReport> {
    channel.validate()?;
    for (id, k) in keys {
        k.validate().map_err(|e| Error::InvalidKey(format!("{id}: {e}")))?;
        if !band.contains(k.delta) {
            return Err(Error::InvalidArgument(format!(
                "key '{id}' lag {} outside band [{}, {}]",
                k.delta, band.start, band.end
            )));
        }
    }
    if let Some(h) = holdout.iter().find(|h| !keys.contains_key(&h.group)) {
        return Err(Error::InvalidKey(format!(
            "clip '{}' names unknown group '{}'",
            h.id, h.group
        )));
    }
    let gain = channel.echo_gain();
    let detector = SingleEchoDetector::with_band(band);
    let per_clip: Vec<Vec<TaggingRow>> = holdout
        .par_iter()
        .enumerate()
        .map(|(i, h)| {
            let own = keys[&h.group];
            let tagged = embed(&h.clip, &Key::Single(EchoKey { alpha: own.alpha * gain, ..own }))?;
            let heard = apply_channel(&tagged, &channel.with_seed(derive_seed(channel.seed ^ seed, i as u64)))?;
            let report = detector.detect(&heard, None)?;
            Ok(keys
                .iter()
                .map(|(id, k)| TaggingRow {
                    clip_id: h.id.clone(),
                    group: h.group.clone(),
                    tested_key: id.clone(),
                    delta: k.delta,
                    z: report.profile.z_at(k.delta),
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let groups = keys
        .keys()
        .filter_map(|g| {
            let clips: Vec<&Vec<TaggingRow>> = per_clip
                .iter()
                .filter(|rows| rows.first().is_some_and(|r| &r.group == g))
                .collect();
            if clips.is_empty() {
                return None;
            }
            let own: Vec<f64> = clips
                .iter()
                .flat_map(|rows| rows.iter().filter(|r| &r.tested_key == g).filter_map(|r| r.z))
                .collect();
            let other: Vec<f64> = clips
                .iter()
                .flat_map(|rows| rows.iter().filter(|r| &r.tested_key != g).filter_map(|r| r.z))
                .collect();
            let wins = clips
                .iter()
                .filter(|rows| {
                    let own = rows.iter().find(|r| &r.tested_key == g).and_then(|r| r.z);
                    let best_other = rows
                        .iter()
                        .filter(|r| &r.tested_key != g)
                        .filter_map(|r| r.z)
                        .reduce(f64::max);
                    match (own, best_other) {
                        (Some(o), Some(b)) => o > b,
                        (Some(_), None) => true,
                        _ => false,
                    }
                })
                .count();
            Some(GroupSummary {
                group: g.clone(),
                clips: clips.len(),
                median_z_own: median(&own),
                median_z_other: median(&other),
                own_wins_fraction: Some(wins as f64 / clips.len() as f64),
            })
        })
        .collect();
    Ok(TaggingReport {
        rows: per_clip.into_iter().flatten().collect(),
        groups,
    })
}
