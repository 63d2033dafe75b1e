//! The `echomark` command line.
//!
//! Subcommands: `gen-patterns`, `key`, `embed`, `tag-dataset`, `detect`,
//! `payload` and `evaluate`. Audio is canonicalized to mono at
//! `--sample-rate` (44100 Hz by default) before embedding or detection.
//!
//! # Tagging manifest
//!
//! ```json
//! {
//!   "version": 1,
//!   "keys": "keys.json",
//!   "input_dir": "stems",
//!   "output_dir": "tagged",
//!   "overwrite": false,
//!   "entries": [
//!     {"input": "male/*.wav", "key": "male", "output": "male/{stem}.wav"},
//!     {"input": "female/*.wav", "key": "female", "output": "female/{stem}.wav"}
//!   ]
//! }
//! ```
//!
//! `keys` is optional; without it every entry `key` is a full reference
//! (`path` or `path#id`). Directories resolve against the manifest and
//! default to its own directory. Output rules accept `{stem}`, `{name}` and
//! `{key}`. Existing outputs are skipped unless `overwrite` is true. A
//! lockfile `echomark.lock.json` in the output directory lists every output
//! with its key id and fingerprint.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::audio::{load_audio_with_format, resample, save_audio, AudioClip, WavFormat, CANONICAL_RATE};
use crate::bits;
use crate::detect::{Band, DetectionReport, SingleEchoDetector, SpreadDetector};
use crate::embed::{embed, EchoKey, Key, SpreadKey, DEFAULT_ECHO_ALPHA, DEFAULT_SPREAD_ALPHA, DEFAULT_SPREAD_DELTA};
use crate::eval::config::LoadedConfig;
use crate::keyfile::{key_fingerprint, relative_to, resolve_key_ref, write_key, write_keyring, PatternSetFile};
use crate::patterns::{generate_pattern, generate_pattern_set_with, SpreadCriteria};
use crate::payload::{decode_payload, encode_payload, PayloadConfig};

pub const MANIFEST_VERSION: u32 = 1;
pub const LOCK_FORMAT: &str = "echomark-lock";
pub const LOCKFILE_NAME: &str = "echomark.lock.json";

#[derive(Debug, Parser)]
#[command(name = "echomark", version, about = "Echo-hiding watermarks for audio datasets")]
pub struct Cli {
    /// Seed for every random choice a command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Rate audio is converted to before processing.
    #[arg(long, global = true, default_value_t = CANONICAL_RATE)]
    pub sample_rate: u32,
    /// Report format on standard output.
    #[arg(long, global = true, value_enum, default_value_t = ReportFormat::Json)]
    pub format: ReportFormat,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BitDepth {
    Float32,
    Pcm16,
    /// pcm16 input stays pcm16; everything else is written as float32.
    Source,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DetectMode {
    Single,
    Spread,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KeyType {
    Single,
    Spread,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a set of spread-echo patterns with well-spread pairwise distances.
    GenPatterns {
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long, default_value_t = 1024)]
        length: usize,
        #[arg(short, long)]
        out: PathBuf,
        /// Also write a keyring with one spread key per pattern (ids p0, p1, ...).
        #[arg(long)]
        keys_out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SPREAD_ALPHA)]
        alpha: f64,
        #[arg(long, default_value_t = DEFAULT_SPREAD_DELTA)]
        delta: usize,
    },
    /// Write a key file.
    Key {
        #[arg(long = "type", value_enum, default_value_t = KeyType::Single)]
        kind: KeyType,
        #[arg(long)]
        delta: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Pattern length for a fresh spread key.
        #[arg(long, default_value_t = 1024)]
        length: usize,
        /// Take the spread pattern from a pattern-set file instead of generating one.
        #[arg(long)]
        patterns: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Embed a watermark into one file.
    Embed {
        input: PathBuf,
        output: PathBuf,
        /// Key reference: `path` or `path#id`.
        #[arg(long)]
        key: String,
        /// Keep the file's own sample rate.
        #[arg(long)]
        no_resample: bool,
        #[arg(long, value_enum, default_value_t = BitDepth::Float32)]
        bit_depth: BitDepth,
    },
    /// Embed watermarks into every file listed by a manifest.
    TagDataset {
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = BitDepth::Float32)]
        bit_depth: BitDepth,
    },
    /// Measure a watermark and print a report.
    Detect {
        input: PathBuf,
        /// Key reference; required for spread detection.
        #[arg(long)]
        key: Option<String>,
        /// Defaults to the key's type, or single without a key.
        #[arg(long, value_enum)]
        mode: Option<DetectMode>,
        /// Single-echo search band as `start,end` (inclusive).
        #[arg(long, value_parser = parse_band)]
        band: Option<Band>,
        /// Use the neighbour-subtracted spread correlation.
        #[arg(long)]
        enhanced: bool,
        /// Include the full z-score profile in JSON output.
        #[arg(long)]
        profile: bool,
    },
    /// Windowed two-echo payload codec.
    Payload {
        #[command(subcommand)]
        action: PayloadAction,
    },
    /// Run an experiment config and write results.csv and summary.json.
    Evaluate { config: PathBuf },
}

#[derive(Debug, Args)]
pub struct PayloadArgs {
    #[arg(long, default_value_t = 50)]
    pub delta0: usize,
    #[arg(long, default_value_t = 75)]
    pub delta1: usize,
    #[arg(long, default_value_t = DEFAULT_ECHO_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1024)]
    pub window: usize,
}

impl PayloadArgs {
    fn config(&self) -> PayloadConfig {
        PayloadConfig {
            delta0: self.delta0,
            delta1: self.delta1,
            alpha: self.alpha,
            window: self.window,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum PayloadAction {
    /// Hide hex-encoded bits in a file.
    Encode {
        input: PathBuf,
        output: PathBuf,
        /// MSB-first hex.
        #[arg(long)]
        bits: String,
        /// Bit count; defaults to four per hex digit.
        #[arg(long)]
        n_bits: Option<usize>,
        #[arg(long, value_enum, default_value_t = BitDepth::Float32)]
        bit_depth: BitDepth,
        #[command(flatten)]
        codec: PayloadArgs,
    },
    /// Recover bits and print them as hex.
    Decode {
        input: PathBuf,
        #[arg(long)]
        n_bits: usize,
        #[command(flatten)]
        codec: PayloadArgs,
    },
}

fn parse_band(s: &str) -> Result<Band, String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected start,end but got '{s}'"))?;
    let a = a.trim().parse().map_err(|e| format!("band start: {e}"))?;
    let b = b.trim().parse().map_err(|e| format!("band end: {e}"))?;
    Band::new(a, b).map_err(|e| e.to_string())
}

/// Parses arguments and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            1
        }
    }
}

/// The error chain, leaving out causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = e.to_string();
    for cause in e.chain().skip(1) {
        let text = cause.to_string();
        if !out.contains(&text) {
            out = format!("{out}: {text}");
        }
    }
    out
}

pub fn run(cli: &Cli) -> anyhow::Result<i32> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            bail!("--jobs must be at least 1");
        }
        pool = pool.num_threads(jobs);
    }
    let pool = pool.build()?;
    pool.install(|| dispatch(cli))
}

fn dispatch(cli: &Cli) -> anyhow::Result<i32> {
    match &cli.command {
        Command::GenPatterns {
            count,
            length,
            out,
            keys_out,
            alpha,
            delta,
        } => cmd_gen_patterns(*count, *length, cli.seed, out, keys_out.as_deref(), *alpha, *delta),
        Command::Key {
            kind,
            delta,
            alpha,
            length,
            patterns,
            index,
            out,
        } => cmd_key(*kind, *delta, *alpha, *length, patterns.as_deref(), *index, cli.seed, out),
        Command::Embed {
            input,
            output,
            key,
            no_resample,
            bit_depth,
        } => {
            let rate = (!no_resample).then_some(cli.sample_rate);
            let report = cmd_embed(input, output, key, rate, *bit_depth)?;
            if report.clipped > 0 {
                eprintln!("warning: {} samples clipped", report.clipped);
            }
            Ok(0)
        }
        Command::TagDataset { manifest, bit_depth } => {
            let summary = cmd_tag_dataset(manifest, cli.sample_rate, *bit_depth)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(if summary.failed > 0 { 1 } else { 0 })
        }
        Command::Detect {
            input,
            key,
            mode,
            band,
            enhanced,
            profile,
        } => {
            let report = cmd_detect(input, key.as_deref(), *mode, *band, *enhanced, cli.sample_rate)?;
            let mut stdout = std::io::stdout().lock();
            match cli.format {
                ReportFormat::Json => {
                    writeln!(stdout, "{}", serde_json::to_string_pretty(&report_json(&report, *profile))?)?
                }
                ReportFormat::Csv => {
                    writeln!(stdout, "{}", DetectionReport::CSV_HEADER)?;
                    writeln!(stdout, "{}", report.csv_row())?;
                }
            }
            Ok(0)
        }
        Command::Payload { action } => match action {
            PayloadAction::Encode {
                input,
                output,
                bits,
                n_bits,
                bit_depth,
                codec,
            } => {
                cmd_payload_encode(input, output, bits, *n_bits, &codec.config(), cli.sample_rate, *bit_depth)?;
                Ok(0)
            }
            PayloadAction::Decode { input, n_bits, codec } => {
                println!("{}", cmd_payload_decode(input, *n_bits, &codec.config(), cli.sample_rate)?);
                Ok(0)
            }
        },
        Command::Evaluate { config } => {
            let (results, summary, _) = cmd_evaluate(config)?;
            eprintln!("wrote {} and {}", results.display(), summary.display());
            Ok(0)
        }
    }
}

/// Loads a file as mono, optionally resampled to `rate`.
pub fn canonicalize(path: &Path, rate: Option<u32>) -> anyhow::Result<(AudioClip, WavFormat)> {
    let (clip, source) = load_audio_with_format(path)?;
    let clip = match rate {
        Some(r) => resample(&clip, r)?,
        None => clip,
    };
    Ok((clip, source.writable()))
}

fn output_format(depth: BitDepth, source: WavFormat) -> WavFormat {
    match depth {
        BitDepth::Float32 => WavFormat::Float32,
        BitDepth::Pcm16 => WavFormat::Pcm16,
        BitDepth::Source => source,
    }
}

/// Writes a pattern-set file, and optionally a keyring of spread keys.
/// Nothing is written when the spread criteria cannot be met.
#[allow(clippy::too_many_arguments)]
pub fn cmd_gen_patterns(
    count: usize,
    length: usize,
    seed: u64,
    out: &Path,
    keys_out: Option<&Path>,
    alpha: f64,
    delta: usize,
) -> anyhow::Result<i32> {
    let criteria = SpreadCriteria::for_set(count, length);
    let set = generate_pattern_set_with(count, length, seed, &criteria)?;
    if !set.criteria_met {
        bail!(
            "no pattern set met the distance criteria within {} attempts; try another --seed",
            criteria.max_attempts
        );
    }
    let keys = keys_out
        .map(|_| {
            set.patterns
                .iter()
                .enumerate()
                .map(|(i, p)| Ok((format!("p{i}"), Key::Spread(SpreadKey::new(p.clone(), alpha, delta)?))))
                .collect::<crate::Result<BTreeMap<_, _>>>()
        })
        .transpose()?;
    PatternSetFile::from_set(&set, criteria).write(out)?;
    if let (Some(path), Some(keys)) = (keys_out, keys) {
        if let Err(e) = write_keyring(path, &keys) {
            let _ = fs::remove_file(out);
            return Err(e.into());
        }
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_key(
    kind: KeyType,
    delta: Option<usize>,
    alpha: Option<f64>,
    length: usize,
    patterns: Option<&Path>,
    index: usize,
    seed: u64,
    out: &Path,
) -> anyhow::Result<i32> {
    let key = match kind {
        KeyType::Single => {
            let delta = delta.ok_or_else(|| anyhow!("--delta is required for a single-echo key"))?;
            Key::Single(EchoKey::new(delta, alpha.unwrap_or(DEFAULT_ECHO_ALPHA))?)
        }
        KeyType::Spread => {
            let pattern = match patterns {
                Some(path) => {
                    let set = PatternSetFile::read(path)?.to_set()?;
                    set.patterns
                        .get(index)
                        .cloned()
                        .ok_or_else(|| anyhow!("{} holds {} patterns", path.display(), set.count()))?
                }
                None => generate_pattern(length, seed)?,
            };
            Key::Spread(SpreadKey::new(
                pattern,
                alpha.unwrap_or(DEFAULT_SPREAD_ALPHA),
                delta.unwrap_or(DEFAULT_SPREAD_DELTA),
            )?)
        }
    };
    write_key(out, &key)?;
    Ok(0)
}

pub fn cmd_embed(
    input: &Path,
    output: &Path,
    key_ref: &str,
    rate: Option<u32>,
    depth: BitDepth,
) -> anyhow::Result<crate::audio::SaveReport> {
    let (_, key) = resolve_key_ref(key_ref)?;
    let (clip, source) = canonicalize(input, rate)?;
    let marked = embed(&clip, &key).with_context(|| format!("embedding into {}", input.display()))?;
    Ok(save_audio(&marked, output, output_format(depth, source))?)
}

pub fn cmd_detect(
    input: &Path,
    key_ref: Option<&str>,
    mode: Option<DetectMode>,
    band: Option<Band>,
    enhanced: bool,
    rate: u32,
) -> anyhow::Result<DetectionReport> {
    let key = key_ref.map(resolve_key_ref).transpose()?;
    let (clip, _) = canonicalize(input, Some(rate))?;
    let clip_id = input
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mode = mode.unwrap_or(match &key {
        Some((_, Key::Spread(_))) => DetectMode::Spread,
        _ => DetectMode::Single,
    });
    let report = match (mode, &key) {
        (DetectMode::Single, key) => {
            let lag = match key {
                Some((_, Key::Single(k))) => Some(k.delta),
                Some((_, Key::Spread(_))) => bail!("single-echo detection needs a single-echo key"),
                None => None,
            };
            let band = band.unwrap_or_default();
            if let Some(lag) = lag.filter(|l| !band.contains(*l)) {
                bail!("key lag {lag} lies outside band [{}, {}]", band.start, band.end);
            }
            SingleEchoDetector::with_band(band).detect(&clip, lag)?
        }
        (DetectMode::Spread, Some((_, Key::Spread(k)))) => SpreadDetector::new(enhanced).detect(&clip, k)?,
        (DetectMode::Spread, _) => bail!("spread detection needs a spread key"),
    };
    let key_id = key.map(|(id, _)| id).unwrap_or_default();
    Ok(report.with_ids(clip_id, key_id))
}

fn report_json(report: &DetectionReport, with_profile: bool) -> serde_json::Value {
    let mut v = serde_json::to_value(report).expect("report serializes");
    let band = json!([report.profile.band.start, report.profile.band.end]);
    if let Some(obj) = v.as_object_mut() {
        if !with_profile {
            obj.remove("profile");
        }
        obj.insert("band".into(), band);
    }
    v
}

pub fn cmd_payload_encode(
    input: &Path,
    output: &Path,
    hex: &str,
    n_bits: Option<usize>,
    config: &PayloadConfig,
    rate: u32,
    depth: BitDepth,
) -> anyhow::Result<()> {
    let n = n_bits.unwrap_or_else(|| hex.trim().trim_start_matches("0x").len() * 4);
    let bits = bits::from_hex(hex, n)?;
    let (clip, source) = canonicalize(input, Some(rate))?;
    let out = encode_payload(&clip, &bits, config)?;
    save_audio(&out, output, output_format(depth, source))?;
    Ok(())
}

pub fn cmd_payload_decode(input: &Path, n_bits: usize, config: &PayloadConfig, rate: u32) -> anyhow::Result<String> {
    let (clip, _) = canonicalize(input, Some(rate))?;
    Ok(bits::to_hex(&decode_payload(&clip, config, n_bits)?))
}

pub fn cmd_evaluate(config: &Path) -> anyhow::Result<(PathBuf, PathBuf, serde_json::Value)> {
    let cfg = LoadedConfig::read(config)?;
    let problems = cfg.problems();
    if !problems.is_empty() {
        let list: Vec<String> = problems.iter().map(|p| format!("  - {p}")).collect();
        bail!("{} has {} problem(s):\n{}", config.display(), problems.len(), list.join("\n"));
    }
    Ok(cfg.run_and_write()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    #[serde(default)]
    pub keys: Option<String>,
    #[serde(default)]
    pub input_dir: Option<String>,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub overwrite: bool,
    #[serde(default)]
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    /// File path or glob relative to `input_dir`.
    pub input: String,
    pub key: String,
    /// Output path rule relative to `output_dir`.
    #[serde(default = "default_output_rule")]
    pub output: String,
}

fn default_output_rule() -> String {
    "{stem}.wav".into()
}

/// One resolved unit of tagging work.
#[derive(Debug, Clone)]
pub struct TagJob {
    pub input: PathBuf,
    pub output: PathBuf,
    pub key_id: String,
    pub key: Key,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LockEntry {
    pub input: String,
    pub output: String,
    pub key_id: String,
    pub key_fingerprint: String,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagSummary {
    pub processed: usize,
    pub skipped: usize,
    pub failed: usize,
    pub clipped_samples: usize,
    pub lockfile: Option<String>,
    pub failures: Vec<String>,
}

fn expand_rule(rule: &str, input: &Path, key_id: &str) -> String {
    let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = input.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    rule.replace("{stem}", &stem).replace("{name}", &name).replace("{key}", key_id)
}

/// Lexical normalization so `a/./b` and `a/b` compare equal.
fn normalize(path: &Path) -> PathBuf {
    let mut out = PathBuf::new();
    for part in path.components() {
        match part {
            std::path::Component::CurDir => {}
            std::path::Component::ParentDir if out.file_name().is_some() => {
                out.pop();
            }
            other => out.push(other),
        }
    }
    out
}

/// Expands a manifest into jobs, rejecting any conflict before work starts.
pub fn resolve_manifest(path: &Path) -> anyhow::Result<(Manifest, Vec<TagJob>, PathBuf)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let manifest: Manifest =
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
    if manifest.version != MANIFEST_VERSION {
        bail!("manifest version {} unsupported (expected {MANIFEST_VERSION})", manifest.version);
    }
    let input_dir = relative_to(path, manifest.input_dir.as_deref().unwrap_or("."));
    let output_dir = relative_to(path, manifest.output_dir.as_deref().unwrap_or("."));

    let mut problems = Vec::new();
    let mut jobs = Vec::new();
    for (i, entry) in manifest.entries.iter().enumerate() {
        let reference = match &manifest.keys {
            Some(keys) => format!("{}#{}", relative_to(path, keys).display(), entry.key),
            None => relative_to(path, &entry.key).to_string_lossy().into_owned(),
        };
        let (key_id, key) = match resolve_key_ref(&reference) {
            Ok(k) => k,
            Err(e) => {
                problems.push(format!("entries[{i}].key: {e}"));
                continue;
            }
        };
        let pattern = input_dir.join(&entry.input);
        let inputs: Vec<PathBuf> = match glob::glob(&pattern.to_string_lossy()) {
            Ok(paths) => {
                let mut v: Vec<PathBuf> = paths.filter_map(|p| p.ok()).filter(|p| p.is_file()).collect();
                v.sort();
                v
            }
            Err(e) => {
                problems.push(format!("entries[{i}].input: {e}"));
                continue;
            }
        };
        if inputs.is_empty() {
            problems.push(format!("entries[{i}].input: '{}' matches no files", entry.input));
        }
        for input in inputs {
            let output = normalize(&output_dir.join(expand_rule(&entry.output, &input, &key_id)));
            jobs.push(TagJob {
                input: normalize(&input),
                output,
                key_id: key_id.clone(),
                key: key.clone(),
            });
        }
    }

    let inputs: BTreeSet<&Path> = jobs.iter().map(|j| j.input.as_path()).collect();
    let mut seen: BTreeMap<&Path, &Path> = BTreeMap::new();
    for job in &jobs {
        if let Some(previous) = seen.insert(&job.output, &job.input) {
            problems.push(format!(
                "output {} produced by both {} and {}",
                job.output.display(),
                previous.display(),
                job.input.display()
            ));
        }
        if inputs.contains(job.output.as_path()) {
            problems.push(format!("output {} would overwrite an input file", job.output.display()));
        }
    }
    if !problems.is_empty() {
        bail!("manifest {} rejected:\n  - {}", path.display(), problems.join("\n  - "));
    }
    Ok((manifest, jobs, output_dir))
}

/// Embeds every manifest entry. Failures are collected, not fatal.
pub fn cmd_tag_dataset(manifest_path: &Path, rate: u32, depth: BitDepth) -> anyhow::Result<TagSummary> {
    let (manifest, jobs, output_dir) = resolve_manifest(manifest_path)?;
    if jobs.is_empty() {
        return Ok(TagSummary {
            processed: 0,
            skipped: 0,
            failed: 0,
            clipped_samples: 0,
            lockfile: None,
            failures: Vec::new(),
        });
    }

    enum Outcome {
        Written(usize),
        Skipped,
        Failed(String),
    }
    let outcomes: Vec<Outcome> = jobs
        .par_iter()
        .map(|job| {
            if job.output.exists() && !manifest.overwrite {
                return Outcome::Skipped;
            }
            let result = (|| -> anyhow::Result<usize> {
                if let Some(parent) = job.output.parent() {
                    fs::create_dir_all(parent)?;
                }
                let (clip, source) = canonicalize(&job.input, Some(rate))?;
                let marked = embed(&clip, &job.key)?;
                Ok(save_audio(&marked, &job.output, output_format(depth, source))?.clipped)
            })();
            match result {
                Ok(clipped) => Outcome::Written(clipped),
                Err(e) => Outcome::Failed(format!("{}: {}", job.input.display(), describe(&e))),
            }
        })
        .collect();

    let mut summary = TagSummary {
        processed: 0,
        skipped: 0,
        failed: 0,
        clipped_samples: 0,
        lockfile: None,
        failures: Vec::new(),
    };
    let mut lock = Vec::with_capacity(jobs.len());
    for (job, outcome) in jobs.iter().zip(outcomes) {
        let status = match outcome {
            Outcome::Written(clipped) => {
                summary.processed += 1;
                summary.clipped_samples += clipped;
                "written"
            }
            Outcome::Skipped => {
                summary.skipped += 1;
                "skipped"
            }
            Outcome::Failed(msg) => {
                summary.failed += 1;
                summary.failures.push(msg);
                "failed"
            }
        };
        lock.push(LockEntry {
            input: job.input.to_string_lossy().into_owned(),
            output: job.output.to_string_lossy().into_owned(),
            key_id: job.key_id.clone(),
            key_fingerprint: key_fingerprint(&job.key),
            status: status.into(),
        });
    }
    lock.sort_by(|a, b| a.output.cmp(&b.output));
    fs::create_dir_all(&output_dir)?;
    let lock_path = output_dir.join(LOCKFILE_NAME);
    let doc = json!({"format": LOCK_FORMAT, "version": MANIFEST_VERSION, "entries": lock});
    fs::write(&lock_path, serde_json::to_string_pretty(&doc)? + "\n")
        .with_context(|| format!("writing {}", lock_path.display()))?;
    summary.lockfile = Some(lock_path.to_string_lossy().into_owned());
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_argument() {
        assert_eq!(parse_band("25,170").unwrap(), Band::new(25, 170).unwrap());
        assert!(parse_band("170,25").is_err());
        assert!(parse_band("25").is_err());
    }

    #[test]
    fn output_rules() {
        let p = Path::new("/data/male/a1.wav");
        assert_eq!(expand_rule("{key}/{stem}_t.wav", p, "m"), "m/a1_t.wav");
        assert_eq!(expand_rule("{name}", p, "m"), "a1.wav");
    }

    #[test]
    fn normalizes_dots() {
        assert_eq!(normalize(Path::new("a/./b/../c.wav")), PathBuf::from("a/c.wav"));
    }

    #[test]
    fn cli_parses_global_flags_anywhere() {
        let cli = Cli::try_parse_from(["echomark", "detect", "x.wav", "--format", "csv", "--seed", "4"]).unwrap();
        assert_eq!(cli.format, ReportFormat::Csv);
        assert_eq!(cli.seed, 4);
        assert_eq!(cli.sample_rate, 44_100);
    }
}
