//! JSON experiment configs and their result files.
//!
//! ```json
//! {
//!   "version": 1,
//!   "experiment": "duration_sweep",
//!   "corpus": {"glob": "stems/*.wav"},
//!   "key": "keys.json#k75",
//!   "channel": {"kind": "additive_noise", "snr_db": 20, "seed": 3},
//!   "durations": [5, 10, 30, 60],
//!   "segments": 20,
//!   "include_clean": true,
//!   "seed": 1,
//!   "output_dir": "out"
//! }
//! ```
//!
//! `experiment` is one of `duration_sweep`, `bitflip` (needs `duration`,
//! `flips` and a spread key) or `tagging` (needs `groups`, each with a
//! `name`, a single-echo `key` and a `corpus`). A corpus is either
//! `{"glob": …}` or `{"synthetic": {"kind": "noise"|"music", "count": n,
//! "seconds": s, "seed": k}}`. Relative paths resolve against the config
//! file's directory. Outputs are `results.csv` and `summary.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::channel::{derive_seed, ChannelSpec};
use super::experiments::{
    run_bitflip_curve, run_duration_sweep, run_tagging_experiment, summarize_sweep, BitflipOptions,
    BitflipRow, CorpusClip, SweepOptions, SweepRow, TaggingClip, TaggingRow,
};
use crate::audio::{load_audio, resample, CANONICAL_RATE};
use crate::detect::Band;
use crate::embed::Key;
use crate::error::{Error, Result};
use crate::keyfile::{relative_to, resolve_key_ref};
use crate::signals::{synth_music, white_noise_seconds};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    DurationSweep,
    Bitflip,
    Tagging,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticKind {
    Noise,
    Music,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticCorpus {
    pub kind: SyntheticKind,
    pub count: usize,
    pub seconds: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CorpusSpec {
    Glob { glob: String },
    Synthetic { synthetic: SyntheticCorpus },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub name: String,
    pub key: String,
    pub corpus: CorpusSpec,
}

fn default_segments() -> usize {
    1
}

fn default_channel() -> ChannelSpec {
    ChannelSpec::identity()
}

fn default_rate() -> u32 {
    CANONICAL_RATE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub version: u32,
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub corpus: Option<CorpusSpec>,
    #[serde(default)]
    pub key: Option<String>,
    #[serde(default = "default_channel")]
    pub channel: ChannelSpec,
    #[serde(default)]
    pub durations: Vec<f64>,
    #[serde(default)]
    pub duration: Option<f64>,
    #[serde(default = "default_segments")]
    pub segments: usize,
    #[serde(default)]
    pub flips: Vec<usize>,
    #[serde(default)]
    pub include_clean: bool,
    #[serde(default)]
    pub band: Option<[usize; 2]>,
    #[serde(default)]
    pub enhanced: bool,
    #[serde(default)]
    pub groups: Vec<GroupSpec>,
    #[serde(default = "default_rate")]
    pub sample_rate: u32,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: String,
}

/// A parsed config plus the file it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub config: EvalConfig,
}

impl LoadedConfig {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let text = fs::read_to_string(&path).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        let config = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.clone(),
            source,
        })?;
        Ok(Self { path, config })
    }

    fn resolve(&self, relative: &str) -> PathBuf {
        relative_to(&self.path, relative)
    }

    fn resolve_key(&self, reference: &str) -> Result<(String, Key)> {
        let (path, id) = match reference.rsplit_once('#') {
            Some((p, id)) => (p, Some(id)),
            None => (reference, None),
        };
        let mut full = self.resolve(path).to_string_lossy().into_owned();
        if let Some(id) = id {
            full = format!("{full}#{id}");
        }
        resolve_key_ref(&full)
    }

    pub fn band(&self) -> Result<Band> {
        match self.config.band {
            Some([a, b]) => Band::new(a, b),
            None => Ok(Band::SINGLE_ECHO),
        }
    }

    fn glob_paths(&self, pattern: &str) -> Result<Vec<PathBuf>> {
        let full = self.resolve(pattern);
        let entries = glob::glob(&full.to_string_lossy())
            .map_err(|e| Error::InvalidArgument(format!("bad glob '{pattern}': {e}")))?;
        let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok()).filter(|p| p.is_file()).collect();
        paths.sort();
        Ok(paths)
    }

    fn corpus_problems(&self, spec: &CorpusSpec, path: &str, out: &mut Vec<String>) {
        match spec {
            CorpusSpec::Glob { glob } => match self.glob_paths(glob) {
                Ok(p) if p.is_empty() => out.push(format!("{path}: glob '{glob}' matches no files")),
                Ok(_) => {}
                Err(e) => out.push(format!("{path}: {e}")),
            },
            CorpusSpec::Synthetic { synthetic } => {
                if synthetic.count == 0 {
                    out.push(format!("{path}: synthetic count must be >= 1"));
                }
                if !(synthetic.seconds.is_finite() && synthetic.seconds > 0.0) {
                    out.push(format!("{path}: synthetic seconds must be positive"));
                }
            }
        }
    }

    /// Every problem found in the config; empty when it can run.
    pub fn problems(&self) -> Vec<String> {
        let c = &self.config;
        let mut out = Vec::new();
        if c.version != CONFIG_VERSION {
            out.push(format!("version: {} unsupported (expected {CONFIG_VERSION})", c.version));
        }
        if c.output_dir.trim().is_empty() {
            out.push("output_dir: must not be empty".into());
        }
        if c.sample_rate == 0 {
            out.push("sample_rate: must be positive".into());
        }
        if c.segments == 0 {
            out.push("segments: must be >= 1".into());
        }
        if let Err(e) = self.band() {
            out.push(format!("band: {e}"));
        }
        c.channel.kind.problems("channel", &mut out);

        let key = match (&c.experiment, &c.key) {
            (ExperimentKind::Tagging, _) => None,
            (_, None) => {
                out.push("key: required for this experiment".into());
                None
            }
            (_, Some(r)) => match self.resolve_key(r) {
                Ok((_, k)) => Some(k),
                Err(e) => {
                    out.push(format!("key: {e}"));
                    None
                }
            },
        };
        if c.experiment != ExperimentKind::Tagging {
            match &c.corpus {
                Some(spec) => self.corpus_problems(spec, "corpus", &mut out),
                None => out.push("corpus: required for this experiment".into()),
            }
        }

        match c.experiment {
            ExperimentKind::DurationSweep => {
                if c.durations.is_empty() {
                    out.push("durations: at least one duration required".into());
                }
                if c.durations.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
                    out.push("durations: every duration must be positive".into());
                }
                if let (Some(Key::Single(k)), Ok(band)) = (&key, self.band()) {
                    if !band.contains(k.delta) {
                        out.push(format!("key: lag {} outside band [{}, {}]", k.delta, band.start, band.end));
                    }
                }
            }
            ExperimentKind::Bitflip => {
                match c.duration {
                    Some(d) if d.is_finite() && d > 0.0 => {}
                    Some(_) => out.push("duration: must be positive".into()),
                    None => out.push("duration: required for bitflip".into()),
                }
                if c.flips.is_empty() {
                    out.push("flips: at least one flip count required".into());
                }
                match &key {
                    Some(Key::Spread(k)) => {
                        if let Some(f) = c.flips.iter().find(|&&f| f > k.len()) {
                            out.push(format!("flips: {f} exceeds pattern length {}", k.len()));
                        }
                    }
                    Some(Key::Single(_)) => out.push("key: bitflip needs a spread key".into()),
                    None => {}
                }
            }
            ExperimentKind::Tagging => {
                if c.groups.is_empty() {
                    out.push("groups: at least one group required".into());
                }
                let mut seen = BTreeMap::new();
                for (i, g) in c.groups.iter().enumerate() {
                    let path = format!("groups[{i}]");
                    if seen.insert(g.name.clone(), ()).is_some() {
                        out.push(format!("{path}: duplicate group name '{}'", g.name));
                    }
                    match self.resolve_key(&g.key) {
                        Ok((_, Key::Single(k))) => {
                            if let Ok(band) = self.band() {
                                if !band.contains(k.delta) {
                                    out.push(format!("{path}.key: lag {} outside band", k.delta));
                                }
                            }
                        }
                        Ok((_, Key::Spread(_))) => out.push(format!("{path}.key: tagging needs single-echo keys")),
                        Err(e) => out.push(format!("{path}.key: {e}")),
                    }
                    self.corpus_problems(&g.corpus, &format!("{path}.corpus"), &mut out);
                }
            }
        }
        out
    }

    fn load_corpus(&self, spec: &CorpusSpec) -> Result<Vec<CorpusClip>> {
        let rate = self.config.sample_rate;
        match spec {
            CorpusSpec::Glob { glob } => self
                .glob_paths(glob)?
                .into_iter()
                .map(|p| {
                    let clip = resample(&load_audio(&p)?, rate)?;
                    let id = p
                        .file_name()
                        .map(|n| n.to_string_lossy().into_owned())
                        .unwrap_or_default();
                    Ok(CorpusClip::new(id, clip))
                })
                .collect(),
            CorpusSpec::Synthetic { synthetic } => Ok((0..synthetic.count)
                .map(|i| {
                    let seed = derive_seed(synthetic.seed, i as u64);
                    let (name, clip) = match synthetic.kind {
                        SyntheticKind::Noise => ("noise", white_noise_seconds(synthetic.seconds, rate, seed)),
                        SyntheticKind::Music => ("music", synth_music(synthetic.seconds, rate, seed)),
                    };
                    CorpusClip::new(format!("{name}{i:03}"), clip)
                })
                .collect()),
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.output_dir)
    }

    /// Runs the experiment, returning `results.csv` text and the summary.
    pub fn run(&self) -> Result<(String, serde_json::Value)> {
        let problems = self.problems();
        if !problems.is_empty() {
            return Err(Error::InvalidArgument(problems.join("; ")));
        }
        let c = &self.config;
        match c.experiment {
            ExperimentKind::DurationSweep => {
                let (key_id, key) = self.resolve_key(c.key.as_deref().expect("validated"))?;
                let corpus = self.load_corpus(c.corpus.as_ref().expect("validated"))?;
                let opts = SweepOptions {
                    durations: c.durations.clone(),
                    segments_per_clip: c.segments,
                    channel: c.channel.clone(),
                    band: self.band()?,
                    enhanced: c.enhanced,
                    include_clean: c.include_clean,
                    seed: c.seed,
                };
                let rows = run_duration_sweep(&corpus, &key, &key_id, &opts)?;
                let csv = to_csv(SweepRow::CSV_HEADER, rows.iter().map(SweepRow::csv_row));
                let durations = summarize_sweep(&rows, &c.durations);
                let medians: Vec<Option<f64>> = durations.iter().map(|d| d.median_z_embedded).collect();
                let summary = json!({
                    "version": CONFIG_VERSION,
                    "experiment": c.experiment,
                    "key_id": key_id,
                    "rows": rows.len(),
                    "durations": durations,
                    "median_z_non_decreasing": non_decreasing(&medians),
                });
                Ok((csv, summary))
            }
            ExperimentKind::Bitflip => {
                let (key_id, key) = self.resolve_key(c.key.as_deref().expect("validated"))?;
                let Key::Spread(key) = key else {
                    unreachable!("validated spread key")
                };
                let corpus = self.load_corpus(c.corpus.as_ref().expect("validated"))?;
                let opts = BitflipOptions {
                    duration: c.duration.expect("validated"),
                    segments_per_clip: c.segments,
                    flips: c.flips.clone(),
                    channel: c.channel.clone(),
                    enhanced: c.enhanced,
                    seed: c.seed,
                };
                let result = run_bitflip_curve(&corpus, &key, &opts)?;
                let csv = to_csv(BitflipRow::CSV_HEADER, result.rows.iter().map(BitflipRow::csv_row));
                let aurocs = result.aurocs();
                let summary = json!({
                    "version": CONFIG_VERSION,
                    "experiment": c.experiment,
                    "key_id": key_id,
                    "rows": result.rows.len(),
                    "flips": c.flips,
                    "auroc": aurocs,
                    "auroc_non_decreasing": non_decreasing(&aurocs.iter().map(|a| Some(*a)).collect::<Vec<_>>()),
                    "clean_auroc": result.clean.auroc,
                });
                Ok((csv, summary))
            }
            ExperimentKind::Tagging => {
                let mut keys = BTreeMap::new();
                let mut holdout = Vec::new();
                for g in &c.groups {
                    let (_, key) = self.resolve_key(&g.key)?;
                    let Key::Single(k) = key else {
                        unreachable!("validated single key")
                    };
                    keys.insert(g.name.clone(), k);
                    for clip in self.load_corpus(&g.corpus)? {
                        holdout.push(TaggingClip {
                            id: clip.id,
                            group: g.name.clone(),
                            clip: clip.clip,
                        });
                    }
                }
                let report = run_tagging_experiment(&keys, &holdout, &c.channel, self.band()?, c.seed)?;
                let csv = to_csv(TaggingRow::CSV_HEADER, report.rows.iter().map(TaggingRow::csv_row));
                let summary = json!({
                    "version": CONFIG_VERSION,
                    "experiment": c.experiment,
                    "rows": report.rows.len(),
                    "groups": report.groups,
                });
                Ok((csv, summary))
            }
        }
    }

    /// Runs and writes `results.csv` and `summary.json` into the output directory.
    pub fn run_and_write(&self) -> Result<(PathBuf, PathBuf, serde_json::Value)> {
        let (csv, summary) = self.run()?;
        let dir = self.output_dir();
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| Error::Io { path, source }
        };
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        let results = dir.join("results.csv");
        let summary_path = dir.join("summary.json");
        fs::write(&results, csv).map_err(io(&results))?;
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
        fs::write(&summary_path, text).map_err(io(&summary_path))?;
        Ok((results, summary_path, summary))
    }
}

fn to_csv(header: &str, rows: impl Iterator<Item = String>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

fn non_decreasing(values: &[Option<f64>]) -> bool {
    values.windows(2).all(|w| match (w[0], w[1]) {
        (Some(a), Some(b)) => b >= a,
        _ => false,
    })
}
