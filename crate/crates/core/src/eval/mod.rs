//! Evaluation harness: channels, ROC analysis and experiment runners.

pub mod channel;
pub mod config;
pub mod experiments;
pub mod roc;
pub mod stats;

pub use channel::{apply_channel, pitch_shift, ChannelKind, ChannelSpec};
pub use experiments::{
    detect_with_key, run_bitflip_curve, run_duration_sweep, run_tagging_experiment, BitflipOptions,
    BitflipResult, CorpusClip, SweepOptions, SweepRow, TaggingClip, TaggingReport,
};
pub use config::{EvalConfig, LoadedConfig};
pub use roc::{roc, RocResult};
pub use stats::{ks_two_sample, median, KsTest};
