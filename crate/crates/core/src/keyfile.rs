//! Versioned JSON files for keys, keyrings and pattern sets.
//!
//! Single key:
//! `{"format":"echomark-key","version":1,"type":"single","delta":75,"alpha":0.4}`
//!
//! Spread key (`bits` is MSB-first hex, zero-padded to a whole digit):
//! `{"format":"echomark-key","version":1,"type":"spread","alpha":0.01,"delta":75,"length":1024,"bits":"…"}`
//!
//! Keyring: `{"format":"echomark-keyring","version":1,"keys":{"<id>":{"type":…}}}`

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embed::{EchoKey, Key, SpreadKey};
use crate::error::{Error, Result};
use crate::patterns::{Pattern, PatternSet, SpreadCriteria};

pub const FORMAT_VERSION: u32 = 1;
pub const KEY_FORMAT: &str = "echomark-key";
pub const KEYRING_FORMAT: &str = "echomark-keyring";
pub const PATTERNS_FORMAT: &str = "echomark-patterns";
/// Identifies the pattern-set construction in pattern files.
pub const PATTERN_GENERATOR: &str = "flip-spread-v1";

/// Serialized form of a [`Key`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum KeyDoc {
    Single {
        delta: usize,
        alpha: f64,
    },
    Spread {
        alpha: f64,
        delta: usize,
        length: usize,
        bits: String,
    },
}

impl KeyDoc {
    pub fn to_key(&self) -> Result<Key> {
        let key = match self {
            KeyDoc::Single { delta, alpha } => Key::Single(EchoKey {
                delta: *delta,
                alpha: *alpha,
            }),
            KeyDoc::Spread {
                alpha,
                delta,
                length,
                bits,
            } => Key::Spread(SpreadKey {
                pattern: Pattern::from_hex(bits, *length)?,
                alpha: *alpha,
                delta: *delta,
            }),
        };
        key.validate()?;
        Ok(key)
    }
}

impl From<&Key> for KeyDoc {
    fn from(key: &Key) -> Self {
        match key {
            Key::Single(k) => KeyDoc::Single {
                delta: k.delta,
                alpha: k.alpha,
            },
            Key::Spread(k) => KeyDoc::Spread {
                alpha: k.alpha,
                delta: k.delta,
                length: k.len(),
                bits: k.pattern.to_hex(),
            },
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct KeyFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    key: KeyDoc,
}

#[derive(Debug, Serialize, Deserialize)]
struct KeyringFile {
    format: String,
    version: u32,
    keys: BTreeMap<String, KeyDoc>,
}

fn read_json(path: &Path) -> Result<serde_json::Value> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: String) -> Result<()> {
    fs::write(path, text + "\n").map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn check_header(path: &Path, format: &str, version: u32, expected: &str) -> Result<()> {
    if format != expected {
        return Err(Error::InvalidKey(format!(
            "{}: format '{format}', expected '{expected}'",
            path.display()
        )));
    }
    if version != FORMAT_VERSION {
        return Err(Error::InvalidKey(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    Ok(())
}

/// Loads every key in a key or keyring file. A single key takes the file stem as its id.
pub fn read_keys(path: impl AsRef<Path>) -> Result<BTreeMap<String, Key>> {
    let path = path.as_ref();
    let value = read_json(path)?;
    let json_err = |source| Error::Json {
        path: path.to_path_buf(),
        source,
    };
    if value.get("keys").is_some() {
        let ring: KeyringFile = serde_json::from_value(value).map_err(json_err)?;
        check_header(path, &ring.format, ring.version, KEYRING_FORMAT)?;
        ring.keys
            .iter()
            .map(|(id, doc)| {
                let key = doc
                    .to_key()
                    .map_err(|e| Error::InvalidKey(format!("{}#{id}: {e}", path.display())))?;
                Ok((id.clone(), key))
            })
            .collect()
    } else {
        let file: KeyFile = serde_json::from_value(value).map_err(json_err)?;
        check_header(path, &file.format, file.version, KEY_FORMAT)?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "key".into());
        let mut keys = BTreeMap::new();
        keys.insert(id, file.key.to_key()?);
        Ok(keys)
    }
}

/// Resolves `path` or `path#id`. A bare path must hold exactly one key.
pub fn resolve_key_ref(reference: &str) -> Result<(String, Key)> {
    let (path, id) = match reference.rsplit_once('#') {
        Some((p, id)) => (p, Some(id)),
        None => (reference, None),
    };
    let mut keys = read_keys(path)?;
    match id {
        Some(id) => keys
            .remove(id)
            .map(|k| (id.to_string(), k))
            .ok_or_else(|| Error::InvalidKey(format!("no key '{id}' in {path}"))),
        None if keys.len() == 1 => Ok(keys.into_iter().next().expect("one key")),
        None => Err(Error::InvalidKey(format!(
            "{path} holds {} keys; pick one with {path}#<id>",
            keys.len()
        ))),
    }
}

pub fn key_to_json(key: &Key) -> String {
    let file = KeyFile {
        format: KEY_FORMAT.into(),
        version: FORMAT_VERSION,
        key: key.into(),
    };
    serde_json::to_string_pretty(&file).expect("key serializes")
}

pub fn write_key(path: impl AsRef<Path>, key: &Key) -> Result<()> {
    write_text(path.as_ref(), key_to_json(key))
}

pub fn write_keyring(path: impl AsRef<Path>, keys: &BTreeMap<String, Key>) -> Result<()> {
    let ring = KeyringFile {
        format: KEYRING_FORMAT.into(),
        version: FORMAT_VERSION,
        keys: keys.iter().map(|(id, k)| (id.clone(), k.into())).collect(),
    };
    write_text(path.as_ref(), serde_json::to_string_pretty(&ring).expect("keyring serializes"))
}

/// Short SHA-256 digest of a key's canonical JSON, for audit logs.
pub fn key_fingerprint(key: &Key) -> String {
    let doc = serde_json::to_string(&KeyDoc::from(key)).expect("key serializes");
    let digest = Sha256::digest(doc.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// On-disk pattern set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternSetFile {
    pub format: String,
    pub version: u32,
    pub generator: String,
    pub count: usize,
    pub length: usize,
    pub seed: u64,
    pub criteria: SpreadCriteria,
    pub criteria_met: bool,
    pub attempts: usize,
    /// MSB-first hex per pattern.
    pub patterns: Vec<String>,
    pub distances: Vec<Vec<usize>>,
}

impl PatternSetFile {
    pub fn from_set(set: &PatternSet, criteria: SpreadCriteria) -> Self {
        Self {
            format: PATTERNS_FORMAT.into(),
            version: FORMAT_VERSION,
            generator: PATTERN_GENERATOR.into(),
            count: set.count(),
            length: set.length(),
            seed: set.seed,
            criteria,
            criteria_met: set.criteria_met,
            attempts: set.attempts,
            patterns: set.patterns.iter().map(Pattern::to_hex).collect(),
            distances: set.distance_matrix.clone(),
        }
    }

    pub fn to_set(&self) -> Result<PatternSet> {
        let patterns = self
            .patterns
            .iter()
            .map(|h| Pattern::from_hex(h, self.length))
            .collect::<Result<Vec<_>>>()?;
        if patterns.len() != self.count {
            return Err(Error::LengthMismatch {
                left: self.count,
                right: patterns.len(),
            });
        }
        Ok(PatternSet {
            patterns,
            seed: self.seed,
            distance_matrix: self.distances.clone(),
            criteria_met: self.criteria_met,
            attempts: self.attempts,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pattern set serializes")
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), self.to_json())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file: Self = serde_json::from_value(read_json(path)?).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        check_header(path, &file.format, file.version, PATTERNS_FORMAT)?;
        Ok(file)
    }
}

/// Resolves `relative` against the directory holding `anchor`.
pub fn relative_to(anchor: &Path, relative: &str) -> PathBuf {
    let p = Path::new(relative);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        anchor.parent().unwrap_or_else(|| Path::new(".")).join(p)
    }
}
