//! Artifact provenance: every output file gets a `<file>.meta.json` sidecar
//! recording the tool version, config hash, seed, input hashes and its own
//! content hash. Wall-clock data lives in a separate `metadata` block that
//! no hash covers.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use ccr_core::Error;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Recursively sorts object keys.
pub fn canonicalize(v: &Value) -> Value {
    match v {
        Value::Object(m) => {
            let sorted: BTreeMap<&String, Value> = m.iter().map(|(k, v)| (k, canonicalize(v))).collect();
            Value::Object(sorted.into_iter().map(|(k, v)| (k.clone(), v)).collect())
        }
        Value::Array(a) => Value::Array(a.iter().map(canonicalize).collect()),
        other => other.clone(),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 of the compact canonical JSON encoding of `v`.
pub fn canonical_hash(v: &Value) -> String {
    let s = serde_json::to_string(&canonicalize(v)).expect("json value serializes");
    sha256_hex(s.as_bytes())
}

pub fn sha256_file(path: &Path) -> ccr_core::Result<String> {
    let mut f = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| io_err(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Data(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub created_unix_ms: u128,
}

impl RunMetadata {
    pub fn now() -> Self {
        let ms = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
        Self { created_unix_ms: ms }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub tool_version: String,
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
    /// Content hash of every input, keyed by a stable label.
    pub inputs: BTreeMap<String, String>,
    pub content_sha256: String,
    /// Excluded from every hash and from reproducibility comparisons.
    pub metadata: RunMetadata,
}

pub fn meta_path(artifact: &Path) -> PathBuf {
    let mut s = artifact.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Provenance shared by every output of one stage run.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
}

impl Provenance {
    /// Hashes the artifact's current content and writes its sidecar.
    pub fn stamp(&self, artifact: &Path) -> ccr_core::Result<ArtifactMeta> {
        let meta = ArtifactMeta {
            tool_version: TOOL_VERSION.into(),
            stage: self.stage.clone(),
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            inputs: self.inputs.clone(),
            content_sha256: sha256_file(artifact)?,
            metadata: RunMetadata::now(),
        };
        let mut text = serde_json::to_string_pretty(&meta)?;
        text.push('\n');
        let mp = meta_path(artifact);
        std::fs::write(&mp, text).map_err(|e| io_err(&mp, e))?;
        Ok(meta)
    }
}

/// Why an artifact cannot be reused.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Staleness {
    Missing,
    NoMeta,
    ConfigChanged,
    InputsChanged,
    /// The file no longer matches the hash recorded when it was written.
    Corrupted,
    VersionChanged,
}

impl std::fmt::Display for Staleness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Staleness::Missing => "missing",
            Staleness::NoMeta => "no metadata sidecar",
            Staleness::ConfigChanged => "config hash mismatch",
            Staleness::InputsChanged => "input hash mismatch",
            Staleness::Corrupted => "content hash mismatch",
            Staleness::VersionChanged => "tool version changed",
        })
    }
}

pub fn read_meta(artifact: &Path) -> Option<ArtifactMeta> {
    let text = std::fs::read_to_string(meta_path(artifact)).ok()?;
    serde_json::from_str(&text).ok()
}

/// `Ok(())` when `artifact` was produced under `prov` and is unmodified.
pub fn check_fresh(artifact: &Path, prov: &Provenance) -> Result<(), Staleness> {
    if !artifact.exists() {
        return Err(Staleness::Missing);
    }
    let meta = read_meta(artifact).ok_or(Staleness::NoMeta)?;
    if meta.tool_version != TOOL_VERSION {
        return Err(Staleness::VersionChanged);
    }
    if meta.config_hash != prov.config_hash || meta.stage != prov.stage || meta.seed != prov.seed {
        return Err(Staleness::ConfigChanged);
    }
    if meta.inputs != prov.inputs {
        return Err(Staleness::InputsChanged);
    }
    match sha256_file(artifact) {
        Ok(h) if h == meta.content_sha256 => Ok(()),
        _ => Err(Staleness::Corrupted),
    }
}

/// Sidecar JSON with the `metadata` block removed, for comparing runs.
pub fn meta_without_timestamps(text: &str) -> ccr_core::Result<Value> {
    let mut v: Value = serde_json::from_str(text)?;
    if let Some(m) = v.as_object_mut() {
        m.remove("metadata");
    }
    Ok(v)
}
