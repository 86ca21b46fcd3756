//! Versioned JSON container for trained parameters.
//!
//! Every checkpoint is `{"format_version": 1, "kind": "...", "payload": ...}`.
//! Floats are written with shortest round-trip formatting, so
//! `load(save(x)) == x` bit for bit.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::io::{read_json, write_json};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Envelope<T> {
    format_version: u32,
    kind: String,
    payload: T,
}

/// A payload stamped with the config hash and seed of the run that
/// produced it. The command-line tool writes every checkpoint this way.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stamped<T> {
    pub config_hash: String,
    pub seed: u64,
    pub value: T,
}

pub fn save<T: Serialize>(path: &Path, kind: &str, payload: &T) -> Result<()> {
    write_json(
        path,
        &Envelope {
            format_version: CHECKPOINT_VERSION,
            kind: kind.to_string(),
            payload,
        },
    )
}

/// Load a checkpoint of the expected `kind`. A missing file is reported as a
/// missing prerequisite.
pub fn load<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T> {
    if !path.exists() {
        return Err(Error::Prerequisite {
            path: path.to_path_buf(),
            hint: format!("no {kind} checkpoint; run the command that produces it first"),
        });
    }
    let env: Envelope<T> = read_json(path)?;
    if env.format_version != CHECKPOINT_VERSION {
        return Err(Error::Schema {
            location: path.display().to_string(),
            detail: format!("unsupported checkpoint version {}", env.format_version),
        });
    }
    if env.kind != kind {
        return Err(Error::Schema {
            location: path.display().to_string(),
            detail: format!("expected a {kind} checkpoint, found {}", env.kind),
        });
    }
    Ok(env.payload)
}

/// Stable hex SHA-256 of a value's canonical JSON encoding.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    use sha2::{Digest, Sha256};
    let bytes = serde_json::to_vec(value).expect("config values serialize");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}
