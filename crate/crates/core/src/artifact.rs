//! Versioned JSON envelopes for persisted artifacts.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format_version: u32,
    kind: String,
    payload: T,
}

/// Serializes `payload` inside an envelope tagged with `kind`.
///
/// Floats are written in shortest round-trip form, so output bytes depend
/// only on the values.
pub fn to_json<T: Serialize>(kind: &str, payload: &T) -> Result<String> {
    let env = Envelope {
        format_version: FORMAT_VERSION,
        kind: kind.to_string(),
        payload,
    };
    Ok(serde_json::to_string_pretty(&env)?)
}

pub fn from_json<T: DeserializeOwned>(kind: &str, text: &str) -> Result<T> {
    let env: Envelope<T> = serde_json::from_str(text)?;
    if env.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {} (expected {FORMAT_VERSION})",
            env.format_version
        )));
    }
    if env.kind != kind {
        return Err(Error::Format(format!("expected a {kind} artifact, found {}", env.kind)));
    }
    Ok(env.payload)
}

pub fn write<T: Serialize>(path: &std::path::Path, kind: &str, payload: &T) -> Result<()> {
    std::fs::write(path, to_json(kind, payload)?)?;
    Ok(())
}

pub fn read<T: DeserializeOwned>(path: &std::path::Path, kind: &str) -> Result<T> {
    from_json(kind, &std::fs::read_to_string(path)?)
}
