//! Output layout: every file lands under the `--out` directory, and every
//! run directory carries a `run-config.json` fingerprint.

use std::fs;
use std::path::{Component, Path, PathBuf};

use readlab_core::classifier::Hyperparams;
use readlab_core::generalist::OracleMode;
use readlab_core::llm_gateway::GatewayConfig;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Failure;

/// Keeps `[A-Za-z0-9._-]`, maps everything else to `_`.
pub fn sanitize(id: &str) -> String {
    let s: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect();
    match s.trim_start_matches('.') {
        "" => "_".to_string(),
        t => t.to_string(),
    }
}

/// `003-dev_7.json` for the third developer `dev 7`.
pub fn indexed_name(position: usize, id: &str, extension: &str) -> String {
    format!("{:03}-{}.{extension}", position + 1, sanitize(id))
}

#[derive(Debug, Clone)]
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        OutDir { root: root.into() }
    }

    pub fn path(&self, relative: &str) -> Result<PathBuf, Failure> {
        let rel = Path::new(relative);
        if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
            return Err(Failure::usage(format!(
                "output path {relative} escapes the output directory"
            )));
        }
        Ok(self.root.join(rel))
    }

    pub fn write(&self, relative: &str, contents: &str) -> Result<PathBuf, Failure> {
        let path = self.path(relative)?;
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)
                .map_err(|e| Failure::data(format!("cannot create {}: {e}", parent.display())))?;
        }
        fs::write(&path, contents).map_err(|e| Failure::data(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, relative: &str, value: &T) -> Result<PathBuf, Failure> {
        let mut text = serde_json::to_string_pretty(value).expect("output serializes");
        text.push('\n');
        self.write(relative, &text)
    }
}

/// Everything that shapes a command's output. Worker count and paths are
/// deliberately absent: they never change the bytes written.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset_digest: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hyperparams: Option<Hyperparams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gateway: Option<GatewayConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parse_retries: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_mode: Option<OracleMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub template_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extra: Option<serde_json::Value>,
}

impl RunConfig {
    pub fn new(command: &str) -> Self {
        RunConfig {
            command: command.to_string(),
            dataset: None,
            dataset_digest: None,
            method: None,
            seed: None,
            hyperparams: None,
            gateway: None,
            parse_retries: None,
            oracle_mode: None,
            template_hash: None,
            extra: None,
        }
    }

    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[derive(Serialize)]
pub struct Fingerprinted<'a, T: Serialize> {
    pub digest: String,
    pub config: &'a RunConfig,
    #[serde(flatten)]
    pub body: T,
}

impl<'a, T: Serialize> Fingerprinted<'a, T> {
    pub fn new(config: &'a RunConfig, body: T) -> Self {
        Fingerprinted {
            digest: config.digest(),
            config,
            body,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_safe() {
        assert_eq!(sanitize("dev 7/../x"), "dev_7_.._x");
        assert_eq!(sanitize("..hidden"), "hidden");
        assert_eq!(sanitize(""), "_");
        assert_eq!(indexed_name(2, "dev 7", "json"), "003-dev_7.json");
    }

    #[test]
    fn writes_stay_inside_root() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutDir::new(dir.path());
        assert!(out.write("../escape.txt", "x").is_err());
        assert!(out.write("/abs.txt", "x").is_err());
        let p = out.write("a/b.txt", "x").unwrap();
        assert!(p.starts_with(dir.path()));
    }
}
