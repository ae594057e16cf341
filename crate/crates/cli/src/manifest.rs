//! Deterministic run manifests: config echo, input digests, artifact version.
//!
//! Manifests carry no timestamps or host identifiers, so reruns of the same
//! config over the same inputs produce byte-identical manifests.

use crate::config::RunConfig;
use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub artifact: ArtifactInfo,
    pub command: &'a str,
    pub workers: usize,
    pub season_override: Option<&'a str>,
    /// SHA-256 of every input file consumed, keyed by path.
    pub input_digests: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub config: &'a RunConfig,
}

#[derive(Debug, Serialize)]
pub struct ArtifactInfo {
    pub name: &'static str,
    pub version: &'static str,
}

impl Default for ArtifactInfo {
    fn default() -> Self {
        Self { name: "wtstrike", version: env!("CARGO_PKG_VERSION") }
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)
        .with_context(|| format!("cannot read {} for digest", path.display()))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex::encode(hasher.finalize()))
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let path = dir.join(format!("{}_manifest.json", manifest.command));
    let json = serde_json::to_string_pretty(manifest)?;
    std::fs::write(&path, json)
        .with_context(|| format!("cannot write manifest {}", path.display()))?;
    Ok(())
}
