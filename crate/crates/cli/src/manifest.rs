//! Run manifests: one JSON file per run, hashing the configuration and
//! every output written next to it.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_NAME: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub wall_clock_seconds: f64,
    pub files: Vec<OutputFile>,
    pub checks: Vec<CheckOutcome>,
}

/// Collects output files and writes them to a directory as they arrive.
#[derive(Debug)]
pub struct OutputSet<'a> {
    dir: &'a Path,
    files: Vec<OutputFile>,
}

impl<'a> OutputSet<'a> {
    pub fn new(dir: &'a Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir, files: Vec::new() })
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<(), CliError> {
        fs::write(self.dir.join(name), contents)?;
        self.files.push(OutputFile {
            name: name.to_string(),
            sha256: sha256_hex(contents),
            bytes: contents.len() as u64,
        });
        Ok(())
    }

    pub fn finish(
        self,
        subcommand: &str,
        config_text: &str,
        seed: u64,
        wall_clock_seconds: f64,
        checks: Vec<CheckOutcome>,
    ) -> Result<RunManifest, CliError> {
        let manifest = RunManifest {
            subcommand: subcommand.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: sha256_hex(config_text.as_bytes()),
            seed,
            wall_clock_seconds,
            files: self.files,
            checks,
        };
        fs::write(self.dir.join(MANIFEST_NAME), serde_json::to_string_pretty(&manifest)?)?;
        Ok(manifest)
    }
}

/// Names of listed files whose current contents no longer match the manifest.
pub fn stale_files(dir: &Path, manifest: &RunManifest) -> Result<Vec<String>, CliError> {
    let mut stale = Vec::new();
    for f in &manifest.files {
        let bytes = fs::read(dir.join(&f.name))?;
        if sha256_hex(&bytes) != f.sha256 || bytes.len() as u64 != f.bytes {
            stale.push(f.name.clone());
        }
    }
    Ok(stale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
