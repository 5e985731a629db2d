use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use gridpac::ErrorClass;

use crate::config::RunConfig;
use crate::{CliResult, Failure};

#[derive(Debug, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Record of a run: its full configuration, input and output hashes.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub network_sha256: String,
    pub config: RunConfig,
    pub files: Vec<FileEntry>,
}

fn sha256_file(path: &Path) -> CliResult<(String, u64)> {
    let bytes = std::fs::read(path).map_err(|e| Failure::io(path, e))?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

impl Manifest {
    pub fn new(config: RunConfig, files: &[PathBuf]) -> CliResult<Self> {
        let canonical = serde_json::to_vec(&config).expect("config serializes");
        let (network_sha256, _) = sha256_file(&config.network)?;
        let files = files
            .iter()
            .map(|p| {
                let (sha256, bytes) = sha256_file(p)?;
                let name = p
                    .file_name()
                    .map_or_else(String::new, |n| n.to_string_lossy().into_owned());
                Ok(FileEntry { name, sha256, bytes })
            })
            .collect::<CliResult<Vec<_>>>()?;
        Ok(Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config_sha256: hex::encode(Sha256::digest(&canonical)),
            network_sha256,
            config,
            files,
        })
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Failure::new(ErrorClass::Validation, format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| Failure::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_digest_is_sha256() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.txt");
        std::fs::write(&path, "abc").unwrap();
        let (digest, bytes) = sha256_file(&path).unwrap();
        assert_eq!(bytes, 3);
        assert_eq!(
            digest,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
