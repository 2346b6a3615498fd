use std::fs::File;
use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliResult, Classify, Kind};

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance record written next to every output artifact.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub sketches: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    /// Set when a remote model took part; reruns may then differ.
    pub nondeterministic: bool,
    pub started_unix: u64,
    pub finished_unix: u64,
}

pub fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn digests(paths: &[PathBuf]) -> CliResult<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            let sha256 = sha256_file(p).or_kind(Kind::Io, || format!("hashing {}", p.display()))?;
            Ok(FileDigest {
                path: p.display().to_string(),
                sha256,
            })
        })
        .collect()
}

impl RunManifest {
    pub fn new(command: &str, config: impl Serialize, started_unix: u64) -> Self {
        RunManifest {
            command: command.to_owned(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            inputs: Vec::new(),
            sketches: Vec::new(),
            outputs: Vec::new(),
            nondeterministic: false,
            started_unix,
            finished_unix: started_unix,
        }
    }

    pub fn write(mut self, path: &Path) -> CliResult<()> {
        self.finished_unix = now_unix();
        let body = serde_json::to_string_pretty(&self).expect("manifest serializes");
        std::fs::write(path, body + "\n")
            .or_kind(Kind::Io, || format!("writing manifest {}", path.display()))?;
        log::info!("manifest written to {}", path.display());
        Ok(())
    }
}

/// `out.jsonl` gets `out.jsonl.manifest.json`.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}
