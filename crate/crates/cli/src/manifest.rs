use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FORMAT: &str = "lutnet-manifest";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub version: u32,
    pub tool_version: String,
    pub command: String,
    /// Arguments after the program name, exactly as given.
    pub args: Vec<String>,
    pub preset: Option<String>,
    pub config_path: Option<String>,
    pub seed: Option<u64>,
    pub artifacts: Vec<Artifact>,
    pub timings: Vec<Timing>,
}

impl RunManifest {
    pub fn new(command: &str, args: &[String]) -> Self {
        Self {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            args: args.to_vec(),
            preset: None,
            config_path: None,
            seed: None,
            artifacts: Vec::new(),
            timings: Vec::new(),
        }
    }

    pub fn record(&mut self, out_dir: &Path, file: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(file).map_err(|e| CliError::io(file, e))?;
        let rel = file.strip_prefix(out_dir).unwrap_or(file);
        self.artifacts.push(Artifact {
            path: rel.to_string_lossy().replace('\\', "/"),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn time(&mut self, stage: &str, seconds: f64) {
        self.timings.push(Timing { stage: stage.into(), seconds });
    }

    pub fn path(out_dir: &Path, command: &str) -> PathBuf {
        out_dir.join(format!("{command}.manifest.json"))
    }

    pub fn save(&self, out_dir: &Path) -> Result<PathBuf, CliError> {
        let path = Self::path(out_dir, &self.command);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let m: RunManifest = serde_json::from_str(&text).map_err(|e| CliError::Core(e.into()))?;
        if m.format != MANIFEST_FORMAT {
            return Err(CliError::Usage(format!("{} is not a run manifest", path.display())));
        }
        if m.version != MANIFEST_VERSION {
            return Err(CliError::Core(lutnet_core::Error::Version {
                kind: "manifest",
                found: m.version,
                expected: MANIFEST_VERSION,
            }));
        }
        Ok(m)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
