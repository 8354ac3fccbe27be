use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dqrnn::pipeline::PipelineConfig;
use dqrnn::Error;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{Cli, Context, Outcome};

#[derive(Debug, Serialize)]
pub struct FileHash {
    pub path: String,
    pub bytes: u64,
    /// `sha256:` of the git blob encoding of the file.
    pub hash: String,
}

/// Provenance of one command: arguments, effective config and file hashes.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub args: Vec<String>,
    pub config_path: Option<String>,
    pub config: PipelineConfig,
    pub seed: u64,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

pub fn blob_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    let mut s = String::from("sha256:");
    for b in h.finalize() {
        let _ = write!(s, "{b:02x}");
    }
    s
}

fn hash_file(path: &Path) -> Outcome<FileHash> {
    let content = std::fs::read(path).map_err(Error::from).at(path)?;
    Ok(FileHash { path: path.display().to_string(), bytes: content.len() as u64, hash: blob_hash(&content) })
}

impl RunManifest {
    pub fn new(cli: &Cli, config: &PipelineConfig) -> Outcome<Self> {
        Ok(RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            args: std::env::args().skip(1).collect(),
            config_path: cli.config.as_ref().map(|p| p.display().to_string()),
            config: config.clone(),
            seed: cli.seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn input(&mut self, path: &Path) -> Outcome<()> {
        self.inputs.push(hash_file(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Outcome<()> {
        self.outputs.push(hash_file(path)?);
        Ok(())
    }

    /// Writes `<out>.manifest.json` next to a single output file.
    pub fn write_beside(&self, out: &Path) -> Outcome<()> {
        let mut name = out.as_os_str().to_owned();
        name.push(".manifest.json");
        crate::write_json(&PathBuf::from(name), self)
    }

    /// Writes `manifest.json` inside an output directory.
    pub fn write_in(&self, dir: &Path) -> Outcome<()> {
        crate::write_json(&dir.join("manifest.json"), self)
    }
}
