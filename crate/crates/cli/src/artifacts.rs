//! Run directories. A run id is a hash of the command, the resolved config
//! and the command's arguments; a finished run is never written again.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub passed: bool,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub command: String,
    pub artifacts: Vec<ArtifactEntry>,
    pub check: Option<CheckOutcome>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn run_id(command: &str, config: &impl Serialize, args: &impl Serialize) -> Result<String> {
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    h.update(b"\n");
    h.update(serde_json::to_vec(config)?);
    h.update(b"\n");
    h.update(serde_json::to_vec(args)?);
    Ok(hex::encode(h.finalize())[..16].to_string())
}

pub enum Opened {
    Fresh(RunDir),
    /// The run already finished; its manifest is returned untouched.
    Existing(PathBuf, Manifest),
}

pub struct RunDir {
    pub path: PathBuf,
    pub id: String,
    command: String,
    artifacts: Vec<ArtifactEntry>,
}

impl RunDir {
    pub fn open(out: &Path, command: &str, config: &impl Serialize, args: &impl Serialize) -> Result<Opened> {
        let id = run_id(command, config, args)?;
        let path = out.join(format!("{command}-{id}"));
        let manifest = path.join(MANIFEST);
        if manifest.exists() {
            let m: Manifest = serde_json::from_slice(&std::fs::read(&manifest)?)
                .with_context(|| format!("reading {}", manifest.display()))?;
            return Ok(Opened::Existing(path, m));
        }
        if path.exists() {
            bail!("{} exists without a manifest (interrupted run?); remove it to rerun", path.display());
        }
        std::fs::create_dir_all(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut dir = RunDir { path, id, command: command.to_string(), artifacts: Vec::new() };
        dir.write_json("config.json", config)?;
        dir.write_json("args.json", args)?;
        Ok(Opened::Fresh(dir))
    }

    /// Writes a new file; fails if it already exists.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let p = self.path.join(name);
        let mut f = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&p)
            .with_context(|| format!("refusing to overwrite {}", p.display()))?;
        f.write_all(bytes)?;
        self.artifacts.push(ArtifactEntry { name: name.to_string(), sha256: sha256_hex(bytes) });
        Ok(p)
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<PathBuf> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    /// Records a file written by other code (e.g. an embedding CSV and its sidecar).
    pub fn adopt(&mut self, name: &str) -> Result<()> {
        let bytes = std::fs::read(self.path.join(name))?;
        self.artifacts.push(ArtifactEntry { name: name.to_string(), sha256: sha256_hex(&bytes) });
        Ok(())
    }

    pub fn fresh_path(&self, name: &str) -> Result<PathBuf> {
        let p = self.path.join(name);
        if p.exists() {
            bail!("refusing to overwrite {}", p.display());
        }
        Ok(p)
    }

    pub fn finish(mut self, check: Option<CheckOutcome>) -> Result<Manifest> {
        let manifest = Manifest { run_id: self.id.clone(), command: self.command.clone(), artifacts: self.artifacts.clone(), check };
        self.write_json(MANIFEST, &manifest)?;
        Ok(manifest)
    }
}
