//! Output directories that list their artifacts and clean up after failures.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;

/// SHA-256 of the git blob object for `content` (`"blob <len>\0" + content`),
/// as in repositories using the sha256 object format.
pub fn git_blob_sha256(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Path relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: String,
    pub config_hash: String,
    pub seed: u64,
    pub output_dir: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub artifacts: Vec<ArtifactEntry>,
}

impl RunManifest {
    pub const FILE: &'static str = "manifest.json";

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(dir.join(Self::FILE))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("manifest: {e}")))
    }
}

pub(crate) fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Tracks the files a command writes into its output directory. Unless
/// [`Outputs::finish`] runs, everything written is removed on drop.
pub(crate) struct Outputs {
    dir: PathBuf,
    created_dir: bool,
    files: Vec<PathBuf>,
    done: bool,
}

impl Outputs {
    pub fn open(dir: &Path) -> Result<Self, CliError> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Outputs { dir: dir.to_path_buf(), created_dir, files: Vec::new(), done: false })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let p = self.path(name);
        let f = File::create(&p)?;
        if !self.files.contains(&p) {
            self.files.push(p);
        }
        Ok(BufWriter::new(f))
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        w.write_all(bytes)?;
        w.flush()?;
        Ok(())
    }

    /// Write the manifest listing every artifact and keep the outputs.
    pub fn finish(mut self, mut manifest: RunManifest) -> Result<RunManifest, CliError> {
        manifest.artifacts = self
            .files
            .iter()
            .map(|p| {
                let bytes = fs::read(p)?;
                Ok(ArtifactEntry {
                    path: p.strip_prefix(&self.dir).unwrap_or(p).to_string_lossy().into_owned(),
                    bytes: bytes.len() as u64,
                    sha256: hex::encode(Sha256::digest(&bytes)),
                })
            })
            .collect::<Result<_, CliError>>()?;
        manifest.output_dir = self.dir.display().to_string();
        manifest.finished_unix = unix_now();
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        self.write(RunManifest::FILE, json.as_bytes())?;
        self.done = true;
        Ok(manifest)
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.done {
            return;
        }
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}
