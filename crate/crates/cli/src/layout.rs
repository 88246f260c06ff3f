//! Where every artifact lives under the output directory. Per-seed files
//! carry `-s<seed>`; files aggregating over seeds carry the seed tag.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};

#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn data(&self, split: &str, seed: u64) -> PathBuf {
        self.root.join("data").join(format!("{split}-s{seed}.csv"))
    }

    pub fn init_model(&self, seed: u64) -> PathBuf {
        self.root.join("models").join(format!("init-s{seed}.bin"))
    }

    pub fn model(&self, seed: u64) -> PathBuf {
        self.root.join("models").join(format!("model-s{seed}.bin"))
    }

    pub fn member(&self, seed: u64, k: usize) -> PathBuf {
        self.root.join("models").join(format!("member{k}-s{seed}.bin"))
    }

    pub fn dynamics(&self, seed: u64) -> PathBuf {
        self.root.join("models").join(format!("dynamics-s{seed}.jsonl"))
    }

    pub fn scores(&self, detector: &str, seed: u64) -> PathBuf {
        self.root.join("scores").join(format!("{detector}-s{seed}.jsonl"))
    }

    pub fn eval(&self, tag: &str, ext: &str) -> PathBuf {
        self.root.join("eval").join(format!("table-{tag}.{ext}"))
    }

    pub fn eval_reports(&self, tag: &str) -> PathBuf {
        self.root.join("eval").join(format!("reports-{tag}.json"))
    }

    pub fn analysis(&self, name: &str, seed: u64) -> PathBuf {
        self.root.join("analysis").join(format!("{name}-s{seed}.json"))
    }

    pub fn report(&self, tag: &str, ext: &str) -> PathBuf {
        self.root.join(format!("report-{tag}.{ext}"))
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn relative(&self, path: &Path) -> String {
        path.strip_prefix(&self.root).unwrap_or(path).display().to_string()
    }
}

/// Fails with the command that produces `path` when it does not exist.
pub fn require(path: &Path, producer: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingArtifact {
            path: path.to_path_buf(),
            producer,
        })
    }
}

pub fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    Ok(())
}

/// Writes through a temporary sibling and a rename, so readers never see a
/// half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    ensure_parent(path)?;
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(bytes)
        .and_then(|_| f.sync_all())
        .map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn read_text(path: &Path, producer: &'static str) -> Result<String> {
    require(path, producer)?;
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}
