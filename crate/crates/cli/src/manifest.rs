//! Dataset manifest and crash-safe file writes.
//!
//! Every artifact is written to a hidden sibling temp file (or directory)
//! and renamed into place, so a killed command never leaves a partial
//! file that a later command would read as truth.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::config::PipelineConfig;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_ECHO_FILE: &str = "config.json";

/// One scene as recorded by `synth`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneEntry {
    /// Directory relative to the dataset root, e.g. `train/scene_004`.
    pub dir: String,
    /// The scene's own deterministic seed.
    pub seed: u64,
    pub frames: usize,
}

/// What `synth` writes at the dataset root: the exact config used plus
/// every scene with its seed, grouped by split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub train: Vec<SceneEntry>,
    pub val: Vec<SceneEntry>,
    pub test: Vec<SceneEntry>,
    pub config: PipelineConfig,
}

impl Manifest {
    pub fn split(&self, name: &str) -> Result<&[SceneEntry]> {
        match name {
            "train" => Ok(&self.train),
            "val" => Ok(&self.val),
            "test" => Ok(&self.test),
            other => Err(anyhow!("unknown split {other:?}: expected train, val or test")),
        }
    }

    pub fn all(&self) -> impl Iterator<Item = &SceneEntry> {
        self.train.iter().chain(&self.val).chain(&self.test)
    }
}

pub fn load_manifest(dataset: &Path) -> Result<Manifest> {
    let path = dataset.join(MANIFEST_FILE);
    read_json(&path)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

/// Hidden temp path next to `path`, safe to rename over it.
fn temp_sibling(path: &Path) -> Result<PathBuf> {
    let name = path
        .file_name()
        .ok_or_else(|| anyhow!("{} has no file name", path.display()))?;
    Ok(path.with_file_name(format!(".{}.tmp", name.to_string_lossy())))
}

/// Produce `path` through a closure that writes a temp sibling first.
pub fn write_via_temp(
    path: &Path,
    write: impl FnOnce(&Path) -> Result<()>,
) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let tmp = temp_sibling(path)?;
    write(&tmp).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path)
        .with_context(|| format!("renaming {} into place", path.display()))
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    write_via_temp(path, |tmp| Ok(fs::write(tmp, bytes)?))
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut json = serde_json::to_vec_pretty(value)?;
    json.push(b'\n');
    write_atomic(path, &json)
}

/// Replace `dir` with freshly written contents, never exposing a partial
/// directory.
pub fn write_dir_via_temp(
    dir: &Path,
    write: impl FnOnce(&Path) -> Result<()>,
) -> Result<()> {
    let tmp = temp_sibling(dir)?;
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    write(&tmp).with_context(|| format!("writing {}", tmp.display()))?;
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::rename(&tmp, dir)
        .with_context(|| format!("renaming {} into place", dir.display()))
}

/// Drop the exact configuration next to a command's outputs.
pub fn echo_config(dir: &Path, config: &PipelineConfig) -> Result<()> {
    write_json_atomic(&dir.join(CONFIG_ECHO_FILE), config)
}
