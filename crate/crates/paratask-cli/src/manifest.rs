//! Run manifests: every artifact-producing command writes one, recording
//! the exact configuration, seed, input hashes, and output hashes needed to
//! reproduce the run. Manifests carry no timestamps, so identical runs
//! produce identical manifests.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::{Map, Value};

use paratask::pos::CascadeTagger;
use paratask::pos::Tagger;
use paratask::util::sha256_hex;
use paratask::Taxonomy;

/// A file the run read or wrote, with its content hash.
#[derive(Debug, Clone, Serialize)]
pub struct FileStamp {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Versions {
    pub paratask: &'static str,
    pub tagger: String,
    pub taxonomy: u32,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub config: Value,
    pub inputs: Vec<FileStamp>,
    pub outputs: Vec<FileStamp>,
    #[serde(skip_serializing_if = "Map::is_empty")]
    pub details: Map<String, Value>,
    pub versions: Versions,
}

impl Manifest {
    pub fn new(command: &'static str, config: Value) -> Manifest {
        Manifest {
            command,
            seed: None,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            details: Map::new(),
            versions: Versions {
                paratask: env!("CARGO_PKG_VERSION"),
                tagger: CascadeTagger::bundled().version().to_string(),
                taxonomy: Taxonomy::bundled().version(),
            },
        }
    }

    pub fn seed(mut self, seed: u64) -> Manifest {
        self.seed = Some(seed);
        self
    }

    /// Records an input file, hashing its current content.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(stamp(path)?);
        Ok(())
    }

    /// Records an output file after it has been written.
    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(stamp(path)?);
        Ok(())
    }

    pub fn detail(&mut self, key: &str, value: impl Serialize) {
        self.details.insert(
            key.to_string(),
            serde_json::to_value(value).expect("detail values serialize"),
        );
    }

    /// Writes `<command>-manifest.json` into `out_dir` and returns its path.
    pub fn write(&self, out_dir: &Path, force: bool) -> Result<PathBuf> {
        let path = out_dir.join(format!("{}-manifest.json", self.command));
        guard_overwrite(&path, force)?;
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, json + "\n")
            .with_context(|| format!("writing manifest {}", path.display()))?;
        Ok(path)
    }
}

fn stamp(path: &Path) -> Result<FileStamp> {
    let bytes =
        fs::read(path).with_context(|| format!("hashing {} for the manifest", path.display()))?;
    Ok(FileStamp {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

/// Refuses to clobber an existing file unless the run passed --force.
pub fn guard_overwrite(path: &Path, force: bool) -> Result<()> {
    if !force && path.exists() {
        bail!(
            "refusing to overwrite existing {}; pass --force to replace it",
            path.display()
        );
    }
    Ok(())
}
