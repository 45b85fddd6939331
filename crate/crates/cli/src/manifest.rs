//! Stage output directories, content hashing and run manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Seed for one stage: the first eight bytes of `sha256("<stage>:<seed>")`.
pub fn stage_seed(stage: &str, global_seed: u64) -> u64 {
    let digest = Sha256::digest(format!("{stage}:{global_seed}").as_bytes());
    u64::from_be_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub seed: u64,
    pub params: Value,
    /// Role name to content hash; paths are left out so that moving the
    /// inputs does not change the manifest.
    pub inputs: BTreeMap<String, String>,
    /// Path relative to the stage directory to content hash.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    pub fn load(stage_dir: &Path) -> Result<Self> {
        let path = stage_dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// A stage run in progress. Outputs go to a scratch directory next to the
/// final one and are moved into place by [`StageDir::commit`]; dropping an
/// uncommitted stage removes the scratch directory.
pub struct StageDir {
    stage: String,
    seed: u64,
    params: Value,
    scratch: PathBuf,
    dest: PathBuf,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    committed: bool,
}

impl StageDir {
    pub fn create(out_dir: &Path, stage: &str, seed: u64, params: Value) -> Result<Self> {
        fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        let scratch = out_dir.join(format!(".{stage}.partial"));
        if scratch.exists() {
            fs::remove_dir_all(&scratch).with_context(|| format!("removing stale {}", scratch.display()))?;
        }
        fs::create_dir(&scratch).with_context(|| format!("creating {}", scratch.display()))?;
        Ok(StageDir {
            stage: stage.to_owned(),
            seed,
            params,
            scratch,
            dest: out_dir.join(stage),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            committed: false,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Reads an input file and records its hash under `role`.
    pub fn read(&mut self, role: &str, path: &Path) -> Result<String> {
        let bytes = fs::read(path).with_context(|| format!("reading {} ({role})", path.display()))?;
        self.inputs.insert(role.to_owned(), sha256_hex(&bytes));
        String::from_utf8(bytes).with_context(|| format!("{} is not valid UTF-8", path.display()))
    }

    pub fn read_tokenized(&mut self, role: &str, path: &Path) -> Result<Vec<Vec<String>>> {
        Ok(self
            .read(role, path)?
            .lines()
            .map(termforge_core::io::split_tokens)
            .collect())
    }

    pub fn write(&mut self, rel: &str, contents: &str) -> Result<()> {
        let path = self.scratch.join(rel);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.insert(rel.to_owned(), sha256_hex(contents.as_bytes()));
        Ok(())
    }

    pub fn write_lines<I, S>(&mut self, rel: &str, lines: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut text = String::new();
        for l in lines {
            text.push_str(l.as_ref());
            text.push('\n');
        }
        self.write(rel, &text)
    }

    /// Writes the manifest and moves the outputs into place.
    pub fn commit(mut self) -> Result<Manifest> {
        let manifest = Manifest {
            stage: self.stage.clone(),
            seed: self.seed,
            params: self.params.clone(),
            inputs: std::mem::take(&mut self.inputs),
            outputs: std::mem::take(&mut self.outputs),
        };
        let path = self.scratch.join(MANIFEST_FILE);
        fs::write(&path, manifest.to_json()).with_context(|| format!("writing {}", path.display()))?;
        if self.dest.exists() {
            fs::remove_dir_all(&self.dest).with_context(|| format!("replacing {}", self.dest.display()))?;
        }
        fs::rename(&self.scratch, &self.dest)
            .with_context(|| format!("moving {} into place", self.dest.display()))?;
        self.committed = true;
        Ok(manifest)
    }
}

impl Drop for StageDir {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.scratch);
        }
    }
}
