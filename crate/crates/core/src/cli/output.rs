use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::table::Table;

pub const MANIFEST_NAME: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputEntry {
    /// Path relative to the output root.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub recipe: String,
    pub artifact_version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub outputs: Vec<OutputEntry>,
    pub wall_clock_seconds: f64,
    pub status: RunStatus,
}

impl RunManifest {
    /// Everything except the wall-clock time; equal for reruns of one config.
    pub fn fingerprint(&self) -> String {
        let mut m = self.clone();
        m.wall_clock_seconds = 0.0;
        sha256_hex(serde_json::to_string(&m).expect("manifest serializes").as_bytes())
    }
}

/// Writes the files of one recipe under `<root>/<recipe>/` and finishes
/// with the manifest.
#[derive(Debug)]
pub struct OutputSink {
    root: PathBuf,
    recipe: String,
    config_sha256: String,
    seed: u64,
    outputs: Vec<OutputEntry>,
    counters: Vec<(String, usize)>,
    started: Instant,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let res = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = res {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

impl OutputSink {
    pub fn new(root: impl Into<PathBuf>, recipe: &str, config_text: &str, seed: u64) -> Result<Self> {
        if recipe.is_empty() || recipe.contains(['/', '\\']) || recipe.starts_with('.') {
            return Err(Error::Config(format!("`{recipe}` is not a valid output name")));
        }
        let root = root.into();
        let dir = root.join(recipe);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let stale = dir.join(MANIFEST_NAME);
        if stale.exists() {
            fs::remove_file(&stale).map_err(|e| Error::io(&stale, e))?;
        }
        Ok(OutputSink {
            root,
            recipe: recipe.to_string(),
            config_sha256: sha256_hex(config_text.as_bytes()),
            seed,
            outputs: Vec::new(),
            counters: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn dir(&self) -> PathBuf {
        self.root.join(&self.recipe)
    }

    fn next_index(&mut self, kind: &str) -> usize {
        match self.counters.iter_mut().find(|(k, _)| k == kind) {
            Some((_, n)) => {
                *n += 1;
                *n
            }
            None => {
                self.counters.push((kind.to_string(), 0));
                0
            }
        }
    }

    fn write(&mut self, name: String, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir().join(&name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.outputs.push(OutputEntry {
            path: format!("{}/{name}", self.recipe),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(path)
    }

    /// Writes `<kind>-<index>.csv`, numbering each kind from zero.
    pub fn table(&mut self, kind: &str, table: &Table) -> Result<PathBuf> {
        let i = self.next_index(kind);
        self.write(format!("{kind}-{i}.csv"), table.to_csv().as_bytes())
    }

    /// Writes `<kind>-<index>.json`.
    pub fn json<T: Serialize>(&mut self, kind: &str, value: &T) -> Result<PathBuf> {
        let i = self.next_index(kind);
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
        text.push('\n');
        self.write(format!("{kind}-{i}.json"), text.as_bytes())
    }

    /// Writes the manifest last, atomically.
    pub fn finish(self, status: RunStatus) -> Result<RunManifest> {
        let manifest = RunManifest {
            recipe: self.recipe.clone(),
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: self.config_sha256,
            seed: self.seed,
            outputs: self.outputs,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            status,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
        write_atomic(&self.root.join(&self.recipe).join(MANIFEST_NAME), text.as_bytes())?;
        Ok(manifest)
    }
}

/// Files whose contents no longer match the manifest under `root`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mismatch {
    pub path: String,
    pub reason: String,
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Re-hashes every listed output of the recipe directory `dir`.
pub fn verify_manifest(dir: &Path) -> Result<Vec<Mismatch>> {
    let manifest = read_manifest(dir)?;
    let root = dir.parent().unwrap_or(Path::new("."));
    let mut bad = Vec::new();
    for o in &manifest.outputs {
        match fs::read(root.join(&o.path)) {
            Ok(bytes) if sha256_hex(&bytes) == o.sha256 => {}
            Ok(_) => bad.push(Mismatch { path: o.path.clone(), reason: "checksum differs".into() }),
            Err(e) => bad.push(Mismatch { path: o.path.clone(), reason: e.to_string() }),
        }
    }
    Ok(bad)
}
