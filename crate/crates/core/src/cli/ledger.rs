//! `ledger.json`: the config hash, seed lineage and a sha256 for every
//! artifact of a run directory.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matcher::WaveSeeds;

pub const LEDGER_FILE: &str = "ledger.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the run directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerWave {
    pub seeds: WaveSeeds,
    pub artifacts: Vec<Artifact>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLedger {
    pub config_hash: String,
    pub master_seed: u64,
    pub candidate_seed: u64,
    /// One entry per completed wave, appended in order.
    pub waves: Vec<LedgerWave>,
    /// Run-level outputs, rewritten whenever the run finishes.
    pub outputs: Vec<Artifact>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Writes `bytes` to `dir/rel` through a temporary file and returns its
/// ledger entry.
pub fn write_artifact(dir: &Path, rel: &str, bytes: &[u8]) -> Result<Artifact> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
    Ok(Artifact {
        path: rel.to_string(),
        sha256: hex::encode(Sha256::digest(bytes)),
    })
}

impl RunLedger {
    pub fn load(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(LEDGER_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| Error::State(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("ledger serializes");
        write_artifact(dir, LEDGER_FILE, text.as_bytes()).map(|_| ())
    }

    pub fn artifacts(&self) -> impl Iterator<Item = &Artifact> {
        self.waves.iter().flat_map(|w| w.artifacts.iter()).chain(self.outputs.iter())
    }

    /// Checks that every listed artifact exists with the recorded hash.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        check(dir, self.artifacts())
    }

    /// Like [`RunLedger::verify`] but only for completed waves. Run-level
    /// outputs are rebuilt by every run.
    pub fn verify_waves(&self, dir: &Path) -> Result<()> {
        check(dir, self.waves.iter().flat_map(|w| w.artifacts.iter()))
    }
}

fn check<'a>(dir: &Path, artifacts: impl Iterator<Item = &'a Artifact>) -> Result<()> {
    for a in artifacts {
        let found = sha256_file(&dir.join(&a.path))
            .map_err(|_| Error::State(format!("{}: listed in the ledger but missing", a.path)))?;
        if found != a.sha256 {
            return Err(Error::State(format!("{}: hash does not match the ledger", a.path)));
        }
    }
    Ok(())
}
