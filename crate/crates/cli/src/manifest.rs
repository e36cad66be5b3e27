use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliResult;
use crate::io::{read_json, sha256_file, write_json, MANIFEST};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
    /// In the order stages last ran; a re-run replaces its earlier entry.
    pub stages: Vec<StageRecord>,
}

pub fn digests(dir: &Path, files: &[String]) -> CliResult<Vec<FileDigest>> {
    files.iter().map(|f| Ok(FileDigest { file: f.clone(), sha256: sha256_file(&dir.join(f))? })).collect()
}

pub fn load(dir: &Path) -> Option<RunManifest> {
    let p = dir.join(MANIFEST);
    p.is_file().then(|| read_json(&p).ok()).flatten()
}

pub fn record(dir: &Path, config: &RunConfig, stage: StageRecord) -> CliResult<()> {
    let mut m = load(dir).unwrap_or_else(|| RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: config.seed,
        config: config.clone(),
        stages: Vec::new(),
    });
    m.seed = config.seed;
    m.config = config.clone();
    m.stages.retain(|s| s.name != stage.name);
    m.stages.push(stage);
    write_json(&dir.join(MANIFEST), &m)
}

/// Files whose current digest differs from the manifest's latest record.
pub fn verify(dir: &Path, manifest: &RunManifest) -> CliResult<Vec<String>> {
    let mut latest = std::collections::BTreeMap::new();
    for s in &manifest.stages {
        for d in &s.outputs {
            latest.insert(d.file.clone(), d.sha256.clone());
        }
    }
    let mut bad = Vec::new();
    for (file, digest) in latest {
        let p = dir.join(&file);
        if !p.is_file() || sha256_file(&p)? != digest {
            bad.push(file);
        }
    }
    Ok(bad)
}
