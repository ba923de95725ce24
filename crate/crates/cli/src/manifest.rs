//! Run manifests: one per stage output, re-checkable with `verify`.

use std::fs::{self, File};
use std::io::{self, BufReader, Read};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DIRECTORY_MANIFEST: &str = "run-manifest.json";
pub const SIDECAR_SUFFIX: &str = ".manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let mut reader = BufReader::new(file);
        let mut hasher = Sha256::new();
        let mut buf = vec![0u8; 1 << 16];
        let mut bytes = 0u64;
        loop {
            let n = reader
                .read(&mut buf)
                .with_context(|| format!("reading {}", path.display()))?;
            if n == 0 {
                break;
            }
            hasher.update(&buf[..n]);
            bytes += n as u64;
        }
        Ok(FileDigest {
            path: path.to_path_buf(),
            sha256: hex::encode(hasher.finalize()),
            bytes,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub tool_version: String,
    pub data_schema_version: u32,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub summary: serde_json::Value,
    pub started_at: String,
    pub finished_at: String,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Collects inputs at stage start; outputs are hashed on `finish`.
pub struct ManifestBuilder {
    stage: String,
    seed: Option<u64>,
    config: serde_json::Value,
    inputs: Vec<FileDigest>,
    started_at: String,
}

impl ManifestBuilder {
    pub fn start<C: Serialize>(stage: &str, seed: Option<u64>, config: &C, inputs: &[&Path]) -> Result<Self> {
        Ok(ManifestBuilder {
            stage: stage.to_string(),
            seed,
            config: serde_json::to_value(config)?,
            inputs: inputs.iter().map(|p| FileDigest::of(p)).collect::<Result<_>>()?,
            started_at: now(),
        })
    }

    pub fn finish<S: Serialize>(self, outputs: &[PathBuf], summary: &S, manifest_path: &Path) -> Result<RunManifest> {
        let manifest = RunManifest {
            stage: self.stage,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            data_schema_version: daedra_core::DATA_SCHEMA_VERSION,
            seed: self.seed,
            config: self.config,
            inputs: self.inputs,
            outputs: outputs.iter().map(|p| FileDigest::of(p)).collect::<Result<_>>()?,
            summary: serde_json::to_value(summary)?,
            started_at: self.started_at,
            finished_at: now(),
        };
        write_json(manifest_path, &manifest)?;
        Ok(manifest)
    }
}

pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(SIDECAR_SUFFIX);
    output.with_file_name(name)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Mismatch {
    pub role: &'static str,
    pub path: PathBuf,
    pub problem: String,
}

/// Re-hash every recorded input and output.
pub fn verify(manifest: &RunManifest) -> Vec<Mismatch> {
    let mut out = Vec::new();
    let groups = [("input", &manifest.inputs), ("output", &manifest.outputs)];
    for (role, files) in groups {
        for recorded in files {
            let problem = match FileDigest::of(&recorded.path) {
                Ok(d) if d.sha256 == recorded.sha256 && d.bytes == recorded.bytes => continue,
                Ok(d) => format!("sha256 {} (recorded {})", d.sha256, recorded.sha256),
                Err(e) => format!("{e:#}"),
            };
            out.push(Mismatch {
                role,
                path: recorded.path.clone(),
                problem,
            });
        }
    }
    out
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing manifest {}", path.display()))
}

/// Refuse to clobber an existing file unless forced.
pub fn guard_file(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        bail!("{} already exists (pass --force to overwrite)", path.display());
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

/// Refuse a non-empty output directory unless forced.
pub fn guard_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let occupied = fs::read_dir(dir)
            .with_context(|| format!("listing {}", dir.display()))?
            .next()
            .is_some();
        if occupied && !force {
            bail!("{} is not empty (pass --force to overwrite)", dir.display());
        }
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Outputs never alias inputs.
pub fn guard_distinct(inputs: &[&Path], outputs: &[&Path]) -> Result<()> {
    let canon = |p: &Path| -> io::Result<PathBuf> { fs::canonicalize(p) };
    for o in outputs {
        let Ok(o_abs) = canon(o) else { continue };
        for i in inputs {
            if canon(i).map(|i| i == o_abs).unwrap_or(false) {
                bail!("output {} would overwrite input {}", o.display(), i.display());
            }
        }
    }
    Ok(())
}
