//! Artifact writing: atomic renames and run manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// A file the run will produce, held in memory until every step succeeded.
pub struct Artifact {
    pub path: Option<PathBuf>,
    pub bytes: Vec<u8>,
}

#[derive(Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'a str,
    pub config_sha256: String,
    pub config: &'a C,
    pub seed: Option<u64>,
    pub input_sha256: Option<String>,
    pub outputs: Vec<String>,
}

impl<'a, C: Serialize> Manifest<'a, C> {
    pub fn new(subcommand: &'a str, config: &'a C, seed: Option<u64>, input: Option<&[u8]>) -> Result<Self, CliError> {
        let canonical = serde_json::to_vec(config).map_err(|e| CliError::Io(e.to_string()))?;
        Ok(Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            config_sha256: sha256_hex(&canonical),
            config,
            seed,
            input_sha256: input.map(sha256_hex),
            outputs: Vec::new(),
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `<path>.manifest.json`.
pub fn manifest_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    path.with_file_name(name)
}

/// Writes `bytes` to a temporary file beside `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    fs::create_dir_all(&dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Emits the artifacts and the manifest. Without an output path the primary
/// artifact goes to stdout and the manifest to stderr.
pub fn emit<C: Serialize>(mut manifest: Manifest<'_, C>, artifacts: Vec<Artifact>) -> Result<(), CliError> {
    manifest.outputs = artifacts
        .iter()
        .filter_map(|a| a.path.as_ref())
        .map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default())
        .collect();
    let mut text = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
    text.push(b'\n');
    let primary = artifacts.first().and_then(|a| a.path.clone());
    for a in &artifacts {
        match &a.path {
            Some(p) => write_atomic(p, &a.bytes)?,
            None => std::io::stdout()
                .write_all(&a.bytes)
                .map_err(|e| CliError::Io(e.to_string()))?,
        }
    }
    match primary {
        Some(p) => write_atomic(&manifest_path(&p), &text)?,
        None => {
            let _ = std::io::stderr().write_all(&text);
        }
    }
    Ok(())
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, std::io::Error> {
    fs::read(path)
}
