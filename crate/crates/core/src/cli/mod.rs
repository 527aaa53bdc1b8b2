pub mod args;
pub mod commands;
pub mod config;
pub mod labels;
pub mod manifest;
pub mod render;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

/// A missing or malformed input. Exits with status 2.
#[derive(Debug)]
pub struct InputError {
    pub path: PathBuf,
    pub message: String,
}

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path.display(), self.message)
    }
}

impl std::error::Error for InputError {}

pub fn input_error(path: &Path, message: impl fmt::Display) -> anyhow::Error {
    InputError {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
    .into()
}

pub fn read_input(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| input_error(path, e))
}

pub fn parse_input<T, E: fmt::Display>(path: &Path, parse: impl FnOnce(&[u8]) -> Result<T, E>) -> Result<T> {
    let bytes = read_input(path)?;
    parse(&bytes).map_err(|e| input_error(path, e))
}

pub fn require_dir(path: &Path) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(input_error(path, "no such directory"))
    }
}

/// Files directly under `dir` whose name ends with `suffix`, sorted by name.
pub fn list_files(dir: &Path, suffix: &str) -> Result<Vec<PathBuf>> {
    require_dir(dir)?;
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| input_error(dir, e))? {
        let path = entry.map_err(|e| input_error(dir, e))?.path();
        let matches = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.ends_with(suffix));
        if matches && path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// File name with `suffix` removed.
pub fn stem(path: &Path, suffix: &str) -> String {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    name.strip_suffix(suffix).unwrap_or(name).to_string()
}

pub fn write_output(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn to_json_bytes<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable");
    out.push(b'\n');
    out
}

/// Runs `f` on a pool of `jobs` worker threads.
pub fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .context("starting worker pool")?;
    Ok(pool.install(f))
}

pub fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    parse_input(path, |b: &[u8]| serde_json::from_slice::<T>(b))
}
