//! Content-addressed stage cache and the output-directory lock.

use std::fs::{self, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::digest;
use crate::error::{PipelineError, Result};

/// Stage results stored as `<root>/<stage>/<key>.json`.
#[derive(Clone, Debug)]
pub struct StageCache {
    root: PathBuf,
}

impl StageCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Key over the stage name, its own inputs and the keys of the stages it reads.
    pub fn key<I: Serialize>(stage: &str, inputs: &I, upstream: &[&str]) -> Result<String> {
        let inputs = serde_json::to_string(inputs)?;
        let mut parts = vec![stage, inputs.as_str()];
        parts.extend_from_slice(upstream);
        Ok(digest(&parts))
    }

    fn path(&self, stage: &str, key: &str) -> PathBuf {
        self.root.join(stage).join(format!("{key}.json"))
    }

    pub fn load<T: DeserializeOwned>(&self, stage: &str, key: &str) -> Result<Option<T>> {
        match fs::read_to_string(self.path(stage, key)) {
            Ok(text) => match serde_json::from_str(&text) {
                Ok(v) => Ok(Some(v)),
                Err(e) => {
                    tracing::warn!(stage, error = %e, "discarding unreadable cache entry");
                    Ok(None)
                }
            },
            Err(e) if e.kind() == ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Writes through a temporary file so an interrupted run never leaves a torn entry.
    pub fn store<T: Serialize>(&self, stage: &str, key: &str, value: &T) -> Result<()> {
        let path = self.path(stage, key);
        fs::create_dir_all(path.parent().expect("cache path has a parent"))?;
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec(value)?)?;
        fs::rename(tmp, path)?;
        Ok(())
    }
}

/// Exclusive ownership of an output directory for the lifetime of a run.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub const FILE: &'static str = ".lock";

    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(Self::FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(Self { path })
            }
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(PipelineError::Locked(path)),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
