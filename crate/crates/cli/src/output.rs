//! Output files are staged in memory and committed together: every file is
//! first written to a temporary sibling, and only once all of them are on
//! disk are they renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Default)]
pub struct OutputSet {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl OutputSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, path: impl Into<PathBuf>, contents: impl Into<Vec<u8>>) {
        self.files.push((path.into(), contents.into()));
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }

    pub fn commit(self) -> CliResult<Vec<PathBuf>> {
        let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
        let cleanup = |staged: &[(PathBuf, PathBuf)]| {
            for (tmp, _) in staged {
                let _ = fs::remove_file(tmp);
            }
        };
        for (path, contents) in &self.files {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                if let Err(e) = fs::create_dir_all(dir) {
                    cleanup(&staged);
                    return Err(CliError::io(dir, e));
                }
            }
            let tmp = temp_name(path);
            let res = fs::File::create(&tmp).and_then(|mut f| {
                f.write_all(contents)?;
                f.sync_all()
            });
            if let Err(e) = res {
                let _ = fs::remove_file(&tmp);
                cleanup(&staged);
                return Err(CliError::io(path, e));
            }
            staged.push((tmp, path.clone()));
        }
        for (i, (tmp, path)) in staged.iter().enumerate() {
            if let Err(e) = fs::rename(tmp, path) {
                cleanup(&staged[i..]);
                return Err(CliError::io(path, e));
            }
        }
        Ok(staged.into_iter().map(|(_, p)| p).collect())
    }
}

fn temp_name(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp{}", std::process::id()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Canonical hash of a JSON value (object keys are sorted by serde_json).
pub fn config_hash(value: &serde_json::Value) -> String {
    sha256_hex(value.to_string().as_bytes())
}

pub fn to_json_bytes(value: &serde_json::Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("json value serializes");
    out.push(b'\n');
    out
}

/// CSV text with a leading `# config_hash=` line.
pub fn csv_with_hash(hash: &str, header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut out = format!("# config_hash={hash}\n{header}\n");
    for row in rows {
        out.push_str(&row);
        out.push('\n');
    }
    out
}

pub fn unix_timestamp() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
