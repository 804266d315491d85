//! Output directory with a manifest of every file written.

use crate::error::CliError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub wall_clock_seconds: f64,
    pub files: Vec<FileEntry>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub struct OutputDir {
    dir: PathBuf,
    files: Vec<FileEntry>,
    started: Instant,
}

impl OutputDir {
    /// Creates `dir`, removing files listed by a previous manifest. Any
    /// other existing entry is an error, so the directory never holds files
    /// the manifest does not list.
    pub fn prepare(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(&dir.display().to_string(), e))?;
        let manifest_path = dir.join(MANIFEST);
        if manifest_path.exists() {
            let text = std::fs::read_to_string(&manifest_path)
                .map_err(|e| CliError::io(&manifest_path.display().to_string(), e))?;
            let old: RunManifest = serde_json::from_str(&text)
                .map_err(|e| CliError::new("output_dir", format!("unreadable manifest in {}: {e}", dir.display())))?;
            for f in &old.files {
                let p = dir.join(&f.name);
                if p.exists() {
                    std::fs::remove_file(&p).map_err(|e| CliError::io(&p.display().to_string(), e))?;
                }
            }
            std::fs::remove_file(&manifest_path).map_err(|e| CliError::io(&manifest_path.display().to_string(), e))?;
        }
        let leftover = std::fs::read_dir(dir)
            .map_err(|e| CliError::io(&dir.display().to_string(), e))?
            .next()
            .is_some();
        if leftover {
            return Err(CliError::new(
                "output_dir",
                format!("{} contains files not listed in a manifest", dir.display()),
            ));
        }
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::io(&path.display().to_string(), e))?;
        self.files.push(FileEntry {
            name: name.into(),
            bytes: contents.len() as u64,
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("output serializes");
        text.push('\n');
        self.write(name, &text)
    }

    pub fn finish(self, command: &str, config_hash: &str) -> Result<RunManifest, CliError> {
        let manifest = RunManifest {
            tool: "carnot".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_hash: config_hash.into(),
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            files: self.files,
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        let path = self.dir.join(MANIFEST);
        std::fs::write(&path, text).map_err(|e| CliError::io(&path.display().to_string(), e))?;
        Ok(manifest)
    }
}
