//! Output directories that refuse to write outside their root, keep an
//! inventory of what they wrote and finish with an atomic manifest.

use std::fs;
use std::path::{Component, Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

/// One written file, relative to the directory that owns the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub kind: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub code_version: String,
    pub seed: u64,
    pub wall_clock_seconds: f64,
    pub files: Vec<FileEntry>,
    pub summary: serde_json::Value,
    pub config: RunConfig,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<RunManifest, CliError> {
        let path = dir.join(MANIFEST);
        let text =
            fs::read_to_string(&path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Last file of the given kind in the inventory.
    pub fn last_of_kind(&self, kind: &str) -> Option<&FileEntry> {
        self.files.iter().rev().find(|f| f.kind == kind)
    }
}

#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<FileEntry>,
    started: Instant,
}

/// Rejects absolute paths and any `..` or prefix component.
fn relative(rel: &str) -> Result<PathBuf, CliError> {
    let p = Path::new(rel);
    if rel.is_empty() || p.components().any(|c| !matches!(c, Component::Normal(_))) {
        return Err(CliError::Other(format!("refusing to write outside the output directory: {rel:?}")));
    }
    Ok(p.to_path_buf())
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<OutputDir, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::Other(format!("cannot create {}: {e}", root.display())))?;
        Ok(OutputDir { root: root.to_path_buf(), files: Vec::new(), started: Instant::now() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    /// Renders a file in memory, then writes it and records it.
    pub fn write_with<F>(&mut self, rel: &str, kind: &str, render: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> batchelor_core::Result<()>,
    {
        let path = self.root.join(relative(rel)?);
        let mut buf = Vec::new();
        render(&mut buf)?;
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, &buf).map_err(|e| CliError::Other(format!("cannot write {}: {e}", path.display())))?;
        self.files.push(FileEntry {
            path: rel.to_string(),
            kind: kind.to_string(),
            bytes: buf.len() as u64,
            sha256: hex::encode(Sha256::digest(&buf)),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, kind: &str, value: &T) -> Result<(), CliError> {
        self.write_with(rel, kind, |w| batchelor_core::io::write_json(value, w))
    }

    /// A subdirectory with its own inventory; merge it back with [`adopt`].
    ///
    /// [`adopt`]: OutputDir::adopt
    pub fn child(&self, rel: &str) -> Result<OutputDir, CliError> {
        OutputDir::create(&self.root.join(relative(rel)?))
    }

    /// Takes over a child's inventory, prefixing its paths.
    pub fn adopt(&mut self, prefix: &str, child: OutputDir) {
        for mut f in child.files {
            f.path = format!("{prefix}/{}", f.path);
            self.files.push(f);
        }
    }

    /// Writes `manifest.json` through a temporary file and a rename, so a
    /// reader never sees a partial manifest.
    pub fn finish(
        mut self,
        command: &str,
        config: &RunConfig,
        seed: u64,
        summary: serde_json::Value,
    ) -> Result<(RunManifest, OutputDir), CliError> {
        let manifest = RunManifest {
            command: command.to_string(),
            config_hash: config.hash(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            files: self.files.clone(),
            summary,
            config: config.clone(),
        };
        let tmp = self.root.join(format!("{MANIFEST}.tmp"));
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        fs::write(&tmp, &text)?;
        fs::rename(&tmp, self.root.join(MANIFEST))?;
        self.files.push(FileEntry {
            path: MANIFEST.to_string(),
            kind: "manifest".to_string(),
            bytes: text.len() as u64,
            sha256: hex::encode(Sha256::digest(text.as_bytes())),
        });
        Ok((manifest, self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_escaping_paths() {
        for bad in ["../x", "/etc/passwd", "a/../../b", "", "./a"] {
            assert!(relative(bad).is_err(), "{bad}");
        }
        assert!(relative("a/b.csv").is_ok());
    }

    #[test]
    fn inventory_and_atomic_manifest() {
        let tmp = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(&tmp.path().join("run")).unwrap();
        out.write_with("a/b.txt", "text", |w| {
            w.extend_from_slice(b"hello");
            Ok(())
        })
        .unwrap();
        let mut child = out.child("sub").unwrap();
        child.write_json("x.json", "json", &[1, 2]).unwrap();
        out.adopt("sub", child);
        let cfg = RunConfig::preset("desk").unwrap();
        let (m, _) = out.finish("test", &cfg, 7, serde_json::json!({"ok": true})).unwrap();
        assert_eq!(m.files.len(), 2);
        assert_eq!(m.files[0].bytes, 5);
        assert_eq!(m.files[1].path, "sub/x.json");
        let back = RunManifest::read(&tmp.path().join("run")).unwrap();
        assert_eq!(back, m);
        assert!(!tmp.path().join("run/manifest.json.tmp").exists());
        assert_eq!(back.last_of_kind("json").unwrap().path, "sub/x.json");
    }
}
