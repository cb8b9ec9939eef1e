//! Run directories and their provenance manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sepsis_core::config::sha256_hex;
use sepsis_core::{Error, Result};

pub const MANIFEST: &str = "run.json";

/// An output directory owned by one run.
pub struct RunDir {
    pub path: PathBuf,
    files: Vec<String>,
}

/// Creates `root/name`. An existing directory is an error unless `force`,
/// in which case it is removed first.
pub fn create(root: &Path, name: &str, force: bool) -> Result<RunDir> {
    if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
        return Err(Error::Config(format!("invalid run name '{name}'")));
    }
    let path = root.join(name);
    if path.exists() {
        if !force {
            return Err(Error::State(format!(
                "run directory {} already exists; pass --force to replace it",
                path.display()
            )));
        }
        fs::remove_dir_all(&path).map_err(|e| Error::io(&path, e))?;
    }
    fs::create_dir_all(&path).map_err(|e| Error::io(&path, e))?;
    Ok(RunDir { path, files: Vec::new() })
}

/// Default run name: the command plus a short digest of the configuration
/// digest and the command's arguments.
pub fn default_name(command: &str, config_digest: &str, args: &str) -> String {
    let id = sha256_hex(format!("{command}\n{config_digest}\n{args}").as_bytes());
    format!("{command}-{}", &id[..12])
}

impl RunDir {
    pub fn file(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.path.join(name)
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let p = self.file(name);
        fs::write(&p, contents).map_err(|e| Error::io(&p, e))
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
        self.write(name, text + "\n")
    }

    /// Writes `run.json` listing every artifact written so far.
    pub fn finish<C: Serialize>(mut self, manifest: Manifest<'_, C>) -> Result<PathBuf> {
        let files = std::mem::take(&mut self.files);
        let full = ManifestFile { manifest, files };
        self.write_json(MANIFEST, &full)?;
        Ok(self.path)
    }
}

#[derive(Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub command: &'a str,
    pub tool_version: &'a str,
    pub arguments: String,
    pub seed: u64,
    pub config_digest: String,
    pub config: &'a C,
}

#[derive(Serialize)]
struct ManifestFile<'a, C: Serialize> {
    #[serde(flatten)]
    manifest: Manifest<'a, C>,
    files: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refuses_to_overwrite_without_force() {
        let root = tempfile::tempdir().unwrap();
        let mut d = create(root.path(), "r1", false).unwrap();
        d.write("a.txt", "x").unwrap();
        assert!(matches!(create(root.path(), "r1", false), Err(Error::State(_))));
        assert!(root.path().join("r1/a.txt").exists());
        create(root.path(), "r1", true).unwrap();
        assert!(!root.path().join("r1/a.txt").exists());
    }

    #[test]
    fn rejects_path_like_names() {
        let root = tempfile::tempdir().unwrap();
        for bad in ["", "..", "a/b"] {
            assert!(create(root.path(), bad, false).is_err());
        }
    }

    #[test]
    fn default_name_depends_on_arguments() {
        let a = default_name("train", "d", "x");
        assert!(a.starts_with("train-") && a.len() == "train-".len() + 12);
        assert_ne!(a, default_name("train", "d", "y"));
        assert_eq!(a, default_name("train", "d", "x"));
    }
}
