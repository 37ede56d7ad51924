use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::CliError;

/// Files written by one command. Unless [`Artifacts::commit`] is called, everything written
/// is deleted again when the set is dropped, so a failed command leaves no partial output.
#[derive(Debug)]
pub struct Artifacts {
    dir: PathBuf,
    written: Vec<PathBuf>,
    committed: bool,
}

impl Artifacts {
    pub fn open(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let meta = fs::metadata(dir).map_err(|e| CliError::io(dir, e))?;
        if meta.permissions().readonly() {
            return Err(CliError::Config(format!("output_dir: {} is not writable", dir.display())));
        }
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new(), committed: false })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        if !self.written.contains(&path) {
            self.written.push(path.clone());
        }
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(deepalloc::Error::from)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.written
    }

    /// Keeps the written files.
    pub fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for Artifacts {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for path in &self.written {
            if let Err(e) = fs::remove_file(path) {
                log::warn!("could not remove partial artifact {}: {e}", path.display());
            }
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::io(path, std::io::Error::other(e)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncommitted_files_are_removed() {
        let dir = tempfile::tempdir().unwrap();
        let kept = {
            let mut a = Artifacts::open(dir.path()).unwrap();
            a.write("keep.txt", b"x").unwrap();
            a.commit()
        };
        {
            let mut a = Artifacts::open(dir.path()).unwrap();
            a.write("drop.txt", b"y").unwrap();
        }
        assert!(kept[0].exists());
        assert!(!dir.path().join("drop.txt").exists());
    }
}
