use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, ErrorKind, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, Result};

pub const LOCK_NAME: &str = ".latticetrap.lock";

/// Output directory held for the lifetime of a run. The lockfile is created
/// exclusively and removed on drop.
pub struct OutputDir {
    dir: PathBuf,
    lock: PathBuf,
}

impl OutputDir {
    pub fn lock(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(format!("cannot create {}", dir.display()), e))?;
        let lock = dir.join(LOCK_NAME);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) if e.kind() == ErrorKind::AlreadyExists => return Err(CliError::Locked(dir.into())),
            Err(e) => return Err(CliError::io(format!("cannot create {}", lock.display()), e)),
        }
        Ok(Self { dir: dir.into(), lock })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn create(&self, name: &str) -> Result<BufWriter<File>> {
        let p = self.path(name);
        let f = File::create(&p).map_err(|e| CliError::io(format!("cannot create {}", p.display()), e))?;
        Ok(BufWriter::new(f))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(format!("cannot write {name}"), e))?;
        Ok(self.path(name))
    }

    /// Write a CSV through `f`, which gets a buffered writer.
    pub fn write_csv(&self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> latticetrap::Result<()>) -> Result<PathBuf> {
        let mut w = self.create(name)?;
        f(&mut w)?;
        w.flush().map_err(|e| CliError::io(format!("cannot write {name}"), e))?;
        Ok(self.path(name))
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_lock_fails_until_first_drops() {
        let tmp = tempfile::tempdir().unwrap();
        let a = OutputDir::lock(tmp.path()).unwrap();
        let e = OutputDir::lock(tmp.path()).err().unwrap();
        assert_eq!(e.exit_code(), 2);
        drop(a);
        assert!(!tmp.path().join(LOCK_NAME).exists());
        OutputDir::lock(tmp.path()).unwrap();
    }
}
