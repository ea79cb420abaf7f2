//! File helpers that keep the path in error messages.

use std::fs;
use std::path::Path;

use sleepgmu::Result;

fn with_path(path: &Path, e: std::io::Error) -> sleepgmu::Error {
    std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into()
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| with_path(path, e))
}

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| with_path(path, e))
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| with_path(path, e))
}
