use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::manifest::{sha256_hex, FileHash, RunManifest, MANIFEST_FILE};
use crate::{CliError, CliResult};

/// Output directory with a record of every file written.
pub struct Output {
    dir: PathBuf,
    files: Vec<FileHash>,
}

/// Shortest round-trip decimal form.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

impl Output {
    pub fn create(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Compute(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn files(&self) -> &[FileHash] {
        &self.files
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::Compute(format!("cannot write {}: {e}", path.display())))?;
        self.files.push(FileHash {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    /// Comma-separated with a header row and LF line endings.
    pub fn csv<R>(&mut self, name: &str, header: &[&str], rows: R) -> CliResult<()>
    where
        R: IntoIterator<Item = Vec<String>>,
    {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let fail = |e: csv::Error| CliError::Compute(format!("{name}: {e}"));
        w.write_record(header).map_err(fail)?;
        for row in rows {
            w.write_record(&row).map_err(fail)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Compute(format!("{name}: {e}")))?;
        self.write(name, &bytes)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Compute(format!("{name}: {e}")))?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn write_manifest(&mut self, manifest: &RunManifest) -> CliResult<()> {
        let mut bytes = serde_json::to_vec_pretty(manifest).map_err(|e| CliError::Compute(format!("manifest: {e}")))?;
        bytes.push(b'\n');
        let path = self.dir.join(MANIFEST_FILE);
        std::fs::write(&path, bytes).map_err(|e| CliError::Compute(format!("cannot write {}: {e}", path.display())))
    }
}
