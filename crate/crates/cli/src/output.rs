use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{Context, Result};
use chrono::NaiveDate;
use serde::Serialize;

/// Written next to every output file.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub date_range: Option<(NaiveDate, NaiveDate)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

/// `x.csv` -> `x.json`, `x.model.json` -> `x.model.meta.json`.
pub fn provenance_path(path: &Path) -> PathBuf {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => path.with_extension("meta.json"),
        _ => path.with_extension("json"),
    }
}

/// Remembers every file written by a command so a failed run can remove
/// them all.
#[derive(Debug, Default)]
pub struct Outputs {
    written: Mutex<Vec<PathBuf>>,
}

impl Outputs {
    pub fn track(&self, path: &Path) {
        self.written
            .lock()
            .expect("output list poisoned")
            .push(path.to_path_buf());
    }

    pub fn files(&self) -> Vec<PathBuf> {
        self.written.lock().expect("output list poisoned").clone()
    }

    /// Creates `path` (and its parents), tracks it and hands the writer to `f`.
    pub fn write_with<F>(&self, path: &Path, f: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        self.track(path);
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush().with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&self, path: &Path, value: &T) -> Result<()> {
        self.write_with(path, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }

    pub fn write_provenance(&self, path: &Path, prov: &Provenance) -> Result<()> {
        self.write_json(&provenance_path(path), prov)
    }

    /// Deletes everything written so far; errors are ignored since the
    /// command is already failing.
    pub fn discard(&self) {
        for p in self.files() {
            let _ = std::fs::remove_file(p);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_names() {
        assert_eq!(provenance_path(Path::new("a/b.csv")), Path::new("a/b.json"));
        assert_eq!(
            provenance_path(Path::new("a/b.model.json")),
            Path::new("a/b.model.meta.json")
        );
    }

    #[test]
    fn discard_removes_tracked_files() {
        let dir = tempfile::tempdir().unwrap();
        let out = Outputs::default();
        let p = dir.path().join("x/y.csv");
        out.write_with(&p, |w| Ok(writeln!(w, "a")?)).unwrap();
        assert!(p.exists());
        out.discard();
        assert!(!p.exists());
    }
}
