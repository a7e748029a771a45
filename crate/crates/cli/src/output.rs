//! CSV, plot-data, and manifest writers.
//!
//! Numbers are printed with 17 significant digits so reruns diff byte-for-
//! byte. Statistic columns come in (value, err) pairs where err is either a
//! standard error or the literal tag `exact`; coordinate columns (indices,
//! frequencies, times) stand alone.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// 17 significant digits: enough to round-trip any f64.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub const EXACT: &str = "exact";

/// Collects the relative paths of everything written, for the manifest index.
pub struct OutputSink {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputSink {
    pub fn new(root: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(root.join("paths"))?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn write_csv(
        &mut self,
        name: &str,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> std::io::Result<()> {
        let mut body = String::new();
        body.push_str(&header.join(","));
        body.push('\n');
        for row in rows {
            debug_assert_eq!(row.len(), header.len(), "row width mismatch in {name}");
            body.push_str(&row.join(","));
            body.push('\n');
        }
        self.write_bytes(name, body.as_bytes())
    }

    /// Space-separated plot data with a `#`-prefixed column header.
    pub fn write_dat(
        &mut self,
        name: &str,
        columns: &[&str],
        rows: &[Vec<f64>],
    ) -> std::io::Result<()> {
        let mut body = String::new();
        body.push_str("# ");
        body.push_str(&columns.join(" "));
        body.push('\n');
        for row in rows {
            let line: Vec<String> = row.iter().map(|&v| num(v)).collect();
            body.push_str(&line.join(" "));
            body.push('\n');
        }
        self.write_bytes(name, body.as_bytes())
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut file = fs::File::create(&path)?;
        file.write_all(bytes)?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Atomic write via a temporary sibling plus rename.
    pub fn write_atomic(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        let path = self.root.join(name);
        let tmp = self.root.join(format!("{name}.tmp"));
        {
            let mut file = fs::File::create(&tmp)?;
            file.write_all(bytes)?;
            file.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn sorted_files(&self) -> Vec<String> {
        let mut files = self.files.clone();
        files.sort();
        files.dedup();
        files
    }
}
