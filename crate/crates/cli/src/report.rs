//! Run reports and the output directory they describe.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Failure;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    /// Worst observed value of the checked quantity.
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, pass: bool, value: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Check { name: name.to_string(), pass, value, tolerance, detail: detail.into() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub command: String,
    pub scenario: String,
    pub scenario_sha256: Option<String>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub schedule: String,
    pub wall_time_s: f64,
    pub status: String,
    pub exit_code: i32,
    pub error: Option<String>,
    pub checks: Vec<Check>,
    pub files: Vec<FileEntry>,
    pub notes: Vec<String>,
}

/// Output directory that records every file it writes.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Outputs {
    pub fn create(dir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(dir)?;
        Ok(Outputs { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn into_files(self) -> Vec<FileEntry> {
        self.files
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        fs::write(self.dir.join(name), bytes)?;
        self.files.push(FileEntry { path: name.to_string(), bytes: bytes.len(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    pub fn csv<I, R>(&mut self, name: &str, header: &[&str], rows: I) -> Result<(), Failure>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Failure::Io(e.to_string()))?;
        self.write(name, &bytes)
    }

    pub fn matrix(&mut self, name: &str, m: &fracmono_core::DtnMatrix) -> Result<(), Failure> {
        let mut buf = Vec::new();
        m.write_csv(&mut buf)?;
        self.write(name, &buf)
    }
}

/// Shortest round-trip decimal, so CSVs are byte-stable across runs.
/// Very small or large magnitudes switch to exponent form.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !a.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn write_report(dir: &Path, report: &RunReport) -> Result<(), Failure> {
    fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(report).map_err(|e| Failure::Io(e.to_string()))?;
    fs::write(dir.join("report.json"), text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn manifest_lists_written_files() {
        let dir = std::env::temp_dir().join(format!("fracmono-report-{}", std::process::id()));
        let mut out = Outputs::create(&dir).unwrap();
        out.csv("a.csv", &["x", "value"], vec![vec![num(0.5), num(-1.0)]]).unwrap();
        let files = out.into_files();
        assert_eq!(files.len(), 1);
        let bytes = fs::read(dir.join("a.csv")).unwrap();
        assert_eq!(bytes, b"x,value\n0.5,-1\n");
        assert_eq!(files[0].sha256, sha256_hex(&bytes));
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.0, 1.0, -2.5, 1e-18, 3.25e-5, 6.02e23, 0.1 + 0.2] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(num(1e-18), "1e-18");
        assert_eq!(num(0.5), "0.5");
    }
}
