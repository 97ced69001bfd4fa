//! CSV tables and the run manifest.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{usage, RunError};

pub const MANIFEST: &str = "manifest.json";

/// Shortest representation that parses back to the same bits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else if v == 0.0 || (1e-5..1e16).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// One output file, held in memory until the run succeeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "{}", self.name);
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub experiment: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub config: RunConfig,
    pub outputs: Vec<OutputEntry>,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Makes `dir` ready for a run: created if missing, and emptied of a
/// previous run's files. Anything not listed in an old manifest is left
/// alone and refuses the run.
pub fn prepare_dir(dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
    let manifest_path = dir.join(MANIFEST);
    let mut known: Vec<String> = Vec::new();
    if manifest_path.exists() {
        let text = fs::read_to_string(&manifest_path).map_err(|e| RunError::io(&manifest_path, e))?;
        if let Ok(m) = serde_json::from_str::<Manifest>(&text) {
            known = m.outputs.into_iter().map(|o| o.file).collect();
        }
        known.push(MANIFEST.into());
    }
    let entries = fs::read_dir(dir).map_err(|e| RunError::io(dir, e))?;
    let mut stale = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| RunError::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if !known.contains(&name) {
            return usage(format!(
                "output directory {} contains {name}, which no previous run recorded",
                dir.display()
            ));
        }
        stale.push(entry.path());
    }
    // manifest goes first so an interrupted cleanup never looks complete
    stale.sort_by_key(|p| p.file_name().map(|n| n != MANIFEST));
    for p in stale {
        fs::remove_file(&p).map_err(|e| RunError::io(&p, e))?;
    }
    Ok(())
}

/// Writes the tables, then the manifest.
pub fn write_run(dir: &Path, cfg: &RunConfig, tables: &[Table], started_unix: u64) -> Result<Manifest, RunError> {
    let mut outputs = Vec::with_capacity(tables.len());
    for t in tables {
        let text = t.render();
        let path = dir.join(&t.name);
        fs::write(&path, &text).map_err(|e| RunError::io(&path, e))?;
        outputs.push(OutputEntry {
            file: t.name.clone(),
            bytes: text.len(),
            sha256: sha256_hex(text.as_bytes()),
        });
    }
    let manifest = Manifest {
        tool: "lifschitz-lab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        experiment: cfg.experiment().name().into(),
        started_unix,
        finished_unix: unix_now(),
        config: cfg.clone(),
        outputs,
    };
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    fs::write(&path, text).map_err(|e| RunError::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_bit_for_bit() {
        for v in [
            0.1,
            1.0 / 3.0,
            2.4674011002723395,
            1e-300,
            -7.5e-6,
            123456789012345680.0,
            f64::MIN_POSITIVE,
            f64::MAX,
            -0.0,
        ] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(fmt_f64(f64::NAN), "nan");
        assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
        assert_eq!(fmt_f64(0.25), "0.25");
        assert_eq!(fmt_f64(1e-7), "1e-7");
    }

    #[test]
    fn table_renders_header_and_rows() {
        let mut t = Table::new("x.csv", &["a", "b"]);
        t.push(vec!["1".into(), fmt_f64(0.5)]);
        assert_eq!(t.render(), "a,b\n1,0.5\n");
    }

    #[test]
    fn foreign_files_block_the_run() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("notes.txt"), "mine").unwrap();
        assert_eq!(prepare_dir(dir.path()).unwrap_err().exit_code(), 2);
    }
}
