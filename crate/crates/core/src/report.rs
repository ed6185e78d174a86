//! Reproducible report writing: every output embeds the tool version, a
//! hash of the effective configuration, the seed, and the tolerances in
//! force; files are written atomically (temp file + rename).

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct ReproHeader {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub tolerances: serde_json::Value,
}

impl ReproHeader {
    pub fn new<C: Serialize>(config: &C, seed: u64, tolerances: serde_json::Value) -> Self {
        let canonical = serde_json::to_string(config).unwrap_or_default();
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        ReproHeader {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: format!("{:x}", hasher.finalize()),
            seed,
            tolerances,
        }
    }
}

#[derive(Debug, Serialize)]
struct Report<'a, T: Serialize> {
    header: &'a ReproHeader,
    #[serde(flatten)]
    payload: &'a T,
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    ));
    let mut fh = std::fs::File::create(&tmp)
        .map_err(|e| Error::io(tmp.display().to_string(), e))?;
    fh.write_all(bytes).map_err(|e| Error::io(tmp.display().to_string(), e))?;
    fh.sync_all().map_err(|e| Error::io(tmp.display().to_string(), e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path.display().to_string(), e))
}

/// JSON report: `{ header: {...}, ...payload }`.
pub fn write_json<T: Serialize>(path: &Path, header: &ReproHeader, payload: &T) -> Result<()> {
    let report = Report { header, payload };
    let mut body = serde_json::to_vec_pretty(&report)?;
    body.push(b'\n');
    atomic_write(path, &body)
}

/// CSV with the header serialized into leading comment lines.
pub fn write_csv(
    path: &Path,
    header: &ReproHeader,
    columns: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!(
        "# tool={} version={} config_sha256={} seed={}\n",
        header.tool, header.version, header.config_sha256, header.seed
    ));
    out.push_str(&format!("# tolerances={}\n", header.tolerances));
    out.push_str(&columns.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_report_embeds_header_and_is_atomic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.json");
        let header = ReproHeader::new(&serde_json::json!({"a": 1}), 42, serde_json::json!({"tol": 1e-4}));
        write_json(&path, &header, &serde_json::json!({"value": 3})).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["header"]["seed"], 42);
        assert_eq!(v["header"]["config_sha256"].as_str().unwrap().len(), 64);
        assert_eq!(v["value"], 3);
        // no stray temp files
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn identical_configs_hash_identically() {
        let h1 = ReproHeader::new(&serde_json::json!({"x": [1, 2]}), 0, serde_json::json!(null));
        let h2 = ReproHeader::new(&serde_json::json!({"x": [1, 2]}), 0, serde_json::json!(null));
        let h3 = ReproHeader::new(&serde_json::json!({"x": [1, 3]}), 0, serde_json::json!(null));
        assert_eq!(h1.config_sha256, h2.config_sha256);
        assert_ne!(h1.config_sha256, h3.config_sha256);
    }

    #[test]
    fn csv_report_has_comment_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let header = ReproHeader::new(&1u32, 7, serde_json::json!({}));
        write_csv(&path, &header, &["k", "v"], &[vec!["1".into(), "2.5".into()]]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# tool="));
        assert!(text.contains("seed=7"));
        assert!(text.contains("k,v\n1,2.5\n"));
    }
}
