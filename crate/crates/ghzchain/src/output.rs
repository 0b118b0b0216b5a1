//! Artifact plumbing: stable spec hashes for file names, atomic file
//! writes, CSV formatting, and the run manifest that makes every output
//! reproducible from its own metadata.

use crate::model::ChainSpec;
use crate::Result;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

/// First 12 hex digits of the SHA-256 of a string.
pub fn short_hash(content: &str) -> String {
    let digest = Sha256::digest(content.as_bytes());
    let mut s = String::with_capacity(12);
    for byte in digest.iter().take(6) {
        s.push_str(&format!("{byte:02x}"));
    }
    s
}

/// Short content hash of a spec's canonical TOML form; two runs share a
/// hash iff they share every parameter.
pub fn spec_hash(spec: &ChainSpec) -> String {
    short_hash(&spec.to_toml())
}

/// File name `<prefix>-<spec hash>.<ext>`.
pub fn artifact_name(prefix: &str, spec: &ChainSpec, ext: &str) -> String {
    format!("{prefix}-{}.{ext}", spec_hash(spec))
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Write via a sibling temp file and rename, so readers never observe a
/// half-written artifact.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let parent = path.parent().unwrap_or_else(|| Path::new("."));
    let stamp = TMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    let tmp: PathBuf = parent.join(format!(
        ".{}.{}.{stamp}.tmp",
        path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default(),
        std::process::id()
    ));
    std::fs::write(&tmp, contents)?;
    match std::fs::rename(&tmp, path) {
        Ok(()) => Ok(()),
        Err(e) => {
            let _ = std::fs::remove_file(&tmp);
            Err(e.into())
        }
    }
}

/// Decimal-point formatting for CSV cells: plain notation except for
/// magnitudes under 1e-4, which switch to scientific so trailing-zero
/// soup never hides a small value.
pub fn format_number(x: f64) -> String {
    if x != 0.0 && x.abs() < 1e-4 {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

/// Assemble a CSV table; every row must match the header width.
pub fn table_to_csv(headers: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    out.push_str(&headers.join(","));
    out.push('\n');
    for row in rows {
        assert_eq!(row.len(), headers.len(), "CSV row width mismatch");
        let cells: Vec<String> = row.iter().map(|x| format_number(*x)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Everything needed to reproduce one CLI run, written next to its
/// outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub spec: ChainSpec,
    pub seed: u64,
    pub outputs: Vec<String>,
    pub version: String,
    pub duration_seconds: f64,
}

impl RunManifest {
    pub fn new(subcommand: &str, spec: &ChainSpec, outputs: Vec<String>, duration_seconds: f64) -> Self {
        RunManifest {
            subcommand: subcommand.to_string(),
            spec: spec.clone(),
            seed: spec.seed,
            outputs,
            version: env!("CARGO_PKG_VERSION").to_string(),
            duration_seconds,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_json())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_parameter_sensitive() {
        let a = ChainSpec::default();
        let mut b = ChainSpec::default();
        assert_eq!(spec_hash(&a), spec_hash(&b));
        assert_eq!(spec_hash(&a).len(), 12);
        b.n = 4;
        assert_ne!(spec_hash(&a), spec_hash(&b));
        assert!(artifact_name("sweep", &a, "csv").ends_with(".csv"));
    }

    #[test]
    fn number_formatting_switches_at_1e4() {
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(661.0), "661");
        assert_eq!(format_number(0.25), "0.25");
        assert_eq!(format_number(0.0001), "0.0001");
        assert_eq!(format_number(0.00009), "9e-5");
        assert_eq!(format_number(-3.2e-7), "-3.2e-7");
    }

    #[test]
    fn csv_layout() {
        let csv = table_to_csv(
            &["delta", "mean_F", "stderr", "n_samples"],
            &[vec![0.2, 0.9987, 3.0e-5, 101.0], vec![0.5, 0.9952, 1.2e-4, 101.0]],
        );
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "delta,mean_F,stderr,n_samples");
        assert_eq!(lines[1], "0.2,0.9987,3e-5,101");
        assert_eq!(lines[2], "0.5,0.9952,0.00012,101");
    }

    #[test]
    fn atomic_write_and_manifest_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.json");
        let spec = ChainSpec::default();
        let manifest = RunManifest::new("evolve", &spec, vec!["trace.csv".into()], 1.25);
        manifest.write(&path).unwrap();
        let back: RunManifest =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back.subcommand, "evolve");
        assert_eq!(back.spec, spec);
        assert_eq!(back.outputs, vec!["trace.csv".to_string()]);
        // No stray temp files left behind.
        let leftovers: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().ends_with(".tmp"))
            .collect();
        assert!(leftovers.is_empty());
    }
}
