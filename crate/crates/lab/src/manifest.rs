use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const SCHEMA_VERSION: &str = "1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ok,
    /// Completed, but at least one invariant check failed.
    Violated,
    Failed,
    /// Not run because a prerequisite failed.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub error: Option<String>,
    pub violations: Vec<String>,
    pub notes: Vec<String>,
    pub scalars: BTreeMap<String, f64>,
    /// Paths relative to the output directory.
    pub files: Vec<String>,
}

impl StageRecord {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            status: StageStatus::Ok,
            error: None,
            violations: Vec::new(),
            notes: Vec::new(),
            scalars: BTreeMap::new(),
            files: Vec::new(),
        }
    }

    pub fn scalar(&mut self, key: &str, value: f64) {
        self.scalars.insert(key.into(), value);
    }

    /// Records a check; a failing check turns an `Ok` stage into `Violated`.
    pub fn check(&mut self, pass: bool, message: impl FnOnce() -> String) {
        if !pass {
            self.violations.push(message());
            if self.status == StageStatus::Ok {
                self.status = StageStatus::Violated;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub stages: Vec<StageRecord>,
    /// Headline numbers (`r0`, `ell0`, `certificate_margin`, `decay_slope`)
    /// copied from the stage that produced them.
    pub scalars: BTreeMap<String, f64>,
    pub files: Vec<FileEntry>,
}

const HEADLINE: [(&str, &str, &str); 4] = [
    ("r0", "radial", "r0"),
    ("ell0", "landscape", "ell"),
    ("certificate_margin", "spectrum", "min_abs_mu"),
    ("decay_slope", "verify", "decay_slope"),
];

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Builds the manifest, hashing every file the stages reported.
pub fn build_manifest(command: &str, config: &RunConfig, stages: &[StageRecord], out: &Path) -> std::io::Result<Manifest> {
    let mut scalars = BTreeMap::new();
    for (key, stage, field) in HEADLINE {
        if let Some(v) = stages.iter().find(|s| s.name == stage).and_then(|s| s.scalars.get(field)) {
            scalars.insert(key.to_string(), *v);
        }
    }
    let mut files = Vec::new();
    for path in stages.iter().flat_map(|s| &s.files) {
        let bytes = std::fs::read(out.join(path))?;
        files.push(FileEntry {
            path: path.clone(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
    }
    files.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(Manifest {
        schema: SCHEMA_VERSION.into(),
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        config: config.clone(),
        stages: stages.to_vec(),
        scalars,
        files,
    })
}

/// Writes `manifest.json` into `out` and returns the manifest.
pub fn emit_manifest(command: &str, config: &RunConfig, stages: &[StageRecord], out: &Path) -> std::io::Result<Manifest> {
    let manifest = build_manifest(command, config, stages, out)?;
    std::fs::create_dir_all(out)?;
    let mut text = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(out.join(MANIFEST_FILE), text)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_results_give_a_valid_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let m = emit_manifest("all", &RunConfig::default(), &[], dir.path()).unwrap();
        assert!(m.stages.is_empty() && m.files.is_empty());
        let text = std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        let back: Manifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back.schema, "1");
        assert_eq!(back, m);
    }

    #[test]
    fn hashes_are_stable_and_content_sensitive() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.csv"), "x\n1\n").unwrap();
        let mut st = StageRecord::new("radial");
        st.files.push("a.csv".into());
        st.scalar("r0", 1.5);
        let m1 = build_manifest("radial", &RunConfig::default(), std::slice::from_ref(&st), dir.path()).unwrap();
        let m2 = build_manifest("radial", &RunConfig::default(), std::slice::from_ref(&st), dir.path()).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(m1.scalars["r0"], 1.5);
        std::fs::write(dir.path().join("a.csv"), "x\n2\n").unwrap();
        let m3 = build_manifest("radial", &RunConfig::default(), &[st], dir.path()).unwrap();
        assert_ne!(m1.files[0].sha256, m3.files[0].sha256);
    }

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn failing_check_marks_the_stage() {
        let mut st = StageRecord::new("verify");
        st.check(true, || unreachable!());
        assert_eq!(st.status, StageStatus::Ok);
        st.check(false, || "slope too shallow".into());
        assert_eq!(st.status, StageStatus::Violated);
        assert_eq!(st.violations.len(), 1);
    }
}
