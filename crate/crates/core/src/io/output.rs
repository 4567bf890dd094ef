//! Output directories with a SHA-256 manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::config::ConfigDocument;
use super::tables::{write_aggregates_csv, write_metrics_csv, write_tally_csv, write_weights_csv};
use super::{read_text, write_text};
use crate::error::{Error, Result};
use crate::mapping::{AreaCovariates, WeightMatrix};
use crate::simulation::study::StudyResult;

pub const MANIFEST: &str = "manifest.json";

pub fn weights_file(m: &WeightMatrix) -> String {
    format!("weights_{}.csv", m.scheme)
}

/// Files to write, keyed by name so the manifest order is fixed.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct OutputSet {
    files: BTreeMap<String, String>,
}

impl OutputSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a file; names are plain file names without directories.
    pub fn add(&mut self, name: impl Into<String>, contents: String) -> Result<()> {
        let name = name.into();
        if name.is_empty()
            || name == MANIFEST
            || name.contains(['/', '\\'])
            || name.starts_with('.')
        {
            return Err(Error::Config(format!("invalid output file name `{name}`")));
        }
        if self.files.insert(name.clone(), contents).is_some() {
            return Err(Error::Config(format!("output file `{name}` added twice")));
        }
        Ok(())
    }

    pub fn add_config(&mut self, doc: &ConfigDocument) -> Result<()> {
        self.add("config.json", doc.to_json())
    }

    pub fn add_weights(&mut self, m: &WeightMatrix) -> Result<()> {
        self.add(weights_file(m), write_weights_csv(m))
    }

    pub fn add_aggregates(&mut self, label: &str, a: &AreaCovariates) -> Result<()> {
        self.add(format!("aggregates_{label}.csv"), write_aggregates_csv(a))
    }

    pub fn add_study(&mut self, study: &StudyResult) -> Result<()> {
        self.add("metrics_rounds.csv", write_metrics_csv(&study.records))?;
        self.add("tally.csv", write_tally_csv(&study.tally))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.get(name).map(String::as_str)
    }

    /// `{"files": {name: sha256}}` with names sorted.
    pub fn manifest(&self) -> String {
        let files: BTreeMap<&str, String> = self
            .files
            .iter()
            .map(|(n, c)| (n.as_str(), sha256_hex(c.as_bytes())))
            .collect();
        let mut text = serde_json::to_string_pretty(&serde_json::json!({ "files": files }))
            .expect("manifest serialises");
        text.push('\n');
        text
    }

    /// Writes every file and the manifest into `dir`, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::with_capacity(self.files.len() + 1);
        for (name, contents) in &self.files {
            let path = dir.join(name);
            write_text(&path, contents)?;
            written.push(path);
        }
        let path = dir.join(MANIFEST);
        write_text(&path, &self.manifest())?;
        written.push(path);
        Ok(written)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Checks every file listed in `dir/manifest.json` against its hash and
/// returns the names that differ or are missing.
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>> {
    let path = dir.join(MANIFEST);
    let doc: serde_json::Value =
        serde_json::from_str(&read_text(&path)?).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })?;
    let files = doc
        .get("files")
        .and_then(|f| f.as_object())
        .ok_or_else(|| Error::Schema("manifest lacks a `files` object".into()))?;
    let mut bad = Vec::new();
    for (name, hash) in files {
        let ok = std::fs::read(dir.join(name))
            .ok()
            .is_some_and(|b| Some(sha256_hex(&b).as_str()) == hash.as_str());
        if !ok {
            bad.push(name.clone());
        }
    }
    Ok(bad)
}
