use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapping::{IdwParams, NaiveProfile};
use crate::propagation::DEFAULT_DEAD_THRESHOLD_DBM;
use crate::simulation::config::SimConfig;

/// Parameters shared by the propagation-based schemes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeParams {
    pub idw: IdwParams,
    /// Links weaker than this (dBm) are dead.
    pub dead_threshold_dbm: f64,
}

impl Default for SchemeParams {
    fn default() -> Self {
        SchemeParams {
            idw: IdwParams::default(),
            dead_threshold_dbm: DEFAULT_DEAD_THRESHOLD_DBM,
        }
    }
}

/// Input files of the real-data workflow. Relative paths resolve against
/// the working directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    pub bts: Option<PathBuf>,
    pub areas: Option<PathBuf>,
    pub raster: Option<PathBuf>,
    pub aux: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
}

/// The complete run configuration. Every key has a default; unknown keys
/// are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigDocument {
    pub seed: u64,
    pub rounds: usize,
    pub simulation: SimConfig,
    pub schemes: SchemeParams,
    pub naive: NaiveProfile,
    pub inputs: InputPaths,
}

impl Default for ConfigDocument {
    fn default() -> Self {
        ConfigDocument {
            seed: 0,
            rounds: 1,
            simulation: SimConfig::default(),
            schemes: SchemeParams::default(),
            naive: NaiveProfile::default(),
            inputs: InputPaths::default(),
        }
    }
}

impl ConfigDocument {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        if !self.schemes.dead_threshold_dbm.is_finite() {
            return Err(Error::Config("dead_threshold_dbm must be finite".into()));
        }
        self.schemes.idw.validate()?;
        let n = &self.naive;
        if ![n.height_m, n.power_dbm, n.urban_freq_mhz, n.other_freq_mhz]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::Config("naive profile values must be finite".into()));
        }
        self.simulation.validate()
    }

    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ConfigDocument = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })?;
        doc.validate()?;
        Ok(doc)
    }

    /// Canonical pretty JSON with every default materialised and a trailing
    /// newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serialises");
        s.push('\n');
        s
    }
}

pub fn load_config(path: &Path) -> Result<ConfigDocument> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ConfigDocument::from_json(&text)
}

pub fn save_config(doc: &ConfigDocument, path: &Path) -> Result<()> {
    std::fs::write(path, doc.to_json()).map_err(|e| Error::io(path, e))
}
